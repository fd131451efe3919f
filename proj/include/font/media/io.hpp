#pragma once

#include <string>
#include <vector>

#include "font/media/types.hpp"

namespace font::media {

// Binary PPM (P6, maxval 255). Pixels convert between [0,1] doubles and u8.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// 16 kHz mono PCM16 WAV. The reader rejects any other sample rate, channel
// count, or encoding — no silent resampling. Samples map to [-1,1].
void write_wav(const std::string& path, const std::vector<double>& samples);
std::vector<double> read_wav(const std::string& path);

// Uncompressed 24-bit RGB AVI (DIB frames). This is the container the rest of
// the pipeline reads and writes; compressed streams are rejected.
void write_avi(const std::string& path, const FrameSequence& seq);
FrameSequence read_avi(const std::string& path);

}  // namespace font::media
