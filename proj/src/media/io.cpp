#include "font/media/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "font/core/errors.hpp"

namespace font::media {

namespace {

std::uint8_t to_u8(double v) {
  const double s = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(s);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DecodeError("cannot open '" + path + "'");
  const std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(n));
  f.read(reinterpret_cast<char*>(buf.data()), n);
  if (!f) throw DecodeError("short read from '" + path + "'");
  return buf;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& buf) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DecodeError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DecodeError("short write to '" + path + "'");
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

struct ByteReader {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t off = 0;

  void need(std::size_t k) const {
    if (off + k > n) throw DecodeError("file truncated");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[off] | (p[off + 1] << 8));
    off += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  std::string tag() {
    need(4);
    std::string s(reinterpret_cast<const char*>(p + off), 4);
    off += 4;
    return s;
  }
  void skip(std::size_t k) {
    need(k);
    off += k;
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// PPM

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(2) != 3) throw ShapeError("ppm image must be HxWx3");
  const int h = image.dim(0), w = image.dim(1);
  std::vector<std::uint8_t> out;
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.insert(out.end(), header.begin(), header.end());
  for (std::size_t i = 0; i < image.numel(); ++i) out.push_back(to_u8(image[i]));
  write_file(path, out);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DecodeError("cannot open '" + path + "'");
  std::string magic;
  f >> magic;
  if (magic != "P6") throw DecodeError("'" + path + "' is not a binary ppm");
  auto next_int = [&]() -> int {
    // Skip whitespace and '#' comment lines between header fields.
    while (f) {
      const int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
    int v = -1;
    f >> v;
    if (!f || v < 0) throw DecodeError("bad ppm header in '" + path + "'");
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255) throw DecodeError("ppm maxval must be 255");
  f.get();  // single whitespace byte after maxval
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * w * 3);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw DecodeError("ppm pixel data truncated in '" + path + "'");
  Tensor img({h, w, 3});
  for (std::size_t i = 0; i < raw.size(); ++i) img[i] = raw[i] / 255.0;
  return img;
}

// ---------------------------------------------------------------------------
// WAV

void write_wav(const std::string& path, const std::vector<double>& samples) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::vector<std::uint8_t> out;
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);       // PCM
  put_u16(out, 1);       // mono
  put_u32(out, 16000);   // sample rate
  put_u32(out, 32000);   // byte rate
  put_u16(out, 2);       // block align
  put_u16(out, 16);      // bits per sample
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  write_file(path, out);
}

std::vector<double> read_wav(const std::string& path) {
  const std::vector<std::uint8_t> buf = read_file(path);
  ByteReader r{buf.data(), buf.size()};
  if (r.tag() != "RIFF") throw DecodeError("'" + path + "' is not a RIFF file");
  r.u32();
  if (r.tag() != "WAVE") throw DecodeError("'" + path + "' is not a WAV file");

  bool have_fmt = false;
  std::vector<double> samples;
  while (r.off + 8 <= r.n) {
    const std::string id = r.tag();
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      if (size < 16) throw DecodeError("wav fmt chunk too small");
      const std::uint16_t format = r.u16();
      const std::uint16_t channels = r.u16();
      const std::uint32_t rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      const std::uint16_t bits = r.u16();
      r.skip(size - 16);
      if (format != 1 || bits != 16) throw DecodeError("wav must be 16-bit PCM");
      if (channels != 1) throw DecodeError("wav must be mono");
      if (rate != 16000)
        throw DecodeError("wav sample rate must be 16000 Hz, got " + std::to_string(rate) +
                          " (resample upstream; no silent conversion)");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DecodeError("wav data chunk before fmt chunk");
      const std::size_t count = size / 2;
      samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto v = static_cast<std::int16_t>(r.u16());
        // Same scale as the writer, so representable samples round-trip
        // exactly; -32768 clamps to -1.
        samples[i] = std::clamp(v / 32767.0, -1.0, 1.0);
      }
      if (size % 2) r.skip(1);
      return samples;
    } else {
      r.skip(size + (size % 2));
    }
  }
  throw DecodeError("wav file '" + path + "' has no data chunk");
}

// ---------------------------------------------------------------------------
// AVI (uncompressed RGB24 DIB frames)

void write_avi(const std::string& path, const FrameSequence& seq) {
  if (seq.frames.empty()) throw EmptyInputError("cannot write zero-frame avi");
  seq.validate();
  const int h = seq.height(), w = seq.width();
  const int n = seq.count();
  const std::uint32_t row_bytes = (static_cast<std::uint32_t>(w) * 3 + 3) & ~3u;
  const std::uint32_t frame_bytes = row_bytes * static_cast<std::uint32_t>(h);
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(seq.fps * 1000.0));

  std::vector<std::uint8_t> out;
  put_tag(out, "RIFF");
  const std::size_t riff_size_at = out.size();
  put_u32(out, 0);  // patched below
  put_tag(out, "AVI ");

  // hdrl list
  put_tag(out, "LIST");
  put_u32(out, 4 + 64 + 8 + 4 + 64 + 48);
  put_tag(out, "hdrl");
  put_tag(out, "avih");
  put_u32(out, 56);
  put_u32(out, static_cast<std::uint32_t>(std::lround(1e6 / seq.fps)));
  put_u32(out, frame_bytes * 25);
  put_u32(out, 0);
  put_u32(out, 0x10);  // has index
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, 0);
  put_u32(out, 1);  // one stream
  put_u32(out, frame_bytes);
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(h));
  for (int i = 0; i < 4; ++i) put_u32(out, 0);

  put_tag(out, "LIST");
  put_u32(out, 4 + 8 + 56 + 8 + 40);
  put_tag(out, "strl");
  put_tag(out, "strh");
  put_u32(out, 56);
  put_tag(out, "vids");
  put_tag(out, "DIB ");
  put_u32(out, 0);
  put_u32(out, 0);
  put_u32(out, 0);
  put_u32(out, 1000);  // scale
  put_u32(out, rate);  // rate; fps = rate/scale
  put_u32(out, 0);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, frame_bytes);
  put_u32(out, 0xFFFFFFFFu);  // quality
  put_u32(out, 0);
  put_u16(out, 0);
  put_u16(out, 0);
  put_u16(out, static_cast<std::uint16_t>(w));
  put_u16(out, static_cast<std::uint16_t>(h));

  put_tag(out, "strf");
  put_u32(out, 40);
  put_u32(out, 40);  // biSize
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u16(out, 1);
  put_u16(out, 24);
  put_u32(out, 0);  // BI_RGB
  put_u32(out, frame_bytes);
  put_u32(out, 0);
  put_u32(out, 0);
  put_u32(out, 0);
  put_u32(out, 0);

  // movi list
  put_tag(out, "LIST");
  put_u32(out, 4 + static_cast<std::uint32_t>(n) * (8 + frame_bytes));
  const std::size_t movi_at = out.size();
  put_tag(out, "movi");
  std::vector<std::uint32_t> offsets;
  for (const Tensor& f : seq.frames) {
    offsets.push_back(static_cast<std::uint32_t>(out.size() - movi_at));
    put_tag(out, "00db");
    put_u32(out, frame_bytes);
    // DIB rows run bottom-up in BGR order, each padded to 4 bytes.
    for (int y = h - 1; y >= 0; --y) {
      for (int x = 0; x < w; ++x) {
        out.push_back(to_u8(f.at(y, x, 2)));
        out.push_back(to_u8(f.at(y, x, 1)));
        out.push_back(to_u8(f.at(y, x, 0)));
      }
      for (std::uint32_t pml = static_cast<std::uint32_t>(w) * 3; pml < row_bytes; ++pml)
        out.push_back(0);
    }
  }

  put_tag(out, "idx1");
  put_u32(out, static_cast<std::uint32_t>(n) * 16);
  for (std::uint32_t off : offsets) {
    put_tag(out, "00db");
    put_u32(out, 0x10);  // keyframe
    put_u32(out, off);
    put_u32(out, frame_bytes);
  }

  const std::uint32_t riff_size = static_cast<std::uint32_t>(out.size() - riff_size_at - 4);
  std::memcpy(out.data() + riff_size_at, &riff_size, 4);
  write_file(path, out);
}

FrameSequence read_avi(const std::string& path) {
  const std::vector<std::uint8_t> buf = read_file(path);
  ByteReader r{buf.data(), buf.size()};
  if (r.tag() != "RIFF") throw DecodeError("'" + path + "' is not a RIFF file");
  r.u32();
  if (r.tag() != "AVI ") throw DecodeError("'" + path + "' is not an AVI file");

  int width = 0, height = 0;
  double fps = 25.0;
  std::uint32_t compression = 0;
  bool have_header = false;
  FrameSequence seq;

  // Walk chunks recursively; LIST chunks expose their children inline.
  std::vector<std::size_t> list_ends;
  while (r.off + 8 <= r.n) {
    while (!list_ends.empty() && r.off >= list_ends.back()) list_ends.pop_back();
    const std::string id = r.tag();
    const std::uint32_t size = r.u32();
    if (id == "LIST") {
      list_ends.push_back(r.off + size);
      r.tag();  // list type; children follow inline
      continue;
    }
    if (id == "avih") {
      if (size < 56) throw DecodeError("avi header chunk too small");
      const std::size_t base = r.off;
      ByteReader h{buf.data() + base, size};
      h.u32();  // microseconds per frame (rate/scale below is authoritative)
      h.skip(28);
      width = static_cast<int>(h.u32());
      height = static_cast<int>(h.u32());
      r.skip(size + (size % 2));
      have_header = true;
    } else if (id == "strh") {
      const std::size_t base = r.off;
      ByteReader h{buf.data() + base, size};
      if (h.tag() == "vids") {
        h.tag();
        h.skip(12);
        const std::uint32_t scale = h.u32();
        const std::uint32_t rate = h.u32();
        if (scale == 0 || rate == 0) throw DecodeError("avi stream header has zero rate");
        fps = static_cast<double>(rate) / scale;
      }
      r.skip(size + (size % 2));
    } else if (id == "strf") {
      const std::size_t base = r.off;
      ByteReader h{buf.data() + base, size};
      h.u32();
      h.u32();
      h.u32();
      h.u16();
      const std::uint16_t bits = h.u16();
      compression = h.u32();
      if (bits != 24) throw DecodeError("avi must carry 24-bit frames");
      r.skip(size + (size % 2));
    } else if (id == "00db" || id == "00dc") {
      if (!have_header) throw DecodeError("avi frame chunk before header");
      if (compression != 0) throw DecodeError("avi stream is compressed; only raw DIB supported");
      const std::uint32_t row_bytes = (static_cast<std::uint32_t>(width) * 3 + 3) & ~3u;
      if (size < row_bytes * static_cast<std::uint32_t>(height))
        throw DecodeError("avi frame chunk too small");
      r.need(size);
      Tensor f({height, width, 3});
      for (int y = 0; y < height; ++y) {
        const std::uint8_t* row = buf.data() + r.off + static_cast<std::size_t>(height - 1 - y) * row_bytes;
        for (int x = 0; x < width; ++x) {
          f.at(y, x, 0) = row[x * 3 + 2] / 255.0;
          f.at(y, x, 1) = row[x * 3 + 1] / 255.0;
          f.at(y, x, 2) = row[x * 3 + 0] / 255.0;
        }
      }
      seq.frames.push_back(std::move(f));
      r.skip(size + (size % 2));
    } else {
      r.skip(size + (size % 2));
    }
  }
  if (!have_header) throw DecodeError("'" + path + "' has no AVI header");
  if (seq.frames.empty()) throw EmptyInputError("avi '" + path + "' contains no frames");
  seq.fps = fps;
  return seq;
}

}  // namespace font::media
