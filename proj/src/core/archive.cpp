#include "font/core/archive.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "font/core/errors.hpp"
#include "font/core/hash.hpp"

namespace font::core {

namespace {

constexpr char kMagic[8] = {'F', 'O', 'N', 'T', 'A', 'R', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::F64: return 8;
    case Dtype::F32: return 4;
    case Dtype::U8: return 1;
  }
  throw IntegrityError("unknown dtype tag");
}

// Little-endian primitive writers into a growing byte buffer.
void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

// Bounds-checked reader over a byte buffer. Any overrun means the file was
// truncated or mangled, which the hash check normally catches first; the
// cursor guards are the backstop.
struct Cursor {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t off = 0;

  void need(std::size_t k) const {
    if (off + k > n) throw IntegrityError("archive truncated");
  }
  std::uint8_t u8() {
    need(1);
    return p[off++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
    off += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(p + off), len);
    off += len;
    return s;
  }
  std::vector<std::uint8_t> blob(std::size_t k) {
    need(k);
    std::vector<std::uint8_t> v(p + off, p + off + k);
    off += k;
    return v;
  }
};

}  // namespace

ArchiveEntry ArchiveEntry::from_tensor(const Tensor& t) {
  ArchiveEntry e;
  e.dtype = Dtype::F64;
  e.shape = t.shape();
  e.bytes.resize(t.numel() * 8);
  std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  return e;
}

ArchiveEntry ArchiveEntry::from_f32(Shape shape, const std::vector<float>& v) {
  if (shape_numel(shape) != v.size())
    throw ShapeError("f32 entry: " + shape_str(shape) + " vs " + std::to_string(v.size()) +
                     " values");
  ArchiveEntry e;
  e.dtype = Dtype::F32;
  e.shape = std::move(shape);
  e.bytes.resize(v.size() * 4);
  std::memcpy(e.bytes.data(), v.data(), e.bytes.size());
  return e;
}

ArchiveEntry ArchiveEntry::from_u8(Shape shape, const std::vector<std::uint8_t>& v) {
  if (shape_numel(shape) != v.size())
    throw ShapeError("u8 entry: " + shape_str(shape) + " vs " + std::to_string(v.size()) +
                     " values");
  ArchiveEntry e;
  e.dtype = Dtype::U8;
  e.shape = std::move(shape);
  e.bytes = v;
  return e;
}

std::size_t ArchiveEntry::numel() const { return bytes.size() / dtype_size(dtype); }

Tensor ArchiveEntry::to_tensor() const {
  const std::size_t n = numel();
  std::vector<double> data(n);
  switch (dtype) {
    case Dtype::F64:
      std::memcpy(data.data(), bytes.data(), n * 8);
      break;
    case Dtype::F32: {
      std::vector<float> f(n);
      std::memcpy(f.data(), bytes.data(), n * 4);
      for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>(f[i]);
      break;
    }
    case Dtype::U8:
      for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>(bytes[i]);
      break;
  }
  return Tensor::from_data(shape, std::move(data));
}

std::vector<float> ArchiveEntry::to_f32() const {
  if (dtype != Dtype::F32) throw IntegrityError("entry is not f32");
  std::vector<float> f(numel());
  std::memcpy(f.data(), bytes.data(), bytes.size());
  return f;
}

std::vector<std::uint8_t> ArchiveEntry::to_u8() const {
  if (dtype != Dtype::U8) throw IntegrityError("entry is not u8");
  return bytes;
}

void Archive::put(const std::string& name, const Tensor& t) {
  entries[name] = ArchiveEntry::from_tensor(t);
}

void Archive::put(const std::string& name, ArchiveEntry e) { entries[name] = std::move(e); }

bool Archive::has(const std::string& name) const { return entries.count(name) != 0; }

const ArchiveEntry& Archive::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw IntegrityError("archive has no entry named '" + name + "'");
  return it->second;
}

Tensor Archive::tensor(const std::string& name) const { return at(name).to_tensor(); }

std::vector<std::uint8_t> Archive::serialize() const {
  std::vector<std::uint8_t> out;
  put_bytes(out, kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_str(out, stage);
  put_str(out, config_json);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, e] : entries) {
    put_str(out, name);
    put_u8(out, static_cast<std::uint8_t>(e.dtype));
    put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) put_u64(out, static_cast<std::uint64_t>(d));
    put_u64(out, static_cast<std::uint64_t>(e.bytes.size()));
    put_bytes(out, e.bytes.data(), e.bytes.size());
  }
  const std::uint64_t h = fnv64(out.data(), out.size());
  put_u64(out, h);
  return out;
}

std::uint64_t Archive::content_hash() const {
  std::vector<std::uint8_t> buf = serialize();
  // Body hash excludes the trailing 8-byte hash field itself.
  return fnv64(buf.data(), buf.size() - 8);
}

Archive Archive::deserialize(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < sizeof(kMagic) + 12) throw IntegrityError("archive truncated");
  const std::uint64_t want = fnv64(buf.data(), buf.size() - 8);
  Cursor tail{buf.data() + buf.size() - 8, 8};
  if (tail.u64() != want) throw IntegrityError("archive hash mismatch");

  Cursor c{buf.data(), buf.size() - 8};
  char magic[8];
  c.need(8);
  std::memcpy(magic, c.p, 8);
  c.off = 8;
  if (std::memcmp(magic, kMagic, 8) != 0) throw IntegrityError("bad archive magic");
  if (c.u32() != kVersion) throw IntegrityError("unsupported archive version");

  Archive a;
  a.stage = c.str();
  a.config_json = c.str();
  const std::uint32_t count = c.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = c.str();
    ArchiveEntry e;
    const std::uint8_t tag = c.u8();
    if (tag > 2) throw IntegrityError("unknown dtype tag");
    e.dtype = static_cast<Dtype>(tag);
    const std::uint32_t ndim = c.u32();
    e.shape.resize(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) e.shape[d] = static_cast<int>(c.u64());
    const std::uint64_t nbytes = c.u64();
    if (nbytes != shape_numel(e.shape) * dtype_size(e.dtype))
      throw IntegrityError("entry '" + name + "' payload size disagrees with shape");
    e.bytes = c.blob(nbytes);
    a.entries.emplace(name, std::move(e));
  }
  if (c.off != c.n) throw IntegrityError("trailing bytes after last entry");
  return a;
}

void Archive::save(const std::string& path) const {
  const std::vector<std::uint8_t> buf = serialize();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IntegrityError("cannot open '" + tmp + "' for writing");
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    f.flush();
    if (!f) throw IntegrityError("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IntegrityError("cannot rename '" + tmp + "' to '" + path + "'");
}

Archive Archive::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IntegrityError("cannot open '" + path + "'");
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(buf.data()), size);
  if (!f) throw IntegrityError("short read from '" + path + "'");
  return deserialize(buf);
}

}  // namespace font::core
