#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "vrn/common.hpp"

namespace vrn {

// VXFM checkpoint archive: magic "VXFM", format version u32, then one record
// per tensor: name length u32, name bytes, rank u32, extents u32 each, and
// the values as raw little-endian 32-bit reals. Everything little-endian.
struct CheckpointRecord {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  out.push_back((char)(v & 0xff));
  out.push_back((char)((v >> 8) & 0xff));
  out.push_back((char)((v >> 16) & 0xff));
  out.push_back((char)((v >> 24) & 0xff));
}

inline void put_f32(std::string& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

class ByteReader {
 public:
  ByteReader(const unsigned char* p, size_t n, const std::string& what)
      : p_(p), n_(n), what_(what) {}

  uint32_t u32() {
    need(4);
    uint32_t v = (uint32_t)p_[off_] | ((uint32_t)p_[off_ + 1] << 8) |
                 ((uint32_t)p_[off_ + 2] << 16) | ((uint32_t)p_[off_ + 3] << 24);
    off_ += 4;
    return v;
  }

  float f32() {
    uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }

  std::string bytes(size_t n) {
    need(n);
    std::string s((const char*)p_ + off_, n);
    off_ += n;
    return s;
  }

  bool done() const { return off_ == n_; }

 private:
  void need(size_t n) {
    if (off_ + n > n_)
      throw ParseError(strfmt("%s: truncated at byte %zu", what_.c_str(), off_));
  }
  const unsigned char* p_;
  size_t n_, off_ = 0;
  std::string what_;
};

inline std::string read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  std::string data;
  char buf[65536];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) data.append(buf, n);
  bool bad = std::ferror(f);
  std::fclose(f);
  if (bad) throw IoError("read failed: " + path);
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open " + path + " for writing");
  size_t n = std::fwrite(data.data(), 1, data.size(), f);
  bool bad = std::fclose(f) != 0 || n != data.size();
  if (bad) throw IoError("write failed: " + path);
}

}  // namespace detail

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_vxfm(const std::string& path,
                      const std::vector<CheckpointRecord>& records) {
  std::string out;
  out += "VXFM";
  detail::put_u32(out, kCheckpointVersion);
  for (const CheckpointRecord& r : records) {
    long long n = 1;
    for (int e : r.shape) n *= e;
    if (n != (long long)r.values.size())
      throw UsageError(strfmt("checkpoint record %s: %zu values for shape of %lld",
                              r.name.c_str(), r.values.size(), n));
    detail::put_u32(out, (uint32_t)r.name.size());
    out += r.name;
    detail::put_u32(out, (uint32_t)r.shape.size());
    for (int e : r.shape) detail::put_u32(out, (uint32_t)e);
    for (float v : r.values) detail::put_f32(out, v);
  }
  detail::write_file(path, out);
}

inline std::vector<CheckpointRecord> load_vxfm(const std::string& path) {
  std::string data = detail::read_file(path);
  detail::ByteReader r((const unsigned char*)data.data(), data.size(), path);
  if (r.bytes(4) != "VXFM") throw ParseError(path + ": bad magic, want VXFM");
  uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError(strfmt("%s: unsupported version %u", path.c_str(), version));
  std::vector<CheckpointRecord> records;
  while (!r.done()) {
    CheckpointRecord rec;
    rec.name = r.bytes(r.u32());
    uint32_t rank = r.u32();
    long long n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      rec.shape.push_back((int)r.u32());
      n *= rec.shape.back();
    }
    rec.values.resize((size_t)n);
    for (long long i = 0; i < n; ++i) rec.values[(size_t)i] = r.f32();
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace vrn
