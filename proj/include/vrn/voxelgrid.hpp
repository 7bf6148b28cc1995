#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vrn/checkpoint.hpp"
#include "vrn/common.hpp"

namespace vrn {

// World -> grid map: g = scale * p + offset (uniform scale).  Voxel (x,y,z)
// covers [x,x+1)x[y,y+1)x[z,z+1) in grid coordinates, center at +0.5.
struct GridTransform {
  double scale = 1.0;
  std::array<double, 3> offset = {0.0, 0.0, 0.0};

  std::array<double, 3> to_grid(const std::array<double, 3>& p) const {
    return {scale * p[0] + offset[0], scale * p[1] + offset[1],
            scale * p[2] + offset[2]};
  }
  std::array<double, 3> to_world(const std::array<double, 3>& g) const {
    return {(g[0] - offset[0]) / scale, (g[1] - offset[1]) / scale,
            (g[2] - offset[2]) / scale};
  }
};

// Dense W x H x D grid of occupancies (binary) or probabilities in [0,1].
// Layout matches the network's volume tensors: value(x,y,z) at (z*H + y)*W + x.
struct VoxelGrid {
  int w = 0, h = 0, d = 0;
  bool binary = true;
  std::vector<float> values;
  GridTransform transform;

  VoxelGrid() = default;
  VoxelGrid(int w_, int h_, int d_, bool binary_ = true)
      : w(w_), h(h_), d(d_), binary(binary_) {
    if (w <= 0 || h <= 0 || d <= 0)
      throw UsageError(strfmt("voxel grid dims must be positive, got %dx%dx%d", w, h, d));
    values.assign(static_cast<size_t>(w) * h * d, 0.0f);
  }

  size_t index(int x, int y, int z) const {
    return (static_cast<size_t>(z) * h + y) * w + x;
  }
  float at(int x, int y, int z) const { return values[index(x, y, z)]; }
  float& at(int x, int y, int z) { return values[index(x, y, z)]; }
  long long numel() const { return static_cast<long long>(w) * h * d; }
};

inline void validate_grid(const VoxelGrid& g) {
  if (g.values.size() != static_cast<size_t>(g.numel()))
    throw UsageError(strfmt("grid %dx%dx%d holds %zu values", g.w, g.h, g.d,
                            g.values.size()));
  for (float v : g.values) {
    if (!(v >= 0.0f && v <= 1.0f))
      throw UsageError(strfmt("grid value %g outside [0,1]", v));
    if (g.binary && v != 0.0f && v != 1.0f)
      throw UsageError(strfmt("binary grid holds non-binary value %g", v));
  }
}

// Intersection over union of thresholded grids; two empty grids agree
// vacuously (1.0).
inline double iou(const VoxelGrid& a, const VoxelGrid& b, double threshold = 0.5) {
  if (a.w != b.w || a.h != b.h || a.d != b.d)
    throw UsageError(strfmt("iou: dim mismatch %dx%dx%d vs %dx%dx%d", a.w, a.h,
                            a.d, b.w, b.h, b.d));
  long long inter = 0, uni = 0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    const bool sa = a.values[i] >= threshold;
    const bool sb = b.values[i] >= threshold;
    inter += sa && sb;
    uni += sa || sb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// VOXL volume file: magic "VOXL", version u32, dims W,H,D u32, flag byte
// (0 = binary bit-packed LSB-first, 1 = raw little-endian f32).
inline constexpr uint32_t kVoxlVersion = 1;

inline void save_grid(const VoxelGrid& g, const std::string& path) {
  validate_grid(g);
  std::string out;
  out += "VOXL";
  detail::put_u32(out, kVoxlVersion);
  detail::put_u32(out, static_cast<uint32_t>(g.w));
  detail::put_u32(out, static_cast<uint32_t>(g.h));
  detail::put_u32(out, static_cast<uint32_t>(g.d));
  out.push_back(g.binary ? '\0' : '\1');
  if (g.binary) {
    const size_t n = g.values.size();
    for (size_t base = 0; base < n; base += 8) {
      unsigned byte = 0;
      for (size_t bit = 0; bit < 8 && base + bit < n; ++bit)
        if (g.values[base + bit] != 0.0f) byte |= 1u << bit;
      out.push_back(static_cast<char>(byte));
    }
  } else {
    for (float v : g.values) detail::put_f32(out, v);
  }
  detail::write_file(path, out);
}

inline VoxelGrid load_grid(const std::string& path) {
  std::string data = detail::read_file(path);
  detail::ByteReader r(reinterpret_cast<const unsigned char*>(data.data()),
                       data.size(), path);
  if (r.bytes(4) != "VOXL") throw ParseError(path + ": bad magic, want VOXL");
  uint32_t version = r.u32();
  if (version != kVoxlVersion)
    throw ParseError(strfmt("%s: unsupported version %u", path.c_str(), version));
  const int w = static_cast<int>(r.u32());
  const int h = static_cast<int>(r.u32());
  const int d = static_cast<int>(r.u32());
  const std::string flag = r.bytes(1);
  if (flag[0] != 0 && flag[0] != 1)
    throw ParseError(strfmt("%s: bad flag byte %d", path.c_str(), flag[0]));
  if (w <= 0 || h <= 0 || d <= 0)
    throw ParseError(strfmt("%s: bad dims %dx%dx%d", path.c_str(), w, h, d));
  VoxelGrid g(w, h, d, flag[0] == 0);
  const size_t n = g.values.size();
  if (g.binary) {
    const std::string packed = r.bytes((n + 7) / 8);
    for (size_t i = 0; i < n; ++i)
      g.values[i] = (packed[i / 8] >> (i % 8)) & 1 ? 1.0f : 0.0f;
  } else {
    for (size_t i = 0; i < n; ++i) g.values[i] = r.f32();
  }
  if (!r.done()) throw ParseError(path + ": trailing bytes");
  return g;
}

}  // namespace vrn
