#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vrn/checkpoint.hpp"
#include "vrn/common.hpp"
#include "vrn/config.hpp"
#include "vrn/network.hpp"
#include "vrn/rng.hpp"
#include "vrn/tensor.hpp"
#include "vrn/voxelgrid.hpp"

namespace vrn {

constexpr int kNumLandmarks = 16;

// Fixed channel order; left/right pairs are adjacent so a horizontal flip
// relabels by swapping neighbours.
inline const std::array<const char*, kNumLandmarks>& landmark_names() {
  static const std::array<const char*, kNumLandmarks> names = {
      "head",    "neck",    "thorax",  "pelvis",  "l_shoulder", "r_shoulder",
      "l_elbow", "r_elbow", "l_wrist", "r_wrist", "l_hip",      "r_hip",
      "l_knee",  "r_knee",  "l_ankle", "r_ankle"};
  return names;
}

// Channel that takes this joint's place after a horizontal flip.
inline int flipped_landmark(int i) {
  if (i < 0 || i >= kNumLandmarks) throw UsageError("landmark index out of range");
  return i < 4 ? i : (i % 2 ? i - 1 : i + 1);
}

struct Landmark {
  double x = 0.0, y = 0.0;
  bool visible = false;
};

using LandmarkSet = std::array<Landmark, kNumLandmarks>;

// Channel-planar float image, values in [0,1], laid out (c, y, x).
struct Image {
  int w = 0, h = 0, c = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w_, int h_, int c_) : w(w_), h(h_), c(c_) {
    if (w <= 0 || h <= 0 || c <= 0)
      throw UsageError(strfmt("image dims %dx%dx%d must be positive", w, h, c));
    data.assign(static_cast<size_t>(w) * h * c, 0.0f);
  }
  float& at(int ch, int y, int x) {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  float at(int ch, int y, int x) const {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
};

// Binary raster, laid out (y, x).
struct Mask {
  int w = 0, h = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int w_, int h_) : w(w_), h(h_) {
    if (w <= 0 || h <= 0)
      throw UsageError(strfmt("mask dims %dx%d must be positive", w, h));
    data.assign(static_cast<size_t>(w) * h, 0);
  }
  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

// One spatially aligned training record; image, mask, and the target's X/Y
// extents all share the same pixel lattice.
struct Sample {
  Image image;
  LandmarkSet landmarks{};
  Mask mask;
  VoxelGrid target;
};

inline void validate_sample(const Sample& s) {
  if (s.image.c != 3)
    throw UsageError(strfmt("sample image has %d channels, want 3", s.image.c));
  if (s.mask.w != s.image.w || s.mask.h != s.image.h)
    throw UsageError(strfmt("sample mask %dx%d does not match image %dx%d",
                            s.mask.w, s.mask.h, s.image.w, s.image.h));
  if (s.target.w != s.image.w || s.target.h != s.image.h)
    throw UsageError(strfmt("sample volume %dx%dx%d does not match image %dx%d",
                            s.target.w, s.target.h, s.target.d, s.image.w,
                            s.image.h));
  for (float v : s.image.data)
    if (!(v >= 0.0f && v <= 1.0f))
      throw UsageError(strfmt("image value %g outside [0,1]", v));
  for (uint8_t v : s.mask.data)
    if (v > 1) throw UsageError("mask values must be 0 or 1");
  validate_grid(s.target);
}

// "Diameter of approximately 6 pixels" read as full width at half maximum:
// exp(-3^2 / (2 sigma^2)) = 1/2 at radius 3.
inline double heatmap_sigma() {
  return 6.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

// One channel per joint: an amplitude-1 Gaussian centred on the landmark's
// nearest pixel (subpixel positions round so every visible channel peaks at
// exactly 1), all zeros for invisible joints.
template <class T>
Tensor<T> render_landmark_heatmaps(const LandmarkSet& lm, int h, int w) {
  if (h <= 0 || w <= 0)
    throw UsageError(strfmt("heatmap dims %dx%d must be positive", h, w));
  Tensor<T> out = Tensor<T>::zeros({kNumLandmarks, h, w});
  const double denom = 2.0 * heatmap_sigma() * heatmap_sigma();
  T* p = out.data();
  for (int j = 0; j < kNumLandmarks; ++j) {
    if (!lm[j].visible) continue;
    const double cx = std::round(lm[j].x), cy = std::round(lm[j].y);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        p[(static_cast<size_t>(j) * h + y) * w + x] =
            static_cast<T>(std::exp(-r2 / denom));
      }
  }
  return out;
}

// Network input for one sample: RGB plus heatmaps for the guided variants,
// the single respective cue for the ablations.
template <class T>
Tensor<T> assemble_input(Variant v, const Sample& s) {
  validate_sample(s);
  const int h = s.image.h, w = s.image.w;
  const int c = variant_input_channels(v);
  Tensor<T> x = Tensor<T>::zeros({c, h, w});
  T* p = x.data();
  const size_t plane = static_cast<size_t>(h) * w;
  const auto put_image = [&](int dst) {
    for (size_t i = 0; i < 3 * plane; ++i)
      p[dst * plane + i] = static_cast<T>(s.image.data[i]);
  };
  const auto put_heatmaps = [&](int dst) {
    Tensor<T> hm = render_landmark_heatmaps<T>(s.landmarks, h, w);
    const T* q = hm.data();
    for (size_t i = 0; i < kNumLandmarks * plane; ++i) p[dst * plane + i] = q[i];
  };
  switch (v) {
    case Variant::kImageOnly:
      put_image(0);
      break;
    case Variant::kLandmarksOnly:
      put_heatmaps(0);
      break;
    case Variant::kMaskOnly:
      for (size_t i = 0; i < plane; ++i) p[i] = static_cast<T>(s.mask.data[i]);
      break;
    default:
      put_image(0);
      put_heatmaps(3);
      break;
  }
  return x;
}

// Orthographic silhouette: pixel (x,y) is set when any voxel in its depth
// column is occupied.
inline Mask project_silhouette(const VoxelGrid& g) {
  Mask m(g.w, g.h);
  for (int z = 0; z < g.d; ++z)
    for (int y = 0; y < g.h; ++y)
      for (int x = 0; x < g.w; ++x)
        if (g.at(x, y, z) >= 0.5f) m.at(y, x) = 1;
  return m;
}

inline double mask_iou(const Mask& a, const Mask& b) {
  if (a.w != b.w || a.h != b.h)
    throw UsageError(strfmt("mask iou dims %dx%d vs %dx%d", a.w, a.h, b.w, b.h));
  long long inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] && b.data[i];
    uni += a.data[i] || b.data[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// --- Augmentation --------------------------------------------------------

// Per-channel colour scale, clamped back to [0,1].
inline void scale_colors(Image& img, const std::array<double, 3>& s) {
  if (img.c != 3) throw UsageError("colour scaling expects a 3-channel image");
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        const double v = img.at(ch, y, x) * s[static_cast<size_t>(ch)];
        img.at(ch, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
}

// Integer pixel shift applied identically to image, mask, landmarks, and the
// target's X/Y slices (zero fill).  Landmarks pushed out of frame go
// invisible rather than being clamped.
inline Sample translate_sample(const Sample& s, int tx, int ty) {
  validate_sample(s);
  Sample out = s;
  const int w = s.image.w, h = s.image.h;
  const auto src = [&](int y, int x) {
    return std::pair<int, int>{y - ty, x - tx};
  };
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto [sy, sx] = src(y, x);
        out.image.at(ch, y, x) = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                     ? s.image.at(ch, sy, sx)
                                     : 0.0f;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto [sy, sx] = src(y, x);
      out.mask.at(y, x) = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                              ? s.mask.at(sy, sx)
                              : uint8_t{0};
    }
  for (int z = 0; z < s.target.d; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto [sy, sx] = src(y, x);
        out.target.at(x, y, z) = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                     ? s.target.at(sx, sy, z)
                                     : 0.0f;
      }
  for (int j = 0; j < kNumLandmarks; ++j) {
    Landmark& l = out.landmarks[static_cast<size_t>(j)];
    l.x += tx;
    l.y += ty;
    if (l.x < 0.0 || l.x > w - 1.0 || l.y < 0.0 || l.y > h - 1.0)
      l.visible = false;
  }
  return out;
}

// Horizontal flip: image/mask columns and the volume's X axis reverse, and
// each landmark takes its left/right partner's mirrored position.
inline Sample flip_sample(const Sample& s) {
  validate_sample(s);
  Sample out = s;
  const int w = s.image.w, h = s.image.h;
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.image.at(ch, y, x) = s.image.at(ch, y, w - 1 - x);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.mask.at(y, x) = s.mask.at(y, w - 1 - x);
  for (int z = 0; z < s.target.d; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.target.at(x, y, z) = s.target.at(w - 1 - x, y, z);
  for (int j = 0; j < kNumLandmarks; ++j) {
    const Landmark& from = s.landmarks[static_cast<size_t>(flipped_landmark(j))];
    out.landmarks[static_cast<size_t>(j)] = {w - 1.0 - from.x, from.y,
                                             from.visible};
  }
  return out;
}

// On-the-fly training augmentation.  Draws, in order: three colour scales
// ~ U[0.7,1.3], a translation ~ U{-8..8}^2, and a flip ~ Bernoulli(1/2).
inline Sample augment_sample(const Sample& s, Rng& rng) {
  std::array<double, 3> cs;
  for (double& v : cs) v = rng.uniform(0.7, 1.3);
  const int tx = static_cast<int>(rng.uniform_int(-8, 8));
  const int ty = static_cast<int>(rng.uniform_int(-8, 8));
  const bool flip = rng.bernoulli(0.5);
  Sample out = translate_sample(s, tx, ty);
  if (flip) out = flip_sample(out);
  scale_colors(out.image, cs);
  return out;
}

// --- File formats ---------------------------------------------------------

namespace detail {

inline int read_pnm_int(const std::string& buf, size_t& pos, const std::string& what) {
  while (pos < buf.size()) {
    if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  size_t end = pos;
  while (end < buf.size() && std::isdigit(static_cast<unsigned char>(buf[end])))
    ++end;
  if (end == pos) throw ParseError(what + ": expected integer in header");
  int v = std::atoi(buf.substr(pos, end - pos).c_str());
  pos = end;
  return v;
}

// Shared by the P5/P6 readers: header, then a single whitespace byte, then
// exactly w*h*channels raw bytes.
inline std::vector<uint8_t> read_pnm(const std::string& path, const char* magic,
                                     int channels, int& w, int& h) {
  const std::string buf = read_file(path);
  if (buf.size() < 2 || buf[0] != magic[0] || buf[1] != magic[1])
    throw ParseError(path + ": not a " + magic + " file");
  size_t pos = 2;
  w = read_pnm_int(buf, pos, path);
  h = read_pnm_int(buf, pos, path);
  const int maxval = read_pnm_int(buf, pos, path);
  if (w <= 0 || h <= 0)
    throw ParseError(strfmt("%s: bad raster dims %dx%d", path.c_str(), w, h));
  if (maxval != 255)
    throw ParseError(strfmt("%s: maxval %d unsupported, want 255", path.c_str(), maxval));
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    throw ParseError(path + ": missing whitespace after header");
  ++pos;
  const size_t need = static_cast<size_t>(w) * h * channels;
  if (buf.size() - pos != need)
    throw ParseError(strfmt("%s: raster holds %zu bytes, want %zu", path.c_str(),
                            buf.size() - pos, need));
  return std::vector<uint8_t>(buf.begin() + static_cast<long>(pos), buf.end());
}

}  // namespace detail

// 24-bit binary PPM.  Float channels quantize to bytes on save; a load/save
// round trip is byte-identical.
inline void save_ppm(const Image& img, const std::string& path) {
  if (img.c != 3) throw UsageError("ppm wants a 3-channel image");
  std::string out = strfmt("P6\n%d %d\n255\n", img.w, img.h);
  out.reserve(out.size() + static_cast<size_t>(img.w) * img.h * 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const float v = std::clamp(img.at(ch, y, x), 0.0f, 1.0f);
        out.push_back(static_cast<char>(std::lround(v * 255.0f)));
      }
  detail::write_file(path, out);
}

inline Image load_ppm(const std::string& path) {
  int w = 0, h = 0;
  const std::vector<uint8_t> raw = detail::read_pnm(path, "P6", 3, w, h);
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.at(ch, y, x) =
            raw[(static_cast<size_t>(y) * w + x) * 3 + ch] / 255.0f;
  return img;
}

// 8-bit binary PGM holding a binary mask as {0, 255}.
inline void save_pgm(const Mask& m, const std::string& path) {
  std::string out = strfmt("P5\n%d %d\n255\n", m.w, m.h);
  out.reserve(out.size() + m.data.size());
  for (uint8_t v : m.data) out.push_back(static_cast<char>(v ? 255 : 0));
  detail::write_file(path, out);
}

inline Mask load_pgm(const std::string& path) {
  int w = 0, h = 0;
  const std::vector<uint8_t> raw = detail::read_pnm(path, "P5", 1, w, h);
  Mask m(w, h);
  for (size_t i = 0; i < raw.size(); ++i) m.data[i] = raw[i] >= 128 ? 1 : 0;
  return m;
}

// Text landmark file: 16 lines of "name x y visible" in canonical order.
inline void save_landmarks(const LandmarkSet& lm, const std::string& path) {
  std::string out;
  for (int j = 0; j < kNumLandmarks; ++j) {
    const Landmark& l = lm[static_cast<size_t>(j)];
    out += strfmt("%s %.17g %.17g %d\n", landmark_names()[static_cast<size_t>(j)],
                  l.x, l.y, l.visible ? 1 : 0);
  }
  detail::write_file(path, out);
}

inline LandmarkSet load_landmarks(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  LandmarkSet lm{};
  std::string line;
  int lineno = 0, j = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (j >= kNumLandmarks)
      throw ParseError(strfmt("%s:%d: more than %d landmarks", path.c_str(),
                              lineno, kNumLandmarks));
    std::istringstream ls(line);
    std::string name;
    double x = 0.0, y = 0.0;
    int vis = 0;
    if (!(ls >> name >> x >> y >> vis) || (vis != 0 && vis != 1))
      throw ParseError(strfmt("%s:%d: expected \"name x y visible\"",
                              path.c_str(), lineno));
    if (name != landmark_names()[static_cast<size_t>(j)])
      throw ParseError(strfmt("%s:%d: joint \"%s\", want \"%s\"", path.c_str(),
                              lineno, name.c_str(),
                              landmark_names()[static_cast<size_t>(j)]));
    lm[static_cast<size_t>(j)] = {x, y, vis == 1};
    ++j;
  }
  if (j != kNumLandmarks)
    throw ParseError(strfmt("%s: %d landmarks, want %d", path.c_str(), j,
                            kNumLandmarks));
  return lm;
}

}  // namespace vrn
