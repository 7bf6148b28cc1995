#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vrn/blocks.hpp"
#include "vrn/config.hpp"
#include "vrn/flops.hpp"
#include "vrn/ops.hpp"
#include "vrn/rng.hpp"
#include "vrn/tensor.hpp"

namespace vrn {

enum class Variant {
  kVrnGuided,
  kMultistack,
  kOldResidual,
  kImageOnly,
  kLandmarksOnly,
  kMaskOnly,
  kConv3dFlat,
};

enum class BlockKind { kBottleneck, kMultiscale, kFlatVolumetric };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kVrnGuided: return "vrn-guided";
    case Variant::kMultistack: return "multistack";
    case Variant::kOldResidual: return "old-residual";
    case Variant::kImageOnly: return "image-only";
    case Variant::kLandmarksOnly: return "landmarks-only";
    case Variant::kMaskOnly: return "mask-only";
    case Variant::kConv3dFlat: return "conv3d-flat";
  }
  throw ConfigError("unknown variant enum");
}

inline Variant parse_variant(const std::string& s) {
  if (s == "vrn-guided") return Variant::kVrnGuided;
  if (s == "multistack") return Variant::kMultistack;
  if (s == "old-residual") return Variant::kOldResidual;
  if (s == "image-only") return Variant::kImageOnly;
  if (s == "landmarks-only") return Variant::kLandmarksOnly;
  if (s == "mask-only") return Variant::kMaskOnly;
  if (s == "conv3d-flat") return Variant::kConv3dFlat;
  throw ConfigError(strfmt("unknown variant '%s'", s.c_str()));
}

// Channels each variant consumes: RGB plus 16 landmark heatmaps for the
// guided variants, a subset for the single-cue ablations.
inline int variant_input_channels(Variant v) {
  switch (v) {
    case Variant::kImageOnly: return 3;
    case Variant::kLandmarksOnly: return 16;
    case Variant::kMaskOnly: return 1;
    default: return 19;
  }
}

inline const char* block_kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::kBottleneck: return "bottleneck";
    case BlockKind::kMultiscale: return "multiscale";
    case BlockKind::kFlatVolumetric: return "flat-volumetric";
  }
  throw ConfigError("unknown block kind enum");
}

inline BlockKind parse_block_kind(const std::string& s) {
  if (s == "bottleneck") return BlockKind::kBottleneck;
  if (s == "multiscale") return BlockKind::kMultiscale;
  if (s == "flat-volumetric") return BlockKind::kFlatVolumetric;
  throw ConfigError(strfmt("unknown block kind '%s'", s.c_str()));
}

// Encoder-decoder depth for a given feature-map extent: deepest level count
// (at most 4) that halves cleanly and keeps a bottleneck of at least 4 pixels,
// so 64x64 maps run 4 levels down to 4x4.
inline int hourglass_levels_for(int h, int w) {
  const int m = h < w ? h : w;
  int best = 0;
  for (int lv = 1; lv <= 4; ++lv) {
    const int div = 1 << lv;
    if (h % div || w % div || m / div < 4) break;
    best = lv;
  }
  if (best == 0)
    throw ConfigError(
        strfmt("feature maps %dx%d cannot host an encoder-decoder "
               "(need both extents even and at least 8)",
               h, w));
  return best;
}

struct NetworkSpec {
  Variant variant = Variant::kMultistack;
  int input_channels = 19;
  int vol_w = 64, vol_h = 64, vol_d = 64;
  int hourglass_count = 4;
  int residuals = 2;
  int base_features = 64;  // 0 = auto-scale (conv3d-flat only)
  BlockKind block_kind = BlockKind::kMultiscale;
  bool batchnorm = true;
  std::uint64_t seed = 1;

  int levels() const { return hourglass_levels_for(vol_h, vol_w); }

  void validate() const {
    if (input_channels < 1)
      throw ConfigError(strfmt("input channels %d", input_channels));
    if (vol_w < 1 || vol_h < 1 || vol_d < 1)
      throw ConfigError(strfmt("volume dims %dx%dx%d", vol_w, vol_h, vol_d));
    if (hourglass_count < 1 || hourglass_count > 4)
      throw ConfigError(strfmt("hourglass count %d outside [1,4]", hourglass_count));
    if (residuals < 1) throw ConfigError(strfmt("residuals %d", residuals));
    levels();  // throws when H x W cannot host an encoder-decoder
    const bool flat = block_kind == BlockKind::kFlatVolumetric;
    if ((variant == Variant::kConv3dFlat) != flat)
      throw ConfigError(
          strfmt("block kind %s incompatible with variant %s",
                 block_kind_name(block_kind), variant_name(variant)));
    if (variant == Variant::kConv3dFlat) {
      if (vol_d % 8)
        throw ConfigError(strfmt("volume depth %d not divisible by 8", vol_d));
      if (base_features < 0) throw ConfigError("negative base features");
    } else {
      if (base_features < 1)
        throw ConfigError(strfmt("base features %d", base_features));
      if (block_kind == BlockKind::kBottleneck && base_features % 2)
        throw ConfigError(strfmt("base features %d not even", base_features));
      if (block_kind == BlockKind::kMultiscale && base_features % 4)
        throw ConfigError(
            strfmt("base features %d not divisible by 4", base_features));
    }
  }

  // Taps carrying a loss: the guided baseline supervises only its final
  // output; every other variant supervises each hourglass.
  bool supervised_tap(int i) const {
    if (variant == Variant::kVrnGuided) return i == hourglass_count - 1;
    return true;
  }
  int tap_count() const {
    return variant == Variant::kVrnGuided ? 1 : hourglass_count;
  }

  Config to_config() const {
    Config c;
    c["variant"] = variant_name(variant);
    c["input_channels"] = std::to_string(input_channels);
    c["vol_w"] = std::to_string(vol_w);
    c["vol_h"] = std::to_string(vol_h);
    c["vol_d"] = std::to_string(vol_d);
    c["hourglass_count"] = std::to_string(hourglass_count);
    c["residuals"] = std::to_string(residuals);
    c["base_features"] = std::to_string(base_features);
    c["block_kind"] = block_kind_name(block_kind);
    c["batchnorm"] = batchnorm ? "true" : "false";
    c["seed"] = std::to_string(seed);
    return c;
  }
};

inline NetworkSpec default_spec(Variant v) {
  NetworkSpec s;
  s.variant = v;
  switch (v) {
    case Variant::kVrnGuided:
      s.input_channels = 19;
      s.hourglass_count = 2;
      s.residuals = 4;
      s.block_kind = BlockKind::kBottleneck;
      break;
    case Variant::kMultistack:
      s.input_channels = 19;
      break;
    case Variant::kOldResidual:
      s.input_channels = 19;
      s.block_kind = BlockKind::kBottleneck;
      break;
    case Variant::kImageOnly:
      s.input_channels = 3;
      break;
    case Variant::kLandmarksOnly:
      s.input_channels = 16;
      break;
    case Variant::kMaskOnly:
      s.input_channels = 1;
      break;
    case Variant::kConv3dFlat:
      s.input_channels = 19;
      s.block_kind = BlockKind::kFlatVolumetric;
      s.base_features = 0;  // auto-scale to FLOP parity with multistack
      break;
  }
  return s;
}

inline NetworkSpec spec_from_config(const Config& c) {
  Variant v = parse_variant(cfg_str(c, "variant", "multistack"));
  NetworkSpec s = default_spec(v);
  s.input_channels = (int)cfg_int(c, "input_channels", s.input_channels);
  s.vol_w = (int)cfg_int(c, "vol_w", s.vol_w);
  s.vol_h = (int)cfg_int(c, "vol_h", s.vol_h);
  s.vol_d = (int)cfg_int(c, "vol_d", s.vol_d);
  s.hourglass_count = (int)cfg_int(c, "hourglass_count", s.hourglass_count);
  s.residuals = (int)cfg_int(c, "residuals", s.residuals);
  s.base_features = (int)cfg_int(c, "base_features", s.base_features);
  s.block_kind = parse_block_kind(cfg_str(c, "block_kind", block_kind_name(s.block_kind)));
  s.batchnorm = cfg_bool(c, "batchnorm", s.batchnorm);
  s.seed = cfg_u64(c, "seed", s.seed);
  return s;
}

// --- network -----------------------------------------------------------------

template <typename T>
class Network {
 public:
  explicit Network(const NetworkSpec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.variant == Variant::kConv3dFlat && spec_.base_features == 0)
      spec_.base_features = auto_scaled_features(spec_);
    Rng rng(spec_.seed);
    build(rng);
  }

  const NetworkSpec& spec() const { return spec_; }

  // Returns one prediction per supervised tap, each shaped (D,H,W) with
  // values strictly inside (0,1).
  std::vector<Tensor<T>> forward(const Tensor<T>& x, bool train) {
    check_input(x);
    if (spec_.variant == Variant::kConv3dFlat) return forward_flat(x, train);
    return forward_2d(x, train);
  }

  void visit(const ParamFn<T>& fn) const {
    stem_conv2_.visit("stem.conv", fn);
    stem_bn_.visit("stem.bn", fn);
    const int n = spec_.hourglass_count;
    for (int i = 0; i < n; ++i) {
      const std::string si = std::to_string(i);
      hgs_[(size_t)i]->visit("hg" + si, fn);
      if (spec_.variant == Variant::kConv3dFlat) {
        lin3_[(size_t)i].visit("lin" + si + ".conv", fn);
      } else {
        lin2_[(size_t)i].visit("lin" + si + ".conv", fn);
      }
      lin_bn_[(size_t)i].visit("lin" + si + ".bn", fn);
      if (spec_.supervised_tap(i)) {
        const size_t t = tap_index(i);
        if (spec_.variant == Variant::kConv3dFlat) {
          for (size_t s = 0; s < dec_conv_[t].size(); ++s) {
            dec_conv_[t][s].visit("dec" + si + "." + std::to_string(s) + ".conv", fn);
            dec_bn_[t][s].visit("dec" + si + "." + std::to_string(s) + ".bn", fn);
          }
          dec_out_[t].visit("dec" + si + ".out", fn);
        } else {
          pred2_[t].visit("pred" + si, fn);
        }
      }
      if (i + 1 < n) {
        if (spec_.variant == Variant::kConv3dFlat) {
          remap_feat3_[(size_t)i].visit("remapf" + si, fn);
          remap_pred3_[(size_t)i].visit("remapp" + si, fn);
        } else {
          remap_feat2_[(size_t)i].visit("remapf" + si, fn);
          if (spec_.supervised_tap(i)) remap_pred2_[tap_index(i)].visit("remapp" + si, fn);
        }
      }
    }
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    visit([&](const std::string&, const Tensor<T>& t, bool trainable) {
      if (trainable) out.push_back(t);
    });
    return out;
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_tensors() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    visit([&](const std::string& name, const Tensor<T>& t, bool) {
      out.emplace_back(name, t);
    });
    return out;
  }

  long long parameter_count() const {
    long long n = 0;
    visit([&](const std::string&, const Tensor<T>& t, bool trainable) {
      if (trainable) n += t.numel();
    });
    return n;
  }

  // Forward-pass FLOPs on a zero input in eval mode.
  std::uint64_t flop_count() {
    Tensor<T> x({spec_.input_channels, spec_.vol_h, spec_.vol_w});
    FlopScope fs;
    forward(x, false);
    return fs.total();
  }

  // Smallest feature width whose conv3d-flat build reaches at least 90% of
  // the multistack FLOP count at the same input shape; the build fails if
  // that width overshoots 110%.
  static int auto_scaled_features(const NetworkSpec& flat_spec) {
    NetworkSpec ref = default_spec(Variant::kMultistack);
    ref.input_channels = flat_spec.input_channels;
    ref.vol_w = flat_spec.vol_w;
    ref.vol_h = flat_spec.vol_h;
    ref.vol_d = flat_spec.vol_d;
    ref.seed = flat_spec.seed;
    const std::uint64_t target = Network<T>(ref).flop_count();

    auto count_at = [&](int f) {
      NetworkSpec s = flat_spec;
      s.base_features = f;
      return Network<T>(s).flop_count();
    };
    const std::uint64_t floor90 = (std::uint64_t)(0.9 * (double)target);
    if (count_at(1) >= floor90) {
      if ((double)count_at(1) > 1.1 * (double)target)
        throw ConfigError("feature auto-scale cannot reach parity window");
      return 1;
    }
    int lo = 1, hi = 2;
    while (count_at(hi) < (std::uint64_t)(0.9 * (double)target)) {
      lo = hi;
      hi *= 2;
      if (hi > 4096) throw ConfigError("feature auto-scale diverged");
    }
    while (lo + 1 < hi) {
      const int mid = (lo + hi) / 2;
      if (count_at(mid) < (std::uint64_t)(0.9 * (double)target))
        lo = mid;
      else
        hi = mid;
    }
    const double c = (double)count_at(hi);
    if (c > 1.1 * (double)target)
      throw ConfigError(
          strfmt("feature auto-scale missed parity window: %.6g vs target %.6g", c,
                 (double)target));
    return hi;
  }

 private:
  void check_input(const Tensor<T>& x) const {
    const std::vector<int> want = {spec_.input_channels, spec_.vol_h, spec_.vol_w};
    if (x.shape() != want)
      throw UsageError(strfmt("input shape %s, want (%d,%d,%d)",
                              x.shape_str().c_str(), spec_.input_channels,
                              spec_.vol_h, spec_.vol_w));
  }

  size_t tap_index(int i) const {
    return spec_.variant == Variant::kVrnGuided ? 0 : (size_t)i;
  }

  BlockFactory<T> block_factory(Rng& rng) {
    const int f = spec_.base_features;
    const bool bn = spec_.batchnorm;
    switch (spec_.block_kind) {
      case BlockKind::kBottleneck:
        return [f, bn, &rng] { return BlockPtr<T>(new BottleneckBlock<T>(f, bn, rng)); };
      case BlockKind::kMultiscale:
        return [f, bn, &rng] { return BlockPtr<T>(new MultiscaleBlock<T>(f, bn, rng)); };
      case BlockKind::kFlatVolumetric:
        return
            [f, bn, &rng] { return BlockPtr<T>(new FlatVolumetricBlock<T>(f, bn, rng)); };
    }
    throw ConfigError("unknown block kind enum");
  }

  void build(Rng& rng) {
    const int f = spec_.base_features;
    const int n = spec_.hourglass_count;
    const int lv = spec_.levels();
    const bool bn = spec_.batchnorm;
    const bool flat = spec_.variant == Variant::kConv3dFlat;
    const int d0 = spec_.vol_d / 8;
    const int stem_out = flat ? f * d0 : f;
    // With batchnorm on, anything feeding the normalized trunk drops its
    // bias (see Conv2dLayer); the prediction heads always keep theirs.
    const bool tb = !bn;

    stem_conv2_ = Conv2dLayer<T>(spec_.input_channels, stem_out, 3, 1, 1, rng, tb);
    stem_bn_ = BnLayer<T>(stem_out, bn);
    auto make = block_factory(rng);
    for (int i = 0; i < n; ++i) {
      hgs_.push_back(std::make_unique<Hourglass<T>>(lv, spec_.residuals, make));
      if (flat) {
        lin3_.push_back(Conv3dLayer<T>(f, f, {1, 1, 1}, rng, tb));
      } else {
        lin2_.push_back(Conv2dLayer<T>(f, f, 1, 1, 0, rng, tb));
      }
      lin_bn_.push_back(BnLayer<T>(f, bn));
      if (spec_.supervised_tap(i)) {
        if (flat) {
          dec_conv_.emplace_back();
          dec_bn_.emplace_back();
          for (int s = 0; s < 3; ++s) {
            dec_conv_.back().push_back(Conv3dLayer<T>(f, f, {3, 1, 1}, rng, tb));
            dec_bn_.back().push_back(BnLayer<T>(f, bn));
          }
          dec_out_.push_back(Conv3dLayer<T>(f, 1, {1, 1, 1}, rng));
        } else {
          pred2_.push_back(Conv2dLayer<T>(f, spec_.vol_d, 1, 1, 0, rng));
        }
      }
      if (i + 1 < n) {
        if (flat) {
          remap_feat3_.push_back(Conv3dLayer<T>(f, f, {1, 1, 1}, rng, tb));
          remap_pred3_.push_back(Conv3dLayer<T>(8, f, {1, 1, 1}, rng, tb));
        } else {
          remap_feat2_.push_back(Conv2dLayer<T>(f, f, 1, 1, 0, rng, tb));
          if (spec_.supervised_tap(i))
            remap_pred2_.push_back(Conv2dLayer<T>(spec_.vol_d, f, 1, 1, 0, rng, tb));
        }
      }
    }
  }

  std::vector<Tensor<T>> forward_2d(const Tensor<T>& x, bool train) {
    const int n = spec_.hourglass_count;
    Tensor<T> t = relu(stem_bn_(stem_conv2_(x), train));
    std::vector<Tensor<T>> preds;
    for (int i = 0; i < n; ++i) {
      Tensor<T> h = hgs_[(size_t)i]->forward(t, train);
      Tensor<T> lin = relu(lin_bn_[(size_t)i](lin2_[(size_t)i](h), train));
      Tensor<T> logits;
      if (spec_.supervised_tap(i)) {
        logits = pred2_[tap_index(i)](lin);  // (D,H,W): channel d = depth slice
        preds.push_back(sigmoid(logits));
      }
      if (i + 1 < n) {
        t = add(t, remap_feat2_[(size_t)i](lin));
        if (spec_.supervised_tap(i))
          t = add(t, remap_pred2_[tap_index(i)](logits));
      }
    }
    return preds;
  }

  std::vector<Tensor<T>> forward_flat(const Tensor<T>& x, bool train) {
    const int n = spec_.hourglass_count;
    const int f = spec_.base_features;
    const int d0 = spec_.vol_d / 8;
    Tensor<T> t = relu(stem_bn_(stem_conv2_(x), train));
    t = reshape(t, {f, d0, spec_.vol_h, spec_.vol_w});
    std::vector<Tensor<T>> preds;
    for (int i = 0; i < n; ++i) {
      Tensor<T> h = hgs_[(size_t)i]->forward(t, train);
      Tensor<T> lin = relu(lin_bn_[(size_t)i](lin3_[(size_t)i](h), train));
      Tensor<T> logits;  // (1, D, H, W)
      const size_t ti = tap_index(i);
      {
        Tensor<T> d = lin;
        for (int s = 0; s < 3; ++s) {
          d = upsample_axis2(d, 1);
          d = relu(dec_bn_[ti][(size_t)s](dec_conv_[ti][(size_t)s](d), train));
        }
        logits = dec_out_[ti](d);
        preds.push_back(
            sigmoid(reshape(logits, {spec_.vol_d, spec_.vol_h, spec_.vol_w})));
      }
      if (i + 1 < n) {
        t = add(t, remap_feat3_[(size_t)i](lin));
        Tensor<T> lr = reshape(logits, {8, d0, spec_.vol_h, spec_.vol_w});
        t = add(t, remap_pred3_[(size_t)i](lr));
      }
    }
    return preds;
  }

  NetworkSpec spec_;
  Conv2dLayer<T> stem_conv2_;
  BnLayer<T> stem_bn_;
  std::vector<std::unique_ptr<Hourglass<T>>> hgs_;
  std::vector<Conv2dLayer<T>> lin2_;
  std::vector<Conv3dLayer<T>> lin3_;
  std::vector<BnLayer<T>> lin_bn_;
  std::vector<Conv2dLayer<T>> pred2_;
  std::vector<Conv2dLayer<T>> remap_feat2_, remap_pred2_;
  std::vector<Conv3dLayer<T>> remap_feat3_, remap_pred3_;
  std::vector<std::vector<Conv3dLayer<T>>> dec_conv_;
  std::vector<std::vector<BnLayer<T>>> dec_bn_;
  std::vector<Conv3dLayer<T>> dec_out_;
};

}  // namespace vrn
