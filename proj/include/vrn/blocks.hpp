#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vrn/ops.hpp"
#include "vrn/rng.hpp"
#include "vrn/tensor.hpp"

namespace vrn {

// Visits every tensor of a module tree in construction order. `trainable`
// distinguishes parameters from buffers (batchnorm running statistics).
template <typename T>
using ParamFn =
    std::function<void(const std::string& name, const Tensor<T>& t, bool trainable)>;

template <typename T>
class Block {
 public:
  virtual ~Block() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
  virtual void visit(const std::string& prefix, const ParamFn<T>& fn) const = 0;
};

template <typename T>
using BlockPtr = std::unique_ptr<Block<T>>;
template <typename T>
using BlockFactory = std::function<BlockPtr<T>()>;

// --- layers -----------------------------------------------------------------

// Convolutions inside a batch-normalized pathway are built without a bias:
// the following normalization subtracts the per-channel mean, so such a bias
// never affects the loss and its exact gradient is identically zero.
template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, int stride_, int pad_, Rng& rng,
              bool bias = true)
      : w({cout, cin, k, k}), stride(stride_), pad(pad_) {
    if (bias) b = Tensor<T>::zeros({cout});
    const T sd = std::sqrt(T(2) / (T)(cin * k * k));
    for (long long i = 0; i < w.numel(); ++i) w.data()[i] = (T)rng.normal() * sd;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }

  void visit(const std::string& p, const ParamFn<T>& fn) const {
    fn(p + ".w", w, true);
    if (b.defined()) fn(p + ".b", b, true);
  }
};

template <typename T>
struct Conv3dLayer {
  Tensor<T> w, b;
  std::array<int, 3> pad{0, 0, 0};

  Conv3dLayer() = default;
  Conv3dLayer(int cin, int cout, std::array<int, 3> k, Rng& rng, bool bias = true)
      : w({cout, cin, k[0], k[1], k[2]}) {
    if (bias) b = Tensor<T>::zeros({cout});
    for (int i = 0; i < 3; ++i) pad[i] = (k[i] - 1) / 2;
    const T sd = std::sqrt(T(2) / (T)(cin * k[0] * k[1] * k[2]));
    for (long long i = 0; i < w.numel(); ++i) w.data()[i] = (T)rng.normal() * sd;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv3d_flat(x, w, b, pad); }

  void visit(const std::string& p, const ParamFn<T>& fn) const {
    fn(p + ".w", w, true);
    if (b.defined()) fn(p + ".b", b, true);
  }
};

// Disabled batchnorm is an identity with no tensors (the config flag that
// removes normalization from every block).
template <typename T>
struct BnLayer {
  Tensor<T> g, bta, rm, rv;
  bool enabled = true;

  BnLayer() = default;
  BnLayer(int c, bool enabled_) : enabled(enabled_) {
    if (!enabled) return;
    g = Tensor<T>::full({c}, T(1));
    bta = Tensor<T>::zeros({c});
    rm = Tensor<T>::zeros({c});
    rv = Tensor<T>::full({c}, T(1));
  }

  Tensor<T> operator()(const Tensor<T>& x, bool train) const {
    if (!enabled) return x;
    return batchnorm(x, g, bta, rm, rv, train ? BnMode::kTrain : BnMode::kEval);
  }

  void visit(const std::string& p, const ParamFn<T>& fn) const {
    if (!enabled) return;
    fn(p + ".g", g, true);
    fn(p + ".b", bta, true);
    fn(p + ".rm", rm, false);
    fn(p + ".rv", rv, false);
  }
};

// --- residual blocks ---------------------------------------------------------
// All blocks are pre-activation (bn-relu-conv chains) with a parameter-free
// skip, so zero-initializing the final convolution makes the block an exact
// identity.

template <typename T>
class BottleneckBlock : public Block<T> {
 public:
  BottleneckBlock(int features, bool use_bn, Rng& rng) {
    if (features % 2)
      throw ConfigError(strfmt("bottleneck block: %d features not even", features));
    const int half = features / 2;
    bn1_ = BnLayer<T>(features, use_bn);
    c1_ = Conv2dLayer<T>(features, half, 1, 1, 0, rng, !use_bn);
    bn2_ = BnLayer<T>(half, use_bn);
    c2_ = Conv2dLayer<T>(half, half, 3, 1, 1, rng, !use_bn);
    bn3_ = BnLayer<T>(half, use_bn);
    c3_ = Conv2dLayer<T>(half, features, 1, 1, 0, rng, !use_bn);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    auto h = c1_(relu(bn1_(x, train)));
    h = c2_(relu(bn2_(h, train)));
    h = c3_(relu(bn3_(h, train)));
    return add(x, h);
  }

  void visit(const std::string& p, const ParamFn<T>& fn) const override {
    bn1_.visit(p + ".bn1", fn);
    c1_.visit(p + ".c1", fn);
    bn2_.visit(p + ".bn2", fn);
    c2_.visit(p + ".c2", fn);
    bn3_.visit(p + ".bn3", fn);
    c3_.visit(p + ".c3", fn);
  }

 private:
  BnLayer<T> bn1_, bn2_, bn3_;
  Conv2dLayer<T> c1_, c2_, c3_;
};

// Hierarchical three-branch block: 3x3 branches of widths f/2, f/4, f/4,
// each consuming the previous branch's output, concatenated back to f and
// projected by a final 1x1 so the zero-final-conv identity property holds.
template <typename T>
class MultiscaleBlock : public Block<T> {
 public:
  MultiscaleBlock(int features, bool use_bn, Rng& rng) {
    if (features % 4)
      throw ConfigError(
          strfmt("multiscale block: %d features not divisible by 4", features));
    const int w1 = features / 2, w2 = features / 4;
    bn1_ = BnLayer<T>(features, use_bn);
    c1_ = Conv2dLayer<T>(features, w1, 3, 1, 1, rng, !use_bn);
    bn2_ = BnLayer<T>(w1, use_bn);
    c2_ = Conv2dLayer<T>(w1, w2, 3, 1, 1, rng, !use_bn);
    bn3_ = BnLayer<T>(w2, use_bn);
    c3_ = Conv2dLayer<T>(w2, w2, 3, 1, 1, rng, !use_bn);
    bn4_ = BnLayer<T>(features, use_bn);
    proj_ = Conv2dLayer<T>(features, features, 1, 1, 0, rng, !use_bn);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    auto b1 = c1_(relu(bn1_(x, train)));
    auto b2 = c2_(relu(bn2_(b1, train)));
    auto b3 = c3_(relu(bn3_(b2, train)));
    auto cat = concat_channels<T>({b1, b2, b3});
    auto h = proj_(relu(bn4_(cat, train)));
    return add(x, h);
  }

  void visit(const std::string& p, const ParamFn<T>& fn) const override {
    bn1_.visit(p + ".bn1", fn);
    c1_.visit(p + ".c1", fn);
    bn2_.visit(p + ".bn2", fn);
    c2_.visit(p + ".c2", fn);
    bn3_.visit(p + ".bn3", fn);
    c3_.visit(p + ".c3", fn);
    bn4_.visit(p + ".bn4", fn);
    proj_.visit(p + ".proj", fn);
  }

 private:
  BnLayer<T> bn1_, bn2_, bn3_, bn4_;
  Conv2dLayer<T> c1_, c2_, c3_, proj_;
};

// Flat volumetric block: a series of single-axis 3-tap convolutions
// (3x1x1, 1x3x1, 1x1x3), covering a 3x3x3 receptive field per block.
template <typename T>
class FlatVolumetricBlock : public Block<T> {
 public:
  FlatVolumetricBlock(int features, bool use_bn, Rng& rng) {
    bn1_ = BnLayer<T>(features, use_bn);
    cd_ = Conv3dLayer<T>(features, features, {3, 1, 1}, rng, !use_bn);
    bn2_ = BnLayer<T>(features, use_bn);
    ch_ = Conv3dLayer<T>(features, features, {1, 3, 1}, rng, !use_bn);
    bn3_ = BnLayer<T>(features, use_bn);
    cw_ = Conv3dLayer<T>(features, features, {1, 1, 3}, rng, !use_bn);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    if (x.rank() != 4)
      throw ConfigError(strfmt("flat volumetric block: rank %d input, want 4 (C,D,H,W)",
                               x.rank()));
    auto h = cd_(relu(bn1_(x, train)));
    h = ch_(relu(bn2_(h, train)));
    h = cw_(relu(bn3_(h, train)));
    return add(x, h);
  }

  void visit(const std::string& p, const ParamFn<T>& fn) const override {
    bn1_.visit(p + ".bn1", fn);
    cd_.visit(p + ".cd", fn);
    bn2_.visit(p + ".bn2", fn);
    ch_.visit(p + ".ch", fn);
    bn3_.visit(p + ".bn3", fn);
    cw_.visit(p + ".cw", fn);
  }

 private:
  BnLayer<T> bn1_, bn2_, bn3_;
  Conv3dLayer<T> cd_, ch_, cw_;
};

// --- hourglass ----------------------------------------------------------------
// Symmetric encoder-decoder (Newell wiring): at each level a full-resolution
// skip branch of `r` residual blocks runs beside a pooled branch that recurses
// one level deeper, and the halves are summed after upsampling. Pooling acts
// on the trailing two dims, so the same structure serves 2-D feature maps and
// 4-D feature volumes (where depth passes through untouched).
template <typename T>
class Hourglass : public Block<T> {
 public:
  Hourglass(int levels, int r, const BlockFactory<T>& make) {
    if (levels < 1) throw ConfigError(strfmt("hourglass: %d levels", levels));
    if (r < 1) throw ConfigError(strfmt("hourglass: %d residuals per location", r));
    levels_.resize((size_t)levels);
    for (auto& L : levels_) {
      for (int i = 0; i < r; ++i) L.up1.push_back(make());
      for (int i = 0; i < r; ++i) L.low1.push_back(make());
      for (int i = 0; i < r; ++i) L.low3.push_back(make());
    }
    for (int i = 0; i < r; ++i) bottom_.push_back(make());
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override { return run(0, x, train); }

  void visit(const std::string& p, const ParamFn<T>& fn) const override {
    for (size_t l = 0; l < levels_.size(); ++l) {
      const std::string lp = p + ".l" + std::to_string(l);
      for (size_t i = 0; i < levels_[l].up1.size(); ++i)
        levels_[l].up1[i]->visit(lp + ".up1." + std::to_string(i), fn);
      for (size_t i = 0; i < levels_[l].low1.size(); ++i)
        levels_[l].low1[i]->visit(lp + ".low1." + std::to_string(i), fn);
      for (size_t i = 0; i < levels_[l].low3.size(); ++i)
        levels_[l].low3[i]->visit(lp + ".low3." + std::to_string(i), fn);
    }
    for (size_t i = 0; i < bottom_.size(); ++i)
      bottom_[i]->visit(p + ".bottom." + std::to_string(i), fn);
  }

  int levels() const { return (int)levels_.size(); }

 private:
  struct Level {
    std::vector<BlockPtr<T>> up1, low1, low3;
  };

  Tensor<T> run(int l, const Tensor<T>& x, bool train) {
    Level& L = levels_[(size_t)l];
    Tensor<T> up = x;
    for (auto& b : L.up1) up = b->forward(up, train);
    Tensor<T> low = maxpool2(x);
    for (auto& b : L.low1) low = b->forward(low, train);
    if (l + 1 < (int)levels_.size()) {
      low = run(l + 1, low, train);
    } else {
      for (auto& b : bottom_) low = b->forward(low, train);
    }
    for (auto& b : L.low3) low = b->forward(low, train);
    return add(up, upsample_nearest2(low));
  }

  std::vector<Level> levels_;
  std::vector<BlockPtr<T>> bottom_;
};

}  // namespace vrn
