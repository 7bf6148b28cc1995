#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "vrn/checkpoint.hpp"
#include "vrn/common.hpp"
#include "vrn/config.hpp"
#include "vrn/encoding.hpp"
#include "vrn/network.hpp"
#include "vrn/ops.hpp"
#include "vrn/optim.hpp"
#include "vrn/rng.hpp"
#include "vrn/synth.hpp"
#include "vrn/tape.hpp"
#include "vrn/tensor.hpp"
#include "vrn/voxelgrid.hpp"

namespace vrn {

// Raised when optimization itself breaks down (e.g. a non-finite loss);
// distinct from usage/config errors because the run was valid until then.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

// --- losses -----------------------------------------------------------------

// Cross-entropy between a {D,H,W} prediction and an occupancy grid.  Both
// sides store depth-major slices, rows, then columns, so the grid's value
// vector is already in prediction order.
template <typename T>
Tensor<T> voxel_bce_loss(const Tensor<T>& pred, const VoxelGrid& target,
                         bool normalize = true) {
  const std::vector<int> want = {target.d, target.h, target.w};
  if (pred.shape() != want)
    throw UsageError(strfmt("voxel loss: prediction %s vs volume %dx%dx%d",
                            pred.shape_str().c_str(), target.w, target.h,
                            target.d));
  std::vector<T> t(target.values.begin(), target.values.end());
  return bce_loss(pred, t, normalize);
}

// Unweighted sum of the per-tap losses, one per supervised output.
template <typename T>
Tensor<T> multitap_loss(const std::vector<Tensor<T>>& preds,
                        const VoxelGrid& target, bool normalize = true) {
  if (preds.empty()) throw UsageError("multitap_loss: no predictions");
  Tensor<T> total = voxel_bce_loss(preds[0], target, normalize);
  for (size_t i = 1; i < preds.size(); ++i)
    total = add(total, voxel_bce_loss(preds[i], target, normalize));
  return total;
}

// --- metrics ------------------------------------------------------------------

// A {D,H,W} network output reinterpreted as a volume on the sample lattice.
template <typename T>
VoxelGrid prediction_to_grid(const Tensor<T>& pred) {
  if (pred.rank() != 3)
    throw UsageError("prediction_to_grid: want a rank-3 {D,H,W} tensor, got " +
                     pred.shape_str());
  VoxelGrid g;
  g.d = pred.extent(0);
  g.h = pred.extent(1);
  g.w = pred.extent(2);
  g.binary = false;
  g.values.assign(pred.data(), pred.data() + pred.numel());
  return g;
}

template <typename T>
double voxel_iou(const Tensor<T>& pred, const VoxelGrid& target,
                 double threshold = 0.5) {
  return iou(prediction_to_grid(pred), target, threshold);
}

// --- configuration -------------------------------------------------------------

// Everything a run depends on.  The network seed also drives batch order and
// augmentation, so one seed pins the whole run.
struct TrainConfig {
  NetworkSpec spec;
  std::string manifest;
  std::string run_dir = "run";
  int epochs = 60;
  int batch_size = 6;
  double lr_initial = 1e-4;
  double lr_reduced = 1e-5;
  int lr_switch_epoch = 20;  // first epoch (0-based) at the reduced rate
  int checkpoint_every = 5;
  double eval_fraction = 0.2;  // trailing share of the manifest held out
  double iou_threshold = 0.5;
  bool augment = true;

  void validate() const {
    spec.validate();
    if (manifest.empty()) throw ConfigError("training needs a manifest path");
    if (run_dir.empty()) throw ConfigError("training needs a run directory");
    if (epochs < 1) throw ConfigError(strfmt("epochs %d", epochs));
    if (batch_size < 1) throw ConfigError(strfmt("batch size %d", batch_size));
    if (!(lr_initial > 0) || !(lr_reduced > 0) || lr_reduced > lr_initial)
      throw ConfigError(strfmt("learning rates %g -> %g must be positive and "
                               "non-increasing",
                               lr_initial, lr_reduced));
    if (lr_switch_epoch < 0)
      throw ConfigError(strfmt("lr switch epoch %d", lr_switch_epoch));
    if (checkpoint_every < 1)
      throw ConfigError(strfmt("checkpoint cadence %d", checkpoint_every));
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0))
      throw ConfigError(strfmt("eval fraction %g outside [0,1)", eval_fraction));
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
      throw ConfigError(strfmt("iou threshold %g outside (0,1)", iou_threshold));
  }
};

inline TrainConfig train_config_from_config(const Config& c) {
  TrainConfig t;
  t.spec = spec_from_config(c);
  t.manifest = cfg_str(c, "manifest", "");
  t.run_dir = cfg_str(c, "run_dir", t.run_dir);
  t.epochs = (int)cfg_int(c, "epochs", t.epochs);
  t.batch_size = (int)cfg_int(c, "batch_size", t.batch_size);
  t.lr_initial = cfg_double(c, "lr_initial", t.lr_initial);
  t.lr_reduced = cfg_double(c, "lr_reduced", t.lr_reduced);
  t.lr_switch_epoch =
      (int)cfg_int(c, "lr_switch_epoch", std::max(1, t.epochs / 3));
  t.checkpoint_every = (int)cfg_int(c, "checkpoint_every", t.checkpoint_every);
  t.eval_fraction = cfg_double(c, "eval_fraction", t.eval_fraction);
  t.iou_threshold = cfg_double(c, "iou_threshold", t.iou_threshold);
  t.augment = cfg_bool(c, "augment", t.augment);
  return t;
}

inline Config train_config_to_config(const TrainConfig& t) {
  Config c = t.spec.to_config();
  c["manifest"] = t.manifest;
  c["run_dir"] = t.run_dir;
  c["epochs"] = std::to_string(t.epochs);
  c["batch_size"] = std::to_string(t.batch_size);
  c["lr_initial"] = fmt6(t.lr_initial);
  c["lr_reduced"] = fmt6(t.lr_reduced);
  c["lr_switch_epoch"] = std::to_string(t.lr_switch_epoch);
  c["checkpoint_every"] = std::to_string(t.checkpoint_every);
  c["eval_fraction"] = fmt6(t.eval_fraction);
  c["iou_threshold"] = fmt6(t.iou_threshold);
  c["augment"] = t.augment ? "true" : "false";
  return c;
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// Digest of the mathematical run: everything that changes the trajectory.
// Bookkeeping knobs (run_dir, checkpoint_every) are excluded so a resumed run
// may checkpoint elsewhere or on another cadence and still match.
inline std::string config_digest(const TrainConfig& t) {
  Config c = train_config_to_config(t);
  c.erase("run_dir");
  c.erase("checkpoint_every");
  return strfmt("%016llx", (unsigned long long)fnv1a64(serialize_config(c)));
}

// --- run log ------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;  // 1-based, as printed
  double train_loss = 0.0;
  double lr = 0.0;
  std::vector<double> val_iou;  // per tap; empty when no evaluation ran
  double seconds = 0.0;
};

struct RunLog {
  std::string digest;
  std::vector<EpochRecord> epochs;
};

// The progress protocol: "epoch=<n> loss=<v> lr=<v> [iou=<v1,v2,...>]".
inline std::string format_epoch_line(const EpochRecord& r) {
  std::string s = strfmt("epoch=%d loss=%s lr=%s", r.epoch,
                         fmt6(r.train_loss).c_str(), fmt6(r.lr).c_str());
  if (!r.val_iou.empty()) {
    s += " iou=";
    for (size_t i = 0; i < r.val_iou.size(); ++i) {
      if (i) s += ",";
      s += fmt6(r.val_iou[i]);
    }
  }
  return s;
}

// One line per epoch.  Wall-clock is reported but can be dropped so that
// determinism checks compare only the reproducible fields.
inline std::string serialize_run_log(const RunLog& log, bool with_timing = true) {
  std::string out = "digest=" + log.digest + "\n";
  for (const EpochRecord& r : log.epochs) {
    out += format_epoch_line(r);
    if (with_timing) out += strfmt(" seconds=%s", fmt6(r.seconds).c_str());
    out += "\n";
  }
  return out;
}

// --- evaluation ----------------------------------------------------------------

// Mean IoU per supervised tap over the given samples, networks in eval mode.
inline std::vector<double> evaluate_entries(Network<float>& net,
                                            const std::string& dir,
                                            const std::vector<ManifestEntry>& entries,
                                            double threshold = 0.5) {
  if (entries.empty()) throw UsageError("evaluate: no samples");
  std::vector<double> acc;
  for (const ManifestEntry& e : entries) {
    const Sample s = load_sample(dir, e);
    const Tensor<float> x = assemble_input<float>(net.spec().variant, s);
    const std::vector<Tensor<float>> preds = net.forward(x, false);
    if (acc.empty()) acc.assign(preds.size(), 0.0);
    for (size_t t = 0; t < preds.size(); ++t)
      acc[t] += voxel_iou(preds[t], s.target, threshold);
  }
  for (double& v : acc) v /= (double)entries.size();
  return acc;
}

inline std::string manifest_dir(const std::string& manifest_path) {
  const std::string dir =
      std::filesystem::path(manifest_path).parent_path().string();
  return dir.empty() ? std::string(".") : dir;
}

inline std::vector<double> evaluate(Network<float>& net,
                                    const std::string& manifest_path,
                                    double threshold = 0.5) {
  return evaluate_entries(net, manifest_dir(manifest_path),
                          load_manifest(manifest_path), threshold);
}

// --- training -------------------------------------------------------------------

struct TrainResult {
  RunLog log;
  std::string last_checkpoint;
  std::vector<double> last_val_iou;
  long long steps = 0;  // optimizer steps taken by this invocation
};

// Single-precision end to end: checkpoints store raw f32, so saving and
// restoring is bit-exact and a resumed run reproduces the uninterrupted one.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg) : cfg_(cfg), net_(cfg.spec) {
    cfg_.validate();
    data_dir_ = manifest_dir(cfg_.manifest);
    const std::vector<ManifestEntry> all = load_manifest(cfg_.manifest);
    if (all.empty()) throw UsageError("empty manifest: " + cfg_.manifest);
    const int n_val = (int)std::lround((double)all.size() * cfg_.eval_fraction);
    const int n_train = (int)all.size() - n_val;
    if (n_train < 1)
      throw ConfigError(strfmt("eval fraction %g leaves no training samples",
                               cfg_.eval_fraction));
    train_.assign(all.begin(), all.begin() + n_train);
    val_.assign(all.begin() + n_train, all.end());
    params_ = net_.parameters();
    opt_.rho = 0.99f;
    opt_.eps = 1e-8f;
  }

  Network<float>& network() { return net_; }
  const TrainConfig& config() const { return cfg_; }

  // Restores parameters, batchnorm statistics, optimizer accumulators, and
  // the epoch cursor.  The checkpoint must come from an equivalent config.
  void resume(const std::string& path) {
    const std::vector<CheckpointRecord> recs = load_vxfm(path);
    std::map<std::string, const CheckpointRecord*> by_name;
    for (const CheckpointRecord& r : recs) by_name[r.name] = &r;
    const auto need = [&](const std::string& name) -> const CheckpointRecord& {
      auto it = by_name.find(name);
      if (it == by_name.end())
        throw ParseError(path + ": missing checkpoint record " + name);
      return *it->second;
    };

    const CheckpointRecord& dig = need("meta.digest");
    std::string digest;
    for (float v : dig.values) digest += (char)(int)v;
    const std::string want = config_digest(cfg_);
    if (digest != want)
      throw ConfigError(strfmt("checkpoint %s was written under a different "
                               "config (digest %s, this run is %s)",
                               path.c_str(), digest.c_str(), want.c_str()));

    start_epoch_ = (int)std::lround(need("meta.epoch").values.at(0));
    if (start_epoch_ >= cfg_.epochs)
      throw UsageError(strfmt("checkpoint %s already covers all %d epochs",
                              path.c_str(), cfg_.epochs));

    for (const auto& [name, t] : net_.named_tensors()) {
      const CheckpointRecord& r = need("net." + name);
      if (r.shape != t.shape())
        throw UsageError(strfmt("checkpoint record net.%s has wrong shape",
                                name.c_str()));
      std::copy(r.values.begin(), r.values.end(), t.data());
    }
    opt_.acc.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      const CheckpointRecord& r = need(strfmt("opt.acc.%zu", i));
      if ((long long)r.values.size() != params_[i].numel())
        throw UsageError(strfmt("optimizer accumulator %zu has wrong size", i));
      opt_.acc[i] = r.values;
    }
  }

  TrainResult run(std::FILE* progress = nullptr) {
    std::error_code ec;
    std::filesystem::create_directories(cfg_.run_dir, ec);
    if (ec) throw IoError("cannot create " + cfg_.run_dir + ": " + ec.message());
    save_config(train_config_to_config(cfg_), cfg_.run_dir + "/config.txt");

    TrainResult res;
    res.log.digest = config_digest(cfg_);
    const int mid_epoch = (cfg_.epochs + 1) / 2;

    for (int epoch = start_epoch_; epoch < cfg_.epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      const double lr =
          epoch < cfg_.lr_switch_epoch ? cfg_.lr_initial : cfg_.lr_reduced;
      opt_.lr = (float)lr;

      // Batch composition depends only on (seed, epoch); augmentation draws
      // only on (seed, epoch, position). Resumed runs replay both exactly.
      std::vector<int> order((size_t)train_.size());
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle_rng(derive_seed(cfg_.spec.seed, 0xD0, (uint64_t)epoch));
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[(size_t)shuffle_rng.uniform_int(0, (int)i - 1)]);

      double loss_sum = 0.0;
      long long seen = 0;
      for (int s0 = 0; s0 < (int)order.size(); s0 += cfg_.batch_size) {
        const int bn = std::min(cfg_.batch_size, (int)order.size() - s0);
        for (const Tensor<float>& p : params_) p.zero_grad();
        double batch_loss = 0.0;
        for (int k = 0; k < bn; ++k) {
          Sample s = load_sample(data_dir_, train_[(size_t)order[(size_t)(s0 + k)]]);
          if (cfg_.augment) {
            Rng arng(derive_seed(cfg_.spec.seed, 0xA6, (uint64_t)epoch,
                                 (uint64_t)(s0 + k)));
            s = augment_sample(s, arng);
          }
          typename Tape<float>::Scope scope;
          const Tensor<float> x = assemble_input<float>(cfg_.spec.variant, s);
          const std::vector<Tensor<float>> preds = net_.forward(x, true);
          const Tensor<float> loss = multitap_loss(preds, s.target);
          scope.tape().backward(loss);
          batch_loss += loss.item();
        }
        if (!std::isfinite(batch_loss)) {
          std::string idx;
          for (int k = 0; k < bn; ++k) {
            if (k) idx += ",";
            idx += std::to_string(order[(size_t)(s0 + k)]);
          }
          throw TrainingError(strfmt(
              "non-finite loss %g at epoch %d step %d (lr %g, batch samples %s)",
              batch_loss, epoch + 1, s0 / cfg_.batch_size + 1, lr, idx.c_str()));
        }
        const float inv = 1.0f / (float)bn;
        for (const Tensor<float>& p : params_)
          if (p.has_grad()) {
            float* g = p.grad();
            for (long long j = 0; j < p.numel(); ++j) g[j] *= inv;
          }
        rmsprop_step(params_, opt_);
        ++res.steps;
        loss_sum += batch_loss;
        seen += bn;
      }

      EpochRecord rec;
      rec.epoch = epoch + 1;
      rec.train_loss = loss_sum / (double)seen;
      rec.lr = lr;
      const bool cadence = (epoch + 1) % cfg_.checkpoint_every == 0;
      if (cadence || epoch + 1 == cfg_.epochs || epoch + 1 == mid_epoch) {
        if (!val_.empty())
          rec.val_iou =
              evaluate_entries(net_, data_dir_, val_, cfg_.iou_threshold);
        res.last_checkpoint =
            cfg_.run_dir + strfmt("/ckpt_%04d.vxfm", epoch + 1);
        save_training_checkpoint(res.last_checkpoint, epoch + 1,
                                 res.log.digest);
        if (!rec.val_iou.empty()) res.last_val_iou = rec.val_iou;
      }
      rec.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      res.log.epochs.push_back(rec);
      if (progress)
        std::fprintf(progress, "%s\n", format_epoch_line(rec).c_str());
    }

    std::ofstream log_out(cfg_.run_dir + "/train.log", std::ios::app);
    if (!log_out) throw IoError("cannot open " + cfg_.run_dir + "/train.log");
    log_out << serialize_run_log(res.log);
    return res;
  }

 private:
  void save_training_checkpoint(const std::string& path, int epochs_done,
                                const std::string& digest) {
    std::vector<CheckpointRecord> recs;
    recs.push_back({"meta.epoch", {1}, {(float)epochs_done}});
    CheckpointRecord dig{"meta.digest", {(int)digest.size()}, {}};
    for (char ch : digest) dig.values.push_back((float)(unsigned char)ch);
    recs.push_back(std::move(dig));
    for (const auto& [name, t] : net_.named_tensors())
      recs.push_back({"net." + name, t.shape(),
                      std::vector<float>(t.data(), t.data() + t.numel())});
    for (size_t i = 0; i < opt_.acc.size(); ++i)
      recs.push_back(
          {strfmt("opt.acc.%zu", i), params_[i].shape(), opt_.acc[i]});
    save_vxfm(path, recs);
  }

  TrainConfig cfg_;
  Network<float> net_;
  std::vector<Tensor<float>> params_;
  OptimizerState<float> opt_;
  std::vector<ManifestEntry> train_, val_;
  std::string data_dir_;
  int start_epoch_ = 0;
};

inline TrainResult train(const TrainConfig& cfg,
                         const std::string& resume_from = "",
                         std::FILE* progress = nullptr) {
  Trainer trainer(cfg);
  if (!resume_from.empty()) trainer.resume(resume_from);
  return trainer.run(progress);
}

// --- ablation -------------------------------------------------------------------

struct AblationRow {
  std::string variant;
  double iou_mid = std::numeric_limits<double>::quiet_NaN();
  double iou_final = std::numeric_limits<double>::quiet_NaN();
  double reference_pct = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // non-empty when the run aborted
};

// Published full-scale IoU (percent) of the corresponding model families, for
// orientation only; desk-scale runs are not directly comparable.
inline double reference_iou_percent(Variant v) {
  switch (v) {
    case Variant::kMultistack: return 68.3;
    case Variant::kVrnGuided: return 63.9;
    case Variant::kOldResidual: return 66.1;
    case Variant::kLandmarksOnly: return 61.0;
    case Variant::kImageOnly: return 48.3;
    case Variant::kMaskOnly: return 53.0;
    case Variant::kConv3dFlat: return 61.6;
  }
  throw ConfigError("unknown variant enum");
}

// Trains each config on the shared dataset and schedule, collecting the
// final-tap validation IoU halfway through and at the end.  A run that
// aborts contributes a row with the failure noted instead of scores.
inline std::vector<AblationRow> run_ablation(const std::vector<TrainConfig>& configs,
                                             std::FILE* progress = nullptr) {
  if (configs.empty()) throw UsageError("ablation: no configurations");
  for (const TrainConfig& c : configs)
    if (c.manifest != configs[0].manifest || c.epochs != configs[0].epochs)
      throw UsageError("ablation: all runs must share one dataset and schedule");

  std::vector<AblationRow> rows;
  for (const TrainConfig& cfg : configs) {
    AblationRow row;
    row.variant = variant_name(cfg.spec.variant);
    row.reference_pct = reference_iou_percent(cfg.spec.variant);
    try {
      const int mid = (cfg.epochs + 1) / 2;
      const TrainResult res = train(cfg, "", progress);
      for (const EpochRecord& r : res.log.epochs)
        if (!r.val_iou.empty()) {
          if (r.epoch == mid) row.iou_mid = r.val_iou.back();
          if (r.epoch == cfg.epochs) row.iou_final = r.val_iou.back();
        }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string ablation_cell(double v) {
  return std::isfinite(v) ? fmt6(v) : std::string("-");
}

inline std::string ablation_tsv(const std::vector<AblationRow>& rows) {
  std::string out = "variant\tiou_mid\tiou_final\tfull_scale_ref_pct\terror\n";
  for (const AblationRow& r : rows)
    out += r.variant + "\t" + ablation_cell(r.iou_mid) + "\t" +
           ablation_cell(r.iou_final) + "\t" + ablation_cell(r.reference_pct) +
           "\t" + r.error + "\n";
  return out;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  const std::vector<std::string> head = {"variant", "iou@mid", "iou@final",
                                         "full-scale ref", "note"};
  std::vector<std::vector<std::string>> cells;
  for (const AblationRow& r : rows)
    cells.push_back({r.variant, ablation_cell(r.iou_mid),
                     ablation_cell(r.iou_final),
                     ablation_cell(r.reference_pct) + "%",
                     r.error.empty() ? "" : "failed: " + r.error});
  std::vector<size_t> width(head.size());
  for (size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  const auto line = [&](const std::vector<std::string>& row) {
    std::string s;
    for (size_t c = 0; c < row.size(); ++c) {
      s += row[c];
      if (c + 1 < row.size())
        s += std::string(width[c] - row[c].size() + 2, ' ');
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(head);
  for (const auto& row : cells) out += line(row);
  out += "full-scale ref: reported IoU of the corresponding full-size model "
         "on its original benchmark; desk-scale runs are not comparable.\n";
  return out;
}

}  // namespace vrn
