#pragma once

// Training loop (Adam + binary cross-entropy on time-indexed targets) and
// segment-level evaluation (per-class AUC / AP with macro means).

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "simpfu/adam.hpp"
#include "simpfu/augment.hpp"
#include "simpfu/labels.hpp"
#include "simpfu/metrics.hpp"
#include "simpfu/model.hpp"

namespace simpfu {

struct TrainConfig {
  std::size_t epochs = 11;
  std::size_t batch_size = 32;
  double lr0 = 0.001;
  double decay = 0.001;
  std::size_t replicates = 4;
  std::uint64_t seed = 0;
  // Segments per epoch after class re-balancing; 0 means one plain pass over
  // the dataset without re-balancing.
  std::size_t target_epoch_size = 14670;
  bool augment = true;
  AugmentConfig augmentation;

  void validate() const {
    if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
    if (!(lr0 > 0.0) || decay < 0.0) throw ValidationError("lr0 must be positive and decay non-negative");
    if (replicates == 0) throw ValidationError("replicates must be >= 1");
    if (augment) augmentation.validate();
  }
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, std::size_t step, double loss)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           " (loss " + std::to_string(loss) + ")"),
        epoch_(epoch),
        step_(step) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

struct TrainResult {
  Network network;
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

// Called after every epoch; returning false stops training early.
using EpochCallback = std::function<bool(std::size_t epoch, const Network& net, double loss)>;

inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Tensor to_input_tensor(const std::vector<const MelSpectrogram*>& specs) {
  if (specs.empty()) throw ValidationError("empty batch");
  const std::size_t t = specs[0]->data.rows, f = specs[0]->data.cols;
  Tensor x({specs.size(), t, f});
  for (std::size_t s = 0; s < specs.size(); ++s) {
    if (specs[s]->data.rows != t || specs[s]->data.cols != f) throw ShapeError("inconsistent spectrogram shapes");
    for (std::size_t i = 0; i < t * f; ++i) x[s * t * f + i] = static_cast<float>(specs[s]->data.data[i]);
  }
  return x;
}

inline Tensor to_input_tensor(const MelSpectrogram& spec) { return to_input_tensor({&spec}); }

// Labels pooled to the network's output resolution, first n_classes columns.
inline void append_targets(const TimeIndexedLabels& labels, const ArchConfig& arch, float* dst) {
  if (arch.n_classes > labels.data.cols) throw ValidationError("network has more classes than the label matrix");
  const LabelMatrix pooled = downsample(labels, arch.output_time());
  for (std::size_t t = 0; t < pooled.rows; ++t)
    for (std::size_t c = 0; c < arch.n_classes; ++c) dst[t * arch.n_classes + c] = pooled(t, c);
}

inline std::vector<std::uint8_t> segment_classes(const TimeIndexedLabels& labels, std::size_t n_classes) {
  auto seg = to_segment(labels);
  seg.resize(std::min(n_classes, seg.size()));
  return seg;
}

inline TrainResult train(const std::vector<LabeledSpectrogram>& data, const ArchConfig& arch, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  arch.validate();
  if (data.empty()) throw ValidationError("training set is empty");
  TrainResult result{Network(arch, split_seed(cfg.seed, 0)), {}, 0};
  Network& net = result.network;
  AdamState adam;
  adam.lr0 = cfg.lr0;
  adam.decay = cfg.decay;
  std::mt19937_64 rng(split_seed(cfg.seed, 1));

  std::vector<std::vector<std::uint8_t>> seg_labels;
  for (const auto& ex : data) seg_labels.push_back(segment_classes(ex.labels, arch.n_classes));
  std::optional<BalancePlan> plan;
  if (cfg.target_epoch_size > 0) plan = balance(class_counts(seg_labels), cfg.target_epoch_size);

  const auto params = net.parameters();
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order;
    if (plan) {
      order = epoch_indices(*plan, seg_labels, rng());
    } else {
      order.resize(data.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
    }
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, order.size() - b0);
      std::vector<LabeledSpectrogram> batch;
      batch.reserve(bsz);
      for (std::size_t k = 0; k < bsz; ++k) {
        const auto& ex = data[order[b0 + k]];
        if (cfg.augment) {
          batch.push_back(augment(ex, data[pick(rng)], cfg.augmentation, rng));
        } else {
          batch.push_back(ex);
        }
      }
      std::vector<const MelSpectrogram*> specs;
      for (const auto& ex : batch) specs.push_back(&ex.spec);
      const Tensor x = to_input_tensor(specs);
      Tensor target({bsz, arch.output_time(), arch.n_classes});
      for (std::size_t k = 0; k < bsz; ++k)
        append_targets(batch[k].labels, arch, target.data() + k * arch.output_time() * arch.n_classes);

      net.zero_grad();
      Tape tape;
      Var pred = net.forward_train(tape, x);
      Var loss = ad::bce(tape, pred, target);
      const double lv = tape.value(loss)[0];
      if (!std::isfinite(lv)) throw DivergenceError(epoch, result.steps, lv);
      tape.backward(loss);
      adam_step(params, adam);
      ++result.steps;
      loss_sum += lv * static_cast<double>(bsz);
      seen += bsz;
    }
    const double epoch_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch && !on_epoch(epoch, net, epoch_loss)) break;
  }
  return result;
}

// ----------------------------------------------------------------- predict

// Mean over output time bins per class for one sample of a [N, T, C] output.
inline std::vector<double> summarize_over_time(const Tensor& out, std::size_t sample = 0) {
  if (out.rank() != 3) throw ShapeError("expected network output [N,T,C]");
  const std::size_t t = out.dim(1), c = out.dim(2);
  std::vector<double> scores(c, 0.0);
  const float* base = out.data() + sample * t * c;
  for (std::size_t ti = 0; ti < t; ++ti)
    for (std::size_t ci = 0; ci < c; ++ci) scores[ci] += base[ti * c + ci];
  for (auto& s : scores) s /= static_cast<double>(t);
  return scores;
}

inline std::vector<double> predict_segment(const Network& net, const MelSpectrogram& spec) {
  return summarize_over_time(net.infer(to_input_tensor(spec)));
}

// ---------------------------------------------------------------- evaluate

struct EvalReport {
  std::vector<std::optional<double>> per_class_auc;
  std::vector<std::optional<double>> per_class_ap;
  double macro_auc = 0.0;
  double macro_ap = 0.0;
  std::size_t n_segments = 0;
  std::vector<double> class_proportions;
  // Classes left out of the macro means (single-class in the test set).
  std::vector<std::size_t> undefined_auc;
  std::vector<std::size_t> undefined_ap;
};

// scores[s][c], labels[s][c] (segment-level).
inline EvalReport evaluate_scores(const std::vector<std::vector<double>>& scores,
                                  const std::vector<std::vector<std::uint8_t>>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("evaluate: scores and labels differ in length");
  EvalReport r;
  r.n_segments = scores.size();
  if (scores.empty()) return r;
  const std::size_t nc = scores[0].size();
  double auc_sum = 0.0, ap_sum = 0.0;
  std::size_t auc_n = 0, ap_n = 0;
  std::vector<double> s(scores.size());
  std::vector<std::uint8_t> y(scores.size());
  for (std::size_t c = 0; c < nc; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].size() != nc || labels[i].size() < nc) throw ValidationError("evaluate: ragged inputs");
      s[i] = scores[i][c];
      y[i] = labels[i][c];
      pos += y[i];
    }
    r.class_proportions.push_back(static_cast<double>(pos) / static_cast<double>(scores.size()));
    const auto a = auc(s, y);
    const auto p = average_precision(s, y);
    r.per_class_auc.push_back(a);
    r.per_class_ap.push_back(p);
    if (a) {
      auc_sum += *a;
      ++auc_n;
    } else {
      r.undefined_auc.push_back(c);
    }
    if (p) {
      ap_sum += *p;
      ++ap_n;
    } else {
      r.undefined_ap.push_back(c);
    }
  }
  r.macro_auc = auc_n ? auc_sum / static_cast<double>(auc_n) : std::nan("");
  r.macro_ap = ap_n ? ap_sum / static_cast<double>(ap_n) : std::nan("");
  return r;
}

inline std::vector<std::vector<double>> predict_all(const Network& net, const std::vector<LabeledSpectrogram>& data,
                                                    unsigned threads = 1) {
  std::vector<std::vector<double>> scores(data.size());
  kernels::parallel_for(data.size(), threads,
                        [&](std::size_t i) { scores[i] = predict_segment(net, data[i].spec); });
  return scores;
}

inline EvalReport evaluate(const Network& net, const std::vector<LabeledSpectrogram>& test_set, unsigned threads = 1) {
  std::vector<std::vector<std::uint8_t>> labels;
  for (const auto& ex : test_set) labels.push_back(segment_classes(ex.labels, net.arch().n_classes));
  return evaluate_scores(predict_all(net, test_set, threads), labels);
}

}  // namespace simpfu
