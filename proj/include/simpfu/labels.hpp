#pragma once

// Time-indexed labels: start/end annotations -> 512 x 20 presence matrix,
// block-wise max downsampling, and class re-balancing of training epochs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "simpfu/errors.hpp"

namespace simpfu {

inline constexpr std::size_t kTimeBins = 512;
inline constexpr std::size_t kNumClasses = 20;
inline constexpr double kBinSeconds = 10.0 / 512.0;

struct Annotation {
  std::size_t class_id = 0;
  double start = 0.0;
  double end = 0.0;
  std::string source_segment;
};

// Binary presence matrix, rows = time bins, cols = classes.
struct LabelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> data;

  LabelMatrix() = default;
  LabelMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}

  std::uint8_t& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  std::uint8_t operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
  }

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;
};

struct TimeIndexedLabels {
  LabelMatrix data{kTimeBins, kNumClasses};

  friend bool operator==(const TimeIndexedLabels&, const TimeIndexedLabels&) = default;
};

inline void validate(const Annotation& a) {
  if (a.class_id >= kNumClasses)
    throw ValidationError("annotation class_id " + std::to_string(a.class_id) + " out of range");
  if (!(a.start >= 0.0 && a.start < 10.0 && a.end > 0.0 && a.end <= 10.0 && a.start < a.end))
    throw ValidationError("annotation interval [" + std::to_string(a.start) + ", " +
                          std::to_string(a.end) + ") out of range");
}

// Bin b covers [b*D, (b+1)*D) with D = 10/512 s (exact in binary). A bin is set
// when the annotation [start, end) overlaps it.
inline TimeIndexedLabels encode(const std::vector<Annotation>& annotations) {
  TimeIndexedLabels out;
  for (const Annotation& a : annotations) {
    validate(a);
    const auto first = static_cast<std::size_t>(std::floor(a.start / kBinSeconds));
    auto last = static_cast<std::size_t>(std::ceil(a.end / kBinSeconds));
    last = std::min(last, kTimeBins);
    for (std::size_t b = first; b < last; ++b) out.data(b, a.class_id) = 1;
  }
  return out;
}

// Block-wise max over consecutive time bins.
inline LabelMatrix downsample(const LabelMatrix& labels, std::size_t out_res) {
  if (out_res == 0 || labels.rows % out_res != 0)
    throw ValidationError("output resolution " + std::to_string(out_res) + " does not divide " +
                          std::to_string(labels.rows));
  const std::size_t block = labels.rows / out_res;
  LabelMatrix out(out_res, labels.cols);
  for (std::size_t t = 0; t < labels.rows; ++t)
    for (std::size_t c = 0; c < labels.cols; ++c)
      out(t / block, c) |= labels(t, c);
  return out;
}

inline LabelMatrix downsample(const TimeIndexedLabels& labels, std::size_t out_res) {
  return downsample(labels.data, out_res);
}

inline std::vector<std::uint8_t> to_segment(const TimeIndexedLabels& labels) {
  return downsample(labels.data, 1).data;
}

// ---------------------------------------------------------------- balance

struct BalancePlan {
  std::map<std::size_t, std::size_t> replication;  // class -> factor >= 1
  std::size_t target_total = 0;
};

// Each class is replicated toward the most frequent class:
// factor = max(1, round(max_count / count)). Empty classes get factor 1.
inline BalancePlan balance(const std::map<std::size_t, std::size_t>& counts, std::size_t target_total) {
  if (target_total == 0) throw ValidationError("balance target_total must be positive");
  BalancePlan plan;
  plan.target_total = target_total;
  std::size_t max_count = 0;
  for (const auto& [cls, n] : counts) max_count = std::max(max_count, n);
  for (const auto& [cls, n] : counts) {
    std::size_t factor = 1;
    if (n > 0) {
      factor = static_cast<std::size_t>(std::llround(static_cast<double>(max_count) / static_cast<double>(n)));
      factor = std::max<std::size_t>(factor, 1);
    }
    plan.replication[cls] = factor;
  }
  return plan;
}

inline std::map<std::size_t, std::size_t> class_counts(const std::vector<std::vector<std::uint8_t>>& segment_labels) {
  std::map<std::size_t, std::size_t> counts;
  for (const auto& seg : segment_labels) {
    for (std::size_t c = 0; c < seg.size(); ++c) {
      counts.try_emplace(c, 0);
      if (seg[c]) ++counts[c];
    }
  }
  return counts;
}

// Materializes one epoch of exactly plan.target_total segment indices. A
// segment is replicated by the largest factor among its classes; the
// replicated pool is shuffled and then truncated, or extended with further
// shuffled passes, to the target size.
inline std::vector<std::size_t> epoch_indices(const BalancePlan& plan,
                                              const std::vector<std::vector<std::uint8_t>>& segment_labels,
                                              std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < segment_labels.size(); ++i) {
    std::size_t factor = 1;
    for (std::size_t c = 0; c < segment_labels[i].size(); ++c) {
      if (!segment_labels[i][c]) continue;
      auto it = plan.replication.find(c);
      if (it != plan.replication.end()) factor = std::max(factor, it->second);
    }
    pool.insert(pool.end(), factor, i);
  }
  std::vector<std::size_t> out;
  if (pool.empty()) return out;
  std::mt19937_64 rng(seed);
  out.reserve(plan.target_total);
  while (out.size() < plan.target_total) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t take = std::min(pool.size(), plan.target_total - out.size());
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

}  // namespace simpfu
