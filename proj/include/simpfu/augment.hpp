#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include "simpfu/dsp.hpp"
#include "simpfu/errors.hpp"
#include "simpfu/labels.hpp"

namespace simpfu {

struct AugmentConfig {
  int max_freq_shift = 4;  // mel bins
  bool time_shift = true;  // circular, full range
  double mix_prob = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_freq_shift < 0 || max_freq_shift > 16) throw ValidationError("max_freq_shift must be in [0, 16]");
    if (!(mix_prob >= 0.0 && mix_prob <= 1.0)) throw ValidationError("mix_prob must be in [0, 1]");
  }
};

struct LabeledSpectrogram {
  MelSpectrogram spec;
  TimeIndexedLabels labels;
};

// Shifts mel columns by delta (positive = toward higher bins); vacated columns
// repeat the nearest edge column.
inline MelSpectrogram freq_shift(const MelSpectrogram& in, int delta, int max_shift = 16) {
  if (delta < -max_shift || delta > max_shift)
    throw ValidationError("frequency shift " + std::to_string(delta) + " exceeds limit " + std::to_string(max_shift));
  MelSpectrogram out = in;
  const auto cols = static_cast<std::ptrdiff_t>(in.data.cols);
  for (std::size_t t = 0; t < in.data.rows; ++t) {
    const double* src = in.data.row(t);
    double* dst = out.data.row(t);
    for (std::ptrdiff_t f = 0; f < cols; ++f) {
      const std::ptrdiff_t from = std::clamp<std::ptrdiff_t>(f - delta, 0, cols - 1);
      dst[f] = src[from];
    }
  }
  return out;
}

// Circular shift of spectrogram rows and label rows by the same amount.
inline LabeledSpectrogram time_shift(const LabeledSpectrogram& in, std::size_t shift) {
  LabeledSpectrogram out = in;
  const std::size_t rows = in.spec.data.rows;
  if (rows != in.labels.data.rows) throw ValidationError("spectrogram and labels disagree on time bins");
  shift %= rows;
  for (std::size_t t = 0; t < rows; ++t) {
    const std::size_t to = (t + shift) % rows;
    std::copy_n(in.spec.data.row(t), in.spec.data.cols, out.spec.data.row(to));
    for (std::size_t c = 0; c < in.labels.data.cols; ++c) out.labels.data(to, c) = in.labels.data(t, c);
  }
  return out;
}

// Elementwise mean of two spectrograms, re-standardized; labels are OR-ed.
inline LabeledSpectrogram mix(const LabeledSpectrogram& a, const LabeledSpectrogram& b) {
  if (a.spec.data.rows != b.spec.data.rows || a.spec.data.cols != b.spec.data.cols)
    throw ValidationError("cannot mix spectrograms of different shapes");
  RealMatrix avg(a.spec.data.rows, a.spec.data.cols);
  for (std::size_t i = 0; i < avg.data.size(); ++i) avg.data[i] = 0.5 * (a.spec.data.data[i] + b.spec.data.data[i]);
  LabeledSpectrogram out;
  out.spec = normalize(avg);
  out.labels = a.labels;
  for (std::size_t i = 0; i < out.labels.data.data.size(); ++i) out.labels.data.data[i] |= b.labels.data.data[i];
  return out;
}

// Draws one augmented training example. `partner` is used only when the mix
// coin comes up.
inline LabeledSpectrogram augment(const LabeledSpectrogram& sample, const LabeledSpectrogram& partner,
                                  const AugmentConfig& cfg, std::mt19937_64& rng) {
  LabeledSpectrogram out = sample;
  if (std::bernoulli_distribution(cfg.mix_prob)(rng)) out = mix(out, partner);
  if (cfg.max_freq_shift > 0) {
    const int delta = std::uniform_int_distribution<int>(-cfg.max_freq_shift, cfg.max_freq_shift)(rng);
    out.spec = freq_shift(out.spec, delta, cfg.max_freq_shift);
  }
  if (cfg.time_shift) {
    const auto s = std::uniform_int_distribution<std::size_t>(0, out.spec.data.rows - 1)(rng);
    out = time_shift(out, s);
  }
  return out;
}

}  // namespace simpfu
