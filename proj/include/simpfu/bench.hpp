#pragma once

// Inference-speed measurement as a processing factor:
// (segments processed x 10 s) / wall time.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "simpfu/dsp.hpp"
#include "simpfu/errors.hpp"
#include "simpfu/kernels.hpp"
#include "simpfu/model.hpp"
#include "simpfu/train.hpp"

namespace simpfu {

enum class BenchMode { Sequential, Batched };

inline const char* mode_name(BenchMode m) { return m == BenchMode::Sequential ? "sequential" : "batched"; }

struct BenchOptions {
  std::size_t n = 100;
  std::size_t batch = 32;
  std::size_t warmup = 3;
  std::size_t runs = 3;
  bool include_dsp = false;
  std::uint64_t seed = 0;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());  // batched mode only
};

struct BenchReport {
  std::string model_id;
  BenchMode mode = BenchMode::Sequential;
  std::size_t n_segments = 0;
  std::size_t batch = 1;
  double wall_seconds = 0.0;  // median over runs
  double processing_factor = 0.0;
  bool includes_preprocessing = false;
  double dsp_seconds = 0.0;  // preprocessing share of wall_seconds
  std::vector<double> run_seconds;
  std::size_t worker_threads_spawned = 0;
};

inline double processing_factor(std::size_t n_segments, double wall_seconds) {
  if (!(wall_seconds > 0.0)) throw ValidationError("wall time must be positive");
  return static_cast<double>(n_segments) * kSegmentSeconds / wall_seconds;
}

namespace detail {

struct BenchInputs {
  std::vector<WaveformSegment> waves;
  std::vector<MelSpectrogram> specs;
};

inline BenchInputs make_bench_inputs(std::size_t n, bool waveforms, std::uint64_t seed) {
  BenchInputs in;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (waveforms) {
      WaveformSegment w;
      w.samples.resize(kSegmentSamples);
      const double f0 = 300.0 + 4000.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      for (std::size_t k = 0; k < kSegmentSamples; ++k) {
        const double t = static_cast<double>(k) / kSampleRate;
        w.samples[k] = static_cast<float>(0.05 * noise(rng) + 0.2 * std::sin(2.0 * std::numbers::pi * f0 * t));
      }
      w.source_id = "bench";
      w.segment_index = i;
      in.waves.push_back(std::move(w));
    } else {
      RealMatrix m(kTimeBins, 128);
      for (double& v : m.data) v = noise(rng);
      in.specs.push_back(MelSpectrogram{std::move(m), true, false});
    }
  }
  return in;
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <typename RunOnce>
BenchReport run_bench(const Network& net, const BenchOptions& opt, BenchMode mode, std::size_t batch, RunOnce&& run_once) {
  if (opt.n < 1) throw ValidationError("benchmark needs n >= 1");
  if (opt.runs < 1) throw ValidationError("benchmark needs runs >= 1");
  BenchReport rep;
  rep.model_id = net.arch().name;
  rep.mode = mode;
  rep.n_segments = opt.n;
  rep.batch = batch;
  rep.includes_preprocessing = opt.include_dsp;
  const std::size_t spawned_before = kernels::worker_threads_spawned().load();
  std::vector<double> dsp_times;
  for (std::size_t r = 0; r < opt.runs; ++r) {
    double dsp = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    run_once(dsp);
    const auto t1 = std::chrono::steady_clock::now();
    rep.run_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    dsp_times.push_back(dsp);
  }
  rep.worker_threads_spawned = kernels::worker_threads_spawned().load() - spawned_before;
  rep.wall_seconds = median_of(rep.run_seconds);
  rep.dsp_seconds = median_of(dsp_times);
  rep.processing_factor = processing_factor(opt.n, rep.wall_seconds);
  return rep;
}

}  // namespace detail

// One segment at a time on the calling thread only.
inline BenchReport bench_sequential(const Network& net, const BenchOptions& opt) {
  if (opt.n < 1) throw ValidationError("benchmark needs n >= 1");
  const auto inputs = detail::make_bench_inputs(opt.n, opt.include_dsp, opt.seed);
  auto one = [&](std::size_t i, double& dsp) {
    if (opt.include_dsp) {
      const auto d0 = std::chrono::steady_clock::now();
      const MelSpectrogram spec = preprocess(inputs.waves[i]);
      dsp += std::chrono::duration<double>(std::chrono::steady_clock::now() - d0).count();
      return net.infer(to_input_tensor(spec), 1);
    }
    return net.infer(to_input_tensor(inputs.specs[i]), 1);
  };
  double ignored = 0.0;
  for (std::size_t w = 0; w < opt.warmup; ++w) one(w % opt.n, ignored);
  return detail::run_bench(net, opt, BenchMode::Sequential, 1, [&](double& dsp) {
    for (std::size_t i = 0; i < opt.n; ++i) one(i, dsp);
  });
}

// Batches of opt.batch segments; a short final batch is padded with repeats
// that are processed but not counted.
inline BenchReport bench_batched(const Network& net, const BenchOptions& opt) {
  if (opt.n < 1) throw ValidationError("benchmark needs n >= 1");
  if (opt.batch < 1) throw ValidationError("batch must be >= 1");
  const auto inputs = detail::make_bench_inputs(opt.n, opt.include_dsp, opt.seed);
  auto one_batch = [&](std::size_t first, double& dsp) {
    std::vector<MelSpectrogram> computed;
    std::vector<const MelSpectrogram*> specs;
    for (std::size_t k = 0; k < opt.batch; ++k) {
      const std::size_t i = std::min(first + k, opt.n - 1);
      if (opt.include_dsp) {
        const auto d0 = std::chrono::steady_clock::now();
        computed.push_back(preprocess(inputs.waves[i]));
        dsp += std::chrono::duration<double>(std::chrono::steady_clock::now() - d0).count();
      } else {
        specs.push_back(&inputs.specs[i]);
      }
    }
    if (opt.include_dsp)
      for (const auto& s : computed) specs.push_back(&s);
    return net.infer(to_input_tensor(specs), opt.threads);
  };
  double ignored = 0.0;
  for (std::size_t w = 0; w < std::min<std::size_t>(opt.warmup, 1); ++w) one_batch(0, ignored);
  return detail::run_bench(net, opt, BenchMode::Batched, opt.batch, [&](double& dsp) {
    for (std::size_t first = 0; first < opt.n; first += opt.batch) one_batch(first, dsp);
  });
}

inline constexpr const char* kBenchCsvHeader =
    "model,mode,n_segments,batch,wall_seconds,processing_factor,includes_preprocessing,dsp_seconds";

// Appends one row; writes the header only when creating the file.
inline void append_bench_csv(const std::filesystem::path& path, const BenchReport& r) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  if (fresh) out << kBenchCsvHeader << '\n';
  out << r.model_id << ',' << mode_name(r.mode) << ',' << r.n_segments << ',' << r.batch << ',' << r.wall_seconds
      << ',' << r.processing_factor << ',' << (r.includes_preprocessing ? 1 : 0) << ',' << r.dsp_seconds << '\n';
}

}  // namespace simpfu
