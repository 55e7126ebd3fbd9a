// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [AC1 AC4 ...]   (no arguments runs everything)

#include <chrono>
#include <cmath>
#include <bit>
#include <iomanip>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace simpfu;

namespace {

// Pinned tolerances and budgets.
constexpr double kSecondsTol = 0.005;  // 3 significant figures of 12.4 / 1.48
constexpr double kParamTol = 0.15;
constexpr double kGradTol = 1e-3;
constexpr double kMedianTol = 1e-9;
constexpr double kMeanTol = 1e-5;
constexpr double kStdTol = 1e-4;
constexpr double kAucTol = 1e-12;
constexpr double kApExampleTol = 1e-4;
constexpr double kChanceTol = 0.02;
constexpr double kOverfitAuc = 0.99;
constexpr std::size_t kOverfitMaxEpochs = 50;
constexpr int kLocalityTrials = 100;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[violated: " << what << "] ";
    }
  }
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ModelSpec spec_of(char g, int i) {
  ModelSpec s;
  s.group = g;
  s.index = i;
  return s;
}

// ------------------------------------------------------------------ AC1

void ac1(Outcome& o) {
  const auto t0 = Clock::now();
  const std::size_t expect[8] = {636, 316, 156, 76, 36, 16, 6, 1};
  for (char g : {'A', 'B', 'C', 'D', 'E'})
    for (int i = 0; i < 8; ++i) {
      const auto r = compute_mrf(spec_of(g, i));
      o.require(r.mrf_time_bins == expect[i], r.model + " bins " + std::to_string(r.mrf_time_bins));
      o.require(std::abs(r.mrf_seconds - static_cast<double>(r.mrf_time_bins) * 10.0 / 512.0) < 1e-12,
                r.model + " seconds formula");
    }
  const double s00 = compute_mrf(spec_of('B', 0)).mrf_seconds;
  const double s03 = compute_mrf(spec_of('E', 3)).mrf_seconds;
  o.require(std::abs(s00 - 12.4) < 0.05 + kSecondsTol, "636 bins -> 12.4 s");
  o.require(std::abs(s03 - 1.48) < kSecondsTol, "76 bins -> 1.48 s");
  const double dt = since(t0);
  o.require(dt < 1.0, "runtime < 1 s");
  o.detail << "series 636..1 for groups A-E; " << std::setprecision(3) << s00 << " s, " << s03 << " s; "
           << std::setprecision(2) << dt << " s";
}

// ------------------------------------------------------------------ AC2

void ac2(Outcome& o) {
  for (char g : {'A', 'B', 'C', 'D', 'E'}) {
    o.require(compute_mrf(spec_of(g, 0)).output_time_res == 4, std::string(1, g) + "00 -> 4");
    o.require(compute_mrf(spec_of(g, 2)).output_time_res == 16, std::string(1, g) + "02 -> 16");
    o.require(compute_mrf(spec_of(g, 7)).output_time_res == 512, std::string(1, g) + "07 -> 512");
  }
  o.detail << "index 00/02/07 -> 4/16/512 for groups A-E";
}

// ------------------------------------------------------------------ AC3

void ac3(Outcome& o) {
  const auto t0 = Clock::now();
  const double b = static_cast<double>(count_params(spec_of('B', 3)));
  const double e = static_cast<double>(count_params(spec_of('E', 3)));
  const double d = static_cast<double>(count_params(spec_of('D', 3)));
  o.require(b >= 0.6e6 && b <= 0.85e6, "B03 in [0.6M, 0.85M]");
  o.require(e >= 1.5e6 && e <= 2.0e6, "E03 in [1.5M, 2.0M]");
  o.require(d >= 2.1e6 && d <= 2.8e6, "D03 in [2.1M, 2.8M]");
  o.require(std::abs(b / 0.7e6 - 1.0) <= kParamTol, "B03 within 15% of 0.7M");
  o.require(std::abs(e / 1.7e6 - 1.0) <= kParamTol, "E03 within 15% of 1.7M");
  o.require(std::abs(d / 2.4e6 - 1.0) <= kParamTol, "D03 within 15% of 2.4M");
  const auto b7 = count_params(spec_of('B', 7));
  o.require(b7 == count_params(spec_of('E', 7)) && b7 == count_params(spec_of('D', 7)), "B07 = E07 = D07");
  const double dt = since(t0);
  o.require(dt < 1.0, "runtime < 1 s");
  o.detail << "B03=" << static_cast<std::size_t>(b) << " E03=" << static_cast<std::size_t>(e)
           << " D03=" << static_cast<std::size_t>(d) << " B07=E07=D07=" << b7 << "; " << std::setprecision(2) << dt
           << " s";
}

// ------------------------------------------------------------------ AC4

void ac4(Outcome& o) {
  const auto t0 = Clock::now();
  std::size_t violations = 0, dead_centers = 0, trials = 0;
  for (int index = 4; index <= 7; ++index) {
    const ModelSpec spec = spec_of('B', index);
    const Network net(spec, 100 + static_cast<std::uint64_t>(index));
    const auto mrf = compute_mrf(spec);
    std::mt19937_64 rng(200 + static_cast<std::uint64_t>(index));
    const Tensor x = oracle::random_tensor({1, 512, 128}, rng);
    const Tensor base = net.infer(x);
    const std::size_t tout = base.dim(1), nc = base.dim(2);
    for (int k = 0; k < kLocalityTrials; ++k, ++trials) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, tout - 1)(rng);
      const long lo = std::max<long>(mrf.window_first(t), 0), hi = std::min<long>(mrf.window_last(t), 511);
      std::vector<long> outside;
      for (long b = 0; b < 512; ++b)
        if (b < lo || b > hi) outside.push_back(b);
      const long b = outside[std::uniform_int_distribution<std::size_t>(0, outside.size() - 1)(rng)];
      const float delta = std::uniform_real_distribution<float>(1.0f, 5.0f)(rng);
      Tensor xo = x;
      for (std::size_t f = 0; f < 128; ++f) xo.at(0, b, f) += delta;
      const Tensor yo = net.infer(xo);
      for (std::size_t c = 0; c < nc; ++c)
        if (std::bit_cast<std::uint32_t>(yo.at(0, t, c)) != std::bit_cast<std::uint32_t>(base.at(0, t, c))) {
          ++violations;
          break;
        }
      Tensor xc = x;
      for (std::size_t f = 0; f < 128; ++f) xc.at(0, mrf.window_center(t), f) += delta;
      const Tensor yc = net.infer(xc);
      bool changed = false;
      for (std::size_t c = 0; c < nc; ++c) changed |= yc.at(0, t, c) != base.at(0, t, c);
      dead_centers += changed ? 0 : 1;
    }
  }
  const double dt = since(t0);
  o.require(violations == 0, "outside-window perturbation changed output");
  o.require(dead_centers == 0, "center perturbation left output unchanged");
  o.require(dt < 120.0, "runtime < 2 min");
  o.detail << trials << " trials over B04-B07, " << violations << " locality violations, " << dead_centers
           << " unchanged centers; " << std::setprecision(3) << dt << " s";
}

// ------------------------------------------------------------------ AC5

void ac5(Outcome& o) {
  const auto t0 = Clock::now();
  const auto summary = gradcheck::run_all(20, 2024);
  double worst = 0.0;
  std::string worst_op;
  for (const auto& [op, s] : summary) {
    o.require(s.cases >= 20, op + " has fewer than 20 shapes");
    o.require(s.worst < kGradTol, op + " error " + std::to_string(s.worst) + " at " + s.worst_shape);
    if (s.worst >= worst) {
      worst = s.worst;
      worst_op = op;
    }
  }
  o.require(summary.size() >= 11, "op coverage");
  const double dt = since(t0);
  o.require(dt < 60.0, "runtime < 1 min");
  o.detail << summary.size() << " ops x 20 shapes, worst normwise error " << std::scientific << std::setprecision(2)
           << worst << " (" << worst_op << "); " << std::defaultfloat << std::setprecision(3) << dt << " s";
}

// ------------------------------------------------------------------ AC6

void ac6(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(6);
  double worst_median = 0.0, worst_mean = 0.0, worst_std = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    WaveformSegment w = synth::silence();
    synth::add_noise(w, 0.01 + 0.05 * trial, rng);
    const double f0 = std::uniform_real_distribution<double>(200.0, 4500.0)(rng);
    synth::add_chirp(w, f0, 5000.0 - f0 * 0.5, 0.3, 0.5 * trial, 2.0);
    synth::add_tone(w, f0, 0.1, 6.0, 1.0);

    const MelSpectrogram out = preprocess(w);
    o.require(out.data.rows == 512 && out.data.cols == 128, "output shape 512x128");
    const RealMatrix eq = equalize(select_band(stft_log_magnitude(w)));
    for (std::size_t f = 0; f < eq.cols; ++f) {
      std::vector<double> col(eq.rows);
      for (std::size_t t = 0; t < eq.rows; ++t) col[t] = eq(t, f);
      worst_median = std::max(worst_median, std::abs(median(col)));
    }
    double mean = 0.0, sq = 0.0;
    for (double v : out.data.data) mean += v;
    mean /= static_cast<double>(out.data.data.size());
    for (double v : out.data.data) sq += (v - mean) * (v - mean);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(std::sqrt(sq / static_cast<double>(out.data.data.size())) - 1.0));
  }
  o.require(worst_median <= kMedianTol, "per-frequency median after equalization");
  o.require(worst_mean <= kMeanTol, "normalized mean");
  o.require(worst_std <= kStdTol, "normalized std");

  WaveformSegment tone = synth::silence();
  synth::add_tone(tone, 1000.0, 0.5);
  const RealMatrix s = stft_log_magnitude(tone);
  long worst_off = 0;
  for (std::size_t fr = 0; fr < s.rows; ++fr) {
    const double* row = s.row(fr);
    const long peak = static_cast<long>(std::max_element(row, row + s.cols) - row);
    worst_off = std::max(worst_off, std::abs(peak - 43));
  }
  o.require(worst_off <= 1, "1 kHz peak at bin 43 +- 1");
  const double dt = since(t0);
  o.require(dt < 30.0, "runtime < 30 s");
  o.detail << std::scientific << std::setprecision(1) << "max |median|=" << worst_median << " max |mean|=" << worst_mean
           << " max |std-1|=" << worst_std << std::defaultfloat << "; 1 kHz peak offset " << worst_off
           << " bins over 512 frames; " << std::setprecision(3) << dt << " s";
}

// ------------------------------------------------------------------ AC7

std::vector<Annotation> random_annotations(std::mt19937_64& rng) {
  std::vector<Annotation> anns(std::uniform_int_distribution<int>(0, 8)(rng));
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (auto& a : anns) {
    a.class_id = std::uniform_int_distribution<std::size_t>(0, kNumClasses - 1)(rng);
    double s = u(rng), e = u(rng);
    if (s > e) std::swap(s, e);
    if (e - s < 1e-6) e = std::min(10.0, s + 0.01);
    if (s >= 10.0) s = 9.99;
    a.start = s;
    a.end = e;
  }
  return anns;
}

void ac7(Outcome& o) {
  std::mt19937_64 rng(7);
  std::size_t enc_mismatch = 0, down_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto anns = random_annotations(rng);
    const auto labels = encode(anns);
    enc_mismatch += labels == oracle::encode(anns) ? 0 : 1;
    const std::size_t res = std::size_t{1} << (trial % 10);
    down_mismatch += downsample(labels, res) == oracle::downsample(labels.data, res) ? 0 : 1;
  }
  const auto half = encode({{0, 1.0, 1.5, ""}});
  bool exact = half.data.count() == 26;
  for (std::size_t b = 51; b <= 76; ++b) exact &= half.data(b, 0) == 1;
  o.require(enc_mismatch == 0, "encode vs interval oracle");
  o.require(down_mismatch == 0, "downsample vs max-pool oracle");
  o.require(exact, "(1.0, 1.5) -> bins 51..76");
  o.detail << "1000 random sets: " << enc_mismatch << " encode and " << down_mismatch
           << " downsample mismatches; (1.0 s, 1.5 s) -> bins 51..76 " << (exact ? "exact" : "wrong");
}

// ------------------------------------------------------------------ AC8

void ac8(Outcome& o) {
  const std::vector<double> s = {0.9, 0.8, 0.3, 0.2};
  const std::vector<std::uint8_t> y = {1, 0, 1, 0};
  const double a = *auc(s, y), ap = *average_precision(s, y);
  o.require(std::abs(a - 0.75) < kAucTol && std::abs(oracle::auc_pairs(s, y) - 0.75) < kAucTol, "auc example 0.75");
  o.require(std::abs(ap - 0.8333) < kApExampleTol && std::abs(oracle::ap_ranks(s, y) - ap) < kAucTol,
            "ap example 0.8333");

  std::mt19937_64 rng(8);
  std::vector<double> rs(10000);
  std::vector<std::uint8_t> ry(10000, 0);
  for (auto& v : rs) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (std::size_t i = 0; i < 1000; ++i) ry[i] = 1;
  std::shuffle(ry.begin(), ry.end(), rng);
  const double ra = *auc(rs, ry), rap = *average_precision(rs, ry);
  o.require(std::abs(ra - 0.5) <= kChanceTol, "random AUC ~ 0.5");
  o.require(std::abs(rap - 0.10) <= kChanceTol, "random AP ~ 0.10");
  o.require(std::abs(ra - oracle::auc_pairs(rs, ry)) < 1e-9, "random AUC vs pair oracle");
  o.require(std::abs(rap - oracle::ap_ranks(rs, ry)) < 1e-9, "random AP vs rank oracle");
  o.detail << std::setprecision(4) << "auc=" << a << " ap=" << ap << "; random: auc=" << ra << " ap=" << rap;
}

// ------------------------------------------------------------------ shared synthetic data

ArchConfig mini_arch(bool avgpool, std::size_t n_classes) {
  ArchConfig a;
  a.name = avgpool ? "mini-C" : "mini-B";
  a.blocks = {{8, true}, {16, true}};
  a.head_channels = 16;
  a.n_classes = n_classes;
  a.time_avgpool = avgpool;
  return a;
}

LabeledSpectrogram labeled(const WaveformSegment& w, std::vector<Annotation> anns) {
  return {preprocess(w), encode(anns)};
}

bool same_weights(const Network& a, const Network& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(pa[i]->value == pb[i]->value)) return false;
  return true;
}

// ------------------------------------------------------------------ AC9

std::vector<LabeledSpectrogram> tone_vs_chirp(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabeledSpectrogram> out;
  for (std::size_t i = 0; i < n; ++i) {
    WaveformSegment w = synth::silence();
    synth::add_noise(w, 0.02, rng);
    const double dur = 1.0 + 2.0 * u(rng);
    const double start = u(rng) * (10.0 - dur);
    if (i % 2 == 0) {
      synth::add_tone(w, 1200.0 + 600.0 * u(rng), 0.2, start, dur);
      out.push_back(labeled(w, {{0, start, start + dur, ""}}));
    } else {
      const double f0 = 500.0 + 500.0 * u(rng);
      synth::add_chirp(w, f0, f0 + 2500.0, 0.2, start, dur);
      out.push_back(labeled(w, {{1, start, start + dur, ""}}));
    }
  }
  return out;
}

void ac9(Outcome& o) {
  const auto t0 = Clock::now();
  const auto data = tone_vs_chirp(200, 9);
  TrainConfig cfg;
  cfg.epochs = kOverfitMaxEpochs;
  cfg.batch_size = 32;
  cfg.lr0 = 0.003;
  cfg.decay = 0.0;
  cfg.seed = 9;
  cfg.target_epoch_size = 0;
  cfg.augment = false;
  const ArchConfig arch = mini_arch(false, 2);

  auto run = [&](std::vector<double>& aucs) {
    return train(data, arch, cfg, [&](std::size_t, const Network& net, double) {
      aucs.push_back(evaluate(net, data).macro_auc);
      return aucs.back() < kOverfitAuc;
    });
  };
  std::vector<double> auc1, auc2;
  const auto r1 = run(auc1);
  const auto r2 = run(auc2);
  const double dt = since(t0);
  o.require(!auc1.empty() && auc1.back() >= kOverfitAuc, "training macro AUC >= 0.99 within 50 epochs");
  o.require(r1.epoch_loss == r2.epoch_loss && auc1 == auc2 && same_weights(r1.network, r2.network),
            "rerun with the same seed is bitwise identical");
  o.require(dt < 600.0, "runtime < 10 min");
  o.detail << "macro AUC " << std::setprecision(4) << (auc1.empty() ? 0.0 : auc1.back()) << " after "
           << r1.epoch_loss.size() << " epochs; rerun "
           << (same_weights(r1.network, r2.network) ? "identical" : "differs") << "; " << std::setprecision(3) << dt
           << " s";
}

// ------------------------------------------------------------------ AC10

// A 1.5 s tone, well under the loudness of the confounder, is the target. A loud chirp (the confounder) never
// overlaps it in time. In training the confounder accompanies every target;
// in test it appears only in negatives.
std::vector<LabeledSpectrogram> confounded(std::size_t n, bool train_split, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabeledSpectrogram> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive = i % 2 == 0;
    WaveformSegment w = synth::silence();
    synth::add_noise(w, 0.02, rng);
    // Target in one half of the segment, confounder in the other.
    const bool target_first = u(rng) < 0.5;
    const double target_start = (target_first ? 0.2 : 5.2) + 3.0 * u(rng);
    const double conf_start = (target_first ? 5.2 : 0.2) + 1.5 * u(rng);
    const bool with_target = positive;
    const bool with_conf = train_split ? positive : !positive;
    std::vector<Annotation> anns;
    if (with_target) {
      synth::add_tone(w, 2500.0 + 300.0 * u(rng), 0.1, target_start, 1.5);
      anns.push_back({0, target_start, target_start + 1.5, ""});
    }
    if (with_conf) synth::add_chirp(w, 400.0, 1500.0, 0.3, conf_start, 3.0);
    out.push_back(labeled(w, anns));
  }
  return out;
}

void ac10(Outcome& o) {
  const auto t0 = Clock::now();
  const auto train_set = confounded(48, true, 10);
  const auto test_set = confounded(64, false, 11);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  cfg.lr0 = 0.01;
  cfg.decay = 0.0;
  cfg.target_epoch_size = 0;
  cfg.augment = false;
  double sum_b = 0.0, sum_c = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = seed;
    const auto b = train(train_set, mini_arch(false, 1), cfg);
    const auto c = train(train_set, mini_arch(true, 1), cfg);
    const double auc_b = evaluate(b.network, test_set).macro_auc;
    const double auc_c = evaluate(c.network, test_set).macro_auc;
    sum_b += auc_b;
    sum_c += auc_c;
    per_seed << std::setprecision(3) << " seed" << seed << " B=" << auc_b << " C=" << auc_c;
  }
  const double mean_b = sum_b / 3.0, mean_c = sum_c / 3.0;
  o.require(mean_b > mean_c, "time-indexed mean test AUC above segment-level");
  o.detail << "mean test AUC B-style " << std::setprecision(3) << mean_b << " vs C-style " << mean_c << ";"
           << per_seed.str() << "; " << since(t0) << " s";
}

// ------------------------------------------------------------------ AC11

void ac11(Outcome& o) {
  const auto t0 = Clock::now();
  BenchOptions opt;
  opt.n = 4;
  opt.warmup = 1;
  opt.runs = 3;
  double f[3];
  const char* ids[3] = {"B03", "E03", "D03"};
  for (int k = 0; k < 3; ++k) f[k] = bench_sequential(Network(ModelSpec::parse(ids[k]), 11), opt).processing_factor;
  const double dt = since(t0);
  o.require(f[0] > f[1], "factor(B03) > factor(E03)");
  o.require(f[1] > f[2], "factor(E03) > factor(D03)");
  o.require(dt < 300.0, "runtime < 5 min");
  o.detail << std::setprecision(4) << "sequential factors B03=" << f[0] << " E03=" << f[1] << " D03=" << f[2] << "; "
           << std::setprecision(3) << dt << " s";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4},   {"AC5", ac5},   {"AC6", ac6},
      {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10}, {"AC11", ac11},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    std::printf("%s %s %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
