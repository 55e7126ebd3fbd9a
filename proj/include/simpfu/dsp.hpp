#pragma once

// Waveform to normalized log-mel spectrogram:
//   STFT -> log magnitude -> 100..5000 Hz band -> per-frequency median
//   equalization -> 128 mel filters -> whole-matrix standardization.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "simpfu/errors.hpp"

namespace simpfu {

// Dense row-major real matrix (rows = time bins).
struct RealMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  RealMatrix() = default;
  RealMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  friend bool operator==(const RealMatrix&, const RealMatrix&) = default;
};

inline constexpr std::size_t kSampleRate = 48000;
inline constexpr std::size_t kSegmentSamples = 480000;
inline constexpr double kSegmentSeconds = 10.0;

struct WaveformSegment {
  std::vector<float> samples;
  std::size_t sample_rate = kSampleRate;
  std::string source_id;
  std::size_t segment_index = 0;
};

struct DspConfig {
  std::size_t window_len = 2048;
  std::size_t hop = 938;
  std::size_t pad = 1024;
  double f_low = 100.0;
  double f_high = 5000.0;
  std::size_t n_mels = 128;
  std::size_t n_time_bins = 512;
  double log_eps = 1e-10;

  std::size_t frame_count(std::size_t n_samples = kSegmentSamples) const {
    return (n_samples + 2 * pad - window_len) / hop + 1;
  }
  std::size_t n_freq_bins() const { return window_len / 2 + 1; }
  double bin_hz() const { return static_cast<double>(kSampleRate) / static_cast<double>(window_len); }
  double overlap() const { return 1.0 - static_cast<double>(hop) / static_cast<double>(window_len); }

  void validate() const {
    if (window_len == 0 || (window_len & (window_len - 1)) != 0)
      throw ValidationError("window_len must be a power of two");
    if (hop == 0 || pad >= kSegmentSamples) throw ValidationError("invalid hop/pad");
    if (frame_count() != n_time_bins)
      throw ValidationError("hop " + std::to_string(hop) + " yields " +
                            std::to_string(frame_count()) + " frames, expected " +
                            std::to_string(n_time_bins));
    if (!(f_low > 0.0 && f_low < f_high && f_high <= kSampleRate / 2.0))
      throw ValidationError("invalid frequency band");
    if (n_mels == 0) throw ValidationError("n_mels must be positive");
  }
};

struct MelSpectrogram {
  RealMatrix data;
  bool normalized = false;
  bool degenerate = false;
};

// ------------------------------------------------------------------- WAV

class WavError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class WavReadError : public WavError {
 public:
  using WavError::WavError;
};
class WavSampleRateError : public WavError {
 public:
  using WavError::WavError;
};
class WavChannelError : public WavError {
 public:
  using WavError::WavError;
};
class WavFormatError : public WavError {
 public:
  using WavError::WavError;
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

// Whole-file mono decode; samples scaled to [-1, 1].
inline std::vector<float> read_wav_mono(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavReadError("cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw WavReadError(path.string() + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const std::uint32_t len = detail::read_u32le(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, buf.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw WavReadError(path.string() + ": truncated fmt chunk");
      format = detail::read_u16le(chunk + 8);
      channels = detail::read_u16le(chunk + 10);
      rate = detail::read_u32le(chunk + 12);
      bits = detail::read_u16le(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = detail::read_u16le(chunk + 8 + 24);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || data == nullptr) throw WavReadError(path.string() + ": missing fmt or data chunk");
  if (channels != 1)
    throw WavChannelError(path.string() + ": expected mono, got " + std::to_string(channels) + " channels");
  if (rate != kSampleRate)
    throw WavSampleRateError(path.string() + ": expected 48000 sps, got " + std::to_string(rate));

  std::vector<float> samples;
  if (format == 1 && bits == 16) {
    samples.resize(data_len / 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto v = static_cast<std::int16_t>(detail::read_u16le(data + 2 * i));
      samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (format == 3 && bits == 32) {
    samples.resize(data_len / 4);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::uint32_t u = detail::read_u32le(data + 4 * i);
      float f;
      std::memcpy(&f, &u, sizeof f);
      if (!std::isfinite(f)) throw WavFormatError(path.string() + ": non-finite sample");
      samples[i] = f;
    }
  } else {
    throw WavFormatError(path.string() + ": unsupported encoding (format " + std::to_string(format) +
                         ", " + std::to_string(bits) + " bits)");
  }
  return samples;
}

// Consecutive 10 s segments; the last partial one is zero-padded.
inline std::vector<WaveformSegment> split_segments(const std::vector<float>& samples,
                                                   const std::string& source_id) {
  std::vector<WaveformSegment> out;
  for (std::size_t start = 0, idx = 0; start < samples.size(); start += kSegmentSamples, ++idx) {
    WaveformSegment seg;
    seg.source_id = source_id;
    seg.segment_index = idx;
    seg.samples.assign(kSegmentSamples, 0.0f);
    const std::size_t n = std::min(kSegmentSamples, samples.size() - start);
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(start), n, seg.samples.begin());
    out.push_back(std::move(seg));
  }
  return out;
}

inline std::vector<WaveformSegment> load_wav_segments(const std::filesystem::path& path) {
  return split_segments(read_wav_mono(path), path.stem().string());
}

enum class WavEncoding { Pcm16, Float32 };

inline void write_wav_mono(const std::filesystem::path& path, std::span<const float> samples,
                           WavEncoding enc = WavEncoding::Pcm16, std::uint32_t rate = kSampleRate,
                           std::uint16_t channels = 1) {
  const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * bits / 8);
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  detail::put_u32le(out, 36 + data_len);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, enc == WavEncoding::Pcm16 ? 1 : 3);
  detail::put_u16le(out, channels);
  detail::put_u32le(out, rate);
  detail::put_u32le(out, rate * channels * bits / 8);
  detail::put_u16le(out, static_cast<std::uint16_t>(channels * bits / 8));
  detail::put_u16le(out, bits);
  out += "data";
  detail::put_u32le(out, data_len);
  for (float s : samples) {
    if (enc == WavEncoding::Pcm16) {
      const long v = std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f);
      detail::put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    } else {
      std::uint32_t u;
      std::memcpy(&u, &s, sizeof u);
      detail::put_u32le(out, u);
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// ------------------------------------------------------------------ STFT

namespace detail {

// One shared r2c plan per window length. fftw_execute_dft_r2c on fresh
// aligned buffers is thread-safe; planning is not, hence the mutex.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    static std::mutex planner_mutex;
    std::lock_guard lock(planner_mutex);
    auto* in = fftw_alloc_real(n);
    auto* out = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  ~RealFft() { fftw_destroy_plan(plan_); }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void execute(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }
  std::size_t size() const { return n_; }

  static const RealFft& get(std::size_t n) {
    static std::mutex m;
    static std::vector<std::unique_ptr<RealFft>> cache;
    std::lock_guard lock(m);
    for (const auto& p : cache)
      if (p->n_ == n) return *p;
    cache.push_back(std::make_unique<RealFft>(n));
    return *cache.back();
  }

 private:
  std::size_t n_;
  fftw_plan plan_;
};

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

// Reflection index for centered framing: x[-k] = x[k], x[n-1+k] = x[n-1-k].
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto len = static_cast<std::ptrdiff_t>(n);
  if (len == 1) return 0;
  const std::ptrdiff_t period = 2 * (len - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < len ? i : period - i);
}

inline RealMatrix stft_log_magnitude(const WaveformSegment& seg, const DspConfig& cfg = {}) {
  cfg.validate();
  if (seg.samples.size() != kSegmentSamples)
    throw ValidationError("segment must hold exactly 480000 samples, got " +
                          std::to_string(seg.samples.size()));
  const std::size_t n = seg.samples.size();
  const std::size_t frames = cfg.frame_count(n);
  const std::size_t bins = cfg.n_freq_bins();
  const auto& fft = detail::RealFft::get(cfg.window_len);
  const auto window = hann_window(cfg.window_len);
  std::unique_ptr<double, detail::FftwDeleter> in(fftw_alloc_real(cfg.window_len));
  std::unique_ptr<fftw_complex, detail::FftwDeleter> out(fftw_alloc_complex(bins));
  RealMatrix spec(frames, bins);
  for (std::size_t fr = 0; fr < frames; ++fr) {
    const auto start = static_cast<std::ptrdiff_t>(fr * cfg.hop) - static_cast<std::ptrdiff_t>(cfg.pad);
    for (std::size_t k = 0; k < cfg.window_len; ++k) {
      const std::ptrdiff_t src = start + static_cast<std::ptrdiff_t>(k);
      const double v = (src >= 0 && src < static_cast<std::ptrdiff_t>(n))
                           ? seg.samples[static_cast<std::size_t>(src)]
                           : seg.samples[reflect_index(src, n)];
      in.get()[k] = v * window[k];
    }
    fft.execute(in.get(), out.get());
    double* row = spec.row(fr);
    for (std::size_t b = 0; b < bins; ++b) {
      const double mag = std::hypot(out.get()[b][0], out.get()[b][1]);
      row[b] = std::log(mag + cfg.log_eps);
    }
  }
  return spec;
}

struct BandRange {
  std::size_t first = 0;  // inclusive
  std::size_t last = 0;   // inclusive
  std::size_t count() const { return last - first + 1; }
};

// STFT bins whose center frequency k * fs / N lies in [f_low, f_high].
inline BandRange band_bins(const DspConfig& cfg = {}) {
  const double hz = cfg.bin_hz();
  BandRange r{static_cast<std::size_t>(std::ceil(cfg.f_low / hz)),
              static_cast<std::size_t>(std::floor(cfg.f_high / hz))};
  return r;
}

inline RealMatrix select_band(const RealMatrix& spec, const DspConfig& cfg = {}) {
  const BandRange band = band_bins(cfg);
  if (spec.cols <= band.last) throw ValidationError("spectrogram has too few frequency bins");
  RealMatrix out(spec.rows, band.count());
  for (std::size_t t = 0; t < spec.rows; ++t)
    std::copy_n(spec.row(t) + band.first, band.count(), out.row(t));
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of empty sequence");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

// Subtracts each frequency column's median over time.
inline RealMatrix equalize(const RealMatrix& spec) {
  RealMatrix out = spec;
  std::vector<double> col(spec.rows);
  for (std::size_t f = 0; f < spec.cols; ++f) {
    for (std::size_t t = 0; t < spec.rows; ++t) col[t] = spec(t, f);
    const double m = median(col);
    for (std::size_t t = 0; t < spec.rows; ++t) out(t, f) -= m;
  }
  return out;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters over the band-selected STFT bins, each normalized to unit
// weight sum. Centers sit at n_mels interior points of an equal mel grid
// spanning [mel(f_low), mel(f_high)]; edges are the neighbouring grid points.
// Edge distances are floored at one STFT bin so narrow low-frequency filters
// still cover at least one bin.
class MelFilterbank {
 public:
  explicit MelFilterbank(const DspConfig& cfg = {}) {
    const BandRange band = band_bins(cfg);
    n_in_ = band.count();
    n_mels_ = cfg.n_mels;
    const double hz = cfg.bin_hz();
    const double m_lo = hz_to_mel(cfg.f_low);
    const double m_hi = hz_to_mel(cfg.f_high);
    std::vector<double> grid(n_mels_ + 2);
    for (std::size_t i = 0; i < grid.size(); ++i)
      grid[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / static_cast<double>(n_mels_ + 1));
    centers_.assign(grid.begin() + 1, grid.end() - 1);
    weights_.assign(n_mels_ * n_in_, 0.0);
    for (std::size_t m = 0; m < n_mels_; ++m) {
      const double c = grid[m + 1];
      const double left = std::max(c - grid[m], hz);
      const double right = std::max(grid[m + 2] - c, hz);
      double total = 0.0;
      for (std::size_t k = 0; k < n_in_; ++k) {
        const double f = static_cast<double>(band.first + k) * hz;
        const double w = f <= c ? 1.0 - (c - f) / left : 1.0 - (f - c) / right;
        if (w > 0.0) {
          weights_[m * n_in_ + k] = w;
          total += w;
        }
      }
      for (std::size_t k = 0; k < n_in_; ++k) weights_[m * n_in_ + k] /= total;
    }
  }

  std::size_t n_mels() const { return n_mels_; }
  std::size_t n_inputs() const { return n_in_; }
  const std::vector<double>& centers_hz() const { return centers_; }
  double weight(std::size_t mel, std::size_t bin) const { return weights_[mel * n_in_ + bin]; }

  RealMatrix apply(const RealMatrix& spec) const {
    if (spec.cols != n_in_)
      throw ValidationError("mel projection expects " + std::to_string(n_in_) + " columns, got " +
                            std::to_string(spec.cols));
    RealMatrix out(spec.rows, n_mels_);
    for (std::size_t t = 0; t < spec.rows; ++t) {
      const double* in = spec.row(t);
      for (std::size_t m = 0; m < n_mels_; ++m) {
        const double* w = weights_.data() + m * n_in_;
        double acc = 0.0;
        for (std::size_t k = 0; k < n_in_; ++k) acc += w[k] * in[k];
        out(t, m) = acc;
      }
    }
    return out;
  }

 private:
  std::size_t n_in_ = 0;
  std::size_t n_mels_ = 0;
  std::vector<double> centers_;
  std::vector<double> weights_;
};

inline RealMatrix mel_project(const RealMatrix& spec, const DspConfig& cfg = {}) {
  return MelFilterbank(cfg).apply(spec);
}

inline constexpr double kFlatStdThreshold = 1e-12;

// Whole-matrix standardization. A flat input maps to zeros and is flagged.
inline MelSpectrogram normalize(const RealMatrix& spec) {
  MelSpectrogram out{RealMatrix(spec.rows, spec.cols), true, false};
  const double n = static_cast<double>(spec.data.size());
  double mean = 0.0;
  for (double v : spec.data) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : spec.data) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (sd < kFlatStdThreshold) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < spec.data.size(); ++i) out.data.data[i] = (spec.data[i] - mean) / sd;
  return out;
}

inline MelSpectrogram preprocess(const WaveformSegment& seg, const DspConfig& cfg = {}) {
  return normalize(mel_project(equalize(select_band(stft_log_magnitude(seg, cfg), cfg)), cfg));
}

}  // namespace simpfu
