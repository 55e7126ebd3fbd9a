#pragma once

// SIMP-FU network family: a Conv2D region of VGG-style blocks, frequency
// unwrapping into channels, and a kernel-size-1 Conv1D head. Every output
// unit sees all input frequencies but only a bounded window of time bins.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "simpfu/adam.hpp"
#include "simpfu/errors.hpp"
#include "simpfu/kernels.hpp"
#include "simpfu/tape.hpp"

namespace simpfu {

inline constexpr double kBatchNormEps = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

struct BlockConfig {
  std::size_t channels = 32;
  // Time-active blocks use 3x3 convolutions and 2x2 pooling; the others use
  // 1x3 convolutions and 1x2 pooling and leave the time axis untouched.
  bool time_active = true;

  friend bool operator==(const BlockConfig&, const BlockConfig&) = default;
};

struct ArchConfig {
  std::string name = "custom";
  std::vector<BlockConfig> blocks;
  std::size_t head_channels = 256;
  std::size_t n_classes = 20;
  bool time_avgpool = false;
  std::size_t input_time = 512;
  std::size_t input_freq = 128;

  std::size_t time_poolings() const {
    std::size_t p = 0;
    for (const auto& b : blocks) p += b.time_active ? 1 : 0;
    return p;
  }
  std::size_t time_after_conv() const { return input_time >> time_poolings(); }
  std::size_t freq_after_conv() const { return input_freq >> blocks.size(); }
  std::size_t conv_channels() const { return blocks.empty() ? 1 : blocks.back().channels; }
  std::size_t unwrap_width() const { return freq_after_conv() * conv_channels(); }
  std::size_t output_time() const { return time_avgpool ? 1 : time_after_conv(); }

  void validate() const {
    if (n_classes == 0 || head_channels == 0) throw ValidationError("classes and head channels must be positive");
    if (blocks.size() > 16) throw ValidationError("too many convolutional blocks");
    if (input_freq == 0 || input_freq % (std::size_t{1} << blocks.size()) != 0)
      throw ValidationError("input frequency bins not divisible by 2^blocks");
    if (input_time == 0 || input_time % (std::size_t{1} << time_poolings()) != 0)
      throw ValidationError("input time bins not divisible by 2^time_poolings");
    for (const auto& b : blocks)
      if (b.channels == 0) throw ValidationError("block channels must be positive");
  }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

enum class DepthSchedule { Lin32, Lin64, Exp32 };

inline std::array<std::size_t, 7> schedule_depths(DepthSchedule s) {
  switch (s) {
    case DepthSchedule::Lin32: return {32, 64, 96, 128, 160, 192, 224};
    case DepthSchedule::Lin64: return {64, 128, 192, 256, 320, 384, 448};
    case DepthSchedule::Exp32: return {32, 64, 128, 256, 512, 1024, 2048};
  }
  return {};
}

inline const char* schedule_name(DepthSchedule s) {
  switch (s) {
    case DepthSchedule::Lin32: return "32-lin";
    case DepthSchedule::Lin64: return "64-lin";
    case DepthSchedule::Exp32: return "32-exp";
  }
  return "?";
}

// One member of the A..E x 00..07 model grid.
struct ModelSpec {
  char group = 'B';
  int index = 3;
  std::size_t n_classes = 20;
  std::size_t head_channels = 256;

  static ModelSpec parse(const std::string& id) {
    if (id.size() != 3 || id[1] != '0' || id[2] < '0' || id[2] > '7')
      throw ValidationError("model id must look like B03, got '" + id + "'");
    ModelSpec s;
    s.group = id[0];
    s.index = id[2] - '0';
    s.validate();
    return s;
  }

  void validate() const {
    if (group < 'A' || group > 'E') throw ValidationError(std::string("invalid model group '") + group + "'");
    if (index < 0 || index > 7) throw ValidationError("model index must be in 0..7");
  }

  std::string id() const { return std::string(1, group) + "0" + std::to_string(index); }

  DepthSchedule schedule() const {
    if (group == 'D') return DepthSchedule::Lin64;
    if (group == 'E') return DepthSchedule::Exp32;
    return DepthSchedule::Lin32;
  }

  ArchConfig arch() const {
    validate();
    ArchConfig a;
    a.name = id();
    a.n_classes = n_classes;
    a.head_channels = head_channels;
    a.time_avgpool = group == 'C';
    const auto depths = schedule_depths(schedule());
    const int active = 7 - index;
    const int total = group == 'A' ? 7 : active;
    for (int i = 0; i < total; ++i) a.blocks.push_back({depths[static_cast<std::size_t>(i)], i < active});
    return a;
  }
};

// ------------------------------------------------------------ receptive field

struct MrfReport {
  std::string model;
  std::size_t mrf_time_bins = 1;
  double mrf_seconds = 0.0;
  std::size_t output_time_res = 0;
  bool output_freq_collapsed = false;  // frequency reduced to one bin before unwrapping
  std::size_t n_params = 0;
  // Output unit t depends on input time bins [t*time_jump + window_offset,
  // t*time_jump + window_offset + mrf_time_bins - 1] (clipped to the input).
  std::ptrdiff_t window_offset = 0;
  std::size_t time_jump = 1;

  std::ptrdiff_t window_first(std::size_t t) const {
    return static_cast<std::ptrdiff_t>(t * time_jump) + window_offset;
  }
  std::ptrdiff_t window_last(std::size_t t) const {
    return window_first(t) + static_cast<std::ptrdiff_t>(mrf_time_bins) - 1;
  }
  std::ptrdiff_t window_center(std::size_t t) const {
    return window_first(t) + static_cast<std::ptrdiff_t>((mrf_time_bins - 1) / 2);
  }
};

// Trainable weights: kernels, biases, batch-norm scale and shift.
inline std::size_t count_params(const ArchConfig& arch) {
  std::size_t n = 0;
  std::size_t cin = 1;
  for (const auto& b : arch.blocks) {
    const std::size_t kt = b.time_active ? 3 : 1;
    n += kt * 3 * cin * b.channels + b.channels + 2 * b.channels;
    n += kt * 3 * b.channels * b.channels + b.channels + 2 * b.channels;
    cin = b.channels;
  }
  std::size_t width = arch.unwrap_width();
  for (int i = 0; i < 2; ++i) {
    n += width * arch.head_channels + arch.head_channels + 2 * arch.head_channels;
    width = arch.head_channels;
  }
  n += width * arch.n_classes + arch.n_classes;
  return n;
}

inline std::size_t count_params(const ModelSpec& spec) { return count_params(spec.arch()); }

// Receptive-field recurrence along time: each layer with kernel k adds
// (k-1)*jump; each pooling adds (window-1)*jump and multiplies jump by its
// stride. Same-padding shifts the window start by pad*jump.
inline MrfReport compute_mrf(const ArchConfig& arch) {
  arch.validate();
  MrfReport r;
  r.model = arch.name;
  std::size_t rf = 1;
  std::size_t jump = 1;
  std::ptrdiff_t start = 0;
  for (const auto& b : arch.blocks) {
    const std::size_t kt = b.time_active ? 3 : 1;
    const std::size_t pt = b.time_active ? 2 : 1;
    for (int conv = 0; conv < 2; ++conv) {
      start -= static_cast<std::ptrdiff_t>((kt - 1) / 2 * jump);
      rf += (kt - 1) * jump;
    }
    rf += (pt - 1) * jump;
    jump *= pt;
  }
  r.mrf_time_bins = rf;
  r.mrf_seconds = static_cast<double>(rf) * 10.0 / 512.0;
  r.time_jump = jump;
  r.window_offset = start;
  r.output_time_res = arch.time_after_conv();
  r.output_freq_collapsed = arch.freq_after_conv() == 1;
  r.n_params = count_params(arch);
  return r;
}

inline MrfReport compute_mrf(const ModelSpec& spec) { return compute_mrf(spec.arch()); }

inline std::vector<MrfReport> mrf_table() {
  std::vector<MrfReport> rows;
  for (char g = 'A'; g <= 'E'; ++g) {
    for (int i = 0; i < 8; ++i) {
      ModelSpec s;
      s.group = g;
      s.index = i;
      rows.push_back(compute_mrf(s));
    }
  }
  return rows;
}

// ------------------------------------------------------------------ network

struct BatchNormLayer {
  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;

  BatchNormLayer() = default;
  BatchNormLayer(const std::string& prefix, std::size_t c)
      : gamma(prefix + ".gamma", Tensor({c}, 1.0f)),
        beta(prefix + ".beta", Tensor({c}, 0.0f)),
        running_mean({c}, 0.0f),
        running_var({c}, 1.0f) {}

  Tensor infer(const Tensor& x) const {
    return kernels::batchnorm_infer(x, gamma.value, beta.value, running_mean, running_var, kBatchNormEps);
  }

  void infer_relu_inplace(Tensor& x) const {
    kernels::batchnorm_relu_infer_inplace(x, gamma.value, beta.value, running_mean, running_var, kBatchNormEps);
  }

  Var train(Tape& tape, Var x, bool update_running) {
    kernels::BatchStats st;
    Var out = ad::batchnorm_train(tape, x, tape.parameter(gamma), tape.parameter(beta), kBatchNormEps, &st);
    if (update_running) {
      for (std::size_t c = 0; c < running_mean.size(); ++c) {
        running_mean[c] = static_cast<float>(kBatchNormMomentum * running_mean[c] +
                                             (1.0 - kBatchNormMomentum) * st.mean[c]);
        running_var[c] = static_cast<float>(kBatchNormMomentum * running_var[c] +
                                            (1.0 - kBatchNormMomentum) * st.var[c]);
      }
    }
    return out;
  }
};

struct ConvLayer {
  Parameter kernel;
  Parameter bias;
};

struct Conv2dBlock {
  std::array<ConvLayer, 2> conv;
  std::array<BatchNormLayer, 2> bn;
  std::size_t pool_t = 2;
  std::size_t pool_f = 2;
};

struct HeadLayer {
  ConvLayer conv;
  BatchNormLayer bn;
};

class Network {
 public:
  Network() = default;

  Network(ArchConfig arch, std::uint64_t seed) : arch_(std::move(arch)) {
    arch_.validate();
    std::mt19937_64 rng(seed);
    std::size_t cin = 1;
    for (std::size_t i = 0; i < arch_.blocks.size(); ++i) {
      const auto& bc = arch_.blocks[i];
      const std::size_t kt = bc.time_active ? 3 : 1;
      Conv2dBlock blk;
      blk.pool_t = bc.time_active ? 2 : 1;
      blk.pool_f = 2;
      for (std::size_t j = 0; j < 2; ++j) {
        const std::string p = "block" + std::to_string(i) + ".conv" + std::to_string(j);
        const std::size_t in_c = j == 0 ? cin : bc.channels;
        blk.conv[j].kernel = Parameter(p + ".kernel", Tensor({kt, 3, in_c, bc.channels}));
        blk.conv[j].bias = Parameter(p + ".bias", Tensor({bc.channels}));
        glorot_uniform(blk.conv[j].kernel.value, kt * 3 * in_c, kt * 3 * bc.channels, rng);
        blk.bn[j] = BatchNormLayer("block" + std::to_string(i) + ".bn" + std::to_string(j), bc.channels);
      }
      blocks_.push_back(std::move(blk));
      cin = bc.channels;
    }
    std::size_t width = arch_.unwrap_width();
    for (std::size_t k = 0; k < 2; ++k) {
      const std::string p = "head" + std::to_string(k);
      HeadLayer h;
      h.conv.kernel = Parameter(p + ".kernel", Tensor({width, arch_.head_channels}));
      h.conv.bias = Parameter(p + ".bias", Tensor({arch_.head_channels}));
      glorot_uniform(h.conv.kernel.value, width, arch_.head_channels, rng);
      h.bn = BatchNormLayer(p + ".bn", arch_.head_channels);
      head_.push_back(std::move(h));
      width = arch_.head_channels;
    }
    output_.kernel = Parameter("output.kernel", Tensor({width, arch_.n_classes}));
    output_.bias = Parameter("output.bias", Tensor({arch_.n_classes}));
    glorot_uniform(output_.kernel.value, width, arch_.n_classes, rng);
  }

  explicit Network(const ModelSpec& spec, std::uint64_t seed = 0) : Network(spec.arch(), seed) {}

  const ArchConfig& arch() const { return arch_; }

  std::vector<Parameter*> parameters() { return collect_parameters<Parameter>(*this); }
  std::vector<const Parameter*> parameters() const { return collect_parameters<const Parameter>(*this); }

  // Visits every stored tensor as fn(name, tensor, trainable): parameters
  // followed by their batch-norm running statistics, in a fixed order.
  template <typename Fn>
  void visit_tensors(Fn&& fn) {
    visit_tensors_impl(*this, fn);
  }
  template <typename Fn>
  void visit_tensors(Fn&& fn) const {
    visit_tensors_impl(*this, fn);
  }

  // Sum of sizes over the parameter tensors actually held.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Parameter* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (Parameter* p : parameters()) p->zero_grad();
  }

  // Input [N, T, F] or [N, T, F, 1]; output [N, T_out, n_classes] in (0, 1).
  // threads > 1 splits the batch across worker threads.
  Tensor infer(const Tensor& x, unsigned threads = 1) const {
    Tensor in = as_input(x);
    const std::size_t n = in.dim(0);
    if (threads <= 1 || n <= 1) return infer_batch(in);
    const std::size_t per = in.size() / n;
    std::vector<Tensor> outs(n);
    kernels::parallel_for(n, threads, [&](std::size_t s) {
      Tensor one({1, in.dim(1), in.dim(2), 1},
                 std::vector<float>(in.data() + s * per, in.data() + (s + 1) * per));
      outs[s] = infer_batch(one);
    });
    Shape shape = outs[0].shape();
    shape[0] = n;
    Tensor out(shape);
    const std::size_t o_per = outs[0].size();
    for (std::size_t s = 0; s < n; ++s) std::copy_n(outs[s].data(), o_per, out.data() + s * o_per);
    return out;
  }

  // Training-mode forward on the tape (batch statistics in batch norm).
  Var forward_train(Tape& tape, const Tensor& x, bool update_running = true) {
    Var h = tape.constant(as_input(x));
    for (auto& b : blocks_) {
      for (std::size_t j = 0; j < 2; ++j) {
        h = ad::conv2d(tape, h, tape.parameter(b.conv[j].kernel), tape.parameter(b.conv[j].bias));
        h = b.bn[j].train(tape, h, update_running);
        h = ad::relu(tape, h);
      }
      h = ad::maxpool2d(tape, h, b.pool_t, b.pool_f);
    }
    h = ad::frequency_unwrap(tape, h);
    for (auto& l : head_) {
      h = ad::conv1d_k1(tape, h, tape.parameter(l.conv.kernel), tape.parameter(l.conv.bias));
      h = l.bn.train(tape, h, update_running);
      h = ad::relu(tape, h);
    }
    if (arch_.time_avgpool) h = ad::avgpool_time(tape, h);
    h = ad::conv1d_k1(tape, h, tape.parameter(output_.kernel), tape.parameter(output_.bias));
    return ad::sigmoid(tape, h);
  }

 private:
  template <typename P, typename Self>
  static std::vector<P*> collect_parameters(Self& self) {
    std::vector<P*> out;
    auto conv = [&](auto& layer) {
      out.push_back(&layer.kernel);
      out.push_back(&layer.bias);
    };
    auto bn = [&](auto& layer) {
      out.push_back(&layer.gamma);
      out.push_back(&layer.beta);
    };
    for (auto& b : self.blocks_) {
      for (std::size_t j = 0; j < 2; ++j) {
        conv(b.conv[j]);
        bn(b.bn[j]);
      }
    }
    for (auto& h : self.head_) {
      conv(h.conv);
      bn(h.bn);
    }
    conv(self.output_);
    return out;
  }

  template <typename Self, typename Fn>
  static void visit_tensors_impl(Self& self, Fn& fn) {
    auto conv = [&](auto& layer) {
      fn(layer.kernel.name, layer.kernel.value, true);
      fn(layer.bias.name, layer.bias.value, true);
    };
    auto bn = [&](auto& layer) {
      const std::string prefix = layer.gamma.name.substr(0, layer.gamma.name.rfind('.'));
      fn(layer.gamma.name, layer.gamma.value, true);
      fn(layer.beta.name, layer.beta.value, true);
      fn(prefix + ".running_mean", layer.running_mean, false);
      fn(prefix + ".running_var", layer.running_var, false);
    };
    for (auto& b : self.blocks_) {
      for (std::size_t j = 0; j < 2; ++j) {
        conv(b.conv[j]);
        bn(b.bn[j]);
      }
    }
    for (auto& h : self.head_) {
      conv(h.conv);
      bn(h.bn);
    }
    conv(self.output_);
  }

  Tensor as_input(const Tensor& x) const {
    Tensor in = x.rank() == 3 ? x.reshaped({x.dim(0), x.dim(1), x.dim(2), 1}) : x;
    if (in.rank() != 4 || in.dim(1) != arch_.input_time || in.dim(2) != arch_.input_freq || in.dim(3) != 1) {
      throw ShapeError("network " + arch_.name + " expects input [N," + std::to_string(arch_.input_time) + "," +
                       std::to_string(arch_.input_freq) + "], got " + shape_str(x.shape()));
    }
    return in;
  }

  Tensor infer_batch(Tensor h) const {
    for (const auto& b : blocks_) {
      for (std::size_t j = 0; j < 2; ++j) {
        h = kernels::conv2d_forward(h, b.conv[j].kernel.value, b.conv[j].bias.value);
        b.bn[j].infer_relu_inplace(h);
      }
      h = kernels::maxpool2d_forward(h, b.pool_t, b.pool_f);
    }
    h = kernels::frequency_unwrap(h);
    for (const auto& l : head_) {
      h = kernels::conv1d_k1_forward(h, l.conv.kernel.value, l.conv.bias.value);
      l.bn.infer_relu_inplace(h);
    }
    if (arch_.time_avgpool) h = kernels::avgpool_time_forward(h);
    h = kernels::conv1d_k1_forward(h, output_.kernel.value, output_.bias.value);
    return kernels::sigmoid_forward(h);
  }

  ArchConfig arch_;
  std::vector<Conv2dBlock> blocks_;
  std::vector<HeadLayer> head_;
  ConvLayer output_;
};

}  // namespace simpfu
