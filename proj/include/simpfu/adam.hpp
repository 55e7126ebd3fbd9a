#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "simpfu/tape.hpp"

namespace simpfu {

// Adam with inverse-time learning-rate decay: lr_t = lr0 / (1 + decay * t),
// t counted in optimizer steps.
struct AdamState {
  double lr0 = 0.001;
  double decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  double lr_at(std::uint64_t step) const { return lr0 / (1.0 + decay * static_cast<double>(step)); }
};

inline void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam state does not match parameter list");
  ++state.t;
  const double lr = state.lr_at(state.t);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (p.grad.shape() != p.value.shape() || m.shape() != p.value.shape()) {
      throw ShapeError("adam shape mismatch for parameter " + p.name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double step = lr * (mi / bc1) / (std::sqrt(vi / bc2) + state.epsilon);
      p.value[i] = static_cast<float>(p.value[i] - step);
    }
  }
}

// Uniform Glorot initialization, limit sqrt(6 / (fan_in + fan_out)).
inline void glorot_uniform(Tensor& w, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  // Mapping raw 53-bit draws keeps weights identical across standard libraries.
  for (float& x : w.span()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    x = static_cast<float>((2.0 * u - 1.0) * limit);
  }
}

}  // namespace simpfu
