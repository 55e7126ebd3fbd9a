#pragma once

// Forward and backward kernels for the layer set used by the networks.
// Layout conventions: 2D activations are [N, T, F, C], 1D activations are
// [N, T, C], conv2d kernels are [kt, kf, Cin, Cout], conv1d kernels are
// [Cin, Cout]. All kernels are pure functions of their arguments.

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "simpfu/tensor.hpp"

namespace simpfu::kernels {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Counts every worker thread the compute core has ever started. Sequential
// inference must leave it untouched.
inline std::atomic<std::size_t>& worker_threads_spawned() {
  static std::atomic<std::size_t> count{0};
  return count;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    worker_threads_spawned().fetch_add(1, std::memory_order_relaxed);
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

// ---------------------------------------------------------------- conv2d

struct Conv2dGrads {
  Tensor dx;
  Tensor dkernel;
  Tensor dbias;
};

namespace detail {

struct Conv2dGeom {
  std::size_t n, t, f, cin, kt, kf, cout, pt, pf, tp, fp, rows;

  Conv2dGeom(const Tensor& x, const Tensor& kernel) {
    require(x.rank() == 4, "conv2d expects input [N,T,F,C], got " + shape_str(x.shape()));
    require(kernel.rank() == 4, "conv2d expects kernel [kt,kf,Cin,Cout]");
    n = x.dim(0);
    t = x.dim(1);
    f = x.dim(2);
    cin = x.dim(3);
    kt = kernel.dim(0);
    kf = kernel.dim(1);
    cout = kernel.dim(3);
    require(kernel.dim(2) == cin, "conv2d channel mismatch: input " + shape_str(x.shape()) +
                                      " kernel " + shape_str(kernel.shape()));
    require(kt % 2 == 1 && kf % 2 == 1, "conv2d same-padding needs odd kernel sizes");
    require(t > 0 && f > 0, "conv2d on empty input");
    pt = (kt - 1) / 2;
    pf = (kf - 1) / 2;
    tp = t + 2 * pt;
    fp = f + 2 * pf;
    // Output rows live in padded-width space; the trailing garbage columns of
    // the last time row are never computed so every tap stays in bounds.
    rows = (t - 1) * fp + f;
  }

  void pad_sample(const float* src, std::vector<float>& dst) const {
    dst.assign(tp * fp * cin, 0.0f);
    for (std::size_t ti = 0; ti < t; ++ti) {
      const float* s = src + ti * f * cin;
      float* d = dst.data() + ((ti + pt) * fp + pf) * cin;
      std::copy(s, s + f * cin, d);
    }
  }
};

}  // namespace detail

inline Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const detail::Conv2dGeom g(x, kernel);
  require(bias.size() == g.cout, "conv2d bias length mismatch");
  Tensor out({g.n, g.t, g.f, g.cout});
  std::vector<float> xp;
  std::vector<float> op;
  for (std::size_t s = 0; s < g.n; ++s) {
    g.pad_sample(x.data() + s * g.t * g.f * g.cin, xp);
    op.assign(g.rows * g.cout, 0.0f);
    MapMat o(op.data(), g.rows, g.cout);
    for (std::size_t a = 0; a < g.kt; ++a) {
      for (std::size_t b = 0; b < g.kf; ++b) {
        ConstMapMat xs(xp.data() + (a * g.fp + b) * g.cin, g.rows, g.cin);
        ConstMapMat w(kernel.data() + (a * g.kf + b) * g.cin * g.cout, g.cin, g.cout);
        o.noalias() += xs * w;
      }
    }
    float* dst = out.data() + s * g.t * g.f * g.cout;
    for (std::size_t ti = 0; ti < g.t; ++ti) {
      for (std::size_t fi = 0; fi < g.f; ++fi) {
        const float* src = op.data() + (ti * g.fp + fi) * g.cout;
        float* d = dst + (ti * g.f + fi) * g.cout;
        for (std::size_t c = 0; c < g.cout; ++c) d[c] = src[c] + bias[c];
      }
    }
  }
  return out;
}

inline Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dout,
                                   bool need_dx = true) {
  const detail::Conv2dGeom g(x, kernel);
  require(dout.shape() == Shape({g.n, g.t, g.f, g.cout}), "conv2d dout shape mismatch");
  Conv2dGrads grads{need_dx ? Tensor(x.shape()) : Tensor(), Tensor(kernel.shape()),
                    Tensor({g.cout})};
  std::vector<double> dbias(g.cout, 0.0);
  std::vector<float> xp;
  std::vector<float> dop;
  std::vector<float> dxp;
  for (std::size_t s = 0; s < g.n; ++s) {
    g.pad_sample(x.data() + s * g.t * g.f * g.cin, xp);
    dop.assign(g.rows * g.cout, 0.0f);
    const float* src = dout.data() + s * g.t * g.f * g.cout;
    for (std::size_t ti = 0; ti < g.t; ++ti) {
      for (std::size_t fi = 0; fi < g.f; ++fi) {
        const float* d = src + (ti * g.f + fi) * g.cout;
        float* o = dop.data() + (ti * g.fp + fi) * g.cout;
        for (std::size_t c = 0; c < g.cout; ++c) {
          o[c] = d[c];
          dbias[c] += d[c];
        }
      }
    }
    ConstMapMat dO(dop.data(), g.rows, g.cout);
    if (need_dx) dxp.assign(g.tp * g.fp * g.cin, 0.0f);
    for (std::size_t a = 0; a < g.kt; ++a) {
      for (std::size_t b = 0; b < g.kf; ++b) {
        const std::size_t in_off = (a * g.fp + b) * g.cin;
        const std::size_t k_off = (a * g.kf + b) * g.cin * g.cout;
        ConstMapMat xs(xp.data() + in_off, g.rows, g.cin);
        MapMat dw(grads.dkernel.data() + k_off, g.cin, g.cout);
        dw.noalias() += xs.transpose() * dO;
        if (need_dx) {
          ConstMapMat w(kernel.data() + k_off, g.cin, g.cout);
          MapMat dxs(dxp.data() + in_off, g.rows, g.cin);
          dxs.noalias() += dO * w.transpose();
        }
      }
    }
    if (need_dx) {
      float* dst = grads.dx.data() + s * g.t * g.f * g.cin;
      for (std::size_t ti = 0; ti < g.t; ++ti) {
        const float* from = dxp.data() + ((ti + g.pt) * g.fp + g.pf) * g.cin;
        std::copy(from, from + g.f * g.cin, dst + ti * g.f * g.cin);
      }
    }
  }
  for (std::size_t c = 0; c < g.cout; ++c) grads.dbias[c] = static_cast<float>(dbias[c]);
  return grads;
}

// ------------------------------------------------------------- conv1d k=1

struct Conv1dGrads {
  Tensor dx;
  Tensor dkernel;
  Tensor dbias;
};

inline Tensor conv1d_k1_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require(x.rank() == 3, "conv1d expects input [N,T,C], got " + shape_str(x.shape()));
  require(kernel.rank() == 2 && kernel.dim(0) == x.dim(2),
          "conv1d kernel " + shape_str(kernel.shape()) + " does not match input " +
              shape_str(x.shape()));
  const std::size_t rows = x.dim(0) * x.dim(1);
  const std::size_t cin = kernel.dim(0);
  const std::size_t cout = kernel.dim(1);
  require(bias.size() == cout, "conv1d bias length mismatch");
  Tensor out({x.dim(0), x.dim(1), cout});
  MapMat o(out.data(), rows, cout);
  o.noalias() = ConstMapMat(x.data(), rows, cin) * ConstMapMat(kernel.data(), cin, cout);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.data(), cout);
  return out;
}

inline Conv1dGrads conv1d_k1_backward(const Tensor& x, const Tensor& kernel, const Tensor& dout,
                                      bool need_dx = true) {
  const std::size_t rows = x.dim(0) * x.dim(1);
  const std::size_t cin = kernel.dim(0);
  const std::size_t cout = kernel.dim(1);
  require(dout.shape() == Shape({x.dim(0), x.dim(1), cout}), "conv1d dout shape mismatch");
  Conv1dGrads grads{need_dx ? Tensor(x.shape()) : Tensor(), Tensor(kernel.shape()),
                    Tensor({cout})};
  ConstMapMat dO(dout.data(), rows, cout);
  MapMat(grads.dkernel.data(), cin, cout).noalias() =
      ConstMapMat(x.data(), rows, cin).transpose() * dO;
  for (std::size_t c = 0; c < cout; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) acc += dout[r * cout + c];
    grads.dbias[c] = static_cast<float>(acc);
  }
  if (need_dx) {
    MapMat(grads.dx.data(), rows, cin).noalias() =
        dO * ConstMapMat(kernel.data(), cin, cout).transpose();
  }
  return grads;
}

// --------------------------------------------------------------- maxpool

// Block-wise max with stride equal to the window. Ties resolve to the first
// element in (time, frequency) scan order.
inline Tensor maxpool2d_forward(const Tensor& x, std::size_t pt, std::size_t pf,
                                std::vector<std::uint32_t>* argmax = nullptr) {
  require(x.rank() == 4, "maxpool2d expects [N,T,F,C]");
  require(pt > 0 && pf > 0, "maxpool2d window must be positive");
  const std::size_t n = x.dim(0), t = x.dim(1), f = x.dim(2), c = x.dim(3);
  require(t % pt == 0 && f % pf == 0, "maxpool2d window " + std::to_string(pt) + "x" +
                                          std::to_string(pf) + " does not divide " +
                                          shape_str(x.shape()));
  const std::size_t to = t / pt, fo = f / pf;
  Tensor out({n, to, fo, c});
  if (argmax) argmax->assign(out.size(), 0);
  std::vector<std::uint32_t> best(c);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < to; ++i) {
      for (std::size_t j = 0; j < fo; ++j) {
        float* o = out.data() + ((s * to + i) * fo + j) * c;
        const std::size_t first = ((s * t + i * pt) * f + j * pf) * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
          o[ch] = x[first + ch];
          best[ch] = static_cast<std::uint32_t>(first + ch);
        }
        for (std::size_t a = 0; a < pt; ++a) {
          for (std::size_t b = 0; b < pf; ++b) {
            if (a == 0 && b == 0) continue;
            const std::size_t base = ((s * t + i * pt + a) * f + j * pf + b) * c;
            const float* xs = x.data() + base;
            for (std::size_t ch = 0; ch < c; ++ch) {
              if (xs[ch] > o[ch]) {
                o[ch] = xs[ch];
                best[ch] = static_cast<std::uint32_t>(base + ch);
              }
            }
          }
        }
        if (argmax) std::copy(best.begin(), best.end(), argmax->begin() + static_cast<std::ptrdiff_t>(o - out.data()));
      }
    }
  }
  return out;
}

inline Tensor maxpool2d_backward(const Shape& in_shape, const std::vector<std::uint32_t>& argmax,
                                 const Tensor& dout) {
  require(argmax.size() == dout.size(), "maxpool2d argmax/dout size mismatch");
  Tensor dx(in_shape);
  for (std::size_t i = 0; i < dout.size(); ++i) dx[argmax[i]] += dout[i];
  return dx;
}

// ------------------------------------------------------------- batchnorm

struct BatchNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;
};

// Per-channel statistics over every axis except the last.
inline BatchStats channel_stats(const Tensor& x) {
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.size() / c;
  BatchStats st{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) st.mean[ch] += x[r * c + ch];
  for (auto& m : st.mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = x[r * c + ch] - st.mean[ch];
      st.var[ch] += d * d;
    }
  }
  for (auto& v : st.var) v /= static_cast<double>(rows);
  return st;
}

inline Tensor batchnorm_train_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                      double eps, const BatchStats& st,
                                      BatchNormCache* cache = nullptr) {
  const std::size_t c = x.shape().back();
  require(gamma.size() == c && beta.size() == c, "batchnorm parameter length mismatch");
  const std::size_t rows = x.size() / c;
  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(st.var[ch] + eps);
  Tensor out(x.shape());
  Tensor xhat(cache ? x.shape() : Shape{});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      const float xh = static_cast<float>((x[i] - st.mean[ch]) * inv_std[ch]);
      if (cache) xhat[i] = xh;
      out[i] = gamma[ch] * xh + beta[ch];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

inline Tensor batchnorm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              const Tensor& running_mean, const Tensor& running_var, double eps) {
  const std::size_t c = x.shape().back();
  require(gamma.size() == c && beta.size() == c && running_mean.size() == c &&
              running_var.size() == c,
          "batchnorm parameter length mismatch");
  std::vector<float> scale(c), shift(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps);
    scale[ch] = static_cast<float>(gamma[ch] * inv);
    shift[ch] = static_cast<float>(beta[ch] - running_mean[ch] * gamma[ch] * inv);
  }
  Tensor out(x.shape());
  const std::size_t rows = x.size() / c;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < c; ++ch)
      out[r * c + ch] = x[r * c + ch] * scale[ch] + shift[ch];
  return out;
}

// Inference batch norm followed by ReLU, in place.
inline void batchnorm_relu_infer_inplace(Tensor& x, const Tensor& gamma, const Tensor& beta,
                                         const Tensor& running_mean, const Tensor& running_var, double eps) {
  const std::size_t c = x.shape().back();
  require(gamma.size() == c && running_mean.size() == c, "batchnorm parameter length mismatch");
  std::vector<float> scale(c), shift(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps);
    scale[ch] = static_cast<float>(gamma[ch] * inv);
    shift[ch] = static_cast<float>(beta[ch] - running_mean[ch] * gamma[ch] * inv);
  }
  const std::size_t rows = x.size() / c;
  float* d = x.data();
  for (std::size_t r = 0; r < rows; ++r, d += c)
    for (std::size_t ch = 0; ch < c; ++ch) d[ch] = std::max(d[ch] * scale[ch] + shift[ch], 0.0f);
}

struct BatchNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};

inline BatchNormGrads batchnorm_train_backward(const BatchNormCache& cache, const Tensor& gamma,
                                               const Tensor& dout) {
  const std::size_t c = gamma.size();
  const std::size_t rows = dout.size() / c;
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      sum_dy[ch] += dout[i];
      sum_dy_xhat[ch] += static_cast<double>(dout[i]) * cache.xhat[i];
    }
  }
  BatchNormGrads g{Tensor(dout.shape()), Tensor({c}), Tensor({c})};
  const double m = static_cast<double>(rows);
  for (std::size_t ch = 0; ch < c; ++ch) {
    g.dgamma[ch] = static_cast<float>(sum_dy_xhat[ch]);
    g.dbeta[ch] = static_cast<float>(sum_dy[ch]);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      const double k = gamma[ch] * cache.inv_std[ch] / m;
      g.dx[i] = static_cast<float>(
          k * (m * dout[i] - sum_dy[ch] - cache.xhat[i] * sum_dy_xhat[ch]));
    }
  }
  return g;
}

// ------------------------------------------------------------ elementwise

inline Tensor relu_forward(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return out;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& dout) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0f ? dout[i] : 0.0f;
  return dx;
}

inline float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

inline Tensor sigmoid_forward(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

inline Tensor sigmoid_backward(const Tensor& y, const Tensor& dout) {
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dout[i] * y[i] * (1.0f - y[i]);
  return dx;
}

// ------------------------------------------------------------- reshaping

// [N,T,F,C] -> [N,T,F*C] with column f*C + c. Row-major storage makes this a
// pure relabelling of the shape.
inline Tensor frequency_unwrap(const Tensor& x) {
  require(x.rank() == 4, "frequency_unwrap expects [N,T,F,C]");
  return x.reshaped({x.dim(0), x.dim(1), x.dim(2) * x.dim(3)});
}

inline Tensor frequency_rewrap(const Tensor& x, std::size_t f, std::size_t c) {
  require(x.rank() == 3 && x.dim(2) == f * c, "frequency_rewrap shape mismatch");
  return x.reshaped({x.dim(0), x.dim(1), f, c});
}

inline Tensor avgpool_time_forward(const Tensor& x) {
  require(x.rank() == 3, "avgpool_time expects [N,T,C]");
  const std::size_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  Tensor out({n, 1, c});
  std::vector<double> acc(c);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += x[(s * t + ti) * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch)
      out[s * c + ch] = static_cast<float>(acc[ch] / static_cast<double>(t));
  }
  return out;
}

inline Tensor avgpool_time_backward(const Shape& in_shape, const Tensor& dout) {
  const std::size_t n = in_shape[0], t = in_shape[1], c = in_shape[2];
  Tensor dx(in_shape);
  const float inv = 1.0f / static_cast<float>(t);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t ch = 0; ch < c; ++ch) dx[(s * t + ti) * c + ch] = dout[s * c + ch] * inv;
  return dx;
}

// ------------------------------------------------------------------ loss

inline constexpr double kBceClamp = 1e-7;

inline double bce_forward(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(), "bce shape mismatch: " + shape_str(pred.shape()) +
                                              " vs " + shape_str(target.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred[i]), kBceClamp, 1.0 - kBceClamp);
    const double y = target[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(pred.size());
}

// Gradient of the mean loss; the clamp is passed straight through.
inline Tensor bce_backward(const Tensor& pred, const Tensor& target, double dloss = 1.0) {
  Tensor dp(pred.shape());
  const double inv_n = dloss / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred[i]), kBceClamp, 1.0 - kBceClamp);
    dp[i] = static_cast<float>((p - target[i]) / (p * (1.0 - p)) * inv_n);
  }
  return dp;
}

}  // namespace simpfu::kernels
