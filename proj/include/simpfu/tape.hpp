#pragma once

// Reverse-mode differentiation over the kernels in kernels.hpp.
//
// A Tape is an append-only list of nodes. Nodes are created in evaluation
// order, so the reverse of creation order is a valid reverse topological
// order and backward() visits each node exactly once.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "simpfu/kernels.hpp"
#include "simpfu/tensor.hpp"

namespace simpfu {

// Trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor(value.shape()); }
};

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Var constant(Tensor value) { return push(std::move(value), nullptr, false); }

  // Leaf bound to a parameter; gradients accumulate into param.grad.
  Var parameter(Parameter& param) {
    Node node;
    node.param = &param;
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  Var push(Tensor value, Backward backward, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.backward = std::move(backward);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  const Tensor& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.param ? n.param->value : n.value;
  }

  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient accumulated so far for v (empty if none reached it).
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }

  void accumulate(Var v, const Tensor& g) {
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Seeds d(root)/d(root) = 1 for a scalar root and propagates.
  void backward(Var root) {
    Node& r = nodes_.at(root.id);
    const Tensor& rv = value(root);
    if (rv.size() != 1) throw ShapeError("backward() root must be a scalar");
    r.grad = Tensor(rv.shape(), 1.0f);
    visits_ = 0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      ++visits_;
      if (n.grad.empty()) continue;
      if (n.param) {
        n.param->grad += n.grad;
      } else if (n.backward) {
        n.backward(*this, n.grad);
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

// Recorded operations. Each mirrors a kernel and registers its backward.
namespace ad {

inline bool any_grad(const Tape& tape, std::initializer_list<Var> vars) {
  for (Var v : vars)
    if (tape.requires_grad(v)) return true;
  return false;
}

inline Var conv2d(Tape& tape, Var x, Var kernel, Var bias) {
  Tensor out = kernels::conv2d_forward(tape.value(x), tape.value(kernel), tape.value(bias));
  const bool rg = any_grad(tape, {x, kernel, bias});
  return tape.push(std::move(out),
                   [x, kernel, bias](Tape& t, const Tensor& g) {
                     auto grads = kernels::conv2d_backward(t.value(x), t.value(kernel), g,
                                                           t.requires_grad(x));
                     if (t.requires_grad(x)) t.accumulate(x, grads.dx);
                     t.accumulate(kernel, grads.dkernel);
                     t.accumulate(bias, grads.dbias);
                   },
                   rg);
}

inline Var conv1d_k1(Tape& tape, Var x, Var kernel, Var bias) {
  Tensor out = kernels::conv1d_k1_forward(tape.value(x), tape.value(kernel), tape.value(bias));
  const bool rg = any_grad(tape, {x, kernel, bias});
  return tape.push(std::move(out),
                   [x, kernel, bias](Tape& t, const Tensor& g) {
                     auto grads = kernels::conv1d_k1_backward(t.value(x), t.value(kernel), g,
                                                              t.requires_grad(x));
                     if (t.requires_grad(x)) t.accumulate(x, grads.dx);
                     t.accumulate(kernel, grads.dkernel);
                     t.accumulate(bias, grads.dbias);
                   },
                   rg);
}

inline Var maxpool2d(Tape& tape, Var x, std::size_t pt, std::size_t pf) {
  auto argmax = std::make_shared<std::vector<std::uint32_t>>();
  Tensor out = kernels::maxpool2d_forward(tape.value(x), pt, pf, argmax.get());
  Shape in_shape = tape.value(x).shape();
  return tape.push(std::move(out),
                   [x, argmax, in_shape](Tape& t, const Tensor& g) {
                     t.accumulate(x, kernels::maxpool2d_backward(in_shape, *argmax, g));
                   },
                   tape.requires_grad(x));
}

// Training-mode batch normalization over all axes but the last. The batch
// statistics are written to *stats so the caller can update running values.
inline Var batchnorm_train(Tape& tape, Var x, Var gamma, Var beta, double eps,
                           kernels::BatchStats* stats = nullptr) {
  auto cache = std::make_shared<kernels::BatchNormCache>();
  kernels::BatchStats st = kernels::channel_stats(tape.value(x));
  Tensor out = kernels::batchnorm_train_forward(tape.value(x), tape.value(gamma),
                                                tape.value(beta), eps, st, cache.get());
  if (stats) *stats = std::move(st);
  const bool rg = any_grad(tape, {x, gamma, beta});
  return tape.push(std::move(out),
                   [x, gamma, beta, cache](Tape& t, const Tensor& g) {
                     auto grads = kernels::batchnorm_train_backward(*cache, t.value(gamma), g);
                     t.accumulate(x, grads.dx);
                     t.accumulate(gamma, grads.dgamma);
                     t.accumulate(beta, grads.dbeta);
                   },
                   rg);
}

inline Var relu(Tape& tape, Var x) {
  return tape.push(kernels::relu_forward(tape.value(x)),
                   [x](Tape& t, const Tensor& g) {
                     t.accumulate(x, kernels::relu_backward(t.value(x), g));
                   },
                   tape.requires_grad(x));
}

inline Var sigmoid(Tape& tape, Var x) {
  Tensor y = kernels::sigmoid_forward(tape.value(x));
  auto saved = std::make_shared<Tensor>(y);
  return tape.push(std::move(y),
                   [x, saved](Tape& t, const Tensor& g) {
                     t.accumulate(x, kernels::sigmoid_backward(*saved, g));
                   },
                   tape.requires_grad(x));
}

inline Var frequency_unwrap(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  const std::size_t f = xv.dim(2), c = xv.dim(3);
  return tape.push(kernels::frequency_unwrap(xv),
                   [x, f, c](Tape& t, const Tensor& g) {
                     t.accumulate(x, kernels::frequency_rewrap(g, f, c));
                   },
                   tape.requires_grad(x));
}

inline Var avgpool_time(Tape& tape, Var x) {
  Shape in_shape = tape.value(x).shape();
  return tape.push(kernels::avgpool_time_forward(tape.value(x)),
                   [x, in_shape](Tape& t, const Tensor& g) {
                     t.accumulate(x, kernels::avgpool_time_backward(in_shape, g));
                   },
                   tape.requires_grad(x));
}

// Mean binary cross-entropy against a constant target; returns a scalar node.
inline Var bce(Tape& tape, Var pred, const Tensor& target) {
  const double loss = kernels::bce_forward(tape.value(pred), target);
  auto tgt = std::make_shared<Tensor>(target);
  return tape.push(Tensor({1}, {static_cast<float>(loss)}),
                   [pred, tgt](Tape& t, const Tensor& g) {
                     t.accumulate(pred, kernels::bce_backward(t.value(pred), *tgt, g[0]));
                   },
                   tape.requires_grad(pred));
}

// Sum of all elements; used by gradient checks.
inline Var sum(Tape& tape, Var x) {
  double acc = 0.0;
  for (float v : tape.value(x).span()) acc += v;
  Shape in_shape = tape.value(x).shape();
  return tape.push(Tensor({1}, {static_cast<float>(acc)}),
                   [x, in_shape](Tape& t, const Tensor& g) {
                     t.accumulate(x, Tensor(in_shape, g[0]));
                   },
                   tape.requires_grad(x));
}

// Weighted sum sum_i w_i x_i with constant weights; gives gradient checks a
// non-uniform upstream gradient.
inline Var dot(Tape& tape, Var x, const Tensor& weights) {
  const Tensor& xv = tape.value(x);
  if (xv.shape() != weights.shape()) throw ShapeError("dot shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += static_cast<double>(xv[i]) * weights[i];
  auto w = std::make_shared<Tensor>(weights);
  return tape.push(Tensor({1}, {static_cast<float>(acc)}),
                   [x, w](Tape& t, const Tensor& g) {
                     Tensor dx(w->shape());
                     for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = (*w)[i] * g[0];
                     t.accumulate(x, dx);
                   },
                   tape.requires_grad(x));
}

}  // namespace ad
}  // namespace simpfu
