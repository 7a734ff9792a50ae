#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cadmr/matrix.hpp"
#include "cadmr/rng.hpp"

namespace cadmr {

// A learnable tensor. The gradient accumulator has the same shape as the
// value and is zeroed at the start of each optimizer step; backward() calls
// accumulate into it, so repeated backward passes without zeroing add up.
template <class S>
struct Parameter {
  Matrix<S> value;
  Matrix<S> grad;
  std::string name;

  Parameter() = default;
  Parameter(Matrix<S> v, std::string n)
      : value(std::move(v)), grad(Matrix<S>::Zero(value.rows(), value.cols())), name(std::move(n)) {}

  void zero_grad() { grad.setZero(); }
};

// One recorded operation result. Creation order on the tape is a valid
// topological order, so backward is a single reverse sweep.
template <class S>
struct Node {
  Matrix<S> value;
  Matrix<S> grad;
  bool needs_grad = false;
  std::function<void(Node<S>&)> backward;

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
};

// Define-by-run tape of matrix-valued nodes with hand-written adjoints.
// Every op validates shapes, checks its output for NaN/Inf, and records a
// closure that pushes the output adjoint into its inputs.
template <class S>
class Tape {
 public:
  using Nd = Node<S>;

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  Nd* constant(Matrix<S> v, const char* label = "constant") {
    ensure_finite(v, label);
    Nd* n = fresh();
    n->value = std::move(v);
    n->needs_grad = false;
    return n;
  }

  // Leaf bound to a Parameter; backward flushes into the parameter's
  // gradient accumulator.
  Nd* leaf(Parameter<S>& p) {
    ensure_finite(p.value, p.name.c_str());
    Nd* n = fresh();
    n->value = p.value;
    n->needs_grad = true;
    Parameter<S>* pp = &p;
    n->backward = [pp](Nd& self) { pp->grad += self.grad; };
    return n;
  }

  Nd* matmul(Nd* a, Nd* b) {
    check(a->cols() == b->rows(),
          "matmul: inner dimensions disagree (" + shape_str(a->value) + " vs " + shape_str(b->value) + ")");
    Nd* n = make(a->value * b->value, "matmul", {a, b});
    if (!n->needs_grad) return n;
    n->backward = [this, a, b](Nd& self) {
      // noalias: grads never alias the operand values, and the direct GEMM
      // accumulation keeps results bit-identical to a plain assignment.
      if (a->needs_grad) grad_of(a).noalias() += self.grad * b->value.transpose();
      if (b->needs_grad) grad_of(b).noalias() += a->value.transpose() * self.grad;
    };
    return n;
  }

  Nd* transpose(Nd* a) {
    Nd* n = make(a->value.transpose(), "transpose", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a](Nd& self) { grad_of(a) += self.grad.transpose(); };
    return n;
  }

  Nd* add(Nd* a, Nd* b) {
    check(a->rows() == b->rows() && a->cols() == b->cols(), "add: shape mismatch");
    Nd* n = make(a->value + b->value, "add", {a, b});
    if (!n->needs_grad) return n;
    n->backward = [this, a, b](Nd& self) {
      if (a->needs_grad) grad_of(a) += self.grad;
      if (b->needs_grad) grad_of(b) += self.grad;
    };
    return n;
  }

  Nd* sub(Nd* a, Nd* b) {
    check(a->rows() == b->rows() && a->cols() == b->cols(), "sub: shape mismatch");
    Nd* n = make(a->value - b->value, "sub", {a, b});
    if (!n->needs_grad) return n;
    n->backward = [this, a, b](Nd& self) {
      if (a->needs_grad) grad_of(a) += self.grad;
      if (b->needs_grad) grad_of(b) -= self.grad;
    };
    return n;
  }

  Nd* hadamard(Nd* a, Nd* b) {
    check(a->rows() == b->rows() && a->cols() == b->cols(), "hadamard: shape mismatch");
    Nd* n = make((a->value.array() * b->value.array()).matrix(), "hadamard", {a, b});
    if (!n->needs_grad) return n;
    n->backward = [this, a, b](Nd& self) {
      if (a->needs_grad) grad_of(a).array() += self.grad.array() * b->value.array();
      if (b->needs_grad) grad_of(b).array() += self.grad.array() * a->value.array();
    };
    return n;
  }

  Nd* scale(Nd* a, S c) {
    Nd* n = make(a->value * c, "scale", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a, c](Nd& self) { grad_of(a) += self.grad * c; };
    return n;
  }

  Nd* add_scalar(Nd* a, S c) {
    Nd* n = make((a->value.array() + c).matrix(), "add_scalar", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a](Nd& self) { grad_of(a) += self.grad; };
    return n;
  }

  // x (N x D) + r (1 x D), r broadcast over rows. The bias-add.
  Nd* add_row_broadcast(Nd* x, Nd* r) {
    check(r->rows() == 1 && r->cols() == x->cols(), "add_row_broadcast: bias must be 1 x cols(x)");
    Nd* n = make(x->value.rowwise() + r->value.row(0), "add_row_broadcast", {x, r});
    if (!n->needs_grad) return n;
    n->backward = [this, x, r](Nd& self) {
      if (x->needs_grad) grad_of(x) += self.grad;
      if (r->needs_grad) grad_of(r).row(0) += self.grad.colwise().sum();
    };
    return n;
  }

  // x (N x D) + c (N x 1), c broadcast over columns.
  Nd* add_col_broadcast(Nd* x, Nd* c) {
    check(c->cols() == 1 && c->rows() == x->rows(), "add_col_broadcast: bias must be rows(x) x 1");
    Nd* n = make(x->value.colwise() + c->value.col(0), "add_col_broadcast", {x, c});
    if (!n->needs_grad) return n;
    n->backward = [this, x, c](Nd& self) {
      if (x->needs_grad) grad_of(x) += self.grad;
      if (c->needs_grad) grad_of(c).col(0) += self.grad.rowwise().sum();
    };
    return n;
  }

  // y[i,d] = x[i,d] / r[d] with r (1 x D). Used for column standardization;
  // gradient flows into the divisor as well.
  Nd* div_row_broadcast(Nd* x, Nd* r) {
    check(r->rows() == 1 && r->cols() == x->cols(), "div_row_broadcast: divisor must be 1 x cols(x)");
    Matrix<S> y = x->value.array().rowwise() / r->value.row(0).array();
    Nd* n = make(std::move(y), "div_row_broadcast", {x, r});
    if (!n->needs_grad) return n;
    n->backward = [this, x, r](Nd& self) {
      if (x->needs_grad)
        grad_of(x).array() += self.grad.array().rowwise() / r->value.row(0).array();
      if (r->needs_grad) {
        Eigen::Array<S, 1, Eigen::Dynamic> num =
            (self.grad.array() * x->value.array()).colwise().sum();
        grad_of(r).row(0).array() -= num / (r->value.row(0).array() * r->value.row(0).array());
      }
    };
    return n;
  }

  Nd* sigmoid(Nd* a) {
    Matrix<S> y = a->value.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
    Nd* n = make(std::move(y), "sigmoid", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a](Nd& self) {
      grad_of(a).array() += self.grad.array() * self.value.array() * (S(1) - self.value.array());
    };
    return n;
  }

  Nd* relu(Nd* a) {
    Nd* n = make(a->value.cwiseMax(S(0)), "relu", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a](Nd& self) {
      grad_of(a).array() +=
          self.grad.array() * (a->value.array() > S(0)).template cast<S>();
    };
    return n;
  }

  Nd* square(Nd* a) {
    Nd* n = make(a->value.array().square().matrix(), "square", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a](Nd& self) {
      grad_of(a).array() += S(2) * self.grad.array() * a->value.array();
    };
    return n;
  }

  // Elementwise sqrt; inputs must be >= 0. The subgradient at 0 is taken as
  // 0 so that clamped-away standard deviations cannot emit NaN.
  Nd* sqrt_elem(Nd* a) {
    Nd* n = make(a->value.cwiseMax(S(0)).cwiseSqrt(), "sqrt", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a](Nd& self) {
      grad_of(a).array() += (self.value.array() > S(0))
                                .select(self.grad.array() / (S(2) * self.value.array()),
                                        Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>::Zero(
                                            self.value.rows(), self.value.cols()));
    };
    return n;
  }

  // max(x, c); gradient passes only where x > c.
  Nd* clamp_min(Nd* a, S c) {
    Nd* n = make(a->value.cwiseMax(c), "clamp_min", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a, c](Nd& self) {
      grad_of(a).array() +=
          self.grad.array() * (a->value.array() > c).template cast<S>();
    };
    return n;
  }

  Nd* sum_all(Nd* a) {
    Matrix<S> y(1, 1);
    y(0, 0) = a->value.sum();
    Nd* n = make(std::move(y), "sum", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a](Nd& self) {
      grad_of(a).array() += self.grad(0, 0);
    };
    return n;
  }

  Nd* row_sums(Nd* a) {
    Matrix<S> y = a->value.rowwise().sum();
    Nd* n = make(std::move(y), "row_sums", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a](Nd& self) {
      grad_of(a).colwise() += self.grad.col(0);
    };
    return n;
  }

  Nd* col_means(Nd* a) {
    const S inv = S(1) / static_cast<S>(a->rows());
    Matrix<S> y = a->value.colwise().sum() * inv;
    Nd* n = make(std::move(y), "col_means", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a, inv](Nd& self) {
      grad_of(a).rowwise() += (self.grad.row(0) * inv).row(0);
    };
    return n;
  }

  // Per-row normalization (x - mean) / sqrt(var + eps); population variance,
  // no learned scale or shift.
  Nd* layer_norm(Nd* a, S eps) {
    const Eigen::Index rows = a->rows(), cols = a->cols();
    check(cols >= 1, "layer_norm: empty rows");
    Matrix<S> y(rows, cols);
    Matrix<S> inv_std(rows, 1);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const S mean = a->value.row(i).mean();
      const S var = (a->value.row(i).array() - mean).square().sum() / static_cast<S>(cols);
      const S s = std::sqrt(var + eps);
      inv_std(i, 0) = S(1) / s;
      y.row(i) = (a->value.row(i).array() - mean) / s;
    }
    Nd* n = make(std::move(y), "layer_norm", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a, inv_std, cols](Nd& self) {
      // dx = (g - mean(g) - y * mean(g . y)) / s, rowwise
      Matrix<S>& ga = grad_of(a);
      for (Eigen::Index i = 0; i < self.value.rows(); ++i) {
        const S mg = self.grad.row(i).mean();
        const S mgy = (self.grad.row(i).array() * self.value.row(i).array()).sum() /
                      static_cast<S>(cols);
        ga.row(i).array() += (self.grad.row(i).array() - mg - self.value.row(i).array() * mgy) *
                             inv_std(i, 0);
      }
    };
    return n;
  }

  // Row-wise softmax with per-row max subtraction.
  Nd* softmax_rows(Nd* a) {
    Matrix<S> y(a->rows(), a->cols());
    for (Eigen::Index i = 0; i < a->rows(); ++i) {
      const S m = a->value.row(i).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> e = (a->value.row(i).array() - m).exp();
      y.row(i) = e / e.sum();
    }
    Nd* n = make(std::move(y), "softmax", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a](Nd& self) {
      Matrix<S>& ga = grad_of(a);
      for (Eigen::Index i = 0; i < self.value.rows(); ++i) {
        const S dot = (self.grad.row(i).array() * self.value.row(i).array()).sum();
        ga.row(i).array() +=
            self.value.row(i).array() * (self.grad.row(i).array() - dot);
      }
    };
    return n;
  }

  // Inverted dropout: zero with probability `rate`, scale survivors by
  // 1/(1-rate). Identity in eval mode. One uniform draw per element, in
  // row-major order, so the stream position advances deterministically.
  Nd* dropout(Nd* a, double rate, RngStream& rng, bool training) {
    check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
    if (!training || rate == 0.0) return a;
    const S keep_scale = S(1.0 / (1.0 - rate));
    Matrix<S> mask(a->rows(), a->cols());
    for (Eigen::Index i = 0; i < a->rows(); ++i)
      for (Eigen::Index j = 0; j < a->cols(); ++j)
        mask(i, j) = rng.uniform() >= rate ? keep_scale : S(0);
    Nd* n = make((a->value.array() * mask.array()).matrix(), "dropout", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a, mask](Nd& self) {
      grad_of(a).array() += self.grad.array() * mask.array();
    };
    return n;
  }

  // Concatenate along the feature (column) axis.
  Nd* concat_cols(const std::vector<Nd*>& parts) {
    check(!parts.empty(), "concat_cols: no inputs");
    const Eigen::Index rows = parts[0]->rows();
    Eigen::Index cols = 0;
    for (Nd* p : parts) {
      check(p->rows() == rows, "concat_cols: row mismatch");
      cols += p->cols();
    }
    Matrix<S> y(rows, cols);
    Eigen::Index off = 0;
    for (Nd* p : parts) {
      y.middleCols(off, p->cols()) = p->value;
      off += p->cols();
    }
    Nd* n = make(std::move(y), "concat_cols", parts);
    if (!n->needs_grad) return n;
    std::vector<Nd*> ps = parts;
    n->backward = [this, ps](Nd& self) {
      Eigen::Index off = 0;
      for (Nd* p : ps) {
        if (p->needs_grad) grad_of(p) += self.grad.middleCols(off, p->cols());
        off += p->cols();
      }
    };
    return n;
  }

  Nd* slice_cols(Nd* a, Eigen::Index start, Eigen::Index width) {
    check(start >= 0 && width >= 1 && start + width <= a->cols(), "slice_cols: range out of bounds");
    Nd* n = make(a->value.middleCols(start, width), "slice_cols", {a});
    if (!n->needs_grad) return n;
    n->backward = [this, a, start, width](Nd& self) {
      grad_of(a).middleCols(start, width) += self.grad;
    };
    return n;
  }

  // Reverse sweep from a scalar loss. Node gradients are reset per call;
  // Parameter accumulators are not (callers zero them at step start).
  void backward(Nd* loss) {
    check(loss->rows() == 1 && loss->cols() == 1, "backward: loss must be a 1x1 scalar");
    for (auto& n : nodes_) {
      if (n->needs_grad) n->grad.setZero(n->value.rows(), n->value.cols());
    }
    loss->grad.setOnes(1, 1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Nd& n = **it;
      if (n.needs_grad && n.backward) n.backward(n);
    }
  }

 private:
  Nd* fresh() {
    nodes_.push_back(std::make_unique<Nd>());
    return nodes_.back().get();
  }

  Nd* make(Matrix<S> value, const char* label, const std::vector<Nd*>& inputs) {
    ensure_finite(value, label);
    Nd* n = fresh();
    n->value = std::move(value);
    for (Nd* in : inputs) n->needs_grad = n->needs_grad || in->needs_grad;
    return n;
  }

  Matrix<S>& grad_of(Nd* n) { return n->grad; }

  std::vector<std::unique_ptr<Nd>> nodes_;
};

// Seeded uniform init in [-a, a], a = sqrt(6 / (fan_in + fan_out)).
template <class S>
Matrix<S> glorot_uniform(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.uniform(-a, a));
  return m;
}

template <class S>
Matrix<S> normal_matrix(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
  Matrix<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.normal());
  return m;
}

}  // namespace cadmr
