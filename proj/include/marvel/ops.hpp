#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "marvel/tape.hpp"

// Differentiable primitives over tape variables. Each op records a backward
// closure that pulls the upstream gradient into its inputs; shapes are
// validated at record time so a bad graph fails before any math runs.

namespace marvel {

namespace detail {

template <typename S>
void same_tape(Var<S> a, Var<S> b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": inputs on different tapes");
}

inline std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace detail

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::same_tape(a, b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree (" + detail::dims(a.rows(), a.cols()) +
                     " * " + detail::dims(b.rows(), b.cols()) + ")");
  Tape<S>& t = *a.tape;
  MatX<S> out = a.value() * b.value();
  bool rg = a.requires_grad() || b.requires_grad();
  return t.push(std::move(out), rg, [a = a.idx, b = b.idx](Tape<S>& t, int self) {
    const MatX<S>& g = t.grad_ref(self);
    t.accum(a, g * t.value(b).transpose());
    t.accum(b, t.value(a).transpose() * g);
  });
}

template <typename S>
Var<S> transpose(Var<S> a) {
  Tape<S>& t = *a.tape;
  return t.push(a.value().transpose(), a.requires_grad(), [a = a.idx](Tape<S>& t, int self) {
    t.accum(a, t.grad_ref(self).transpose());
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::same_tape(a, b, "add");
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
  Tape<S>& t = *a.tape;
  return t.push(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                [a = a.idx, b = b.idx](Tape<S>& t, int self) {
                  t.accum(a, t.grad_ref(self));
                  t.accum(b, t.grad_ref(self));
                });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::same_tape(a, b, "sub");
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("sub: shape mismatch");
  Tape<S>& t = *a.tape;
  return t.push(a.value() - b.value(), a.requires_grad() || b.requires_grad(),
                [a = a.idx, b = b.idx](Tape<S>& t, int self) {
                  t.accum(a, t.grad_ref(self));
                  t.accum(b, -t.grad_ref(self));
                });
}

// Elementwise product.
template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::same_tape(a, b, "mul");
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("mul: shape mismatch");
  Tape<S>& t = *a.tape;
  return t.push(a.value().cwiseProduct(b.value()), a.requires_grad() || b.requires_grad(),
                [a = a.idx, b = b.idx](Tape<S>& t, int self) {
                  const MatX<S>& g = t.grad_ref(self);
                  t.accum(a, g.cwiseProduct(t.value(b)));
                  t.accum(b, g.cwiseProduct(t.value(a)));
                });
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
  Tape<S>& t = *a.tape;
  return t.push(a.value() * c, a.requires_grad(), [a = a.idx, c](Tape<S>& t, int self) {
    t.accum(a, t.grad_ref(self) * c);
  });
}

template <typename S>
Var<S> add_const(Var<S> a, S c) {
  Tape<S>& t = *a.tape;
  return t.push((a.value().array() + c).matrix(), a.requires_grad(),
                [a = a.idx](Tape<S>& t, int self) { t.accum(a, t.grad_ref(self)); });
}

template <typename S>
Var<S> neg(Var<S> a) {
  return scale(a, S(-1));
}

template <typename S>
Var<S> sum(Var<S> a) {
  Tape<S>& t = *a.tape;
  MatX<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), a.requires_grad(), [a = a.idx](Tape<S>& t, int self) {
    S g = t.grad_ref(self)(0, 0);
    t.accum(a, MatX<S>::Constant(t.value(a).rows(), t.value(a).cols(), g));
  });
}

template <typename S>
Var<S> mean(Var<S> a) {
  return scale(sum(a), S(1) / static_cast<S>(a.value().size()));
}

// Per-row mean, n x m -> n x 1.
template <typename S>
Var<S> row_mean(Var<S> a) {
  Tape<S>& t = *a.tape;
  if (a.cols() == 0) throw ShapeError("row_mean: empty rows");
  MatX<S> out = a.value().rowwise().mean();
  return t.push(std::move(out), a.requires_grad(), [a = a.idx](Tape<S>& t, int self) {
    const MatX<S>& g = t.grad_ref(self);
    Eigen::Index m = t.value(a).cols();
    t.accum(a, (g / static_cast<S>(m)).replicate(1, m));
  });
}

// X (n x m) + broadcast row vector b (1 x m).
template <typename S>
Var<S> add_rowvec(Var<S> x, Var<S> b) {
  detail::same_tape(x, b, "add_rowvec");
  if (b.rows() != 1 || b.cols() != x.cols()) throw ShapeError("add_rowvec: bad bias shape");
  Tape<S>& t = *x.tape;
  MatX<S> out = x.value();
  out.rowwise() += b.value().row(0);
  return t.push(std::move(out), x.requires_grad() || b.requires_grad(),
                [x = x.idx, b = b.idx](Tape<S>& t, int self) {
                  const MatX<S>& g = t.grad_ref(self);
                  t.accum(x, g);
                  t.accum(b, g.colwise().sum());
                });
}

// Row i of X scaled by s(i); s is n x 1.
template <typename S>
Var<S> scale_rows(Var<S> x, Var<S> s) {
  detail::same_tape(x, s, "scale_rows");
  if (s.cols() != 1 || s.rows() != x.rows()) throw ShapeError("scale_rows: bad scale shape");
  Tape<S>& t = *x.tape;
  MatX<S> out = x.value().array().colwise() * s.value().col(0).array();
  return t.push(std::move(out), x.requires_grad() || s.requires_grad(),
                [x = x.idx, s = s.idx](Tape<S>& t, int self) {
                  const MatX<S>& g = t.grad_ref(self);
                  t.accum(x, (g.array().colwise() * t.value(s).col(0).array()).matrix());
                  t.accum(s, g.cwiseProduct(t.value(x)).rowwise().sum());
                });
}

// X (n x m) elementwise-scaled by broadcast row vector w (1 x m).
template <typename S>
Var<S> mul_rowvec(Var<S> x, Var<S> w) {
  detail::same_tape(x, w, "mul_rowvec");
  if (w.rows() != 1 || w.cols() != x.cols()) throw ShapeError("mul_rowvec: bad weight shape");
  Tape<S>& t = *x.tape;
  MatX<S> out = x.value().array().rowwise() * w.value().row(0).array();
  return t.push(std::move(out), x.requires_grad() || w.requires_grad(),
                [x = x.idx, w = w.idx](Tape<S>& t, int self) {
                  const MatX<S>& g = t.grad_ref(self);
                  t.accum(x, (g.array().rowwise() * t.value(w).row(0).array()).matrix());
                  t.accum(w, g.cwiseProduct(t.value(x)).colwise().sum());
                });
}

template <typename S>
Var<S> expv(Var<S> a) {
  Tape<S>& t = *a.tape;
  return t.push(a.value().array().exp().matrix(), a.requires_grad(),
                [a = a.idx](Tape<S>& t, int self) {
                  t.accum(a, t.grad_ref(self).cwiseProduct(t.value(self)));
                });
}

template <typename S>
Var<S> logv(Var<S> a) {
  if ((a.value().array() <= S(0)).any()) throw NumericError("log: non-positive input");
  Tape<S>& t = *a.tape;
  return t.push(a.value().array().log().matrix(), a.requires_grad(),
                [a = a.idx](Tape<S>& t, int self) {
                  t.accum(a, t.grad_ref(self).cwiseQuotient(t.value(a)));
                });
}

template <typename S>
Var<S> tanhv(Var<S> a) {
  Tape<S>& t = *a.tape;
  return t.push(a.value().array().tanh().matrix(), a.requires_grad(),
                [a = a.idx](Tape<S>& t, int self) {
                  const MatX<S>& y = t.value(self);
                  t.accum(a, t.grad_ref(self).cwiseProduct(
                                 (MatX<S>::Ones(y.rows(), y.cols()) - y.cwiseProduct(y))));
                });
}

template <typename S>
Var<S> relu(Var<S> a) {
  Tape<S>& t = *a.tape;
  return t.push(a.value().cwiseMax(S(0)), a.requires_grad(), [a = a.idx](Tape<S>& t, int self) {
    const MatX<S>& x = t.value(a);
    t.accum(a, t.grad_ref(self).cwiseProduct(
                   (x.array() > S(0)).template cast<S>().matrix()));
  });
}

// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename S>
Var<S> gelu(Var<S> a) {
  Tape<S>& t = *a.tape;
  const S c = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
  const S k = static_cast<S>(0.044715);
  auto inner = [c, k](const auto& x) { return c * (x + k * x * x * x); };
  MatX<S> out = a.value();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    S x = out(i);
    out(i) = S(0.5) * x * (S(1) + std::tanh(inner(x)));
  }
  return t.push(std::move(out), a.requires_grad(), [a = a.idx, c, k, inner](Tape<S>& t, int self) {
    const MatX<S>& x = t.value(a);
    const MatX<S>& g = t.grad_ref(self);
    MatX<S> d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      S xi = x(i);
      S th = std::tanh(inner(xi));
      S dinner = c * (S(1) + S(3) * k * xi * xi);
      d(i) = g(i) * (S(0.5) * (S(1) + th) + S(0.5) * xi * (S(1) - th * th) * dinner);
    }
    t.accum(a, d);
  });
}

template <typename S>
Var<S> square(Var<S> a) {
  return mul(a, a);
}

// Elementwise a^p for constant p; input must stay positive when p < 1.
template <typename S>
Var<S> pow_const(Var<S> a, S p) {
  Tape<S>& t = *a.tape;
  return t.push(a.value().array().pow(p).matrix(), a.requires_grad(),
                [a = a.idx, p](Tape<S>& t, int self) {
                  t.accum(a, (t.grad_ref(self).array() *
                              (t.value(a).array().pow(p - S(1)) * p))
                                 .matrix());
                });
}

// Stable per-row softmax (max subtraction).
template <typename S>
Var<S> softmax_rows(Var<S> a) {
  if (a.cols() == 0) throw ShapeError("softmax: empty axis");
  Tape<S>& t = *a.tape;
  MatX<S> out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    S mx = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return t.push(std::move(out), a.requires_grad(), [a = a.idx](Tape<S>& t, int self) {
    const MatX<S>& g = t.grad_ref(self);
    const MatX<S>& y = t.value(self);
    MatX<S> dx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      S dot = g.row(i).cwiseProduct(y.row(i)).sum();
      dx.row(i) = (g.row(i).array() - dot) * y.row(i).array();
    }
    t.accum(a, dx);
  });
}

// softmax along axis: 1 = within each row, 0 = within each column.
template <typename S>
Var<S> softmax(Var<S> a, int axis) {
  if (axis == 1) return softmax_rows(a);
  if (axis == 0) {
    if (a.rows() == 0) throw ShapeError("softmax: empty axis");
    return transpose(softmax_rows(transpose(a)));
  }
  throw ShapeError("softmax: axis must be 0 or 1");
}

// Stable per-row log-sum-exp, n x m -> n x 1.
template <typename S>
Var<S> logsumexp_rows(Var<S> a) {
  if (a.cols() == 0) throw ShapeError("logsumexp: empty axis");
  Tape<S>& t = *a.tape;
  const MatX<S>& x = a.value();
  MatX<S> out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    S mx = x.row(i).maxCoeff();
    out(i, 0) = mx + std::log((x.row(i).array() - mx).exp().sum());
  }
  return t.push(std::move(out), a.requires_grad(), [a = a.idx](Tape<S>& t, int self) {
    const MatX<S>& g = t.grad_ref(self);
    const MatX<S>& x = t.value(a);
    const MatX<S>& l = t.value(self);
    MatX<S> dx(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      dx.row(i) = g(i, 0) * (x.row(i).array() - l(i, 0)).exp();
    t.accum(a, dx);
  });
}

template <typename S>
Var<S> slice_rows(Var<S> a, Eigen::Index r0, Eigen::Index nr) {
  if (r0 < 0 || nr < 0 || r0 + nr > a.rows()) throw ShapeError("slice_rows: out of range");
  Tape<S>& t = *a.tape;
  return t.push(a.value().middleRows(r0, nr), a.requires_grad(),
                [a = a.idx, r0, nr](Tape<S>& t, int self) {
                  const MatX<S>& src = t.value(a);
                  MatX<S> d = MatX<S>::Zero(src.rows(), src.cols());
                  d.middleRows(r0, nr) = t.grad_ref(self);
                  t.accum(a, d);
                });
}

template <typename S>
Var<S> slice_cols(Var<S> a, Eigen::Index c0, Eigen::Index nc) {
  if (c0 < 0 || nc < 0 || c0 + nc > a.cols()) throw ShapeError("slice_cols: out of range");
  Tape<S>& t = *a.tape;
  return t.push(a.value().middleCols(c0, nc), a.requires_grad(),
                [a = a.idx, c0, nc](Tape<S>& t, int self) {
                  const MatX<S>& src = t.value(a);
                  MatX<S> d = MatX<S>::Zero(src.rows(), src.cols());
                  d.middleCols(c0, nc) = t.grad_ref(self);
                  t.accum(a, d);
                });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape<S>& t = *parts[0].tape;
  Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::same_tape(parts[0], p, "concat_rows");
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
    rg = rg || p.requires_grad();
  }
  MatX<S> out(rows, cols);
  Eigen::Index r = 0;
  std::vector<int> idxs;
  std::vector<Eigen::Index> sizes;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    idxs.push_back(p.idx);
    sizes.push_back(p.rows());
  }
  return t.push(std::move(out), rg,
                [idxs, sizes](Tape<S>& t, int self) {
                  const MatX<S>& g = t.grad_ref(self);
                  Eigen::Index r = 0;
                  for (size_t i = 0; i < idxs.size(); ++i) {
                    t.accum(idxs[i], g.middleRows(r, sizes[i]));
                    r += sizes[i];
                  }
                });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  std::vector<Var<S>> tr;
  tr.reserve(parts.size());
  for (const auto& p : parts) tr.push_back(transpose(p));
  return transpose(concat_rows(tr));
}

// Row gather; repeated indices accumulate gradient on backward.
template <typename S>
Var<S> gather_rows(Var<S> a, const std::vector<int>& idxs) {
  Tape<S>& t = *a.tape;
  const MatX<S>& src = a.value();
  for (int i : idxs)
    if (i < 0 || i >= src.rows())
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range");
  MatX<S> out(static_cast<Eigen::Index>(idxs.size()), src.cols());
  for (size_t i = 0; i < idxs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(idxs[i]);
  return t.push(std::move(out), a.requires_grad(), [a = a.idx, idxs](Tape<S>& t, int self) {
    const MatX<S>& g = t.grad_ref(self);
    const MatX<S>& src = t.value(a);
    MatX<S> d = MatX<S>::Zero(src.rows(), src.cols());
    for (size_t i = 0; i < idxs.size(); ++i)
      d.row(idxs[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accum(a, d);
  });
}

// n scalars (1x1 each) stacked into an n x 1 column.
template <typename S>
Var<S> stack_scalars(const std::vector<Var<S>>& xs) {
  if (xs.empty()) throw ShapeError("stack_scalars: no inputs");
  Tape<S>& t = *xs[0].tape;
  MatX<S> out(static_cast<Eigen::Index>(xs.size()), 1);
  std::vector<int> idxs;
  bool rg = false;
  for (size_t i = 0; i < xs.size(); ++i) {
    detail::same_tape(xs[0], xs[i], "stack_scalars");
    if (xs[i].value().size() != 1) throw ShapeError("stack_scalars: input not scalar");
    out(static_cast<Eigen::Index>(i), 0) = xs[i].value()(0, 0);
    idxs.push_back(xs[i].idx);
    rg = rg || xs[i].requires_grad();
  }
  return t.push(std::move(out), rg, [idxs](Tape<S>& t, int self) {
    const MatX<S>& g = t.grad_ref(self);
    for (size_t i = 0; i < idxs.size(); ++i) {
      MatX<S> d(1, 1);
      d(0, 0) = g(static_cast<Eigen::Index>(i), 0);
      t.accum(idxs[i], d);
    }
  });
}

// Cosine similarity of two equally-shaped vectors (either orientation).
// A zero-norm side signals a degenerate embedding and is an error.
template <typename S>
Var<S> cosine_sim(Var<S> u, Var<S> v) {
  detail::same_tape(u, v, "cosine_sim");
  if (u.rows() != v.rows() || u.cols() != v.cols() || std::min(u.rows(), u.cols()) != 1)
    throw ShapeError("cosine_sim: inputs must be equally-shaped vectors");
  Tape<S>& t = *u.tape;
  const MatX<S>& a = u.value();
  const MatX<S>& b = v.value();
  S na = a.norm(), nb = b.norm();
  if (!(na > S(0)) || !(nb > S(0))) throw NumericError("cosine_sim: zero-norm input");
  S dot = a.cwiseProduct(b).sum();
  S c = dot / (na * nb);
  MatX<S> out(1, 1);
  out(0, 0) = c;
  return t.push(std::move(out), u.requires_grad() || v.requires_grad(),
                [u = u.idx, v = v.idx, na, nb, c](Tape<S>& t, int self) {
                  S g = t.grad_ref(self)(0, 0);
                  const MatX<S>& a = t.value(u);
                  const MatX<S>& b = t.value(v);
                  t.accum(u, g * (b / (na * nb) - (c / (na * na)) * a));
                  t.accum(v, g * (a / (na * nb) - (c / (nb * nb)) * b));
                });
}

// RMS norm with learned gain: x / sqrt(mean(x^2) + eps) * gain. Composite.
template <typename S>
Var<S> rmsnorm(Var<S> x, Var<S> gain, S eps = S(1e-6)) {
  Var<S> ms = row_mean(square(x));
  Var<S> inv = pow_const(add_const(ms, eps), S(-0.5));
  return mul_rowvec(scale_rows(x, inv), gain);
}

}  // namespace marvel
