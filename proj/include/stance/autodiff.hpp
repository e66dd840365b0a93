#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double matrices. A Tape records one forward computation; backward()
// accumulates gradients into the Parameters that were read.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stance/error.hpp"

namespace stance::ad {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw NumericError("matrix data size mismatch");
  }

  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

struct Var {
  std::size_t index = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var constant(Matrix m) { return push(std::move(m), nullptr, false); }

  Var scalar(double v) { return constant(Matrix(1, 1, v)); }

  /// Dense read of a parameter; gradient flows straight into param.grad.
  Var leaf(Parameter& p) {
    Node n;
    n.param = &p;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var push(Matrix value, Backward backward, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.backward = std::move(backward);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.index];
    return n.param ? n.param->value : n.value;
  }

  double scalar_value(Var v) const {
    const Matrix& m = value(v);
    if (m.size() != 1) throw NumericError("scalar_value on non-scalar node");
    return m[0];
  }

  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }

  /// Gradient buffer for a node, allocated on first use.
  Matrix& grad(Var v) {
    Node& n = nodes_[v.index];
    if (n.param) return n.param->grad;
    if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(std::size_t i) const { return !nodes_[i].grad.empty(); }

  /// Back-propagates from a 1x1 root, scaling the seed by `seed`.
  void backward(Var root, double seed = 1.0) {
    if (value(root).size() != 1) throw NumericError("backward root must be a scalar");
    if (!requires_grad(root)) return;
    grad(root)[0] += seed;
    for (std::size_t i = root.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.param || !n.requires_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Parameter* param = nullptr;
    Backward backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

namespace detail {

inline void check(bool ok, const char* what) {
  if (!ok) throw NumericError(std::string("shape mismatch in ") + what);
}

// C += A * B  (A: n x k, B: k x m)
inline void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = &c(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* bp = &b(p, 0);
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C += A * B^T  (A: n x k, B: m x k)
inline void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = &a(i, 0);
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = &b(j, 0);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c(i, j) += s;
    }
  }
}

// C += A^T * B  (A: k x n, B: k x m)
inline void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = &b(p, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double api = a(p, i);
      if (api == 0.0) continue;
      double* ci = &c(i, 0);
      for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
    }
  }
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

using detail::sigmoid;
using detail::softplus;

/// Rows of `table` selected by `ids`. Gradients scatter-add into table.grad.
inline Var gather_rows(Tape& t, Parameter& table, std::span<const int> ids) {
  const std::size_t d = table.value.cols();
  Matrix out(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.value.rows()) {
      throw NumericError("gather_rows: id out of range");
    }
    auto src = table.value.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  Parameter* p = &table;
  return t.push(std::move(out),
                [p, idv = std::move(idv)](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(Var{self});
                  for (std::size_t i = 0; i < idv.size(); ++i) {
                    auto dst = p->grad.row(static_cast<std::size_t>(idv[i]));
                    auto src = g.row(i);
                    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                  }
                },
                true);
}

inline Var matmul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  detail::check(av.cols() == bv.rows(), "matmul");
  Matrix out(av.rows(), bv.cols());
  detail::gemm_nn(av, bv, out);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out),
                [a, b](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(Var{self});
                  if (tp.requires_grad(a)) detail::gemm_nt(g, tp.value(b), tp.grad(a));
                  if (tp.requires_grad(b)) detail::gemm_tn(tp.value(a), g, tp.grad(b));
                },
                rg);
}

/// a * b^T
inline Var matmul_nt(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  detail::check(av.cols() == bv.cols(), "matmul_nt");
  Matrix out(av.rows(), bv.rows());
  detail::gemm_nt(av, bv, out);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out),
                [a, b](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(Var{self});
                  if (tp.requires_grad(a)) detail::gemm_nn(g, tp.value(b), tp.grad(a));
                  if (tp.requires_grad(b)) detail::gemm_tn(g, tp.value(a), tp.grad(b));
                },
                rg);
}

inline Var add(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  detail::check(av.same_shape(bv), "add");
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out),
                [a, b](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(Var{self});
                  for (Var v : {a, b}) {
                    if (!tp.requires_grad(v)) continue;
                    Matrix& gv = tp.grad(v);
                    for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
                  }
                },
                rg);
}

/// a + broadcast(row) where row is 1 x cols(a).
inline Var add_row(Tape& t, Var a, Var row) {
  const Matrix& av = t.value(a);
  const Matrix& rv = t.value(row);
  detail::check(rv.rows() == 1 && rv.cols() == av.cols(), "add_row");
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
  }
  const bool rg = t.requires_grad(a) || t.requires_grad(row);
  return t.push(std::move(out),
                [a, row](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(Var{self});
                  if (tp.requires_grad(a)) {
                    Matrix& ga = tp.grad(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }
                  if (tp.requires_grad(row)) {
                    Matrix& gr = tp.grad(row);
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
                    }
                  }
                },
                rg);
}

inline Var scale(Tape& t, Var a, double c) {
  Matrix out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return t.push(std::move(out),
                [a, c](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(Var{self});
                  Matrix& ga = tp.grad(a);
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
                },
                t.requires_grad(a));
}

/// wa * a + wb * b for scalars (1x1).
inline Var mix(Tape& t, Var a, double wa, Var b, double wb) {
  const double v = wa * t.scalar_value(a) + wb * t.scalar_value(b);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(Matrix(1, 1, v),
                [a, wa, b, wb](Tape& tp, std::size_t self) {
                  const double g = tp.grad(Var{self})[0];
                  if (tp.requires_grad(a)) tp.grad(a)[0] += wa * g;
                  if (tp.requires_grad(b)) tp.grad(b)[0] += wb * g;
                },
                rg);
}

/// Sum of scalar nodes.
inline Var sum_scalars(Tape& t, std::span<const Var> xs) {
  double v = 0.0;
  bool rg = false;
  for (Var x : xs) {
    v += t.scalar_value(x);
    rg = rg || t.requires_grad(x);
  }
  std::vector<Var> ins(xs.begin(), xs.end());
  return t.push(Matrix(1, 1, v),
                [ins = std::move(ins)](Tape& tp, std::size_t self) {
                  const double g = tp.grad(Var{self})[0];
                  for (Var x : ins) {
                    if (tp.requires_grad(x)) tp.grad(x)[0] += g;
                  }
                },
                rg);
}

inline Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return t.push(std::move(out),
                [a](Tape& tp, std::size_t self) {
                  const Matrix& y = tp.value(Var{self});
                  const Matrix& g = tp.grad(Var{self});
                  Matrix& ga = tp.grad(a);
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                },
                t.requires_grad(a));
}

inline Var softmax_rows(Tape& t, Var a) {
  Matrix out = t.value(a);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double& x : r) {
      x = std::exp(x - mx);
      s += x;
    }
    for (double& x : r) x /= s;
  }
  return t.push(std::move(out),
                [a](Tape& tp, std::size_t self) {
                  const Matrix& y = tp.value(Var{self});
                  const Matrix& g = tp.grad(Var{self});
                  Matrix& ga = tp.grad(a);
                  for (std::size_t i = 0; i < y.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                    for (std::size_t j = 0; j < y.cols(); ++j) {
                      ga(i, j) += y(i, j) * (g(i, j) - dot);
                    }
                  }
                },
                t.requires_grad(a));
}

/// Row-wise layer normalisation with learned gain and bias (both 1 x d).
inline Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5) {
  const Matrix& xv = t.value(x);
  const Matrix& gv = t.value(gain);
  const Matrix& bv = t.value(bias);
  const std::size_t n = xv.rows(), d = xv.cols();
  detail::check(gv.cols() == d && bv.cols() == d, "layer_norm");
  Matrix xhat(n, d);
  std::vector<double> inv_std(n);
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xv(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (xv(i, j) - mean) * inv_std[i];
      out(i, j) = xhat(i, j) * gv[j] + bv[j];
    }
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(gain) || t.requires_grad(bias);
  return t.push(
      std::move(out),
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp,
                                                                            std::size_t self) {
        const Matrix& g = tp.grad(Var{self});
        const Matrix& gv = tp.value(gain);
        const std::size_t n = g.rows(), d = g.cols();
        if (tp.requires_grad(gain) || tp.requires_grad(bias)) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
              if (tp.requires_grad(gain)) tp.grad(gain)[j] += g(i, j) * xhat(i, j);
              if (tp.requires_grad(bias)) tp.grad(bias)[j] += g(i, j);
            }
          }
        }
        if (!tp.requires_grad(x)) return;
        Matrix& gx = tp.grad(x);
        std::vector<double> dxhat(d);
        for (std::size_t i = 0; i < n; ++i) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = g(i, j) * gv[j];
            sum_d += dxhat[j];
            sum_dx += dxhat[j] * xhat(i, j);
          }
          const double dd = static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            gx(i, j) += inv_std[i] / dd * (dd * dxhat[j] - sum_d - xhat(i, j) * sum_dx);
          }
        }
      },
      rg);
}

inline Var take_rows(Tape& t, Var a, std::span<const std::size_t> rows) {
  const Matrix& av = t.value(a);
  Matrix out(rows.size(), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail::check(rows[i] < av.rows(), "take_rows");
    auto src = av.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  return t.push(std::move(out),
                [a, rv = std::move(rv)](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(Var{self});
                  Matrix& ga = tp.grad(a);
                  for (std::size_t i = 0; i < rv.size(); ++i) {
                    auto dst = ga.row(rv[i]);
                    auto src = g.row(i);
                    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                  }
                },
                t.requires_grad(a));
}

inline Var take_row(Tape& t, Var a, std::size_t row) {
  const std::size_t r[] = {row};
  return take_rows(t, a, r);
}

/// 1 x d element-wise mean of the rows of a.
inline Var mean_rows(Tape& t, Var a) {
  const Matrix& av = t.value(a);
  detail::check(av.rows() > 0, "mean_rows");
  Matrix out(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out[j] += av(i, j);
  }
  const double inv = 1.0 / static_cast<double>(av.rows());
  for (std::size_t j = 0; j < av.cols(); ++j) out[j] *= inv;
  return t.push(std::move(out),
                [a, inv](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(Var{self});
                  Matrix& ga = tp.grad(a);
                  for (std::size_t i = 0; i < ga.rows(); ++i) {
                    for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g[j] * inv;
                  }
                },
                t.requires_grad(a));
}

/// Stacks rows (each input r_i x d) into one matrix.
inline Var concat_rows(Tape& t, std::span<const Var> parts) {
  detail::check(!parts.empty(), "concat_rows");
  const std::size_t d = t.value(parts[0]).cols();
  std::size_t n = 0;
  bool rg = false;
  for (Var p : parts) {
    detail::check(t.value(p).cols() == d, "concat_rows");
    n += t.value(p).rows();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(n, d);
  std::size_t r = 0;
  for (Var p : parts) {
    const Matrix& pv = t.value(p);
    std::copy(pv.values().begin(), pv.values().end(), out.values().begin() + r * d);
    r += pv.rows();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.push(std::move(out),
                [ins = std::move(ins)](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(Var{self});
                  std::size_t r = 0;
                  for (Var p : ins) {
                    const std::size_t rows = tp.value(p).rows();
                    if (tp.requires_grad(p)) {
                      Matrix& gp = tp.grad(p);
                      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[r * g.cols() + i];
                    }
                    r += rows;
                  }
                },
                rg);
}

/// Weighted binary cross-entropy on logits:
///   sum_i weight_i * BCE(sigmoid(z_i), target_i)
inline Var bce_with_logits(Tape& t, Var logits, std::span<const double> targets,
                           std::span<const double> weights) {
  const Matrix& z = t.value(logits);
  detail::check(z.size() == targets.size() && z.size() == weights.size(), "bce_with_logits");
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    loss += weights[i] * (targets[i] * softplus(-z[i]) + (1.0 - targets[i]) * softplus(z[i]));
  }
  std::vector<double> tv(targets.begin(), targets.end());
  std::vector<double> wv(weights.begin(), weights.end());
  return t.push(Matrix(1, 1, loss),
                [logits, tv = std::move(tv), wv = std::move(wv)](Tape& tp, std::size_t self) {
                  const double g = tp.grad(Var{self})[0];
                  const Matrix& z = tp.value(logits);
                  Matrix& gz = tp.grad(logits);
                  for (std::size_t i = 0; i < z.size(); ++i) {
                    gz[i] += g * wv[i] * (sigmoid(z[i]) - tv[i]);
                  }
                },
                t.requires_grad(logits));
}

/// Softmax cross-entropy per row against integer targets; returns
///   sum_i w_i * CE_i / sum_i w_i
/// (a plain mean when all weights are 1).
inline Var cross_entropy_rows(Tape& t, Var logits, std::span<const int> targets,
                              std::span<const double> weights = {}) {
  const Matrix& z = t.value(logits);
  detail::check(z.rows() == targets.size(), "cross_entropy_rows");
  detail::check(weights.empty() || weights.size() == targets.size(), "cross_entropy_rows");
  const std::size_t n = z.rows(), v = z.cols();
  Matrix probs(n, v);
  std::vector<double> w(n, 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  double wsum = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = z.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs(i, j) = std::exp(r[j] - mx);
      s += probs(i, j);
    }
    for (std::size_t j = 0; j < v; ++j) probs(i, j) /= s;
    detail::check(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < v,
                  "cross_entropy_rows target");
    loss += w[i] * (mx + std::log(s) - r[static_cast<std::size_t>(targets[i])]);
    wsum += w[i];
  }
  if (wsum <= 0.0) throw NumericError("cross_entropy_rows: non-positive weight sum");
  loss /= wsum;
  std::vector<int> tv(targets.begin(), targets.end());
  return t.push(Matrix(1, 1, loss),
                [logits, probs = std::move(probs), tv = std::move(tv), w = std::move(w), wsum](
                    Tape& tp, std::size_t self) {
                  const double g = tp.grad(Var{self})[0];
                  Matrix& gz = tp.grad(logits);
                  for (std::size_t i = 0; i < probs.rows(); ++i) {
                    const double c = g * w[i] / wsum;
                    for (std::size_t j = 0; j < probs.cols(); ++j) {
                      const double y = static_cast<std::size_t>(tv[i]) == j ? 1.0 : 0.0;
                      gz(i, j) += c * (probs(i, j) - y);
                    }
                  }
                },
                t.requires_grad(logits));
}

}  // namespace stance::ad
