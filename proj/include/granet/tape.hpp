#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>

#include "granet/sparse.hpp"
#include "granet/tensor.hpp"

namespace granet {

// Row-major matrix product kernels, all accumulating into C.
namespace detail {

inline void mm_nn(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = ai[l];
      if (av == 0.0) continue;
      const double* bl = b + l * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
    }
  }
}

// C(m x n) += A(m x k) * B(n x k)^T
/// c (m x n) += a (m x k) * b^T with b stored n x k. Transposes b once so the
/// inner loop is contiguous and the row-sparsity skip in mm_nn applies.
inline void mm_nt(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n,
                  double* c) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t l = 0; l < k; ++l) bt[l * n + j] = b[j * k + l];
  mm_nn(a, m, k, bt.data(), n, c);
}

// C(k x n) += A(m x k)^T * B(m x n)
inline void mm_tn(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = ai[l];
      if (av == 0.0) continue;
      double* cl = c + l * n;
      for (std::size_t j = 0; j < n; ++j) cl[j] += av * bi[j];
    }
  }
}

}  // namespace detail

/// Handle to a tape node.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

/// Reverse-mode tape. Built per forward pass, freed with the object; backward()
/// walks the nodes once in reverse creation order. Single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;  // backward closures capture `this`

  Var leaf(Tensor t, bool track = false) {
    nodes_.push_back(Node{std::move(t), {}, track, nullptr});
    return {nodes_.size() - 1};
  }
  Var constant(Tensor t) { return leaf(std::move(t), false); }

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  const std::vector<double>& grad(Var v) const { return nodes_[v.id].grad; }
  bool tracked(Var v) const { return nodes_[v.id].track; }
  std::size_t node_count() const { return nodes_.size(); }

  double scalar(Var v) const {
    const Tensor& t = nodes_[v.id].value;
    if (t.size() != 1) throw std::logic_error("scalar() on non-scalar " + t.shape_str());
    return t.values[0];
  }

  // --- ops -----------------------------------------------------------------

  /// y = x * w + 1 * b, with x (m x a), w (a x b), b (1 x b).
  Var affine(Var x, Var w, Var b) {
    const Tensor& xv = val(x);
    const Tensor& wv = val(w);
    const Tensor& bv = val(b);
    const std::size_t m = xv.rows(), a = xv.cols(), n = wv.cols();
    if (wv.rows() != a || bv.cols() != n || bv.rows() != 1)
      throw std::invalid_argument("affine: shape mismatch x" + xv.shape_str() + " w" +
                                  wv.shape_str() + " b" + bv.shape_str());
    Tensor y = Tensor::zeros({m, n});
    detail::mm_nn(xv.values.data(), m, a, wv.values.data(), n, y.values.data());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y.values[i * n + j] += bv.values[j];
    return push(std::move(y), {x, w, b}, [this, x, w, b, m, a, n](const Node& out) {
      const double* dy = out.grad.data();
      if (tracked(x))
        detail::mm_nt(dy, m, n, val(w).values.data(), a, grad_buf(x));
      if (tracked(w))
        detail::mm_tn(val(x).values.data(), m, a, dy, n, grad_buf(w));
      if (tracked(b)) {
        double* db = grad_buf(b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) db[j] += dy[i * n + j];
      }
    });
  }

  Var relu(Var x) {
    Tensor y = val(x);
    for (double& v : y.values) v = v > 0.0 ? v : 0.0;
    return push(std::move(y), {x}, [this, x](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      const auto& xv = val(x).values;
      for (std::size_t i = 0; i < xv.size(); ++i)
        if (xv[i] > 0.0) dx[i] += out.grad[i];
    });
  }

  Var sigmoid(Var x) {
    Tensor y = val(x);
    for (double& v : y.values) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(y), {x}, [this, x](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      const auto& yv = out.value.values;
      for (std::size_t i = 0; i < yv.size(); ++i) dx[i] += out.grad[i] * yv[i] * (1.0 - yv[i]);
    });
  }

  /// Softmax along `axis` of a 2-D tensor (0 = down each column, 1 = along each row),
  /// computed with max-subtraction.
  Var softmax(Var x, int axis) {
    const Tensor& xv = val(x);
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor y = Tensor::zeros({m, n});
    auto slice_softmax = [](const double* in, double* out, std::size_t len, std::size_t stride) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, in[i * stride]);
      double sum = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double e = std::exp(in[i * stride] - mx);
        out[i * stride] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[i * stride] /= sum;
    };
    if (axis == 1) {
      for (std::size_t i = 0; i < m; ++i)
        slice_softmax(xv.values.data() + i * n, y.values.data() + i * n, n, 1);
    } else if (axis == 0) {
      for (std::size_t j = 0; j < n; ++j)
        slice_softmax(xv.values.data() + j, y.values.data() + j, m, n);
    } else {
      throw std::invalid_argument("softmax: axis must be 0 or 1");
    }
    return push(std::move(y), {x}, [this, x, m, n, axis](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      const double* yv = out.value.values.data();
      const double* dy = out.grad.data();
      auto slice_back = [&](std::size_t base, std::size_t len, std::size_t stride) {
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += dy[base + i * stride] * yv[base + i * stride];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t k = base + i * stride;
          dx[k] += yv[k] * (dy[k] - dot);
        }
      };
      if (axis == 1)
        for (std::size_t i = 0; i < m; ++i) slice_back(i * n, n, 1);
      else
        for (std::size_t j = 0; j < n; ++j) slice_back(j, m, n);
    });
  }

  /// Mean over rows of -log softmax(logits)[label]. Labels must be in [0, C).
  Var cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
    const Tensor& lv = val(logits);
    const std::size_t m = lv.rows(), c = lv.cols();
    if (labels.size() != m)
      throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                  " labels for " + std::to_string(m) + " rows");
    for (std::size_t i = 0; i < m; ++i)
      if (labels[i] >= c)
        throw std::invalid_argument("cross_entropy: label out of range at row " +
                                    std::to_string(i) + " (" + std::to_string(labels[i]) +
                                    " >= " + std::to_string(c) + ")");
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = lv.values.data() + i * c;
      double mx = row[0];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
      loss += mx + std::log(sum) - row[labels[i]];
    }
    loss /= static_cast<double>(m);
    return push(Tensor::scalar(loss), {logits}, [this, logits, labels, m, c](const Node& out) {
      if (!tracked(logits)) return;
      const double g = out.grad[0] / static_cast<double>(m);
      double* dx = grad_buf(logits);
      const double* x = val(logits).values.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = x + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < c; ++j) {
          double p = std::exp(row[j] - mx) / sum;
          dx[i * c + j] += g * (p - (labels[i] == j ? 1.0 : 0.0));
        }
      }
    });
  }

  /// Mean of the Huber-style penalty: 0.5 d^2 / beta for |d| < beta, |d| - 0.5 beta otherwise.
  Var smooth_l1(Var pred, const Tensor& target, double beta) {
    const Tensor& pv = val(pred);
    require_same_shape(pv, target, "smooth_l1");
    if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be positive");
    const std::size_t n = pv.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::abs(pv.values[i] - target.values[i]);
      loss += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
    }
    loss /= static_cast<double>(n);
    return push(Tensor::scalar(loss), {pred}, [this, pred, target, beta, n](const Node& out) {
      if (!tracked(pred)) return;
      const double g = out.grad[0] / static_cast<double>(n);
      double* dx = grad_buf(pred);
      const double* p = val(pred).values.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double d = p[i] - target.values[i];
        dx[i] += g * (std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)));
      }
    });
  }

  /// y = A * x for a constant sparse A. A must outlive the tape.
  Var spmm(const SparseMatrix& a, Var x) {
    const Tensor& xv = val(x);
    if (a.n_cols != xv.rows())
      throw std::invalid_argument("spmm: A is " + std::to_string(a.n_rows) + "x" +
                                  std::to_string(a.n_cols) + " but x has " +
                                  std::to_string(xv.rows()) + " rows");
    const std::size_t w = xv.cols();
    Tensor y = Tensor::zeros({a.n_rows, w});
    a.add_multiply(xv.values.data(), w, y.values.data());
    return push(std::move(y), {x}, [this, &a, x, w](const Node& out) {
      if (!tracked(x)) return;
      a.add_multiply_transposed(out.grad.data(), w, grad_buf(x));
    });
  }

  Var gather_rows(Var x, std::vector<std::size_t> idx) {
    const Tensor& xv = val(x);
    const std::size_t c = xv.cols();
    Tensor y = Tensor::zeros({idx.size(), c});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= xv.rows())
        throw std::invalid_argument("gather_rows: index " + std::to_string(idx[r]) +
                                    " out of range");
      std::copy_n(xv.values.data() + idx[r] * c, c, y.values.data() + r * c);
    }
    return push(std::move(y), {x}, [this, x, idx = std::move(idx), c](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < c; ++j) dx[idx[r] * c + j] += out.grad[r * c + j];
    });
  }

  Var gather_cols(Var x, std::vector<std::size_t> idx) {
    const Tensor& xv = val(x);
    const std::size_t m = xv.rows(), c = xv.cols();
    Tensor y = Tensor::zeros({m, idx.size()});
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (idx[j] >= c)
        throw std::invalid_argument("gather_cols: index " + std::to_string(idx[j]) +
                                    " out of range");
      for (std::size_t i = 0; i < m; ++i) y.values[i * idx.size() + j] = xv.values[i * c + idx[j]];
    }
    return push(std::move(y), {x}, [this, x, idx = std::move(idx), m, c](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      const std::size_t k = idx.size();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) dx[i * c + idx[j]] += out.grad[i * k + j];
    });
  }

  /// One element per row: y[i] = x[i, col[i]].
  Var gather_cells(Var x, std::vector<std::size_t> col) {
    const Tensor& xv = val(x);
    const std::size_t m = xv.rows(), c = xv.cols();
    if (col.size() != m)
      throw std::invalid_argument("gather_cells: " + std::to_string(col.size()) +
                                  " columns for " + std::to_string(m) + " rows");
    Tensor y = Tensor::zeros({m, 1});
    for (std::size_t i = 0; i < m; ++i) {
      if (col[i] >= c)
        throw std::invalid_argument("gather_cells: index " + std::to_string(col[i]) +
                                    " out of range in row " + std::to_string(i));
      y.values[i] = xv.values[i * c + col[i]];
    }
    return push(std::move(y), {x}, [this, x, col = std::move(col), c](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      for (std::size_t i = 0; i < col.size(); ++i) dx[i * c + col[i]] += out.grad[i];
    });
  }

  Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t m = val(xs[0]).rows();
    std::size_t total = 0;
    for (Var v : xs) {
      if (val(v).rows() != m) throw std::invalid_argument("concat_cols: row count mismatch");
      total += val(v).cols();
    }
    Tensor y = Tensor::zeros({m, total});
    std::size_t off = 0;
    for (Var v : xs) {
      const Tensor& t = val(v);
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(t.values.data() + i * t.cols(), t.cols(),
                    y.values.data() + i * total + off);
      off += t.cols();
    }
    return push(std::move(y), xs, [this, xs, m, total](const Node& out) {
      std::size_t off = 0;
      for (Var v : xs) {
        const std::size_t c = val(v).cols();
        if (tracked(v)) {
          double* dx = grad_buf(v);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += out.grad[i * total + off + j];
        }
        off += c;
      }
    });
  }

  /// y[r,:] = s[r] * x[r,:] with s (m x 1).
  Var scale_rows(Var x, Var s) {
    const Tensor& xv = val(x);
    const Tensor& sv = val(s);
    const std::size_t m = xv.rows(), c = xv.cols();
    if (sv.rows() != m || sv.cols() != 1)
      throw std::invalid_argument("scale_rows: scale must be (m x 1), got " + sv.shape_str());
    Tensor y = xv;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) y.values[i * c + j] *= sv.values[i];
    return push(std::move(y), {x, s}, [this, x, s, m, c](const Node& out) {
      const double* dy = out.grad.data();
      if (tracked(x)) {
        double* dx = grad_buf(x);
        const double* sv = val(s).values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += dy[i * c + j] * sv[i];
      }
      if (tracked(s)) {
        double* ds = grad_buf(s);
        const double* xv = val(x).values.data();
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += dy[i * c + j] * xv[i * c + j];
          ds[i] += dot;
        }
      }
    });
  }

  Var sum_over_rows(Var x) {
    const Tensor& xv = val(x);
    const std::size_t m = xv.rows(), c = xv.cols();
    Tensor y = Tensor::zeros({1, c});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) y.values[j] += xv.values[i * c + j];
    return push(std::move(y), {x}, [this, x, m, c](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += out.grad[j];
    });
  }

  /// Column-wise max over rows -> (1 x c). Gradient routes to the lowest-index maximizer.
  Var max_over_rows(Var x) {
    const Tensor& xv = val(x);
    const std::size_t m = xv.rows(), c = xv.cols();
    if (m == 0) throw std::invalid_argument("max_over_rows: empty input");
    Tensor y = Tensor::zeros({1, c});
    std::vector<std::size_t> arg(c, 0);
    for (std::size_t j = 0; j < c; ++j) {
      double best = xv.values[j];
      std::size_t bi = 0;
      for (std::size_t i = 1; i < m; ++i)
        if (xv.values[i * c + j] > best) {
          best = xv.values[i * c + j];
          bi = i;
        }
      y.values[j] = best;
      arg[j] = bi;
    }
    return push(std::move(y), {x}, [this, x, arg = std::move(arg), c](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      for (std::size_t j = 0; j < c; ++j) dx[arg[j] * c + j] += out.grad[j];
    });
  }

  /// Row-wise max over columns -> (m x 1).
  Var max_over_cols(Var x) {
    const Tensor& xv = val(x);
    const std::size_t m = xv.rows(), c = xv.cols();
    if (c == 0) throw std::invalid_argument("max_over_cols: empty input");
    Tensor y = Tensor::zeros({m, 1});
    std::vector<std::size_t> arg(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = xv.values.data() + i * c;
      double best = row[0];
      std::size_t bj = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (row[j] > best) {
          best = row[j];
          bj = j;
        }
      y.values[i] = best;
      arg[i] = bj;
    }
    return push(std::move(y), {x}, [this, x, arg = std::move(arg), c](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      for (std::size_t i = 0; i < arg.size(); ++i) dx[i * c + arg[i]] += out.grad[i];
    });
  }

  /// Row-wise mean over columns -> (m x 1).
  Var mean_over_cols(Var x) {
    const Tensor& xv = val(x);
    const std::size_t m = xv.rows(), c = xv.cols();
    Tensor y = Tensor::zeros({m, 1});
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += xv.values[i * c + j];
      y.values[i] = s / static_cast<double>(c);
    }
    return push(std::move(y), {x}, [this, x, m, c](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      const double inv = 1.0 / static_cast<double>(c);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += out.grad[i] * inv;
    });
  }

  Var add(Var a, Var b) {
    require_same_shape(val(a), val(b), "add");
    Tensor y = val(a);
    for (std::size_t i = 0; i < y.size(); ++i) y.values[i] += val(b).values[i];
    return push(std::move(y), {a, b}, [this, a, b](const Node& out) {
      for (Var v : {a, b}) {
        if (!tracked(v)) continue;
        double* d = grad_buf(v);
        for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] += out.grad[i];
      }
    });
  }

  Var sub(Var a, Var b) {
    require_same_shape(val(a), val(b), "sub");
    Tensor y = val(a);
    for (std::size_t i = 0; i < y.size(); ++i) y.values[i] -= val(b).values[i];
    return push(std::move(y), {a, b}, [this, a, b](const Node& out) {
      if (tracked(a)) {
        double* d = grad_buf(a);
        for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] += out.grad[i];
      }
      if (tracked(b)) {
        double* d = grad_buf(b);
        for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] -= out.grad[i];
      }
    });
  }

  Var scale(Var x, double c) {
    Tensor y = val(x);
    for (double& v : y.values) v *= c;
    return push(std::move(y), {x}, [this, x, c](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      for (std::size_t i = 0; i < out.grad.size(); ++i) dx[i] += c * out.grad[i];
    });
  }

  Var mul_elem(Var a, Var b) {
    require_same_shape(val(a), val(b), "mul_elem");
    Tensor y = val(a);
    for (std::size_t i = 0; i < y.size(); ++i) y.values[i] *= val(b).values[i];
    return push(std::move(y), {a, b}, [this, a, b](const Node& out) {
      if (tracked(a)) {
        double* d = grad_buf(a);
        const double* bv = val(b).values.data();
        for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] += out.grad[i] * bv[i];
      }
      if (tracked(b)) {
        double* d = grad_buf(b);
        const double* av = val(a).values.data();
        for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] += out.grad[i] * av[i];
      }
    });
  }

  /// Sum of all entries -> (1 x 1).
  Var sum_to_scalar(Var x) {
    const Tensor& xv = val(x);
    double s = 0.0;
    for (double v : xv.values) s += v;
    return push(Tensor::scalar(s), {x}, [this, x](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      const double g = out.grad[0];
      for (std::size_t i = 0; i < val(x).size(); ++i) dx[i] += g;
    });
  }

  /// sum_i coeff_i * x_i over same-shaped inputs.
  Var weighted_sum(const std::vector<std::pair<Var, double>>& terms) {
    if (terms.empty()) throw std::invalid_argument("weighted_sum: no terms");
    Tensor y = Tensor::zeros(val(terms[0].first).shape);
    std::vector<Var> ins;
    for (auto& [v, c] : terms) {
      require_same_shape(val(v), y, "weighted_sum");
      for (std::size_t i = 0; i < y.size(); ++i) y.values[i] += c * val(v).values[i];
      ins.push_back(v);
    }
    return push(std::move(y), ins, [this, terms](const Node& out) {
      for (auto& [v, c] : terms) {
        if (!tracked(v)) continue;
        double* d = grad_buf(v);
        for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] += c * out.grad[i];
      }
    });
  }

  Var broadcast_row(Var x, std::size_t m) {
    const Tensor& xv = val(x);
    if (xv.rows() != 1) throw std::invalid_argument("broadcast_row: input must be (1 x c)");
    const std::size_t c = xv.cols();
    Tensor y = Tensor::zeros({m, c});
    for (std::size_t i = 0; i < m; ++i) std::copy_n(xv.values.data(), c, y.values.data() + i * c);
    return push(std::move(y), {x}, [this, x, m, c](const Node& out) {
      if (!tracked(x)) return;
      double* dx = grad_buf(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) dx[j] += out.grad[i * c + j];
    });
  }

  /// Per-segment elementwise max of edge messages (E x c) grouped by segment id in [0, n).
  /// Empty segments fall back to the matching row of `defaults` (n x c). Gradient routes to
  /// the lowest-index maximizing edge on ties.
  Var segment_max(Var messages, const std::vector<std::size_t>& segment, std::size_t n,
                  Var defaults) {
    const Tensor& mv = val(messages);
    const Tensor& dv = val(defaults);
    const std::size_t e = mv.rows(), c = mv.cols();
    if (segment.size() != e)
      throw std::invalid_argument("segment_max: segment id count != message rows");
    if (dv.rows() != n || dv.cols() != c)
      throw std::invalid_argument("segment_max: defaults must be (n x c)");
    const std::size_t none = std::numeric_limits<std::size_t>::max();
    Tensor y = dv;
    std::vector<std::size_t> arg(n * c, none);
    for (std::size_t k = 0; k < e; ++k) {
      const std::size_t s = segment[k];
      if (s >= n) throw std::invalid_argument("segment_max: segment id out of range");
      for (std::size_t j = 0; j < c; ++j) {
        const double v = mv.values[k * c + j];
        std::size_t& a = arg[s * c + j];
        if (a == none || v > y.values[s * c + j]) {
          y.values[s * c + j] = v;
          a = k;
        }
      }
    }
    return push(std::move(y), {messages, defaults},
                [this, messages, defaults, arg = std::move(arg), c, none](const Node& out) {
                  double* dm = tracked(messages) ? grad_buf(messages) : nullptr;
                  double* dd = tracked(defaults) ? grad_buf(defaults) : nullptr;
                  const std::size_t n = out.value.rows();
                  for (std::size_t s = 0; s < n; ++s)
                    for (std::size_t j = 0; j < c; ++j) {
                      const std::size_t a = arg[s * c + j];
                      if (a == none) {
                        if (dd) dd[s * c + j] += out.grad[s * c + j];
                      } else if (dm) {
                        dm[a * c + j] += out.grad[s * c + j];
                      }
                    }
                });
  }

  // --- backward --------------------------------------------------------------

  /// Seeds d(loss)=1 and accumulates gradients into every tracked node.
  void backward(Var loss) {
    Node& top = nodes_[loss.id];
    if (top.value.size() != 1) throw std::logic_error("backward: loss must be scalar");
    for (auto& n : nodes_) n.grad.assign(n.track ? n.value.size() : 0, 0.0);
    top.grad.assign(1, 1.0);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back && n.track && !n.grad.empty()) n.back(n);
    }
  }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool track = false;
    std::function<void(const Node&)> back;
  };

  double* grad_buf(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad.data();
  }

  Var push(Tensor value, const std::vector<Var>& inputs, std::function<void(const Node&)> back) {
    bool track = false;
    for (Var v : inputs) track = track || nodes_[v.id].track;
    nodes_.push_back(Node{std::move(value), {}, track, track ? std::move(back) : nullptr});
    return {nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
};

}  // namespace granet
