#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double matrices. Every differentiable quantity in the tracker is a Var:
// a node holding its value, a lazily allocated gradient and the closure
// that pushes its gradient to its parents.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tomp {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

namespace ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward;

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }

  Mat& grad_ref() {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    return grad;
  }
  bool has_grad() const { return grad.size() != 0; }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline Var constant(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

inline Var parameter(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

namespace detail {

inline Var make_result(Mat value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!grad_enabled()) return n;
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (any) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(fn);
  }
  return n;
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->rows() != b->rows() || a->cols() != b->cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a->rows()) + "x" +
                                std::to_string(a->cols()) + " vs " + std::to_string(b->rows()) + "x" +
                                std::to_string(b->cols()));
  }
}

}  // namespace detail

/// Runs reverse accumulation from a scalar root. Gradients accumulate into
/// every reachable node that requires them, including parameters.
inline void backward(const Var& root) {
  if (root->rows() != 1 || root->cols() != 1) throw std::invalid_argument("backward: root must be scalar");
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_ref().setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->has_grad()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
  if (a->cols() != b->rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Mat out = a->value * b->value;
  return detail::make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& a = self.parents[0];
    const auto& b = self.parents[1];
    if (a->requires_grad) a->grad_ref().noalias() += self.grad * b->value.transpose();
    if (b->requires_grad) b->grad_ref().noalias() += a->value.transpose() * self.grad;
  });
}

/// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
  if (a->cols() != b->cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Mat out = a->value * b->value.transpose();
  return detail::make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& a = self.parents[0];
    const auto& b = self.parents[1];
    if (a->requires_grad) a->grad_ref().noalias() += self.grad * b->value;
    if (b->requires_grad) b->grad_ref().noalias() += self.grad.transpose() * a->value;
  });
}

inline Var transpose(const Var& a) {
  Mat out = a->value.transpose();
  return detail::make_result(std::move(out), {a}, [](Node& self) {
    self.parents[0]->grad_ref() += self.grad.transpose();
  });
}

// ---------------------------------------------------------------------------
// Elementwise and broadcasting arithmetic

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Mat out = a->value + b->value;
  return detail::make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_ref() += self.grad;
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  Mat out = a->value - b->value;
  return detail::make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad_ref() += self.grad;
    if (self.parents[1]->requires_grad) self.parents[1]->grad_ref() -= self.grad;
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  Mat out = a->value.cwiseProduct(b->value);
  return detail::make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& a = self.parents[0];
    const auto& b = self.parents[1];
    if (a->requires_grad) a->grad_ref() += self.grad.cwiseProduct(b->value);
    if (b->requires_grad) b->grad_ref() += self.grad.cwiseProduct(a->value);
  });
}

inline Var scale(const Var& a, double s) {
  Mat out = a->value * s;
  return detail::make_result(std::move(out), {a}, [s](Node& self) { self.parents[0]->grad_ref() += s * self.grad; });
}

/// Adds a 1 x n row to every row of a.
inline Var add_row(const Var& a, const Var& row) {
  if (row->rows() != 1 || row->cols() != a->cols()) throw std::invalid_argument("add_row: shape mismatch");
  Mat out = a->value.rowwise() + row->value.row(0);
  return detail::make_result(std::move(out), {a, row}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad_ref() += self.grad;
    if (self.parents[1]->requires_grad) self.parents[1]->grad_ref() += self.grad.colwise().sum();
  });
}

/// Multiplies every row of a elementwise by a 1 x n row.
inline Var mul_row(const Var& a, const Var& row) {
  if (row->rows() != 1 || row->cols() != a->cols()) throw std::invalid_argument("mul_row: shape mismatch");
  Mat out = a->value.array().rowwise() * row->value.row(0).array();
  return detail::make_result(std::move(out), {a, row}, [](Node& self) {
    const auto& a = self.parents[0];
    const auto& r = self.parents[1];
    if (a->requires_grad) a->grad_ref().array() += self.grad.array().rowwise() * r->value.row(0).array();
    if (r->requires_grad) r->grad_ref() += self.grad.cwiseProduct(a->value).colwise().sum();
  });
}

/// Scales row i of a by col(i, 0).
inline Var mul_col(const Var& a, const Var& col) {
  if (col->cols() != 1 || col->rows() != a->rows()) throw std::invalid_argument("mul_col: shape mismatch");
  Mat out = a->value.array().colwise() * col->value.col(0).array();
  return detail::make_result(std::move(out), {a, col}, [](Node& self) {
    const auto& a = self.parents[0];
    const auto& c = self.parents[1];
    if (a->requires_grad) a->grad_ref().array() += self.grad.array().colwise() * c->value.col(0).array();
    if (c->requires_grad) c->grad_ref() += self.grad.cwiseProduct(a->value).rowwise().sum();
  });
}

/// Elementwise product with a constant matrix (dropout masks, fixed weights).
inline Var mul_const(const Var& a, const Mat& m) {
  if (m.rows() != a->rows() || m.cols() != a->cols()) throw std::invalid_argument("mul_const: shape mismatch");
  Mat out = a->value.cwiseProduct(m);
  return detail::make_result(std::move(out), {a}, [m](Node& self) {
    self.parents[0]->grad_ref() += self.grad.cwiseProduct(m);
  });
}

inline Var relu(const Var& a) {
  Mat out = a->value.cwiseMax(0.0);
  return detail::make_result(std::move(out), {a}, [](Node& self) {
    const auto& a = self.parents[0];
    a->grad_ref().array() += (a->value.array() > 0.0).select(self.grad.array(), 0.0);
  });
}

inline Var exp(const Var& a) {
  Mat out = a->value.array().exp().matrix();
  return detail::make_result(std::move(out), {a}, [](Node& self) {
    self.parents[0]->grad_ref() += self.grad.cwiseProduct(self.value);
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& a) {
  Mat out(1, 1);
  out(0, 0) = a->value.sum();
  return detail::make_result(std::move(out), {a}, [](Node& self) {
    self.parents[0]->grad_ref().array() += self.grad(0, 0);
  });
}

inline Var mean(const Var& a) {
  const double n = static_cast<double>(a->value.size());
  return scale(sum(a), 1.0 / n);
}

// ---------------------------------------------------------------------------
// Normalization

namespace detail {

// y = (x - mean) / sqrt(var + eps) along rows (axis 1) or columns (axis 0).
inline void normalize_backward(const Mat& y, const Mat& g, const Mat& inv_std, bool rows, Mat& dx) {
  if (rows) {
    const double n = static_cast<double>(y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      const double gm = g.row(i).sum() / n;
      const double gy = g.row(i).dot(y.row(i)) / n;
      dx.row(i).array() += inv_std(i, 0) * (g.row(i).array() - gm - y.row(i).array() * gy);
    }
  } else {
    const double n = static_cast<double>(y.rows());
    Eigen::RowVectorXd gm = g.colwise().sum() / n;
    Eigen::RowVectorXd gy = g.cwiseProduct(y).colwise().sum() / n;
    for (Index i = 0; i < y.rows(); ++i) {
      dx.row(i).array() += inv_std.row(0).array() * (g.row(i).array() - gm.array() - y.row(i).array() * gy.array());
    }
  }
}

}  // namespace detail

/// Zero-mean unit-variance per row (layer normalization without affine).
inline Var normalize_rows(const Var& a, double eps = 1e-5) {
  const Index n = a->cols();
  Mat out(a->rows(), n);
  Mat inv_std(a->rows(), 1);
  for (Index i = 0; i < a->rows(); ++i) {
    const double mu = a->value.row(i).mean();
    const double var = (a->value.row(i).array() - mu).square().sum() / static_cast<double>(n);
    inv_std(i, 0) = 1.0 / std::sqrt(var + eps);
    out.row(i) = (a->value.row(i).array() - mu) * inv_std(i, 0);
  }
  return detail::make_result(std::move(out), {a}, [inv_std](Node& self) {
    detail::normalize_backward(self.value, self.grad, inv_std, true, self.parents[0]->grad_ref());
  });
}

/// Zero-mean unit-variance per column over all rows. On an (H*W) x C map
/// this is instance normalization over the spatial dimensions.
inline Var normalize_cols(const Var& a, double eps = 1e-5) {
  const double n = static_cast<double>(a->rows());
  Eigen::RowVectorXd mu = a->value.colwise().mean();
  Mat centered = a->value.rowwise() - mu;
  Eigen::RowVectorXd var = centered.array().square().colwise().sum() / n;
  Mat inv_std = (var.array() + eps).rsqrt().matrix();
  Mat out = centered.array().rowwise() * inv_std.row(0).array();
  return detail::make_result(std::move(out), {a}, [inv_std](Node& self) {
    detail::normalize_backward(self.value, self.grad, inv_std, false, self.parents[0]->grad_ref());
  });
}

/// Row-wise softmax. Columns with key_mask[j] != 0 receive exactly zero
/// weight; a row with every key masked yields zeros.
inline Var softmax_rows(const Var& a, const std::vector<char>& key_mask = {}) {
  if (!key_mask.empty() && static_cast<Index>(key_mask.size()) != a->cols())
    throw std::invalid_argument("softmax_rows: mask length mismatch");
  Mat out = Mat::Zero(a->rows(), a->cols());
  for (Index i = 0; i < a->rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < a->cols(); ++j)
      if (key_mask.empty() || !key_mask[j]) mx = std::max(mx, a->value(i, j));
    if (!std::isfinite(mx)) continue;
    double total = 0.0;
    for (Index j = 0; j < a->cols(); ++j) {
      if (!key_mask.empty() && key_mask[j]) continue;
      const double e = std::exp(a->value(i, j) - mx);
      out(i, j) = e;
      total += e;
    }
    out.row(i) /= total;
  }
  return detail::make_result(std::move(out), {a}, [](Node& self) {
    const Mat& y = self.value;
    Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
    self.parents[0]->grad_ref().array() += y.array() * (self.grad.colwise() - dots).array();
  });
}

// ---------------------------------------------------------------------------
// Slicing and concatenation

inline Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a->cols()) throw std::out_of_range("slice_cols");
  Mat out = a->value.middleCols(start, count);
  return detail::make_result(std::move(out), {a}, [start, count](Node& self) {
    self.parents[0]->grad_ref().middleCols(start, count) += self.grad;
  });
}

inline Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a->rows()) throw std::out_of_range("slice_rows");
  Mat out = a->value.middleRows(start, count);
  return detail::make_result(std::move(out), {a}, [start, count](Node& self) {
    self.parents[0]->grad_ref().middleRows(start, count) += self.grad;
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Index total = 0;
  for (const auto& p : parts) {
    if (p->rows() != parts[0]->rows()) throw std::invalid_argument("concat_cols: row mismatch");
    total += p->cols();
  }
  Mat out(parts[0]->rows(), total);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p->cols()) = p->value;
    at += p->cols();
  }
  return detail::make_result(std::move(out), parts, [](Node& self) {
    Index at = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) p->grad_ref() += self.grad.middleCols(at, p->cols());
      at += p->cols();
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Index total = 0;
  for (const auto& p : parts) {
    if (p->cols() != parts[0]->cols()) throw std::invalid_argument("concat_rows: column mismatch");
    total += p->rows();
  }
  Mat out(total, parts[0]->cols());
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p->rows()) = p->value;
    at += p->rows();
  }
  return detail::make_result(std::move(out), parts, [](Node& self) {
    Index at = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) p->grad_ref() += self.grad.middleRows(at, p->rows());
      at += p->rows();
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution support

struct ConvGeometry {
  int in_h = 0, in_w = 0, channels = 0;
  int kernel = 3, stride = 1, pad = 1;
  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

/// Unfolds an (H*W) x C map into (Ho*Wo) x (k*k*C) patches, zero padded.
/// Column order is (ky, kx, c).
inline Var im2col(const Var& a, const ConvGeometry& g) {
  if (a->rows() != static_cast<Index>(g.in_h) * g.in_w || a->cols() != g.channels)
    throw std::invalid_argument("im2col: input shape does not match geometry");
  const int ho = g.out_h(), wo = g.out_w(), k = g.kernel, c = g.channels;
  Mat out = Mat::Zero(static_cast<Index>(ho) * wo, static_cast<Index>(k) * k * c);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const Index row = static_cast<Index>(oy) * wo + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          out.block(row, (static_cast<Index>(ky) * k + kx) * c, 1, c) = a->value.row(static_cast<Index>(iy) * g.in_w + ix);
        }
      }
    }
  }
  return detail::make_result(std::move(out), {a}, [g](Node& self) {
    const int ho = g.out_h(), wo = g.out_w(), k = g.kernel, c = g.channels;
    Mat& dx = self.parents[0]->grad_ref();
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const Index row = static_cast<Index>(oy) * wo + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            dx.row(static_cast<Index>(iy) * g.in_w + ix) += self.grad.block(row, (static_cast<Index>(ky) * k + kx) * c, 1, c);
          }
        }
      }
    }
  });
}

}  // namespace ag
}  // namespace tomp
