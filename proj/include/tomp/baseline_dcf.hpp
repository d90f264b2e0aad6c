#pragma once

// Optimization-based model predictor: a 1x1xC correlation filter obtained
// by iteratively minimizing the regularized classification objective over
// the training samples.

#include "tomp/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tomp {

struct DCFProblem {
  std::vector<Mat> features;  // each cells x C
  std::vector<Mat> labels;    // each cells x 1
  double lambda = 0.01;
  double tau = 0.05;
  /// With hinge=false every cell uses the plain squared residual (least squares).
  bool hinge = true;

  Index channels() const { return features.empty() ? 0 : features.front().cols(); }

  void validate() const {
    if (features.empty()) throw std::invalid_argument("DCFProblem: needs at least one training pair");
    if (features.size() != labels.size()) throw std::invalid_argument("DCFProblem: feature/label count mismatch");
    if (lambda < 0.0) throw std::invalid_argument("DCFProblem: lambda must be nonnegative");
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (features[i].cols() != channels() || labels[i].rows() != features[i].rows() || labels[i].cols() != 1)
        throw std::invalid_argument("DCFProblem: inconsistent sample shapes");
    }
  }
};

enum class DescentRule { steepest, conjugate };

inline Mat dcf_residual(const DCFProblem& p, std::size_t i, const Mat& scores) {
  if (p.hinge) return cls_residual(scores, p.labels[i], p.tau);
  return scores - p.labels[i];
}

inline double dcf_objective(const Mat& w, const DCFProblem& p) {
  double total = p.lambda * w.squaredNorm();
  for (std::size_t i = 0; i < p.features.size(); ++i) {
    const Mat r = dcf_residual(p, i, p.features[i] * w);
    total += r.squaredNorm() / static_cast<double>(r.rows());
  }
  return total;
}

inline Mat dcf_gradient(const Mat& w, const DCFProblem& p) {
  Mat g = 2.0 * p.lambda * w;
  for (std::size_t i = 0; i < p.features.size(); ++i) {
    const Mat r = dcf_residual(p, i, p.features[i] * w);
    g.noalias() += (2.0 / static_cast<double>(r.rows())) * p.features[i].transpose() * r;
  }
  return g;
}

/// Exact minimizer over alpha >= 0 of the objective along w + alpha * d.
/// The objective restricted to the line is convex piecewise quadratic; its
/// derivative is piecewise linear and is walked across the hinge breakpoints.
inline double dcf_line_search(const Mat& w, const Mat& d, const DCFProblem& p) {
  double s0 = 2.0 * p.lambda * w.cwiseProduct(d).sum();
  double s1 = 2.0 * p.lambda * d.squaredNorm();
  struct Breakpoint {
    double alpha;
    double c0, c1;  // contribution to s0, s1 while active
    bool activates;
  };
  std::vector<Breakpoint> events;
  for (std::size_t i = 0; i < p.features.size(); ++i) {
    const Mat a = p.features[i] * w;
    const Mat b = p.features[i] * d;
    const double inv_n = 1.0 / static_cast<double>(a.rows());
    for (Index k = 0; k < a.rows(); ++k) {
      const double ak = a(k, 0), bk = b(k, 0), yk = p.labels[i](k, 0);
      if (!p.hinge || yk > p.tau) {
        s0 += 2.0 * inv_n * bk * (ak - yk);
        s1 += 2.0 * inv_n * bk * bk;
        continue;
      }
      const double c0 = 2.0 * inv_n * bk * ak;
      const double c1 = 2.0 * inv_n * bk * bk;
      const bool active_now = ak > 0.0 || (ak == 0.0 && bk > 0.0);
      if (active_now) {
        s0 += c0;
        s1 += c1;
      }
      if (bk != 0.0) {
        const double cross = -ak / bk;
        if (cross > 0.0) events.push_back({cross, c0, c1, bk > 0.0});
      }
    }
  }
  if (s0 >= 0.0) return 0.0;
  std::sort(events.begin(), events.end(), [](const Breakpoint& x, const Breakpoint& y) { return x.alpha < y.alpha; });
  for (const auto& e : events) {
    if (s1 > 0.0) {
      const double root = -s0 / s1;
      if (root <= e.alpha) return root;
    }
    if (e.activates) {
      s0 += e.c0;
      s1 += e.c1;
    } else {
      s0 -= e.c0;
      s1 -= e.c1;
    }
  }
  if (!(s1 > 0.0)) throw std::runtime_error("dcf_optimize: objective unbounded along the search direction");
  return -s0 / s1;
}

struct DCFResult {
  Mat w;                      // C x 1
  std::vector<double> trace;  // objective before the first and after every iteration
};

inline DCFResult dcf_optimize(const DCFProblem& p, int iters, const Mat& init_w,
                              DescentRule rule = DescentRule::steepest) {
  p.validate();
  if (iters < 0) throw std::invalid_argument("dcf_optimize: iters must be nonnegative");
  if (init_w.rows() != p.channels() || init_w.cols() != 1)
    throw std::invalid_argument("dcf_optimize: init_w must be C x 1");
  DCFResult res{init_w, {dcf_objective(init_w, p)}};
  Mat g = dcf_gradient(res.w, p);
  Mat dir = -g;
  for (int it = 0; it < iters; ++it) {
    const double gg = g.squaredNorm();
    double alpha = 0.0;
    if (gg > 0.0) {
      if (g.cwiseProduct(dir).sum() >= 0.0) dir = -g;
      alpha = dcf_line_search(res.w, dir, p);
    }
    if (!std::isfinite(alpha)) throw std::runtime_error("dcf_optimize: non-finite step at iteration " + std::to_string(it));
    Mat candidate = res.w + alpha * dir;
    const double obj = dcf_objective(candidate, p);
    if (!std::isfinite(obj)) throw std::runtime_error("dcf_optimize: non-finite objective at iteration " + std::to_string(it));
    // Near the optimum round-off can make the exact step an ulp uphill; such steps are not taken.
    if (obj <= res.trace.back()) {
      res.w = std::move(candidate);
      res.trace.push_back(obj);
    } else {
      res.trace.push_back(res.trace.back());
    }
    Mat g_next = dcf_gradient(res.w, p);
    if (rule == DescentRule::conjugate && gg > 0.0) {
      const double beta = std::max(0.0, g_next.cwiseProduct(g_next - g).sum() / gg);
      dir = -g_next + beta * dir;
    } else {
      dir = -g_next;
    }
    g = std::move(g_next);
  }
  return res;
}

inline DCFResult dcf_optimize(const DCFProblem& p, int iters, DescentRule rule = DescentRule::steepest) {
  return dcf_optimize(p, iters, Mat::Zero(p.channels(), 1), rule);
}

/// Normal equations of the least-squares objective: A w = rhs.
inline std::pair<Mat, Mat> dcf_normal_equations(const DCFProblem& p) {
  const Index c = p.channels();
  Mat a = p.lambda * Mat::Identity(c, c);
  Mat rhs = Mat::Zero(c, 1);
  for (std::size_t i = 0; i < p.features.size(); ++i) {
    const double inv_n = 1.0 / static_cast<double>(p.features[i].rows());
    a.noalias() += inv_n * p.features[i].transpose() * p.features[i];
    rhs.noalias() += inv_n * p.features[i].transpose() * p.labels[i];
  }
  return {a, rhs};
}

}  // namespace tomp
