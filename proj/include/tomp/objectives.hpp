#pragma once

// Training objectives: hinge-style classification loss on score maps, GIoU
// loss on dense ltrb maps, their weighted sum, and a finite-difference
// gradient checker used by the verification suites.

#include "tomp/core/autograd.hpp"
#include "tomp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace tomp {

struct LossWeights {
  double cls = 100.0;
  double giou = 1.0;
  double tau = 0.05;
};

/// Residual per cell: (pred - label) on foreground (label > tau),
/// max(0, pred) on background.
inline Mat cls_residual(const Mat& pred, const Mat& label, double tau) {
  Mat r(pred.rows(), 1);
  for (Index i = 0; i < pred.rows(); ++i)
    r(i, 0) = label(i, 0) > tau ? pred(i, 0) - label(i, 0) : (pred(i, 0) < 0.0 ? 0.0 : pred(i, 0));
  return r;
}

inline double loss_cls_value(const Mat& pred, const Mat& label, double tau) {
  if (pred.rows() != label.rows() || pred.cols() != 1 || label.cols() != 1)
    throw std::invalid_argument("loss_cls: shape mismatch");
  return cls_residual(pred, label, tau).squaredNorm() / static_cast<double>(pred.rows());
}

/// Mean squared hinge residual over all cells.
inline ag::Var loss_cls(const ag::Var& pred, const Mat& label, double tau) {
  const double n = static_cast<double>(pred->rows());
  Mat r = (pred->rows() == label.rows() && pred->cols() == 1) ? cls_residual(pred->value, label, tau) : Mat();
  Mat out(1, 1);
  out(0, 0) = loss_cls_value(pred->value, label, tau);
  return ag::detail::make_result(std::move(out), {pred}, [r, n](ag::Node& self) {
    self.parents[0]->grad_ref() += (2.0 * self.grad(0, 0) / n) * r;
  });
}

namespace detail {

struct GiouTerms {
  double loss = 0.0;
  double grad[4] = {0.0, 0.0, 0.0, 0.0};
};

// 1 - GIoU between boxes that share an anchor point, given as (l, t, r, b).
inline GiouTerms giou_terms(const double* p, const double* q) {
  const double wp = p[0] + p[2], hp = p[1] + p[3];
  const double ap = wp * hp;
  const double aq = (q[0] + q[2]) * (q[1] + q[3]);
  const double iw = std::min(p[0], q[0]) + std::min(p[2], q[2]);
  const double ih = std::min(p[1], q[1]) + std::min(p[3], q[3]);
  const bool overlap = iw > 0.0 && ih > 0.0;
  const double inter = overlap ? iw * ih : 0.0;
  const double uni = ap + aq - inter;
  const double cw = std::max(p[0], q[0]) + std::max(p[2], q[2]);
  const double ch = std::max(p[1], q[1]) + std::max(p[3], q[3]);
  const double hull = cw * ch;

  GiouTerms t;
  t.loss = 2.0 - inter / uni - uni / hull;

  const double d_inter = -(1.0 / uni + inter / (uni * uni)) + 1.0 / hull;
  const double d_ap = inter / (uni * uni) - 1.0 / hull;
  const double d_hull = uni / (hull * hull);
  for (int k = 0; k < 4; ++k) {
    const bool horizontal = (k % 2 == 0);
    const double d_area = horizontal ? hp : wp;
    double d_i = 0.0;
    if (overlap && p[k] < q[k]) d_i = horizontal ? ih : iw;
    const double d_c = p[k] > q[k] ? (horizontal ? ch : cw) : 0.0;
    t.grad[k] = d_inter * d_i + d_ap * d_area + d_hull * d_c;
  }
  return t;
}

}  // namespace detail

enum class GiouSupervision { foreground_cells, center_cell };

/// Cells supervised by the box loss: label > tau, or only the label peak.
inline std::vector<char> giou_mask(const GaussianLabel& label, double tau,
                                   GiouSupervision mode = GiouSupervision::foreground_cells) {
  std::vector<char> mask(static_cast<std::size_t>(label.values.rows()), 0);
  if (mode == GiouSupervision::center_cell) {
    mask[static_cast<std::size_t>(label.peak)] = 1;
  } else {
    for (Index i = 0; i < label.values.rows(); ++i) mask[static_cast<std::size_t>(i)] = label.values(i, 0) > tau ? 1 : 0;
  }
  return mask;
}

struct GiouLoss {
  ag::Var value;
  bool empty_foreground = false;
};

/// Mean of (1 - GIoU) over masked cells. An empty mask gives 0 and sets the flag.
inline GiouLoss loss_giou(const ag::Var& pred, const Mat& target, const std::vector<char>& fg_mask) {
  if (pred->cols() != 4 || target.cols() != 4 || pred->rows() != target.rows() ||
      static_cast<Index>(fg_mask.size()) != pred->rows())
    throw std::invalid_argument("loss_giou: shape mismatch");
  Index count = 0;
  for (char m : fg_mask) count += m ? 1 : 0;
  if (count == 0) return {ag::detail::make_result(Mat::Zero(1, 1), {pred}, [](ag::Node&) {}), true};

  Mat grad = Mat::Zero(pred->rows(), 4);
  double total = 0.0;
  for (Index i = 0; i < pred->rows(); ++i) {
    if (!fg_mask[static_cast<std::size_t>(i)]) continue;
    const Eigen::Matrix<double, 1, 4> p = pred->value.row(i);
    const Eigen::Matrix<double, 1, 4> q = target.row(i);
    const auto terms = detail::giou_terms(p.data(), q.data());
    total += terms.loss;
    for (int k = 0; k < 4; ++k) grad(i, k) = terms.grad[k];
  }
  const double inv = 1.0 / static_cast<double>(count);
  Mat out(1, 1);
  out(0, 0) = total * inv;
  grad *= inv;
  return {ag::detail::make_result(std::move(out), {pred}, [grad](ag::Node& self) {
            self.parents[0]->grad_ref() += self.grad(0, 0) * grad;
          }),
          false};
}

inline ag::Var loss_total(const LossWeights& w, const ag::Var& cls, const ag::Var& giou) {
  return ag::add(ag::scale(cls, w.cls), ag::scale(giou, w.giou));
}

inline double loss_total_value(const LossWeights& w, double cls, double giou) { return w.cls * cls + w.giou * giou; }

struct GradientCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool finite = true;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(p+eps) - f(p-eps)) / 2eps for every element of params.
/// Relative error uses max(|analytic|, |numeric|, floor) as denominator.
inline GradientCheckReport check_gradients(const std::function<ag::Var()>& fn, const std::vector<ag::Var>& params,
                                           double eps = 1e-5, double floor = 1e-5) {
  for (const auto& p : params) p->grad.resize(0, 0);
  const auto root = fn();
  ag::backward(root);
  std::vector<Mat> analytic;
  for (const auto& p : params) analytic.push_back(p->has_grad() ? p->grad : Mat::Zero(p->rows(), p->cols()));

  GradientCheckReport rep;
  ag::NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat& v = params[k]->value;
    for (Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + eps;
      const double fp = fn()->value(0, 0);
      v.data()[i] = orig - eps;
      const double fm = fn()->value(0, 0);
      v.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[k].data()[i];
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        rep.finite = false;
        rep.max_rel_error = std::numeric_limits<double>::infinity();
        continue;
      }
      const double abs_err = std::abs(a - numeric);
      rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
      rep.max_rel_error = std::max(rep.max_rel_error, abs_err / std::max({std::abs(a), std::abs(numeric), floor}));
      ++rep.checked;
    }
  }
  for (const auto& p : params) p->grad.resize(0, 0);
  return rep;
}

}  // namespace tomp
