#pragma once

// One-pass evaluation metrics. Frame 1 is counted like any other frame.

#include "tomp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tomp {

struct Curve {
  std::vector<double> thresholds;
  std::vector<double> values;
  double auc = 0.0;  // mean of values
};

inline constexpr int kSuccessSamples = 101;
inline constexpr int kPrecisionMaxPx = 50;
inline constexpr double kPrecisionPx = 20.0;
inline constexpr int kNormPrecisionSamples = 51;  // D in [0, 0.5] step 0.01

namespace detail {

inline void require_same_length(const std::vector<BoxXYWH>& pred, const std::vector<BoxXYWH>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("metric: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(gt.size()) +
                                " ground-truth boxes");
  if (gt.empty()) throw std::invalid_argument("metric: empty sequence");
}

// Counts fraction of values satisfying pred(value, threshold) per threshold.
template <typename Cmp>
Curve threshold_curve(const std::vector<double>& v, std::vector<double> thresholds, Cmp cmp) {
  Curve c;
  c.thresholds = std::move(thresholds);
  for (double t : c.thresholds) {
    std::size_t hits = 0;
    for (double x : v) hits += cmp(x, t) ? 1 : 0;
    c.values.push_back(static_cast<double>(hits) / static_cast<double>(v.size()));
  }
  double s = 0.0;
  for (double y : c.values) s += y;
  c.auc = s / static_cast<double>(c.values.size());
  return c;
}

}  // namespace detail

/// IoU per frame; an invalid prediction scores 0. Clamped to [0, 1] since
/// identical boxes can land an ulp above 1.
inline std::vector<double> frame_ious(const std::vector<BoxXYWH>& pred, const std::vector<BoxXYWH>& gt) {
  detail::require_same_length(pred, gt);
  std::vector<double> out;
  for (std::size_t i = 0; i < gt.size(); ++i)
    out.push_back(pred[i].valid() && gt[i].valid() ? std::clamp(iou(pred[i], gt[i]), 0.0, 1.0) : 0.0);
  return out;
}

inline std::vector<double> center_errors(const std::vector<BoxXYWH>& pred, const std::vector<BoxXYWH>& gt) {
  detail::require_same_length(pred, gt);
  std::vector<double> out;
  for (std::size_t i = 0; i < gt.size(); ++i)
    out.push_back(std::hypot(pred[i].cx() - gt[i].cx(), pred[i].cy() - gt[i].cy()));
  return out;
}

/// Per-axis center offsets divided by the ground-truth width/height.
inline std::vector<double> normalized_center_errors(const std::vector<BoxXYWH>& pred, const std::vector<BoxXYWH>& gt) {
  detail::require_same_length(pred, gt);
  std::vector<double> out;
  for (std::size_t i = 0; i < gt.size(); ++i)
    out.push_back(std::hypot((pred[i].cx() - gt[i].cx()) / gt[i].w, (pred[i].cy() - gt[i].cy()) / gt[i].h));
  return out;
}

/// OP_T = fraction of frames with IoU > T, T on 101 points of [0, 1].
inline Curve success_curve(const std::vector<BoxXYWH>& pred, const std::vector<BoxXYWH>& gt) {
  std::vector<double> t;
  for (int i = 0; i < kSuccessSamples; ++i) t.push_back(static_cast<double>(i) / (kSuccessSamples - 1));
  return detail::threshold_curve(frame_ious(pred, gt), std::move(t), [](double v, double th) { return v > th; });
}

/// Fraction of frames with center error <= d px, d = 0..50.
inline Curve precision_curve(const std::vector<BoxXYWH>& pred, const std::vector<BoxXYWH>& gt) {
  std::vector<double> t;
  for (int i = 0; i <= kPrecisionMaxPx; ++i) t.push_back(i);
  return detail::threshold_curve(center_errors(pred, gt), std::move(t), [](double v, double th) { return v <= th; });
}

inline double precision_at(const std::vector<BoxXYWH>& pred, const std::vector<BoxXYWH>& gt, double px = kPrecisionPx) {
  std::size_t hits = 0;
  const auto e = center_errors(pred, gt);
  for (double v : e) hits += v <= px ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(e.size());
}

/// Fraction of frames with normalized center error <= D, D on 51 points of [0, 0.5].
inline Curve norm_precision_curve(const std::vector<BoxXYWH>& pred, const std::vector<BoxXYWH>& gt) {
  std::vector<double> t;
  for (int i = 0; i < kNormPrecisionSamples; ++i) t.push_back(0.5 * i / (kNormPrecisionSamples - 1));
  return detail::threshold_curve(normalized_center_errors(pred, gt), std::move(t), [](double v, double th) { return v <= th; });
}

inline double mean_iou(const std::vector<BoxXYWH>& pred, const std::vector<BoxXYWH>& gt) {
  const auto v = frame_ious(pred, gt);
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace tomp
