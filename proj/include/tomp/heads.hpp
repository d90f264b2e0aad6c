#pragma once

// Applying predicted filters: the 1x1 correlation target model and the
// attention-conditioned CNN that regresses dense ltrb boxes.

#include "tomp/config.hpp"
#include "tomp/core/layers.hpp"
#include "tomp/encoding.hpp"
#include "tomp/geometry.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomp {

/// Per-cell inner product <w_cls, z_test[cell]>; cells x 1.
inline ag::Var target_scores(const ag::Var& w_cls, const FeatureMap& z_test) {
  if (w_cls->cols() != 1 || w_cls->rows() != z_test.channels())
    throw std::invalid_argument("target_scores: filter length differs from feature channels");
  return ag::matmul(z_test.values, w_cls);
}

struct BoxHeadCNN {
  std::vector<Conv2d> blocks;
  Conv2d out;

  static BoxHeadCNN create(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) {
    BoxHeadCNN h;
    int in = cfg.channels;
    for (int i = 0; i < 4; ++i) {
      h.blocks.push_back(Conv2d::create(ps, "boxhead.block" + std::to_string(i), in, cfg.head_width, cfg.head_kernel, 1, rng));
      in = cfg.head_width;
    }
    h.out = Conv2d::create(ps, "boxhead.out", in, 4, cfg.head_kernel, 1, rng);
    return h;
  }

  /// conv -> instance norm -> ReLU four times, final conv, exp.
  ag::Var operator()(const ag::Var& features, const GridShape& shape) const {
    auto x = features;
    for (const auto& b : blocks) x = ag::relu(ag::normalize_cols(b(x, shape.height, shape.width), 1e-5));
    return ag::exp(out(x, shape.height, shape.width));
  }
};

/// Attention map a = z_test * w_bbreg, features a .* z_test fed to the CNN.
inline ag::Var regress_boxes(const ag::Var& w_bbreg, const FeatureMap& z_test, const BoxHeadCNN& head) {
  if (w_bbreg->cols() != 1 || w_bbreg->rows() != z_test.channels())
    throw std::invalid_argument("regress_boxes: filter length differs from feature channels");
  const auto attention = ag::matmul(z_test.values, w_bbreg);
  return head(ag::mul_col(z_test.values, attention), z_test.shape);
}

struct Prediction {
  std::optional<BoxXYWH> box;  // image frame; empty when the ltrb at the peak is invalid
  double confidence = 0.0;
  Index peak = 0;
};

/// Box at the score argmax (lowest flat index on ties), mapped back through the crop.
inline Prediction decode_prediction(const ScoreMap& scores, const DenseLTRB& ltrb, const CropTransform& crop) {
  if (scores.values.rows() != scores.shape.cells() || !(scores.shape == ltrb.shape))
    throw std::invalid_argument("decode_prediction: score and ltrb maps disagree");
  Prediction p;
  p.peak = argmax_cell(scores.values);
  p.confidence = scores.values(p.peak, 0);
  if (auto box = decode_ltrb(ltrb, p.peak)) p.box = crop.to_image(*box);
  return p;
}

}  // namespace tomp
