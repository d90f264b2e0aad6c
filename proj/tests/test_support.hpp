#pragma once

#include "tomp/config.hpp"
#include "tomp/core/autograd.hpp"
#include "tomp/core/random.hpp"
#include "tomp/geometry.hpp"

#include <functional>
#include <vector>

namespace tomp::testing {

/// Tiny model: 2x2 or 3x3 token grids keep finite-difference sweeps cheap.
inline ModelConfig tiny_config(int score_size = 2) {
  ModelConfig c;
  c.channels = 8;
  c.score_size = score_size;
  c.backbone_widths = {4, 4, 8, 8};
  c.extent_hidden = 8;
  c.head_width = 8;
  c.head_kernel = 3;
  c.transformer.heads = 2;
  c.transformer.ffn_width = 12;
  c.transformer.dropout = 0.0;
  c.transformer.enc_layers = 1;
  c.transformer.dec_layers = 1;
  return c;
}

inline Mat random_mat(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
  return m;
}

/// Box strictly inside a w x h region.
inline BoxXYWH random_box(Rng& rng, double w, double h, Frame frame = Frame::image) {
  const double bw = uniform(rng, 0.05 * w, 0.6 * w);
  const double bh = uniform(rng, 0.05 * h, 0.6 * h);
  return {uniform(rng, 0.0, w - bw), uniform(rng, 0.0, h - bh), bw, bh, frame};
}

/// Scalar probe sum(f(x) .* R) with a fixed random R, so every output element
/// contributes a distinct weight to the gradient.
inline ag::Var probe(const ag::Var& y, const Mat& weights) { return ag::sum(ag::mul_const(y, weights)); }

}  // namespace tomp::testing
