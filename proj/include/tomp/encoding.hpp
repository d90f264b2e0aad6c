#pragma once

// Feature extraction and the target-state encodings that turn backbone
// features plus annotations into transformer input tokens.

#include "tomp/config.hpp"
#include "tomp/core/layers.hpp"
#include "tomp/geometry.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomp {

/// An H x W x C map flattened to (H*W) x C, row-major over cells.
struct FeatureMap {
  ag::Var values;
  GridShape shape;

  Index channels() const { return values->cols(); }
};

/// Four stride-2 conv + ReLU blocks (total stride 16) followed by a 1x1
/// channel reduction to the model width.
struct TinyBackbone {
  std::array<Conv2d, 4> blocks;
  Conv2d reduce;

  static TinyBackbone create(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) {
    TinyBackbone b;
    int in = 3;
    for (std::size_t i = 0; i < 4; ++i) {
      b.blocks[i] = Conv2d::create(ps, "backbone.block" + std::to_string(i), in, cfg.backbone_widths[i], 3, 2, rng);
      in = cfg.backbone_widths[i];
    }
    b.reduce = Conv2d::create(ps, "backbone.reduce", in, cfg.channels, 1, 1, rng);
    return b;
  }

  /// patch: (px*px) x 3 normalized pixels, row-major.
  FeatureMap operator()(const ag::Var& patch, int px, int stride = 16) const {
    if (px < 16 || px % 16 != 0) throw std::invalid_argument("extract_features: patch side must be a multiple of 16");
    if (patch->rows() != static_cast<Index>(px) * px || patch->cols() != 3)
      throw std::invalid_argument("extract_features: patch must be px*px x 3");
    ag::Var x = patch;
    int h = px, w = px;
    for (const auto& block : blocks) {
      int oh = 0, ow = 0;
      x = ag::relu(block(x, h, w, &oh, &ow));
      h = oh;
      w = ow;
    }
    return {reduce(x, h, w), GridShape{h, w, stride}};
  }
};

/// The extent encoder: 4 -> hidden -> C -> C. Hidden layers are
/// affine + per-cell normalization (learned gain/bias) + ReLU; the last layer is affine only.
struct ExtentMLP {
  Linear fc1, fc2, fc3;
  LayerNorm norm1, norm2;

  static ExtentMLP create(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) {
    ExtentMLP m;
    m.fc1 = Linear::create(ps, "extent.fc1", 4, cfg.extent_hidden, rng);
    m.norm1 = LayerNorm::create(ps, "extent.norm1", cfg.extent_hidden);
    m.fc2 = Linear::create(ps, "extent.fc2", cfg.extent_hidden, cfg.channels, rng);
    m.norm2 = LayerNorm::create(ps, "extent.norm2", cfg.channels);
    m.fc3 = Linear::create(ps, "extent.fc3", cfg.channels, cfg.channels, rng);
    return m;
  }

  ag::Var operator()(const ag::Var& ltrb) const {
    if (ltrb->cols() != 4) throw std::invalid_argument("ExtentMLP: expects cells x 4 input");
    auto h = ag::relu(norm1(fc1(ltrb)));
    h = ag::relu(norm2(fc2(h)));
    return fc3(h);
  }
};

/// Learned region embeddings. Disabled embeddings are fixed zero vectors.
struct Embeddings {
  ag::Var foreground;                 // 1 x C
  std::optional<ag::Var> background;  // 1 x C, only when enabled
  ag::Var test;                       // 1 x C
  ag::Var queries;                    // n_queries x C decoder queries

  static Embeddings create(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) {
    const Index c = cfg.channels;
    Embeddings e;
    e.foreground = cfg.use_fg_embedding ? ps.add("embed.fg", normal_matrix(1, c, rng, 1.0)) : ag::constant(Mat::Zero(1, c));
    if (cfg.use_bg_embedding) e.background = ps.add("embed.bg", normal_matrix(1, c, rng, 1.0));
    e.test = cfg.use_test_embedding ? ps.add("embed.test", normal_matrix(1, c, rng, 1.0)) : ag::constant(Mat::Zero(1, c));
    if (cfg.transformer.two_queries) {
      e.queries = ps.add("embed.queries", normal_matrix(2, c, rng, 1.0));
    } else if (cfg.transformer.shared_query && cfg.use_fg_embedding) {
      e.queries = e.foreground;
    } else {
      e.queries = ps.add("embed.query", normal_matrix(1, c, rng, 1.0));
    }
    return e;
  }
};

/// y * e_fg, plus (1 - y) * e_bg when a background embedding is given.
inline ag::Var encode_location(const Mat& label, const ag::Var& fg, const std::optional<ag::Var>& bg = std::nullopt) {
  if (label.cols() != 1) throw std::invalid_argument("encode_location: label must be cells x 1");
  auto out = ag::matmul(ag::constant(label), fg);
  if (bg) {
    Mat inv = Mat::Ones(label.rows(), 1) - label;
    out = ag::add(out, ag::matmul(ag::constant(inv), *bg));
  }
  return out;
}

/// v = x + psi(y) [+ phi(d)] for a training frame.
inline FeatureMap assemble_train_tokens(const FeatureMap& x, const GaussianLabel& y, const DenseLTRB& d,
                                        const ExtentMLP* extent, const Embeddings& emb) {
  if (!(x.shape == y.shape) || !(x.shape == d.shape) || y.values.rows() != x.values->rows())
    throw std::invalid_argument("assemble_train_tokens: shape mismatch");
  auto v = ag::add(x.values, encode_location(y.values, emb.foreground, emb.background));
  if (extent) v = ag::add(v, (*extent)(ag::constant(d.values)));
  return {v, x.shape};
}

/// v_test = x_test + e_test repeated over every cell.
inline FeatureMap assemble_test_tokens(const FeatureMap& x, const ag::Var& test_embedding) {
  return {ag::add_row(x.values, test_embedding), x.shape};
}

/// Fixed 2-D sine/cosine encoding: the first C/2 channels encode the row,
/// the rest the column, with normalized coordinates scaled to (0, 2*pi].
inline Mat positional_encoding(int height, int width, int channels, double temperature = 10000.0) {
  if (channels % 4 != 0) throw std::invalid_argument("positional_encoding: channels must be divisible by 4");
  if (height < 1 || width < 1) throw std::invalid_argument("positional_encoding: empty grid");
  const int feats = channels / 2;
  const double two_pi = 2.0 * std::numbers::pi;
  const double eps = 1e-6;
  Mat out(static_cast<Index>(height) * width, channels);
  for (int jy = 0; jy < height; ++jy) {
    for (int jx = 0; jx < width; ++jx) {
      const Index row = static_cast<Index>(jy) * width + jx;
      const double ey = (jy + 1) / (height + eps) * two_pi;
      const double ex = (jx + 1) / (width + eps) * two_pi;
      for (int i = 0; i < feats; ++i) {
        const double dim_t = std::pow(temperature, 2.0 * (i / 2) / feats);
        const double py = ey / dim_t;
        const double px = ex / dim_t;
        out(row, i) = (i % 2 == 0) ? std::sin(py) : std::cos(py);
        out(row, feats + i) = (i % 2 == 0) ? std::sin(px) : std::cos(px);
      }
    }
  }
  return out;
}

}  // namespace tomp
