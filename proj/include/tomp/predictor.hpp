#pragma once

// Transformer model predictor: joint self-attention over all training and
// test tokens, a query decoder that reads out the target-model weights, and
// the linear split into classifier / box-regressor filters.

#include "tomp/config.hpp"
#include "tomp/core/layers.hpp"
#include "tomp/encoding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomp {

/// Concatenated tokens of m training frames followed by the test frame.
struct TokenSequence {
  ag::Var tokens;           // L x C
  Mat pos;                  // L x C positional encoding
  std::vector<char> mask;   // L entries, nonzero = padding (ignored as key)
  std::vector<int> source;  // frame index per token; training frames 0..m-1, test frame m
  GridShape shape;
  int train_frames = 0;

  Index length() const { return tokens->rows(); }
  Index masked_count() const {
    Index n = 0;
    for (char m : mask) n += m ? 1 : 0;
    return n;
  }
  /// Rows of the test-frame tokens.
  Index test_offset() const { return static_cast<Index>(train_frames) * shape.cells(); }
};

/// exclude_train[i] masks every token of training frame i.
inline TokenSequence build_sequence(const std::vector<FeatureMap>& train, const FeatureMap& test,
                                    const std::vector<bool>& exclude_train = {}) {
  if (train.empty()) throw std::invalid_argument("build_sequence: at least one training frame is required");
  if (!exclude_train.empty() && exclude_train.size() != train.size())
    throw std::invalid_argument("build_sequence: mask spec length differs from training frame count");
  const GridShape shape = test.shape;
  const Index cells = shape.cells();
  std::vector<ag::Var> parts;
  for (const auto& f : train) {
    if (!(f.shape == shape) || f.values->rows() != cells || f.channels() != test.channels())
      throw std::invalid_argument("build_sequence: inconsistent frame shapes");
    parts.push_back(f.values);
  }
  parts.push_back(test.values);

  TokenSequence seq;
  seq.shape = shape;
  seq.train_frames = static_cast<int>(train.size());
  seq.tokens = ag::concat_rows(parts);
  const Mat frame_pos = positional_encoding(shape.height, shape.width, static_cast<int>(test.channels()));
  seq.pos.resize(seq.tokens->rows(), seq.tokens->cols());
  for (std::size_t f = 0; f <= train.size(); ++f) {
    seq.pos.middleRows(static_cast<Index>(f) * cells, cells) = frame_pos;
    const bool masked = f < train.size() && !exclude_train.empty() && exclude_train[f];
    for (Index i = 0; i < cells; ++i) {
      seq.mask.push_back(masked ? 1 : 0);
      seq.source.push_back(static_cast<int>(f));
    }
  }
  return seq;
}

struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  int heads = 1;

  static MultiHeadAttention create(ParameterSet& ps, const std::string& name, int width, int heads, Rng& rng) {
    MultiHeadAttention a;
    a.q_proj = Linear::create(ps, name + ".q", width, width, rng);
    a.k_proj = Linear::create(ps, name + ".k", width, width, rng);
    a.v_proj = Linear::create(ps, name + ".v", width, width, rng);
    a.out_proj = Linear::create(ps, name + ".out", width, width, rng);
    a.heads = heads;
    return a;
  }

  /// Scaled dot-product attention; keys with key_mask != 0 get zero weight.
  ag::Var operator()(const ag::Var& query, const ag::Var& key, const ag::Var& value,
                     const std::vector<char>& key_mask) const {
    const auto q = q_proj(query);
    const auto k = k_proj(key);
    const auto v = v_proj(value);
    const Index width = q->cols();
    const Index dh = width / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ag::Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto qh = ag::slice_cols(q, h * dh, dh);
      const auto kh = ag::slice_cols(k, h * dh, dh);
      const auto vh = ag::slice_cols(v, h * dh, dh);
      const auto weights = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt), key_mask);
      outs.push_back(ag::matmul(weights, vh));
    }
    return out_proj(heads == 1 ? outs.front() : ag::concat_cols(outs));
  }
};

struct FeedForward {
  Linear fc1, fc2;

  static FeedForward create(ParameterSet& ps, const std::string& name, int width, int hidden, Rng& rng) {
    return {Linear::create(ps, name + ".fc1", width, hidden, rng), Linear::create(ps, name + ".fc2", hidden, width, rng)};
  }

  ag::Var operator()(const ag::Var& x, const ForwardContext& ctx) const { return fc2(dropout(ag::relu(fc1(x)), ctx)); }
};

/// Post-norm encoder layer; positions are added to queries and keys only.
struct EncoderLayer {
  MultiHeadAttention self_attn;
  FeedForward ffn;
  LayerNorm norm1, norm2;

  static EncoderLayer create(ParameterSet& ps, const std::string& name, const ModelConfig& cfg, Rng& rng) {
    EncoderLayer l;
    l.self_attn = MultiHeadAttention::create(ps, name + ".self_attn", cfg.channels, cfg.transformer.heads, rng);
    l.ffn = FeedForward::create(ps, name + ".ffn", cfg.channels, cfg.transformer.ffn_width, rng);
    l.norm1 = LayerNorm::create(ps, name + ".norm1", cfg.channels);
    l.norm2 = LayerNorm::create(ps, name + ".norm2", cfg.channels);
    return l;
  }

  ag::Var operator()(const ag::Var& src, const ag::Var& pos, const std::vector<char>& mask, const ForwardContext& ctx) const {
    const auto qk = ag::add(src, pos);
    auto x = norm1(ag::add(src, dropout(self_attn(qk, qk, src, mask), ctx)));
    return norm2(ag::add(x, dropout(ffn(x, ctx), ctx)));
  }
};

/// Post-norm decoder layer: query self-attention, cross-attention into the
/// encoder memory, feed-forward.
struct DecoderLayer {
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;
  LayerNorm norm1, norm2, norm3;

  static DecoderLayer create(ParameterSet& ps, const std::string& name, const ModelConfig& cfg, Rng& rng) {
    DecoderLayer l;
    l.self_attn = MultiHeadAttention::create(ps, name + ".self_attn", cfg.channels, cfg.transformer.heads, rng);
    l.cross_attn = MultiHeadAttention::create(ps, name + ".cross_attn", cfg.channels, cfg.transformer.heads, rng);
    l.ffn = FeedForward::create(ps, name + ".ffn", cfg.channels, cfg.transformer.ffn_width, rng);
    l.norm1 = LayerNorm::create(ps, name + ".norm1", cfg.channels);
    l.norm2 = LayerNorm::create(ps, name + ".norm2", cfg.channels);
    l.norm3 = LayerNorm::create(ps, name + ".norm3", cfg.channels);
    return l;
  }

  ag::Var operator()(const ag::Var& tgt, const ag::Var& query_pos, const ag::Var& memory, const ag::Var& memory_pos,
                     const std::vector<char>& mask, const ForwardContext& ctx) const {
    const auto qk = ag::add(tgt, query_pos);
    auto x = norm1(ag::add(tgt, dropout(self_attn(qk, qk, tgt, {}), ctx)));
    const auto cross = cross_attn(ag::add(x, query_pos), ag::add(memory, memory_pos), memory, mask);
    x = norm2(ag::add(x, dropout(cross, ctx)));
    return norm3(ag::add(x, dropout(ffn(x, ctx), ctx)));
  }
};

struct PredictedWeights {
  ag::Var cls;    // C x 1
  ag::Var bbreg;  // C x 1
};

struct ModelPredictor {
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  LayerNorm decoder_norm;
  Linear split;  // C -> 2C; unused with two queries
  TransformerConfig cfg;

  static ModelPredictor create(ParameterSet& ps, const ModelConfig& mc, Rng& rng) {
    ModelPredictor p;
    p.cfg = mc.transformer;
    for (int i = 0; i < mc.transformer.enc_layers; ++i)
      p.encoder.push_back(EncoderLayer::create(ps, "encoder.layer" + std::to_string(i), mc, rng));
    for (int i = 0; i < mc.transformer.dec_layers; ++i)
      p.decoder.push_back(DecoderLayer::create(ps, "decoder.layer" + std::to_string(i), mc, rng));
    p.decoder_norm = LayerNorm::create(ps, "decoder.norm", mc.channels);
    if (!mc.transformer.two_queries) p.split = Linear::create(ps, "split", mc.channels, 2 * mc.channels, rng);
    return p;
  }

  /// z-tokens for the whole sequence.
  ag::Var encode_joint(const TokenSequence& seq, const ForwardContext& ctx = {}) const {
    if (static_cast<Index>(seq.mask.size()) != seq.length() || seq.pos.rows() != seq.length())
      throw std::invalid_argument("encode_joint: mask/positional length differs from token count");
    const auto pos = ag::constant(seq.pos);
    auto z = seq.tokens;
    for (const auto& layer : encoder) z = layer(z, pos, seq.mask, ctx);
    return z;
  }

  /// Decoder output rows, one per query.
  ag::Var decode_model(const ag::Var& z, const TokenSequence& seq, const ag::Var& queries,
                       const ForwardContext& ctx = {}) const {
    const auto pos = ag::constant(seq.pos);
    auto tgt = ag::constant(Mat::Zero(queries->rows(), queries->cols()));
    for (const auto& layer : decoder) tgt = layer(tgt, queries, z, pos, seq.mask, ctx);
    return decoder_norm(tgt);
  }

  /// One affine map C -> 2C, split into classifier and regressor filters.
  PredictedWeights split_weights(const ag::Var& w) const {
    if (w->rows() != 1) throw std::invalid_argument("split_weights: expects a single 1 x C row");
    const Index c = w->cols();
    const auto both = split(w);
    return {ag::transpose(ag::slice_cols(both, 0, c)), ag::transpose(ag::slice_cols(both, c, c))};
  }

  PredictedWeights weights_from_decoder(const ag::Var& decoded) const {
    if (cfg.two_queries) {
      return {ag::transpose(ag::slice_rows(decoded, 0, 1)), ag::transpose(ag::slice_rows(decoded, 1, 1))};
    }
    return split_weights(decoded);
  }
};

/// Result of one predictor pass: the filters and the encoded test features.
struct PredictorOutput {
  PredictedWeights weights;
  FeatureMap z_test;
};

inline PredictorOutput run_predictor(const ModelPredictor& predictor, const Embeddings& emb, const TokenSequence& seq,
                                     const ForwardContext& ctx = {}) {
  const auto z = predictor.encode_joint(seq, ctx);
  const auto decoded = predictor.decode_model(z, seq, emb.queries, ctx);
  const auto z_test = ag::slice_rows(z, seq.test_offset(), seq.shape.cells());
  return {predictor.weights_from_decoder(decoded), {z_test, seq.shape}};
}

}  // namespace tomp
