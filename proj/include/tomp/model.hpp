#pragma once

// The full model: backbone, target-state encoders, transformer predictor
// and box head sharing one named parameter set.

#include "tomp/config.hpp"
#include "tomp/core/layers.hpp"
#include "tomp/encoding.hpp"
#include "tomp/heads.hpp"
#include "tomp/predictor.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace tomp {

/// Annotated training frame in patch coordinates.
struct TrainFrame {
  FeatureMap features;
  GaussianLabel label;
  DenseLTRB ltrb;
};

struct ModelOutput {
  ag::Var scores;  // cells x 1
  ag::Var ltrb;    // cells x 4
  PredictorOutput predictor;
};

class ToMPModel {
 public:
  ToMPModel(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
    cfg.validate();
    Rng rng(derive_seed(seed, "model-init"));
    backbone_ = TinyBackbone::create(params_, cfg, rng);
    if (cfg.use_extent_encoding) extent_ = ExtentMLP::create(params_, cfg, rng);
    embeddings_ = Embeddings::create(params_, cfg, rng);
    predictor_ = ModelPredictor::create(params_, cfg, rng);
    head_ = BoxHeadCNN::create(params_, cfg, rng);
  }

  // Layers hold shared parameter handles; a copy would alias them.
  ToMPModel(const ToMPModel&) = delete;
  ToMPModel& operator=(const ToMPModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const TinyBackbone& backbone() const { return backbone_; }
  const ExtentMLP* extent() const { return config_.use_extent_encoding ? &extent_ : nullptr; }
  const Embeddings& embeddings() const { return embeddings_; }
  const ModelPredictor& predictor() const { return predictor_; }
  const BoxHeadCNN& head() const { return head_; }

  FeatureMap features(const Mat& patch_input) const {
    return backbone_(ag::constant(patch_input), config_.patch_px(), config_.stride);
  }

  /// Label and ltrb encodings for a box given in patch coordinates.
  TrainFrame annotate(const FeatureMap& x, const BoxXYWH& box_patch) const {
    if (box_patch.frame != Frame::patch) throw std::invalid_argument("annotate: box must be in patch coordinates");
    return {x, gaussian_label(box_patch, x.shape, config_.sigma_ratio), encode_ltrb(box_patch, x.shape)};
  }

  FeatureMap train_tokens(const TrainFrame& f) const {
    return assemble_train_tokens(f.features, f.label, f.ltrb, extent(), embeddings_);
  }

  FeatureMap test_tokens(const FeatureMap& x) const { return assemble_test_tokens(x, embeddings_.test); }

  /// Predictor pass over the given training frames and test features, then both heads.
  ModelOutput forward(const std::vector<TrainFrame>& train, const FeatureMap& test_features,
                      const std::vector<bool>& exclude_train = {}, const ForwardContext& ctx = {}) const {
    std::vector<FeatureMap> v;
    v.reserve(train.size());
    for (const auto& f : train) v.push_back(train_tokens(f));
    const auto seq = build_sequence(v, test_tokens(test_features), exclude_train);
    ForwardContext c = ctx;
    c.dropout = config_.transformer.dropout;
    auto pred = run_predictor(predictor_, embeddings_, seq, c);
    ModelOutput out;
    out.scores = target_scores(pred.weights.cls, pred.z_test);
    out.ltrb = regress_boxes(pred.weights.bbreg, pred.z_test, head_);
    out.predictor = std::move(pred);
    return out;
  }

 private:
  ModelConfig config_;
  ParameterSet params_;
  TinyBackbone backbone_;
  ExtentMLP extent_;
  Embeddings embeddings_;
  ModelPredictor predictor_;
  BoxHeadCNN head_;
};

}  // namespace tomp
