#pragma once

// Online tracking loop: search-patch extraction around the previous box,
// model prediction from the sample memory, scoring and box decoding, and
// confidence-gated memory updates.

#include "tomp/baseline_dcf.hpp"
#include "tomp/heads.hpp"
#include "tomp/imaging.hpp"
#include "tomp/model.hpp"

#include <opencv2/core.hpp>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomp {

enum class PredictorKind { transformer, dcf };

inline PredictorKind parse_predictor_kind(const std::string& s) {
  if (s == "transformer") return PredictorKind::transformer;
  if (s == "dcf") return PredictorKind::dcf;
  throw std::invalid_argument("unknown predictor '" + s + "' (expected transformer or dcf)");
}

inline const char* to_string(PredictorKind k) { return k == PredictorKind::dcf ? "dcf" : "transformer"; }

struct TrackerConfig {
  double eta = 0.90;
  double not_found_threshold = 0.25;
  double search_factor = 5.0;
  /// One initial frame plus capacity - 1 recent frames.
  int memory_capacity = 2;
  PredictorKind predictor = PredictorKind::transformer;
  bool two_stage = true;
  int dcf_iters = 5;
  double dcf_lambda = 0.01;
  double tau = 0.05;
  double min_box_size = 4.0;

  void validate() const {
    if (!(0.0 < not_found_threshold && not_found_threshold < eta && eta <= 1.0))
      throw std::invalid_argument("TrackerConfig: need 0 < not_found_threshold < eta <= 1");
    if (memory_capacity < 1) throw std::invalid_argument("TrackerConfig: memory capacity must be at least 1");
    if (!(search_factor > 1.0)) throw std::invalid_argument("TrackerConfig: search factor must exceed 1");
    if (dcf_iters < 0) throw std::invalid_argument("TrackerConfig: dcf_iters must be nonnegative");
  }
};

struct MemorySample {
  TrainFrame frame;
  double confidence = 1.0;
  bool is_initial = false;
  /// Annotation source; only the initial sample carries ground truth.
  bool from_ground_truth = false;
  int frame_index = 0;
};

struct TrackerState {
  BoxXYWH box;
  std::vector<MemorySample> memory;
  bool found = true;
  int frame_index = 0;
};

struct TrackResult {
  BoxXYWH box;
  double confidence = 0.0;
  bool found = false;
};

/// Filters and features produced for one test frame.
struct TwoStageWeights {
  ag::Var w_cls;
  ag::Var w_bbreg;
  FeatureMap z_cls;
  FeatureMap z_box;
};

/// Keeps the initial sample; a confident sample fills a free recent slot or
/// replaces the oldest recent one.
inline void update_memory(TrackerState& state, MemorySample sample, double eta, int capacity) {
  if (state.memory.empty() || !state.memory.front().is_initial)
    throw std::logic_error("update_memory: tracker state has no initial sample");
  if (!(sample.confidence > eta) || capacity < 2) return;
  sample.is_initial = false;
  if (static_cast<int>(state.memory.size()) >= capacity) state.memory.erase(state.memory.begin() + 1);
  state.memory.push_back(std::move(sample));
}

class Tracker {
 public:
  Tracker(const ToMPModel& model, TrackerConfig cfg) : model_(model), cfg_(cfg) { cfg_.validate(); }

  const TrackerConfig& config() const { return cfg_; }

  TrackerState init(const cv::Mat& frame, const BoxXYWH& box) const {
    require_valid(box, "Tracker::init");
    if (box.frame != Frame::image) throw std::invalid_argument("Tracker::init: box must be in image coordinates");
    ag::NoGradGuard no_grad;
    const auto crop = make_crop(box, cfg_.search_factor, model_.config().patch_px());
    const auto x = model_.features(patch_to_input(extract_patch(frame, crop)));
    TrackerState s;
    s.box = box;
    s.memory.push_back({model_.annotate(x, crop.to_patch(box)), 1.0, true, true, 0});
    return s;
  }

  /// Stage one uses every memory frame (classifier); stage two masks all but
  /// the initial frame (box regressor). Both share one token sequence.
  TwoStageWeights predict_two_stage(const TrackerState& state, const FeatureMap& x_test) const {
    if (state.memory.empty()) throw std::logic_error("predict_two_stage: empty memory");
    std::vector<FeatureMap> v;
    for (const auto& m : state.memory) v.push_back(model_.train_tokens(m.frame));
    const auto v_test = model_.test_tokens(x_test);
    const auto full = build_sequence(v, v_test);
    const auto stage1 = run_predictor(model_.predictor(), model_.embeddings(), full);
    const bool masks_differ = state.memory.size() > 1;
    if (!cfg_.two_stage || !masks_differ) {
      return {stage1.weights.cls, stage1.weights.bbreg, stage1.z_test, stage1.z_test};
    }
    TokenSequence initial_only = full;
    std::vector<bool> exclude(state.memory.size(), true);
    exclude[0] = false;
    for (Index i = 0; i < initial_only.length(); ++i) {
      const int src = initial_only.source[static_cast<std::size_t>(i)];
      if (src < initial_only.train_frames && exclude[static_cast<std::size_t>(src)]) initial_only.mask[static_cast<std::size_t>(i)] = 1;
    }
    const auto stage2 = run_predictor(model_.predictor(), model_.embeddings(), initial_only);
    return {stage1.weights.cls, stage2.weights.bbreg, stage1.z_test, stage2.z_test};
  }

  TrackResult track(TrackerState& state, const cv::Mat& frame) const {
    if (state.memory.empty()) throw std::logic_error("Tracker::track: state not initialized");
    ag::NoGradGuard no_grad;
    ++state.frame_index;
    const auto crop = make_crop(state.box, cfg_.search_factor, model_.config().patch_px());
    const auto x_test = model_.features(patch_to_input(extract_patch(frame, crop)));

    ScoreMap scores{Mat(), x_test.shape};
    DenseLTRB ltrb{Mat(), x_test.shape};
    if (cfg_.predictor == PredictorKind::transformer) {
      const auto w = predict_two_stage(state, x_test);
      scores.values = target_scores(w.w_cls, w.z_cls)->value;
      ltrb.values = regress_boxes(w.w_bbreg, w.z_box, model_.head())->value;
    } else {
      DCFProblem problem;
      problem.lambda = cfg_.dcf_lambda;
      problem.tau = cfg_.tau;
      for (const auto& m : state.memory) {
        problem.features.push_back(m.frame.features.values->value);
        problem.labels.push_back(m.frame.label.values);
      }
      const auto dcf = dcf_optimize(problem, cfg_.dcf_iters);
      scores.values = x_test.values->value * dcf.w;
      TrackerState initial_only;
      initial_only.memory.push_back(state.memory.front());
      const auto w = predict_two_stage(initial_only, x_test);
      ltrb.values = regress_boxes(w.w_bbreg, w.z_box, model_.head())->value;
    }

    const auto pred = decode_prediction(scores, ltrb, crop);
    TrackResult out;
    out.confidence = pred.confidence;
    out.found = pred.box.has_value() && pred.confidence >= cfg_.not_found_threshold;
    if (out.found) state.box = sanitize(*pred.box, frame.cols, frame.rows);
    state.found = out.found;
    out.box = state.box;

    if (out.found) {
      MemorySample sample{model_.annotate(x_test, crop.to_patch(state.box)), pred.confidence, false, false,
                          state.frame_index};
      update_memory(state, std::move(sample), cfg_.eta, cfg_.memory_capacity);
    }
    return out;
  }

 private:
  /// Keeps the center inside the image and the size within [min_box_size, image size].
  BoxXYWH sanitize(BoxXYWH b, int width, int height) const {
    const double w = std::clamp(b.w, cfg_.min_box_size, static_cast<double>(width));
    const double h = std::clamp(b.h, cfg_.min_box_size, static_cast<double>(height));
    const double cx = std::clamp(b.cx(), 0.0, static_cast<double>(width));
    const double cy = std::clamp(b.cy(), 0.0, static_cast<double>(height));
    return {cx - 0.5 * w, cy - 0.5 * h, w, h, Frame::image};
  }

  const ToMPModel& model_;
  TrackerConfig cfg_;
};

}  // namespace tomp
