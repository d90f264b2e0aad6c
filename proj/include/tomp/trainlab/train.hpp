#pragma once

// Offline training: triplet batches from seeded synthetic (or on-disk)
// sequences, the weighted classification + GIoU objective, and AdamW with
// a single step decay. Training state round-trips through checkpoints so
// a resumed run continues bit-identically.

#include "tomp/eval/dataset.hpp"
#include "tomp/model.hpp"
#include "tomp/objectives.hpp"
#include "tomp/trainlab/checkpoint.hpp"
#include "tomp/trainlab/config_file.hpp"
#include "tomp/trainlab/sampling.hpp"
#include "tomp/trainlab/synthetic.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomp {

struct TrainConfig {
  ModelConfig model;
  std::uint64_t seed = 1;
  int steps = 2000;
  int batch = 4;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double decay_at = 0.6;  // fraction of steps after which lr *= decay_factor
  double decay_factor = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  LossWeights loss;
  GiouSupervision giou_mode = GiouSupervision::foreground_cells;
  int window = 200;
  int train_sequences = 64;
  int sequence_length = 200;
  int distractors = 1;
  double occlusion_rate = 0.25;
  std::string data_dir;  // non-empty: train on a dataset directory instead of synthetic sequences
  AugmentConfig augment;
  std::string checkpoint_path = "model.ckpt";
  std::string trace_path = "loss_trace.csv";
  int checkpoint_every = 0;

  void validate() const {
    model.validate();
    if (steps < 0 || batch < 1) throw std::invalid_argument("TrainConfig: steps >= 0 and batch >= 1 required");
    if (learning_rate < 0.0 || weight_decay < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate or decay");
    if (window < 3) throw std::invalid_argument("TrainConfig: window must be >= 3");
    if (data_dir.empty() && (train_sequences < 1 || sequence_length < 3))
      throw std::invalid_argument("TrainConfig: need >= 1 synthetic sequence of >= 3 frames");
  }
};

inline TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig c;
  c.model = model_config_from(kv);
  c.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", static_cast<long long>(c.seed)));
  c.steps = static_cast<int>(kv.get_int("train.steps", c.steps));
  c.batch = static_cast<int>(kv.get_int("train.batch", c.batch));
  c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
  c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
  c.decay_at = kv.get_double("train.decay_at", c.decay_at);
  c.decay_factor = kv.get_double("train.decay_factor", c.decay_factor);
  c.grad_clip = kv.get_double("train.grad_clip", c.grad_clip);
  c.loss.cls = kv.get_double("loss.lambda_cls", c.loss.cls);
  c.loss.giou = kv.get_double("loss.lambda_giou", c.loss.giou);
  c.loss.tau = kv.get_double("loss.tau", c.loss.tau);
  const auto mode = kv.get_string("loss.giou_cells", "foreground");
  if (mode == "foreground") c.giou_mode = GiouSupervision::foreground_cells;
  else if (mode == "center") c.giou_mode = GiouSupervision::center_cell;
  else throw std::invalid_argument("loss.giou_cells must be foreground or center");
  c.window = static_cast<int>(kv.get_int("data.window", c.window));
  c.train_sequences = static_cast<int>(kv.get_int("data.sequences", c.train_sequences));
  c.sequence_length = static_cast<int>(kv.get_int("data.sequence_length", c.sequence_length));
  c.distractors = static_cast<int>(kv.get_int("data.distractors", c.distractors));
  c.occlusion_rate = kv.get_double("data.occlusion_rate", c.occlusion_rate);
  c.data_dir = kv.get_string("data.dir", c.data_dir);
  c.augment.enabled = kv.get_bool("augment.enabled", c.augment.enabled);
  c.augment.train.center = kv.get_double("augment.train_center_jitter", c.augment.train.center);
  c.augment.train.scale = kv.get_double("augment.train_scale_jitter", c.augment.train.scale);
  c.augment.test.center = kv.get_double("augment.test_center_jitter", c.augment.test.center);
  c.augment.test.scale = kv.get_double("augment.test_scale_jitter", c.augment.test.scale);
  c.augment.flip_probability = kv.get_double("augment.flip_probability", c.augment.flip_probability);
  c.augment.color_jitter = kv.get_double("augment.color_jitter", c.augment.color_jitter);
  c.checkpoint_path = kv.get_string("output.checkpoint", c.checkpoint_path);
  c.trace_path = kv.get_string("output.trace", c.trace_path);
  c.checkpoint_every = static_cast<int>(kv.get_int("output.checkpoint_every", c.checkpoint_every));
  const auto unused = kv.unused_keys();
  if (!unused.empty()) throw std::invalid_argument("unknown config key: " + unused.front());
  c.validate();
  return c;
}

struct LossRecord {
  int step = 0;
  double cls = 0.0;
  double giou = 0.0;
  double total = 0.0;
};

/// Mean total loss of the last window records over that of the first window.
inline double smoothed_loss_ratio(const std::vector<LossRecord>& trace, std::size_t window) {
  if (trace.empty() || window == 0) throw std::invalid_argument("smoothed_loss_ratio: empty trace");
  window = std::min(window, trace.size());
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    head += trace[i].total;
    tail += trace[trace.size() - window + i].total;
  }
  return tail / head;
}

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), model_(cfg_.model, cfg_.seed), rng_(derive_seed(cfg_.seed, "train")) {
    cfg_.validate();
    if (cfg_.data_dir.empty()) {
      for (int i = 0; i < cfg_.train_sequences; ++i)
        sources_.push_back(std::make_unique<SyntheticSequence>(
            collection_spec(cfg_.seed, "train-sequence", i, cfg_.sequence_length, cfg_.distractors, cfg_.occlusion_rate)));
    } else {
      for (const auto& name : list_sequences(cfg_.data_dir))
        sources_.push_back(std::make_unique<DiskSequence>(load_sequence(cfg_.data_dir, name)));
      if (sources_.empty()) throw std::invalid_argument("no sequences found in " + cfg_.data_dir);
    }
    for (const auto& [name, v] : model_.params().entries()) {
      moment1_.push_back(Mat::Zero(v->rows(), v->cols()));
      moment2_.push_back(Mat::Zero(v->rows(), v->cols()));
    }
  }

  const TrainConfig& config() const { return cfg_; }
  ToMPModel& model() { return model_; }
  const ToMPModel& model() const { return model_; }
  int steps_done() const { return step_; }

  double learning_rate_at(int step) const {
    return step >= static_cast<int>(std::floor(cfg_.decay_at * cfg_.steps)) ? cfg_.learning_rate * cfg_.decay_factor
                                                                             : cfg_.learning_rate;
  }

  /// Loss of one triplet. The test-frame box only enters the losses.
  struct TripletLoss {
    ag::Var total;
    double cls = 0.0;
    double giou = 0.0;
  };

  TripletLoss triplet_loss(const TrainingTriplet& t, const ForwardContext& ctx) const {
    std::vector<TrainFrame> train;
    for (std::size_t k = 0; k < 2; ++k)
      train.push_back(model_.annotate(model_.features(patch_to_input(t.patches[k])), t.boxes[k]));
    const auto x_test = model_.features(patch_to_input(t.patches[2]));
    const auto out = model_.forward(train, x_test, {}, ctx);
    const auto label = gaussian_label(t.boxes[2], x_test.shape, cfg_.model.sigma_ratio);
    const auto target = encode_ltrb(t.boxes[2], x_test.shape);
    const auto lcls = loss_cls(out.scores, label.values, cfg_.loss.tau);
    const auto lgiou = loss_giou(out.ltrb, target.values, giou_mask(label, cfg_.loss.tau, cfg_.giou_mode));
    return {loss_total(cfg_.loss, lcls, lgiou.value), lcls->value(0, 0), lgiou.value->value(0, 0)};
  }

  TrainingTriplet sample() {
    const auto& src = *sources_[static_cast<std::size_t>(uniform_int(rng_, 0, static_cast<int>(sources_.size()) - 1))];
    return sample_triplet(src, cfg_.window, rng_, cfg_.augment, cfg_.model.search_factor, cfg_.model.patch_px());
  }

  LossRecord step() {
    auto& ps = model_.params();
    ps.zero_grad();
    LossRecord rec;
    rec.step = step_;
    ForwardContext ctx{true, cfg_.model.transformer.dropout, &rng_};
    for (int b = 0; b < cfg_.batch; ++b) {
      const auto trip = sample();
      auto l = triplet_loss(trip, ctx);
      if (!std::isfinite(l.total->value(0, 0)))
        throw std::runtime_error("non-finite loss at step " + std::to_string(step_) + " (cls " + format_double(l.cls) +
                                 ", giou " + format_double(l.giou) + ", frames " + std::to_string(trip.indices[0]) + "," +
                                 std::to_string(trip.indices[1]) + "," + std::to_string(trip.indices[2]) + ")");
      ag::backward(ag::scale(l.total, 1.0 / cfg_.batch));
      rec.cls += l.cls / cfg_.batch;
      rec.giou += l.giou / cfg_.batch;
    }
    rec.total = loss_total_value(cfg_.loss, rec.cls, rec.giou);
    apply_update();
    ++step_;
    return rec;
  }

  /// Runs the remaining steps, appending to the trace file and writing periodic checkpoints.
  std::vector<LossRecord> run(const std::function<void(const LossRecord&)>& on_step = {}) {
    std::vector<LossRecord> trace;
    std::ofstream csv;
    if (!cfg_.trace_path.empty()) {
      const bool fresh = step_ == 0;
      csv.open(cfg_.trace_path, fresh ? std::ios::trunc : std::ios::app);
      if (!csv) throw std::runtime_error("cannot write loss trace " + cfg_.trace_path);
      if (fresh) csv << "step,L_cls,L_giou,L_tot\n";
    }
    while (step_ < cfg_.steps) {
      const auto rec = step();
      trace.push_back(rec);
      if (csv) csv << rec.step << ',' << format_double(rec.cls) << ',' << format_double(rec.giou) << ','
                   << format_double(rec.total) << '\n';
      if (on_step) on_step(rec);
      if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 && !cfg_.checkpoint_path.empty())
        write_checkpoint(cfg_.checkpoint_path, snapshot());
    }
    if (!cfg_.checkpoint_path.empty()) write_checkpoint(cfg_.checkpoint_path, snapshot());
    return trace;
  }

  /// Parameters, optimizer moments, step counter and generator state.
  Checkpoint snapshot() const {
    KeyValues meta;
    meta.set("train.step", std::to_string(step_));
    meta.set("train.seed", std::to_string(cfg_.seed));
    meta.set("train.rng", rng_state(rng_));
    std::vector<std::pair<std::string, Mat>> extra;
    const auto& entries = model_.params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      extra.emplace_back("adam.m." + entries[i].first, moment1_[i]);
      extra.emplace_back("adam.v." + entries[i].first, moment2_[i]);
    }
    return make_checkpoint(model_, meta, std::move(extra));
  }

  void restore(const Checkpoint& ck) {
    load_parameters(model_, ck);
    const auto& entries = model_.params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const Mat* m = ck.find("adam.m." + entries[i].first);
      const Mat* v = ck.find("adam.v." + entries[i].first);
      if (!m || !v) throw CheckpointError("checkpoint lacks optimizer state for " + entries[i].first);
      moment1_[i] = *m;
      moment2_[i] = *v;
    }
    step_ = static_cast<int>(ck.header.get_int("train.step", 0));
    set_rng_state(rng_, ck.header.get_string("train.rng", ""));
  }

 private:
  void apply_update() {
    auto& entries = model_.params().entries();
    double clip_scale = 1.0;
    if (cfg_.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& [name, v] : entries)
        if (v->has_grad()) sq += v->grad.squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
    }
    const double lr = learning_rate_at(step_);
    const double t = static_cast<double>(step_ + 1);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      Mat& p = entries[i].second->value;
      const Mat g = entries[i].second->has_grad() ? Mat(entries[i].second->grad * clip_scale) : Mat::Zero(p.rows(), p.cols());
      moment1_[i] = cfg_.beta1 * moment1_[i] + (1.0 - cfg_.beta1) * g;
      moment2_[i] = cfg_.beta2 * moment2_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      p *= 1.0 - lr * cfg_.weight_decay;
      p.array() -= lr * (moment1_[i].array() / bc1) / ((moment2_[i].array() / bc2).sqrt() + cfg_.adam_eps);
    }
  }

  TrainConfig cfg_;
  ToMPModel model_;
  Rng rng_;
  std::vector<std::unique_ptr<FrameSource>> sources_;
  std::vector<Mat> moment1_, moment2_;
  int step_ = 0;
};

}  // namespace tomp
