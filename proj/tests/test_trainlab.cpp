#include "test_support.hpp"
#include "tomp/trainlab/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace tomp;
using tomp::testing::tiny_config;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tomp_trainlab_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

TrainConfig tiny_train(int steps) {
  TrainConfig c;
  c.model = tiny_config(3);
  c.model.transformer.dropout = 0.1;
  c.steps = steps;
  c.batch = 2;
  c.learning_rate = 3e-3;
  c.train_sequences = 4;
  c.sequence_length = 30;
  c.window = 30;
  c.checkpoint_path.clear();
  c.trace_path.clear();
  return c;
}

bool same_values(const ToMPModel& a, const ToMPModel& b) {
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i)
    if (ea[i].first != eb[i].first || ea[i].second->value != eb[i].second->value) return false;
  return true;
}

}  // namespace

TEST(Synthetic, DeterministicPerSeed) {
  const SyntheticSequence a(collection_spec(9, "t", 0, 20, 1)), b(collection_spec(9, "t", 0, 20, 1));
  const SyntheticSequence c(collection_spec(9, "t", 1, 20, 1));
  for (int t : {0, 7, 19}) {
    EXPECT_EQ(cv::norm(a.frame(t), b.frame(t), cv::NORM_INF), 0.0);
    EXPECT_EQ(a.box(t).x, b.box(t).x);
  }
  EXPECT_GT(cv::norm(a.frame(0), c.frame(0), cv::NORM_INF), 0.0);
}

TEST(Synthetic, BoxesStayInsideCanvas) {
  for (int i = 0; i < 20; ++i) {
    const SyntheticSequence s(collection_spec(3, "bounds", i, 150, 2));
    const auto& spec = s.spec();
    for (int t = 0; t < s.length(); ++t) {
      const auto b = s.box(t);
      ASSERT_TRUE(b.valid());
      EXPECT_GE(b.x, 0.0);
      EXPECT_GE(b.y, 0.0);
      EXPECT_LE(b.x + b.w, spec.canvas_width);
      EXPECT_LE(b.y + b.h, spec.canvas_height);
    }
    for (const auto& o : spec.occlusions) {
      EXPECT_GE(o.begin, 0);
      EXPECT_LE(o.end, s.length());
    }
  }
  SyntheticSequenceSpec huge;
  huge.min_size = huge.max_size = 400.0;
  EXPECT_THROW(SyntheticSequence{huge}, std::invalid_argument);
}

TEST(Sampling, IndicesSortedDistinctWithinWindow) {
  Rng rng(90);
  for (int i = 0; i < 2000; ++i) {
    const int length = uniform_int(rng, 3, 300);
    const int window = uniform_int(rng, 3, 250);
    const auto idx = sample_indices(length, window, rng);
    EXPECT_LT(idx[0], idx[1]);
    EXPECT_LT(idx[1], idx[2]);
    EXPECT_GE(idx[0], 0);
    EXPECT_LT(idx[2], length);
    EXPECT_LT(idx[2] - idx[0], std::min(window, length));
  }
  EXPECT_THROW(sample_indices(2, 10, rng), std::invalid_argument);
}

TEST(Sampling, TripletBoxesFollowCrop) {
  const SyntheticSequence s(collection_spec(4, "triplet", 0, 40, 0));
  Rng rng(91);
  AugmentConfig off;
  off.enabled = false;
  const auto t = sample_triplet(s, 40, rng, off, 5.0, 48);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(t.patches[k].rows, 48);
    EXPECT_NEAR(t.boxes[k].cx(), 24.0, 1e-9);  // no jitter: centered
    EXPECT_EQ(t.boxes[k].frame, Frame::patch);
  }
  AugmentConfig flip;
  flip.flip_probability = 1.0;
  flip.train = flip.test = JitterConfig{0.0, 0.0};
  flip.color_jitter = 0.0;
  Rng r1(5), r2(5);
  const auto a = sample_triplet(s, 40, r1, off, 5.0, 48);
  const auto b = sample_triplet(s, 40, r2, flip, 5.0, 48);
  EXPECT_TRUE(b.flipped);
  cv::Mat mirrored;
  cv::flip(a.patches[0], mirrored, 1);
  EXPECT_EQ(cv::norm(mirrored, b.patches[0], cv::NORM_INF), 0.0);
  EXPECT_NEAR(b.boxes[0].x, 48.0 - a.boxes[0].x - a.boxes[0].w, 1e-9);
}

TEST(ConfigFile, ParsesAndRejects) {
  const auto kv = KeyValues::parse("# comment\nmodel.channels = 16  # trailing\ntrain.steps=5\n\n");
  EXPECT_EQ(kv.get_int("model.channels", 0), 16);
  EXPECT_THROW(KeyValues::parse("a = 1\na = 2\n"), std::invalid_argument);
  EXPECT_THROW(KeyValues::parse("no equals sign\n"), std::invalid_argument);
  EXPECT_THROW(KeyValues::parse("x = abc\n").get_int("x", 0), std::invalid_argument);
  EXPECT_THROW(train_config_from(KeyValues::parse("train.stepz = 5\n")), std::invalid_argument);
  EXPECT_THROW(train_config_from(KeyValues::parse("loss.giou_cells = all\n")), std::invalid_argument);
  const auto c = train_config_from(KeyValues::parse("train.steps = 7\nmodel.channels = 16\nmodel.heads = 4\n"));
  EXPECT_EQ(c.steps, 7);
  EXPECT_EQ(c.model.channels, 16);
}

TEST(ConfigFile, ModelConfigRoundTrip) {
  auto cfg = tiny_config(3);
  cfg.use_bg_embedding = true;
  cfg.transformer.two_queries = true;
  cfg.sigma_ratio = 0.3;
  KeyValues kv;
  write_model_config(cfg, kv);
  const auto back = model_config_from(KeyValues::parse(kv.to_string()));
  EXPECT_EQ(back.channels, cfg.channels);
  EXPECT_EQ(back.backbone_widths, cfg.backbone_widths);
  EXPECT_TRUE(back.use_bg_embedding);
  EXPECT_TRUE(back.transformer.two_queries);
  EXPECT_EQ(back.sigma_ratio, 0.3);
}

TEST(Checkpoint, RoundTripRestoresModel) {
  ToMPModel a(tiny_config(3), 1), b(tiny_config(3), 2);
  ASSERT_FALSE(same_values(a, b));
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, a);
  load_parameters(b, read_checkpoint(path));
  EXPECT_TRUE(same_values(a, b));
  const auto c = load_model(path);
  EXPECT_TRUE(same_values(a, *c));
  EXPECT_EQ(c->config().score_size, 3);
}

TEST(Checkpoint, DetectsCorruptionAndTruncation) {
  ToMPModel a(tiny_config(3), 1);
  const auto path = temp_path("corrupt.ckpt");
  save_checkpoint(path, a);
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  auto write = [&](const std::string& data) { std::ofstream(path, std::ios::binary | std::ios::trunc) << data; };

  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  write(flipped);
  EXPECT_THROW(read_checkpoint(path), CheckpointError);

  write(bytes.substr(0, bytes.size() - 20));
  EXPECT_THROW(read_checkpoint(path), CheckpointError);

  std::string version = bytes;
  version[8] = 9;
  write(version);
  try {
    read_checkpoint(path);
    FAIL() << "version mismatch accepted";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  write("garbage");
  EXPECT_THROW(read_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, ShapeMismatchNamesParameter) {
  ToMPModel small(tiny_config(3), 1);
  auto wide_cfg = tiny_config(3);
  wide_cfg.transformer.ffn_width = 20;
  ToMPModel wide(wide_cfg, 1);
  try {
    load_parameters(wide, make_checkpoint(small));
    FAIL() << "mismatch accepted";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.layer0.ffn.fc1.weight"), std::string::npos) << e.what();
  }
}

TEST(Trainer, AdamWFirstStepOracle) {
  auto cfg = tiny_train(10);  // step 0 is before the decay point
  cfg.weight_decay = 0.01;
  Trainer t(cfg);
  std::vector<Mat> before;
  for (const auto& [n, v] : t.model().params().entries()) before.push_back(v->value);
  t.step();
  std::size_t i = 0, checked = 0;
  for (const auto& [n, v] : t.model().params().entries()) {
    const Mat& p0 = before[i++];
    if (!v->has_grad()) continue;
    // With bias correction the first update is lr * g / (|g| + eps).
    const Mat expect = (p0 * (1.0 - cfg.learning_rate * cfg.weight_decay)).array() -
                       cfg.learning_rate * v->grad.array() / (v->grad.array().abs() + cfg.adam_eps);
    EXPECT_LT((v->value - expect).cwiseAbs().maxCoeff(), 1e-12) << n;
    ++checked;
  }
  EXPECT_GT(checked, 10u);
}

TEST(Trainer, LearningRateDecaysOnce) {
  auto cfg = tiny_train(100);
  cfg.decay_at = 0.6;
  cfg.decay_factor = 0.2;
  Trainer t(cfg);
  EXPECT_DOUBLE_EQ(t.learning_rate_at(59), cfg.learning_rate);
  EXPECT_DOUBLE_EQ(t.learning_rate_at(60), 0.2 * cfg.learning_rate);
  EXPECT_DOUBLE_EQ(t.learning_rate_at(99), 0.2 * cfg.learning_rate);
}

TEST(Trainer, ResumeIsBitIdentical) {
  Trainer straight(tiny_train(4));
  straight.run();
  Trainer first(tiny_train(4));
  first.step();
  first.step();
  const auto path = temp_path("resume.ckpt");
  write_checkpoint(path, first.snapshot());
  Trainer resumed(tiny_train(4));
  resumed.restore(read_checkpoint(path));
  EXPECT_EQ(resumed.steps_done(), 2);
  resumed.run();
  EXPECT_TRUE(same_values(straight.model(), resumed.model()));
}

TEST(Trainer, TraceFileAndLossDecrease) {
  auto cfg = tiny_train(120);
  cfg.trace_path = temp_path("trace.csv");
  cfg.augment.enabled = false;
  Trainer t(cfg);
  const auto trace = t.run();
  ASSERT_EQ(trace.size(), 120u);
  std::ifstream f(cfg.trace_path);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "step,L_cls,L_giou,L_tot");
  int lines = 0;
  for (std::string line; std::getline(f, line);) ++lines;
  EXPECT_EQ(lines, 120);
  for (const auto& r : trace) EXPECT_NEAR(r.total, 100.0 * r.cls + r.giou, 1e-9);
  EXPECT_LT(smoothed_loss_ratio(trace, 20), 1.0);
}

TEST(Trainer, NonFiniteLossAborts) {
  auto cfg = tiny_train(3);
  Trainer t(cfg);
  t.model().params().get("split.bias")->value.setConstant(std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(t.step(), std::runtime_error);
}
