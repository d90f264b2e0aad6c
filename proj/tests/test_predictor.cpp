#include "test_support.hpp"
#include "tomp/model.hpp"
#include "tomp/objectives.hpp"

#include <gtest/gtest.h>

using namespace tomp;
using tomp::testing::probe;
using tomp::testing::random_mat;
using tomp::testing::tiny_config;

namespace {

FeatureMap random_map(Rng& rng, GridShape g = {2, 2, 16}, Index c = 8) {
  return {ag::constant(random_mat(g.cells(), c, rng)), g};
}

std::vector<ag::Var> params_with_prefix(const ParameterSet& ps, const std::string& prefix) {
  std::vector<ag::Var> out;
  for (const auto& [n, v] : ps.entries())
    if (n.rfind(prefix, 0) == 0) out.push_back(v);
  return out;
}

}  // namespace

TEST(TokenSequence, LayoutAndMask) {
  Rng rng(30);
  const auto seq = build_sequence({random_map(rng), random_map(rng)}, random_map(rng), {false, true});
  EXPECT_EQ(seq.length(), 12);
  EXPECT_EQ(seq.test_offset(), 8);
  EXPECT_EQ(seq.masked_count(), 4);
  for (Index i = 0; i < 12; ++i) {
    EXPECT_EQ(seq.source[static_cast<std::size_t>(i)], static_cast<int>(i / 4));
    EXPECT_EQ(seq.mask[static_cast<std::size_t>(i)] != 0, i >= 4 && i < 8);
  }
  // Each frame reuses the same spatial encoding.
  EXPECT_EQ((seq.pos.middleRows(0, 4) - seq.pos.middleRows(8, 4)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(build_sequence({}, random_map(rng)), std::invalid_argument);
  EXPECT_THROW(build_sequence({random_map(rng)}, random_map(rng), {true, false}), std::invalid_argument);
}

TEST(Attention, MaskedKeysDoNotInfluenceOutput) {
  Rng rng(31);
  ParameterSet ps;
  const auto mha = MultiHeadAttention::create(ps, "mha", 8, 2, rng);
  const Mat q = random_mat(3, 8, rng);
  Mat kv = random_mat(6, 8, rng);
  const std::vector<char> mask = {0, 0, 1, 1, 0, 0};
  const Mat before = mha(ag::constant(q), ag::constant(kv), ag::constant(kv), mask)->value;
  kv.middleRows(2, 2) = random_mat(2, 8, rng, -50.0, 50.0);
  const Mat after = mha(ag::constant(q), ag::constant(kv), ag::constant(kv), mask)->value;
  EXPECT_LT((before - after).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, SingleKeyReturnsProjectedValue) {
  Rng rng(32);
  ParameterSet ps;
  const auto mha = MultiHeadAttention::create(ps, "mha", 8, 4, rng);
  const Mat v = random_mat(1, 8, rng);
  const auto out = mha(ag::constant(random_mat(2, 8, rng)), ag::constant(random_mat(1, 8, rng)), ag::constant(v), {});
  const Mat expect = mha.out_proj(mha.v_proj(ag::constant(v)))->value;
  for (Index i = 0; i < 2; ++i) EXPECT_LT((out->value.row(i) - expect.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predictor, EncoderDecoderSplitGradients) {
  const auto cfg = tiny_config();
  ToMPModel model(cfg, 5);
  Rng rng(33);
  const auto seq = build_sequence({random_map(rng), random_map(rng)}, random_map(rng), {false, true});
  const Mat rz = random_mat(4, 8, rng), rc = random_mat(8, 1, rng), rb = random_mat(8, 1, rng);
  auto fn = [&] {
    const auto out = run_predictor(model.predictor(), model.embeddings(), seq);
    return ag::add(probe(out.z_test.values, rz), ag::add(probe(out.weights.cls, rc), probe(out.weights.bbreg, rb)));
  };
  for (const char* prefix : {"encoder.", "decoder.", "split.", "embed."}) {
    const auto params = params_with_prefix(model.params(), prefix);
    ASSERT_FALSE(params.empty()) << prefix;
    const auto rep = check_gradients(fn, params);
    EXPECT_TRUE(rep.finite) << prefix;
    EXPECT_LT(rep.max_rel_error, 1e-4) << prefix << " abs " << rep.max_abs_error;
  }
}

TEST(Predictor, MaskedFrameEqualsOmittedFrame) {
  Rng rng(34);
  for (int trial = 0; trial < 3; ++trial) {
    const auto cfg = tiny_config(3);
    ToMPModel model(cfg, static_cast<std::uint64_t>(100 + trial));
    const GridShape g{3, 3, 16};
    const auto f0 = random_map(rng, g), f1 = random_map(rng, g), t = random_map(rng, g);
    const auto masked = run_predictor(model.predictor(), model.embeddings(), build_sequence({f0, f1}, t, {false, true}));
    const auto alone = run_predictor(model.predictor(), model.embeddings(), build_sequence({f0}, t));
    EXPECT_LT((masked.weights.bbreg->value - alone.weights.bbreg->value).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((masked.weights.cls->value - alone.weights.cls->value).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((masked.z_test.values->value - alone.z_test.values->value).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Predictor, TwoQueryDecoderProducesBothFilters) {
  auto cfg = tiny_config();
  cfg.transformer.two_queries = true;
  ToMPModel model(cfg, 6);
  EXPECT_FALSE(model.params().contains("split.weight"));
  Rng rng(35);
  const auto out = run_predictor(model.predictor(), model.embeddings(), build_sequence({random_map(rng)}, random_map(rng)));
  EXPECT_EQ(out.weights.cls->rows(), 8);
  EXPECT_EQ(out.weights.bbreg->rows(), 8);
  EXPECT_GT((out.weights.cls->value - out.weights.bbreg->value).norm(), 0.0);
}

TEST(Predictor, DropoutOnlyInTraining) {
  auto cfg = tiny_config();
  cfg.transformer.dropout = 0.3;
  ToMPModel model(cfg, 7);
  Rng rng(36);
  const auto seq = build_sequence({random_map(rng)}, random_map(rng));
  const auto a = run_predictor(model.predictor(), model.embeddings(), seq);
  const auto b = run_predictor(model.predictor(), model.embeddings(), seq);
  EXPECT_EQ((a.weights.cls->value - b.weights.cls->value).cwiseAbs().maxCoeff(), 0.0);
  Rng drop(1);
  const auto c = run_predictor(model.predictor(), model.embeddings(), seq, ForwardContext{true, 0.3, &drop});
  EXPECT_GT((a.weights.cls->value - c.weights.cls->value).cwiseAbs().maxCoeff(), 0.0);
}
