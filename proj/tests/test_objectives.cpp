#include "test_support.hpp"
#include "tomp/objectives.hpp"

#include <gtest/gtest.h>

using namespace tomp;
using tomp::testing::random_box;
using tomp::testing::random_mat;

namespace {

// Boxes sharing an anchor at the origin: l, t, r, b extents.
BoxXYWH anchored(const double* d) { return {-d[0], -d[1], d[0] + d[2], d[1] + d[3], Frame::patch}; }

}  // namespace

TEST(ClassificationLoss, MatchesHingeOracle) {
  Rng rng(50);
  const Mat pred = random_mat(30, 1, rng, -0.5, 1.5);
  const Mat label = random_mat(30, 1, rng, 0.0, 0.2);
  const double tau = 0.05;
  double s = 0.0;
  for (Index i = 0; i < 30; ++i) {
    const double r = label(i, 0) > tau ? pred(i, 0) - label(i, 0) : std::max(0.0, pred(i, 0));
    s += r * r;
  }
  EXPECT_NEAR(loss_cls_value(pred, label, tau), s / 30.0, 1e-14);
  auto p = ag::parameter(pred);
  const auto rep = check_gradients([&] { return loss_cls(p, label, tau); }, {p});
  EXPECT_LT(rep.max_rel_error, 1e-6);
}

TEST(ClassificationLoss, NegativeBackgroundScoresCostNothing) {
  Mat pred(3, 1), label(3, 1);
  pred << -0.4, -2.0, 0.7;
  label << 0.0, 0.01, 0.7;
  EXPECT_EQ(loss_cls_value(pred, label, 0.05), 0.0);
}

TEST(GiouLoss, AgreesWithBoxGiou) {
  Rng rng(51);
  for (int i = 0; i < 500; ++i) {
    double p[4], q[4];
    for (int k = 0; k < 4; ++k) {
      p[k] = uniform(rng, 0.01, 1.0);
      q[k] = uniform(rng, -0.3, 1.0);
    }
    if (q[0] + q[2] <= 0.01 || q[1] + q[3] <= 0.01) continue;
    const auto t = detail::giou_terms(p, q);
    EXPECT_NEAR(t.loss, 1.0 - giou(anchored(p), anchored(q)), 1e-12);
    EXPECT_GE(t.loss, 0.0);
    EXPECT_LE(t.loss, 2.0);
  }
}

TEST(GiouLoss, ZeroIffEqual) {
  Rng rng(52);
  for (int i = 0; i < 200; ++i) {
    double p[4], q[4];
    for (int k = 0; k < 4; ++k) p[k] = q[k] = uniform(rng, 0.05, 1.0);
    EXPECT_NEAR(detail::giou_terms(p, q).loss, 0.0, 1e-15);
    q[uniform_int(rng, 0, 3)] += uniform(rng, 1e-3, 0.5);
    EXPECT_GT(detail::giou_terms(p, q).loss, 0.0);
  }
}

TEST(GiouLoss, GradientMatchesFiniteDifferences) {
  Rng rng(53);
  const Mat target = random_mat(6, 4, rng, 0.1, 1.0);
  auto pred = ag::parameter(random_mat(6, 4, rng, 0.1, 1.0));
  const std::vector<char> mask = {1, 0, 1, 1, 0, 1};
  const auto rep = check_gradients([&] { return loss_giou(pred, target, mask).value; }, {pred});
  EXPECT_LT(rep.max_rel_error, 1e-6);
  const auto masked = loss_giou(pred, target, mask);
  ag::backward(masked.value);
  EXPECT_EQ(pred->grad.row(1).cwiseAbs().sum(), 0.0);
}

TEST(GiouLoss, EmptyForegroundIsFlaggedZero) {
  auto pred = ag::parameter(Mat::Ones(3, 4));
  const auto l = loss_giou(pred, Mat::Ones(3, 4), {0, 0, 0});
  EXPECT_TRUE(l.empty_foreground);
  EXPECT_EQ(l.value->value(0, 0), 0.0);
}

TEST(GiouLoss, SupervisionMask) {
  const GridShape g{5, 5, 16};
  const auto label = gaussian_label({30, 30, 20, 20, Frame::patch}, g);
  const auto fg = giou_mask(label, 0.05);
  const auto center = giou_mask(label, 0.05, GiouSupervision::center_cell);
  int nf = 0, nc = 0;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    nf += fg[i];
    nc += center[i];
    EXPECT_EQ(fg[i] != 0, label.values(static_cast<Index>(i), 0) > 0.05);
  }
  EXPECT_EQ(nc, 1);
  EXPECT_EQ(center[static_cast<std::size_t>(label.peak)], 1);
  EXPECT_GE(nf, 1);
}

TEST(TotalLoss, WeightedSum) {
  const auto a = ag::constant(Mat::Constant(1, 1, 0.3));
  const auto b = ag::constant(Mat::Constant(1, 1, 0.7));
  const LossWeights w;
  EXPECT_NEAR(loss_total(w, a, b)->value(0, 0), 100.0 * 0.3 + 0.7, 1e-12);
  EXPECT_NEAR(loss_total_value(w, 0.3, 0.7), 30.7, 1e-12);
}

TEST(GradientCheck, DetectsWrongGradient) {
  auto a = ag::parameter(Mat::Constant(1, 1, 2.0));
  // exp with a deliberately broken backward.
  auto broken = [&] {
    Mat v(1, 1);
    v(0, 0) = std::exp(a->value(0, 0));
    return ag::detail::make_result(v, {a}, [](ag::Node& self) { self.parents[0]->grad_ref() += 0.5 * self.grad; });
  };
  EXPECT_GT(check_gradients(broken, {a}).max_rel_error, 0.5);
}
