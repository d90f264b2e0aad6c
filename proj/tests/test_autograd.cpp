#include "test_support.hpp"
#include "tomp/core/layers.hpp"
#include "tomp/objectives.hpp"

#include <gtest/gtest.h>

using namespace tomp;
using tomp::testing::probe;
using tomp::testing::random_mat;

namespace {

constexpr double kGradTol = 1e-6;

void expect_grad_ok(const std::function<ag::Var()>& fn, const std::vector<ag::Var>& params, double tol = kGradTol) {
  const auto rep = check_gradients(fn, params);
  EXPECT_TRUE(rep.finite);
  EXPECT_GT(rep.checked, 0u);
  EXPECT_LT(rep.max_rel_error, tol) << "abs " << rep.max_abs_error;
}

}  // namespace

TEST(Autograd, BinaryOps) {
  Rng rng(1);
  auto a = ag::parameter(random_mat(3, 4, rng));
  auto b = ag::parameter(random_mat(3, 4, rng));
  auto c = ag::parameter(random_mat(4, 2, rng));
  const Mat r34 = random_mat(3, 4, rng), r32 = random_mat(3, 2, rng), r33 = random_mat(3, 3, rng);
  expect_grad_ok([&] { return probe(ag::add(a, b), r34); }, {a, b});
  expect_grad_ok([&] { return probe(ag::sub(a, b), r34); }, {a, b});
  expect_grad_ok([&] { return probe(ag::mul(a, b), r34); }, {a, b});
  expect_grad_ok([&] { return probe(ag::scale(a, -2.5), r34); }, {a});
  expect_grad_ok([&] { return probe(ag::matmul(a, c), r32); }, {a, c});
  expect_grad_ok([&] { return probe(ag::matmul_nt(a, b), r33); }, {a, b});
  expect_grad_ok([&] { return probe(ag::transpose(ag::matmul(a, c)), r32.transpose()); }, {a, c});
}

TEST(Autograd, BroadcastOps) {
  Rng rng(2);
  auto a = ag::parameter(random_mat(5, 3, rng));
  auto row = ag::parameter(random_mat(1, 3, rng));
  auto col = ag::parameter(random_mat(5, 1, rng));
  const Mat r = random_mat(5, 3, rng);
  expect_grad_ok([&] { return probe(ag::add_row(a, row), r); }, {a, row});
  expect_grad_ok([&] { return probe(ag::mul_row(a, row), r); }, {a, row});
  expect_grad_ok([&] { return probe(ag::mul_col(a, col), r); }, {a, col});
}

TEST(Autograd, PointwiseAndReductions) {
  Rng rng(3);
  // Keep relu inputs away from the kink so central differences are exact.
  Mat v = random_mat(4, 4, rng);
  for (Index i = 0; i < v.size(); ++i)
    if (std::abs(v.data()[i]) < 0.1) v.data()[i] = 0.3;
  auto a = ag::parameter(v);
  const Mat r = random_mat(4, 4, rng);
  expect_grad_ok([&] { return probe(ag::relu(a), r); }, {a});
  expect_grad_ok([&] { return probe(ag::exp(a), r); }, {a});
  expect_grad_ok([&] { return ag::sum(ag::mul(a, a)); }, {a});
  expect_grad_ok([&] { return ag::mean(ag::exp(a)); }, {a});
}

TEST(Autograd, Normalizations) {
  Rng rng(4);
  auto a = ag::parameter(random_mat(4, 6, rng));
  const Mat r = random_mat(4, 6, rng);
  expect_grad_ok([&] { return probe(ag::normalize_rows(a), r); }, {a}, 1e-5);
  expect_grad_ok([&] { return probe(ag::normalize_cols(a), r); }, {a}, 1e-5);
}

TEST(Autograd, NormalizedRowsHaveZeroMeanUnitVariance) {
  Rng rng(5);
  const auto y = ag::normalize_rows(ag::constant(random_mat(6, 16, rng, -3.0, 5.0)), 0.0);
  for (Index i = 0; i < y->rows(); ++i) {
    EXPECT_NEAR(y->value.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y->value.row(i).squaredNorm() / 16.0, 1.0, 1e-12);
  }
}

TEST(Autograd, SoftmaxWithMask) {
  Rng rng(6);
  auto a = ag::parameter(random_mat(3, 5, rng, -2.0, 2.0));
  const Mat r = random_mat(3, 5, rng);
  const std::vector<char> mask = {0, 1, 0, 0, 1};
  expect_grad_ok([&] { return probe(ag::softmax_rows(a), r); }, {a});
  expect_grad_ok([&] { return probe(ag::softmax_rows(a, mask), r); }, {a});

  const auto y = ag::softmax_rows(a, mask);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_EQ(y->value(i, 1), 0.0);
    EXPECT_EQ(y->value(i, 4), 0.0);
    EXPECT_NEAR(y->value.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(Autograd, SoftmaxFullyMaskedRowIsZero) {
  auto a = ag::parameter(Mat::Ones(2, 3));
  const auto y = ag::softmax_rows(a, {1, 1, 1});
  EXPECT_EQ(y->value.cwiseAbs().sum(), 0.0);
  ag::backward(ag::sum(y));
  EXPECT_EQ(a->grad.cwiseAbs().sum(), 0.0);
}

TEST(Autograd, SliceAndConcat) {
  Rng rng(7);
  auto a = ag::parameter(random_mat(4, 3, rng));
  auto b = ag::parameter(random_mat(4, 2, rng));
  auto c = ag::parameter(random_mat(2, 3, rng));
  const Mat r45 = random_mat(4, 5, rng), r63 = random_mat(6, 3, rng), r23 = random_mat(2, 3, rng), r42 = random_mat(4, 2, rng);
  expect_grad_ok([&] { return probe(ag::concat_cols({a, b}), r45); }, {a, b});
  expect_grad_ok([&] { return probe(ag::concat_rows({a, c}), r63); }, {a, c});
  expect_grad_ok([&] { return probe(ag::slice_cols(a, 1, 2), r42); }, {a});
  expect_grad_ok([&] { return probe(ag::slice_rows(a, 2, 2), r23); }, {a});
}

TEST(Autograd, Im2colMatchesDirectConvolution) {
  Rng rng(8);
  const ag::ConvGeometry g{5, 4, 2, 3, 2, 1};
  const Mat x = random_mat(20, 2, rng);
  const Mat w = random_mat(18, 3, rng);
  const Mat y = ag::im2col(ag::constant(x), g)->value * w;
  ASSERT_EQ(y.rows(), g.out_h() * g.out_w());
  // Direct loop oracle.
  for (int oy = 0; oy < g.out_h(); ++oy)
    for (int ox = 0; ox < g.out_w(); ++ox)
      for (int o = 0; o < 3; ++o) {
        double s = 0.0;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
            if (iy < 0 || iy >= 5 || ix < 0 || ix >= 4) continue;
            for (int c = 0; c < 2; ++c) s += x(iy * 4 + ix, c) * w((ky * 3 + kx) * 2 + c, o);
          }
        EXPECT_NEAR(y(oy * g.out_w() + ox, o), s, 1e-12);
      }
  auto xp = ag::parameter(x);
  const Mat r = random_mat(g.out_h() * g.out_w(), 18, rng);
  expect_grad_ok([&] { return probe(ag::im2col(xp, g), r); }, {xp});
}

TEST(Autograd, SharedNodeGradientsAccumulate) {
  auto a = ag::parameter(Mat::Constant(1, 1, 3.0));
  const auto b = ag::mul(a, a);           // a^2
  const auto c = ag::add(b, ag::mul(b, a));  // a^2 + a^3
  ag::backward(c);
  EXPECT_DOUBLE_EQ(a->grad(0, 0), 2 * 3.0 + 3 * 9.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  auto a = ag::parameter(Mat::Ones(2, 2));
  ag::Var y;
  {
    ag::NoGradGuard guard;
    y = ag::mul(a, a);
  }
  EXPECT_TRUE(y->parents.empty());
  EXPECT_FALSE(y->requires_grad);
  EXPECT_TRUE(ag::grad_enabled());
}

TEST(Layers, ParameterSetRejectsDuplicates) {
  ParameterSet ps;
  ps.add("w", Mat::Zero(1, 1));
  EXPECT_THROW(ps.add("w", Mat::Zero(1, 1)), std::invalid_argument);
  EXPECT_EQ(ps.size(), 1u);
}

TEST(Layers, ConvolutionGradient) {
  Rng rng(9);
  ParameterSet ps;
  const auto conv = Conv2d::create(ps, "conv", 3, 4, 3, 2, rng);
  auto x = ag::parameter(random_mat(36, 3, rng));
  int oh = 0, ow = 0;
  const auto y0 = conv(x, 6, 6, &oh, &ow);
  EXPECT_EQ(oh, 3);
  EXPECT_EQ(ow, 3);
  const Mat r = random_mat(9, 4, rng);
  auto params = std::vector<ag::Var>{x};
  for (const auto& [n, v] : ps.entries()) params.push_back(v);
  expect_grad_ok([&] { return probe(conv(x, 6, 6), r); }, params);
}

TEST(Layers, DropoutIsIdentityOutsideTraining) {
  Rng rng(10);
  const auto x = ag::constant(random_mat(4, 4, rng));
  EXPECT_EQ(dropout(x, ForwardContext{false, 0.5, &rng}).get(), x.get());
  const auto y = dropout(x, ForwardContext{true, 0.5, &rng});
  for (Index i = 0; i < x->value.size(); ++i) {
    const double v = y->value.data()[i];
    EXPECT_TRUE(v == 0.0 || std::abs(v - 2.0 * x->value.data()[i]) < 1e-15);
  }
}
