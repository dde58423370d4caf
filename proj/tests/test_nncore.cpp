#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "deepvo/nn/checkpoint.hpp"
#include "deepvo/nn/init.hpp"
#include "deepvo/nn/layers.hpp"
#include "deepvo/nn/ops.hpp"
#include "deepvo/nn/sgd.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace deepvo;
using namespace deepvo::nn;
using deepvo::testing::TempDir;

namespace {

Tensor<double> make(Shape s, std::initializer_list<double> v) {
  Tensor<double> t(std::move(s));
  Index i = 0;
  for (double x : v) t[i++] = x;
  return t;
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
  const Tensor<double> x({1, 1, 3, 3}, 1.0);
  const auto y = conv2d_forward(x, Tensor<double>({1, 1, 1, 1}, 1.0), Tensor<double>({1}), {1, 0});
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(y.values(), x.values());
}

TEST(Conv2d, OnesKernelStrideTwo) {
  const auto y = conv2d_forward(Tensor<double>({1, 1, 4, 4}, 1.0), Tensor<double>({1, 1, 2, 2}, 1.0),
                                Tensor<double>({1}), {2, 0});
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(y[i], 4.0);
}

TEST(Conv2d, FirstLayerSpatialSize) {
  EXPECT_EQ(conv_output_size(256, 11, 4, 0), 62);
  const Tensor<float> x({1, 3, 256, 256});
  const auto y = conv2d_forward(x, Tensor<float>({2, 3, 11, 11}), Tensor<float>({2}), {4, 0});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 62, 62}));
}

TEST(Conv2d, MatchesDirectConvolutionWithPadding) {
  std::mt19937_64 rng(3);
  Tensor<double> x({2, 3, 9, 7}), w({4, 3, 3, 3}), b({4});
  deepvo::testing::fill_normal(x, rng);
  deepvo::testing::fill_normal(w, rng);
  deepvo::testing::fill_normal(b, rng);
  const ConvGeometry g{2, 1};
  const auto y = conv2d_forward(x, w, b, g);
  ASSERT_EQ(y.shape(), (Shape{2, 4, 5, 4}));
  auto at = [&](Index n, Index c, Index i, Index j) {
    if (i < 0 || j < 0 || i >= 9 || j >= 7) return 0.0;
    return x[((n * 3 + c) * 9 + i) * 7 + j];
  };
  for (Index n = 0; n < 2; ++n) {
    for (Index f = 0; f < 4; ++f) {
      for (Index oy = 0; oy < 5; ++oy) {
        for (Index ox = 0; ox < 4; ++ox) {
          double acc = b[f];
          for (Index c = 0; c < 3; ++c) {
            for (Index ki = 0; ki < 3; ++ki) {
              for (Index kj = 0; kj < 3; ++kj) {
                acc += w[((f * 3 + c) * 3 + ki) * 3 + kj] * at(n, c, oy * 2 + ki - 1, ox * 2 + kj - 1);
              }
            }
          }
          EXPECT_NEAR(y[((n * 4 + f) * 5 + oy) * 4 + ox], acc, 1e-12);
        }
      }
    }
  }
}

TEST(Conv2d, RejectsMismatchedShapes) {
  EXPECT_THROW(conv2d_forward(Tensor<double>({1, 2, 5, 5}), Tensor<double>({1, 3, 3, 3}), Tensor<double>({1}),
                              {1, 0}),
               Error);
  EXPECT_THROW(conv2d_forward(Tensor<double>({1, 3, 2, 2}), Tensor<double>({1, 3, 3, 3}), Tensor<double>({1}),
                              {1, 0}),
               Error);
}

TEST(Relu, ForwardAndBackward) {
  const auto x = make({3}, {-1, 0, 2});
  const auto y = relu_forward(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 2.0);
  const auto dx = relu_backward(x, Tensor<double>({3}, 1.0));
  EXPECT_EQ(dx[0], 0.0);
  EXPECT_EQ(dx[1], 0.0);
  EXPECT_EQ(dx[2], 1.0);
}

TEST(MaxPool, PicksWindowMaximaAndRoutesGradient) {
  const auto x = make({1, 1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  std::vector<Index> arg;
  const auto y = maxpool_forward(x, 2, 2, arg);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y[0], 6.0);
  EXPECT_EQ(y[3], 16.0);
  const auto dx = maxpool_backward(Tensor<double>({1, 1, 2, 2}, 1.0), arg, x.shape());
  EXPECT_EQ(dx.values().sum(), 4.0);
  EXPECT_EQ(dx[5], 1.0);
  EXPECT_EQ(dx[0], 0.0);
}

TEST(Concat, ShapesAndExactScatter) {
  Tensor<float> a({2, 4096}, 1.0f), b({2, 4096}, 2.0f);
  const auto c = concat_forward(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 8192}));
  EXPECT_EQ(c[4095], 1.0f);
  EXPECT_EQ(c[4096], 2.0f);
  EXPECT_EQ(c[8192], 1.0f);
  Tensor<float> dy(c.shape());
  for (Index i = 0; i < dy.size(); ++i) dy[i] = static_cast<float>(i);
  const auto [da, db] = concat_backward(dy, a.shape(), b.shape());
  EXPECT_EQ(concat_forward(da, db).values(), dy.values());
}

TEST(Flatten, IsBijection) {
  Tensor<double> x({2, 3, 4, 5});
  for (Index i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const auto y = flatten_forward(x);
  EXPECT_EQ(y.shape(), (Shape{2, 60}));
  EXPECT_EQ(y.values(), x.values());
  const auto back = flatten_backward(y, x.shape());
  EXPECT_EQ(back.shape(), x.shape());
  EXPECT_EQ(back.values(), x.values());
}

TEST(EuclideanLoss, HandValues) {
  const auto label = make({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(euclidean_loss(label, label).loss, 0.0);
  EXPECT_DOUBLE_EQ(euclidean_loss(make({1, 3}, {1, 0, 0}), make({1, 3}, {0, 0, 0})).loss, 0.5);
  EXPECT_DOUBLE_EQ(euclidean_loss(make({2, 3}, {1, 0, 0, 0, 2, 0}), Tensor<double>({2, 3})).loss, 1.25);
  EXPECT_THROW(euclidean_loss(Tensor<double>({2, 3}), Tensor<double>({1, 3})), Error);
}

TEST(GradientCheck, EveryLayerMatchesFiniteDifferences) {
  for (const auto& g : deepvo::testing::layer_gradient_checks(20, 1234)) {
    EXPECT_LT(g.worst, 1e-4) << g.name;
    EXPECT_EQ(g.draws, 20);
  }
}

TEST(Dropout, ExpectationMatchesInference) {
  std::mt19937_64 rng(9);
  Tensor<double> x({1, 50});
  deepvo::testing::fill_normal(x, rng);
  for (Index i = 0; i < x.size(); ++i) x[i] = std::abs(x[i]) + 0.5;
  Dropout<double> layer(LayerSpec::dropout(0.5));
  const auto inference = layer.forward(x, RunMode{});
  EXPECT_EQ(inference.values(), x.values());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.size());
  const int masks = 10000;
  for (int m = 0; m < masks; ++m) acc += layer.forward(x, RunMode{true, &rng}).values();
  acc /= masks;
  EXPECT_LE(std::abs(acc.mean() - x.values().mean()) / x.values().mean(), 0.02);
  EXPECT_THROW(layer.forward(x, RunMode{true, nullptr}), Error);
}

TEST(Init, XavierBoundAndGaussianStd) {
  std::mt19937_64 rng(1);
  Tensor<float> w({100, 100});
  init_xavier(w, rng);
  const double bound = std::sqrt(6.0 / 200.0);
  EXPECT_NEAR(bound, 0.1732, 1e-4);
  EXPECT_LE(w.values().cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(w.values().cwiseAbs().maxCoeff(), 0.9 * bound);

  Tensor<double> g({100000});
  init_gaussian(g, 0.01, rng);
  const double mean = g.values().mean();
  const double sd = std::sqrt((g.values().array() - mean).square().sum() / (g.size() - 1));
  EXPECT_LE(std::abs(sd - 0.01) / 0.01, 0.05);

  std::mt19937_64 r1(77), r2(77);
  Tensor<float> a({64}), b({64});
  init_gaussian(a, 1.0, r1);
  init_gaussian(b, 1.0, r2);
  EXPECT_EQ(a.values(), b.values());
}

TEST(Sgd, HandRecurrence) {
  Tensor<double> w({1}, 1.0);
  w.ensure_grad();
  w.grad()[0] = 1.0;
  std::vector<Tensor<double>*> params{&w};
  SgdConfig plain;
  plain.learning_rate = 0.1;
  plain.momentum = 0.0;
  SgdState<double> state;
  sgd_step<double>(params, state, plain, 0);
  EXPECT_DOUBLE_EQ(w[0], 0.9);

  // v1 = -0.1, w1 = 0.9; v2 = 0.9*(-0.1) - 0.1 = -0.19, w2 = 0.71.
  w[0] = 1.0;
  SgdConfig mom = plain;
  mom.momentum = 0.9;
  SgdState<double> s2;
  sgd_step<double>(params, s2, mom, 0);
  sgd_step<double>(params, s2, mom, 1);
  EXPECT_NEAR(w[0], 0.71, 1e-15);
  EXPECT_NEAR(s2.velocity[0][0], -0.19, 1e-15);

  // Weight decay joins the gradient term.
  w[0] = 2.0;
  w.grad()[0] = 0.0;
  SgdConfig wd = plain;
  wd.weight_decay = 0.5;
  SgdState<double> s3;
  sgd_step<double>(params, s3, wd, 0);
  EXPECT_NEAR(w[0], 2.0 - 0.1 * 1.0, 1e-15);
}

TEST(Sgd, ZeroGradientLeavesParamsAndStepDecay) {
  Tensor<double> w({3}, 0.25);
  w.ensure_grad();
  std::vector<Tensor<double>*> params{&w};
  SgdState<double> state;
  for (int i = 0; i < 5; ++i) sgd_step<double>(params, state, SgdConfig{}, i);
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(w[i], 0.25);
  SgdConfig c;
  EXPECT_DOUBLE_EQ(c.rate_at(9999), 0.01);
  EXPECT_DOUBLE_EQ(c.rate_at(10000), 0.001);
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Checkpoint, RoundTripAndLayout) {
  TempDir dir("ckpt");
  Checkpoint c;
  Tensor<float> a({2, 3});
  for (Index i = 0; i < a.size(); ++i) a[i] = 0.1f * static_cast<float>(i) - 0.2f;
  c.put("stream_a.conv1.weight", a);
  c.put("scalar", Tensor<float>({1}, 7.5f));
  c.metadata.set("train.iteration", 42.0);
  c.metadata.set("norm.mean", "0.1,0.2,0.3");
  save_checkpoint(dir / "m.dvoc", c);

  const auto back = load_checkpoint(dir / "m.dvoc");
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.tensors[0].first, "stream_a.conv1.weight");
  EXPECT_EQ(back.find("stream_a.conv1.weight")->values(), a.values());
  EXPECT_EQ(back.find("scalar")->shape(), (Shape{1}));
  EXPECT_EQ(back.find("missing"), nullptr);
  EXPECT_EQ(back.metadata.number("train.iteration"), 42.0);
  EXPECT_EQ(back.metadata.get("norm.mean"), "0.1,0.2,0.3");

  const auto meta = c.metadata.serialize();
  const std::size_t expected = 4 + 4 + 8 + (4 + 21 + 4 + 2 * 8 + 6 * 4) + (4 + 6 + 4 + 8 + 4) + 8 + meta.size();
  EXPECT_EQ(std::filesystem::file_size(dir / "m.dvoc"), expected);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  TempDir dir("ckptbad");
  auto code = [](const std::filesystem::path& p) {
    try {
      load_checkpoint(p);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidConfig;
  };
  EXPECT_EQ(code(dir / "none.dvoc"), Errc::IoError);
  std::ofstream(dir / "bad.dvoc") << "NOPE1234";
  EXPECT_EQ(code(dir / "bad.dvoc"), Errc::DecodeError);

  Checkpoint c;
  c.put("x", Tensor<float>({100}));
  save_checkpoint(dir / "ok.dvoc", c);
  std::filesystem::resize_file(dir / "ok.dvoc", 60);
  EXPECT_EQ(code(dir / "ok.dvoc"), Errc::DecodeError);

  // Header claiming an enormous tensor.
  std::ofstream out(dir / "huge.dvoc", std::ios::binary);
  const char head[] = {'D', 'V', 'O', 'C', 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 'x', 1, 0, 0, 0};
  out.write(head, sizeof(head));
  const unsigned char dim[] = {0, 0, 0, 0, 0, 0, 0, 0x40};
  out.write(reinterpret_cast<const char*>(dim), 8);
  out.close();
  EXPECT_EQ(code(dir / "huge.dvoc"), Errc::DecodeError);
}
