// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "checkpoint.hpp"
#include "flow.hpp"
#include "test_support.hpp"

namespace syncdpo::flow {
namespace {

using syncdpo::testing::check_gradient;
using syncdpo::testing::one_hot_columns;
using syncdpo::testing::TempDir;
using syncdpo::testing::tiny_architecture;
using syncdpo::testing::tiny_model;

/// Returns a fixed output regardless of its inputs.
struct FixedField {
  using Scalar = double;
  struct Cache {};
  Architecture a;
  Mat<double> out;
  const Architecture& arch() const { return a; }
  Mat<double> forward(const Mat<double>& x, const Vec<double>&, const Mat<double>&, Cache* = nullptr) const {
    if (out.cols() == x.cols()) return out;
    return out.col(0).replicate(1, x.cols());
  }
  void backward(const Cache&, const Mat<double>&, std::span<double>) const {}
};

/// Returns +inf once t reaches `bad_from`.
struct BlowUpField {
  using Scalar = double;
  struct Cache {};
  Architecture a;
  double bad_from = 0.5;
  const Architecture& arch() const { return a; }
  Mat<double> forward(const Mat<double>& x, const Vec<double>& t, const Mat<double>&, Cache* = nullptr) const {
    const double v = t[0] >= bad_from ? std::numeric_limits<double>::infinity() : 0.0;
    return Mat<double>::Constant(x.rows(), x.cols(), v);
  }
  void backward(const Cache&, const Mat<double>&, std::span<double>) const {}
};

TEST(Pack, RoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto p = toyworld::make_pair(rng);
    const Vec<float> s = pack(p);
    ASSERT_EQ(s.size(), 480);
    const auto [v, a] = unpack(std::span<const float>(s.data(), s.size()));
    EXPECT_EQ(v, p.video);
    EXPECT_EQ(a, p.audio);
  }
}

TEST(Pack, ZeroTracksGiveZeroVector) {
  toyworld::ModalityTrack v(toyworld::Modality::Video, 8.0, 40, 4);
  toyworld::ModalityTrack a(toyworld::Modality::Audio, 32.0, 160, 2);
  EXPECT_TRUE(pack_tracks(v, a).isZero(0.0f));
}

TEST(Pack, DocumentedLayout) {
  toyworld::ModalityTrack v(toyworld::Modality::Video, 8.0, 40, 4);
  toyworld::ModalityTrack a(toyworld::Modality::Audio, 32.0, 160, 2);
  v.at(0, 0) = 1.0f;
  v.at(1, 2) = 2.0f;
  a.at(0, 0) = 3.0f;
  a.at(5, 1) = 4.0f;
  const Vec<float> s = pack_tracks(v, a);
  EXPECT_EQ(s[0], 1.0f);
  EXPECT_EQ(s[4 + 2], 2.0f);
  EXPECT_EQ(s[160], 3.0f);
  EXPECT_EQ(s[160 + 5 * 2 + 1], 4.0f);
}

TEST(Pack, UnpackRejectsWrongLength) {
  std::vector<float> s(479, 0.0f);
  EXPECT_THROW(unpack(s), Error);
  s.resize(481);
  EXPECT_THROW(unpack(s), Error);
}

TEST(Interpolate, EndpointsAndMidpoint) {
  Rng rng(2);
  const Mat<double> x0 = standard_normal<double>(6, 1, rng);
  const Mat<double> x1 = standard_normal<double>(6, 1, rng);
  EXPECT_EQ(interpolate(x0, x1, 0.0), x0);
  EXPECT_EQ(interpolate(x0, x1, 1.0), x1);
  const Mat<double> zeros = Mat<double>::Zero(6, 1), ones = Mat<double>::Ones(6, 1);
  EXPECT_TRUE(interpolate(zeros, ones, 0.5).isApprox(Mat<double>::Constant(6, 1, 0.5)));
}

TEST(Interpolate, BatchUsesPerColumnTimes) {
  Rng rng(3);
  const Mat<float> x0 = standard_normal<float>(5, 3, rng);
  const Mat<float> x1 = standard_normal<float>(5, 3, rng);
  Vec<float> t(3);
  t << 0.0f, 1.0f, 0.25f;
  const Mat<float> xt = interpolate_batch<float>(x0, x1, t);
  EXPECT_EQ(Mat<float>(xt.col(0)), Mat<float>(x0.col(0)));
  EXPECT_EQ(Mat<float>(xt.col(1)), Mat<float>(x1.col(1)));
  EXPECT_TRUE(xt.col(2).isApprox(0.75f * x0.col(2) + 0.25f * x1.col(2)));
  EXPECT_THROW(interpolate_batch<float>(x0, x1, Vec<float>(2)), Error);
}

TEST(TargetVelocity, Properties) {
  Rng rng(4);
  const Mat<double> x0 = standard_normal<double>(7, 2, rng);
  const Mat<double> x1 = standard_normal<double>(7, 2, rng);
  EXPECT_TRUE(target_velocity(x0, x0).isZero(0.0));
  EXPECT_EQ(target_velocity(Mat<double>::Zero(7, 2), x1), x1);
  EXPECT_TRUE(target_velocity(2.5 * x0, 2.5 * x1).isApprox(2.5 * target_velocity(x0, x1)));
}

TEST(FmLoss, ExactFieldGivesZero) {
  Rng rng(5);
  auto batch = make_fm_batch<double>(standard_normal<double>(8, 4, rng), one_hot_columns(2, 4, rng), rng);
  FixedField f{tiny_architecture(), batch.x1 - batch.x0};
  EXPECT_EQ(fm_loss(f, batch), 0.0);
}

TEST(FmLoss, ZeroFieldWithZeroNoiseIsMeanSquaredNorm) {
  Rng rng(6);
  FMBatch<double> batch;
  batch.x1 = standard_normal<double>(8, 5, rng);
  batch.x0 = Mat<double>::Zero(8, 5);
  batch.cond = one_hot_columns(2, 5, rng);
  batch.t = uniform_times<double>(5, rng);
  FixedField f{tiny_architecture(), Mat<double>::Zero(8, 5)};
  EXPECT_NEAR(fm_loss(f, batch), batch.x1.squaredNorm() / 5.0, 1e-12);
}

TEST(FmLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto net = tiny_model(100 + seed);
    Rng rng(200 + seed);
    const auto batch = make_fm_batch<double>(standard_normal<double>(8, 4, rng), one_hot_columns(2, 4, rng), rng);
    std::vector<double> grad(net.num_params(), 0.0);
    fm_loss(net, batch, grad);
    const auto r = check_gradient(net.params(), grad, [&] { return fm_loss(net, batch); });
    EXPECT_LT(r.max_rel_error, 1e-3) << "seed " << seed << " index " << r.worst_index;
  }
}

TEST(FmLoss, GradientAccumulates) {
  auto net = tiny_model(7);
  Rng rng(8);
  const auto batch = make_fm_batch<double>(standard_normal<double>(8, 3, rng), one_hot_columns(2, 3, rng), rng);
  std::vector<double> once(net.num_params(), 0.0), twice(net.num_params(), 0.0);
  fm_loss(net, batch, once);
  fm_loss(net, batch, twice);
  fm_loss(net, batch, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(twice[i], 2.0 * once[i]);
}

TEST(FmLoss, NonFiniteLossIsNumericFault) {
  Rng rng(9);
  auto batch = make_fm_batch<double>(standard_normal<double>(8, 2, rng), one_hot_columns(2, 2, rng), rng);
  FixedField f{tiny_architecture(), Mat<double>::Constant(8, 2, std::numeric_limits<double>::quiet_NaN())};
  try {
    fm_loss(f, batch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Numeric);
  }
}

TEST(SampleOde, SingleStepIsOneEulerStep) {
  auto net = tiny_model(10);
  Rng rng(11);
  const Mat<double> y = one_hot_columns(2, 3, rng);
  Rng a(12), b(12);
  const Mat<double> out = sample_ode(net, y, a, 1);
  const Mat<double> x0 = standard_normal<double>(8, 3, b);
  const Mat<double> expected = x0 + net.forward(x0, Vec<double>::Zero(3), y);
  EXPECT_TRUE(out.isApprox(expected, 1e-14));
}

TEST(SampleOde, ConstantFieldIntegratesExactly) {
  Rng rng(13);
  Mat<double> c = standard_normal<double>(8, 1, rng);
  FixedField f{tiny_architecture(), c};
  const Mat<double> y = one_hot_columns(2, 2, rng);
  for (int steps : {1, 2, 7, 30, 100}) {
    Rng a(14), b(14);
    const Mat<double> out = sample_ode(f, y, a, steps);
    const Mat<double> x0 = standard_normal<double>(8, 2, b);
    EXPECT_LT((out - (x0 + c.replicate(1, 2))).cwiseAbs().maxCoeff(), 1e-12) << steps << " steps";
  }
}

TEST(SampleOde, NonFiniteStateReportsStep) {
  BlowUpField f{tiny_architecture(), 0.5};
  Rng rng(15);
  const Mat<double> y = one_hot_columns(2, 1, rng);
  try {
    sample_ode(f, y, rng, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Numeric);
    EXPECT_NE(std::string(e.what()).find("step 5"), std::string::npos) << e.what();
  }
  EXPECT_THROW(sample_ode(f, y, rng, 0), Error);
}

TEST(VelocityNet, DefaultArchitectureShape) {
  VelocityNet<float> net(default_architecture());
  EXPECT_EQ(net.arch().input_dim(), 480 + 16 + 4);
  const std::size_t mlp = (500 * 256 + 256) + (256 * 256 + 256) + (256 * 480 + 480);
  EXPECT_EQ(net.num_params(), mlp + 480 * 16 + 480);
}

TEST(VelocityNet, TensorViewsTileTheBuffer) {
  VelocityNet<float> net(default_architecture());
  std::size_t next = 0;
  for (const auto& v : net.tensor_views()) {
    EXPECT_EQ(v.offset, next) << v.name;
    std::size_t count = 1;
    for (auto d : v.shape) count *= static_cast<std::size_t>(d);
    EXPECT_EQ(count, v.count);
    next += v.count;
  }
  EXPECT_EQ(next, net.num_params());
}

TEST(VelocityNet, InitRangesAndZeroSkip) {
  VelocityNet<float> net(default_architecture());
  Rng rng(16);
  net.init(rng);
  for (const auto& v : net.tensor_views()) {
    for (std::size_t i = 0; i < v.count; ++i) {
      const float p = net.params()[v.offset + i];
      if (v.name.rfind("skip.", 0) == 0) {
        ASSERT_EQ(p, 0.0f) << v.name;
      } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(v.name.rfind("layer0", 0) == 0 ? 500 : 256));
        ASSERT_LE(std::abs(p), bound + 1e-7) << v.name;
      }
    }
  }
}

TEST(VelocityNet, BatchedForwardMatchesColumnwise) {
  auto net = tiny_model(17);
  Rng rng(18);
  const Mat<double> x = standard_normal<double>(8, 5, rng);
  const Vec<double> t = uniform_times<double>(5, rng);
  const Mat<double> y = one_hot_columns(2, 5, rng);
  const Mat<double> all = net.forward(x, t, y);
  for (int b = 0; b < 5; ++b) {
    const Mat<double> one = net.forward(x.col(b), t.segment(b, 1), y.col(b));
    EXPECT_TRUE(one.isApprox(all.col(b), 1e-14));
  }
  typename VelocityNet<double>::Cache cache;
  EXPECT_EQ(net.forward(x, t, y, &cache), all);
}

TEST(VelocityNet, SkipAddsTimeScaledState) {
  flow::Architecture arch = tiny_architecture();
  VelocityNet<double> with(arch);
  arch.diag_skip = false;
  VelocityNet<double> without(arch);
  Rng rng(19);
  without.init(rng);
  std::copy(without.params().begin(), without.params().end(), with.params().begin());
  const Mat<double> x = Mat<double>::Ones(8, 1);
  const Vec<double> t = Vec<double>::Constant(1, 0.3);
  const Mat<double> y = one_hot_columns(2, 1, rng);
  EXPECT_EQ(with.forward(x, t, y), without.forward(x, t, y));
  // A unit skip bias adds exactly x.
  for (const auto& v : with.tensor_views())
    if (v.name == "skip.bias")
      for (std::size_t i = 0; i < v.count; ++i) with.params()[v.offset + i] = 1.0;
  EXPECT_TRUE(with.forward(x, t, y).isApprox(without.forward(x, t, y) + x, 1e-14));
}

TEST(VelocityNet, TimeEmbeddingFeatures) {
  Vec<double> t(2);
  t << 0.0, 0.5;
  Mat<double> e(16, 2);
  time_embedding<double>(t, 16, e);
  for (int i = 0; i < 8; ++i) {
    EXPECT_DOUBLE_EQ(e(2 * i, 0), 0.0);
    EXPECT_DOUBLE_EQ(e(2 * i + 1, 0), 1.0);
    const double freq = std::pow(50.0, i / 7.0);
    EXPECT_NEAR(e(2 * i, 1), std::sin(0.5 * freq), 1e-15);
    EXPECT_NEAR(e(2 * i + 1, 1), std::cos(0.5 * freq), 1e-15);
  }
}

TEST(VelocityNet, CastRoundTripIsExact) {
  VelocityNet<float> net(default_architecture());
  Rng rng(20);
  net.init(rng);
  const auto back = net.cast<double>().cast<float>();
  EXPECT_TRUE(std::equal(net.params().begin(), net.params().end(), back.params().begin()));
}

TEST(VelocityNet, RejectsBadShapes) {
  auto net = tiny_model(21);
  EXPECT_THROW(net.forward(Mat<double>::Zero(7, 1), Vec<double>::Zero(1), Mat<double>::Zero(2, 1)), Error);
  EXPECT_THROW(net.forward(Mat<double>::Zero(8, 2), Vec<double>::Zero(1), Mat<double>::Zero(2, 2)), Error);
  EXPECT_THROW(VelocityNet<double>(Architecture{0, 2, 4, 16, 2, true}), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  Checkpoint c;
  c.arch = default_architecture();
  VelocityNet<float> net(c.arch);
  Rng rng(22);
  net.init(rng);
  c.params.assign(net.params().begin(), net.params().end());
  c.ema = c.params;
  for (auto& v : c.ema) v *= 0.5f;
  c.adam_m.assign(c.params.size(), 0.25f);
  c.adam_v.assign(c.params.size(), 1e-9f);
  c.adam_step = 17;
  c.step = 42;
  c.config = {{"method", "sft"}, {"seed", 3}};
  save_checkpoint(dir / "c.ckpt", c);
  const auto r = load_checkpoint(dir / "c.ckpt");
  EXPECT_EQ(r.arch, c.arch);
  EXPECT_EQ(r.params, c.params);
  EXPECT_EQ(r.ema, c.ema);
  EXPECT_EQ(r.adam_m, c.adam_m);
  EXPECT_EQ(r.adam_v, c.adam_v);
  EXPECT_EQ(r.adam_step, 17);
  EXPECT_EQ(r.step, 42);
  EXPECT_EQ(r.config, c.config);
  const auto raw = model_from_checkpoint(r, false);
  const auto ema = model_from_checkpoint(r, true);
  EXPECT_TRUE(std::equal(raw.params().begin(), raw.params().end(), c.params.begin()));
  EXPECT_TRUE(std::equal(ema.params().begin(), ema.params().end(), c.ema.begin()));
}

TEST(Checkpoint, WithoutOptimizerStateAndBadFiles) {
  TempDir dir;
  Checkpoint c;
  c.arch = tiny_architecture();
  c.params.assign(VelocityNet<float>(c.arch).num_params(), 1.0f);
  c.ema = c.params;
  save_checkpoint(dir / "c.ckpt", c);
  EXPECT_TRUE(load_checkpoint(dir / "c.ckpt").adam_m.empty());
  c.params.pop_back();
  EXPECT_THROW(save_checkpoint(dir / "d.ckpt", c), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);
  toyworld::make_dataset(1, 1, dir / "data.sdpo");
  EXPECT_THROW(load_checkpoint(dir / "data.sdpo"), Error);
}

}  // namespace
}  // namespace syncdpo::flow
