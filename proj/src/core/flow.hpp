// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Conditional flow matching on the packed joint state.
//
// Packed layout: the video block (frames x channels, row-major) followed by the
// audio block (frames x channels, row-major). Video frame 0 channel 0 is index 0.

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "toyworld.hpp"
#include "velocity_net.hpp"

namespace syncdpo::flow {

/// Anything that maps (x_t, t, y) to a velocity and can backpropagate into a flat parameter buffer.
template <class M>
concept VelocityModel = requires(const M& m, const Mat<typename M::Scalar>& x, const Vec<typename M::Scalar>& t,
                                 typename M::Cache& cache, std::span<typename M::Scalar> grad) {
  { m.forward(x, t, x, &cache) } -> std::convertible_to<Mat<typename M::Scalar>>;
  m.backward(cache, x, grad);
};

Vec<float> pack(const toyworld::PairSample& pair);
Vec<float> pack_tracks(const toyworld::ModalityTrack& video, const toyworld::ModalityTrack& audio);
std::pair<toyworld::ModalityTrack, toyworld::ModalityTrack> unpack(std::span<const float> state,
                                                                    const toyworld::GridSpec& grid = {});

/// Columns are packed samples / conditions.
Mat<float> pack_states(std::span<const toyworld::PairSample* const> pairs);
Mat<float> pack_conditions(std::span<const toyworld::PairSample* const> pairs);

template <class Derived0, class Derived1, class T>
auto interpolate(const Eigen::MatrixBase<Derived0>& x0, const Eigen::MatrixBase<Derived1>& x1, T t) {
  return ((T(1) - t) * x0 + t * x1).eval();
}

template <class Derived0, class Derived1>
auto target_velocity(const Eigen::MatrixBase<Derived0>& x0, const Eigen::MatrixBase<Derived1>& x1) {
  return (x1 - x0).eval();
}

/// Column-wise interpolation with a per-column t.
template <class T>
Mat<T> interpolate_batch(const Mat<T>& x0, const Mat<T>& x1, const Vec<T>& t) {
  require(x0.rows() == x1.rows() && x0.cols() == x1.cols() && t.size() == x0.cols(), "interpolate shape mismatch");
  Mat<T> out(x0.rows(), x0.cols());
  for (Eigen::Index b = 0; b < x0.cols(); ++b) out.col(b) = (T(1) - t[b]) * x0.col(b) + t[b] * x1.col(b);
  return out;
}

template <class T>
struct FMBatch {
  Mat<T> x1;    // N x B
  Mat<T> cond;  // C x B
  Mat<T> x0;    // N x B
  Vec<T> t;     // B
};

template <class T>
Mat<T> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<T> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<T>(n(rng));
  return m;
}

template <class T>
Vec<T> uniform_times(Eigen::Index count, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec<T> t(count);
  for (Eigen::Index i = 0; i < count; ++i) t[i] = static_cast<T>(u(rng));
  return t;
}

/// Draws x0 ~ N(0, I) and t ~ U[0, 1] for the given data.
template <class T>
FMBatch<T> make_fm_batch(Mat<T> x1, Mat<T> cond, Rng& rng) {
  FMBatch<T> b;
  b.x0 = standard_normal<T>(x1.rows(), x1.cols(), rng);
  b.t = uniform_times<T>(x1.cols(), rng);
  b.x1 = std::move(x1);
  b.cond = std::move(cond);
  return b;
}

/// Mean over the batch of ||v(x_t, t, y) - (x1 - x0)||^2. Accumulates the
/// parameter gradient into `grad` when it is non-empty.
template <VelocityModel M>
double fm_loss(const M& model, const FMBatch<typename M::Scalar>& batch,
               std::span<typename M::Scalar> grad = {}) {
  using T = typename M::Scalar;
  const auto B = batch.x1.cols();
  require(B > 0 && batch.x0.rows() == batch.x1.rows() && batch.x0.cols() == B && batch.cond.cols() == B &&
              batch.t.size() == B,
          "inconsistent flow-matching batch");
  const Mat<T> xt = interpolate_batch<T>(batch.x0, batch.x1, batch.t);
  typename M::Cache cache;
  const Mat<T> residual = model.forward(xt, batch.t, batch.cond, &cache) - (batch.x1 - batch.x0);
  const double loss = static_cast<double>(residual.squaredNorm()) / static_cast<double>(B);
  if (!std::isfinite(loss)) fail(ErrorCode::Numeric, "non-finite flow-matching loss");
  if (!grad.empty()) {
    const Mat<T> d_out = residual * (T(2) / static_cast<T>(B));
    model.backward(cache, d_out, grad);
  }
  return loss;
}

/// Euler integration of dx/dt = v(x, t, y) from x0 ~ N(0, I) over `steps` uniform steps.
template <VelocityModel M>
Mat<typename M::Scalar> integrate_ode(const M& model, const Mat<typename M::Scalar>& cond,
                                      Mat<typename M::Scalar> x, int steps) {
  using T = typename M::Scalar;
  require(steps >= 1, "sampler needs at least one step");
  const T dt = T(1) / static_cast<T>(steps);
  for (int i = 0; i < steps; ++i) {
    const Vec<T> t = Vec<T>::Constant(x.cols(), static_cast<T>(i) / static_cast<T>(steps));
    x += dt * model.forward(x, t, cond);
    if (!x.allFinite()) fail(ErrorCode::Numeric, "non-finite sampler state at step " + std::to_string(i));
  }
  return x;
}

template <VelocityModel M>
Mat<typename M::Scalar> sample_ode(const M& model, const Mat<typename M::Scalar>& cond, Rng& rng, int steps = 30) {
  using T = typename M::Scalar;
  require(steps >= 1, "sampler needs at least one step");
  Mat<T> x0 = standard_normal<T>(model.arch().state_dim, cond.cols(), rng);
  return integrate_ode(model, cond, std::move(x0), steps);
}

/// Single-sample convenience wrapper returning unpacked tracks.
std::pair<toyworld::ModalityTrack, toyworld::ModalityTrack> sample_pair(const VelocityNet<float>& model,
                                                                         std::span<const float> condition, Rng& rng,
                                                                         const toyworld::GridSpec& grid, int steps = 30);

Architecture default_architecture(const toyworld::GridSpec& grid = {});

}  // namespace syncdpo::flow
