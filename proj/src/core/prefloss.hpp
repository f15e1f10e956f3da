// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Flow-matching preference objective.
//
// For winner/loser data sharing noise x0, time t and condition y, the
// per-sample preference score is
//
//   z = (|v_w - v_theta(x_t^w)|^2 - |v_w - v_ref(x_t^w)|^2)
//     - (|v_l - v_theta(x_t^l)|^2 - |v_l - v_ref(x_t^l)|^2)
//
// and the loss is mean softplus(beta * z) = mean -log sigmoid(-beta * z):
// lowering the winner error or raising the loser error (relative to the
// frozen reference) lowers the loss.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "flow.hpp"

namespace syncdpo::pref {

using flow::Mat;
using flow::Vec;

template <class T>
struct PreferenceBatch {
  Mat<T> winner;  // x1^w, N x B
  Mat<T> loser;   // x1^l, N x B
  Mat<T> cond;    // C x B, shared
  Mat<T> x0;      // N x B, shared
  Vec<T> t;       // B, shared

  Eigen::Index size() const { return winner.cols(); }
  Mat<T> xt_winner() const { return flow::interpolate_batch<T>(x0, winner, t); }
  Mat<T> xt_loser() const { return flow::interpolate_batch<T>(x0, loser, t); }
  Mat<T> v_winner() const { return winner - x0; }
  Mat<T> v_loser() const { return loser - x0; }

  void validate() const {
    const auto B = winner.cols();
    require(B > 0, "empty preference batch");
    require(loser.rows() == winner.rows() && loser.cols() == B && x0.rows() == winner.rows() && x0.cols() == B &&
                cond.cols() == B && t.size() == B,
            "inconsistent preference batch shapes");
  }
};

/// Shares fresh x0 ~ N(0, I) and t ~ U[0, 1] between winner and loser columns.
template <class T>
PreferenceBatch<T> make_preference_batch(Mat<T> winner, Mat<T> loser, Mat<T> cond, Rng& rng) {
  PreferenceBatch<T> b;
  b.x0 = flow::standard_normal<T>(winner.rows(), winner.cols(), rng);
  b.t = flow::uniform_times<T>(winner.cols(), rng);
  b.winner = std::move(winner);
  b.loser = std::move(loser);
  b.cond = std::move(cond);
  return b;
}

struct LossConfig {
  double beta = 0.2;
  /// Debug only: optimize the objective exactly as typeset, mean log sigmoid(beta * z),
  /// which rewards raising the winner error. Never used by the trainers' defaults.
  bool literal_printed_form = false;
};

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

/// Residuals v_theta - v for the stacked [winner | loser] columns of one model.
template <flow::VelocityModel M>
Mat<typename M::Scalar> stacked_residual(const M& model, const PreferenceBatch<typename M::Scalar>& batch,
                                         typename M::Cache* cache) {
  using T = typename M::Scalar;
  const auto B = batch.size();
  const auto N = batch.winner.rows();
  Mat<T> xt(N, 2 * B), target(N, 2 * B), cond(batch.cond.rows(), 2 * B);
  Vec<T> t(2 * B);
  xt << batch.xt_winner(), batch.xt_loser();
  target << batch.v_winner(), batch.v_loser();
  cond << batch.cond, batch.cond;
  t << batch.t, batch.t;
  return model.forward(xt, t, cond, cache) - target;
}

template <class T>
Vec<double> column_sq_norms(const Mat<T>& m) {
  Vec<double> out(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) out[c] = m.col(c).template cast<double>().squaredNorm();
  return out;
}

template <class T>
Vec<double> scores_from(const Mat<T>& res_model, const Mat<T>& res_ref, Eigen::Index B) {
  const Vec<double> em = column_sq_norms<T>(res_model);
  const Vec<double> er = column_sq_norms<T>(res_ref);
  Vec<double> z(B);
  for (Eigen::Index i = 0; i < B; ++i) z[i] = (em[i] - er[i]) - (em[B + i] - er[B + i]);
  return z;
}

inline void check_finite(const Vec<double>& z) {
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (!std::isfinite(z[i])) fail(ErrorCode::Numeric, "non-finite preference score at sample " + std::to_string(i));
}

}  // namespace detail

template <flow::VelocityModel M, flow::VelocityModel R>
Vec<double> preference_score(const M& model, const R& ref, const PreferenceBatch<typename M::Scalar>& batch) {
  batch.validate();
  const auto res_m = detail::stacked_residual(model, batch, nullptr);
  const auto res_r = detail::stacked_residual(ref, batch, nullptr);
  Vec<double> z = detail::scores_from(res_m, res_r, batch.size());
  detail::check_finite(z);
  return z;
}

/// Returns the loss; accumulates d(loss)/d(theta) into `grad` when non-empty.
/// The reference model is only evaluated.
template <flow::VelocityModel M, flow::VelocityModel R>
double syncdpo_loss(const M& model, const R& ref, const PreferenceBatch<typename M::Scalar>& batch,
                    const LossConfig& cfg, std::span<typename M::Scalar> grad = {},
                    Vec<double>* scores_out = nullptr) {
  using T = typename M::Scalar;
  require(cfg.beta > 0, "beta must be positive");
  batch.validate();
  const auto B = batch.size();
  typename M::Cache cache;
  const Mat<T> res_m = detail::stacked_residual(model, batch, &cache);
  const Mat<T> res_r = detail::stacked_residual(ref, batch, nullptr);
  const Vec<double> z = detail::scores_from(res_m, res_r, B);
  detail::check_finite(z);

  double loss = 0.0;
  Vec<double> dz(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double a = cfg.beta * z[i];
    if (cfg.literal_printed_form) {
      loss += -softplus(-a);                 // log sigmoid(a)
      dz[i] = cfg.beta * sigmoid(-a) / B;    // d/dz log sigmoid(beta z)
    } else {
      loss += softplus(a);
      dz[i] = cfg.beta * sigmoid(a) / B;
    }
  }
  loss /= static_cast<double>(B);
  if (!std::isfinite(loss)) fail(ErrorCode::Numeric, "non-finite preference loss");

  if (!grad.empty()) {
    Mat<T> d_out(res_m.rows(), 2 * B);
    for (Eigen::Index i = 0; i < B; ++i) {
      d_out.col(i) = static_cast<T>(2.0 * dz[i]) * res_m.col(i);
      d_out.col(B + i) = static_cast<T>(-2.0 * dz[i]) * res_m.col(B + i);
    }
    model.backward(cache, d_out, grad);
  }
  if (scores_out) *scores_out = z;
  return loss;
}

struct GradRatio {
  double ratio = 0.0;
  double z = 0.0;
  double winner_mse = 0.0;  // |v_w - v_theta(x_t^w)|^2
  double numerator = 0.0;   // |d z / d theta|
  double denominator = 0.0; // |d winner_mse / d theta|
  bool degenerate = false;
};

/// Gradient-norm ratio between the unweighted preference score and the winner
/// flow-matching error for a single pair (batch of size 1).
template <flow::VelocityModel M, flow::VelocityModel R>
GradRatio grad_norm_ratio(const M& model, const R& ref, const PreferenceBatch<typename M::Scalar>& pair,
                          std::vector<typename M::Scalar>* grad_z_out = nullptr,
                          std::vector<typename M::Scalar>* grad_mse_out = nullptr) {
  using T = typename M::Scalar;
  pair.validate();
  require(pair.size() == 1, "grad_norm_ratio expects a single pair");
  typename M::Cache cache;
  const Mat<T> res_m = detail::stacked_residual(model, pair, &cache);
  const Mat<T> res_r = detail::stacked_residual(ref, pair, nullptr);
  GradRatio out;
  out.z = detail::scores_from(res_m, res_r, 1)[0];
  out.winner_mse = res_m.col(0).template cast<double>().squaredNorm();

  const std::size_t P = model.params().size();
  std::vector<T> gz(P, T(0)), gm(P, T(0));
  Mat<T> d(res_m.rows(), 2);
  d.col(0) = T(2) * res_m.col(0);
  d.col(1) = T(-2) * res_m.col(1);
  model.backward(cache, d, gz);
  d.col(1).setZero();
  model.backward(cache, d, gm);

  auto norm = [](const std::vector<T>& g) {
    double s = 0.0;
    for (T v : g) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
  };
  out.numerator = norm(gz);
  out.denominator = norm(gm);
  if (!(out.denominator > 0.0) || !std::isfinite(out.numerator)) {
    out.degenerate = true;
  } else {
    out.ratio = out.numerator / out.denominator;
  }
  if (grad_z_out) *grad_z_out = std::move(gz);
  if (grad_mse_out) *grad_mse_out = std::move(gm);
  return out;
}

}  // namespace syncdpo::pref
