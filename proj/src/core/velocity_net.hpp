// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Conditional velocity network v(x, t, y): an MLP over
// [state | sinusoidal time embedding | condition] with SiLU hidden layers,
// plus an optional time-conditioned diagonal skip a(t) * x, with hand-written
// backpropagation. The skip carries the full-rank part of the velocity
// (roughly -x / (1 - t) on low-variance coordinates) that a hidden width below
// the state dimension cannot represent.
//
// Parameters live in one flat buffer so the optimizer, EMA, checkpointing and
// finite-difference checks all see the same vector.
//
// Scalar is float for training and double for gradient verification.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"

namespace syncdpo::flow {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct Architecture {
  int state_dim = 480;
  int cond_dim = 4;
  int time_dim = 16;
  int hidden = 256;
  int hidden_layers = 2;
  bool diag_skip = true;

  int input_dim() const { return state_dim + time_dim + cond_dim; }
  bool operator==(const Architecture&) const = default;
};

/// Writes sin/cos features of t into rows of `out` (time_dim x B).
template <class T>
void time_embedding(const Vec<T>& t, int time_dim, Eigen::Ref<Mat<T>> out) {
  const int half = time_dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = half > 1 ? std::pow(50.0, static_cast<double>(i) / (half - 1)) : 1.0;
    for (Eigen::Index b = 0; b < t.size(); ++b) {
      const double phase = freq * static_cast<double>(t[b]);
      out(2 * i, b) = static_cast<T>(std::sin(phase));
      out(2 * i + 1, b) = static_cast<T>(std::cos(phase));
    }
  }
  if (time_dim % 2 == 1) out.row(time_dim - 1) = t.transpose();
}

template <class T>
class VelocityNet {
 public:
  using Scalar = T;

  struct Cache {
    std::vector<Mat<T>> layer_inputs;  // input to each linear layer
    std::vector<Mat<T>> pre_act;       // pre-activation of each hidden layer
  };

  VelocityNet() = default;
  explicit VelocityNet(Architecture arch) : arch_(arch) {
    require(arch.state_dim > 0 && arch.cond_dim >= 0 && arch.time_dim >= 0 && arch.hidden > 0 &&
                arch.hidden_layers >= 1,
            "invalid velocity network architecture");
    std::size_t offset = 0;
    int in = arch.input_dim();
    for (int l = 0; l <= arch.hidden_layers; ++l) {
      const int out = l == arch.hidden_layers ? arch.state_dim : arch.hidden;
      Layer layer{in, out, offset, offset + static_cast<std::size_t>(in) * out};
      offset = layer.b_offset + static_cast<std::size_t>(out);
      layers_.push_back(layer);
      in = out;
    }
    if (arch.diag_skip) {
      skip_w_offset_ = offset;
      skip_b_offset_ = offset + static_cast<std::size_t>(arch.state_dim) * arch.time_dim;
      offset = skip_b_offset_ + static_cast<std::size_t>(arch.state_dim);
    }
    params_.assign(offset, T(0));
  }

  const Architecture& arch() const { return arch_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }
  std::size_t num_layers() const { return layers_.size(); }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases; the skip starts at zero.
  void init(Rng& rng) {
    for (const auto& layer : layers_) {
      std::uniform_real_distribution<double> u(-1.0 / std::sqrt(layer.in), 1.0 / std::sqrt(layer.in));
      for (std::size_t i = layer.w_offset; i < layer.b_offset + layer.out; ++i) params_[i] = static_cast<T>(u(rng));
    }
  }

  /// Names and extents of the individual parameter tensors, in buffer order.
  struct TensorView {
    std::string name;
    std::vector<std::int64_t> shape;
    std::size_t offset;
    std::size_t count;
  };
  std::vector<TensorView> tensor_views() const {
    std::vector<TensorView> out;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      const std::string p = "layer" + std::to_string(l);
      out.push_back({p + ".weight", {L.out, L.in}, L.w_offset, static_cast<std::size_t>(L.in) * L.out});
      out.push_back({p + ".bias", {L.out}, L.b_offset, static_cast<std::size_t>(L.out)});
    }
    if (arch_.diag_skip) {
      const auto n = static_cast<std::size_t>(arch_.state_dim);
      out.push_back({"skip.weight", {arch_.state_dim, arch_.time_dim}, skip_w_offset_, n * arch_.time_dim});
      out.push_back({"skip.bias", {arch_.state_dim}, skip_b_offset_, n});
    }
    return out;
  }

  /// x: state_dim x B, t: B, y: cond_dim x B. Returns state_dim x B.
  Mat<T> forward(const Mat<T>& x, const Vec<T>& t, const Mat<T>& y, Cache* cache = nullptr) const {
    const Eigen::Index batch = x.cols();
    require(x.rows() == arch_.state_dim, "state dimension mismatch");
    require(y.rows() == arch_.cond_dim && y.cols() == batch && t.size() == batch, "batch shape mismatch");

    Mat<T> h(arch_.input_dim(), batch);
    h.topRows(arch_.state_dim) = x;
    time_embedding<T>(t, arch_.time_dim, h.middleRows(arch_.state_dim, arch_.time_dim));
    h.bottomRows(arch_.cond_dim) = y;
    Mat<T> input_copy;
    if (!cache && arch_.diag_skip) input_copy = h;

    if (cache) {
      cache->layer_inputs.clear();
      cache->pre_act.clear();
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Mat<T> z = weight(l) * h;
      z.colwise() += bias(l);
      if (cache) cache->layer_inputs.push_back(std::move(h));
      if (l + 1 == layers_.size()) {
        if (arch_.diag_skip) {
          const Mat<T>& in0 = cache ? cache->layer_inputs.front() : input_copy;
          Mat<T> alpha = skip_weight() * in0.middleRows(arch_.state_dim, arch_.time_dim);
          alpha.colwise() += skip_bias();
          z += alpha.cwiseProduct(x);
        }
        return z;
      }
      h = z.unaryExpr([](T v) { return v / (T(1) + std::exp(-v)); });
      if (cache) cache->pre_act.push_back(std::move(z));
    }
    return h;  // unreachable
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Cache& cache, const Mat<T>& d_out, std::span<T> grad) const {
    require(grad.size() == params_.size(), "gradient buffer size mismatch");
    require(!cache.layer_inputs.empty(), "backward called without a forward cache");
    if (arch_.diag_skip) {
      const Mat<T>& in0 = cache.layer_inputs.front();
      const Mat<T> gx = d_out.cwiseProduct(in0.topRows(arch_.state_dim));
      Eigen::Map<Mat<T>> dw(grad.data() + skip_w_offset_, arch_.state_dim, arch_.time_dim);
      Eigen::Map<Vec<T>> db(grad.data() + skip_b_offset_, arch_.state_dim);
      dw.noalias() += gx * in0.middleRows(arch_.state_dim, arch_.time_dim).transpose();
      db += gx.rowwise().sum();
    }
    Mat<T> g = d_out;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& L = layers_[li];
      Eigen::Map<Mat<T>> dw(grad.data() + L.w_offset, L.out, L.in);
      Eigen::Map<Vec<T>> db(grad.data() + L.b_offset, L.out);
      dw.noalias() += g * cache.layer_inputs[li].transpose();
      db += g.rowwise().sum();
      if (li == 0) break;
      Mat<T> up = weight(li).transpose() * g;
      const Mat<T>& z = cache.pre_act[li - 1];
      g = up.binaryExpr(z, [](T u, T v) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return u * s * (T(1) + v * (T(1) - s));
      });
    }
  }

  template <class U>
  VelocityNet<U> cast() const {
    VelocityNet<U> out(arch_);
    auto dst = out.params();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<U>(params_[i]);
    return out;
  }

 private:
  struct Layer {
    int in;
    int out;
    std::size_t w_offset;
    std::size_t b_offset;
  };

  Eigen::Map<const Mat<T>> weight(std::size_t l) const {
    return {params_.data() + layers_[l].w_offset, layers_[l].out, layers_[l].in};
  }
  Eigen::Map<const Vec<T>> bias(std::size_t l) const { return {params_.data() + layers_[l].b_offset, layers_[l].out}; }
  Eigen::Map<const Mat<T>> skip_weight() const {
    return {params_.data() + skip_w_offset_, arch_.state_dim, arch_.time_dim};
  }
  Eigen::Map<const Vec<T>> skip_bias() const { return {params_.data() + skip_b_offset_, arch_.state_dim}; }

  Architecture arch_;
  std::vector<Layer> layers_;
  std::vector<T> params_;
  std::size_t skip_w_offset_ = 0;
  std::size_t skip_b_offset_ = 0;
  bool frozen_ = false;
};

}  // namespace syncdpo::flow
