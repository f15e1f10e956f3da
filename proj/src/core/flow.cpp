// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "flow.hpp"

#include <algorithm>

namespace syncdpo::flow {

using toyworld::GridSpec;
using toyworld::Modality;
using toyworld::ModalityTrack;
using toyworld::PairSample;

Vec<float> pack_tracks(const ModalityTrack& video, const ModalityTrack& audio) {
  Vec<float> s(static_cast<Eigen::Index>(video.samples.size() + audio.samples.size()));
  std::copy(video.samples.begin(), video.samples.end(), s.data());
  std::copy(audio.samples.begin(), audio.samples.end(), s.data() + video.samples.size());
  return s;
}

Vec<float> pack(const PairSample& pair) { return pack_tracks(pair.video, pair.audio); }

std::pair<ModalityTrack, ModalityTrack> unpack(std::span<const float> state, const GridSpec& grid) {
  if (static_cast<int>(state.size()) != grid.state_dim())
    fail(ErrorCode::InvalidArgument, "state length " + std::to_string(state.size()) + " != " +
                                         std::to_string(grid.state_dim()));
  ModalityTrack video(Modality::Video, grid.video_rate, grid.video_frames(), grid.video_channels);
  ModalityTrack audio(Modality::Audio, grid.audio_rate, grid.audio_frames(), grid.audio_channels);
  std::copy_n(state.begin(), video.samples.size(), video.samples.begin());
  std::copy_n(state.begin() + static_cast<std::ptrdiff_t>(video.samples.size()), audio.samples.size(),
              audio.samples.begin());
  return {std::move(video), std::move(audio)};
}

Mat<float> pack_states(std::span<const PairSample* const> pairs) {
  require(!pairs.empty(), "empty batch");
  const Vec<float> first = pack(*pairs[0]);
  Mat<float> m(first.size(), static_cast<Eigen::Index>(pairs.size()));
  m.col(0) = first;
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    const Vec<float> s = pack(*pairs[i]);
    require(s.size() == first.size(), "pairs with differing grids in one batch");
    m.col(static_cast<Eigen::Index>(i)) = s;
  }
  return m;
}

Mat<float> pack_conditions(std::span<const PairSample* const> pairs) {
  require(!pairs.empty(), "empty batch");
  const auto c = static_cast<Eigen::Index>(pairs[0]->condition.size());
  Mat<float> m(c, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    require(static_cast<Eigen::Index>(pairs[i]->condition.size()) == c, "condition size mismatch");
    m.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vec<float>>(pairs[i]->condition.data(), c);
  }
  return m;
}

std::pair<ModalityTrack, ModalityTrack> sample_pair(const VelocityNet<float>& model, std::span<const float> condition,
                                                    Rng& rng, const GridSpec& grid, int steps) {
  const Mat<float> y = Eigen::Map<const Vec<float>>(condition.data(), static_cast<Eigen::Index>(condition.size()));
  const Mat<float> x = sample_ode(model, y, rng, steps);
  return unpack(std::span<const float>(x.data(), static_cast<std::size_t>(x.size())), grid);
}

Architecture default_architecture(const GridSpec& grid) {
  Architecture a;
  a.state_dim = grid.state_dim();
  a.cond_dim = grid.num_classes;
  return a;
}

}  // namespace syncdpo::flow
