// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "evaluate.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace syncdpo::harness {

using toyworld::GridSpec;

EvalSummary summarize(std::span<const SampleScore> scores) {
  EvalSummary s;
  s.n = static_cast<std::int64_t>(scores.size());
  double off = 0.0, sc = 0.0;
  std::int64_t valid = 0;
  for (const auto& r : scores) {
    if (r.sync.degenerate) {
      ++s.degenerate;
      continue;
    }
    off += std::abs(r.sync.offset);
    sc += r.sync.score;
    ++valid;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.mean_abs_offset = valid ? off / static_cast<double>(valid) : nan;
  s.mean_score = valid ? sc / static_cast<double>(valid) : nan;
  return s;
}

namespace {

constexpr std::int64_t kChunk = 256;

template <class Fn>
void generate(const flow::VelocityNet<float>& model, const GridSpec& grid, std::int64_t n, std::uint64_t seed,
              int steps, Fn&& on_sample) {
  require(n >= 1, "evaluation needs n >= 1");
  require(model.arch().state_dim == grid.state_dim() && model.arch().cond_dim == grid.num_classes,
          "model does not match the data grid");
  Rng rng(seed);
  for (std::int64_t begin = 0; begin < n; begin += kChunk) {
    const std::int64_t count = std::min(kChunk, n - begin);
    flow::Mat<float> cond = flow::Mat<float>::Zero(grid.num_classes, count);
    for (std::int64_t i = 0; i < count; ++i) cond((begin + i) % grid.num_classes, i) = 1.0f;
    const flow::Mat<float> x = flow::sample_ode(model, cond, rng, steps);
    for (std::int64_t i = 0; i < count; ++i) {
      auto tracks = flow::unpack(std::span<const float>(x.col(i).data(), static_cast<std::size_t>(x.rows())), grid);
      on_sample(begin + i, static_cast<int>((begin + i) % grid.num_classes), std::move(tracks));
    }
  }
}

}  // namespace

EvalSummary evaluate_model(const flow::VelocityNet<float>& model, const GridSpec& grid, std::int64_t n,
                           std::uint64_t seed, std::vector<SampleScore>* per_sample, int steps) {
  std::vector<SampleScore> scores;
  scores.reserve(static_cast<std::size_t>(n));
  generate(model, grid, n, seed, steps, [&](std::int64_t i, int cls, auto tracks) {
    scores.push_back({i, cls, toyworld::measure_offset(tracks.first, tracks.second)});
  });
  const EvalSummary s = summarize(scores);
  if (per_sample) *per_sample = std::move(scores);
  return s;
}

EvalSummary shuffled_pair_baseline(const flow::VelocityNet<float>& model, const GridSpec& grid, std::int64_t n,
                                   std::uint64_t seed) {
  require(n >= 2, "shuffled baseline needs n >= 2");
  std::vector<toyworld::ModalityTrack> videos, audios;
  generate(model, grid, n, seed, 30, [&](std::int64_t, int, auto tracks) {
    videos.push_back(std::move(tracks.first));
    audios.push_back(std::move(tracks.second));
  });
  std::vector<SampleScore> scores;
  for (std::int64_t i = 0; i < n; ++i)
    scores.push_back({i, 0,
                      toyworld::measure_offset(videos[static_cast<std::size_t>(i)],
                                               audios[static_cast<std::size_t>((i + 1) % n)])});
  return summarize(scores);
}

nlohmann::json to_json(const GridSpec& g) {
  return {{"D", g.duration},
          {"video_rate", g.video_rate},
          {"video_channels", g.video_channels},
          {"audio_rate", g.audio_rate},
          {"audio_channels", g.audio_channels},
          {"C", g.num_classes}};
}

GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec g;
  g.duration = j.value("D", g.duration);
  g.video_rate = j.value("video_rate", g.video_rate);
  g.video_channels = j.value("video_channels", g.video_channels);
  g.audio_rate = j.value("audio_rate", g.audio_rate);
  g.audio_channels = j.value("audio_channels", g.audio_channels);
  g.num_classes = j.value("C", g.num_classes);
  return g;
}

GridSpec grid_from_checkpoint(const flow::Checkpoint& ckpt) {
  const GridSpec g = ckpt.config.contains("grid") ? grid_from_json(ckpt.config["grid"]) : GridSpec{};
  if (g.state_dim() != ckpt.arch.state_dim || g.num_classes != ckpt.arch.cond_dim)
    fail(ErrorCode::Format, "checkpoint architecture does not match its data grid");
  return g;
}

void write_eval_csv(const std::filesystem::path& path, std::span<const SampleScore> scores) {
  std::ofstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  f.precision(9);
  f << "index,class_id,offset,abs_offset,score,degenerate\n";
  for (const auto& s : scores)
    f << s.index << ',' << s.class_id << ',' << s.sync.offset << ',' << std::abs(s.sync.offset) << ','
      << s.sync.score << ',' << (s.sync.degenerate ? 1 : 0) << '\n';
}

EvalSummary evaluate_checkpoint(const std::filesystem::path& ckpt_path, std::int64_t n, std::uint64_t seed,
                                bool use_ema, const std::filesystem::path& csv_out) {
  require(n >= 1, "evaluation needs n >= 1");
  const flow::Checkpoint ckpt = flow::load_checkpoint(ckpt_path);
  const auto model = flow::model_from_checkpoint(ckpt, use_ema);
  std::vector<SampleScore> scores;
  const EvalSummary s = evaluate_model(model, grid_from_checkpoint(ckpt), n, seed, &scores);
  if (!csv_out.empty()) {
    if (csv_out.has_parent_path()) std::filesystem::create_directories(csv_out.parent_path());
    write_eval_csv(csv_out, scores);
  }
  return s;
}

}  // namespace syncdpo::harness
