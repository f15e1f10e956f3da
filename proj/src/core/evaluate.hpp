// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "checkpoint.hpp"
#include "flow.hpp"
#include "toyworld.hpp"

namespace syncdpo::harness {

struct SampleScore {
  std::int64_t index = 0;
  int class_id = 0;
  toyworld::SyncMeasurement sync;
};

/// Means run over non-degenerate samples; NaN when every sample is degenerate.
struct EvalSummary {
  std::int64_t n = 0;
  std::int64_t degenerate = 0;
  double mean_abs_offset = 0.0;
  double mean_score = 0.0;
};

EvalSummary summarize(std::span<const SampleScore> scores);

/// Generates n samples (classes round-robin, `steps` Euler steps) from a stream
/// seeded with `seed` and scores each with the synchronization oracle.
EvalSummary evaluate_model(const flow::VelocityNet<float>& model, const toyworld::GridSpec& grid, std::int64_t n,
                           std::uint64_t seed, std::vector<SampleScore>* per_sample = nullptr, int steps = 30);

toyworld::GridSpec grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const toyworld::GridSpec& g);
toyworld::GridSpec grid_from_checkpoint(const flow::Checkpoint& ckpt);

void write_eval_csv(const std::filesystem::path& path, std::span<const SampleScore> scores);

/// Loads a checkpoint and evaluates its EMA (default) or raw parameters; writes
/// the per-sample CSV when `csv_out` is non-empty.
EvalSummary evaluate_checkpoint(const std::filesystem::path& ckpt_path, std::int64_t n, std::uint64_t seed,
                                bool use_ema, const std::filesystem::path& csv_out = {});

/// Shuffled-pairing baseline: video of sample i against audio of sample i+1.
EvalSummary shuffled_pair_baseline(const flow::VelocityNet<float>& model, const toyworld::GridSpec& grid,
                                   std::int64_t n, std::uint64_t seed);

}  // namespace syncdpo::harness
