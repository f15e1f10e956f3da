// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Trainers for supervised flow matching (sft), sampling-and-ranking preference
// optimization (dpo) and on-the-fly negative preference optimization (syncdpo).
//
// Run directory layout:
//   manifest.json            config echo, versions, fingerprints, cost accounting
//   metrics.csv              deterministic metric rows (step-ordered)
//   timing.csv               wall time and sampler calls per metric row
//   negatives.jsonl          one perturbation record per constructed negative (syncdpo)
//   checkpoints/step_*.ckpt  checkpoints; crash_step_*.ckpt on numerical faults
//   eval/final.csv           per-sample oracle scores of the final evaluation

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "config.hpp"
#include "evaluate.hpp"

namespace syncdpo::harness {

inline constexpr int kManifestFormatVersion = 1;
inline constexpr const char* kCodeVersion = "1.0.0";

struct MetricsRow {
  std::int64_t step = 0;
  double train_loss = 0.0;  // mean over updates since the previous row; NaN at step 0
  double val_fm_loss = 0.0;
  double mean_abs_offset = 0.0;
  double mean_score = 0.0;
  std::int64_t degenerate = 0;
  double p_replace = 0.0;  // NaN unless curriculum-driven
  double wall_time = 0.0;  // seconds since training start, excluding evaluation
  std::int64_t sampler_calls = 0;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path final_checkpoint;
  std::vector<MetricsRow> metrics;
  double first_loss = 0.0;
  std::int64_t sampler_calls = 0;
  std::int64_t skipped_pairs = 0;
  double wall_time_total = 0.0;
  double wall_time_per_step = 0.0;
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::size_t n, double beta1, double beta2, double eps, double weight_decay);
  void step(std::span<float> params, std::span<const float> grad, double lr);

  std::vector<float> m, v;
  std::int64_t t = 0;

 private:
  double beta1_, beta2_, eps_, weight_decay_;
};

/// Linear warmup to the peak rate, then cosine decay to zero at `total_steps`.
double lr_at(std::int64_t step, const TrainConfig& cfg);

/// shadow <- decay * shadow + (1 - decay) * params
void ema_update(std::span<float> shadow, std::span<const float> params, double decay);

struct TrainHooks {
  /// Called after every optimizer update with the step count, parameters and EMA shadow.
  std::function<void(std::int64_t, std::span<const float>, std::span<const float>)> on_step;
};

TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks = {});

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace syncdpo::harness
