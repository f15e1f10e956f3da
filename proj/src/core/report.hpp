// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Cross-run comparison tables, the gradient-norm-ratio diagnostic, and SVG plots.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace syncdpo::harness {

struct RunSummary {
  std::string run_dir;
  std::string label;
  std::string method;
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  double val_fm_loss = 0.0;
  double mean_abs_offset = 0.0;
  double mean_score = 0.0;
  std::int64_t sampler_calls = 0;
  double wall_time_per_step = 0.0;
};

RunSummary load_run_summary(const std::filesystem::path& run_dir);

struct ComparisonRow {
  std::string kind;  // "run" or "median"
  RunSummary run;    // for medians: label set, numeric fields are medians, seed/run_dir empty
  int runs = 1;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  std::string text;  // aligned table
  std::string csv;
};

double median(std::vector<double> v);

/// Per-run rows followed by one median row per label. Seeds aggregate by median.
ComparisonReport compare_runs(std::span<const std::filesystem::path> run_dirs);

struct GradNormSummary {
  std::int64_t n = 0;
  std::int64_t valid = 0;
  std::int64_t degenerate = 0;
  double median = 0.0;
  double fraction_above_one = 0.0;
  double mean = 0.0;
};

/// n draws of (positive, Replace negative, shared noise and t) scored with the
/// gradient-norm ratio on the checkpoint's EMA weights. The reference is
/// `ref_ckpt` when given, else the checkpoint's recorded init_ckpt, else the
/// model itself. Writes CSV (sample_index, ratio, z, winner_mse) and a JSON summary.
GradNormSummary diag_gradnorm(const std::filesystem::path& ckpt, std::int64_t n, std::uint64_t seed,
                              const std::filesystem::path& csv_out, const std::filesystem::path& ref_ckpt = {});

/// Renders metrics.csv curves of a run directory to <run>/plot.svg; returns the path.
std::filesystem::path plot_run(const std::filesystem::path& run_dir);

}  // namespace syncdpo::harness
