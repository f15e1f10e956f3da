// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Difficulty schedule over the two curriculum negatives: start from an even
// Replace/Scale mix and move probability mass linearly from Replace (easy) to
// Scale (hard) at rate k per optimizer step, clamped at p_replace = 0.

#include <cstdint>
#include <string>
#include <utility>

#include "common.hpp"
#include "negatives.hpp"

namespace syncdpo::curriculum {

/// How negatives are chosen during preference training. The *_only modes
/// beyond replace/scale are single-operator ablations outside the schedule.
enum class Mode { Curriculum, Uniform, ScaleOnly, ReplaceOnly, ShiftOnly, MaskOnly, SynthesizeOnly };
const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct CurriculumConfig {
  double k = 1e-4;  // probability moved per step, as a fraction (1e-4 == 0.01 %)
  Mode mode = Mode::Curriculum;
  std::int64_t total_steps = 0;

  double k_percent() const { return k * 100.0; }
};

struct CurriculumState {
  std::int64_t step = 0;
  double p_replace = 0.5;
  double p_scale = 0.5;
};

/// k that reaches p_replace = 0 after 80 % of `total_steps`.
double desk_rate(std::int64_t total_steps);

/// (p_replace, p_scale) at `step`. Uniform mode ignores k; the fixed modes
/// return the degenerate simplex corners.
std::pair<double, double> sampling_probs(std::int64_t step, const CurriculumConfig& cfg);
CurriculumState state_at(std::int64_t step, const CurriculumConfig& cfg);

negatives::PerturbationKind sample_kind(std::int64_t step, const CurriculumConfig& cfg, Rng& rng);

}  // namespace syncdpo::curriculum
