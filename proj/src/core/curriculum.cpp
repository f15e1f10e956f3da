// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "curriculum.hpp"

#include <algorithm>

namespace syncdpo::curriculum {

using negatives::PerturbationKind;

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Curriculum: return "curriculum";
    case Mode::Uniform: return "uniform";
    case Mode::ScaleOnly: return "scale_only";
    case Mode::ReplaceOnly: return "replace_only";
    case Mode::ShiftOnly: return "shift_only";
    case Mode::MaskOnly: return "mask_only";
    case Mode::SynthesizeOnly: return "synthesize_only";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  for (auto m : {Mode::Curriculum, Mode::Uniform, Mode::ScaleOnly, Mode::ReplaceOnly, Mode::ShiftOnly, Mode::MaskOnly,
                 Mode::SynthesizeOnly})
    if (s == to_string(m)) return m;
  fail(ErrorCode::InvalidArgument, "unknown curriculum mode '" + s + "'");
}

double desk_rate(std::int64_t total_steps) {
  require(total_steps > 0, "total_steps must be positive");
  return 0.5 / (0.8 * static_cast<double>(total_steps));
}

std::pair<double, double> sampling_probs(std::int64_t step, const CurriculumConfig& cfg) {
  require(step >= 0, "step must be non-negative");
  require(cfg.k >= 0, "curriculum rate must be non-negative");
  double p_replace = 0.5;
  switch (cfg.mode) {
    case Mode::Curriculum: p_replace = std::clamp(0.5 - cfg.k * static_cast<double>(step), 0.0, 0.5); break;
    case Mode::Uniform: p_replace = 0.5; break;
    case Mode::ReplaceOnly: p_replace = 1.0; break;
    case Mode::ScaleOnly: p_replace = 0.0; break;
    default: fail(ErrorCode::InvalidArgument, std::string("mode '") + to_string(cfg.mode) + "' has no schedule");
  }
  return {p_replace, 1.0 - p_replace};
}

CurriculumState state_at(std::int64_t step, const CurriculumConfig& cfg) {
  const auto [r, s] = sampling_probs(step, cfg);
  return {step, r, s};
}

PerturbationKind sample_kind(std::int64_t step, const CurriculumConfig& cfg, Rng& rng) {
  switch (cfg.mode) {
    case Mode::ShiftOnly: return PerturbationKind::Shift;
    case Mode::MaskOnly: return PerturbationKind::Mask;
    case Mode::SynthesizeOnly: return PerturbationKind::Synthesize;
    default: break;
  }
  const double p_replace = sampling_probs(step, cfg).first;
  return std::bernoulli_distribution(p_replace)(rng) ? PerturbationKind::Replace : PerturbationKind::Scale;
}

}  // namespace syncdpo::curriculum
