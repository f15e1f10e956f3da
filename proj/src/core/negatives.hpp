// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Rule-based temporal negatives built on the fly from synchronized pairs, and
// the sampling-and-ranking pair builder used by the vanilla preference baseline.
//
// Every operator perturbs exactly one modality, chosen with equal probability,
// and leaves the condition untouched. Fill conventions follow the operator
// vocabulary: vacated video frames repeat the nearest frame ("frozen"), vacated
// audio samples are zero ("silent").

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "toyworld.hpp"
#include "velocity_net.hpp"

namespace syncdpo::negatives {

using toyworld::Modality;
using toyworld::ModalityTrack;
using toyworld::PairSample;

enum class PerturbationKind { Scale, Replace, Shift, Mask, Synthesize };
const char* to_string(PerturbationKind k);
PerturbationKind kind_from_string(const std::string& s);

inline constexpr double kScaleMin = 0.5, kScaleMax = 1.5;
inline constexpr double kShiftMaxSeconds = 2.5;
inline constexpr double kMaskMin = 0.1, kMaskMax = 0.3;
inline constexpr int kSynthesisSteps = 30;

struct ScaleParams {
  double s;
};
struct ReplaceParams {
  std::int64_t source_id;
};
struct ShiftParams {
  double delta;  // seconds; positive delays the modality
};
struct MaskParams {
  double m;       // drawn mask ratio
  double start;   // seconds
};
struct SynthesizeParams {
  std::uint64_t gen_seed;
};
using PerturbationParams = std::variant<ScaleParams, ReplaceParams, ShiftParams, MaskParams, SynthesizeParams>;

struct PerturbationRecord {
  PerturbationKind kind = PerturbationKind::Scale;
  Modality modality = Modality::Video;
  PerturbationParams params = ScaleParams{1.0};
};
nlohmann::json to_json(const PerturbationRecord& r);
PerturbationRecord record_from_json(const nlohmann::json& j);

struct NegativeSample {
  PairSample pair;
  PerturbationRecord record;
  std::int64_t parent_id = -1;
};

/// Everything an operator may need beyond the parent pair.
struct NegativeContext {
  std::span<const PairSample> pool;                   // Replace
  std::int64_t parent_id = -1;                        // index of the parent in `pool`, if any
  const flow::VelocityNet<float>* ref_model = nullptr;  // Synthesize; must be frozen
};

// Deterministic track transforms (exposed for tests and replay).
ModalityTrack time_scale(const ModalityTrack& track, double s);
ModalityTrack time_shift(const ModalityTrack& track, double delta_seconds);
ModalityTrack time_mask(const ModalityTrack& track, int start_frame, int length);
int mask_length(const ModalityTrack& track, double m);
int mask_start_frame(const ModalityTrack& track, double start_seconds);

Modality draw_modality(Rng& rng);

NegativeSample perturb_scale(const PairSample& pair, Rng& rng, std::int64_t parent_id = -1);
NegativeSample perturb_replace(const PairSample& pair, std::span<const PairSample> pool, std::int64_t parent_id,
                               Rng& rng);
NegativeSample perturb_shift(const PairSample& pair, Rng& rng, std::int64_t parent_id = -1);
NegativeSample perturb_mask(const PairSample& pair, Rng& rng, std::int64_t parent_id = -1);
NegativeSample perturb_synthesize(const PairSample& pair, const flow::VelocityNet<float>& ref_model, Rng& rng,
                                  std::int64_t parent_id = -1);

NegativeSample construct_negative(const PairSample& pair, PerturbationKind kind, const NegativeContext& ctx,
                                  Rng& rng);

/// Rebuilds a negative from its parent and record. Synthesize additionally needs ctx.ref_model.
PairSample replay(const PairSample& parent, const PerturbationRecord& record, const NegativeContext& ctx);

// ---- sampling-and-ranking baseline ---------------------------------------------

struct RankedCandidate {
  PairSample pair;
  toyworld::SyncMeasurement sync;
};

struct VanillaPair {
  PairSample winner;
  PairSample loser;
  toyworld::SyncMeasurement winner_sync;
  toyworld::SyncMeasurement loser_sync;
  int sampler_calls = 0;
};

/// Picks winner = smallest |offset| (ties: higher score) and loser = largest
/// |offset| (ties: lower score); degenerate candidates rank below every
/// measurable one. Returns nullopt when every candidate is degenerate.
std::optional<std::pair<int, int>> rank_candidates(std::span<const toyworld::SyncMeasurement> syncs);

/// Draws `n_candidates` generations for condition `y`, scores them with the
/// synchronization oracle and returns the extreme pair. `sampler_calls` in the
/// result counts one call per generated candidate, also when the pair is skipped.
std::optional<VanillaPair> build_vanilla_dpo_pair(const flow::VelocityNet<float>& model, std::span<const float> y,
                                                  Rng& rng, const toyworld::GridSpec& grid, int n_candidates = 3,
                                                  int* sampler_calls = nullptr, std::string* skip_reason = nullptr);

}  // namespace syncdpo::negatives
