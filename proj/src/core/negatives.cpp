// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "negatives.hpp"

#include <algorithm>
#include <cmath>

#include "flow.hpp"

namespace syncdpo::negatives {

const char* to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::Scale: return "scale";
    case PerturbationKind::Replace: return "replace";
    case PerturbationKind::Shift: return "shift";
    case PerturbationKind::Mask: return "mask";
    case PerturbationKind::Synthesize: return "synthesize";
  }
  return "?";
}

PerturbationKind kind_from_string(const std::string& s) {
  for (auto k : {PerturbationKind::Scale, PerturbationKind::Replace, PerturbationKind::Shift, PerturbationKind::Mask,
                 PerturbationKind::Synthesize})
    if (s == to_string(k)) return k;
  fail(ErrorCode::InvalidArgument, "unknown perturbation kind '" + s + "'");
}

nlohmann::json to_json(const PerturbationRecord& r) {
  nlohmann::json j{{"kind", to_string(r.kind)}, {"modality", toyworld::to_string(r.modality)}};
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ScaleParams>) j["s"] = p.s;
        if constexpr (std::is_same_v<P, ReplaceParams>) j["source_id"] = p.source_id;
        if constexpr (std::is_same_v<P, ShiftParams>) j["delta"] = p.delta;
        if constexpr (std::is_same_v<P, MaskParams>) {
          j["m"] = p.m;
          j["start"] = p.start;
        }
        if constexpr (std::is_same_v<P, SynthesizeParams>) j["gen_seed"] = p.gen_seed;
      },
      r.params);
  return j;
}

PerturbationRecord record_from_json(const nlohmann::json& j) {
  PerturbationRecord r;
  try {
    r.kind = kind_from_string(j.at("kind").get<std::string>());
    const auto mod = j.at("modality").get<std::string>();
    require(mod == "video" || mod == "audio", "unknown modality '" + mod + "'");
    r.modality = mod == "video" ? Modality::Video : Modality::Audio;
    switch (r.kind) {
      case PerturbationKind::Scale: r.params = ScaleParams{j.at("s").get<double>()}; break;
      case PerturbationKind::Replace: r.params = ReplaceParams{j.at("source_id").get<std::int64_t>()}; break;
      case PerturbationKind::Shift: r.params = ShiftParams{j.at("delta").get<double>()}; break;
      case PerturbationKind::Mask: r.params = MaskParams{j.at("m").get<double>(), j.at("start").get<double>()}; break;
      case PerturbationKind::Synthesize: r.params = SynthesizeParams{j.at("gen_seed").get<std::uint64_t>()}; break;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed perturbation record: ") + e.what());
  }
  return r;
}

namespace {

float lerp_frame(const ModalityTrack& t, double pos, int channel) {
  const int lo = static_cast<int>(std::floor(pos));
  const int hi = std::min(lo + 1, t.frames - 1);
  const double w = pos - lo;
  if (w == 0.0) return t.at(lo, channel);
  return static_cast<float>((1.0 - w) * t.at(lo, channel) + w * t.at(hi, channel));
}

ModalityTrack& track_of(PairSample& p, Modality m) { return m == Modality::Video ? p.video : p.audio; }
const ModalityTrack& track_of(const PairSample& p, Modality m) { return m == Modality::Video ? p.video : p.audio; }

NegativeSample finish(const PairSample& parent, Modality m, ModalityTrack replacement, PerturbationKind kind,
                      PerturbationParams params, std::int64_t parent_id) {
  NegativeSample n;
  n.pair = parent;
  track_of(n.pair, m) = std::move(replacement);
  n.record = {kind, m, params};
  n.parent_id = parent_id;
  return n;
}

}  // namespace

ModalityTrack time_scale(const ModalityTrack& track, double s) {
  require(s > 0, "scale factor must be positive");
  const int T = track.frames;
  const int stretched = std::max(1, static_cast<int>(std::lround(T * s)));
  ModalityTrack full(track.modality, track.rate, stretched, track.channels);
  for (int k = 0; k < stretched; ++k) {
    const double pos = std::min(k / s, static_cast<double>(T - 1));
    for (int c = 0; c < track.channels; ++c) full.at(k, c) = lerp_frame(track, pos, c);
  }
  if (stretched == T) return full;

  ModalityTrack out(track.modality, track.rate, T, track.channels);
  if (stretched > T) {
    const int start = (stretched - T) / 2;
    for (int k = 0; k < T; ++k)
      for (int c = 0; c < track.channels; ++c) out.at(k, c) = full.at(start + k, c);
    return out;
  }
  for (int k = 0; k < T; ++k) {
    for (int c = 0; c < track.channels; ++c) {
      if (k < stretched)
        out.at(k, c) = full.at(k, c);
      else
        out.at(k, c) = track.modality == Modality::Video ? full.at(stretched - 1, c) : 0.0f;
    }
  }
  return out;
}

ModalityTrack time_shift(const ModalityTrack& track, double delta_seconds) {
  const int T = track.frames;
  const double shift = delta_seconds * track.rate;
  ModalityTrack out(track.modality, track.rate, T, track.channels);
  for (int k = 0; k < T; ++k) {
    double pos = k - shift;
    const bool outside = pos < 0.0 || pos > T - 1;
    if (outside && track.modality == Modality::Audio) continue;  // silent
    pos = std::clamp(pos, 0.0, static_cast<double>(T - 1));      // frozen edge frame
    for (int c = 0; c < track.channels; ++c) out.at(k, c) = lerp_frame(track, pos, c);
  }
  return out;
}

int mask_length(const ModalityTrack& track, double m) {
  return std::clamp(static_cast<int>(std::lround(m * track.frames)), 0, track.frames);
}

int mask_start_frame(const ModalityTrack& track, double start_seconds) {
  return static_cast<int>(std::lround(start_seconds * track.rate));
}

ModalityTrack time_mask(const ModalityTrack& track, int start_frame, int length) {
  require(start_frame >= 0 && length >= 0 && start_frame + length <= track.frames, "mask window out of range");
  ModalityTrack out = track;
  if (length == 0) return out;
  int hold = start_frame - 1;
  if (hold < 0) hold = std::min(start_frame + length, track.frames - 1);
  for (int k = start_frame; k < start_frame + length; ++k)
    for (int c = 0; c < track.channels; ++c)
      out.at(k, c) = track.modality == Modality::Video ? track.at(hold, c) : 0.0f;
  return out;
}

Modality draw_modality(Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  return coin(rng) ? Modality::Video : Modality::Audio;
}

NegativeSample perturb_scale(const PairSample& pair, Rng& rng, std::int64_t parent_id) {
  const Modality m = draw_modality(rng);
  const double s = std::uniform_real_distribution<double>(kScaleMin, kScaleMax)(rng);
  return finish(pair, m, time_scale(track_of(pair, m), s), PerturbationKind::Scale, ScaleParams{s}, parent_id);
}

NegativeSample perturb_replace(const PairSample& pair, std::span<const PairSample> pool, std::int64_t parent_id,
                               Rng& rng) {
  require(pool.size() >= 2, "replace needs a pool of at least 2 samples");
  const Modality m = draw_modality(rng);
  const auto n = static_cast<std::int64_t>(pool.size());
  const bool parent_in_pool = parent_id >= 0 && parent_id < n;
  std::int64_t source = std::uniform_int_distribution<std::int64_t>(0, parent_in_pool ? n - 2 : n - 1)(rng);
  if (parent_in_pool && source >= parent_id) ++source;
  return finish(pair, m, track_of(pool[static_cast<std::size_t>(source)], m), PerturbationKind::Replace,
                ReplaceParams{source}, parent_id);
}

NegativeSample perturb_shift(const PairSample& pair, Rng& rng, std::int64_t parent_id) {
  const Modality m = draw_modality(rng);
  const double delta = std::uniform_real_distribution<double>(-kShiftMaxSeconds, kShiftMaxSeconds)(rng);
  return finish(pair, m, time_shift(track_of(pair, m), delta), PerturbationKind::Shift, ShiftParams{delta},
                parent_id);
}

NegativeSample perturb_mask(const PairSample& pair, Rng& rng, std::int64_t parent_id) {
  const Modality m = draw_modality(rng);
  const double ratio = std::uniform_real_distribution<double>(kMaskMin, kMaskMax)(rng);
  const ModalityTrack& src = track_of(pair, m);
  const int len = mask_length(src, ratio);
  const int start = std::uniform_int_distribution<int>(0, src.frames - len)(rng);
  return finish(pair, m, time_mask(src, start, len), PerturbationKind::Mask, MaskParams{ratio, start / src.rate},
                parent_id);
}

namespace {

ModalityTrack synthesize_track(const PairSample& pair, Modality m, const flow::VelocityNet<float>& ref,
                               std::uint64_t gen_seed) {
  require(ref.frozen(), "synthesis requires the frozen reference model");
  toyworld::GridSpec grid;
  grid.duration = pair.video.duration();
  grid.video_rate = pair.video.rate;
  grid.video_channels = pair.video.channels;
  grid.audio_rate = pair.audio.rate;
  grid.audio_channels = pair.audio.channels;
  grid.num_classes = static_cast<int>(pair.condition.size());
  Rng gen(gen_seed);
  auto [video, audio] = flow::sample_pair(ref, pair.condition, gen, grid, kSynthesisSteps);
  return m == Modality::Video ? std::move(video) : std::move(audio);
}

}  // namespace

NegativeSample perturb_synthesize(const PairSample& pair, const flow::VelocityNet<float>& ref_model, Rng& rng,
                                  std::int64_t parent_id) {
  const Modality m = draw_modality(rng);
  const std::uint64_t gen_seed = rng();
  return finish(pair, m, synthesize_track(pair, m, ref_model, gen_seed), PerturbationKind::Synthesize,
                SynthesizeParams{gen_seed}, parent_id);
}

NegativeSample construct_negative(const PairSample& pair, PerturbationKind kind, const NegativeContext& ctx,
                                  Rng& rng) {
  switch (kind) {
    case PerturbationKind::Scale: return perturb_scale(pair, rng, ctx.parent_id);
    case PerturbationKind::Replace:
      require(ctx.pool.size() >= 2, "replace requires a sample pool of size >= 2 in the context");
      return perturb_replace(pair, ctx.pool, ctx.parent_id, rng);
    case PerturbationKind::Shift: return perturb_shift(pair, rng, ctx.parent_id);
    case PerturbationKind::Mask: return perturb_mask(pair, rng, ctx.parent_id);
    case PerturbationKind::Synthesize:
      require(ctx.ref_model != nullptr, "synthesize requires a reference model in the context");
      return perturb_synthesize(pair, *ctx.ref_model, rng, ctx.parent_id);
  }
  fail(ErrorCode::Internal, "unhandled perturbation kind");
}

PairSample replay(const PairSample& parent, const PerturbationRecord& record, const NegativeContext& ctx) {
  const ModalityTrack& src = track_of(parent, record.modality);
  PairSample out = parent;
  ModalityTrack& dst = track_of(out, record.modality);
  switch (record.kind) {
    case PerturbationKind::Scale: dst = time_scale(src, std::get<ScaleParams>(record.params).s); break;
    case PerturbationKind::Replace: {
      const auto id = std::get<ReplaceParams>(record.params).source_id;
      require(id >= 0 && id < static_cast<std::int64_t>(ctx.pool.size()), "replay source_id outside pool");
      dst = track_of(ctx.pool[static_cast<std::size_t>(id)], record.modality);
      break;
    }
    case PerturbationKind::Shift: dst = time_shift(src, std::get<ShiftParams>(record.params).delta); break;
    case PerturbationKind::Mask: {
      const auto& p = std::get<MaskParams>(record.params);
      dst = time_mask(src, mask_start_frame(src, p.start), mask_length(src, p.m));
      break;
    }
    case PerturbationKind::Synthesize:
      require(ctx.ref_model != nullptr, "replaying a synthesized negative requires the reference model");
      dst = synthesize_track(parent, record.modality, *ctx.ref_model,
                             std::get<SynthesizeParams>(record.params).gen_seed);
      break;
  }
  return out;
}

std::optional<std::pair<int, int>> rank_candidates(std::span<const toyworld::SyncMeasurement> syncs) {
  const int n = static_cast<int>(syncs.size());
  require(n >= 2, "ranking needs at least 2 candidates");
  int winner = -1;
  for (int i = 0; i < n; ++i) {
    if (syncs[i].degenerate) continue;
    if (winner < 0) {
      winner = i;
      continue;
    }
    const double a = std::abs(syncs[i].offset), b = std::abs(syncs[winner].offset);
    if (a < b || (a == b && syncs[i].score > syncs[winner].score)) winner = i;
  }
  if (winner < 0) return std::nullopt;

  int loser = -1;
  for (int i = 0; i < n; ++i) {
    if (i == winner) continue;
    if (loser < 0) {
      loser = i;
      continue;
    }
    const auto& c = syncs[i];
    const auto& l = syncs[loser];
    if (l.degenerate) continue;
    if (c.degenerate) {
      loser = i;
      continue;
    }
    const double a = std::abs(c.offset), b = std::abs(l.offset);
    if (a > b || (a == b && c.score < l.score)) loser = i;
  }
  return std::make_pair(winner, loser);
}

std::optional<VanillaPair> build_vanilla_dpo_pair(const flow::VelocityNet<float>& model, std::span<const float> y,
                                                  Rng& rng, const toyworld::GridSpec& grid, int n_candidates,
                                                  int* sampler_calls, std::string* skip_reason) {
  require(n_candidates >= 2, "need at least 2 candidates");
  const auto C = static_cast<Eigen::Index>(y.size());
  flow::Mat<float> cond(C, n_candidates);
  for (int i = 0; i < n_candidates; ++i) cond.col(i) = Eigen::Map<const flow::Vec<float>>(y.data(), C);
  const flow::Mat<float> states = flow::sample_ode(model, cond, rng, kSynthesisSteps);
  if (sampler_calls) *sampler_calls += n_candidates;

  std::vector<RankedCandidate> cands;
  std::vector<toyworld::SyncMeasurement> syncs;
  for (int i = 0; i < n_candidates; ++i) {
    auto [video, audio] = flow::unpack(
        std::span<const float>(states.col(i).data(), static_cast<std::size_t>(states.rows())), grid);
    RankedCandidate rc;
    rc.pair.video = std::move(video);
    rc.pair.audio = std::move(audio);
    rc.pair.condition.assign(y.begin(), y.end());
    rc.sync = toyworld::measure_offset(rc.pair.video, rc.pair.audio);
    syncs.push_back(rc.sync);
    cands.push_back(std::move(rc));
  }
  const auto ranked = rank_candidates(syncs);
  if (!ranked) {
    if (skip_reason) *skip_reason = "all " + std::to_string(n_candidates) + " candidates degenerate";
    return std::nullopt;
  }
  VanillaPair out;
  out.winner = std::move(cands[static_cast<std::size_t>(ranked->first)].pair);
  out.loser = std::move(cands[static_cast<std::size_t>(ranked->second)].pair);
  out.winner_sync = syncs[static_cast<std::size_t>(ranked->first)];
  out.loser_sync = syncs[static_cast<std::size_t>(ranked->second)];
  out.sampler_calls = n_candidates;
  return out;
}

}  // namespace syncdpo::negatives
