// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Synthetic two-modality event world with an exact synchronization oracle.
//
// Every sample is a short clip of `duration` seconds containing a class-dependent
// number of events. The video track marks each event with a Gaussian bump on
// channel 0; the audio track marks it with a decaying exponential envelope
// starting at the event time on channel 0. The remaining channels carry a
// class-dependent texture. The condition vector is the one-hot class, which
// never reveals event times.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "common.hpp"

namespace syncdpo::toyworld {

struct GridSpec {
  double duration = 5.0;
  double video_rate = 8.0;
  int video_channels = 4;
  double audio_rate = 32.0;
  int audio_channels = 2;
  int num_classes = 4;

  int video_frames() const;
  int audio_frames() const;
  /// Length of the packed joint state: video block followed by audio block.
  int state_dim() const { return video_frames() * video_channels + audio_frames() * audio_channels; }
  bool operator==(const GridSpec&) const = default;
};

inline constexpr double kBumpStd = 0.15;
inline constexpr double kDecayTau = 0.2;
inline constexpr double kTextureNoiseStd = 0.02;
inline constexpr double kMinSpacing = 0.6;
inline constexpr double kEdgeMargin = 0.5;
inline constexpr int kScheduleRetryCap = 100000;

enum class Modality { Video, Audio };
const char* to_string(Modality m);

struct EventSchedule {
  int class_id = 0;
  std::vector<double> event_times;  // seconds, strictly increasing, float32-representable
  double duration = 5.0;
  bool operator==(const EventSchedule&) const = default;
};

/// Row-major (frames x channels) grid of samples.
struct ModalityTrack {
  Modality modality = Modality::Video;
  double rate = 0.0;
  int frames = 0;
  int channels = 0;
  std::vector<float> samples;

  ModalityTrack() = default;
  ModalityTrack(Modality m, double rate, int frames, int channels)
      : modality(m), rate(rate), frames(frames), channels(channels),
        samples(static_cast<std::size_t>(frames) * channels, 0.0f) {}

  float& at(int frame, int channel) { return samples[static_cast<std::size_t>(frame) * channels + channel]; }
  float at(int frame, int channel) const { return samples[static_cast<std::size_t>(frame) * channels + channel]; }
  double duration() const { return frames / rate; }
  bool operator==(const ModalityTrack&) const = default;
};

struct PairSample {
  ModalityTrack video;
  ModalityTrack audio;
  std::vector<float> condition;  // one-hot class
  EventSchedule schedule;        // metadata; never shown to the model
  bool operator==(const PairSample&) const = default;
};

struct SyncMeasurement {
  double offset = 0.0;  // seconds; positive when audio lags video
  double score = 0.0;   // peak normalized cross-correlation
  bool degenerate = false;
};

EventSchedule sample_schedule(Rng& rng, int class_id, const GridSpec& grid = {});

ModalityTrack render_video(const EventSchedule& schedule, Rng& rng, const GridSpec& grid = {});
ModalityTrack render_audio(const EventSchedule& schedule, Rng& rng, double extra_offset = 0.0,
                           const GridSpec& grid = {});

std::vector<float> one_hot(int class_id, int num_classes);

/// Uniform class draw; both modalities rendered from one schedule.
PairSample make_pair(Rng& rng, const GridSpec& grid = {});
PairSample make_pair_for_class(Rng& rng, int class_id, const GridSpec& grid = {});

/// Onset envelopes on the audio grid. The video envelope is channel 0 linearly
/// upsampled to the audio rate and passed through the audio decay kernel, so a
/// synchronized pair correlates with zero lag.
std::vector<double> video_onset_envelope(const ModalityTrack& video, double audio_rate, int audio_frames);
std::vector<double> audio_onset_envelope(const ModalityTrack& audio);

/// Lag in [-D/2, D/2] maximizing normalized cross-correlation of the onset
/// envelopes; ties resolve toward the smallest |lag|.
SyncMeasurement measure_offset(const ModalityTrack& video, const ModalityTrack& audio);

// ---- dataset container -------------------------------------------------------

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr char kDatasetMagic[9] = "SDPODATA";

struct Dataset {
  GridSpec grid;
  std::uint64_t seed = 0;
  std::vector<PairSample> pairs;
};

/// Deterministic: pair i is the i-th draw of make_pair from a stream seeded with `seed`.
Dataset generate_dataset(std::uint64_t seed, std::int64_t n, const GridSpec& grid = {});
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset make_dataset(std::uint64_t seed, std::int64_t n, const std::filesystem::path& path,
                     const GridSpec& grid = {});
Dataset load_dataset(const std::filesystem::path& path, std::optional<std::uint64_t> expected_seed = std::nullopt);

}  // namespace syncdpo::toyworld
