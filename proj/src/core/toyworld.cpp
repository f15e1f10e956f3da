// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "container.hpp"

namespace syncdpo::toyworld {

int GridSpec::video_frames() const { return static_cast<int>(std::lround(video_rate * duration)); }
int GridSpec::audio_frames() const { return static_cast<int>(std::lround(audio_rate * duration)); }

const char* to_string(Modality m) { return m == Modality::Video ? "video" : "audio"; }

EventSchedule sample_schedule(Rng& rng, int class_id, const GridSpec& grid) {
  require(class_id >= 0 && class_id < grid.num_classes, "class_id out of range");
  const int count = class_id + 1;
  require(count <= 4, "classes above 3 would exceed the 4-event limit");
  // Event times sit on the audio sample grid so the audio onset is not delayed
  // by a fractional sample relative to the video bump center.
  const auto first = static_cast<std::int64_t>(std::ceil(kEdgeMargin * grid.audio_rate - 1e-9));
  const auto last = static_cast<std::int64_t>(std::floor((grid.duration - kEdgeMargin) * grid.audio_rate + 1e-9));
  std::uniform_int_distribution<std::int64_t> when(first, last);

  EventSchedule s;
  s.class_id = class_id;
  s.duration = grid.duration;
  for (int attempt = 0; attempt < kScheduleRetryCap; ++attempt) {
    s.event_times.clear();
    for (int i = 0; i < count; ++i)
      s.event_times.push_back(static_cast<float>(static_cast<double>(when(rng)) / grid.audio_rate));
    std::sort(s.event_times.begin(), s.event_times.end());
    bool ok = true;
    for (int i = 1; i < count; ++i) ok = ok && (s.event_times[i] - s.event_times[i - 1] >= kMinSpacing);
    if (ok) return s;
  }
  fail(ErrorCode::Internal, "schedule rejection sampling exceeded retry cap");
}

namespace {

double texture(int class_id, int channel, double t, bool audio) {
  const double f = audio ? 0.2 * (class_id + 1) : 0.15 * (class_id + 1) + 0.05 * channel;
  const double phase = audio ? 0.5 + 0.7 * class_id : 0.9 * class_id + 1.3 * channel;
  return 0.5 * std::sin(2.0 * std::numbers::pi * f * t + phase);
}

}  // namespace

ModalityTrack render_video(const EventSchedule& schedule, Rng& rng, const GridSpec& grid) {
  ModalityTrack v(Modality::Video, grid.video_rate, grid.video_frames(), grid.video_channels);
  std::normal_distribution<double> noise(0.0, kTextureNoiseStd);
  for (int f = 0; f < v.frames; ++f) {
    const double t = f / v.rate;
    double bump = 0.0;
    for (double e : schedule.event_times) {
      const double u = (t - e) / kBumpStd;
      bump += std::exp(-0.5 * u * u);
    }
    v.at(f, 0) = static_cast<float>(bump);
    for (int c = 1; c < v.channels; ++c)
      v.at(f, c) = static_cast<float>(texture(schedule.class_id, c, t, false) + noise(rng));
  }
  return v;
}

ModalityTrack render_audio(const EventSchedule& schedule, Rng& rng, double extra_offset, const GridSpec& grid) {
  ModalityTrack a(Modality::Audio, grid.audio_rate, grid.audio_frames(), grid.audio_channels);
  std::normal_distribution<double> noise(0.0, kTextureNoiseStd);
  for (int f = 0; f < a.frames; ++f) {
    const double t = f / a.rate;
    double env = 0.0;
    for (double e : schedule.event_times) {
      const double onset = e + extra_offset;
      // Onsets that land exactly on a grid point must not be skipped by round-off.
      if (t >= onset - 1e-9) env += std::exp(-std::max(0.0, t - onset) / kDecayTau);
    }
    a.at(f, 0) = static_cast<float>(env);
    for (int c = 1; c < a.channels; ++c)
      a.at(f, c) = static_cast<float>(texture(schedule.class_id, c, t, true) + noise(rng));
  }
  return a;
}

std::vector<float> one_hot(int class_id, int num_classes) {
  require(class_id >= 0 && class_id < num_classes, "class_id out of range");
  std::vector<float> y(static_cast<std::size_t>(num_classes), 0.0f);
  y[static_cast<std::size_t>(class_id)] = 1.0f;
  return y;
}

PairSample make_pair_for_class(Rng& rng, int class_id, const GridSpec& grid) {
  PairSample p;
  p.schedule = sample_schedule(rng, class_id, grid);
  p.video = render_video(p.schedule, rng, grid);
  p.audio = render_audio(p.schedule, rng, 0.0, grid);
  p.condition = one_hot(class_id, grid.num_classes);
  return p;
}

PairSample make_pair(Rng& rng, const GridSpec& grid) {
  std::uniform_int_distribution<int> cls(0, grid.num_classes - 1);
  return make_pair_for_class(rng, cls(rng), grid);
}

std::vector<double> video_onset_envelope(const ModalityTrack& video, double audio_rate, int audio_frames) {
  std::vector<double> env(static_cast<std::size_t>(audio_frames), 0.0);
  const double ratio = video.rate / audio_rate;
  for (int k = 0; k < audio_frames; ++k) {
    const double pos = std::min(k * ratio, static_cast<double>(video.frames - 1));
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, video.frames - 1);
    const double w = pos - lo;
    env[k] = (1.0 - w) * video.at(lo, 0) + w * video.at(hi, 0);
  }
  const double decay = std::exp(-1.0 / (audio_rate * kDecayTau));
  for (int k = 1; k < audio_frames; ++k) env[k] += decay * env[k - 1];
  return env;
}

std::vector<double> audio_onset_envelope(const ModalityTrack& audio) {
  std::vector<double> env(static_cast<std::size_t>(audio.frames));
  for (int k = 0; k < audio.frames; ++k) env[k] = audio.at(k, 0);
  return env;
}

SyncMeasurement measure_offset(const ModalityTrack& video, const ModalityTrack& audio) {
  require(std::abs(video.duration() - audio.duration()) < 1e-9, "tracks must share duration");
  auto v = video_onset_envelope(video, audio.rate, audio.frames);
  auto a = audio_onset_envelope(audio);
  const int n = audio.frames;

  auto center = [](std::vector<double>& x) {
    double mean = 0.0;
    for (double s : x) mean += s;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double& s : x) {
      s -= mean;
      ss += s * s;
    }
    return std::sqrt(ss);
  };
  const double nv = center(v);
  const double na = center(a);
  SyncMeasurement m;
  if (!(nv > 1e-9) || !(na > 1e-9) || !std::isfinite(nv) || !std::isfinite(na)) {
    m.degenerate = true;
    return m;
  }

  const int max_lag = static_cast<int>(std::floor(0.5 * audio.duration() * audio.rate + 1e-9));
  auto corr = [&](int lag) {
    double s = 0.0;
    const int lo = std::max(0, -lag);
    const int hi = std::min(n, n - lag);
    for (int k = lo; k < hi; ++k) s += v[k] * a[k + lag];
    return s / (nv * na);
  };
  int best_lag = 0;
  double best = corr(0);
  for (int d = 1; d <= max_lag; ++d) {
    for (int lag : {d, -d}) {
      const double c = corr(lag);
      if (c > best + 1e-12) {
        best = c;
        best_lag = lag;
      }
    }
  }
  m.offset = best_lag / audio.rate;
  m.score = best;
  return m;
}

// ---- dataset container -------------------------------------------------------

Dataset generate_dataset(std::uint64_t seed, std::int64_t n, const GridSpec& grid) {
  require(n >= 1, "dataset size must be >= 1");
  Dataset ds;
  ds.grid = grid;
  ds.seed = seed;
  ds.pairs.reserve(static_cast<std::size_t>(n));
  Rng rng(seed);
  for (std::int64_t i = 0; i < n; ++i) ds.pairs.push_back(make_pair(rng, grid));
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto& g = ds.grid;
  const auto n = static_cast<std::int64_t>(ds.pairs.size());
  require(n >= 1, "dataset is empty");
  std::vector<float> video, audio, cond, times;
  std::vector<std::int64_t> offsets{0}, classes;
  for (const auto& p : ds.pairs) {
    video.insert(video.end(), p.video.samples.begin(), p.video.samples.end());
    audio.insert(audio.end(), p.audio.samples.begin(), p.audio.samples.end());
    cond.insert(cond.end(), p.condition.begin(), p.condition.end());
    for (double t : p.schedule.event_times) times.push_back(static_cast<float>(t));
    offsets.push_back(static_cast<std::int64_t>(times.size()));
    classes.push_back(p.schedule.class_id);
  }
  Container c;
  c.manifest = {{"seed", ds.seed},
                {"n", n},
                {"rates", {{"video", g.video_rate}, {"audio", g.audio_rate}}},
                {"channels", {{"video", g.video_channels}, {"audio", g.audio_channels}}},
                {"D", g.duration},
                {"C", g.num_classes},
                {"format_version", kDatasetFormatVersion}};
  c.put_f32("video", {n, g.video_frames(), g.video_channels}, std::move(video));
  c.put_f32("audio", {n, g.audio_frames(), g.audio_channels}, std::move(audio));
  c.put_f32("cond", {n, g.num_classes}, std::move(cond));
  c.put_i64("event_offsets", {n + 1}, std::move(offsets));
  const auto n_times = static_cast<std::int64_t>(times.size());
  c.put_f32("event_times", {n_times}, std::move(times));
  c.put_i64("class_id", {n}, std::move(classes));
  write_container(path, kDatasetMagic, kDatasetFormatVersion, c);
}

Dataset make_dataset(std::uint64_t seed, std::int64_t n, const std::filesystem::path& path, const GridSpec& grid) {
  require(n >= 1, "dataset size must be >= 1, got " + std::to_string(n));
  Dataset ds = generate_dataset(seed, n, grid);
  save_dataset(ds, path);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<std::uint64_t> expected_seed) {
  const Container c = read_container(path, kDatasetMagic, kDatasetFormatVersion);
  const auto& m = c.manifest;
  Dataset ds;
  std::int64_t n = 0;
  try {
    if (m.at("format_version").get<std::uint32_t>() != kDatasetFormatVersion)
      fail(ErrorCode::Format, "unsupported dataset format_version in manifest of '" + path.string() + "'");
    ds.seed = m.at("seed").get<std::uint64_t>();
    n = m.at("n").get<std::int64_t>();
    ds.grid.duration = m.at("D").get<double>();
    ds.grid.num_classes = m.at("C").get<int>();
    ds.grid.video_rate = m.at("rates").at("video").get<double>();
    ds.grid.audio_rate = m.at("rates").at("audio").get<double>();
    ds.grid.video_channels = m.at("channels").at("video").get<int>();
    ds.grid.audio_channels = m.at("channels").at("audio").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, "malformed dataset manifest in '" + path.string() + "': " + e.what());
  }
  if (expected_seed && *expected_seed != ds.seed)
    fail(ErrorCode::Format, "dataset '" + path.string() + "' was generated with seed " + std::to_string(ds.seed) +
                                ", expected " + std::to_string(*expected_seed));

  const auto& g = ds.grid;
  const auto& video = c.get("video", "f32");
  const auto& audio = c.get("audio", "f32");
  const auto& cond = c.get("cond", "f32");
  const auto& offsets = c.get("event_offsets", "i64");
  const auto& times = c.get("event_times", "f32");
  const auto& classes = c.get("class_id", "i64");
  const std::size_t vsz = static_cast<std::size_t>(g.video_frames()) * g.video_channels;
  const std::size_t asz = static_cast<std::size_t>(g.audio_frames()) * g.audio_channels;
  const auto un = static_cast<std::size_t>(n);
  if (video.f32.size() != un * vsz || audio.f32.size() != un * asz ||
      cond.f32.size() != un * static_cast<std::size_t>(g.num_classes) || offsets.i64.size() != un + 1 ||
      classes.i64.size() != un)
    fail(ErrorCode::Format, "dataset arrays inconsistent with manifest in '" + path.string() + "'");

  ds.pairs.resize(un);
  for (std::size_t i = 0; i < un; ++i) {
    auto& p = ds.pairs[i];
    p.video = ModalityTrack(Modality::Video, g.video_rate, g.video_frames(), g.video_channels);
    p.audio = ModalityTrack(Modality::Audio, g.audio_rate, g.audio_frames(), g.audio_channels);
    std::copy_n(video.f32.begin() + static_cast<std::ptrdiff_t>(i * vsz), vsz, p.video.samples.begin());
    std::copy_n(audio.f32.begin() + static_cast<std::ptrdiff_t>(i * asz), asz, p.audio.samples.begin());
    p.condition.assign(cond.f32.begin() + static_cast<std::ptrdiff_t>(i * g.num_classes),
                       cond.f32.begin() + static_cast<std::ptrdiff_t>((i + 1) * g.num_classes));
    p.schedule.class_id = static_cast<int>(classes.i64[i]);
    p.schedule.duration = g.duration;
    const auto b = offsets.i64[i], e = offsets.i64[i + 1];
    if (b < 0 || e < b || static_cast<std::size_t>(e) > times.f32.size())
      fail(ErrorCode::Format, "bad event offsets in '" + path.string() + "'");
    for (auto k = b; k < e; ++k) p.schedule.event_times.push_back(times.f32[static_cast<std::size_t>(k)]);
  }
  return ds;
}

}  // namespace syncdpo::toyworld
