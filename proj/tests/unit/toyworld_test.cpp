// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include "negatives.hpp"
#include "test_support.hpp"
#include "toyworld.hpp"

namespace syncdpo::toyworld {
namespace {

using syncdpo::testing::TempDir;
using syncdpo::testing::within_3sigma;

EventSchedule schedule_at(std::vector<double> times, int class_id = 0) {
  EventSchedule s;
  s.class_id = class_id;
  s.event_times = std::move(times);
  return s;
}

int argmax_channel0(const ModalityTrack& t) {
  int best = 0;
  for (int f = 1; f < t.frames; ++f)
    if (t.at(f, 0) > t.at(best, 0)) best = f;
  return best;
}

int first_nonzero_channel0(const ModalityTrack& t) {
  for (int f = 0; f < t.frames; ++f)
    if (t.at(f, 0) != 0.0f) return f;
  return -1;
}

TEST(GridSpec, DefaultShapes) {
  GridSpec g;
  EXPECT_EQ(g.video_frames(), 40);
  EXPECT_EQ(g.audio_frames(), 160);
  EXPECT_EQ(g.state_dim(), 480);
}

TEST(Schedule, ClassZeroHasOneEventInsideMargins) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto s = sample_schedule(rng, 0);
    ASSERT_EQ(s.event_times.size(), 1u);
    EXPECT_GE(s.event_times[0], 0.5);
    EXPECT_LE(s.event_times[0], 4.5);
  }
}

TEST(Schedule, ClassThreeHasFourSpacedEvents) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto s = sample_schedule(rng, 3);
    ASSERT_EQ(s.event_times.size(), 4u);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_GE(s.event_times[k] - s.event_times[k - 1], 0.6);
  }
}

TEST(Schedule, SameSeedSameSchedule) {
  Rng a(42), b(42);
  EXPECT_EQ(sample_schedule(a, 1), sample_schedule(b, 1));
}

TEST(Schedule, InvariantsHoldForEveryClass) {
  Rng rng(3);
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 500; ++i) {
      const auto s = sample_schedule(rng, c);
      ASSERT_EQ(static_cast<int>(s.event_times.size()), c + 1);
      for (std::size_t k = 0; k < s.event_times.size(); ++k) {
        const double t = s.event_times[k];
        EXPECT_EQ(t, static_cast<double>(static_cast<float>(t)));
        EXPECT_GE(t, 0.5);
        EXPECT_LE(t, 4.5);
        if (k > 0) EXPECT_GT(t, s.event_times[k - 1]);
      }
    }
  }
}

TEST(Schedule, RejectsClassOutOfRange) {
  Rng rng(4);
  EXPECT_THROW(sample_schedule(rng, -1), Error);
  EXPECT_THROW(sample_schedule(rng, 4), Error);
}

TEST(RenderVideo, SingleEventPeaksAtFrame20) {
  Rng rng(5);
  const auto v = render_video(schedule_at({2.5}), rng);
  EXPECT_EQ(v.frames, 40);
  EXPECT_EQ(v.channels, 4);
  EXPECT_EQ(argmax_channel0(v), 20);
  EXPECT_FLOAT_EQ(v.at(20, 0), 1.0f);
}

TEST(RenderVideo, EventsOneSecondApartGiveMaximaEightFramesApart) {
  Rng rng(6);
  const auto v = render_video(schedule_at({1.5, 2.5}), rng);
  std::vector<int> maxima;
  for (int f = 1; f + 1 < v.frames; ++f)
    if (v.at(f, 0) > v.at(f - 1, 0) && v.at(f, 0) > v.at(f + 1, 0)) maxima.push_back(f);
  ASSERT_EQ(maxima.size(), 2u);
  EXPECT_EQ(maxima[1] - maxima[0], 8);
}

TEST(RenderVideo, ChannelZeroEnergyGrowsWithEventCount) {
  Rng rng(7);
  double previous = 0.0;
  for (int c = 0; c < 4; ++c) {
    const auto s = sample_schedule(rng, c);
    const auto v = render_video(s, rng);
    double energy = 0.0;
    for (int f = 0; f < v.frames; ++f) energy += v.at(f, 0) * v.at(f, 0);
    EXPECT_GT(energy, previous) << "class " << c;
    previous = energy;
  }
}

TEST(RenderVideo, TextureChannelsAreNotSparse) {
  Rng rng(8);
  const auto v = render_video(schedule_at({2.0}), rng);
  int nonzero = 0;
  for (int f = 0; f < v.frames; ++f)
    for (int c = 1; c < v.channels; ++c) nonzero += v.at(f, c) != 0.0f;
  EXPECT_EQ(nonzero, v.frames * (v.channels - 1));
}

TEST(RenderAudio, OnsetAtSample80) {
  Rng rng(9);
  const auto a = render_audio(schedule_at({2.5}), rng);
  EXPECT_EQ(a.frames, 160);
  EXPECT_EQ(first_nonzero_channel0(a), 80);
  EXPECT_FLOAT_EQ(a.at(80, 0), 1.0f);
}

TEST(RenderAudio, ExtraOffsetDelaysOnset) {
  Rng rng(10);
  const auto a = render_audio(schedule_at({2.5}), rng, 0.5);
  EXPECT_EQ(first_nonzero_channel0(a), 96);
}

TEST(RenderAudio, DecaysToOneOverEAfterTau) {
  // 40 Hz puts tau = 0.2 s exactly on the grid (8 samples).
  GridSpec g;
  g.audio_rate = 40.0;
  Rng rng(11);
  const auto a = render_audio(schedule_at({2.5}), rng, 0.0, g);
  ASSERT_EQ(first_nonzero_channel0(a), 100);
  EXPECT_NEAR(a.at(108, 0), std::exp(-1.0) * a.at(100, 0), 1e-6);
}

TEST(RenderAudio, EnvelopesClipAtBoundaries) {
  Rng rng(12);
  const auto late = render_audio(schedule_at({4.5}), rng, 1.0);
  EXPECT_EQ(first_nonzero_channel0(late), -1);
  const auto early = render_audio(schedule_at({0.5}), rng, -1.0);
  EXPECT_NEAR(early.at(0, 0), std::exp(-0.5 / kDecayTau), 1e-6);
}

TEST(MakePair, SynchronizedPairsMeasureBelowOneAudioSample) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    const auto p = make_pair(rng);
    const auto m = measure_offset(p.video, p.audio);
    ASSERT_FALSE(m.degenerate);
    EXPECT_LT(std::abs(m.offset), 1.0 / 32.0) << "pair " << i;
  }
}

TEST(MakePair, Deterministic) {
  Rng a(14), b(14);
  EXPECT_EQ(make_pair(a), make_pair(b));
}

TEST(MakePair, OneHotConditionMatchesSchedule) {
  Rng rng(15);
  for (int i = 0; i < 100; ++i) {
    const auto p = make_pair(rng);
    ASSERT_EQ(p.condition.size(), 4u);
    for (int c = 0; c < 4; ++c) EXPECT_EQ(p.condition[c], c == p.schedule.class_id ? 1.0f : 0.0f);
  }
}

TEST(MakePair, ClassHistogramIsUniform) {
  Rng rng(16);
  std::array<std::int64_t, 4> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[make_pair(rng).schedule.class_id];
  for (int c = 0; c < 4; ++c) EXPECT_TRUE(within_3sigma(counts[c], n, 0.25)) << "class " << c << " " << counts[c];
}

TEST(MeasureOffset, RecoversInjectedOffsets) {
  Rng rng(17);
  for (double delta : {-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0}) {
    for (int i = 0; i < 20; ++i) {
      const int c = i % 4;
      // Keep every shifted onset inside the clip so the injected offset is observable.
      EventSchedule s;
      do s = sample_schedule(rng, c);
      while (s.event_times.front() + delta < 0.0 || s.event_times.back() + delta > 4.75);
      const auto v = render_video(s, rng);
      const auto a = render_audio(s, rng, delta);
      const auto m = measure_offset(v, a);
      ASSERT_FALSE(m.degenerate);
      EXPECT_NEAR(m.offset, delta, 1.0 / 16.0) << "delta " << delta;
    }
  }
}

TEST(MeasureOffset, PositiveOffsetMeansAudioLags) {
  Rng rng(18);
  const auto s = schedule_at({1.5});
  const auto m = measure_offset(render_video(s, rng), render_audio(s, rng, 1.0));
  EXPECT_DOUBLE_EQ(m.offset, 1.0);
}

TEST(MeasureOffset, IndependentSchedulesScoreBelowMatched) {
  Rng rng(19);
  double matched = 0.0, shuffled = 0.0;
  const int n = 500;
  for (int i = 0; i < n; ++i) {
    const auto p = make_pair(rng);
    const auto q = make_pair(rng);
    matched += measure_offset(p.video, p.audio).score;
    shuffled += measure_offset(p.video, q.audio).score;
  }
  EXPECT_LT(shuffled / n, matched / n);
}

TEST(MeasureOffset, ZeroEnvelopeIsDegenerate) {
  Rng rng(20);
  const auto s = schedule_at({2.0});
  auto v = render_video(s, rng);
  const auto a = render_audio(s, rng, 3.0);  // every onset evicted
  const auto m = measure_offset(v, a);
  EXPECT_TRUE(m.degenerate);
  EXPECT_EQ(m.offset, 0.0);
  EXPECT_EQ(m.score, 0.0);
}

TEST(MeasureOffset, OffsetBoundedByHalfDurationAndScoreByOne) {
  Rng rng(21);
  for (int i = 0; i < 300; ++i) {
    const auto p = make_pair(rng);
    const auto q = make_pair(rng);
    const auto m = measure_offset(p.video, q.audio);
    EXPECT_LE(std::abs(m.offset), 2.5);
    EXPECT_LE(std::abs(m.score), 1.0 + 1e-12);
  }
}

TEST(MeasureOffset, SymmetricUnderShiftingEitherModality) {
  Rng rng(22);
  for (double delta : {-0.75, -0.25, 0.5, 1.0}) {
    for (int i = 0; i < 20; ++i) {
      EventSchedule s;
      do s = sample_schedule(rng, i % 2);
      while (s.event_times.front() - std::abs(delta) < 0.5 || s.event_times.back() + std::abs(delta) > 4.5);
      const auto v = render_video(s, rng);
      const auto a = render_audio(s, rng);
      const double audio_shifted = measure_offset(v, negatives::time_shift(a, delta)).offset;
      const double video_shifted = measure_offset(negatives::time_shift(v, delta), a).offset;
      EXPECT_NEAR(audio_shifted, -video_shifted, 1.0 / 32.0 + 1e-12) << "delta " << delta;
    }
  }
}

TEST(MeasureOffset, RejectsMismatchedDurations) {
  ModalityTrack v(Modality::Video, 8.0, 40, 4);
  ModalityTrack a(Modality::Audio, 32.0, 80, 2);
  EXPECT_THROW(measure_offset(v, a), Error);
}

TEST(Dataset, RoundTripEqualsRegeneration) {
  TempDir dir;
  const auto path = dir / "d.sdpo";
  make_dataset(77, 100, path);
  const auto loaded = load_dataset(path);
  const auto regenerated = generate_dataset(77, 100);
  EXPECT_EQ(loaded.seed, 77u);
  EXPECT_EQ(loaded.grid, GridSpec{});
  ASSERT_EQ(loaded.pairs.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(loaded.pairs[i], regenerated.pairs[i]) << "pair " << i;
}

TEST(Dataset, SeedMismatchIsExplicit) {
  TempDir dir;
  const auto path = dir / "d.sdpo";
  make_dataset(5, 3, path);
  EXPECT_NO_THROW(load_dataset(path, 5));
  try {
    load_dataset(path, 6);
    FAIL() << "expected a seed mismatch error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Format);
    EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
  }
}

TEST(Dataset, DifferentSeedsGiveDisjointSchedules) {
  const auto a = generate_dataset(100, 50);
  const auto b = generate_dataset(101, 50);
  int identical = 0;
  for (std::size_t i = 0; i < 50; ++i) identical += a.pairs[i].schedule == b.pairs[i].schedule;
  EXPECT_LE(identical, 1);
}

TEST(Dataset, RejectsNonPositiveSize) {
  TempDir dir;
  EXPECT_THROW(make_dataset(1, 0, dir / "x.sdpo"), Error);
  EXPECT_THROW(make_dataset(1, -3, dir / "x.sdpo"), Error);
}

TEST(Dataset, UnwritablePathNamesThePath) {
  try {
    make_dataset(1, 2, "/nonexistent-dir/sub/d.sdpo");
    FAIL() << "expected an I/O error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
    EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/sub/d.sdpo"), std::string::npos);
  }
}

TEST(Dataset, RejectsUnknownFormatVersionAndMagic) {
  TempDir dir;
  const auto path = dir / "d.sdpo";
  make_dataset(1, 2, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  std::string bumped = bytes;
  bumped[8] = 2;  // format_version, little-endian
  write(bumped);
  EXPECT_THROW(load_dataset(path), Error);
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  write(wrong_magic);
  EXPECT_THROW(load_dataset(path), Error);
  write(bytes.substr(0, 30));
  EXPECT_THROW(load_dataset(path), Error);
}

TEST(Dataset, GeneratedPairsAreFinite) {
  const auto ds = generate_dataset(9, 64);
  for (const auto& p : ds.pairs) {
    for (float x : p.video.samples) ASSERT_TRUE(std::isfinite(x));
    for (float x : p.audio.samples) ASSERT_TRUE(std::isfinite(x));
  }
}

}  // namespace
}  // namespace syncdpo::toyworld
