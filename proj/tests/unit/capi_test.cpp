// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>

#include "syncdpo/syncdpo.h"

namespace {

namespace fs = std::filesystem;

class CApi : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("syncdpo_capi_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  std::string path(const std::string& leaf) const { return (dir_ / leaf).string(); }

  /// Trains a tiny SFT run and returns its final checkpoint.
  std::string tiny_run(const std::string& name, uint64_t seed = 1) {
    const std::string data = path("data.sdpo");
    if (!fs::exists(data)) EXPECT_EQ(sdpo_generate_dataset(3, 32, data.c_str()), SDPO_OK);
    sdpo_config* cfg = nullptr;
    EXPECT_EQ(sdpo_config_create(&cfg), SDPO_OK);
    const std::string out = path(name), seed_text = std::to_string(seed);
    const std::vector<std::pair<const char*, const char*>> kv = {
        {"steps", "4"},  {"batch_size", "4"},  {"hidden", "8"},         {"val_n", "8"},
        {"eval_n", "4"}, {"eval_every", "2"},  {"dataset", data.c_str()}, {"output_dir", out.c_str()},
        {"seed", seed_text.c_str()}, {"label", "tiny"}};
    for (const auto& [k, v] : kv) EXPECT_EQ(sdpo_config_set(cfg, k, v), SDPO_OK) << k;
    sdpo_train_summary s{};
    EXPECT_EQ(sdpo_train(cfg, &s), SDPO_OK) << sdpo_last_error();
    EXPECT_EQ(s.steps, 4);
    EXPECT_TRUE(std::isfinite(s.final_val_fm_loss));
    sdpo_config_destroy(cfg);
    return out + "/checkpoints/step_000004.ckpt";
  }

  fs::path dir_;
};

TEST_F(CApi, VersionAndStatusStrings) {
  EXPECT_STRNE(sdpo_version(), "");
  EXPECT_STREQ(sdpo_status_string(SDPO_OK), "ok");
  for (int s = 1; s <= 5; ++s) EXPECT_STRNE(sdpo_status_string(static_cast<sdpo_status>(s)), "ok");
  sdpo_free_string(nullptr);
}

TEST_F(CApi, DefaultGrid) {
  sdpo_grid g{};
  ASSERT_EQ(sdpo_default_grid(&g), SDPO_OK);
  EXPECT_EQ(g.video_frames, 40);
  EXPECT_EQ(g.audio_frames, 160);
  EXPECT_EQ(g.state_dim, 40 * 4 + 160 * 2);
  EXPECT_EQ(g.num_classes, 4);
  EXPECT_EQ(sdpo_default_grid(nullptr), SDPO_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(sdpo_last_error()).find("NULL"), std::string::npos);
}

TEST_F(CApi, DatasetRoundTrip) {
  const std::string p = path("d.sdpo");
  ASSERT_EQ(sdpo_generate_dataset(42, 10, p.c_str()), SDPO_OK);
  uint64_t seed = 0;
  int64_t n = 0;
  ASSERT_EQ(sdpo_dataset_info(p.c_str(), &seed, &n), SDPO_OK);
  EXPECT_EQ(seed, 42u);
  EXPECT_EQ(n, 10);
  EXPECT_EQ(sdpo_generate_dataset(1, 0, p.c_str()), SDPO_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(sdpo_dataset_info(path("none.sdpo").c_str(), &seed, &n), SDPO_ERR_IO);
  EXPECT_NE(std::string(sdpo_last_error()).find("none.sdpo"), std::string::npos);
  std::ofstream(path("junk.sdpo")) << "not a dataset";
  EXPECT_EQ(sdpo_dataset_info(path("junk.sdpo").c_str(), &seed, &n), SDPO_ERR_FORMAT);
}

TEST_F(CApi, MeasureOffset) {
  std::vector<float> video(40 * 4, 0.0f), audio(160 * 2, 0.0f);
  // One event at 2 s: a video bump in channel 0 and an audio onset in channel 0.
  for (int f = 0; f < 40; ++f) video[f * 4] = static_cast<float>(std::exp(-0.5 * std::pow((f / 8.0 - 2.0) / 0.1, 2)));
  for (int k = 64; k < 160; ++k) audio[k * 2] = static_cast<float>(std::exp(-(k - 64) / 6.4));
  sdpo_sync s{};
  ASSERT_EQ(sdpo_measure_offset(video.data(), video.size(), audio.data(), audio.size(), &s), SDPO_OK);
  EXPECT_EQ(s.degenerate, 0);
  EXPECT_LE(std::abs(s.offset), 1.0 / 32.0);
  EXPECT_GT(s.score, 0.5);
  EXPECT_EQ(sdpo_measure_offset(video.data(), 10, audio.data(), audio.size(), &s), SDPO_ERR_INVALID_ARGUMENT);
  std::vector<float> silent(160 * 2, 0.0f);
  ASSERT_EQ(sdpo_measure_offset(video.data(), video.size(), silent.data(), silent.size(), &s), SDPO_OK);
  EXPECT_EQ(s.degenerate, 1);
}

TEST_F(CApi, ConfigLifecycle) {
  sdpo_config* cfg = nullptr;
  ASSERT_EQ(sdpo_config_create(&cfg), SDPO_OK);
  EXPECT_EQ(sdpo_config_set(cfg, "steps", "12"), SDPO_OK);
  EXPECT_EQ(sdpo_config_set(cfg, "bogus", "1"), SDPO_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(sdpo_last_error()).find("bogus"), std::string::npos);
  EXPECT_EQ(sdpo_config_set(cfg, nullptr, "1"), SDPO_ERR_INVALID_ARGUMENT);
  char* json = nullptr;
  ASSERT_EQ(sdpo_config_to_json(cfg, &json), SDPO_OK);
  EXPECT_NE(std::string(json).find("\"steps\": 12"), std::string::npos);
  sdpo_free_string(json);
  {
    std::ofstream(path("c.cfg")) << "batch_size=3\n";
  }
  EXPECT_EQ(sdpo_config_load(cfg, path("c.cfg").c_str()), SDPO_OK);
  ASSERT_EQ(sdpo_config_to_json(cfg, &json), SDPO_OK);
  EXPECT_NE(std::string(json).find("\"batch_size\": 3"), std::string::npos);
  EXPECT_NE(std::string(json).find("\"steps\": 12"), std::string::npos);
  sdpo_free_string(json);
  EXPECT_EQ(sdpo_config_load(cfg, path("missing.cfg").c_str()), SDPO_ERR_IO);
  sdpo_config_destroy(cfg);
  sdpo_config_destroy(nullptr);
}

TEST_F(CApi, TrainRejectsIncompleteConfig) {
  sdpo_config* cfg = nullptr;
  ASSERT_EQ(sdpo_config_create(&cfg), SDPO_OK);
  sdpo_train_summary s{};
  EXPECT_EQ(sdpo_train(cfg, &s), SDPO_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(sdpo_last_error()).find("dataset"), std::string::npos);
  sdpo_config_destroy(cfg);
}

TEST_F(CApi, TrainEvaluateSampleAndReport) {
  const std::string ck = tiny_run("a", 1);
  const std::string ck2 = tiny_run("b", 2);

  sdpo_model* model = nullptr;
  ASSERT_EQ(sdpo_model_load(ck.c_str(), 1, &model), SDPO_OK);
  size_t n_params = 0;
  ASSERT_EQ(sdpo_model_num_params(model, &n_params), SDPO_OK);
  EXPECT_GT(n_params, 0u);
  sdpo_grid g{};
  sdpo_default_grid(&g);
  std::vector<float> a(static_cast<size_t>(g.state_dim)), b(a.size());
  ASSERT_EQ(sdpo_model_sample(model, 1, 7, 10, a.data(), a.size()), SDPO_OK);
  ASSERT_EQ(sdpo_model_sample(model, 1, 7, 10, b.data(), b.size()), SDPO_OK);
  EXPECT_EQ(a, b);
  for (float x : a) ASSERT_TRUE(std::isfinite(x));
  EXPECT_EQ(sdpo_model_sample(model, 9, 7, 10, a.data(), a.size()), SDPO_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(sdpo_model_sample(model, 1, 7, 10, a.data(), a.size() - 1), SDPO_ERR_INVALID_ARGUMENT);
  sdpo_model_destroy(model);
  EXPECT_EQ(sdpo_model_load(path("none.ckpt").c_str(), 1, &model), SDPO_ERR_IO);

  sdpo_eval_summary e{};
  ASSERT_EQ(sdpo_evaluate(ck.c_str(), 4, 3, 1, path("e.csv").c_str(), &e), SDPO_OK);
  EXPECT_EQ(e.n, 4);
  EXPECT_TRUE(fs::exists(path("e.csv")));
  EXPECT_EQ(sdpo_evaluate(ck.c_str(), 0, 3, 1, nullptr, &e), SDPO_ERR_INVALID_ARGUMENT);

  sdpo_gradnorm_summary gn{};
  ASSERT_EQ(sdpo_diag_gradnorm(ck2.c_str(), 5, 1, path("g.csv").c_str(), ck.c_str(), &gn), SDPO_OK);
  EXPECT_EQ(gn.n, 5);
  EXPECT_EQ(gn.valid + gn.degenerate, 5);
  EXPECT_TRUE(fs::exists(path("g.summary.json")));

  const std::string ra = path("a"), rb = path("b");
  const char* dirs[] = {ra.c_str(), rb.c_str()};
  char* table = nullptr;
  ASSERT_EQ(sdpo_compare(dirs, 2, path("cmp.csv").c_str(), &table), SDPO_OK);
  EXPECT_NE(std::string(table).find("tiny"), std::string::npos);
  sdpo_free_string(table);
  EXPECT_TRUE(fs::exists(path("cmp.csv")));
  EXPECT_EQ(sdpo_compare(dirs, 1, nullptr, &table), SDPO_ERR_INVALID_ARGUMENT);

  char* svg = nullptr;
  ASSERT_EQ(sdpo_plot(ra.c_str(), &svg), SDPO_OK);
  EXPECT_TRUE(fs::exists(svg));
  sdpo_free_string(svg);
}

}  // namespace
