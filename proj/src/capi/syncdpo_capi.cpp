// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "syncdpo/syncdpo.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "evaluate.hpp"
#include "flow.hpp"
#include "report.hpp"
#include "toyworld.hpp"
#include "trainer.hpp"

struct sdpo_config {
  syncdpo::harness::TrainConfig cfg;
};

struct sdpo_model {
  syncdpo::flow::VelocityNet<float> net;
  syncdpo::toyworld::GridSpec grid;
};

namespace {

thread_local std::string g_last_error;

template <class Fn>
sdpo_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return SDPO_OK;
  } catch (const syncdpo::Error& e) {
    g_last_error = e.what();
    return static_cast<sdpo_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown exception";
  }
  return SDPO_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  if (p == nullptr) syncdpo::fail(syncdpo::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* sdpo_version(void) { return syncdpo::harness::kCodeVersion; }

const char* sdpo_status_string(sdpo_status status) {
  switch (status) {
    case SDPO_OK: return "ok";
    case SDPO_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SDPO_ERR_IO: return "i/o error";
    case SDPO_ERR_FORMAT: return "format error";
    case SDPO_ERR_NUMERIC: return "numerical fault";
    case SDPO_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* sdpo_last_error(void) { return g_last_error.c_str(); }

void sdpo_free_string(char* s) { std::free(s); }

sdpo_status sdpo_default_grid(sdpo_grid* out) {
  return guarded([&] {
    need(out, "out");
    const syncdpo::toyworld::GridSpec g;
    *out = {g.duration, g.video_rate, g.video_frames(), g.video_channels, g.audio_rate,
            g.audio_frames(), g.audio_channels, g.num_classes, g.state_dim()};
  });
}

sdpo_status sdpo_generate_dataset(uint64_t seed, int64_t n, const char* path) {
  return guarded([&] {
    need(path, "path");
    syncdpo::toyworld::make_dataset(seed, n, path);
  });
}

sdpo_status sdpo_dataset_info(const char* path, uint64_t* seed, int64_t* n) {
  return guarded([&] {
    need(path, "path");
    const auto ds = syncdpo::toyworld::load_dataset(path);
    if (seed) *seed = ds.seed;
    if (n) *n = static_cast<int64_t>(ds.pairs.size());
  });
}

sdpo_status sdpo_measure_offset(const float* video, size_t video_len, const float* audio, size_t audio_len,
                                sdpo_sync* out) {
  return guarded([&] {
    need(video, "video");
    need(audio, "audio");
    need(out, "out");
    const syncdpo::toyworld::GridSpec g;
    using syncdpo::toyworld::Modality;
    using syncdpo::toyworld::ModalityTrack;
    ModalityTrack v(Modality::Video, g.video_rate, g.video_frames(), g.video_channels);
    ModalityTrack a(Modality::Audio, g.audio_rate, g.audio_frames(), g.audio_channels);
    syncdpo::require(video_len == v.samples.size() && audio_len == a.samples.size(),
                     "track lengths do not match the default grid");
    std::memcpy(v.samples.data(), video, video_len * sizeof(float));
    std::memcpy(a.samples.data(), audio, audio_len * sizeof(float));
    const auto m = syncdpo::toyworld::measure_offset(v, a);
    *out = {m.offset, m.score, m.degenerate ? 1 : 0};
  });
}

sdpo_status sdpo_config_create(sdpo_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new sdpo_config();
  });
}

void sdpo_config_destroy(sdpo_config* cfg) { delete cfg; }

sdpo_status sdpo_config_load(sdpo_config* cfg, const char* path) {
  return guarded([&] {
    need(cfg, "cfg");
    need(path, "path");
    cfg->cfg = syncdpo::harness::load_config(path, cfg->cfg);
  });
}

sdpo_status sdpo_config_set(sdpo_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

sdpo_status sdpo_config_to_json(const sdpo_config* cfg, char** json_out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(json_out, "json_out");
    *json_out = dup_string(cfg->cfg.to_json().dump(2));
  });
}

sdpo_status sdpo_train(const sdpo_config* cfg, sdpo_train_summary* out) {
  return guarded([&] {
    need(cfg, "cfg");
    const auto r = syncdpo::harness::train(cfg->cfg);
    if (out) {
      const auto& last = r.metrics.back();
      *out = {cfg->cfg.steps,      r.first_loss,    last.val_fm_loss, last.mean_abs_offset, last.mean_score,
              r.sampler_calls,     r.skipped_pairs, r.wall_time_per_step};
    }
  });
}

sdpo_status sdpo_model_load(const char* ckpt_path, int use_ema, sdpo_model** out) {
  return guarded([&] {
    need(ckpt_path, "ckpt_path");
    need(out, "out");
    const auto ckpt = syncdpo::flow::load_checkpoint(ckpt_path);
    auto* m = new sdpo_model{syncdpo::flow::model_from_checkpoint(ckpt, use_ema != 0),
                             syncdpo::harness::grid_from_checkpoint(ckpt)};
    *out = m;
  });
}

void sdpo_model_destroy(sdpo_model* model) { delete model; }

sdpo_status sdpo_model_num_params(const sdpo_model* model, size_t* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = model->net.num_params();
  });
}

sdpo_status sdpo_model_sample(const sdpo_model* model, int32_t class_id, uint64_t seed, int32_t steps,
                              float* state_out, size_t state_len) {
  return guarded([&] {
    need(model, "model");
    need(state_out, "state_out");
    syncdpo::require(state_len == static_cast<size_t>(model->grid.state_dim()), "state buffer has the wrong length");
    const auto y = syncdpo::toyworld::one_hot(class_id, model->grid.num_classes);
    syncdpo::Rng rng(seed);
    syncdpo::flow::Mat<float> cond = Eigen::Map<const syncdpo::flow::Vec<float>>(y.data(), static_cast<Eigen::Index>(y.size()));
    const auto x = syncdpo::flow::sample_ode(model->net, cond, rng, steps);
    std::memcpy(state_out, x.data(), state_len * sizeof(float));
  });
}

sdpo_status sdpo_evaluate(const char* ckpt_path, int64_t n, uint64_t seed, int use_ema, const char* csv_out,
                          sdpo_eval_summary* out) {
  return guarded([&] {
    need(ckpt_path, "ckpt_path");
    const auto s = syncdpo::harness::evaluate_checkpoint(ckpt_path, n, seed, use_ema != 0,
                                                         csv_out ? std::filesystem::path(csv_out) : std::filesystem::path());
    if (out) *out = {s.n, s.degenerate, s.mean_abs_offset, s.mean_score};
  });
}

sdpo_status sdpo_diag_gradnorm(const char* ckpt_path, int64_t n, uint64_t seed, const char* csv_out,
                               const char* ref_ckpt, sdpo_gradnorm_summary* out) {
  return guarded([&] {
    need(ckpt_path, "ckpt_path");
    need(csv_out, "csv_out");
    const auto s = syncdpo::harness::diag_gradnorm(ckpt_path, n, seed, csv_out,
                                                   ref_ckpt ? std::filesystem::path(ref_ckpt) : std::filesystem::path());
    if (out) *out = {s.n, s.valid, s.degenerate, s.median, s.mean, s.fraction_above_one};
  });
}

sdpo_status sdpo_compare(const char* const* run_dirs, size_t count, const char* csv_out, char** table_out) {
  return guarded([&] {
    need(run_dirs, "run_dirs");
    std::vector<std::filesystem::path> dirs;
    for (size_t i = 0; i < count; ++i) {
      need(run_dirs[i], "run_dirs[i]");
      dirs.emplace_back(run_dirs[i]);
    }
    const auto rep = syncdpo::harness::compare_runs(dirs);
    if (csv_out) {
      std::ofstream f(csv_out);
      if (!f) syncdpo::fail(syncdpo::ErrorCode::Io, std::string("cannot write '") + csv_out + "'");
      f << rep.csv;
    }
    if (table_out) *table_out = dup_string(rep.text);
  });
}

sdpo_status sdpo_plot(const char* run_dir, char** svg_path_out) {
  return guarded([&] {
    need(run_dir, "run_dir");
    const auto p = syncdpo::harness::plot_run(run_dir);
    if (svg_path_out) *svg_path_out = dup_string(p.string());
  });
}

}  // extern "C"
