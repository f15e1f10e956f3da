// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "container.hpp"
#include "negatives.hpp"
#include "prefloss.hpp"

namespace syncdpo::harness {

namespace fs = std::filesystem;
using flow::Mat;
using flow::VelocityNet;
using toyworld::PairSample;

AdamW::AdamW(std::size_t n, double beta1, double beta2, double eps, double weight_decay)
    : m(n, 0.0f), v(n, 0.0f), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::step(std::span<float> params, std::span<const float> grad, double lr) {
  require(params.size() == m.size() && grad.size() == m.size(), "optimizer size mismatch");
  ++t;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grad[i];
    m[i] = b1 * m[i] + (1.0f - b1) * g;
    v[i] = b2 * v[i] + (1.0f - b2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    const double update = mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * params[i];
    params[i] = static_cast<float>(params[i] - lr * update);
  }
}

double lr_at(std::int64_t step, const TrainConfig& cfg) {
  if (step < cfg.warmup_steps)
    return cfg.learning_rate * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  const double span = static_cast<double>(std::max<std::int64_t>(1, cfg.steps - cfg.warmup_steps));
  const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / span);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void ema_update(std::span<float> shadow, std::span<const float> params, double decay) {
  require(shadow.size() == params.size(), "EMA size mismatch");
  const auto d = static_cast<float>(decay);
  for (std::size_t i = 0; i < shadow.size(); ++i) shadow[i] = d * shadow[i] + (1.0f - d) * params[i];
}

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double parse_double_field(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

template <class T>
Mat<float> stack_columns(const std::vector<T>& pairs) {
  std::vector<const PairSample*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(&p);
  return flow::pack_states(ptrs);
}

struct RunState {
  VelocityNet<float> model;
  VelocityNet<float> ref;
  std::vector<float> ema;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
}

}  // namespace

void write_metrics_csv(const fs::path& path, std::span<const MetricsRow> rows) {
  std::ofstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  f << "step,train_loss,val_fm_loss,mean_abs_offset,mean_score,degenerate,p_replace\n";
  for (const auto& r : rows)
    f << r.step << ',' << fmt_double(r.train_loss) << ',' << fmt_double(r.val_fm_loss) << ','
      << fmt_double(r.mean_abs_offset) << ',' << fmt_double(r.mean_score) << ',' << r.degenerate << ','
      << fmt_double(r.p_replace) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::Io, "missing metrics file '" + path.string() + "'");
  std::string line;
  std::getline(f, line);
  if (line.rfind("step,train_loss,val_fm_loss", 0) != 0)
    fail(ErrorCode::Format, "unexpected metrics header in '" + path.string() + "'");
  std::vector<MetricsRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) fail(ErrorCode::Format, "malformed metrics row in '" + path.string() + "'");
    try {
      MetricsRow r;
      r.step = std::stoll(cells[0]);
      r.train_loss = parse_double_field(cells[1]);
      r.val_fm_loss = parse_double_field(cells[2]);
      r.mean_abs_offset = parse_double_field(cells[3]);
      r.mean_score = parse_double_field(cells[4]);
      r.degenerate = std::stoll(cells[5]);
      r.p_replace = parse_double_field(cells[6]);
      rows.push_back(r);
    } catch (const std::exception&) {
      fail(ErrorCode::Format, "malformed metrics row in '" + path.string() + "'");
    }
  }
  return rows;
}

TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir / "checkpoints");
  fs::create_directories(out_dir / "eval");

  const toyworld::Dataset ds = toyworld::load_dataset(cfg.dataset);
  const toyworld::GridSpec& grid = ds.grid;
  const auto n_data = static_cast<std::int64_t>(ds.pairs.size());
  if (cfg.method == Method::SyncDpo) {
    const auto mode = cfg.curriculum_mode;
    const bool uses_replace = mode != curriculum::Mode::ScaleOnly && mode != curriculum::Mode::ShiftOnly &&
                              mode != curriculum::Mode::MaskOnly && mode != curriculum::Mode::SynthesizeOnly;
    if (uses_replace) require(n_data >= 2, "replace negatives need a dataset with at least 2 pairs");
  }

  RunState st;
  nlohmann::json ref_info = nullptr;
  if (!cfg.init_ckpt.empty()) {
    const flow::Checkpoint init = flow::load_checkpoint(cfg.init_ckpt);
    if (grid_from_checkpoint(init) != grid) fail(ErrorCode::InvalidArgument, "init_ckpt was trained on another grid");
    st.model = flow::model_from_checkpoint(init, /*use_ema=*/true);
    ref_info = {{"path", cfg.init_ckpt}, {"fingerprint", hex64(file_fingerprint(cfg.init_ckpt))},
                {"step", init.step}, {"weights", "ema"}};
  } else {
    flow::Architecture arch = flow::default_architecture(grid);
    arch.hidden = cfg.hidden;
    st.model = VelocityNet<float>(arch);
    Rng init_rng(derive_seed(cfg.seed, 1));
    st.model.init(init_rng);
  }
  if (cfg.method != Method::Sft) {
    st.ref = st.model;
    st.ref.freeze();
  }
  st.ema.assign(st.model.params().begin(), st.model.params().end());
  AdamW opt(st.model.num_params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon, cfg.weight_decay);

  // Fixed validation batch shared by every metrics row.
  const toyworld::Dataset val = toyworld::generate_dataset(cfg.val_seed, cfg.val_n, grid);
  flow::FMBatch<float> val_batch;
  {
    Rng vr(derive_seed(cfg.val_seed, 17));
    std::vector<const PairSample*> ptrs;
    for (const auto& p : val.pairs) ptrs.push_back(&p);
    val_batch = flow::make_fm_batch(flow::pack_states(ptrs), flow::pack_conditions(ptrs), vr);
  }

  nlohmann::json cfg_echo = cfg.to_json();
  cfg_echo["grid"] = to_json(grid);

  auto make_checkpoint = [&](std::int64_t step) {
    flow::Checkpoint c;
    c.arch = st.model.arch();
    c.params.assign(st.model.params().begin(), st.model.params().end());
    c.ema = st.ema;
    c.adam_m = opt.m;
    c.adam_v = opt.v;
    c.adam_step = opt.t;
    c.step = step;
    c.config = cfg_echo;
    return c;
  };
  auto ckpt_path = [&](std::int64_t step, const char* prefix = "step_") {
    char name[64];
    std::snprintf(name, sizeof name, "%s%06lld.ckpt", prefix, static_cast<long long>(step));
    return out_dir / "checkpoints" / name;
  };

  const curriculum::CurriculumConfig cc = cfg.curriculum_config();
  const bool scheduled = cfg.method == Method::SyncDpo &&
                         (cc.mode == curriculum::Mode::Curriculum || cc.mode == curriculum::Mode::Uniform ||
                          cc.mode == curriculum::Mode::ScaleOnly || cc.mode == curriculum::Mode::ReplaceOnly);
  const pref::LossConfig loss_cfg{cfg.beta, cfg.literal_printed_loss};

  TrainResult result;
  result.run_dir = out_dir;
  std::vector<MetricsRow>& rows = result.metrics;
  double window_loss = 0.0;
  std::int64_t window_count = 0;
  double wall = 0.0;

  auto record_row = [&](std::int64_t step) {
    VelocityNet<float> eval_model(st.model.arch());
    std::copy(st.ema.begin(), st.ema.end(), eval_model.params().begin());
    MetricsRow r;
    r.step = step;
    r.train_loss = window_count ? window_loss / static_cast<double>(window_count)
                                : std::numeric_limits<double>::quiet_NaN();
    r.val_fm_loss = flow::fm_loss(eval_model, val_batch);
    const EvalSummary es = evaluate_model(eval_model, grid, cfg.eval_n, cfg.eval_seed);
    r.mean_abs_offset = es.mean_abs_offset;
    r.mean_score = es.mean_score;
    r.degenerate = es.degenerate;
    r.p_replace = scheduled ? curriculum::sampling_probs(step, cc).first : std::numeric_limits<double>::quiet_NaN();
    r.wall_time = wall;
    r.sampler_calls = result.sampler_calls;
    rows.push_back(r);
    window_loss = 0.0;
    window_count = 0;
  };

  std::ofstream neg_log;
  if (cfg.method == Method::SyncDpo && cfg.log_negatives) {
    neg_log.open(out_dir / "negatives.jsonl", std::ios::trunc);
    if (!neg_log) fail(ErrorCode::Io, "cannot write negatives log in '" + out_dir.string() + "'");
  }

  Rng rng(derive_seed(cfg.seed, 2));
  std::uniform_int_distribution<std::int64_t> pick(0, n_data - 1);
  std::vector<float> grad(st.model.num_params());
  std::uint64_t probs_digest = 0xcbf29ce484222325ULL;

  record_row(0);
  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    std::fill(grad.begin(), grad.end(), 0.0f);
    double loss = 0.0;
    try {
      if (cfg.method == Method::Sft) {
        std::vector<const PairSample*> batch;
        for (std::int64_t b = 0; b < cfg.batch_size; ++b) batch.push_back(&ds.pairs[static_cast<std::size_t>(pick(rng))]);
        auto fm = flow::make_fm_batch(flow::pack_states(batch), flow::pack_conditions(batch), rng);
        loss = flow::fm_loss(st.model, fm, std::span<float>(grad));
      } else if (cfg.method == Method::SyncDpo) {
        if (scheduled) {
          const double p = curriculum::sampling_probs(step, cc).first;
          probs_digest = fnv1a(&p, sizeof p, probs_digest);
        }
        std::vector<PairSample> winners, losers;
        std::vector<const PairSample*> conds;
        const negatives::NegativeContext ctx_base{ds.pairs, -1, &st.ref};
        for (std::int64_t b = 0; b < cfg.batch_size; ++b) {
          const std::int64_t idx = pick(rng);
          const PairSample& parent = ds.pairs[static_cast<std::size_t>(idx)];
          const auto kind = curriculum::sample_kind(step, cc, rng);
          auto ctx = ctx_base;
          ctx.parent_id = idx;
          auto neg = negatives::construct_negative(parent, kind, ctx, rng);
          if (kind == negatives::PerturbationKind::Synthesize) ++result.sampler_calls;
          if (neg_log.is_open()) {
            nlohmann::json rec = negatives::to_json(neg.record);
            rec["step"] = step;
            rec["parent_id"] = idx;
            neg_log << rec.dump() << '\n';
          }
          winners.push_back(parent);
          losers.push_back(std::move(neg.pair));
          conds.push_back(&parent);
        }
        auto pb = pref::make_preference_batch(stack_columns(winners), stack_columns(losers),
                                              flow::pack_conditions(conds), rng);
        loss = pref::syncdpo_loss(st.model, st.ref, pb, loss_cfg, std::span<float>(grad));
      } else {
        std::vector<PairSample> winners, losers;
        for (std::int64_t b = 0; b < cfg.batch_size; ++b) {
          const PairSample& prompt = ds.pairs[static_cast<std::size_t>(pick(rng))];
          int calls = 0;
          std::string reason;
          auto vp = negatives::build_vanilla_dpo_pair(st.ref, prompt.condition, rng, grid, cfg.n_candidates, &calls,
                                                      &reason);
          result.sampler_calls += calls;
          if (!vp) {
            ++result.skipped_pairs;
            continue;
          }
          winners.push_back(std::move(vp->winner));
          losers.push_back(std::move(vp->loser));
        }
        if (winners.empty())
          fail(ErrorCode::Numeric, "preference pair starvation at step " + std::to_string(step) +
                                       ": every candidate set was degenerate");
        std::vector<const PairSample*> conds;
        for (const auto& w : winners) conds.push_back(&w);
        auto pb = pref::make_preference_batch(stack_columns(winners), stack_columns(losers),
                                              flow::pack_conditions(conds), rng);
        loss = pref::syncdpo_loss(st.model, st.ref, pb, loss_cfg, std::span<float>(grad));
      }
      for (float g : grad)
        if (!std::isfinite(g)) fail(ErrorCode::Numeric, "non-finite gradient");
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Numeric) throw;
      save_checkpoint(ckpt_path(step, "crash_step_"), make_checkpoint(step));
      fail(ErrorCode::Numeric, "training aborted at step " + std::to_string(step) + ": " + e.what());
    }

    opt.step(st.model.params(), grad, lr_at(step, cfg));
    ema_update(st.ema, st.model.params(), cfg.ema_decay);
    wall += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (step == 0) result.first_loss = loss;
    window_loss += loss;
    ++window_count;
    if (hooks.on_step) hooks.on_step(step + 1, st.model.params(), st.ema);

    const std::int64_t done = step + 1;
    if ((cfg.eval_every > 0 && done % cfg.eval_every == 0) || done == cfg.steps) record_row(done);
    if (cfg.ckpt_every > 0 && done % cfg.ckpt_every == 0 && done != cfg.steps)
      save_checkpoint(ckpt_path(done), make_checkpoint(done));
  }

  result.final_checkpoint = ckpt_path(cfg.steps);
  save_checkpoint(result.final_checkpoint, make_checkpoint(cfg.steps));
  {
    VelocityNet<float> eval_model(st.model.arch());
    std::copy(st.ema.begin(), st.ema.end(), eval_model.params().begin());
    std::vector<SampleScore> scores;
    evaluate_model(eval_model, grid, cfg.eval_n, cfg.eval_seed, &scores);
    write_eval_csv(out_dir / "eval" / "final.csv", scores);
  }

  result.wall_time_total = wall;
  result.wall_time_per_step = cfg.steps > 0 ? wall / static_cast<double>(cfg.steps) : 0.0;
  write_metrics_csv(out_dir / "metrics.csv", rows);
  {
    std::ofstream f(out_dir / "timing.csv");
    if (!f) fail(ErrorCode::Io, "cannot write timing.csv");
    f << "step,wall_time,sampler_calls\n";
    for (const auto& r : rows) f << r.step << ',' << fmt_double(r.wall_time) << ',' << r.sampler_calls << '\n';
  }

  const MetricsRow& last = rows.back();
  nlohmann::json manifest{
      {"format_version", kManifestFormatVersion},
      {"code_version", kCodeVersion},
      {"dataset_format_version", toyworld::kDatasetFormatVersion},
      {"checkpoint_format_version", flow::kCheckpointFormatVersion},
      {"method", to_string(cfg.method)},
      {"label", cfg.effective_label()},
      {"seed", cfg.seed},
      {"config", cfg_echo},
      {"dataset", {{"path", cfg.dataset}, {"fingerprint", hex64(file_fingerprint(cfg.dataset))},
                   {"seed", ds.seed}, {"n", n_data}}},
      {"reference", ref_info},
      {"parameters", st.model.num_params()},
      {"steps", cfg.steps},
      {"optimizer_steps", opt.t},
      {"positives_consumed", cfg.steps * cfg.batch_size},
      {"first_loss", result.first_loss},
      {"sampler_calls", result.sampler_calls},
      {"skipped_pairs", result.skipped_pairs},
      {"wall_time_total", result.wall_time_total},
      {"wall_time_per_step", result.wall_time_per_step},
      {"final", {{"step", last.step},
                 {"val_fm_loss", last.val_fm_loss},
                 {"mean_abs_offset", last.mean_abs_offset},
                 {"mean_score", last.mean_score},
                 {"degenerate", last.degenerate},
                 {"checkpoint", fs::relative(result.final_checkpoint, out_dir).string()}}},
      {"status", "complete"}};
  if (cfg.method == Method::SyncDpo) {
    manifest["curriculum"] = {{"mode", curriculum::to_string(cc.mode)},
                              {"k_percent", cc.k_percent()},
                              {"probs_digest", scheduled ? nlohmann::json(hex64(probs_digest)) : nlohmann::json(nullptr)}};
    if (neg_log.is_open()) manifest["negatives_log"] = "negatives.jsonl";
  }
  write_json(out_dir / "manifest.json", manifest);
  return result;
}

}  // namespace syncdpo::harness
