// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end over the syncdpo C API.
// Exit codes: 0 success, 1 usage error, 2 runtime fault.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "syncdpo/syncdpo.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int report(sdpo_status st, const char* what) {
  if (st == SDPO_OK) return 0;
  std::fprintf(stderr, "syncdpo %s: %s: %s\n", what, sdpo_status_string(st), sdpo_last_error());
  return st == SDPO_ERR_INVALID_ARGUMENT ? kExitUsage : kExitRuntime;
}

struct ConfigHandle {
  sdpo_config* p = nullptr;
  ~ConfigHandle() { sdpo_config_destroy(p); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"syncdpo: flow-matching preference optimization with temporal negatives (toy laboratory)"};
  app.set_version_flag("--version", std::string(sdpo_version()));
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic synchronized dataset");
  std::int64_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--n", gen_n, "Number of pairs")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output dataset file")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train sft, dpo or syncdpo");
  std::string method, config_path, out_dir;
  std::vector<std::string> overrides;
  tr->add_option("--method", method, "sft | dpo | syncdpo")->check(CLI::IsMember({"sft", "dpo", "syncdpo"}));
  tr->add_option("--config", config_path, "Config file (key=value or JSON)")->required();
  tr->add_option("--override", overrides, "key=value override (repeatable)");
  tr->add_option("--out", out_dir, "Run directory (overrides output_dir)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint with the synchronization oracle");
  std::string ev_ckpt, ev_out;
  std::int64_t ev_n = 200;
  std::uint64_t ev_seed = 2000003;
  bool ev_raw = false;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--n", ev_n, "Number of generations")->capture_default_str();
  ev->add_option("--seed", ev_seed, "Sampling seed")->capture_default_str();
  ev->add_option("--out", ev_out, "Per-sample CSV output");
  ev->add_flag("--raw", ev_raw, "Use raw parameters instead of the EMA shadow");

  // compare
  auto* cmp = app.add_subcommand("compare", "Compare completed runs");
  std::vector<std::string> run_dirs;
  std::string cmp_csv;
  cmp->add_option("runs", run_dirs, "Run directories")->required()->expected(2, -1);
  cmp->add_option("--csv", cmp_csv, "Write the comparison CSV here");

  // diag-gradnorm
  auto* dg = app.add_subcommand("diag-gradnorm", "Gradient-norm ratio histogram (preference score vs winner MSE)");
  std::string dg_ckpt, dg_out = "gradnorm.csv", dg_ref;
  std::int64_t dg_n = 500;
  std::uint64_t dg_seed = 0;
  dg->add_option("--ckpt", dg_ckpt, "Checkpoint file")->required();
  dg->add_option("--n", dg_n, "Number of draws")->capture_default_str();
  dg->add_option("--seed", dg_seed, "Draw seed")->capture_default_str();
  dg->add_option("--out", dg_out, "CSV output")->capture_default_str();
  dg->add_option("--ref", dg_ref, "Reference checkpoint (default: the run's init_ckpt, else the model)");

  // plot
  auto* pl = app.add_subcommand("plot", "Render metrics curves of a run to SVG");
  std::string pl_run;
  pl->add_option("--run", pl_run, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  if (*gen) {
    if (int rc = report(sdpo_generate_dataset(gen_seed, gen_n, gen_out.c_str()), "gen-data")) return rc;
    std::printf("wrote %lld pairs to %s\n", static_cast<long long>(gen_n), gen_out.c_str());
    return 0;
  }

  if (*tr) {
    ConfigHandle cfg;
    if (int rc = report(sdpo_config_create(&cfg.p), "train")) return rc;
    if (int rc = report(sdpo_config_load(cfg.p, config_path.c_str()), "train")) return rc;
    if (!method.empty())
      if (int rc = report(sdpo_config_set(cfg.p, "method", method.c_str()), "train")) return rc;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "syncdpo train: override '%s' is not key=value\n", o.c_str());
        return kExitUsage;
      }
      const std::string key = o.substr(0, eq), value = o.substr(eq + 1);
      if (int rc = report(sdpo_config_set(cfg.p, key.c_str(), value.c_str()), "train")) return rc;
    }
    if (!out_dir.empty())
      if (int rc = report(sdpo_config_set(cfg.p, "output_dir", out_dir.c_str()), "train")) return rc;
    sdpo_train_summary s{};
    if (int rc = report(sdpo_train(cfg.p, &s), "train")) return rc;
    std::printf("steps=%lld first_loss=%.6f val_fm_loss=%.6f mean_abs_offset=%.4f mean_score=%.4f "
                "sampler_calls=%lld skipped=%lld wall_per_step=%.4fs\n",
                static_cast<long long>(s.steps), s.first_loss, s.final_val_fm_loss, s.final_mean_abs_offset,
                s.final_mean_score, static_cast<long long>(s.sampler_calls), static_cast<long long>(s.skipped_pairs),
                s.wall_time_per_step);
    return 0;
  }

  if (*ev) {
    sdpo_eval_summary s{};
    if (int rc = report(sdpo_evaluate(ev_ckpt.c_str(), ev_n, ev_seed, ev_raw ? 0 : 1,
                                      ev_out.empty() ? nullptr : ev_out.c_str(), &s),
                        "eval"))
      return rc;
    std::printf("n=%lld degenerate=%lld mean_abs_offset=%.4f mean_score=%.4f weights=%s\n",
                static_cast<long long>(s.n), static_cast<long long>(s.degenerate), s.mean_abs_offset, s.mean_score,
                ev_raw ? "raw" : "ema");
    return 0;
  }

  if (*cmp) {
    std::vector<const char*> dirs;
    for (const auto& d : run_dirs) dirs.push_back(d.c_str());
    char* table = nullptr;
    if (int rc = report(sdpo_compare(dirs.data(), dirs.size(), cmp_csv.empty() ? nullptr : cmp_csv.c_str(), &table),
                        "compare"))
      return rc;
    std::fputs(table, stdout);
    sdpo_free_string(table);
    return 0;
  }

  if (*dg) {
    sdpo_gradnorm_summary s{};
    if (int rc = report(sdpo_diag_gradnorm(dg_ckpt.c_str(), dg_n, dg_seed, dg_out.c_str(),
                                           dg_ref.empty() ? nullptr : dg_ref.c_str(), &s),
                        "diag-gradnorm"))
      return rc;
    std::printf("n=%lld valid=%lld degenerate=%lld median=%.4f mean=%.4f fraction>1=%.4f csv=%s\n",
                static_cast<long long>(s.n), static_cast<long long>(s.valid), static_cast<long long>(s.degenerate),
                s.median, s.mean, s.fraction_gt_1, dg_out.c_str());
    return 0;
  }

  if (*pl) {
    char* path = nullptr;
    if (int rc = report(sdpo_plot(pl_run.c_str(), &path), "plot")) return rc;
    std::printf("wrote %s\n", path);
    sdpo_free_string(path);
    return 0;
  }
  return kExitUsage;
}
