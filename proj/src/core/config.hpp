// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curriculum.hpp"

namespace syncdpo::harness {

enum class Method { Sft, Dpo, SyncDpo };
const char* to_string(Method m);
Method method_from_string(const std::string& s);

/// Desk-scale defaults; the large-model values (lr 5e-6, warmup 1000) are reachable via overrides.
struct TrainConfig {
  Method method = Method::Sft;
  std::string label;  // grouping name in comparison reports; defaults to the method/mode
  std::int64_t steps = 3000;
  std::int64_t batch_size = 32;
  double learning_rate = 1e-3;
  std::int64_t warmup_steps = 100;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_epsilon = 1e-8;
  double ema_decay = 0.9;
  double beta = 0.2;
  std::optional<double> curriculum_k_percent;  // unset: reach p_replace = 0 at 80 % of steps
  curriculum::Mode curriculum_mode = curriculum::Mode::Curriculum;
  int n_candidates = 3;
  bool literal_printed_loss = false;
  std::uint64_t seed = 0;
  std::string dataset;
  std::string output_dir;
  std::string init_ckpt;
  int hidden = 256;
  std::int64_t val_n = 256;
  std::uint64_t val_seed = 1000003;
  std::int64_t eval_n = 200;
  std::uint64_t eval_seed = 2000003;
  std::int64_t eval_every = 500;
  std::int64_t ckpt_every = 0;  // 0: final checkpoint only
  bool log_negatives = true;

  double curriculum_k() const;
  curriculum::CurriculumConfig curriculum_config() const;
  std::string effective_label() const;

  /// Sets one key from its textual value; unknown keys and malformed values throw.
  void set(const std::string& key, const std::string& value);
  /// Enforces ranges and method-specific requirements.
  void validate() const;
  nlohmann::json to_json() const;
};

/// All accepted configuration keys.
const std::vector<std::string>& config_keys();

/// Reads a flat key=value file, or a JSON object (nested objects flatten to dotted keys).
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace syncdpo::harness
