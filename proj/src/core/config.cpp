// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace syncdpo::harness {

const char* to_string(Method m) {
  switch (m) {
    case Method::Sft: return "sft";
    case Method::Dpo: return "dpo";
    case Method::SyncDpo: return "syncdpo";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "sft") return Method::Sft;
  if (s == "dpo") return Method::Dpo;
  if (s == "syncdpo") return Method::SyncDpo;
  fail(ErrorCode::InvalidArgument, "unknown method '" + s + "' (expected sft, dpo or syncdpo)");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "method",        "label",          "steps",          "batch_size",       "learning_rate",
      "warmup_steps",  "weight_decay",   "adam_beta1",     "adam_beta2",       "adam_epsilon",
      "ema_decay",     "beta",           "curriculum.k_percent", "curriculum.mode", "n_candidates",
      "loss.literal_printed_form", "seed", "dataset",       "output_dir",       "init_ckpt",
      "hidden",        "val_n",          "val_seed",       "eval_n",           "eval_seed",
      "eval_every",    "ckpt_every",     "log_negatives"};
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) fail(ErrorCode::InvalidArgument, "bad value '" + v + "' for key " + key);
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, "bad value '" + v + "' for key " + key);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorCode::InvalidArgument, "bad boolean '" + v + "' for key " + key);
}

void flatten(const nlohmann::json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object())
      flatten(v, key, out);
    else if (v.is_string())
      out.emplace_back(key, v.get<std::string>());
    else if (v.is_boolean())
      out.emplace_back(key, v.get<bool>() ? "true" : "false");
    else if (v.is_number_integer() || v.is_number_unsigned())
      out.emplace_back(key, v.dump());
    else if (v.is_number_float()) {
      std::ostringstream ss;
      ss.precision(17);
      ss << v.get<double>();
      out.emplace_back(key, ss.str());
    } else {
      fail(ErrorCode::InvalidArgument, "unsupported JSON value for key " + key);
    }
  }
}

}  // namespace

void TrainConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "method") method = method_from_string(v);
  else if (key == "label") label = v;
  else if (key == "steps") steps = parse_number<std::int64_t>(key, v);
  else if (key == "batch_size") batch_size = parse_number<std::int64_t>(key, v);
  else if (key == "learning_rate") learning_rate = parse_double(key, v);
  else if (key == "warmup_steps") warmup_steps = parse_number<std::int64_t>(key, v);
  else if (key == "weight_decay") weight_decay = parse_double(key, v);
  else if (key == "adam_beta1") adam_beta1 = parse_double(key, v);
  else if (key == "adam_beta2") adam_beta2 = parse_double(key, v);
  else if (key == "adam_epsilon") adam_epsilon = parse_double(key, v);
  else if (key == "ema_decay") ema_decay = parse_double(key, v);
  else if (key == "beta") beta = parse_double(key, v);
  else if (key == "curriculum.k_percent") {
    if (v == "auto") curriculum_k_percent.reset();
    else curriculum_k_percent = parse_double(key, v);
  }
  else if (key == "curriculum.mode") curriculum_mode = curriculum::mode_from_string(v);
  else if (key == "n_candidates") n_candidates = parse_number<int>(key, v);
  else if (key == "loss.literal_printed_form") literal_printed_loss = parse_bool(key, v);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
  else if (key == "dataset") dataset = v;
  else if (key == "output_dir") output_dir = v;
  else if (key == "init_ckpt") init_ckpt = v;
  else if (key == "hidden") hidden = parse_number<int>(key, v);
  else if (key == "val_n") val_n = parse_number<std::int64_t>(key, v);
  else if (key == "val_seed") val_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "eval_n") eval_n = parse_number<std::int64_t>(key, v);
  else if (key == "eval_seed") eval_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "eval_every") eval_every = parse_number<std::int64_t>(key, v);
  else if (key == "ckpt_every") ckpt_every = parse_number<std::int64_t>(key, v);
  else if (key == "log_negatives") log_negatives = parse_bool(key, v);
  else fail(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
}

double TrainConfig::curriculum_k() const {
  if (curriculum_k_percent) return *curriculum_k_percent / 100.0;
  return steps > 0 ? curriculum::desk_rate(steps) : 0.0;
}

curriculum::CurriculumConfig TrainConfig::curriculum_config() const {
  curriculum::CurriculumConfig c;
  c.k = curriculum_k();
  c.mode = curriculum_mode;
  c.total_steps = steps;
  return c;
}

std::string TrainConfig::effective_label() const {
  if (!label.empty()) return label;
  if (method == Method::SyncDpo) return std::string("syncdpo/") + curriculum::to_string(curriculum_mode);
  return to_string(method);
}

void TrainConfig::validate() const {
  require(steps >= 0, "steps must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0, "learning_rate must be > 0");
  require(warmup_steps >= 0, "warmup_steps must be >= 0");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1, "adam betas must be in [0, 1)");
  require(adam_epsilon > 0, "adam_epsilon must be > 0");
  require(ema_decay >= 0 && ema_decay < 1, "ema_decay must be in [0, 1)");
  require(hidden >= 1, "hidden must be >= 1");
  require(val_n >= 1 && eval_n >= 1, "val_n and eval_n must be >= 1");
  require(eval_every >= 0 && ckpt_every >= 0, "eval_every and ckpt_every must be >= 0");
  require(!dataset.empty(), "dataset path is required");
  require(!output_dir.empty(), "output_dir is required");
  if (method != Method::Sft) {
    require(beta > 0, "beta must be > 0");
    require(!init_ckpt.empty(), std::string(to_string(method)) + " needs init_ckpt (the frozen reference)");
  }
  if (method == Method::SyncDpo && curriculum_k_percent) require(*curriculum_k_percent >= 0, "curriculum.k_percent must be >= 0");
  if (method == Method::Dpo) require(n_candidates >= 2, "n_candidates must be >= 2");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j{{"method", to_string(method)},
                   {"label", effective_label()},
                   {"steps", steps},
                   {"batch_size", batch_size},
                   {"learning_rate", learning_rate},
                   {"warmup_steps", warmup_steps},
                   {"weight_decay", weight_decay},
                   {"adam_beta1", adam_beta1},
                   {"adam_beta2", adam_beta2},
                   {"adam_epsilon", adam_epsilon},
                   {"ema_decay", ema_decay},
                   {"seed", seed},
                   {"dataset", dataset},
                   {"output_dir", output_dir},
                   {"init_ckpt", init_ckpt},
                   {"hidden", hidden},
                   {"val_n", val_n},
                   {"val_seed", val_seed},
                   {"eval_n", eval_n},
                   {"eval_seed", eval_seed},
                   {"eval_every", eval_every},
                   {"ckpt_every", ckpt_every},
                   {"log_negatives", log_negatives}};
  if (method != Method::Sft) {
    j["beta"] = beta;
    j["loss.literal_printed_form"] = literal_printed_loss;
  }
  if (method == Method::SyncDpo) {
    j["curriculum.k_percent"] = curriculum_k() * 100.0;
    j["curriculum.mode"] = curriculum::to_string(curriculum_mode);
  }
  if (method == Method::Dpo) j["n_candidates"] = n_candidates;
  return j;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig cfg) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  const std::string stripped = trim(text);

  if (!stripped.empty() && stripped.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(stripped);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::InvalidArgument, "malformed JSON config '" + path.string() + "': " + e.what());
    }
    std::vector<std::pair<std::string, std::string>> kv;
    flatten(j, "", kv);
    for (const auto& [k, v] : kv) cfg.set(k, v);
    return cfg;
  }

  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    cfg.set(t.substr(0, eq), t.substr(eq + 1));
  }
  return cfg;
}

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "override '" + o + "' is not key=value");
    cfg.set(o.substr(0, eq), o.substr(eq + 1));
  }
}

}  // namespace syncdpo::harness
