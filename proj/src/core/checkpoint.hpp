// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoint files use the named-array container with magic "SDPOCKPT".
// Arrays: param/<tensor>, ema/<tensor>, and (when present) adam_m/<tensor>,
// adam_v/<tensor>, all float32. The manifest carries the architecture, step
// counter, optimizer step, and an echo of the run configuration.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "velocity_net.hpp"

namespace syncdpo::flow {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[9] = "SDPOCKPT";

struct Checkpoint {
  Architecture arch;
  std::vector<float> params;
  std::vector<float> ema;
  std::vector<float> adam_m;  // empty when no optimizer state is attached
  std::vector<float> adam_v;
  std::int64_t adam_step = 0;
  std::int64_t step = 0;
  nlohmann::json config = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds a model from the raw parameters or from the EMA shadow.
VelocityNet<float> model_from_checkpoint(const Checkpoint& ckpt, bool use_ema);

nlohmann::json to_json(const Architecture& a);
Architecture architecture_from_json(const nlohmann::json& j);

}  // namespace syncdpo::flow
