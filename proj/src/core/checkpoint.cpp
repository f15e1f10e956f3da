// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "checkpoint.hpp"

#include "container.hpp"

namespace syncdpo::flow {

nlohmann::json to_json(const Architecture& a) {
  return {{"kind", "mlp_silu"},     {"state_dim", a.state_dim},         {"cond_dim", a.cond_dim},
          {"time_dim", a.time_dim}, {"hidden", a.hidden},               {"hidden_layers", a.hidden_layers},
          {"diag_skip", a.diag_skip}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  if (j.value("kind", std::string()) != "mlp_silu") fail(ErrorCode::Format, "unknown architecture kind");
  Architecture a;
  a.state_dim = j.at("state_dim").get<int>();
  a.cond_dim = j.at("cond_dim").get<int>();
  a.time_dim = j.at("time_dim").get<int>();
  a.hidden = j.at("hidden").get<int>();
  a.hidden_layers = j.at("hidden_layers").get<int>();
  a.diag_skip = j.at("diag_skip").get<bool>();
  return a;
}

namespace {

void put_tensors(Container& c, const std::string& prefix, const VelocityNet<float>& layout,
                 const std::vector<float>& flat) {
  for (const auto& v : layout.tensor_views()) {
    std::vector<float> data(flat.begin() + static_cast<std::ptrdiff_t>(v.offset),
                            flat.begin() + static_cast<std::ptrdiff_t>(v.offset + v.count));
    c.put_f32(prefix + v.name, v.shape, std::move(data));
  }
}

std::vector<float> get_tensors(const Container& c, const std::string& prefix, const VelocityNet<float>& layout) {
  std::vector<float> flat(layout.num_params());
  for (const auto& v : layout.tensor_views()) {
    const auto& a = c.get(prefix + v.name, "f32");
    if (a.shape != v.shape) fail(ErrorCode::Format, "tensor '" + prefix + v.name + "' has unexpected shape");
    std::copy(a.f32.begin(), a.f32.end(), flat.begin() + static_cast<std::ptrdiff_t>(v.offset));
  }
  return flat;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const VelocityNet<float> layout(ckpt.arch);
  const std::size_t n = layout.num_params();
  if (ckpt.params.size() != n || ckpt.ema.size() != n)
    fail(ErrorCode::Internal, "checkpoint parameter count does not match architecture");
  const bool has_adam = !ckpt.adam_m.empty();
  if (has_adam && (ckpt.adam_m.size() != n || ckpt.adam_v.size() != n))
    fail(ErrorCode::Internal, "optimizer state size does not match architecture");

  Container c;
  c.manifest = {{"format_version", kCheckpointFormatVersion},
                {"architecture", to_json(ckpt.arch)},
                {"step", ckpt.step},
                {"adam_step", ckpt.adam_step},
                {"has_optimizer_state", has_adam},
                {"config", ckpt.config}};
  put_tensors(c, "param/", layout, ckpt.params);
  put_tensors(c, "ema/", layout, ckpt.ema);
  if (has_adam) {
    put_tensors(c, "adam_m/", layout, ckpt.adam_m);
    put_tensors(c, "adam_v/", layout, ckpt.adam_v);
  }
  write_container(path, kCheckpointMagic, kCheckpointFormatVersion, c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path, kCheckpointMagic, kCheckpointFormatVersion);
  Checkpoint ckpt;
  try {
    ckpt.arch = architecture_from_json(c.manifest.at("architecture"));
    ckpt.step = c.manifest.at("step").get<std::int64_t>();
    ckpt.adam_step = c.manifest.value("adam_step", std::int64_t{0});
    ckpt.config = c.manifest.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, "malformed checkpoint manifest in '" + path.string() + "': " + e.what());
  }
  const VelocityNet<float> layout(ckpt.arch);
  ckpt.params = get_tensors(c, "param/", layout);
  ckpt.ema = get_tensors(c, "ema/", layout);
  if (c.manifest.value("has_optimizer_state", false)) {
    ckpt.adam_m = get_tensors(c, "adam_m/", layout);
    ckpt.adam_v = get_tensors(c, "adam_v/", layout);
  }
  return ckpt;
}

VelocityNet<float> model_from_checkpoint(const Checkpoint& ckpt, bool use_ema) {
  VelocityNet<float> net(ckpt.arch);
  const auto& src = use_ema ? ckpt.ema : ckpt.params;
  if (src.size() != net.num_params()) fail(ErrorCode::Format, "checkpoint parameter count mismatch");
  std::copy(src.begin(), src.end(), net.params().begin());
  return net;
}

}  // namespace syncdpo::flow
