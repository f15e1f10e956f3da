// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Named-array container shared by dataset and checkpoint files.
//
// Layout (all integers little-endian):
//   bytes 0..7    magic (8 ASCII bytes, e.g. "SDPODATA" or "SDPOCKPT")
//   bytes 8..11   uint32 format_version
//   bytes 12..19  uint64 header_length (bytes of UTF-8 JSON that follow)
//   header        JSON object {"manifest": {...}, "arrays": [{"name","dtype","shape","offset","nbytes"}...]}
//   payload       raw array bytes; "offset" is relative to the payload start
//
// dtype is "f32" or "i64". Arrays are stored row-major.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace syncdpo {

struct NamedArray {
  std::string dtype;  // "f32" | "i64"
  std::vector<std::int64_t> shape;
  std::vector<float> f32;
  std::vector<std::int64_t> i64;

  std::int64_t element_count() const;
};

struct Container {
  nlohmann::json manifest = nlohmann::json::object();
  std::map<std::string, NamedArray> arrays;

  void put_f32(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> data);
  void put_i64(const std::string& name, std::vector<std::int64_t> shape, std::vector<std::int64_t> data);
  const NamedArray& get(const std::string& name, const std::string& dtype) const;
};

void write_container(const std::filesystem::path& path, const char (&magic)[9], std::uint32_t format_version,
                     const Container& c);

/// Rejects a wrong magic or a format_version other than `expected_version`.
Container read_container(const std::filesystem::path& path, const char (&magic)[9],
                         std::uint32_t expected_version);

std::uint64_t file_fingerprint(const std::filesystem::path& path);

}  // namespace syncdpo
