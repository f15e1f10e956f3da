// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "common.hpp"

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace syncdpo {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::int64_t NamedArray::element_count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void Container::put_f32(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> data) {
  NamedArray a;
  a.dtype = "f32";
  a.shape = std::move(shape);
  a.f32 = std::move(data);
  if (a.element_count() != static_cast<std::int64_t>(a.f32.size()))
    fail(ErrorCode::Internal, "array '" + name + "' shape does not match data size");
  arrays[name] = std::move(a);
}

void Container::put_i64(const std::string& name, std::vector<std::int64_t> shape, std::vector<std::int64_t> data) {
  NamedArray a;
  a.dtype = "i64";
  a.shape = std::move(shape);
  a.i64 = std::move(data);
  if (a.element_count() != static_cast<std::int64_t>(a.i64.size()))
    fail(ErrorCode::Internal, "array '" + name + "' shape does not match data size");
  arrays[name] = std::move(a);
}

const NamedArray& Container::get(const std::string& name, const std::string& dtype) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) fail(ErrorCode::Format, "missing array '" + name + "'");
  if (it->second.dtype != dtype)
    fail(ErrorCode::Format, "array '" + name + "' has dtype " + it->second.dtype + ", expected " + dtype);
  return it->second;
}

namespace {

template <class T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t at) {
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  return v;
}

}  // namespace

void write_container(const std::filesystem::path& path, const char (&magic)[9], std::uint32_t format_version,
                     const Container& c) {
  nlohmann::json table = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, a] : c.arrays) {
    const std::size_t nbytes = a.dtype == "f32" ? a.f32.size() * 4 : a.i64.size() * 8;
    table.push_back({{"name", name}, {"dtype", a.dtype}, {"shape", a.shape}, {"offset", payload.size()},
                     {"nbytes", nbytes}});
    if (a.dtype == "f32")
      payload.append(reinterpret_cast<const char*>(a.f32.data()), nbytes);
    else
      payload.append(reinterpret_cast<const char*>(a.i64.data()), nbytes);
  }
  const std::string header = nlohmann::json{{"manifest", c.manifest}, {"arrays", table}}.dump();

  std::string out(magic, 8);
  put_le<std::uint32_t>(out, format_version);
  put_le<std::uint64_t>(out, header.size());
  out += header;
  out += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path, const char (&magic)[9],
                         std::uint32_t expected_version) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string in = ss.str();

  const std::string where = " in '" + path.string() + "'";
  if (in.size() < 20 || in.compare(0, 8, magic, 8) != 0) fail(ErrorCode::Format, "bad magic" + where);
  const auto version = get_le<std::uint32_t>(in, 8);
  if (version != expected_version)
    fail(ErrorCode::Format, "unsupported format_version " + std::to_string(version) + where);
  const auto header_len = get_le<std::uint64_t>(in, 12);
  if (20 + header_len > in.size()) fail(ErrorCode::Format, "truncated header" + where);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed header json: ") + e.what() + where);
  }

  Container c;
  c.manifest = header.value("manifest", nlohmann::json::object());
  const std::size_t payload_at = 20 + header_len;
  try {
    for (const auto& entry : header.at("arrays")) {
      NamedArray a;
      a.dtype = entry.at("dtype").get<std::string>();
      a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("nbytes").get<std::size_t>();
      const std::size_t elem = a.dtype == "f32" ? 4 : a.dtype == "i64" ? 8 : 0;
      if (elem == 0) fail(ErrorCode::Format, "unknown dtype '" + a.dtype + "'" + where);
      if (nbytes != static_cast<std::size_t>(a.element_count()) * elem || payload_at + offset + nbytes > in.size())
        fail(ErrorCode::Format, "array extent mismatch" + where);
      if (elem == 4) {
        a.f32.resize(nbytes / 4);
        std::memcpy(a.f32.data(), in.data() + payload_at + offset, nbytes);
      } else {
        a.i64.resize(nbytes / 8);
        std::memcpy(a.i64.data(), in.data() + payload_at + offset, nbytes);
      }
      c.arrays[entry.at("name").get<std::string>()] = std::move(a);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed array table: ") + e.what() + where);
  }
  return c;
}

std::uint64_t file_fingerprint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof buf);
    h = fnv1a(buf, static_cast<std::size_t>(f.gcount()), h);
  }
  return h;
}

}  // namespace syncdpo
