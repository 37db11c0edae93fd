// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/common/kv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

namespace cib::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<KvEntry> parse_kv(std::istream& is) {
  std::vector<KvEntry> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FieldError("line " + std::to_string(lineno), "expected 'key = value'");
    }
    KvEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
    if (e.key.empty()) throw FieldError("line " + std::to_string(lineno), "missing key");
    if (!seen.insert(e.key).second) throw FieldError(e.key, "duplicate key on line " + std::to_string(lineno));
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<KvEntry> load_kv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FieldError(path, "cannot open file");
  return parse_kv(is);
}

double parse_double(const std::string& field, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw FieldError(field, "expected a finite number, got '" + text + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& field, const std::string& text) {
  std::int64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw FieldError(field, "expected an integer, got '" + text + "'");
  return v;
}

std::uint64_t parse_uint64(const std::string& field, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw FieldError(field, "expected a non-negative integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& field, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw FieldError(field, "expected true or false, got '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& field, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto v = parse_int(field, item);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      throw FieldError(field, "value out of range: " + item);
    }
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw FieldError(field, "expected a comma-separated list");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace cib::io
