// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat `key = value` text files with `#` comments.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cib::io {

/// Validation failure tied to a named field.
class FieldError : public std::invalid_argument {
 public:
  FieldError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct KvEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses the flat format. Duplicate keys and malformed lines throw FieldError.
std::vector<KvEntry> parse_kv(std::istream& is);
std::vector<KvEntry> load_kv(const std::string& path);

double parse_double(const std::string& field, const std::string& text);
std::int64_t parse_int(const std::string& field, const std::string& text);
std::uint64_t parse_uint64(const std::string& field, const std::string& text);
bool parse_bool(const std::string& field, const std::string& text);
/// Comma-separated integers, e.g. "1,4,8".
std::vector<int> parse_int_list(const std::string& field, const std::string& text);

/// Shortest text that parses back to the identical double.
std::string format_double(double v);

}  // namespace cib::io
