// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint store: parameter path -> shape + float64 data, plus a
// free-form text block (the resolved run config). Values round-trip bit-exactly.
//
// Layout (little-endian):
//   "CIBK" u32 version
//   string meta
//   u32 count, then per tensor: string name, u32 rank, u64 dims[rank], f64 data[]

#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cib/autodiff/tensor.hpp"
#include "cib/nn/layers.hpp"

namespace cib::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::string meta;
  std::vector<std::pair<std::string, ad::Tensor>> tensors;

  const ad::Tensor* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& os, const ParamList& params, const std::string& meta);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const ParamList& params, const std::string& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `params` by name. Every parameter must be present
/// with an identical shape; extra stored tensors are an error as well.
void restore_params(const Checkpoint& ckpt, const ParamList& params);

}  // namespace cib::nn
