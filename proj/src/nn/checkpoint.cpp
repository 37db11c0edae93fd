// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/nn/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "cib/common/binary_io.hpp"

namespace cib::nn {

namespace {

constexpr char kMagic[4] = {'C', 'I', 'B', 'K'};
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

const ad::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& os, const ParamList& params, const std::string& meta) {
  os.write(kMagic, 4);
  io::put_u32(os, kCheckpointVersion);
  io::put_string(os, meta);
  io::put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    io::put_string(os, p.name);
    io::put_u32(os, static_cast<std::uint32_t>(p.tensor.dim()));
    for (std::size_t d : p.tensor.shape()) io::put_u64(os, d);
    for (double v : p.tensor.data()) io::put_f64(os, v);
  }
  if (!os) throw CheckpointError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw io::TruncatedError("truncated payload while reading checkpoint magic");
  if (!std::equal(magic, magic + 4, kMagic)) throw CheckpointError("not a checkpoint file (bad magic)");
  const std::uint32_t version = io::get_u32(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.meta = io::get_string(is, "checkpoint meta");
  const std::uint32_t count = io::get_u32(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = io::get_string(is, "tensor name", 4096);
    const std::uint32_t rank = io::get_u32(is, "tensor rank");
    if (rank == 0 || rank > kMaxRank) throw CheckpointError("implausible rank for " + name);
    ad::Shape shape(rank);
    for (auto& d : shape) d = io::get_u64(is, "tensor dims");
    std::vector<double> data(ad::shape_numel(shape));
    for (auto& v : data) v = io::get_f64(is, "tensor data");
    ck.tensors.emplace_back(std::move(name), ad::Tensor::from(std::move(shape), std::move(data)));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParamList& params, const std::string& meta) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    write_checkpoint(os, params, meta);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  Checkpoint ck = read_checkpoint(is);
  if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes in " + path.string());
  return ck;
}

void restore_params(const Checkpoint& ckpt, const ParamList& params) {
  std::set<std::string> expected;
  for (const auto& p : params) {
    expected.insert(p.name);
    const ad::Tensor* src = ckpt.find(p.name);
    if (!src) throw CheckpointError("checkpoint is missing parameter " + p.name);
    if (src->shape() != p.tensor.shape()) {
      throw CheckpointError("shape mismatch for " + p.name + ": checkpoint " + ad::shape_str(src->shape()) +
                            " vs model " + ad::shape_str(p.tensor.shape()));
    }
  }
  for (const auto& [name, t] : ckpt.tensors) {
    if (!expected.count(name)) throw CheckpointError("checkpoint has unexpected parameter " + name);
  }
  for (const auto& p : params) {
    auto src = ckpt.find(p.name)->data();
    ad::Tensor dst = p.tensor;
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
}

}  // namespace cib::nn
