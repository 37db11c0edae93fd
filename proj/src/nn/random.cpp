// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/nn/random.hpp"

namespace cib::nn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(master ^ h) + index);
}

ad::Tensor normal_tensor(const ad::Shape& shape, Rng& rng, double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return ad::Tensor::from(shape, std::move(v));
}

ad::Tensor uniform_tensor(const ad::Shape& shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return ad::Tensor::from(shape, std::move(v));
}

ad::Tensor SeededNoise::normal(const ad::Shape& shape, NoiseStream stream) {
  return normal_tensor(shape, stream == NoiseStream::encoder ? encoder_ : weights_);
}

ad::Tensor ReplayNoise::normal(const ad::Shape& shape, NoiseStream stream) {
  if (cursor_ < recorded_.size()) {
    const ad::Tensor& t = recorded_[cursor_++];
    if (t.shape() != shape) throw ad::ShapeError("ReplayNoise", t.shape(), shape, "replay diverged");
    return t;
  }
  recorded_.push_back(inner_.normal(shape, stream));
  ++cursor_;
  return recorded_.back();
}

}  // namespace cib::nn
