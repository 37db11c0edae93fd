// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded randomness. Every stochastic component draws from a named substream
// derived from one master seed, so runs replay exactly.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "cib/autodiff/tensor.hpp"

namespace cib::nn {

using Rng = std::mt19937_64;

/// Deterministic seed for substream `name` (and an optional index such as an
/// epoch number) of `master`.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

ad::Tensor normal_tensor(const ad::Shape& shape, Rng& rng, double mean = 0.0, double stddev = 1.0);
ad::Tensor uniform_tensor(const ad::Shape& shape, Rng& rng, double lo, double hi);

enum class NoiseStream { encoder, weights };

/// Source of standard-normal noise for reparameterized sampling.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual ad::Tensor normal(const ad::Shape& shape, NoiseStream stream) = 0;
};

class SeededNoise final : public NoiseSource {
 public:
  SeededNoise(std::uint64_t encoder_seed, std::uint64_t weight_seed)
      : encoder_(encoder_seed), weights_(weight_seed) {}
  explicit SeededNoise(std::uint64_t master)
      : SeededNoise(derive_seed(master, "encoder-noise"), derive_seed(master, "weight-noise")) {}

  ad::Tensor normal(const ad::Shape& shape, NoiseStream stream) override;

 private:
  Rng encoder_;
  Rng weights_;
};

class ZeroNoise final : public NoiseSource {
 public:
  ad::Tensor normal(const ad::Shape& shape, NoiseStream) override { return ad::Tensor::zeros(shape); }
};

/// Records the draws of an inner source on first use, then replays them
/// after rewind(). Used to hold noise fixed across repeated evaluations.
class ReplayNoise final : public NoiseSource {
 public:
  explicit ReplayNoise(NoiseSource& inner) : inner_(inner) {}

  ad::Tensor normal(const ad::Shape& shape, NoiseStream stream) override;
  void rewind() { cursor_ = 0; }

 private:
  NoiseSource& inner_;
  std::vector<ad::Tensor> recorded_;
  std::size_t cursor_ = 0;
};

}  // namespace cib::nn
