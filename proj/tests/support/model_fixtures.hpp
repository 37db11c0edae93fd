// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random batches and noise helpers shared by the model tests.

#pragma once

#include <random>
#include <vector>

#include "cib/model/classifier.hpp"
#include "cib/nn/random.hpp"

namespace cib::testing {

inline ad::Tensor random_one_hot(std::size_t rows, std::size_t k, nn::Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  std::vector<double> v(rows * k, 0.0);
  for (std::size_t r = 0; r < rows; ++r) v[r * k + pick(rng)] = 1.0;
  return ad::Tensor::from({rows, k}, std::move(v));
}

/// Inputs [B, sample...] and contexts [B, N, sample...] drawn from N(0, 1).
inline model::ContextBatch random_batch(std::size_t b, std::size_t n, const ad::Shape& sample, std::size_t k,
                                        nn::Rng& rng) {
  model::ContextBatch batch;
  ad::Shape in{b};
  in.insert(in.end(), sample.begin(), sample.end());
  batch.inputs = nn::normal_tensor(in, rng);
  batch.input_labels = random_one_hot(b, k, rng);
  if (n > 0) {
    ad::Shape cs{b, n};
    cs.insert(cs.end(), sample.begin(), sample.end());
    batch.contexts = nn::normal_tensor(cs, rng);
    const ad::Tensor flat = random_one_hot(b * n, k, rng);
    batch.context_labels = ad::Tensor::from({b, n, k}, std::vector<double>(flat.data().begin(), flat.data().end()));
  }
  return batch;
}

/// Zero encoder noise, seeded weight noise.
class WeightOnlyNoise final : public nn::NoiseSource {
 public:
  explicit WeightOnlyNoise(std::uint64_t seed) : rng_(seed) {}
  ad::Tensor normal(const ad::Shape& shape, nn::NoiseStream stream) override {
    if (stream == nn::NoiseStream::encoder) return ad::Tensor::zeros(shape);
    return nn::normal_tensor(shape, rng_);
  }

 private:
  nn::Rng rng_;
};

inline void fill(ad::Tensor& t, double value) {
  for (double& x : t.mutable_data()) x = value;
}

inline void copy_into(ad::Tensor& dst, const ad::Tensor& src) {
  auto d = dst.mutable_data();
  const auto s = src.data();
  std::copy(s.begin(), s.end(), d.begin());
}

}  // namespace cib::testing
