// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic confounded datasets. Each sample has an invariant factor z_r that
// determines its class and a nuisance factor z_s whose class agrees with the
// label at a split-dependent rate.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cib/autodiff/tensor.hpp"
#include "cib/common/kv.hpp"

namespace cib::data {

enum class RenderKind : std::uint32_t { vector = 0, image = 1 };

struct ConfoundedSpec {
  int num_classes = 4;
  int invariant_dim = 4;
  int nuisance_dim = 4;
  double train_correlation = 0.9;
  double ood_correlation = -0.9;
  int n_train = 10000;
  int n_val_iid = 1000;
  int n_test_iid = 1000;
  int n_val_ood = 1000;
  int n_test_ood = 1000;
  double noise_std = 1.0;
  double invariant_separation = 3.0;
  double nuisance_separation = 3.0;
  RenderKind render = RenderKind::vector;
  int channels = 3;  // image render only
  int height = 16;
  int width = 16;

  /// Throws io::FieldError naming the first invalid field.
  void validate() const;
  /// Per-sample input shape: [D] or [C, H, W].
  ad::Shape sample_shape() const;
  std::size_t sample_numel() const { return ad::shape_numel(sample_shape()); }

  /// Applies `key = value` entries; unknown keys throw io::FieldError.
  void apply(const std::vector<io::KvEntry>& entries);
  std::string to_kv() const;
};

ConfoundedSpec load_spec(const std::string& path);

enum class SplitId { train = 0, val_iid, test_iid, val_ood, test_ood };
inline constexpr std::array<SplitId, 5> kAllSplits = {SplitId::train, SplitId::val_iid, SplitId::test_iid,
                                                      SplitId::val_ood, SplitId::test_ood};
const char* split_name(SplitId s);
SplitId parse_split(const std::string& name);

struct Split {
  std::vector<float> inputs;            // size() * sample_numel, row-major
  std::vector<std::uint16_t> labels;
  // Generation-time latents; not stored in bundle files.
  std::vector<std::uint16_t> nuisance_class;
  std::vector<double> z_r;              // size() * invariant_dim
  std::vector<double> z_s;              // size() * nuisance_dim

  std::size_t size() const { return labels.size(); }
};

struct DatasetBundle {
  ConfoundedSpec spec;
  std::uint64_t seed = 0;
  std::array<Split, 5> splits;

  Split& split(SplitId s) { return splits[static_cast<std::size_t>(s)]; }
  const Split& split(SplitId s) const { return splits[static_cast<std::size_t>(s)]; }
  /// Equality of spec, seed, inputs and labels (bitwise on the floats).
  bool same_payload(const DatasetBundle& other) const;
};

DatasetBundle gen_confounded(const ConfoundedSpec& spec, std::uint64_t seed);

/// (K * P(nuisance == label) - 1) / (K - 1); equals the Pearson correlation for K = 2.
double label_nuisance_agreement(const Split& s, int num_classes);

/// Rows `indices` of a split as a [n, ...sample_shape] tensor.
ad::Tensor gather_inputs(const Split& s, const ad::Shape& sample_shape, const std::vector<std::size_t>& indices);
ad::Tensor one_hot(const std::vector<std::uint16_t>& labels, const std::vector<std::size_t>& indices, int num_classes);

// ---- perturbation ----

struct ImageShape {
  std::size_t channels, height, width;
};

/// Shifts one image down by dy rows and right by dx columns, zero filling.
std::vector<float> shift_image(const float* img, const ImageShape& shape, int dy, int dx);

struct Offset {
  int dy = 0, dx = 0;
};

/// Shifts each of the `count` images by offsets drawn uniformly from
/// [-round(level*H), round(level*H)] x [-round(level*W), round(level*W)].
std::vector<float> translate_perturb(const std::vector<float>& images, std::size_t count, const ImageShape& shape,
                                     double level, std::uint64_t seed, std::vector<Offset>* offsets = nullptr);
/// Perturbs a split of an image bundle in place. Vector bundles are rejected.
void translate_perturb_split(DatasetBundle& bundle, SplitId s, double level, std::uint64_t seed);

// ---- contexts ----

/// `n` distinct indices drawn uniformly from [0, pool). Throws when n > pool.
std::vector<std::size_t> sample_context_indices(std::size_t pool, std::size_t n, std::uint64_t seed);

// ---- bundle files ----

inline constexpr std::uint32_t kBundleVersion = 1;

class BundleFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVersionError : public BundleFormatError {
 public:
  using BundleFormatError::BundleFormatError;
};

void write_bundle(std::ostream& os, const DatasetBundle& b);
DatasetBundle read_bundle(std::istream& is);
void save_bundle(const std::filesystem::path& path, const DatasetBundle& b);
DatasetBundle load_bundle(const std::filesystem::path& path);

}  // namespace cib::data
