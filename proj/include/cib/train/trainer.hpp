// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop, evaluation in i.i.d / o.o.d batch-norm modes, run metrics
// and the N x M sweep.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cib/data/dataset.hpp"
#include "cib/model/classifier.hpp"
#include "cib/model/config.hpp"

namespace cib::train {

/// Training produced a NaN/Inf; the message names the first offending tensor.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds the model selected by cfg.model, initialized from cfg.seed.
std::unique_ptr<model::Classifier> make_classifier(const model::ExperimentConfig& cfg, const ad::Shape& sample_shape,
                                                   std::size_t num_classes);

/// Gathers rows `indices` of `split` and, when n_contexts > 0, draws that many
/// contexts per row uniformly (with replacement) from `pool`.
model::ContextBatch make_batch(const data::Split& split, const std::vector<std::size_t>& indices,
                               const data::Split& pool, std::size_t n_contexts, const ad::Shape& sample_shape,
                               int num_classes, nn::Rng& context_rng);

struct Prediction {
  std::vector<std::size_t> classes;  // argmax, ties to the lowest index
  ad::Tensor probs;                  // [B, K]
};

/// Classifies `inputs` [B, ...] with contexts sampled from `pool` (the
/// training split). Throws std::invalid_argument for an empty pool.
Prediction predict(model::Classifier& m, const ad::Tensor& inputs, const data::Split& pool,
                   const ad::Shape& sample_shape, int num_classes, nn::Rng& context_rng, nn::NoiseSource& noise);

enum class EvalMode { iid, ood };

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy against the true labels
  std::size_t count = 0;
};

/// Sets batch norm to eval_iid or eval_ood, predicts every row of the split
/// in chunks of cfg.batch_size and restores train mode. Contexts and noise
/// come from fixed substreams of `seed`, so repeated calls agree.
EvalResult evaluate(model::Classifier& m, const data::DatasetBundle& bundle, data::SplitId split, EvalMode mode,
                    const model::ExperimentConfig& cfg, std::uint64_t seed);

struct MetricsRow {
  int epoch = 0;
  std::int64_t step = 0;
  double train_total = 0.0;          // mean over steps since the previous row
  std::vector<double> train_terms;   // same order as RunMetrics::term_names
  EvalResult val_iid;
  EvalResult val_ood;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  std::string model;
  std::vector<std::string> term_names;
  std::vector<MetricsRow> rows;
  std::int64_t total_steps = 0;
  double best_val_loss = 0.0;
  std::int64_t best_step = 0;
  double overfitting_gap = 0.0;           // final val_iid loss minus its minimum
  std::int64_t steps_to_threshold = -1;   // first evaluated step with val_iid accuracy >= threshold
  EvalResult test_iid;                    // best-val parameters, eval_iid mode
  EvalResult test_ood;                    // best-val parameters, eval_ood mode

  /// Columns: epoch, step, train_total, train_<term>..., val_iid_loss,
  /// val_iid_acc, val_ood_loss, val_ood_acc.
  std::string to_csv() const;
  std::string summary_json() const;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: write nothing
  std::ostream* log = nullptr;
};

/// Trains `m` on the bundle's train split. Keeps the parameters with the
/// lowest val_iid loss and restores them before the test evaluation. Writes
/// metrics.csv, model.ckpt, config.resolved and summary.json into out_dir.
RunMetrics train(model::Classifier& m, const data::DatasetBundle& bundle, const model::ExperimentConfig& cfg,
                 const TrainOptions& options = {});

/// Checkpoint meta block: the resolved config plus input shape and class count.
std::string checkpoint_meta(const model::ExperimentConfig& cfg, const ad::Shape& sample_shape, std::size_t num_classes);

struct LoadedModel {
  model::ExperimentConfig config;
  ad::Shape sample_shape;
  std::size_t num_classes = 0;
  std::unique_ptr<model::Classifier> model;
};

/// Rebuilds the model described by a checkpoint's meta and restores its tensors.
LoadedModel load_model(const std::filesystem::path& path);

struct SweepCell {
  int N = 0;
  int M = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;       // test_iid
  double ood_accuracy = 0.0;   // test_ood, batch statistics
  std::int64_t steps_to_threshold = -1;
  double overfitting_gap = 0.0;
};

/// Trains one model per (N, M, seed), row-major over N then M then seed.
/// `jobs` > 1 runs cells on that many threads; results do not depend on it.
std::vector<SweepCell> sweep(const model::ExperimentConfig& base, const data::DatasetBundle& bundle,
                             const std::vector<int>& n_values, const std::vector<int>& m_values,
                             const std::vector<std::uint64_t>& seeds, int jobs = 1);

std::string sweep_csv(const std::vector<SweepCell>& cells);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace cib::train
