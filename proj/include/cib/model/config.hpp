// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run hyperparameters shared by the models, the trainer and the CLI.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cib/common/kv.hpp"

namespace cib::model {

enum class ModelKind { cib, point, ct };
enum class EncoderKind { mlp, cnn };
enum class OptimizerKind { adamw, sgd };

const char* model_name(ModelKind k);
ModelKind parse_model(const std::string& s);
const char* encoder_name(EncoderKind k);

struct ExperimentConfig {
  // Sampling.
  int N = 16;  // context samples
  int M = 16;  // weight samples
  int L = 1;   // representation samples
  // Loss weights.
  double alpha = 0.4;
  double beta = 0.01;
  double gamma = 1e-6;
  double mu_c = 1e-6;
  double epsilon = 1e-6;
  // Optimization. lr defaults to 0.01 for cib and 0.005 for baselines.
  std::optional<double> lr;
  OptimizerKind optimizer = OptimizerKind::adamw;
  double weight_decay = 0.01;
  int batch_size = 64;
  int epochs = 50;
  std::uint64_t seed = 0;
  // Architecture.
  ModelKind model = ModelKind::cib;
  EncoderKind encoder = EncoderKind::mlp;
  int repr_dim = 16;
  int hidden = 64;          // inference network width
  int encoder_hidden = 64;  // encoder width (mlp) or dense head width (cnn)
  int conv_channels = 8;
  double init_log_var = -6.0;
  // Causal-transportability baseline.
  double recon_weight = 1.0;
  double kl_weight = 1e-3;
  int pretrain_epochs = 0;
  bool freeze_vae = false;
  // Evaluation.
  double accuracy_threshold = 0.7;
  int eval_every = 0;  // steps between validations; 0 = once per epoch
  std::string dataset;  // optional bundle path

  double effective_lr() const;
  /// Throws io::FieldError naming the first invalid field.
  void validate() const;
  /// Applies entries; unknown keys throw io::FieldError.
  void apply(const std::vector<io::KvEntry>& entries);
  void set(const std::string& key, const std::string& value);
  std::string to_kv() const;
};

ExperimentConfig load_config(const std::string& path);

}  // namespace cib::model
