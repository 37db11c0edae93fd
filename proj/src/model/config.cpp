// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/model/config.hpp"

#include <sstream>

namespace cib::model {

using io::FieldError;

const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::cib: return "cib";
    case ModelKind::point: return "point";
    case ModelKind::ct: return "ct";
  }
  return "?";
}

ModelKind parse_model(const std::string& s) {
  if (s == "cib") return ModelKind::cib;
  if (s == "point") return ModelKind::point;
  if (s == "ct") return ModelKind::ct;
  throw FieldError("model", "expected cib, point or ct, got '" + s + "'");
}

const char* encoder_name(EncoderKind k) { return k == EncoderKind::mlp ? "mlp" : "cnn"; }

double ExperimentConfig::effective_lr() const {
  if (lr) return *lr;
  return model == ModelKind::cib ? 0.01 : 0.005;
}

void ExperimentConfig::validate() const {
  auto at_least = [](const char* f, long v, long lo) {
    if (v < lo) throw FieldError(f, "must be >= " + std::to_string(lo) + ", got " + std::to_string(v));
  };
  auto non_negative = [](const char* f, double v) {
    if (!(v >= 0.0)) throw FieldError(f, "must be >= 0, got " + io::format_double(v));
  };
  at_least("N", N, 1);
  at_least("M", M, 1);
  if (M > 64) throw FieldError("M", "at most 64 weight samples are supported (pairwise cost), got " + std::to_string(M));
  at_least("L", L, 1);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw FieldError("alpha", "must be in [0, 1], got " + io::format_double(alpha));
  non_negative("beta", beta);
  non_negative("gamma", gamma);
  non_negative("mu_c", mu_c);
  non_negative("epsilon", epsilon);
  if (lr) non_negative("lr", *lr);
  non_negative("weight_decay", weight_decay);
  at_least("batch_size", batch_size, 2);
  at_least("epochs", epochs, 0);
  at_least("repr_dim", repr_dim, 1);
  at_least("hidden", hidden, 1);
  at_least("encoder_hidden", encoder_hidden, 1);
  at_least("conv_channels", conv_channels, 1);
  if (!(init_log_var >= -10.0 && init_log_var <= 10.0)) throw FieldError("init_log_var", "must be in [-10, 10]");
  non_negative("recon_weight", recon_weight);
  non_negative("kl_weight", kl_weight);
  if (model == ModelKind::ct && recon_weight == 0.0 && kl_weight == 0.0) {
    throw FieldError("recon_weight", "ct model needs recon_weight or kl_weight > 0 to train its encoder");
  }
  at_least("pretrain_epochs", pretrain_epochs, 0);
  if (!(accuracy_threshold >= 0.0 && accuracy_threshold <= 1.0)) {
    throw FieldError("accuracy_threshold", "must be in [0, 1]");
  }
  at_least("eval_every", eval_every, 0);
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto as_int = [&](long lo, long hi) {
    const auto v = io::parse_int(key, value);
    if (v < lo || v > hi) throw FieldError(key, "out of range: " + value);
    return static_cast<int>(v);
  };
  auto as_double = [&] { return io::parse_double(key, value); };
  constexpr long big = 100000000;
  if (key == "N") N = as_int(-big, big);
  else if (key == "M") M = as_int(-big, big);
  else if (key == "L") L = as_int(-big, big);
  else if (key == "alpha") alpha = as_double();
  else if (key == "beta") beta = as_double();
  else if (key == "gamma") gamma = as_double();
  else if (key == "mu_c") mu_c = as_double();
  else if (key == "epsilon") epsilon = as_double();
  else if (key == "lr") lr = as_double();
  else if (key == "optimizer") {
    if (value == "adamw") optimizer = OptimizerKind::adamw;
    else if (value == "sgd") optimizer = OptimizerKind::sgd;
    else throw FieldError(key, "expected adamw or sgd, got '" + value + "'");
  }
  else if (key == "weight_decay") weight_decay = as_double();
  else if (key == "batch_size") batch_size = as_int(-big, big);
  else if (key == "epochs") epochs = as_int(-big, big);
  else if (key == "seed") seed = io::parse_uint64(key, value);
  else if (key == "model") model = parse_model(value);
  else if (key == "encoder") {
    if (value == "mlp") encoder = EncoderKind::mlp;
    else if (value == "cnn") encoder = EncoderKind::cnn;
    else throw FieldError(key, "expected mlp or cnn, got '" + value + "'");
  }
  else if (key == "repr_dim") repr_dim = as_int(-big, big);
  else if (key == "hidden") hidden = as_int(-big, big);
  else if (key == "encoder_hidden") encoder_hidden = as_int(-big, big);
  else if (key == "conv_channels") conv_channels = as_int(-big, big);
  else if (key == "init_log_var") init_log_var = as_double();
  else if (key == "recon_weight") recon_weight = as_double();
  else if (key == "kl_weight") kl_weight = as_double();
  else if (key == "pretrain_epochs") pretrain_epochs = as_int(-big, big);
  else if (key == "freeze_vae") freeze_vae = io::parse_bool(key, value);
  else if (key == "accuracy_threshold") accuracy_threshold = as_double();
  else if (key == "eval_every") eval_every = as_int(-big, big);
  else if (key == "dataset") dataset = value;
  else throw FieldError(key, "unknown key");
}

void ExperimentConfig::apply(const std::vector<io::KvEntry>& entries) {
  for (const auto& e : entries) set(e.key, e.value);
}

std::string ExperimentConfig::to_kv() const {
  std::ostringstream os;
  auto d = [](double v) { return io::format_double(v); };
  os << "model = " << model_name(model) << '\n'
     << "encoder = " << encoder_name(encoder) << '\n'
     << "N = " << N << '\n'
     << "M = " << M << '\n'
     << "L = " << L << '\n'
     << "alpha = " << d(alpha) << '\n'
     << "beta = " << d(beta) << '\n'
     << "gamma = " << d(gamma) << '\n'
     << "mu_c = " << d(mu_c) << '\n'
     << "epsilon = " << d(epsilon) << '\n'
     << "lr = " << d(effective_lr()) << '\n'
     << "optimizer = " << (optimizer == OptimizerKind::adamw ? "adamw" : "sgd") << '\n'
     << "weight_decay = " << d(weight_decay) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "epochs = " << epochs << '\n'
     << "seed = " << seed << '\n'
     << "repr_dim = " << repr_dim << '\n'
     << "hidden = " << hidden << '\n'
     << "encoder_hidden = " << encoder_hidden << '\n'
     << "conv_channels = " << conv_channels << '\n'
     << "init_log_var = " << d(init_log_var) << '\n'
     << "recon_weight = " << d(recon_weight) << '\n'
     << "kl_weight = " << d(kl_weight) << '\n'
     << "pretrain_epochs = " << pretrain_epochs << '\n'
     << "freeze_vae = " << (freeze_vae ? "true" : "false") << '\n'
     << "accuracy_threshold = " << d(accuracy_threshold) << '\n'
     << "eval_every = " << eval_every << '\n';
  if (!dataset.empty()) os << "dataset = " << dataset << '\n';
  return os.str();
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig c;
  c.apply(io::load_kv(path));
  c.validate();
  return c;
}

}  // namespace cib::model
