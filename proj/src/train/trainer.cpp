// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/train/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cib/autodiff/ops.hpp"
#include "cib/baselines/ct.hpp"
#include "cib/baselines/point.hpp"
#include "cib/common/kv.hpp"
#include "cib/model/cib_model.hpp"
#include "cib/nn/checkpoint.hpp"
#include "cib/train/optimizer.hpp"

namespace cib::train {

using ad::Shape;
using ad::Tensor;
using model::ExperimentConfig;
using model::ModelKind;

std::unique_ptr<model::Classifier> make_classifier(const ExperimentConfig& cfg, const Shape& sample_shape,
                                                   std::size_t num_classes) {
  nn::Rng rng(nn::derive_seed(cfg.seed, "init"));
  switch (cfg.model) {
    case ModelKind::cib: return std::make_unique<model::CIBModel>(cfg, sample_shape, num_classes, rng);
    case ModelKind::point: return std::make_unique<baselines::PointModel>(cfg, sample_shape, num_classes, rng);
    case ModelKind::ct: return std::make_unique<baselines::CTModel>(cfg, sample_shape, num_classes, rng);
  }
  throw std::logic_error("make_classifier: unknown model kind");
}

namespace {

Tensor with_shape(const Tensor& t, Shape shape) {
  return Tensor::from(std::move(shape), std::vector<double>(t.data().begin(), t.data().end()));
}

}  // namespace

model::ContextBatch make_batch(const data::Split& split, const std::vector<std::size_t>& indices,
                               const data::Split& pool, std::size_t n_contexts, const Shape& sample_shape,
                               int num_classes, nn::Rng& context_rng) {
  model::ContextBatch batch;
  batch.inputs = data::gather_inputs(split, sample_shape, indices);
  batch.input_labels = data::one_hot(split.labels, indices, num_classes);
  if (n_contexts == 0) return batch;
  if (pool.size() == 0) throw std::invalid_argument("make_batch: the context pool is empty");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<std::size_t> ctx(indices.size() * n_contexts);
  for (auto& c : ctx) c = pick(context_rng);
  Shape cs{indices.size(), n_contexts};
  cs.insert(cs.end(), sample_shape.begin(), sample_shape.end());
  batch.contexts = with_shape(data::gather_inputs(pool, sample_shape, ctx), cs);
  const auto k = static_cast<std::size_t>(num_classes);
  batch.context_labels = with_shape(data::one_hot(pool.labels, ctx, num_classes), {indices.size(), n_contexts, k});
  return batch;
}

Prediction predict(model::Classifier& m, const Tensor& inputs, const data::Split& pool, const Shape& sample_shape,
                   int num_classes, nn::Rng& context_rng, nn::NoiseSource& noise) {
  const std::size_t n = m.contexts_per_input();
  if (n > 0 && pool.size() == 0) throw std::invalid_argument("predict: the context pool is empty");
  ad::NoGradScope no_grad;
  model::ContextBatch batch;
  batch.inputs = inputs;
  const std::size_t b = inputs.size(0);
  const auto k = static_cast<std::size_t>(num_classes);
  batch.input_labels = Tensor::full({b, k}, 1.0 / static_cast<double>(k));
  if (n > 0) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::size_t> ctx(b * n);
    for (auto& c : ctx) c = pick(context_rng);
    Shape cs{b, n};
    cs.insert(cs.end(), sample_shape.begin(), sample_shape.end());
    batch.contexts = with_shape(data::gather_inputs(pool, sample_shape, ctx), cs);
    batch.context_labels = with_shape(data::one_hot(pool.labels, ctx, num_classes), {b, n, k});
  }
  Prediction out;
  out.probs = m.predict_probs(batch, noise);
  out.classes = model::argmax_rows(out.probs);
  return out;
}

namespace {

/// Chunks of `size` rows; a trailing single row joins the previous chunk so
/// batch statistics always see at least two rows.
std::vector<std::pair<std::size_t, std::size_t>> eval_chunks(std::size_t n, std::size_t size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t begin = 0; begin < n; begin += size) out.emplace_back(begin, std::min(n, begin + size));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

class ModeGuard {
 public:
  ModeGuard(model::Classifier& m, nn::BatchNormMode mode) : m_(m) { m_.set_batchnorm_mode(mode); }
  ~ModeGuard() { m_.set_batchnorm_mode(nn::BatchNormMode::train); }
  ModeGuard(const ModeGuard&) = delete;
  ModeGuard& operator=(const ModeGuard&) = delete;

 private:
  model::Classifier& m_;
};

}  // namespace

EvalResult evaluate(model::Classifier& m, const data::DatasetBundle& bundle, data::SplitId split, EvalMode mode,
                    const ExperimentConfig& cfg, std::uint64_t seed) {
  const data::Split& s = bundle.split(split);
  if (s.size() == 0) throw std::invalid_argument(std::string("evaluate: split ") + data::split_name(split) + " is empty");
  const Shape shape = bundle.spec.sample_shape();
  const int k = bundle.spec.num_classes;
  const auto tag = static_cast<std::uint64_t>(split);
  nn::Rng ctx_rng(nn::derive_seed(seed, "eval-contexts", tag));
  nn::SeededNoise noise(nn::derive_seed(seed, "eval-encoder-noise", tag), nn::derive_seed(seed, "eval-weight-noise", tag));
  ModeGuard guard(m, mode == EvalMode::iid ? nn::BatchNormMode::eval_iid : nn::BatchNormMode::eval_ood);
  const data::Split& pool = bundle.split(data::SplitId::train);

  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (auto [begin, end] : eval_chunks(s.size(), static_cast<std::size_t>(cfg.batch_size))) {
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    Prediction p = predict(m, data::gather_inputs(s, shape, idx), pool, shape, k, ctx_rng, noise);
    const Tensor labels = data::one_hot(s.labels, idx, k);
    loss_sum += model::clamped_cross_entropy(p.probs, labels).item() * static_cast<double>(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) correct += p.classes[r] == s.labels[idx[r]] ? 1 : 0;
  }
  EvalResult out;
  out.count = s.size();
  out.accuracy = static_cast<double>(correct) / static_cast<double>(s.size());
  out.loss = loss_sum / static_cast<double>(s.size());
  return out;
}

std::string RunMetrics::to_csv() const {
  std::ostringstream os;
  os << "epoch,step,train_total";
  for (const auto& t : term_names) os << ",train_" << t;
  os << ",val_iid_loss,val_iid_acc,val_ood_loss,val_ood_acc\n";
  auto d = [](double v) { return io::format_double(v); };
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.step << ',' << d(r.train_total);
    for (double v : r.train_terms) os << ',' << d(v);
    os << ',' << d(r.val_iid.loss) << ',' << d(r.val_iid.accuracy) << ',' << d(r.val_ood.loss) << ','
       << d(r.val_ood.accuracy) << '\n';
  }
  return os.str();
}

std::string RunMetrics::summary_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["seed"] = seed;
  j["total_steps"] = total_steps;
  j["evaluations"] = rows.size();
  j["best_val_loss"] = best_val_loss;
  j["best_step"] = best_step;
  j["overfitting_gap"] = overfitting_gap;
  j["steps_to_threshold"] = steps_to_threshold;
  j["test_iid"] = {{"accuracy", test_iid.accuracy}, {"loss", test_iid.loss}, {"count", test_iid.count}};
  j["test_ood"] = {{"accuracy", test_ood.accuracy}, {"loss", test_ood.loss}, {"count", test_ood.count}};
  return j.dump(2) + "\n";
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << contents;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string checkpoint_meta(const ExperimentConfig& cfg, const Shape& sample_shape, std::size_t num_classes) {
  std::string shape;
  for (std::size_t i = 0; i < sample_shape.size(); ++i) shape += (i ? "," : "") + std::to_string(sample_shape[i]);
  return cfg.to_kv() + "input_shape = " + shape + "\nnum_classes = " + std::to_string(num_classes) + "\n";
}

LoadedModel load_model(const std::filesystem::path& path) {
  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  std::istringstream is(ckpt.meta);
  LoadedModel out;
  std::vector<io::KvEntry> rest;
  bool have_shape = false;
  for (auto& e : io::parse_kv(is)) {
    if (e.key == "input_shape") {
      for (long v : io::parse_int_list(e.key, e.value)) {
        if (v <= 0) throw io::FieldError("input_shape", "dimensions must be positive");
        out.sample_shape.push_back(static_cast<std::size_t>(v));
      }
      have_shape = true;
    } else if (e.key == "num_classes") {
      out.num_classes = static_cast<std::size_t>(io::parse_int(e.key, e.value));
    } else {
      rest.push_back(std::move(e));
    }
  }
  if (!have_shape || out.num_classes < 2) {
    throw nn::CheckpointError("checkpoint meta lacks input_shape or num_classes: " + path.string());
  }
  out.config.apply(rest);
  out.config.validate();
  out.model = make_classifier(out.config, out.sample_shape, out.num_classes);
  nn::restore_params(ckpt, out.model->parameters());
  return out;
}

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const nn::ParamList& params) {
  Snapshot s;
  for (const auto& p : params) s.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return s;
}

void restore(const nn::ParamList& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    std::copy(s[i].begin(), s[i].end(), t.mutable_data().begin());
  }
}

nn::ParamList trainable_with_prefix(const nn::ParamList& params, const std::string& prefix) {
  nn::ParamList out;
  for (const auto& p : params) {
    if (p.trainable() && p.name.rfind(prefix, 0) == 0) out.push_back(p);
  }
  return out;
}

std::string where(int epoch, std::int64_t step) {
  return " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ")";
}

/// One optimizer step on `loss_fn`'s breakdown. Returns the breakdown values.
template <typename LossFn>
model::LossBreakdown optimize_step(LossFn&& loss_fn, const nn::ParamList& params, Optimizer& opt,
                                   model::Classifier& m, int epoch, std::int64_t step) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  ad::Tape tape;
  ad::TapeScope scope(tape);
  model::LossBreakdown loss;
  try {
    loss = loss_fn();
  } catch (const ad::NonFiniteError& e) {
    throw DivergenceError(std::string("non-finite value in op ") + e.what() + where(epoch, step));
  }
  for (const auto& term : loss.terms) {
    if (!std::isfinite(term.value.item())) {
      throw DivergenceError("non-finite loss term " + term.name + where(epoch, step));
    }
  }
  if (!std::isfinite(loss.total.item())) throw DivergenceError("non-finite total loss" + where(epoch, step));
  if (loss.total.item() != loss.accounted_total()) {
    throw std::logic_error("loss accounting mismatch: total != weighted sum of components" + where(epoch, step));
  }
  try {
    tape.backward(loss.total);
  } catch (const ad::NonFiniteError& e) {
    throw DivergenceError(std::string("non-finite gradient in op ") + e.what() + where(epoch, step));
  }
  for (const auto& p : params) {
    if (!p.trainable() || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient for parameter " + p.name + where(epoch, step));
    }
  }
  opt.step(params);
  m.clamp_log_var();
  for (const auto& p : params) {
    if (!p.trainable()) continue;
    for (double v : p.tensor.data()) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite value in parameter " + p.name + where(epoch, step));
    }
  }
  return loss;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, nn::Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    if (end - begin < 2) break;  // batch statistics need two rows
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(begin), perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace

RunMetrics train(model::Classifier& m, const data::DatasetBundle& bundle, const ExperimentConfig& cfg,
                 const TrainOptions& options) {
  cfg.validate();
  const Shape shape = bundle.spec.sample_shape();
  const int k = bundle.spec.num_classes;
  const data::Split& train_split = bundle.split(data::SplitId::train);
  if (train_split.size() < 2) throw std::invalid_argument("train: the train split needs at least 2 rows");
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_ctx = m.contexts_per_input();
  m.set_batchnorm_mode(nn::BatchNormMode::train);

  RunMetrics rm;
  rm.seed = cfg.seed;
  rm.model = model::model_name(cfg.model);

  // Stage 1 of the ct baseline: the VAE alone on reconstruction.
  if (auto* ct = dynamic_cast<baselines::CTModel*>(&m); ct && cfg.pretrain_epochs > 0) {
    const nn::ParamList vae = trainable_with_prefix(m.parameters(), "vae.");
    Optimizer pre_opt(cfg.optimizer, cfg.effective_lr(), cfg.weight_decay);
    std::int64_t pre_step = 0;
    for (int epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
      nn::Rng shuffle(nn::derive_seed(cfg.seed, "pretrain-shuffle", static_cast<std::uint64_t>(epoch)));
      nn::SeededNoise noise(nn::derive_seed(cfg.seed, "pretrain-noise", static_cast<std::uint64_t>(epoch)));
      for (const auto& idx : epoch_batches(train_split.size(), batch_size, shuffle)) {
        const Tensor x = data::gather_inputs(train_split, shape, idx);
        optimize_step([&] { return ct->pretrain_loss(x, noise); }, vae, pre_opt, m, -epoch, ++pre_step);
      }
    }
  }
  if (auto* ct = dynamic_cast<baselines::CTModel*>(&m)) ct->set_vae_frozen(cfg.freeze_vae);

  const nn::ParamList params = m.parameters();
  Optimizer opt(cfg.optimizer, cfg.effective_lr(), cfg.weight_decay);
  Snapshot best;
  double best_loss = std::numeric_limits<double>::infinity();
  double min_val = std::numeric_limits<double>::infinity();
  double acc_total = 0.0;
  std::vector<double> acc_terms;
  std::size_t acc_count = 0;
  std::int64_t step = 0;

  auto record = [&](int epoch) {
    MetricsRow row;
    row.epoch = epoch;
    row.step = step;
    const double denom = acc_count ? static_cast<double>(acc_count) : 1.0;
    row.train_total = acc_total / denom;
    for (double v : acc_terms) row.train_terms.push_back(v / denom);
    row.val_iid = evaluate(m, bundle, data::SplitId::val_iid, EvalMode::iid, cfg, cfg.seed);
    row.val_ood = evaluate(m, bundle, data::SplitId::val_ood, EvalMode::ood, cfg, cfg.seed);
    acc_total = 0.0;
    std::fill(acc_terms.begin(), acc_terms.end(), 0.0);
    acc_count = 0;
    min_val = std::min(min_val, row.val_iid.loss);
    if (row.val_iid.loss < best_loss) {
      best_loss = row.val_iid.loss;
      rm.best_step = step;
      best = snapshot(params);
    }
    if (rm.steps_to_threshold < 0 && row.val_iid.accuracy >= cfg.accuracy_threshold) rm.steps_to_threshold = step;
    if (options.log) {
      *options.log << "epoch " << epoch << " step " << step << " train " << io::format_double(row.train_total)
                   << " val_iid acc " << io::format_double(row.val_iid.accuracy) << " loss "
                   << io::format_double(row.val_iid.loss) << " val_ood acc " << io::format_double(row.val_ood.accuracy)
                   << '\n';
    }
    rm.rows.push_back(std::move(row));
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    nn::Rng shuffle(nn::derive_seed(cfg.seed, "shuffle", e));
    nn::Rng ctx_rng(nn::derive_seed(cfg.seed, "contexts", e));
    nn::SeededNoise noise(nn::derive_seed(cfg.seed, "encoder-noise", e), nn::derive_seed(cfg.seed, "weight-noise", e));
    for (const auto& idx : epoch_batches(train_split.size(), batch_size, shuffle)) {
      const model::ContextBatch batch = make_batch(train_split, idx, train_split, n_ctx, shape, k, ctx_rng);
      ++step;
      model::LossBreakdown loss =
          optimize_step([&] { return m.training_loss(batch, noise); }, params, opt, m, epoch, step);
      if (rm.term_names.empty()) {
        for (const auto& t : loss.terms) rm.term_names.push_back(t.name);
        acc_terms.assign(loss.terms.size(), 0.0);
      }
      acc_total += loss.total.item();
      for (std::size_t i = 0; i < loss.terms.size(); ++i) acc_terms[i] += loss.terms[i].value.item();
      ++acc_count;
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0) record(epoch);
    }
    if (cfg.eval_every == 0) record(epoch);
  }
  if (cfg.eval_every > 0 && (rm.rows.empty() || rm.rows.back().step != step) && step > 0) record(cfg.epochs);
  rm.total_steps = step;

  if (!rm.rows.empty()) {
    rm.best_val_loss = best_loss;
    rm.overfitting_gap = rm.rows.back().val_iid.loss - min_val;
    restore(params, best);
  }
  rm.test_iid = evaluate(m, bundle, data::SplitId::test_iid, EvalMode::iid, cfg, cfg.seed);
  rm.test_ood = evaluate(m, bundle, data::SplitId::test_ood, EvalMode::ood, cfg, cfg.seed);

  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    write_file_atomic(options.out_dir / "metrics.csv", rm.to_csv());
    nn::save_checkpoint(options.out_dir / "model.ckpt", params, checkpoint_meta(cfg, shape, static_cast<std::size_t>(k)));
    write_file_atomic(options.out_dir / "config.resolved", cfg.to_kv());
    write_file_atomic(options.out_dir / "summary.json", rm.summary_json());
  }
  return rm;
}

std::vector<SweepCell> sweep(const ExperimentConfig& base, const data::DatasetBundle& bundle,
                             const std::vector<int>& n_values, const std::vector<int>& m_values,
                             const std::vector<std::uint64_t>& seeds, int jobs) {
  std::vector<SweepCell> cells;
  for (int n : n_values) {
    for (int mv : m_values) {
      for (std::uint64_t s : seeds) {
        SweepCell c;
        c.N = n;
        c.M = mv;
        c.seed = s;
        cells.push_back(c);
      }
    }
  }
  for (const auto& c : cells) {
    ExperimentConfig cfg = base;
    cfg.N = c.N;
    cfg.M = c.M;
    cfg.validate();
  }
  auto run = [&](SweepCell& c) {
    ExperimentConfig cfg = base;
    cfg.N = c.N;
    cfg.M = c.M;
    cfg.seed = c.seed;
    auto model = make_classifier(cfg, bundle.spec.sample_shape(), static_cast<std::size_t>(bundle.spec.num_classes));
    RunMetrics rm = train(*model, bundle, cfg);
    c.accuracy = rm.test_iid.accuracy;
    c.ood_accuracy = rm.test_ood.accuracy;
    c.steps_to_threshold = rm.steps_to_threshold;
    c.overfitting_gap = rm.overfitting_gap;
  };
  const std::size_t workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1) {
    for (auto& c : cells) run(c);
    return cells;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cells.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, cells.size()); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        try {
          run(cells[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return cells;
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "N,M,seed,accuracy,ood_accuracy,steps_to_threshold,overfitting_gap\n";
  for (const auto& c : cells) {
    os << c.N << ',' << c.M << ',' << c.seed << ',' << io::format_double(c.accuracy) << ','
       << io::format_double(c.ood_accuracy) << ',' << c.steps_to_threshold << ','
       << io::format_double(c.overfitting_gap) << '\n';
  }
  return os.str();
}

}  // namespace cib::train
