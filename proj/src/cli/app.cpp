// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/cli/app.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "cib/causal/docalculus.hpp"
#include "cib/causal/graph.hpp"
#include "cib/causal/scm.hpp"
#include "cib/common/kv.hpp"
#include "cib/data/dataset.hpp"
#include "cib/nn/checkpoint.hpp"
#include "cib/train/trainer.hpp"

namespace cib::cli {

namespace {

namespace fs = std::filesystem;

/// Error the caller should report with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

struct RunFlags {
  std::string config;
  std::string model;
  std::vector<std::string> sets;
  std::int64_t seed = -1;
  int epochs = -1;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "flat key = value config file");
  cmd->add_option("--seed", f.seed, "master seed (overrides the config)");
  cmd->add_option("--epochs", f.epochs, "training epochs (overrides the config)");
  cmd->add_option("--set", f.sets, "extra override key=value; repeatable");
}

model::ExperimentConfig resolve_config(const RunFlags& f) {
  model::ExperimentConfig cfg;
  if (!f.config.empty()) {
    require_file(f.config, "config file");
    cfg.apply(io::load_kv(f.config));
  }
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t");
      const auto e = v.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (!f.model.empty()) cfg.model = model::parse_model(f.model);
  if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
  if (f.epochs >= 0) cfg.epochs = f.epochs;
  cfg.validate();
  return cfg;
}

data::DatasetBundle load_data(const std::string& path) {
  require_file(path, "data file");
  try {
    return data::load_bundle(path);
  } catch (const data::BundleFormatError& e) {
    throw UsageError(std::string("cannot read data file ") + path + ": " + e.what());
  }
}

std::vector<int> parse_positive_list(const std::string& flag, const std::string& text) {
  std::vector<int> out;
  for (long v : io::parse_int_list(flag, text)) {
    if (v < 1) throw io::FieldError(flag, "values must be >= 1");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path, std::uint64_t seed, std::ostream& out) {
  data::ConfoundedSpec spec;
  if (!spec_path.empty()) {
    require_file(spec_path, "spec file");
    spec = data::load_spec(spec_path);
  }
  spec.validate();
  data::DatasetBundle b = data::gen_confounded(spec, seed);
  data::save_bundle(out_path, b);
  out << "wrote " << out_path << '\n';
  for (auto id : data::kAllSplits) {
    const auto& s = b.split(id);
    out << data::split_name(id) << ": " << s.size() << " samples, label-nuisance correlation "
        << io::format_double(data::label_nuisance_agreement(s, spec.num_classes)) << '\n';
  }
  return kExitOk;
}

int cmd_train(const RunFlags& flags, const std::string& data_path, const std::string& out_dir, std::ostream& out) {
  const model::ExperimentConfig cfg = resolve_config(flags);
  const data::DatasetBundle bundle = load_data(data_path);
  auto m = train::make_classifier(cfg, bundle.spec.sample_shape(), static_cast<std::size_t>(bundle.spec.num_classes));
  train::TrainOptions opts;
  opts.out_dir = out_dir;
  opts.log = &out;
  const train::RunMetrics rm = train::train(*m, bundle, cfg, opts);
  out << "best_val_loss=" << io::format_double(rm.best_val_loss) << '\n'
      << "overfitting_gap=" << io::format_double(rm.overfitting_gap) << '\n'
      << "steps_to_threshold=" << rm.steps_to_threshold << '\n'
      << "test_iid_accuracy=" << io::format_double(rm.test_iid.accuracy) << '\n'
      << "test_ood_accuracy=" << io::format_double(rm.test_ood.accuracy) << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, const std::string& split_name,
             bool ood_batchstats, std::ostream& out) {
  require_file(ckpt_path, "checkpoint");
  const data::SplitId split = data::parse_split(split_name);
  const data::DatasetBundle bundle = load_data(data_path);
  train::LoadedModel lm = train::load_model(ckpt_path);
  const ad::Shape data_shape = bundle.spec.sample_shape();
  if (lm.sample_shape != data_shape || lm.num_classes != static_cast<std::size_t>(bundle.spec.num_classes)) {
    throw UsageError("shape mismatch: checkpoint expects input " + ad::shape_str(lm.sample_shape) + " with " +
                     std::to_string(lm.num_classes) + " classes, data has " + ad::shape_str(data_shape) + " with " +
                     std::to_string(bundle.spec.num_classes));
  }
  const auto mode = ood_batchstats ? train::EvalMode::ood : train::EvalMode::iid;
  const train::EvalResult r = train::evaluate(*lm.model, bundle, split, mode, lm.config, lm.config.seed);
  out << "split=" << data::split_name(split) << '\n'
      << "batchnorm=" << (ood_batchstats ? "batch" : "running") << '\n'
      << "samples=" << r.count << '\n'
      << "loss=" << io::format_double(r.loss) << '\n'
      << "accuracy=" << io::format_double(r.accuracy) << '\n';
  return kExitOk;
}

int cmd_sweep(const RunFlags& flags, const std::string& data_path, const std::string& contexts,
              const std::string& weights, int seeds, const std::string& out_path, int jobs, std::ostream& out) {
  const model::ExperimentConfig cfg = resolve_config(flags);
  const std::vector<int> ns = parse_positive_list("contexts", contexts);
  const std::vector<int> ms = parse_positive_list("weights", weights);
  if (seeds < 1) throw io::FieldError("seeds", "must be >= 1");
  const data::DatasetBundle bundle = load_data(data_path);
  std::vector<std::uint64_t> seed_list;
  for (int i = 0; i < seeds; ++i) seed_list.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  const auto cells = train::sweep(cfg, bundle, ns, ms, seed_list, jobs);
  const std::string csv = train::sweep_csv(cells);
  if (out_path.empty()) {
    out << csv;
  } else {
    train::write_file_atomic(out_path, csv);
    out << "wrote " << cells.size() << " cells to " << out_path << '\n';
  }
  return kExitOk;
}

int cmd_verify_causal(const std::string& graph_path, std::uint64_t seed, std::ostream& out) {
  causal::CausalGraph g;
  if (graph_path.empty()) {
    g = causal::build_training_graph();
  } else {
    require_file(graph_path, "graph file");
    g = causal::load_edge_list(graph_path);
  }
  const causal::DerivationReport derivation = causal::verify_eq1_derivation(g);
  out << derivation.to_text();
  const causal::StructureReport structure = causal::verify_intractability_structure();
  out << structure.to_text();
  bool numeric_ok = true;
  if (g == causal::build_training_graph()) {
    const causal::IdentificationAgreement a = causal::check_identification_random(20, seed, 1e-9);
    numeric_ok = a.agreements == a.instances;
    out << "scm.agreements=" << a.agreements << '/' << a.instances << '\n'
        << "scm.max_abs_diff=" << io::format_double(a.max_abs_diff) << '\n';
  } else {
    out << "scm.check=skipped (graph differs from the training graph)\n";
  }
  if (const causal::StepResult* f = derivation.first_failure()) {
    out << "FAILED: step " << f->index << " (rule " << f->step.rule << "): " << f->step.label << " in " << f->surgery
        << '\n';
    return kExitVerifyFailed;
  }
  if (!structure.all_passed()) {
    for (const auto& c : structure.checks) {
      if (!c.passed) out << "FAILED: structure check " << c.name << '\n';
    }
    return kExitVerifyFailed;
  }
  if (!numeric_ok) {
    out << "FAILED: factorized query disagrees with exact inference\n";
    return kExitVerifyFailed;
  }
  out << "verify-causal: all checks passed\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cib: causal-invariant Bayesian networks at desk scale"};
  app.require_subcommand(1);

  std::string spec_path, out_path, data_path, out_dir, ckpt_path, split = "test_iid", graph_path;
  std::string contexts = "1,4,8", weights = "1,4,8", sweep_out;
  std::uint64_t seed = 0;
  int seeds = 3, jobs = 1;
  bool ood_batchstats = false;
  RunFlags train_flags, sweep_flags;

  auto* gen = app.add_subcommand("gen-data", "generate a confounded dataset bundle");
  gen->add_option("--spec", spec_path, "dataset spec file (key = value)");
  gen->add_option("--out", out_path, "output bundle path")->required();
  gen->add_option("--seed", seed, "generator seed");

  auto* tr = app.add_subcommand("train", "train a model and write metrics, checkpoint and resolved config");
  add_run_flags(tr, train_flags);
  tr->add_option("--data", data_path, "dataset bundle")->required();
  tr->add_option("--out-dir", out_dir, "output directory")->required();
  tr->add_option("--model", train_flags.model, "cib, point or ct");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  ev->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  ev->add_option("--data", data_path, "dataset bundle")->required();
  ev->add_option("--split", split, "train, val_iid, test_iid, val_ood or test_ood");
  ev->add_flag("--ood-batchstats", ood_batchstats, "normalize with the evaluated batch's statistics");

  auto* sw = app.add_subcommand("sweep", "train one model per (N, M, seed) and emit the grid");
  add_run_flags(sw, sweep_flags);
  sw->add_option("--data", data_path, "dataset bundle")->required();
  sw->add_option("--contexts", contexts, "comma-separated N values");
  sw->add_option("--weights", weights, "comma-separated M values");
  sw->add_option("--seeds", seeds, "number of seeds, counting up from the config seed");
  sw->add_option("--out", sweep_out, "grid CSV path (default: stdout)");
  sw->add_option("--jobs", jobs, "parallel training runs");
  sw->add_option("--model", sweep_flags.model, "cib, point or ct");

  auto* vc = app.add_subcommand("verify-causal", "machine-check the interventional-query derivation");
  vc->add_option("--graph", graph_path, "edge-list graph to check instead of the built-in training graph");
  vc->add_option("--seed", seed, "seed for the random SCM check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand help requests surface as CallForHelp from the subcommand.
    err << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(spec_path, out_path, seed, out);
    if (*tr) return cmd_train(train_flags, data_path, out_dir, out);
    if (*ev) return cmd_eval(ckpt_path, data_path, split, ood_batchstats, out);
    if (*sw) return cmd_sweep(sweep_flags, data_path, contexts, weights, seeds, sweep_out, jobs, out);
    if (*vc) return cmd_verify_causal(graph_path, seed, out);
  } catch (const train::DivergenceError& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const io::FieldError& e) {
    err << "error: invalid value for " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const causal::GraphError& e) {
    err << "error: graph: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nn::CheckpointError& e) {
    err << "error: checkpoint: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ad::ShapeError& e) {
    err << "error: shape: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace cib::cli
