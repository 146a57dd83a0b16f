// Command-line front end: train, eval, expressivity, gradcheck.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <omp.h>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hqmamba/data.hpp"
#include "hqmamba/errors.hpp"
#include "hqmamba/expressivity.hpp"
#include "hqmamba/gradcheck.hpp"
#include "hqmamba/kernels.hpp"
#include "hqmamba/train.hpp"

namespace {

using namespace hqmamba;

struct TrainArgs {
  std::string config;
  std::string backend;
  std::optional<std::size_t> subset;
  std::optional<int> downsample;
  std::optional<int> baseline_dmodel;
  std::optional<int> threads;
  std::string output_dir;
  bool compare = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  int downsample = 1;
  std::size_t subset = 0;
  std::size_t batch_size = 64;
};

struct ExprArgs {
  int qubits = 1;
  int layers = 1;
  std::string pattern = "ring";
  long pairs = 5000;
  int bins = 75;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string csv;
  std::string out;
};

struct GradArgs {
  std::string module = "all";
  std::uint64_t seed = 1;
};

void set_threads(int threads) {
  omp_set_num_threads(threads);
  kernels::set_exec_policy(threads > 1 ? kernels::Exec::parallel : kernels::Exec::serial);
}

int run_train(const TrainArgs& a) {
  train::TrainConfig cfg = train::TrainConfig::from_file(a.config);
  if (!a.backend.empty()) {
    const auto b = a.backend == "classical" ? mamba::Backend::classical : mamba::Backend::quantum;
    cfg.backends = mamba::BackendMap::all(b);
  }
  if (a.subset) cfg.train_subset = cfg.test_subset = *a.subset;
  if (a.downsample) cfg.downsample = *a.downsample;
  if (a.threads) cfg.threads = *a.threads;
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  cfg.validate();

  auto classical_variant = [&](train::TrainConfig c) {
    c.backends = mamba::BackendMap::all(mamba::Backend::classical);
    if (a.baseline_dmodel) c.d_model = *a.baseline_dmodel;
    return c;
  };
  const auto data = train::load_datasets(cfg);

  if (a.compare) {
    train::TrainConfig hybrid = cfg;
    hybrid.backends = mamba::BackendMap::all(mamba::Backend::quantum);
    hybrid.output_dir = (std::filesystem::path(cfg.output_dir) / "hybrid").string();
    train::TrainConfig classical = classical_variant(cfg);
    classical.output_dir = (std::filesystem::path(cfg.output_dir) / "classical").string();
    hybrid.full_train_eval = classical.full_train_eval = true;
    std::vector<train::RunSummary> runs;
    runs.push_back({"hybrid", train::train(hybrid, data)});
    runs.push_back({"classical", train::train(classical, data)});
    std::cout << train::format_comparison(runs);
    return 0;
  }

  if (cfg.backends == mamba::BackendMap::all(mamba::Backend::classical)) {
    cfg = classical_variant(cfg);
  } else if (a.baseline_dmodel) {
    std::cerr << "note: --baseline-dmodel only applies to all-classical runs; ignored\n";
  }
  const auto res = train::train(cfg, data);
  if (res.initial_train && res.final_train) {
    std::cout << "initial train loss " << res.initial_train->loss << "\n"
              << "final train loss " << res.final_train->loss << "\n"
              << "final train accuracy " << res.final_train->accuracy << "\n";
  }
  std::cout << "iterations " << res.iterations << "\n"
            << "final test loss " << res.final_test.loss << "\n"
            << "final test accuracy " << res.final_test.accuracy << "\n"
            << "wall seconds " << res.wall_seconds << "\n"
            << "metrics " << res.metrics_path << "\n";
  if (!res.checkpoint_path.empty()) std::cout << "checkpoint " << res.checkpoint_path << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  const auto model = mamba::load_checkpoint(a.checkpoint);
  auto ds = data::load_mnist_split(a.data, a.split == "train");
  ds = data::downsample(ds, a.downsample);
  if (a.subset > 0) ds = data::subset(ds, a.subset);
  if (model.config().input_mode == mamba::InputMode::bins) ds = data::to_bins(ds);
  const auto r = train::evaluate(model, ds, a.batch_size);
  std::printf("samples %zu\nloss %.17g\naccuracy %.17g\n", r.samples, r.loss, r.accuracy);
  return 0;
}

int run_expressivity(const ExprArgs& a) {
  set_threads(a.threads);
  ansatz::AnsatzConfig cfg{a.qubits, a.layers, ansatz::parse_pattern(a.pattern)};
  cfg.validate();
  std::vector<double> samples;
  const auto report = expressivity::analyze(cfg, a.pairs, a.bins, a.seed, a.csv.empty() ? nullptr : &samples);
  const auto text = expressivity::format_report(report);
  if (!a.out.empty()) {
    std::ofstream os(a.out);
    if (!os) throw IoError("cannot write " + a.out);
    os << text;
  }
  if (!a.csv.empty()) {
    std::ofstream os(a.csv);
    if (!os) throw IoError("cannot write " + a.csv);
    expressivity::write_samples_csv(os, samples);
  }
  std::cout << text;
  return 0;
}

int run_gradcheck(const GradArgs& a) {
  bool ok = true;
  auto report = [&](const gradcheck::Result& r) {
    std::cout << gradcheck::format_result(r);
    ok = ok && r.passed();
  };
  if (a.module == "qsim" || a.module == "all") report(gradcheck::check_qsim(a.seed));
  if (a.module == "ansatz" || a.module == "all") report(gradcheck::check_ansatz(a.seed));
  if (a.module == "model" || a.module == "all") {
    report(gradcheck::check_model(gradcheck::tiny_hybrid_config(a.seed), a.seed));
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid quantum-classical selective state space models"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model from a config file");
  tr->add_option("--config", ta.config, "Config file (key = value lines)")->required();
  tr->add_option("--backend", ta.backend, "Projection backend for in/x/out_proj")
      ->check(CLI::IsMember({"classical", "quantum", "hybrid"}));
  tr->add_option("--subset", ta.subset, "Use the first N samples of each split");
  tr->add_option("--downsample", ta.downsample, "Average-pool images by 1, 2 or 4")
      ->check(CLI::IsMember({1, 2, 4}));
  tr->add_option("--baseline-dmodel", ta.baseline_dmodel, "d_model of the all-classical baseline")
      ->check(CLI::IsMember({16, 128}));
  tr->add_option("--threads", ta.threads, "OpenMP threads; 1 is the deterministic reference mode")
      ->check(CLI::PositiveNumber);
  tr->add_option("--output-dir", ta.output_dir, "Where metrics and checkpoints go");
  tr->add_flag("--compare", ta.compare, "Train hybrid and classical variants and print a table");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on an MNIST split");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", ea.data, "Directory with IDX files")->required();
  ev->add_option("--split", ea.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--downsample", ea.downsample, "Average-pool images by 1, 2 or 4")
      ->check(CLI::IsMember({1, 2, 4}));
  ev->add_option("--subset", ea.subset, "Use the first N samples");
  ev->add_option("--batch-size", ea.batch_size, "Evaluation batch size")->check(CLI::PositiveNumber);

  ExprArgs xa;
  auto* ex = app.add_subcommand("expressivity", "Fidelity-histogram expressivity of an ansatz");
  ex->add_option("--qubits", xa.qubits, "Number of qubits")->required()->check(CLI::Range(1, 20));
  ex->add_option("--layers", xa.layers, "Ansatz layers (0 = idle circuit)")->required()->check(CLI::NonNegativeNumber);
  ex->add_option("--pattern", xa.pattern, "Entangler pattern")
      ->check(CLI::IsMember({"ring", "all_to_all", "none"}));
  ex->add_option("--pairs", xa.pairs, "Sampled parameter pairs")->check(CLI::PositiveNumber);
  ex->add_option("--bins", xa.bins, "Histogram bins")->check(CLI::PositiveNumber);
  ex->add_option("--seed", xa.seed, "Sampling seed");
  ex->add_option("--threads", xa.threads, "OpenMP threads")->check(CLI::PositiveNumber);
  ex->add_option("--csv", xa.csv, "Write raw fidelities as CSV");
  ex->add_option("--out", xa.out, "Write the report to a file as well");

  GradArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--module", ga.module, "Which suite to run")->check(CLI::IsMember({"qsim", "ansatz", "model", "all"}));
  gc->add_option("--seed", ga.seed, "Seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*tr) return run_train(ta);
    if (*ev) return run_eval(ea);
    if (*ex) return run_expressivity(xa);
    if (*gc) return run_gradcheck(ga);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
