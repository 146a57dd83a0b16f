#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hqmamba/data.hpp"
#include "hqmamba/mamba.hpp"

namespace hqmamba::train {

using mamba::ParamGroup;

struct GroupSettings {
  double lr = 1e-3;
  double weight_decay = 0.0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerConfig {
  std::map<ParamGroup, GroupSettings> groups;
  AdamHyper adam;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  /// in_proj 3e-4, x_proj 1e-4, out_proj 3e-4, classical 1e-3; decay 0.01 on classical only.
  static OptimizerConfig defaults();
  /// lr > 0 everywhere, decay >= 0, and exactly zero decay on the projection groups.
  void validate() const;
};

/// One AdamW update of a single tensor at 1-based step t. Returns the decay
/// term lr * weight_decay that was applied (0 when decay is off).
double adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                    std::span<double> v, std::uint64_t t, const GroupSettings& group, const AdamHyper& adam);

struct StepStats {
  std::uint64_t step = 0;
  std::map<ParamGroup, double> decay_term;  // lr * wd applied to each group this step
  double grad_norm = 0.0;                   // before clipping
};

class AdamW {
 public:
  AdamW(std::vector<mamba::Parameter> params, OptimizerConfig cfg);

  /// Consumes the gradients currently stored on the parameters. Throws
  /// NumericError naming the first parameter with a non-finite gradient.
  StepStats step();
  std::uint64_t steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  std::vector<mamba::Parameter> params_;
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

enum class DatasetKind { mnist, synthetic };

struct TrainConfig {
  // model
  int d_model = 128;
  int layers = 2;
  int expand = 4;
  int d_state = 16;
  int d_conv = 4;
  int dt_rank = 0;
  mamba::BackendMap backends;
  mamba::QuantumSettings quantum;
  mamba::InputMode input_mode = mamba::InputMode::real;
  // optimisation
  int epochs = 4;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double lr_in_proj = 3e-4;
  double lr_x_proj = 1e-4;
  double lr_out_proj = 3e-4;
  double lr_classical = 1e-3;
  double weight_decay = 0.01;  // classical group only
  double clip_norm = 0.0;
  std::uint64_t max_iterations = 0;  // 0 = no limit
  // data
  DatasetKind dataset = DatasetKind::mnist;
  std::string data_dir;  // empty: HQMAMBA_DATA_DIR
  int downsample = 1;
  std::size_t train_subset = 0;  // 0 = all
  std::size_t test_subset = 0;
  std::size_t synthetic_train = 200;
  std::size_t synthetic_test = 100;
  std::size_t synthetic_length = 32;
  int synthetic_classes = 10;
  double synthetic_noise = 0.05;
  // run
  std::string output_dir = "run";
  int threads = 1;  // 1 = single-threaded reference mode
  bool record_wall_time = false;  // false writes wall_seconds = 0 so reruns are byte-identical
  bool full_train_eval = false;   // evaluate the whole train split before and after training
  bool save_checkpoints = true;

  void validate() const;
  std::string to_text() const;
  /// Flat `key = value` lines, '#' comments; unknown keys are errors.
  static TrainConfig from_text(const std::string& text);
  static TrainConfig from_file(const std::string& path);

  mamba::ModelConfig model_config(std::size_t input_features, int num_classes) const;
  OptimizerConfig optimizer_config() const;
};

struct MetricsRecord {
  int epoch = 0;
  std::uint64_t iteration = 0;
  std::string split;  // "train" or "test"
  double loss = 0.0;
  double accuracy = 0.0;
  double wall_seconds = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr const char* kMetricsHeader = "epoch,iteration,split,loss,accuracy,wall_seconds";

std::string format_metrics_line(const MetricsRecord& r);
std::string format_metrics_csv(const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t samples = 0;
};

mamba::ModelInput to_model_input(const data::Batch& b, const data::SequenceDataset& ds);

/// Mean loss and accuracy over the whole dataset without touching parameters.
EvalResult evaluate(const mamba::Model& model, const data::SequenceDataset& ds, std::size_t batch_size = 64);
EvalResult evaluate(const std::string& checkpoint_path, const data::SequenceDataset& ds,
                    std::size_t batch_size = 64);

struct Datasets {
  data::SequenceDataset train, test;
};

/// Loads (or generates) both splits and applies downsampling, subsets and encoding.
Datasets load_datasets(const TrainConfig& cfg);

struct TrainResult {
  std::vector<MetricsRecord> records;
  std::optional<EvalResult> initial_train, final_train;
  EvalResult final_test;
  std::map<ParamGroup, std::size_t> params_by_group;
  std::size_t iterations = 0;
  double wall_seconds = 0.0;
  std::string metrics_path, checkpoint_path;
};

/// Runs the configured epochs. Writes <output_dir>/metrics.csv, and when
/// save_checkpoints is on, <output_dir>/checkpoint_epoch<N>.ckpt plus
/// <output_dir>/model.ckpt after every epoch. A non-finite loss aborts with
/// NumericError, leaving the last completed epoch's checkpoint in place.
TrainResult train(const TrainConfig& cfg, const Datasets& data);
TrainResult train(const TrainConfig& cfg);

struct RunSummary {
  std::string name;
  TrainResult result;
};

/// Side-by-side table of several runs.
std::string format_comparison(const std::vector<RunSummary>& runs);

}  // namespace hqmamba::train
