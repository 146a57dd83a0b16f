#include "hqmamba/train.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hqmamba/errors.hpp"
#include "hqmamba/kernels.hpp"
#include "hqmamba/rng.hpp"

namespace hqmamba::train {

namespace fs = std::filesystem;
using mamba::Backend;

OptimizerConfig OptimizerConfig::defaults() {
  OptimizerConfig c;
  c.groups = {{ParamGroup::in_proj, {3e-4, 0.0}},
              {ParamGroup::x_proj, {1e-4, 0.0}},
              {ParamGroup::out_proj, {3e-4, 0.0}},
              {ParamGroup::classical, {1e-3, 0.01}}};
  return c;
}

void OptimizerConfig::validate() const {
  for (auto g : {ParamGroup::in_proj, ParamGroup::x_proj, ParamGroup::out_proj, ParamGroup::classical}) {
    const auto it = groups.find(g);
    if (it == groups.end()) throw ConfigError("optimizer group '" + mamba::to_string(g) + "' missing");
    if (!(it->second.lr > 0.0) || !std::isfinite(it->second.lr)) {
      throw ConfigError("learning rate of group '" + mamba::to_string(g) + "' must be positive");
    }
    if (!(it->second.weight_decay >= 0.0)) {
      throw ConfigError("weight decay of group '" + mamba::to_string(g) + "' must be non-negative");
    }
    if (g != ParamGroup::classical && it->second.weight_decay != 0.0) {
      throw ConfigError("projection group '" + mamba::to_string(g) + "' must not use weight decay");
    }
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
}

double adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                    std::span<double> v, std::uint64_t t, const GroupSettings& group, const AdamHyper& adam) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adamw: parameter, gradient and moment sizes differ (" + std::to_string(param.size()) +
                         ", " + std::to_string(grad.size()) + ", " + std::to_string(m.size()) + ", " +
                         std::to_string(v.size()) + ")");
  }
  if (t < 1) throw UsageError("adamw: step index is 1-based");
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(t));
  const double decay = group.weight_decay > 0.0 ? group.lr * group.weight_decay : 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * grad[i];
    v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    if (decay != 0.0) param[i] *= 1.0 - decay;
    param[i] -= group.lr * mhat / (std::sqrt(vhat) + adam.eps);
  }
  return decay;
}

AdamW::AdamW(std::vector<mamba::Parameter> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(std::move(cfg)) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

StepStats AdamW::step() {
  StepStats stats;
  double sq = 0.0;
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
      sq += g * g;
    }
  }
  stats.grad_norm = std::sqrt(sq);
  const double clip =
      cfg_.clip_norm > 0.0 && stats.grad_norm > cfg_.clip_norm ? cfg_.clip_norm / stats.grad_norm : 1.0;

  ++t_;
  stats.step = t_;
  std::vector<double> g;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    const auto stored = p.tensor.grad();
    g.assign(p.tensor.numel(), 0.0);
    for (std::size_t i = 0; i < stored.size(); ++i) g[i] = stored[i] * clip;
    const auto& group = cfg_.groups.at(p.group);
    stats.decay_term[p.group] = adamw_update(p.tensor.mutable_data(), g, m_[k], v_[k], t_, group, cfg_.adam);
  }
  return stats;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (d_model < 1 || layers < 1 || expand < 1 || d_state < 1 || d_conv < 1 || dt_rank < 0) {
    throw ConfigError("model dims must be positive");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (downsample != 1 && downsample != 2 && downsample != 4) throw ConfigError("downsample must be 1, 2 or 4");
  if (synthetic_train < 1 || synthetic_test < 1 || synthetic_length < 1 || synthetic_classes < 2) {
    throw ConfigError("synthetic dataset sizes must be positive and classes >= 2");
  }
  optimizer_config().validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T out;
    if constexpr (std::is_same_v<T, double>) out = std::stod(v, &used);
    else if constexpr (std::is_same_v<T, int>) out = std::stoi(v, &used);
    else {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(v, &used));
    }
    if (used != v.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' has invalid value '" + v + "'");
  }
}

void set_all_backends(mamba::BackendMap& b, const std::string& v) {
  if (v == "classical") b = mamba::BackendMap::all(Backend::classical);
  else if (v == "quantum" || v == "hybrid") b = mamba::BackendMap::all(Backend::quantum);
  else throw ConfigError("backend must be classical, quantum or hybrid, got '" + v + "'");
}

}  // namespace

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "d_model = " << d_model << "\nlayers = " << layers << "\nexpand = " << expand << "\nd_state = " << d_state
     << "\nd_conv = " << d_conv << "\ndt_rank = " << dt_rank
     << "\nin_proj_backend = " << mamba::to_string(backends.in_proj)
     << "\nx_proj_backend = " << mamba::to_string(backends.x_proj)
     << "\nout_proj_backend = " << mamba::to_string(backends.out_proj)
     << "\nquantum_layers = " << quantum.n_layers << "\nquantum_pattern = " << ansatz::to_string(quantum.pattern)
     << "\nmax_qubits = " << quantum.max_qubits
     << "\ninput_mode = " << (input_mode == mamba::InputMode::real ? "real" : "bins") << "\nepochs = " << epochs
     << "\nbatch_size = " << batch_size << "\nseed = " << seed << "\nlr_in_proj = " << g17(lr_in_proj)
     << "\nlr_x_proj = " << g17(lr_x_proj) << "\nlr_out_proj = " << g17(lr_out_proj)
     << "\nlr_classical = " << g17(lr_classical) << "\nweight_decay = " << g17(weight_decay)
     << "\nclip_norm = " << g17(clip_norm) << "\nmax_iterations = " << max_iterations
     << "\ndataset = " << (dataset == DatasetKind::mnist ? "mnist" : "synthetic") << "\ndata_dir = " << data_dir
     << "\ndownsample = " << downsample << "\ntrain_subset = " << train_subset
     << "\ntest_subset = " << test_subset << "\nsynthetic_train = " << synthetic_train
     << "\nsynthetic_test = " << synthetic_test << "\nsynthetic_length = " << synthetic_length
     << "\nsynthetic_classes = " << synthetic_classes << "\nsynthetic_noise = " << g17(synthetic_noise)
     << "\noutput_dir = " << output_dir << "\nthreads = " << threads
     << "\nrecord_wall_time = " << (record_wall_time ? "true" : "false")
     << "\nfull_train_eval = " << (full_train_eval ? "true" : "false")
     << "\nsave_checkpoints = " << (save_checkpoints ? "true" : "false") << "\n";
  return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string k = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (k == "d_model") c.d_model = parse_num<int>(k, v);
    else if (k == "layers") c.layers = parse_num<int>(k, v);
    else if (k == "expand") c.expand = parse_num<int>(k, v);
    else if (k == "d_state") c.d_state = parse_num<int>(k, v);
    else if (k == "d_conv") c.d_conv = parse_num<int>(k, v);
    else if (k == "dt_rank") c.dt_rank = parse_num<int>(k, v);
    else if (k == "backend") set_all_backends(c.backends, v);
    else if (k == "in_proj_backend") c.backends.in_proj = mamba::parse_backend(v);
    else if (k == "x_proj_backend") c.backends.x_proj = mamba::parse_backend(v);
    else if (k == "out_proj_backend") c.backends.out_proj = mamba::parse_backend(v);
    else if (k == "quantum_layers") c.quantum.n_layers = parse_num<int>(k, v);
    else if (k == "quantum_pattern") c.quantum.pattern = ansatz::parse_pattern(v);
    else if (k == "max_qubits") c.quantum.max_qubits = parse_num<int>(k, v);
    else if (k == "input_mode") {
      if (v == "real") c.input_mode = mamba::InputMode::real;
      else if (v == "bins") c.input_mode = mamba::InputMode::bins;
      else throw ConfigError("input_mode must be real or bins");
    } else if (k == "epochs") c.epochs = parse_num<int>(k, v);
    else if (k == "batch_size") c.batch_size = parse_num<int>(k, v);
    else if (k == "seed") c.seed = parse_num<std::uint64_t>(k, v);
    else if (k == "lr_in_proj") c.lr_in_proj = parse_num<double>(k, v);
    else if (k == "lr_x_proj") c.lr_x_proj = parse_num<double>(k, v);
    else if (k == "lr_out_proj") c.lr_out_proj = parse_num<double>(k, v);
    else if (k == "lr_classical") c.lr_classical = parse_num<double>(k, v);
    else if (k == "weight_decay") c.weight_decay = parse_num<double>(k, v);
    else if (k == "clip_norm") c.clip_norm = parse_num<double>(k, v);
    else if (k == "max_iterations") c.max_iterations = parse_num<std::uint64_t>(k, v);
    else if (k == "dataset") {
      if (v == "mnist") c.dataset = DatasetKind::mnist;
      else if (v == "synthetic") c.dataset = DatasetKind::synthetic;
      else throw ConfigError("dataset must be mnist or synthetic");
    } else if (k == "data_dir") c.data_dir = v;
    else if (k == "downsample") c.downsample = parse_num<int>(k, v);
    else if (k == "train_subset") c.train_subset = parse_num<std::size_t>(k, v);
    else if (k == "test_subset") c.test_subset = parse_num<std::size_t>(k, v);
    else if (k == "synthetic_train") c.synthetic_train = parse_num<std::size_t>(k, v);
    else if (k == "synthetic_test") c.synthetic_test = parse_num<std::size_t>(k, v);
    else if (k == "synthetic_length") c.synthetic_length = parse_num<std::size_t>(k, v);
    else if (k == "synthetic_classes") c.synthetic_classes = parse_num<int>(k, v);
    else if (k == "synthetic_noise") c.synthetic_noise = parse_num<double>(k, v);
    else if (k == "output_dir") c.output_dir = v;
    else if (k == "threads") c.threads = parse_num<int>(k, v);
    else if (k == "record_wall_time") c.record_wall_time = parse_bool(k, v);
    else if (k == "full_train_eval") c.full_train_eval = parse_bool(k, v);
    else if (k == "save_checkpoints") c.save_checkpoints = parse_bool(k, v);
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str());
}

mamba::ModelConfig TrainConfig::model_config(std::size_t input_features, int num_classes) const {
  mamba::ModelConfig m;
  m.layer.d_model = d_model;
  m.layer.expand = expand;
  m.layer.d_state = d_state;
  m.layer.d_conv = d_conv;
  m.layer.dt_rank = dt_rank;
  m.layer.backends = backends;
  m.layer.quantum = quantum;
  m.n_layers = layers;
  m.input_mode = input_mode;
  m.input_features = static_cast<int>(input_features);
  m.num_classes = num_classes;
  m.seed = seed;
  return m;
}

OptimizerConfig TrainConfig::optimizer_config() const {
  OptimizerConfig o = OptimizerConfig::defaults();
  o.groups[ParamGroup::in_proj].lr = lr_in_proj;
  o.groups[ParamGroup::x_proj].lr = lr_x_proj;
  o.groups[ParamGroup::out_proj].lr = lr_out_proj;
  o.groups[ParamGroup::classical] = {lr_classical, weight_decay};
  o.clip_norm = clip_norm;
  return o;
}

// ---------------------------------------------------------------------------

std::string format_metrics_line(const MetricsRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%llu,%s,%.17g,%.17g,%.17g", r.epoch,
                static_cast<unsigned long long>(r.iteration), r.split.c_str(), r.loss, r.accuracy, r.wall_seconds);
  return buf;
}

std::string format_metrics_csv(const std::vector<MetricsRecord>& records) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : records) out += format_metrics_line(r) + "\n";
  return out;
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || trim(line) != kMetricsHeader) throw FormatError("metrics CSV header mismatch");
  std::vector<MetricsRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw FormatError("metrics CSV line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      MetricsRecord r;
      r.epoch = std::stoi(f[0]);
      r.iteration = std::stoull(f[1]);
      r.split = f[2];
      r.loss = std::stod(f[3]);
      r.accuracy = std::stod(f[4]);
      r.wall_seconds = std::stod(f[5]);
      if (r.split != "train" && r.split != "test") throw FormatError("bad split");
      out.push_back(r);
    } catch (const std::exception&) {
      throw FormatError("metrics CSV line " + std::to_string(lineno) + " is malformed");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

mamba::ModelInput to_model_input(const data::Batch& b, const data::SequenceDataset& ds) {
  if (ds.encoding == data::Encoding::bins) return mamba::ModelInput::from_bins(b.bins, b.size(), ds.length);
  return mamba::ModelInput::from_real(ad::Tensor::from({b.size(), ds.length, ds.feat}, b.inputs));
}

namespace {

std::size_t correct_count(const ad::Tensor& logits, std::span<const int> labels) {
  const std::size_t c = logits.dim(1);
  const auto v = logits.data();
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = v.subspan(i * c, c);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    n += best == labels[i];
  }
  return n;
}

void check_compatible(const mamba::Model& model, const data::SequenceDataset& ds) {
  const auto& mc = model.config();
  const bool bins = ds.encoding == data::Encoding::bins;
  if (bins != (mc.input_mode == mamba::InputMode::bins)) {
    throw ConfigError("dataset encoding does not match the model input mode");
  }
  if (!bins && static_cast<int>(ds.feat) != mc.input_features) {
    throw ConfigError("dataset has " + std::to_string(ds.feat) + " features, model expects " +
                      std::to_string(mc.input_features));
  }
  if (ds.num_classes > mc.num_classes) {
    throw ConfigError("dataset has " + std::to_string(ds.num_classes) + " classes, model predicts " +
                      std::to_string(mc.num_classes));
  }
}

}  // namespace

EvalResult evaluate(const mamba::Model& model, const data::SequenceDataset& ds, std::size_t batch_size) {
  check_compatible(model, ds);
  ad::NoGradGuard no_grad;
  EvalResult r;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& b : data::sequential_batches(ds, batch_size)) {
    const ad::Tensor logits = model.forward(to_model_input(b, ds));
    loss_sum += ad::softmax_cross_entropy(logits, b.labels).item() * static_cast<double>(b.size());
    correct += correct_count(logits, b.labels);
    r.samples += b.size();
  }
  if (r.samples > 0) {
    r.loss = loss_sum / static_cast<double>(r.samples);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.samples);
  }
  return r;
}

EvalResult evaluate(const std::string& checkpoint_path, const data::SequenceDataset& ds, std::size_t batch_size) {
  return evaluate(mamba::load_checkpoint(checkpoint_path), ds, batch_size);
}

Datasets load_datasets(const TrainConfig& cfg) {
  Datasets d;
  if (cfg.dataset == DatasetKind::synthetic) {
    d.train = data::synthetic_dataset(cfg.synthetic_train, cfg.synthetic_length, cfg.synthetic_classes,
                                      mix_seed(cfg.seed, 0x5e7), cfg.synthetic_noise);
    d.test = data::synthetic_dataset(cfg.synthetic_test, cfg.synthetic_length, cfg.synthetic_classes,
                                     mix_seed(cfg.seed, 0x7e5), cfg.synthetic_noise);
  } else {
    const std::string dir = cfg.data_dir.empty() ? data::data_dir_from_env() : cfg.data_dir;
    if (dir.empty()) throw IoError("no MNIST directory: set data_dir or HQMAMBA_DATA_DIR");
    d.train = data::load_mnist_split(dir, true);
    d.test = data::load_mnist_split(dir, false);
    d.train = data::downsample(d.train, cfg.downsample);
    d.test = data::downsample(d.test, cfg.downsample);
  }
  if (cfg.train_subset > 0) d.train = data::subset(d.train, cfg.train_subset);
  if (cfg.test_subset > 0) d.test = data::subset(d.test, cfg.test_subset);
  if (cfg.input_mode == mamba::InputMode::bins) {
    d.train = data::to_bins(d.train);
    d.test = data::to_bins(d.test);
  }
  return d;
}

TrainResult train(const TrainConfig& cfg, const Datasets& data) {
  cfg.validate();
  data.train.validate();
  data.test.validate();
  if (data.train.num_samples == 0) throw ConfigError("training split is empty");

  const int prev_threads = omp_get_max_threads();
  omp_set_num_threads(cfg.threads);
  kernels::ScopedExec exec(cfg.threads > 1 ? kernels::Exec::parallel : kernels::Exec::serial);
  struct RestoreThreads {
    int n;
    ~RestoreThreads() { omp_set_num_threads(n); }
  } restore{prev_threads};

  const int num_classes = std::max(data.train.num_classes, data.test.num_classes);
  mamba::Model model(cfg.model_config(data.train.encoding == data::Encoding::bins ? 1 : data.train.feat, num_classes));
  AdamW opt(model.parameters(), cfg.optimizer_config());

  TrainResult res;
  res.params_by_group = model.parameter_count_by_group();
  const std::size_t eval_bs = static_cast<std::size_t>(std::max(cfg.batch_size, 64));
  if (cfg.full_train_eval) res.initial_train = evaluate(model, data.train, eval_bs);

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output_dir + ": " + ec.message());
  res.metrics_path = (fs::path(cfg.output_dir) / "metrics.csv").string();
  std::ofstream csv(res.metrics_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + res.metrics_path);
  csv << kMetricsHeader << "\n";

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto emit = [&](MetricsRecord r) {
    r.wall_seconds = cfg.record_wall_time ? elapsed() : 0.0;
    csv << format_metrics_line(r) << "\n";
    csv.flush();
    res.records.push_back(std::move(r));
  };

  std::uint64_t it = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    for (const auto& b : data::batches(data.train, cfg.batch_size, cfg.seed, epoch)) {
      if (cfg.max_iterations > 0 && it >= cfg.max_iterations) {
        stop = true;
        break;
      }
      ++it;
      model.zero_grad();
      const ad::Tensor logits = model.forward(to_model_input(b, data.train));
      const ad::Tensor loss = ad::softmax_cross_entropy(logits, b.labels);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", iteration " + std::to_string(it));
      }
      const double acc = static_cast<double>(correct_count(logits, b.labels)) / static_cast<double>(b.size());
      ad::backward(loss);
      opt.step();
      emit({epoch, it, "train", lv, acc, 0.0});
    }
    res.final_test = evaluate(model, data.test, eval_bs);
    emit({epoch, it, "test", res.final_test.loss, res.final_test.accuracy, 0.0});
    if (cfg.save_checkpoints) {
      const auto epoch_path = fs::path(cfg.output_dir) / ("checkpoint_epoch" + std::to_string(epoch) + ".ckpt");
      mamba::save_checkpoint(model, epoch_path.string());
      res.checkpoint_path = (fs::path(cfg.output_dir) / "model.ckpt").string();
      mamba::save_checkpoint(model, res.checkpoint_path);
    }
    if (cfg.max_iterations > 0 && it >= cfg.max_iterations) stop = true;
  }
  res.iterations = it;
  if (cfg.full_train_eval) res.final_train = evaluate(model, data.train, eval_bs);
  res.wall_seconds = elapsed();
  return res;
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  return train(cfg, load_datasets(cfg));
}

std::string format_comparison(const std::vector<RunSummary>& runs) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s", "metric");
  os << buf;
  for (const auto& r : runs) {
    std::snprintf(buf, sizeof buf, " %14s", r.name.c_str());
    os << buf;
  }
  os << "\n";
  auto row = [&](const char* label, auto get, const char* fmt) {
    std::snprintf(buf, sizeof buf, "%-22s", label);
    os << buf;
    for (const auto& r : runs) {
      const auto v = get(r.result);
      if (v) {
        std::snprintf(buf, sizeof buf, fmt, *v);
      } else {
        std::snprintf(buf, sizeof buf, " %14s", "-");
      }
      os << buf;
    }
    os << "\n";
  };
  using Opt = std::optional<double>;
  auto count = [](ParamGroup g) {
    return [g](const TrainResult& t) -> Opt {
      const auto it = t.params_by_group.find(g);
      return it == t.params_by_group.end() ? Opt{} : Opt{static_cast<double>(it->second)};
    };
  };
  row("params in_proj", count(ParamGroup::in_proj), " %14.0f");
  row("params x_proj", count(ParamGroup::x_proj), " %14.0f");
  row("params out_proj", count(ParamGroup::out_proj), " %14.0f");
  row("params classical", count(ParamGroup::classical), " %14.0f");
  row("iterations", [](const TrainResult& t) -> Opt { return static_cast<double>(t.iterations); }, " %14.0f");
  row("initial train loss",
      [](const TrainResult& t) { return t.initial_train ? Opt{t.initial_train->loss} : Opt{}; }, " %14.6f");
  row("final train loss",
      [](const TrainResult& t) { return t.final_train ? Opt{t.final_train->loss} : Opt{}; }, " %14.6f");
  row("final train accuracy",
      [](const TrainResult& t) { return t.final_train ? Opt{t.final_train->accuracy} : Opt{}; }, " %14.4f");
  row("final test loss", [](const TrainResult& t) -> Opt { return t.final_test.loss; }, " %14.6f");
  row("final test accuracy", [](const TrainResult& t) -> Opt { return t.final_test.accuracy; }, " %14.4f");
  row("wall seconds", [](const TrainResult& t) -> Opt { return t.wall_seconds; }, " %14.1f");
  return os.str();
}

}  // namespace hqmamba::train
