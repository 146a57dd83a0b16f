#include "hqmamba/mamba.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hqmamba/errors.hpp"
#include "hqmamba/kernels.hpp"
#include "hqmamba/rng.hpp"
#include "hqmamba/ssm.hpp"

namespace hqmamba::mamba {

namespace {

ad::Tensor uniform_tensor(ad::Shape shape, double bound, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

ad::Tensor filled_tensor(ad::Shape shape, double value) {
  const auto n = ad::numel(shape);
  return ad::Tensor::from(std::move(shape), std::vector<double>(n, value), true);
}

// Runs one pipeline stage, prefixing dimension errors with the stage name.
template <typename F>
ad::Tensor stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const DimensionError& e) {
    throw DimensionError(std::string("mamba block stage '") + name + "': " + e.what());
  }
}

}  // namespace

Backend parse_backend(const std::string& s) {
  if (s == "classical") return Backend::classical;
  if (s == "quantum") return Backend::quantum;
  throw ConfigError("unknown projection backend '" + s + "' (expected classical|quantum)");
}

std::string to_string(Backend b) { return b == Backend::classical ? "classical" : "quantum"; }

std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::in_proj:
      return "in_proj";
    case ParamGroup::x_proj:
      return "x_proj";
    case ParamGroup::out_proj:
      return "out_proj";
    case ParamGroup::classical:
      return "classical";
  }
  return "?";
}

ParamGroup parse_group(const std::string& s) {
  if (s == "in_proj") return ParamGroup::in_proj;
  if (s == "x_proj") return ParamGroup::x_proj;
  if (s == "out_proj") return ParamGroup::out_proj;
  if (s == "classical") return ParamGroup::classical;
  throw ConfigError("unknown parameter group '" + s + "'");
}

void MambaLayerConfig::validate() const {
  if (d_model < 1 || expand < 1 || d_state < 1 || d_conv < 1 || dt_rank < 0) {
    throw ConfigError("mamba layer dims must be positive (d_model=" + std::to_string(d_model) +
                      ", expand=" + std::to_string(expand) + ", d_state=" + std::to_string(d_state) +
                      ", d_conv=" + std::to_string(d_conv) + ", dt_rank=" + std::to_string(dt_rank) + ")");
  }
  if (quantum.n_layers < 1 || quantum.max_qubits < 1 || quantum.max_qubits > 16) {
    throw ConfigError("quantum settings need n_layers >= 1 and max_qubits in [1, 16]");
  }
}

void ModelConfig::validate() const {
  layer.validate();
  if (n_layers < 1) throw ConfigError("model needs at least one layer");
  if (input_features < 1) throw ConfigError("input_features must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "d_model = " << layer.d_model << "\n"
     << "expand = " << layer.expand << "\n"
     << "d_state = " << layer.d_state << "\n"
     << "dt_rank = " << layer.dt_rank << "\n"
     << "d_conv = " << layer.d_conv << "\n"
     << "in_proj = " << to_string(layer.backends.in_proj) << "\n"
     << "x_proj = " << to_string(layer.backends.x_proj) << "\n"
     << "out_proj = " << to_string(layer.backends.out_proj) << "\n"
     << "quantum_layers = " << layer.quantum.n_layers << "\n"
     << "quantum_pattern = " << ansatz::to_string(layer.quantum.pattern) << "\n"
     << "max_qubits = " << layer.quantum.max_qubits << "\n"
     << "layers = " << n_layers << "\n"
     << "input_mode = " << (input_mode == InputMode::real ? "real" : "bins") << "\n"
     << "input_features = " << input_features << "\n"
     << "num_classes = " << num_classes << "\n"
     << "seed = " << seed << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("model config line without '=': " + line);
    auto trim = [](const std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const auto key = trim(line.substr(0, eq));
    const auto val = trim(line.substr(eq + 1));
    if (key == "d_model") cfg.layer.d_model = std::stoi(val);
    else if (key == "expand") cfg.layer.expand = std::stoi(val);
    else if (key == "d_state") cfg.layer.d_state = std::stoi(val);
    else if (key == "dt_rank") cfg.layer.dt_rank = std::stoi(val);
    else if (key == "d_conv") cfg.layer.d_conv = std::stoi(val);
    else if (key == "in_proj") cfg.layer.backends.in_proj = parse_backend(val);
    else if (key == "x_proj") cfg.layer.backends.x_proj = parse_backend(val);
    else if (key == "out_proj") cfg.layer.backends.out_proj = parse_backend(val);
    else if (key == "quantum_layers") cfg.layer.quantum.n_layers = std::stoi(val);
    else if (key == "quantum_pattern") cfg.layer.quantum.pattern = ansatz::parse_pattern(val);
    else if (key == "max_qubits") cfg.layer.quantum.max_qubits = std::stoi(val);
    else if (key == "layers") cfg.n_layers = std::stoi(val);
    else if (key == "input_mode") {
      if (val == "real") cfg.input_mode = InputMode::real;
      else if (val == "bins") cfg.input_mode = InputMode::bins;
      else throw ConfigError("unknown input mode '" + val + "'");
    } else if (key == "input_features") cfg.input_features = std::stoi(val);
    else if (key == "num_classes") cfg.num_classes = std::stoi(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else throw FormatError("unknown model config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

Projection Projection::classical(int d_in, int d_out, std::uint64_t seed) {
  Projection p;
  p.backend_ = Backend::classical;
  p.d_in_ = d_in;
  p.d_out_ = d_out;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  p.weight_ = uniform_tensor({static_cast<std::size_t>(d_in), static_cast<std::size_t>(d_out)}, bound,
                             mix_seed(seed, 0));
  p.bias_ = uniform_tensor({static_cast<std::size_t>(d_out)}, bound, mix_seed(seed, 1));
  return p;
}

Projection Projection::quantum(int d_in, int d_out, const QuantumSettings& qs, std::uint64_t seed) {
  Projection p;
  p.backend_ = Backend::quantum;
  p.d_in_ = d_in;
  p.d_out_ = d_out;
  p.qcfg_ = ansatz::QuantumProjectorConfig::make(d_in, d_out, qs.n_layers, qs.pattern, qs.max_qubits);
  auto w = ansatz::init_projector(p.qcfg_, seed);
  const auto nq = static_cast<std::size_t>(p.qcfg_.ansatz.n_qubits);
  const auto dim = p.qcfg_.amplitude_dim();
  p.angles_ = ad::Tensor::from({static_cast<std::size_t>(qs.n_layers), nq, 3}, std::move(w.params.angles), true);
  p.readout_w_ = ad::Tensor::from({dim, static_cast<std::size_t>(d_out)}, std::move(w.readout_w), true);
  p.readout_b_ = ad::Tensor::from({static_cast<std::size_t>(d_out)}, std::move(w.readout_b), true);
  if (p.qcfg_.compresses()) {
    p.compress_w_ = ad::Tensor::from({static_cast<std::size_t>(d_in), dim}, std::move(w.compress_w), true);
    p.compress_b_ = ad::Tensor::from({dim}, std::move(w.compress_b), true);
  }
  return p;
}

ad::Tensor Projection::forward(const ad::Tensor& x) const {
  if (x.rank() == 0 || x.shape().back() != static_cast<std::size_t>(d_in_)) {
    throw DimensionError("projection expects last axis " + std::to_string(d_in_) + ", got " +
                         ad::shape_str(x.shape()));
  }
  if (backend_ == Backend::classical) return ad::add(ad::matmul(x, weight_), bias_);

  const std::size_t rows = x.numel() / d_in_;
  ad::Tensor flat = ad::reshape(x, {rows, static_cast<std::size_t>(d_in_)});
  if (qcfg_.compresses()) flat = ad::add(ad::matmul(flat, compress_w_), compress_b_);
  const ad::Tensor feats = quantum_features_op(qcfg_.ansatz, flat, angles_);
  ad::Shape out_shape = x.shape();
  out_shape.back() = d_out_;
  return ad::reshape(ad::add(ad::matmul(feats, readout_w_), readout_b_), std::move(out_shape));
}

void Projection::collect(const std::string& prefix, ParamGroup group, std::vector<Parameter>& out) const {
  if (backend_ == Backend::classical) {
    out.push_back({prefix + ".weight", group, weight_});
    out.push_back({prefix + ".bias", group, bias_});
    return;
  }
  out.push_back({prefix + ".angles", group, angles_});
  out.push_back({prefix + ".readout_w", group, readout_w_});
  out.push_back({prefix + ".readout_b", group, readout_b_});
  if (qcfg_.compresses()) {
    out.push_back({prefix + ".compress_w", group, compress_w_});
    out.push_back({prefix + ".compress_b", group, compress_b_});
  }
}

ad::Tensor quantum_features_op(const ansatz::AnsatzConfig& cfg, const ad::Tensor& x, const ad::Tensor& angles) {
  const std::size_t dim = std::size_t{1} << cfg.n_qubits;
  if (x.rank() != 2 || x.dim(1) > dim) {
    throw DimensionError("quantum features: input " + ad::shape_str(x.shape()) + " does not fit " +
                         std::to_string(cfg.n_qubits) + " qubits");
  }
  if (angles.numel() != cfg.num_angles()) {
    throw DimensionError("quantum features: angles " + ad::shape_str(angles.shape()) + " do not match ansatz");
  }
  auto params_of = [cfg](const ad::Tensor& a) {
    return ansatz::AnsatzParams{cfg.n_layers, cfg.n_qubits, {a.data().begin(), a.data().end()}};
  };
  auto op = ad::custom_op(
      [cfg, dim, params_of](std::span<const ad::Tensor> in) {
        const std::size_t rows = in[0].dim(0), d = in[0].dim(1);
        std::vector<double> out(rows * dim);
        kernels::quantum_features_forward(cfg, params_of(in[1]), in[0].data(), rows, d, out);
        return ad::Value{{rows, dim}, std::move(out)};
      },
      [cfg, params_of](std::span<const ad::Tensor> in, const ad::Value&, std::span<const double> g) {
        const std::size_t rows = in[0].dim(0), d = in[0].dim(1);
        std::vector<std::vector<double>> grads{std::vector<double>(rows * d, 0.0),
                                               std::vector<double>(cfg.num_angles(), 0.0)};
        kernels::quantum_features_backward(cfg, params_of(in[1]), in[0].data(), rows, d, g, grads[0], grads[1]);
        return grads;
      },
      "quantum_features");
  return op({x, angles});
}

// ---------------------------------------------------------------------------

MambaBlockWeights MambaBlockWeights::init(const MambaLayerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int di = cfg.d_inner(), ds = cfg.d_state, r = cfg.resolved_dt_rank();
  const auto udi = static_cast<std::size_t>(di), uds = static_cast<std::size_t>(ds);
  auto make_proj = [&](Backend b, int d_in, int d_out, std::uint64_t s) {
    return b == Backend::classical ? Projection::classical(d_in, d_out, s)
                                   : Projection::quantum(d_in, d_out, cfg.quantum, s);
  };
  MambaBlockWeights w;
  w.in_proj = make_proj(cfg.backends.in_proj, cfg.d_model, 2 * di, mix_seed(seed, 0));
  w.x_proj = make_proj(cfg.backends.x_proj, di, r + 2 * ds, mix_seed(seed, 1));
  w.out_proj = make_proj(cfg.backends.out_proj, di, cfg.d_model, mix_seed(seed, 2));

  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_conv));
  w.conv_w = uniform_tensor({udi, static_cast<std::size_t>(cfg.d_conv)}, conv_bound, mix_seed(seed, 3));
  w.conv_b = uniform_tensor({udi}, conv_bound, mix_seed(seed, 4));
  w.dt_w = uniform_tensor({static_cast<std::size_t>(r), udi}, 1.0 / std::sqrt(static_cast<double>(r)),
                          mix_seed(seed, 5));

  // softplus(dt_b) log-uniform in [1e-3, 1e-1].
  Rng rng(mix_seed(seed, 6));
  std::vector<double> dt_b(udi);
  for (auto& b : dt_b) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    b = dt + std::log(-std::expm1(-dt));
  }
  w.dt_b = ad::Tensor::from({udi}, std::move(dt_b), true);

  const auto ssm0 = ssm::SsmParams::s4d_real(udi, uds);
  w.a_log = ad::Tensor::from({udi, uds}, ssm0.a_log, true);
  w.d = ad::Tensor::from({udi}, ssm0.d, true);
  return w;
}

void MambaBlockWeights::collect(const std::string& prefix, std::vector<Parameter>& out) const {
  in_proj.collect(prefix + ".in_proj", ParamGroup::in_proj, out);
  x_proj.collect(prefix + ".x_proj", ParamGroup::x_proj, out);
  out_proj.collect(prefix + ".out_proj", ParamGroup::out_proj, out);
  out.push_back({prefix + ".conv_w", ParamGroup::classical, conv_w});
  out.push_back({prefix + ".conv_b", ParamGroup::classical, conv_b});
  out.push_back({prefix + ".dt_proj.weight", ParamGroup::classical, dt_w});
  out.push_back({prefix + ".dt_proj.bias", ParamGroup::classical, dt_b});
  out.push_back({prefix + ".a_log", ParamGroup::classical, a_log});
  out.push_back({prefix + ".d", ParamGroup::classical, d});
}

ad::Tensor mamba_block_forward(const MambaLayerConfig& cfg, const MambaBlockWeights& w, const ad::Tensor& x) {
  const std::size_t di = cfg.d_inner(), ds = cfg.d_state, r = cfg.resolved_dt_rank();
  if (x.rank() != 3 || x.dim(2) != static_cast<std::size_t>(cfg.d_model)) {
    throw DimensionError("mamba block stage 'input': expected [B, L, " + std::to_string(cfg.d_model) +
                         "], got " + ad::shape_str(x.shape()));
  }
  const ad::Tensor xz = stage("in_proj", [&] { return w.in_proj.forward(x); });
  const ad::Tensor main = ad::slice_last(xz, 0, di);
  const ad::Tensor gate = ad::slice_last(xz, di, di);
  const ad::Tensor xc = stage("conv1d", [&] { return ad::silu(ad::conv1d_causal(main, w.conv_w, w.conv_b)); });
  const ad::Tensor dbc = stage("x_proj", [&] { return w.x_proj.forward(xc); });
  const ad::Tensor delta = stage("dt_proj", [&] {
    return ad::softplus(ad::add(ad::matmul(ad::slice_last(dbc, 0, r), w.dt_w), w.dt_b));
  });
  const ad::Tensor b = ad::slice_last(dbc, r, ds);
  const ad::Tensor c = ad::slice_last(dbc, r + ds, ds);
  const ad::Tensor y = stage("selective_scan", [&] {
    return ssm::selective_scan(xc, delta, ad::scale(ad::exp(w.a_log), -1.0), b, c, w.d);
  });
  const ad::Tensor gated = stage("gate", [&] { return ad::mul(y, ad::silu(gate)); });
  return stage("out_proj", [&] { return w.out_proj.forward(gated); });
}

// ---------------------------------------------------------------------------

ModelInput ModelInput::from_real(ad::Tensor x) {
  if (x.rank() != 3) throw DimensionError("real model input must be [B, L, F], got " + ad::shape_str(x.shape()));
  ModelInput in;
  in.mode = InputMode::real;
  in.batch = x.dim(0);
  in.length = x.dim(1);
  in.real = std::move(x);
  return in;
}

ModelInput ModelInput::from_bins(std::vector<int> bins, std::size_t batch, std::size_t length) {
  if (bins.size() != batch * length) throw DimensionError("bin input size does not match [B, L]");
  ModelInput in;
  in.mode = InputMode::bins;
  in.bins = std::move(bins);
  in.batch = batch;
  in.length = length;
  return in;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto dm = static_cast<std::size_t>(cfg_.layer.d_model);
  const auto seed = cfg_.seed;
  if (cfg_.input_mode == InputMode::real) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.input_features));
    lift_w_ = uniform_tensor({static_cast<std::size_t>(cfg_.input_features), dm}, bound, mix_seed(seed, 100));
    lift_b_ = uniform_tensor({dm}, bound, mix_seed(seed, 101));
    params_.push_back({"lift.weight", ParamGroup::classical, lift_w_});
    params_.push_back({"lift.bias", ParamGroup::classical, lift_b_});
  } else {
    embedding_ = uniform_tensor({256, dm}, 1.0, mix_seed(seed, 102));
    params_.push_back({"embedding", ParamGroup::classical, embedding_});
  }
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string prefix = "layers." + std::to_string(l);
    norm_w_.push_back(filled_tensor({dm}, 1.0));
    blocks_.push_back(MambaBlockWeights::init(cfg_.layer, mix_seed(seed, 200 + l)));
    params_.push_back({prefix + ".norm", ParamGroup::classical, norm_w_.back()});
    blocks_.back().collect(prefix + ".mixer", params_);
  }
  final_norm_w_ = filled_tensor({dm}, 1.0);
  const double head_bound = 0.1 / std::sqrt(static_cast<double>(dm));
  head_w_ = uniform_tensor({dm, static_cast<std::size_t>(cfg_.num_classes)}, head_bound, mix_seed(seed, 300));
  head_b_ = filled_tensor({static_cast<std::size_t>(cfg_.num_classes)}, 0.0);
  params_.push_back({"norm_f", ParamGroup::classical, final_norm_w_});
  params_.push_back({"head.weight", ParamGroup::classical, head_w_});
  params_.push_back({"head.bias", ParamGroup::classical, head_b_});

  // Grouping must be exhaustive and disjoint: every tensor appears once.
  std::map<std::string, int> names;
  std::map<const ad::Node*, int> nodes;
  for (const auto& p : params_) {
    if (++names[p.name] > 1 || ++nodes[p.tensor.node()] > 1) {
      throw ConsistencyError("parameter '" + p.name + "' registered twice");
    }
  }
}

ad::Tensor Model::forward(const ModelInput& input) const {
  if (input.mode != cfg_.input_mode) {
    throw ConfigError(std::string("model expects ") + (cfg_.input_mode == InputMode::real ? "real" : "bins") +
                      " input");
  }
  ad::Tensor h;
  if (input.mode == InputMode::real) {
    if (input.real.dim(2) != static_cast<std::size_t>(cfg_.input_features)) {
      throw DimensionError("model input features " + std::to_string(input.real.dim(2)) + " != " +
                           std::to_string(cfg_.input_features));
    }
    h = ad::add(ad::matmul(input.real, lift_w_), lift_b_);
  } else {
    h = ad::embedding_lookup(embedding_, input.bins, {input.batch, input.length});
  }
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    h = ad::add(h, mamba_block_forward(cfg_.layer, blocks_[l], ad::rmsnorm(h, norm_w_[l])));
  }
  const ad::Tensor pooled = ad::mean_axis(ad::rmsnorm(h, final_norm_w_), 1);
  return ad::add(ad::matmul(pooled, head_w_), head_b_);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

std::map<ParamGroup, std::size_t> Model::parameter_count_by_group() const {
  std::map<ParamGroup, std::size_t> out{{ParamGroup::in_proj, 0}, {ParamGroup::x_proj, 0},
                                        {ParamGroup::out_proj, 0}, {ParamGroup::classical, 0}};
  for (const auto& p : params_) out[p.group] += p.tensor.numel();
  return out;
}

void Model::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'H', 'Q', 'M', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, sizeof v);
    u64(v);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, sizeof d);
    return d;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::string read_header(Reader& r, const std::vector<std::uint8_t>& bytes) {
  r.need(8);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("not a checkpoint (bad magic)");
  r.skip(8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  return r.str();
}

void read_blocks(Reader& r, Model& model) {
  const auto& params = model.parameters();
  const std::uint32_t n = r.u32();
  if (n != params.size()) {
    throw ConfigError("checkpoint has " + std::to_string(n) + " blocks, model has " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const std::string name = r.str();
    if (name != p.name) throw ConfigError("checkpoint block '" + name + "' where model expects '" + p.name + "'");
    const std::uint32_t rank = r.u32();
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != p.tensor.shape()) {
      throw ConfigError("checkpoint block '" + name + "' has shape " + ad::shape_str(shape) + ", model expects " +
                        ad::shape_str(p.tensor.shape()));
    }
    ad::Tensor t = p.tensor;
    for (auto& v : t.mutable_data()) v = r.f64();
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint blocks");
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(model.config().to_text());
  w.u32(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) w.u64(d);
    for (double v : p.tensor.data()) w.f64(v);
  }
  return w.take();
}

Model decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  Model model(ModelConfig::from_text(read_header(r, bytes)));
  read_blocks(r, model);
  return model;
}

void load_checkpoint_into(Model& model, const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const ModelConfig cfg = ModelConfig::from_text(read_header(r, bytes));
  if (!(cfg == model.config())) throw ConfigError("checkpoint config does not match the model");
  read_blocks(r, model);
}

void save_checkpoint(const Model& model, const std::string& path) {
  const auto bytes = encode_checkpoint(model);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace hqmamba::mamba
