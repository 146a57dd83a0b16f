#include "hqmamba/ansatz.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hqmamba/errors.hpp"
#include "hqmamba/rng.hpp"

namespace hqmamba::ansatz {

EntanglePattern parse_pattern(const std::string& name) {
  if (name == "ring") return EntanglePattern::ring;
  if (name == "all_to_all") return EntanglePattern::all_to_all;
  if (name == "none") return EntanglePattern::none;
  throw ConfigError("unknown entangle pattern '" + name + "' (expected ring|all_to_all|none)");
}

std::string to_string(EntanglePattern p) {
  switch (p) {
    case EntanglePattern::ring:
      return "ring";
    case EntanglePattern::all_to_all:
      return "all_to_all";
    case EntanglePattern::none:
      return "none";
  }
  return "?";
}

void AnsatzConfig::validate() const {
  if (n_qubits < 1 || n_qubits > 20) {
    throw ConfigError("ansatz n_qubits must be in [1, 20], got " + std::to_string(n_qubits));
  }
  if (n_layers < 0) throw ConfigError("ansatz n_layers must be >= 0");
}

std::size_t entanglers_per_layer(const AnsatzConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.n_qubits);
  switch (cfg.pattern) {
    case EntanglePattern::none:
      return 0;
    case EntanglePattern::all_to_all:
      return n * (n - 1) / 2;
    case EntanglePattern::ring:
      // Edges of the cycle graph: C_1 has none, C_2 a single link.
      return n < 2 ? 0 : (n == 2 ? 1 : n);
  }
  return 0;
}

std::vector<qsim::GateOp> build_circuit(const AnsatzConfig& cfg, const AnsatzParams& params) {
  cfg.validate();
  if (params.n_layers != cfg.n_layers || params.n_qubits != cfg.n_qubits ||
      params.angles.size() != cfg.num_angles()) {
    throw ConfigError("ansatz params shape [" + std::to_string(params.n_layers) + "," +
                      std::to_string(params.n_qubits) + ",3] does not match config [" +
                      std::to_string(cfg.n_layers) + "," + std::to_string(cfg.n_qubits) + ",3]");
  }
  const int n = cfg.n_qubits;
  std::vector<qsim::GateOp> ops;
  ops.reserve(cfg.n_layers * (n + entanglers_per_layer(cfg)));
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int q = 0; q < n; ++q) {
      ops.push_back(qsim::GateOp::rot3(q, params.at(l, q, 0), params.at(l, q, 1), params.at(l, q, 2)));
    }
    switch (cfg.pattern) {
      case EntanglePattern::none:
        break;
      case EntanglePattern::ring:
        if (n == 2) {
          ops.push_back(qsim::GateOp::cnot(0, 1));
        } else if (n > 2) {
          for (int q = 0; q < n; ++q) ops.push_back(qsim::GateOp::cnot(q, (q + 1) % n));
        }
        break;
      case EntanglePattern::all_to_all:
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j) ops.push_back(qsim::GateOp::cnot(i, j));
        break;
    }
  }
  return ops;
}

AnsatzParams init_params(const AnsatzConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  AnsatzParams p{cfg.n_layers, cfg.n_qubits, std::vector<double>(cfg.num_angles())};
  for (auto& a : p.angles) a = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return p;
}

int qubits_for(int d_in, int max_qubits) {
  int n = 1;
  while ((1 << n) < std::max(d_in, 2)) ++n;
  return std::min(n, max_qubits);
}

QuantumProjectorConfig QuantumProjectorConfig::make(int d_in, int d_out, int n_layers,
                                                    EntanglePattern pattern, int max_qubits) {
  QuantumProjectorConfig cfg;
  cfg.d_in = d_in;
  cfg.d_out = d_out;
  cfg.max_qubits = max_qubits;
  cfg.ansatz = {qubits_for(d_in, max_qubits), n_layers, pattern};
  cfg.validate();
  return cfg;
}

void QuantumProjectorConfig::validate() const {
  if (d_in < 1 || d_out < 1) throw ConfigError("projector dims must be >= 1");
  if (max_qubits < 1) throw ConfigError("max_qubits must be >= 1");
  if (ansatz.n_qubits != qubits_for(d_in, max_qubits)) {
    throw ConfigError("projector n_qubits " + std::to_string(ansatz.n_qubits) +
                      " inconsistent with d_in " + std::to_string(d_in));
  }
  if (ansatz.n_layers < 1) throw ConfigError("projector needs at least one ansatz layer");
  ansatz.validate();
}

QuantumProjectorWeights init_projector(const QuantumProjectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  QuantumProjectorWeights w;
  w.params = init_params(cfg.ansatz, mix_seed(seed, 0));
  Rng rng(mix_seed(seed, 1));
  const std::size_t dim = cfg.amplitude_dim();
  // Features are ||x|| * p with sum(p) = 1, so ||features||^2 is about
  // 2 ||x||^2 / dim for a well-spread state. This bound gives the readout the
  // output scale of a classical projection with bound 1/sqrt(encoded_len).
  const double len = static_cast<double>(cfg.encoded_len());
  const double rb = std::sqrt(static_cast<double>(dim) / (2.0 * len));
  w.readout_w.resize(dim * cfg.d_out);
  for (auto& v : w.readout_w) v = rng.uniform(-rb, rb);
  const double bb = 1.0 / std::sqrt(len);
  w.readout_b.resize(cfg.d_out);
  for (auto& v : w.readout_b) v = rng.uniform(-bb, bb);
  if (cfg.compresses()) {
    const double rc = 1.0 / std::sqrt(static_cast<double>(cfg.d_in));
    w.compress_w.resize(static_cast<std::size_t>(cfg.d_in) * dim);
    for (auto& v : w.compress_w) v = rng.uniform(-rc, rc);
    w.compress_b.resize(dim);
    for (auto& v : w.compress_b) v = rng.uniform(-rc, rc);
  }
  return w;
}

std::vector<double> quantum_features(std::span<const qsim::GateOp> circuit, int n_qubits,
                                     std::span<const double> x) {
  const auto enc = qsim::amplitude_encode(x, n_qubits);
  auto feats = qsim::probabilities(qsim::run_circuit(enc, circuit));
  for (auto& f : feats) f *= enc.norm;
  return feats;
}

FeatureGradients quantum_features_backward(std::span<const qsim::GateOp> circuit, int n_qubits,
                                           std::span<const double> x,
                                           std::span<const double> grad_features) {
  const auto enc = qsim::amplitude_encode(x, n_qubits);
  if (grad_features.size() != enc.padded_len) {
    throw DimensionError("feature gradient length " + std::to_string(grad_features.size()) +
                         " != " + std::to_string(enc.padded_len));
  }
  FeatureGradients g{std::vector<double>(qsim::count_params(circuit), 0.0),
                     std::vector<double>(x.size(), 0.0)};
  if (enc.norm == 0.0) return g;

  // f = ||x|| p(x / ||x||): the norm factor scales the circuit gradient, and
  // d||x||/dx = x / ||x|| contributes (g . p) x / ||x||.
  const auto probs = qsim::probabilities(qsim::run_circuit(enc, circuit));
  double gp = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) gp += grad_features[i] * probs[i];
  const auto cg = qsim::backward_circuit(enc, circuit, grad_features);
  for (std::size_t i = 0; i < g.angles.size(); ++i) g.angles[i] = enc.norm * cg.angles[i];
  for (std::size_t i = 0; i < x.size(); ++i) g.input[i] = gp * x[i] / enc.norm + enc.norm * cg.input[i];
  return g;
}

std::vector<double> quantum_features(const AnsatzConfig& cfg, const AnsatzParams& params,
                                     std::span<const double> x) {
  return quantum_features(build_circuit(cfg, params), cfg.n_qubits, x);
}

FeatureGradients quantum_features_backward(const AnsatzConfig& cfg, const AnsatzParams& params,
                                           std::span<const double> x,
                                           std::span<const double> grad_features) {
  return quantum_features_backward(build_circuit(cfg, params), cfg.n_qubits, x, grad_features);
}

namespace {

void check_projector_shapes(const QuantumProjectorConfig& cfg, const QuantumProjectorWeights& w,
                            std::size_t x_len) {
  cfg.validate();
  const std::size_t dim = cfg.amplitude_dim();
  if (x_len != static_cast<std::size_t>(cfg.d_in)) {
    throw DimensionError("projector input length " + std::to_string(x_len) + " != d_in " +
                         std::to_string(cfg.d_in));
  }
  if (w.readout_w.size() != dim * cfg.d_out || w.readout_b.size() != static_cast<std::size_t>(cfg.d_out)) {
    throw DimensionError("readout shape does not match [" + std::to_string(dim) + "," +
                         std::to_string(cfg.d_out) + "]");
  }
  const std::size_t cw = cfg.compresses() ? static_cast<std::size_t>(cfg.d_in) * dim : 0;
  const std::size_t cb = cfg.compresses() ? dim : 0;
  if (w.compress_w.size() != cw || w.compress_b.size() != cb) {
    throw DimensionError("pre-compression shape does not match projector config");
  }
}

std::vector<double> compress(const QuantumProjectorConfig& cfg, const QuantumProjectorWeights& w,
                             std::span<const double> x) {
  if (!cfg.compresses()) return {x.begin(), x.end()};
  const std::size_t dim = cfg.amplitude_dim();
  std::vector<double> out(w.compress_b);
  for (int i = 0; i < cfg.d_in; ++i)
    for (std::size_t j = 0; j < dim; ++j) out[j] += x[i] * w.compress_w[i * dim + j];
  return out;
}

}  // namespace

std::vector<double> quantum_project(const QuantumProjectorConfig& cfg,
                                    const QuantumProjectorWeights& w, std::span<const double> x) {
  check_projector_shapes(cfg, w, x.size());
  const auto xc = compress(cfg, w, x);
  const auto feats = quantum_features(cfg.ansatz, w.params, xc);
  std::vector<double> out(w.readout_b);
  for (std::size_t k = 0; k < feats.size(); ++k)
    for (int o = 0; o < cfg.d_out; ++o) out[o] += feats[k] * w.readout_w[k * cfg.d_out + o];
  return out;
}

QuantumProjectorGradients quantum_project_backward(const QuantumProjectorConfig& cfg,
                                                   const QuantumProjectorWeights& w,
                                                   std::span<const double> x,
                                                   std::span<const double> grad_out) {
  check_projector_shapes(cfg, w, x.size());
  if (grad_out.size() != static_cast<std::size_t>(cfg.d_out)) {
    throw DimensionError("grad_out length " + std::to_string(grad_out.size()) + " != d_out " +
                         std::to_string(cfg.d_out));
  }
  const std::size_t dim = cfg.amplitude_dim();
  const auto xc = compress(cfg, w, x);
  const auto feats = quantum_features(cfg.ansatz, w.params, xc);

  QuantumProjectorGradients g;
  g.readout_b.assign(grad_out.begin(), grad_out.end());
  g.readout_w.assign(dim * cfg.d_out, 0.0);
  std::vector<double> grad_feats(dim, 0.0);
  for (std::size_t k = 0; k < dim; ++k) {
    for (int o = 0; o < cfg.d_out; ++o) {
      g.readout_w[k * cfg.d_out + o] = feats[k] * grad_out[o];
      grad_feats[k] += w.readout_w[k * cfg.d_out + o] * grad_out[o];
    }
  }
  auto fg = quantum_features_backward(cfg.ansatz, w.params, xc, grad_feats);
  g.angles = std::move(fg.angles);
  if (!cfg.compresses()) {
    g.input = std::move(fg.input);
    return g;
  }
  g.compress_b = fg.input;
  g.compress_w.assign(static_cast<std::size_t>(cfg.d_in) * dim, 0.0);
  g.input.assign(cfg.d_in, 0.0);
  for (int i = 0; i < cfg.d_in; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      g.compress_w[i * dim + j] = x[i] * fg.input[j];
      g.input[i] += w.compress_w[i * dim + j] * fg.input[j];
    }
  }
  return g;
}

}  // namespace hqmamba::ansatz
