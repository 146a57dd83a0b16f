#include "hqmamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "hqmamba/ansatz.hpp"
#include "hqmamba/qsim.hpp"
#include "hqmamba/rng.hpp"

namespace hqmamba::gradcheck {

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / std::max(scale, kScaleFloor);
}

namespace {

std::vector<qsim::GateOp> random_circuit(Rng& rng, int n_qubits, int n_layers) {
  std::vector<qsim::GateOp> c;
  auto angle = [&] { return rng.uniform(0.0, 2.0 * std::numbers::pi); };
  for (int l = 0; l < n_layers; ++l) {
    for (int q = 0; q < n_qubits; ++q) {
      switch (rng.below(3)) {
        case 0:
          c.push_back(qsim::GateOp::ry(q, angle()));
          break;
        case 1:
          c.push_back(qsim::GateOp::rz(q, angle()));
          break;
        default:
          c.push_back(qsim::GateOp::rot3(q, angle(), angle(), angle()));
      }
    }
    if (n_qubits > 1) {
      const auto n_cnots = rng.below(static_cast<std::uint64_t>(n_qubits) + 1);
      for (std::uint64_t k = 0; k < n_cnots; ++k) {
        const int a = static_cast<int>(rng.below(n_qubits));
        int b = static_cast<int>(rng.below(n_qubits - 1));
        if (b >= a) ++b;
        c.push_back(qsim::GateOp::cnot(a, b));
      }
    }
  }
  return c;
}

double& angle_ref(std::vector<qsim::GateOp>& c, std::size_t flat) {
  for (auto& g : c) {
    const auto k = static_cast<std::size_t>(g.num_params());
    if (flat < k) return g.angles[flat];
    flat -= k;
  }
  throw std::out_of_range("angle index");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> normal_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

Result check_qsim(std::uint64_t seed, int n_circuits, double tolerance, double step) {
  Result r{"qsim", 0, 0, 0.0, 0, tolerance, {}};
  for (int k = 0; k < n_circuits; ++k) {
    Rng rng(mix_seed(seed, k));
    const int n = 1 + static_cast<int>(rng.below(4));
    const int layers = 1 + static_cast<int>(rng.below(3));
    auto circuit = random_circuit(rng, n, layers);
    const std::size_t dim = std::size_t{1} << n;
    const auto x = normal_vec(rng, 1 + rng.below(dim));
    const auto w = normal_vec(rng, dim);

    auto loss = [&](const std::vector<qsim::GateOp>& c, std::span<const double> input) {
      const auto enc = qsim::amplitude_encode(input, n);
      return dot(qsim::probabilities(qsim::run_circuit(enc, c)), w);
    };
    const auto g = qsim::backward_circuit(qsim::amplitude_encode(x, n), circuit, w);

    std::vector<double> analytic = g.angles, numeric;
    for (std::size_t i = 0; i < g.angles.size(); ++i) {
      double& a = angle_ref(circuit, i);
      const double a0 = a;
      a = a0 + step;
      const double up = loss(circuit, x);
      a = a0 - step;
      const double dn = loss(circuit, x);
      a = a0;
      numeric.push_back((up - dn) / (2 * step));
    }
    auto xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + step;
      const double up = loss(circuit, xp);
      xp[i] = x[i] - step;
      const double dn = loss(circuit, xp);
      xp[i] = x[i];
      numeric.push_back((up - dn) / (2 * step));
      analytic.push_back(g.input[i]);
    }
    const double e = relative_error(analytic, numeric);
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_instance = static_cast<std::size_t>(k);
    }
    r.values += analytic.size();
    ++r.instances;
  }
  return r;
}

Result check_ansatz(std::uint64_t seed, int n_instances, double tolerance, double step) {
  using ansatz::EntanglePattern;
  Result r{"ansatz", 0, 0, 0.0, 0, tolerance, {}};
  const EntanglePattern patterns[] = {EntanglePattern::ring, EntanglePattern::all_to_all, EntanglePattern::none};
  for (int k = 0; k < n_instances; ++k) {
    Rng rng(mix_seed(seed, k));
    const int d_in = 1 + static_cast<int>(rng.below(16));
    const int d_out = 1 + static_cast<int>(rng.below(4));
    const int layers = 1 + static_cast<int>(rng.below(3));
    const int max_q = 1 + static_cast<int>(rng.below(3));
    const auto cfg = ansatz::QuantumProjectorConfig::make(d_in, d_out, layers, patterns[rng.below(3)], max_q);
    auto w = ansatz::init_projector(cfg, rng.next_u64());
    const auto x = normal_vec(rng, d_in);
    const auto gout = normal_vec(rng, d_out);

    auto loss = [&](std::span<const double> input) { return dot(ansatz::quantum_project(cfg, w, input), gout); };
    const auto g = ansatz::quantum_project_backward(cfg, w, x, gout);

    std::vector<double> analytic, numeric;
    auto probe = [&](std::vector<double>& target, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < target.size(); ++i) {
        const double v0 = target[i];
        target[i] = v0 + step;
        const double up = loss(x);
        target[i] = v0 - step;
        const double dn = loss(x);
        target[i] = v0;
        numeric.push_back((up - dn) / (2 * step));
        analytic.push_back(grad[i]);
      }
    };
    probe(w.params.angles, g.angles);
    probe(w.readout_w, g.readout_w);
    probe(w.readout_b, g.readout_b);
    probe(w.compress_w, g.compress_w);
    probe(w.compress_b, g.compress_b);
    auto xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + step;
      const double up = loss(xp);
      xp[i] = x[i] - step;
      const double dn = loss(xp);
      xp[i] = x[i];
      numeric.push_back((up - dn) / (2 * step));
      analytic.push_back(g.input[i]);
    }
    const double e = relative_error(analytic, numeric);
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_instance = static_cast<std::size_t>(k);
    }
    r.values += analytic.size();
    ++r.instances;
  }
  return r;
}

mamba::ModelConfig tiny_hybrid_config(std::uint64_t seed) {
  mamba::ModelConfig cfg;
  cfg.layer.d_model = 2;
  cfg.layer.expand = 2;
  cfg.layer.d_state = 2;
  cfg.layer.d_conv = 2;
  cfg.layer.backends = mamba::BackendMap::all(mamba::Backend::quantum);
  cfg.layer.quantum = {1, ansatz::EntanglePattern::ring, 2};
  cfg.n_layers = 1;
  cfg.input_features = 1;
  cfg.num_classes = 3;
  cfg.seed = seed;
  return cfg;
}

Result check_model(const mamba::ModelConfig& cfg, std::uint64_t seed, std::size_t batch, std::size_t length,
                   double tolerance, double step) {
  Result r{"model", 1, 0, 0.0, 0, tolerance, {}};
  mamba::Model model(cfg);
  Rng rng(seed);
  std::vector<int> labels(batch);
  for (auto& l : labels) l = static_cast<int>(rng.below(cfg.num_classes));
  mamba::ModelInput input;
  if (cfg.input_mode == mamba::InputMode::real) {
    std::vector<double> x(batch * length * cfg.input_features);
    for (auto& v : x) v = rng.uniform();
    input = mamba::ModelInput::from_real(ad::Tensor::from({batch, length, std::size_t(cfg.input_features)}, x));
  } else {
    std::vector<int> bins(batch * length);
    for (auto& b : bins) b = static_cast<int>(rng.below(256));
    input = mamba::ModelInput::from_bins(bins, batch, length);
  }

  auto loss = [&] { return ad::softmax_cross_entropy(model.forward(input), labels); };
  model.zero_grad();
  ad::backward(loss());

  std::map<mamba::ParamGroup, std::vector<double>> analytic, numeric;
  for (const auto& p : model.parameters()) {
    ad::Tensor t = p.tensor;
    const auto g = t.grad();
    auto& an = analytic[p.group];
    auto& nu = numeric[p.group];
    ad::NoGradGuard no_grad;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      auto data = t.mutable_data();
      const double v0 = data[i];
      data[i] = v0 + step;
      const double up = loss().item();
      data[i] = v0 - step;
      const double dn = loss().item();
      data[i] = v0;
      nu.push_back((up - dn) / (2 * step));
      an.push_back(g.empty() ? 0.0 : g[i]);
    }
  }
  for (const auto& [group, an] : analytic) {
    const double e = relative_error(an, numeric[group]);
    r.by_group[mamba::to_string(group)] = e;
    r.max_rel_error = std::max(r.max_rel_error, e);
    r.values += an.size();
  }
  return r;
}

std::string format_result(const Result& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "gradcheck %-7s %s  instances=%zu values=%zu max_rel_error=%.3e (instance %zu) tol=%.1e\n",
                r.module.c_str(), r.passed() ? "PASS" : "FAIL", r.instances, r.values, r.max_rel_error,
                r.worst_instance, r.tolerance);
  std::string out = buf;
  for (const auto& [g, e] : r.by_group) {
    std::snprintf(buf, sizeof buf, "  group %-10s max_rel_error=%.3e\n", g.c_str(), e);
    out += buf;
  }
  return out;
}

}  // namespace hqmamba::gradcheck
