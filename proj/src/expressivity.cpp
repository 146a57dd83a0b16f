#include "hqmamba/expressivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "hqmamba/errors.hpp"
#include "hqmamba/kernels.hpp"
#include "hqmamba/rng.hpp"

namespace hqmamba::expressivity {

namespace {

void check_dim(long n) {
  if (n < 2) throw DomainError("Hilbert dimension must be >= 2, got " + std::to_string(n));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double haar_pdf(double fidelity, long hilbert_dim) {
  check_dim(hilbert_dim);
  return static_cast<double>(hilbert_dim - 1) *
         std::pow(1.0 - fidelity, static_cast<double>(hilbert_dim - 2));
}

double haar_bin_mass(double lo, double hi, long hilbert_dim) {
  check_dim(hilbert_dim);
  const double e = static_cast<double>(hilbert_dim - 1);
  return std::pow(1.0 - lo, e) - std::pow(1.0 - hi, e);
}

double haar_frame_potential(int t, long hilbert_dim) {
  check_dim(hilbert_dim);
  // t!(N-1)!/(N-1+t)! = prod_{k=1..t} k / (N-1+k)
  double v = 1.0;
  for (int k = 1; k <= t; ++k) v *= static_cast<double>(k) / static_cast<double>(hilbert_dim - 1 + k);
  return v;
}

double haar_fidelity_from_uniform(double u, long hilbert_dim) {
  check_dim(hilbert_dim);
  // CDF(F) = 1 - (1-F)^(N-1)
  return 1.0 - std::pow(1.0 - u, 1.0 / static_cast<double>(hilbert_dim - 1));
}

FidelityHistogram FidelityHistogram::build(std::span<const double> fidelities, int n_bins) {
  if (n_bins < 1) throw DomainError("n_bins must be >= 1");
  FidelityHistogram h;
  h.n_bins = n_bins;
  h.counts.assign(n_bins, 0);
  for (double f : fidelities) {
    const double c = std::clamp(f, 0.0, 1.0);
    const int b = std::min(static_cast<int>(c * n_bins), n_bins - 1);
    ++h.counts[b];
  }
  h.n_samples = static_cast<long>(fidelities.size());
  return h;
}

std::vector<double> sample_fidelities(const ansatz::AnsatzConfig& cfg, long n_pairs,
                                      std::uint64_t seed) {
  cfg.validate();
  if (n_pairs < 1) throw DomainError("n_pairs must be >= 1");
  std::vector<double> out(n_pairs);
  const qsim::EncodeResult zero{qsim::Statevector(cfg.n_qubits), 1.0,
                                std::size_t{1} << cfg.n_qubits, 0};
  const bool parallel = kernels::exec_policy() == kernels::Exec::parallel;
#pragma omp parallel for schedule(static) if (parallel)
  for (long k = 0; k < n_pairs; ++k) {
    const auto theta = ansatz::init_params(cfg, mix_seed(seed, 2 * static_cast<std::uint64_t>(k)));
    const auto phi = ansatz::init_params(cfg, mix_seed(seed, 2 * static_cast<std::uint64_t>(k) + 1));
    const auto a = qsim::run_circuit(zero, ansatz::build_circuit(cfg, theta));
    const auto b = qsim::run_circuit(zero, ansatz::build_circuit(cfg, phi));
    out[k] = qsim::fidelity(a, b);
  }
  return out;
}

double kl_expressivity(const FidelityHistogram& hist, long hilbert_dim) {
  if (hist.n_samples <= 0) throw DomainError("empty fidelity histogram");
  check_dim(hilbert_dim);
  double kl = 0.0;
  for (int b = 0; b < hist.n_bins; ++b) {
    if (hist.counts[b] == 0) continue;
    const double p = static_cast<double>(hist.counts[b]) / static_cast<double>(hist.n_samples);
    const double q = std::max(haar_bin_mass(hist.lower_edge(b), hist.upper_edge(b), hilbert_dim), 1e-300);
    kl += p * std::log(p / q);
  }
  return kl;
}

double frame_potential(std::span<const double> fidelities, int t) {
  if (fidelities.empty()) throw DomainError("frame potential of an empty sample");
  if (t < 1) throw DomainError("frame potential order must be >= 1");
  double acc = 0.0;
  for (double f : fidelities) acc += std::pow(f, t);
  return acc / static_cast<double>(fidelities.size());
}

double expr_max(long hilbert_dim, int n_bins) {
  return static_cast<double>(hilbert_dim - 1) * std::log(static_cast<double>(n_bins));
}

ExpressivityReport analyze(const ansatz::AnsatzConfig& cfg, long n_pairs, int n_bins,
                           std::uint64_t seed, std::vector<double>* samples_out) {
  auto samples = sample_fidelities(cfg, n_pairs, seed);
  const long dim = 1L << cfg.n_qubits;
  const auto hist = FidelityHistogram::build(samples, n_bins);

  ExpressivityReport r;
  r.n_qubits = cfg.n_qubits;
  r.n_layers = cfg.n_layers;
  r.pattern = ansatz::to_string(cfg.pattern);
  r.n_pairs = n_pairs;
  r.n_bins = n_bins;
  r.seed = seed;
  r.hilbert_dim = dim;
  r.expr_kl = kl_expressivity(hist, dim);
  r.expr_max = expr_max(dim, n_bins);
  for (int t : {1, 2}) {
    r.frame_potentials[t] = frame_potential(samples, t);
    r.haar_frame_potentials[t] = haar_frame_potential(t, dim);
  }
  if (samples_out) *samples_out = std::move(samples);
  return r;
}

std::string format_report(const ExpressivityReport& r) {
  std::ostringstream os;
  os << "# ansatz expressivity report\n";
  os << "format = hqmamba-expressivity/1\n";
  os << "n_qubits = " << r.n_qubits << "\n";
  os << "n_layers = " << r.n_layers << "\n";
  os << "pattern = " << r.pattern << "\n";
  os << "n_pairs = " << r.n_pairs << "\n";
  os << "n_bins = " << r.n_bins << "\n";
  os << "seed = " << r.seed << "\n";
  os << "hilbert_dim = " << r.hilbert_dim << "\n";
  os << "expr_kl = " << fmt_double(r.expr_kl) << "\n";
  os << "expr_max = " << fmt_double(r.expr_max) << "\n";
  for (const auto& [t, v] : r.frame_potentials) os << "frame_potential_" << t << " = " << fmt_double(v) << "\n";
  for (const auto& [t, v] : r.haar_frame_potentials)
    os << "haar_frame_potential_" << t << " = " << fmt_double(v) << "\n";
  return os.str();
}

ExpressivityReport parse_report(const std::string& text) {
  ExpressivityReport r;
  std::istringstream is(text);
  std::string line;
  bool saw_format = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("report line without '=': " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "format") {
      if (val != "hqmamba-expressivity/1") throw FormatError("unsupported report format " + val);
      saw_format = true;
    } else if (key == "n_qubits") {
      r.n_qubits = std::stoi(val);
    } else if (key == "n_layers") {
      r.n_layers = std::stoi(val);
    } else if (key == "pattern") {
      r.pattern = val;
    } else if (key == "n_pairs") {
      r.n_pairs = std::stol(val);
    } else if (key == "n_bins") {
      r.n_bins = std::stoi(val);
    } else if (key == "seed") {
      r.seed = std::stoull(val);
    } else if (key == "hilbert_dim") {
      r.hilbert_dim = std::stol(val);
    } else if (key == "expr_kl") {
      r.expr_kl = std::stod(val);
    } else if (key == "expr_max") {
      r.expr_max = std::stod(val);
    } else if (key.rfind("haar_frame_potential_", 0) == 0) {
      r.haar_frame_potentials[std::stoi(key.substr(21))] = std::stod(val);
    } else if (key.rfind("frame_potential_", 0) == 0) {
      r.frame_potentials[std::stoi(key.substr(16))] = std::stod(val);
    } else {
      throw FormatError("unknown report key '" + key + "'");
    }
  }
  if (!saw_format) throw FormatError("report has no format line");
  return r;
}

void write_samples_csv(std::ostream& os, std::span<const double> fidelities) {
  os << "index,fidelity\n";
  for (std::size_t i = 0; i < fidelities.size(); ++i) os << i << ',' << fmt_double(fidelities[i]) << '\n';
}

}  // namespace hqmamba::expressivity
