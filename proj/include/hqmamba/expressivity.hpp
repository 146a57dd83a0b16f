#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hqmamba/ansatz.hpp"

namespace hqmamba::expressivity {

/// Fidelity density of Haar-random pure states in dimension N: (N-1)(1-F)^(N-2).
double haar_pdf(double fidelity, long hilbert_dim);

/// Haar probability mass of the fidelity interval [lo, hi], in closed form:
/// (1-lo)^(N-1) - (1-hi)^(N-1).
double haar_bin_mass(double lo, double hi, long hilbert_dim);

/// E_Haar[F^t] = t! (N-1)! / (N-1+t)!.
double haar_frame_potential(int t, long hilbert_dim);

/// Inverse-CDF draw from the Haar fidelity law for a uniform u in [0, 1).
double haar_fidelity_from_uniform(double u, long hilbert_dim);

struct FidelityHistogram {
  int n_bins = 75;
  std::vector<long> counts;
  long n_samples = 0;

  /// Uniform bins over [0, 1]; bin b is [b/n, (b+1)/n) except the last, which
  /// is closed on the right. Samples outside [0, 1] by rounding are clamped.
  static FidelityHistogram build(std::span<const double> fidelities, int n_bins = 75);

  double lower_edge(int bin) const { return static_cast<double>(bin) / n_bins; }
  double upper_edge(int bin) const { return static_cast<double>(bin + 1) / n_bins; }
};

/// Fidelities of n_pairs independent (theta, phi) draws of the ansatz applied
/// to |0...0>. Pair k uses parameter seeds mix_seed(seed, 2k) and
/// mix_seed(seed, 2k + 1), so the result does not depend on scheduling.
std::vector<double> sample_fidelities(const ansatz::AnsatzConfig& cfg, long n_pairs,
                                      std::uint64_t seed);

/// Discrete KL(P_hat || P_Haar) over the histogram bins.
double kl_expressivity(const FidelityHistogram& hist, long hilbert_dim);

/// Mean of F^t over the samples.
double frame_potential(std::span<const double> fidelities, int t);

/// (N-1) ln(n_bins), reported as printed in the source formula.
double expr_max(long hilbert_dim, int n_bins);

struct ExpressivityReport {
  int n_qubits = 1;
  int n_layers = 1;
  std::string pattern = "ring";
  long n_pairs = 0;
  int n_bins = 75;
  std::uint64_t seed = 0;
  long hilbert_dim = 2;
  double expr_kl = 0.0;
  double expr_max = 0.0;
  std::map<int, double> frame_potentials;
  std::map<int, double> haar_frame_potentials;
};

/// Samples, histograms and summarizes an ansatz. When samples_out is non-null
/// the raw fidelities are returned through it.
ExpressivityReport analyze(const ansatz::AnsatzConfig& cfg, long n_pairs, int n_bins,
                           std::uint64_t seed, std::vector<double>* samples_out = nullptr);

/// Key-value text document, one `key = value` per line, `#` comments.
/// Schema (version 1): format, n_qubits, n_layers, pattern, n_pairs, n_bins,
/// seed, hilbert_dim, expr_kl, expr_max, frame_potential_1, frame_potential_2,
/// haar_frame_potential_1, haar_frame_potential_2.
std::string format_report(const ExpressivityReport& r);
ExpressivityReport parse_report(const std::string& text);

/// CSV with header `index,fidelity`.
void write_samples_csv(std::ostream& os, std::span<const double> fidelities);

}  // namespace hqmamba::expressivity
