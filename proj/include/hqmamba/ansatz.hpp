#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hqmamba/qsim.hpp"

namespace hqmamba::ansatz {

/// `none` is the rotations-only circuit used as an expressivity baseline.
enum class EntanglePattern { ring, all_to_all, none };

EntanglePattern parse_pattern(const std::string& name);
std::string to_string(EntanglePattern p);

/// Layered circuit: each layer is one ROT3 per qubit followed by the entangler
/// pattern. n_layers == 0 is the idle circuit (only meaningful for expressivity
/// sampling; projectors require at least one layer).
struct AnsatzConfig {
  int n_qubits = 1;
  int n_layers = 1;
  EntanglePattern pattern = EntanglePattern::ring;

  void validate() const;
  std::size_t num_angles() const { return static_cast<std::size_t>(n_layers) * n_qubits * 3; }
  bool operator==(const AnsatzConfig&) const = default;
};

/// Angles laid out as [n_layers, n_qubits, 3] in row-major order.
struct AnsatzParams {
  int n_layers = 0;
  int n_qubits = 0;
  std::vector<double> angles;

  double& at(int layer, int qubit, int k) { return angles[(layer * n_qubits + qubit) * 3 + k]; }
  double at(int layer, int qubit, int k) const {
    return angles[(layer * n_qubits + qubit) * 3 + k];
  }
};

/// Number of CNOTs one layer contributes.
std::size_t entanglers_per_layer(const AnsatzConfig& cfg);

std::vector<qsim::GateOp> build_circuit(const AnsatzConfig& cfg, const AnsatzParams& params);

/// Angles i.i.d. uniform on [0, 2*pi) from a seeded mt19937_64.
AnsatzParams init_params(const AnsatzConfig& cfg, std::uint64_t seed);

/// ceil(log2(max(d_in, 2))) capped at max_qubits.
int qubits_for(int d_in, int max_qubits);

struct QuantumProjectorConfig {
  int d_in = 1;
  int d_out = 1;
  AnsatzConfig ansatz;
  int max_qubits = 8;

  /// Derives ansatz.n_qubits from d_in and max_qubits.
  static QuantumProjectorConfig make(int d_in, int d_out, int n_layers = 1,
                                     EntanglePattern pattern = EntanglePattern::ring,
                                     int max_qubits = 8);

  std::size_t amplitude_dim() const { return std::size_t{1} << ansatz.n_qubits; }
  /// True when d_in exceeds the register size and a trainable affine
  /// pre-compression d_in -> 2^n_qubits is part of the projector.
  bool compresses() const { return static_cast<std::size_t>(d_in) > amplitude_dim(); }
  /// Length of the vector handed to amplitude encoding.
  std::size_t encoded_len() const {
    return compresses() ? amplitude_dim() : static_cast<std::size_t>(d_in);
  }
  void validate() const;
};

/// Trainable state of one projector. Matrices are row-major: readout_w is
/// [2^n, d_out], compress_w is [d_in, 2^n] (empty when not compressing).
struct QuantumProjectorWeights {
  AnsatzParams params;
  std::vector<double> readout_w;
  std::vector<double> readout_b;
  std::vector<double> compress_w;
  std::vector<double> compress_b;
};

QuantumProjectorWeights init_projector(const QuantumProjectorConfig& cfg, std::uint64_t seed);

/// ||x|| * probabilities(U(theta) |x / ||x||>): the pre-readout quantum features.
std::vector<double> quantum_features(const AnsatzConfig& cfg, const AnsatzParams& params,
                                     std::span<const double> x);

struct FeatureGradients {
  std::vector<double> angles;
  std::vector<double> input;
};

FeatureGradients quantum_features_backward(const AnsatzConfig& cfg, const AnsatzParams& params,
                                           std::span<const double> x,
                                           std::span<const double> grad_features);

// Same two operations over a prebuilt circuit; the batched kernels build the
// circuit once and call these per row.
std::vector<double> quantum_features(std::span<const qsim::GateOp> circuit, int n_qubits,
                                     std::span<const double> x);
FeatureGradients quantum_features_backward(std::span<const qsim::GateOp> circuit, int n_qubits,
                                           std::span<const double> x,
                                           std::span<const double> grad_features);

/// readout_w^T * quantum_features(compress(x)) + readout_b.
std::vector<double> quantum_project(const QuantumProjectorConfig& cfg,
                                    const QuantumProjectorWeights& w, std::span<const double> x);

struct QuantumProjectorGradients {
  std::vector<double> angles;
  std::vector<double> readout_w;
  std::vector<double> readout_b;
  std::vector<double> input;
  std::vector<double> compress_w;
  std::vector<double> compress_b;
};

QuantumProjectorGradients quantum_project_backward(const QuantumProjectorConfig& cfg,
                                                   const QuantumProjectorWeights& w,
                                                   std::span<const double> x,
                                                   std::span<const double> grad_out);

}  // namespace hqmamba::ansatz
