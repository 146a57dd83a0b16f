#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace hqmamba::qsim {

using Complex = std::complex<double>;

/// Pure n-qubit state. Qubit 0 is the most significant bit of the basis index,
/// so |q0 q1 ... q_{n-1}> is stored at index q0*2^{n-1} + ... + q_{n-1}.
class Statevector {
 public:
  /// |0...0> on n qubits.
  explicit Statevector(int n_qubits);
  Statevector(int n_qubits, std::vector<Complex> amps);

  int n_qubits() const { return n_qubits_; }
  std::size_t dim() const { return amps_.size(); }
  std::span<const Complex> amps() const { return amps_; }
  std::span<Complex> amps() { return amps_; }
  Complex operator[](std::size_t i) const { return amps_[i]; }

  /// Euclidean norm of the amplitude vector.
  double norm() const;

 private:
  int n_qubits_;
  std::vector<Complex> amps_;
};

enum class GateKind { RY, RZ, ROT3, CNOT };

/// One circuit instruction. ROT3 on a qubit is RZ(a0) * RY(a1) * RZ(a2) as a
/// matrix product, i.e. RZ(a2) acts first.
struct GateOp {
  GateKind kind = GateKind::RY;
  int target = 0;
  int control = -1;
  std::array<double, 3> angles{};

  static GateOp ry(int target, double theta);
  static GateOp rz(int target, double theta);
  static GateOp rot3(int target, double alpha, double beta, double gamma);
  static GateOp cnot(int control, int target);

  /// Number of trainable angles this gate carries (0, 1 or 3).
  int num_params() const;
};

struct EncodeResult {
  Statevector state;
  double norm = 0.0;            // ||x||_2 before normalization (0 for a zero input)
  std::size_t padded_len = 0;   // 2^n_qubits
  std::size_t input_len = 0;    // length of the raw input
};

/// Zero-pads x to 2^n_qubits and normalizes. Inputs with ||x|| < 1e-12 encode
/// to |0...0> with norm 0.
EncodeResult amplitude_encode(std::span<const double> x, int n_qubits);

void apply_gate_inplace(Statevector& s, const GateOp& g);
Statevector apply_gate(Statevector s, const GateOp& g);

std::vector<double> probabilities(const Statevector& s);

/// |<a|b>|^2.
double fidelity(const Statevector& a, const Statevector& b);

/// Applies the gates left to right to enc.state.
Statevector run_circuit(const EncodeResult& enc, std::span<const GateOp> circuit);

/// Total trainable angles in a circuit, in gate order.
std::size_t count_params(std::span<const GateOp> circuit);

struct CircuitGradients {
  std::vector<double> angles;  // dL/dtheta, gate order, ROT3 as (a0, a1, a2)
  std::vector<double> input;   // dL/dx for the raw pre-normalization input
};

/// Exact reverse-mode gradient of L = sum_i grad_probs[i] * p_i, where p is the
/// output probability vector of run_circuit(enc, circuit). The input gradient
/// includes the Jacobian of the normalization and is zero when enc.norm == 0.
CircuitGradients backward_circuit(const EncodeResult& enc, std::span<const GateOp> circuit,
                                  std::span<const double> grad_probs);

}  // namespace hqmamba::qsim
