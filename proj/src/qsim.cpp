#include "hqmamba/qsim.hpp"

#include <cmath>
#include <string>

#include "hqmamba/errors.hpp"

namespace hqmamba::qsim {

namespace {

constexpr int kMaxQubits = 30;

std::size_t qubit_mask(int n_qubits, int q) { return std::size_t{1} << (n_qubits - 1 - q); }

void check_qubit(int n_qubits, int q, const char* what) {
  if (q < 0 || q >= n_qubits) {
    throw DimensionError(std::string(what) + " qubit index " + std::to_string(q) +
                         " out of range for " + std::to_string(n_qubits) + " qubits");
  }
}

// Applies the 2x2 matrix [[u00, u01], [u10, u11]] to qubit q.
void apply_1q(std::span<Complex> amps, int n_qubits, int q, Complex u00, Complex u01, Complex u10,
              Complex u11) {
  const std::size_t mask = qubit_mask(n_qubits, q);
  const std::size_t dim = amps.size();
  for (std::size_t i = 0; i < dim; ++i) {
    if (i & mask) continue;
    const Complex a0 = amps[i];
    const Complex a1 = amps[i | mask];
    amps[i] = u00 * a0 + u01 * a1;
    amps[i | mask] = u10 * a0 + u11 * a1;
  }
}

void apply_ry(std::span<Complex> amps, int n, int q, double theta) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  apply_1q(amps, n, q, c, -s, s, c);
}

void apply_rz(std::span<Complex> amps, int n, int q, double theta) {
  const std::size_t mask = qubit_mask(n, q);
  const Complex p0 = std::polar(1.0, -theta / 2), p1 = std::polar(1.0, theta / 2);
  for (std::size_t i = 0; i < amps.size(); ++i) amps[i] *= (i & mask) ? p1 : p0;
}

void apply_cnot(std::span<Complex> amps, int n, int control, int target) {
  const std::size_t cm = qubit_mask(n, control), tm = qubit_mask(n, target);
  for (std::size_t i = 0; i < amps.size(); ++i) {
    if ((i & cm) && !(i & tm)) std::swap(amps[i], amps[i | tm]);
  }
}

// <mu| P |phi> with P = Y or Z on qubit q.
Complex pauli_expect(std::span<const Complex> mu, std::span<const Complex> phi, int n, int q,
                     bool is_y) {
  const std::size_t mask = qubit_mask(n, q);
  Complex acc{0.0, 0.0};
  const Complex i_unit{0.0, 1.0};
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (i & mask) continue;
    const std::size_t j = i | mask;
    if (is_y) {
      acc += std::conj(mu[i]) * (-i_unit * phi[j]) + std::conj(mu[j]) * (i_unit * phi[i]);
    } else {
      acc += std::conj(mu[i]) * phi[i] - std::conj(mu[j]) * phi[j];
    }
  }
  return acc;
}

void validate(const Statevector& s, const GateOp& g) {
  check_qubit(s.n_qubits(), g.target, "target");
  if (g.kind == GateKind::CNOT) {
    check_qubit(s.n_qubits(), g.control, "control");
    if (g.control == g.target) throw DimensionError("CNOT control equals target");
  }
}

}  // namespace

Statevector::Statevector(int n_qubits) : n_qubits_(n_qubits) {
  if (n_qubits < 0 || n_qubits > kMaxQubits) {
    throw DimensionError("unsupported qubit count " + std::to_string(n_qubits));
  }
  amps_.assign(std::size_t{1} << n_qubits, Complex{0.0, 0.0});
  amps_[0] = 1.0;
}

Statevector::Statevector(int n_qubits, std::vector<Complex> amps)
    : n_qubits_(n_qubits), amps_(std::move(amps)) {
  if (n_qubits < 0 || n_qubits > kMaxQubits || amps_.size() != (std::size_t{1} << n_qubits)) {
    throw DimensionError("amplitude count " + std::to_string(amps_.size()) + " does not match " +
                         std::to_string(n_qubits) + " qubits");
  }
}

double Statevector::norm() const {
  double acc = 0.0;
  for (const auto& a : amps_) acc += std::norm(a);
  return std::sqrt(acc);
}

GateOp GateOp::ry(int target, double theta) { return {GateKind::RY, target, -1, {theta, 0, 0}}; }
GateOp GateOp::rz(int target, double theta) { return {GateKind::RZ, target, -1, {theta, 0, 0}}; }
GateOp GateOp::rot3(int target, double alpha, double beta, double gamma) {
  return {GateKind::ROT3, target, -1, {alpha, beta, gamma}};
}
GateOp GateOp::cnot(int control, int target) { return {GateKind::CNOT, target, control, {}}; }

int GateOp::num_params() const {
  switch (kind) {
    case GateKind::RY:
    case GateKind::RZ:
      return 1;
    case GateKind::ROT3:
      return 3;
    case GateKind::CNOT:
      return 0;
  }
  return 0;
}

EncodeResult amplitude_encode(std::span<const double> x, int n_qubits) {
  if (n_qubits < 0 || n_qubits > kMaxQubits) {
    throw DimensionError("unsupported qubit count " + std::to_string(n_qubits));
  }
  const std::size_t dim = std::size_t{1} << n_qubits;
  if (x.size() > dim) {
    throw DimensionError("input length " + std::to_string(x.size()) + " exceeds 2^" +
                         std::to_string(n_qubits) + " = " + std::to_string(dim));
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw NumericError("non-finite input at index " + std::to_string(i));
    sq += x[i] * x[i];
  }
  const double norm = std::sqrt(sq);
  if (norm < 1e-12) return {Statevector(n_qubits), 0.0, dim, x.size()};

  std::vector<Complex> amps(dim, Complex{0.0, 0.0});
  for (std::size_t i = 0; i < x.size(); ++i) amps[i] = x[i] / norm;
  return {Statevector(n_qubits, std::move(amps)), norm, dim, x.size()};
}

void apply_gate_inplace(Statevector& s, const GateOp& g) {
  validate(s, g);
  const int n = s.n_qubits();
  auto amps = s.amps();
  switch (g.kind) {
    case GateKind::RY:
      apply_ry(amps, n, g.target, g.angles[0]);
      break;
    case GateKind::RZ:
      apply_rz(amps, n, g.target, g.angles[0]);
      break;
    case GateKind::ROT3:
      apply_rz(amps, n, g.target, g.angles[2]);
      apply_ry(amps, n, g.target, g.angles[1]);
      apply_rz(amps, n, g.target, g.angles[0]);
      break;
    case GateKind::CNOT:
      apply_cnot(amps, n, g.control, g.target);
      break;
  }
}

Statevector apply_gate(Statevector s, const GateOp& g) {
  apply_gate_inplace(s, g);
  return s;
}

std::vector<double> probabilities(const Statevector& s) {
  std::vector<double> p(s.dim());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(s[i]);
  return p;
}

double fidelity(const Statevector& a, const Statevector& b) {
  if (a.n_qubits() != b.n_qubits()) {
    throw DimensionError("fidelity between " + std::to_string(a.n_qubits()) + " and " +
                         std::to_string(b.n_qubits()) + " qubit states");
  }
  Complex overlap{0.0, 0.0};
  for (std::size_t i = 0; i < a.dim(); ++i) overlap += std::conj(a[i]) * b[i];
  return std::norm(overlap);
}

Statevector run_circuit(const EncodeResult& enc, std::span<const GateOp> circuit) {
  Statevector s = enc.state;
  for (const auto& g : circuit) apply_gate_inplace(s, g);
  return s;
}

std::size_t count_params(std::span<const GateOp> circuit) {
  std::size_t n = 0;
  for (const auto& g : circuit) n += static_cast<std::size_t>(g.num_params());
  return n;
}

CircuitGradients backward_circuit(const EncodeResult& enc, std::span<const GateOp> circuit,
                                  std::span<const double> grad_probs) {
  const Statevector& s0 = enc.state;
  if (grad_probs.size() != s0.dim()) {
    throw DimensionError("grad_probs length " + std::to_string(grad_probs.size()) +
                         " != state dimension " + std::to_string(s0.dim()));
  }
  const int n = s0.n_qubits();

  Statevector phi = run_circuit(enc, circuit);
  // mu = dL/d(conj psi): dL = 2 Re <mu|d psi>.
  std::vector<Complex> mu(phi.dim());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = grad_probs[i] * phi[i];

  CircuitGradients out;
  out.angles.assign(count_params(circuit), 0.0);
  std::size_t slot = out.angles.size();
  auto amps = phi.amps();
  std::span<Complex> adj(mu);

  // For R(t) = exp(-i t P / 2) with phi the state after R: dL/dt = Im <mu|P|phi>.
  auto rotate_back = [&](bool is_y, int q, double theta) -> double {
    const double d = std::imag(pauli_expect(adj, amps, n, q, is_y));
    if (is_y) {
      apply_ry(amps, n, q, -theta);
      apply_ry(adj, n, q, -theta);
    } else {
      apply_rz(amps, n, q, -theta);
      apply_rz(adj, n, q, -theta);
    }
    return d;
  };

  for (auto it = circuit.rbegin(); it != circuit.rend(); ++it) {
    const GateOp& g = *it;
    validate(phi, g);
    switch (g.kind) {
      case GateKind::CNOT:
        apply_cnot(amps, n, g.control, g.target);
        apply_cnot(adj, n, g.control, g.target);
        break;
      case GateKind::RY:
        out.angles[--slot] = rotate_back(true, g.target, g.angles[0]);
        break;
      case GateKind::RZ:
        out.angles[--slot] = rotate_back(false, g.target, g.angles[0]);
        break;
      case GateKind::ROT3: {
        slot -= 3;
        out.angles[slot + 0] = rotate_back(false, g.target, g.angles[0]);
        out.angles[slot + 1] = rotate_back(true, g.target, g.angles[1]);
        out.angles[slot + 2] = rotate_back(false, g.target, g.angles[2]);
        break;
      }
    }
  }

  out.input.assign(enc.input_len, 0.0);
  if (enc.norm > 0.0) {
    // psi0 = x / ||x||  =>  dL/dx = (r - psi0 (psi0 . r)) / ||x||, r = dL/dpsi0 = 2 Re(mu0).
    double proj = 0.0;
    for (std::size_t i = 0; i < enc.input_len; ++i) proj += s0[i].real() * 2.0 * mu[i].real();
    for (std::size_t i = 0; i < enc.input_len; ++i) {
      out.input[i] = (2.0 * mu[i].real() - s0[i].real() * proj) / enc.norm;
    }
  }
  return out;
}

}  // namespace hqmamba::qsim
