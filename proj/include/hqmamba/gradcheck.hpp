#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "hqmamba/mamba.hpp"

// Finite-difference checks of the analytic gradients, shared by the CLI
// `gradcheck` subcommand and the test suites.
namespace hqmamba::gradcheck {

/// Gradients whose largest entry is below this are compared absolutely: an
/// identically zero gradient (e.g. RZ acting on a basis state) has no
/// meaningful relative error, only roundoff on both sides.
inline constexpr double kScaleFloor = 1e-6;

/// max_i |a_i - f_i| / max(max_i |a_i|, max_i |f_i|, kScaleFloor).
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

struct Result {
  std::string module;
  std::size_t instances = 0;
  std::size_t values = 0;      // gradient entries compared
  double max_rel_error = 0.0;  // worst instance (or group)
  std::size_t worst_instance = 0;
  double tolerance = 0.0;
  std::map<std::string, double> by_group;  // model checks: worst error per parameter group
  bool passed() const { return max_rel_error <= tolerance; }
};

/// Random circuits of RY/RZ/ROT3 layers and CNOTs on 1..4 qubits with 1..3
/// layers, amplitude-encoded random input; compares angle and input gradients
/// of a random linear functional of the output probabilities.
Result check_qsim(std::uint64_t seed, int n_circuits = 100, double tolerance = 1e-5, double step = 1e-4);

/// Full quantum projectors (optional compression, circuit, affine readout).
Result check_ansatz(std::uint64_t seed, int n_instances = 50, double tolerance = 1e-5, double step = 1e-4);

/// Whole-model cross-entropy gradient for every parameter, aggregated per group.
Result check_model(const mamba::ModelConfig& cfg, std::uint64_t seed, std::size_t batch = 2,
                   std::size_t length = 3, double tolerance = 1e-3, double step = 1e-5);

/// The tiny hybrid configuration used by `gradcheck --module model`:
/// d_model 2, one layer, every projection quantum (2-qubit registers at most).
mamba::ModelConfig tiny_hybrid_config(std::uint64_t seed = 0);

std::string format_result(const Result& r);

}  // namespace hqmamba::gradcheck
