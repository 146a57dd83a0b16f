#pragma once

#include <cstddef>
#include <span>

#include "hqmamba/ansatz.hpp"

// Data-parallel inner loops. Every kernel exists twice: `serial` is the
// reference implementation the tests compare against, `omp` parallelizes the
// independent outer loop with OpenMP. Both variants perform identical
// floating-point operations in identical order per output element, so their
// results are bit-identical. The unqualified functions dispatch on the current
// execution policy.
namespace hqmamba::kernels {

enum class Exec { serial, parallel };

Exec exec_policy();
void set_exec_policy(Exec e);
/// Threads the parallel variants may use (1 when built without OpenMP).
int max_threads();

/// Restores the previous policy on scope exit.
class ScopedExec {
 public:
  explicit ScopedExec(Exec e) : prev_(exec_policy()) { set_exec_policy(e); }
  ~ScopedExec() { set_exec_policy(prev_); }
  ScopedExec(const ScopedExec&) = delete;
  ScopedExec& operator=(const ScopedExec&) = delete;

 private:
  Exec prev_;
};

struct ScanDims {
  std::size_t batch = 0, length = 0, d_inner = 0, d_state = 0;
};

// Layouts (row-major): u, delta, y: [batch, length, d_inner]; a: [d_inner, d_state];
// b, c: [batch, length, d_state]; d: [d_inner]; states: [batch, length, d_inner, d_state].
struct ScanForwardArgs {
  ScanDims dims;
  std::span<const double> u, delta, a, b, c, d;
  std::span<double> y;
  std::span<double> states;  // may be empty when no backward pass follows
};

struct ScanBackwardArgs {
  ScanDims dims;
  std::span<const double> u, delta, a, b, c, d, states, grad_y;
  // Accumulated into (+=).
  std::span<double> grad_u, grad_delta, grad_a, grad_b, grad_c, grad_d;
};

#define HQMAMBA_KERNEL_DECLS                                                                      \
  /* c[m,n] (+)= a[m,k] * b[k,n] */                                                               \
  void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,          \
              std::size_t m, std::size_t k, std::size_t n, bool accumulate);                      \
  /* c[m,k] += g[m,n] * b[k,n]^T */                                                               \
  void matmul_grad_a(std::span<const double> g, std::span<const double> b, std::span<double> c,   \
                     std::size_t m, std::size_t k, std::size_t n);                                \
  /* c[k,n] += a[m,k]^T * g[m,n] */                                                               \
  void matmul_grad_b(std::span<const double> a, std::span<const double> g, std::span<double> c,   \
                     std::size_t m, std::size_t k, std::size_t n);                                \
  /* out[rows, 2^n] = per-row quantum features of x[rows, d] */                                   \
  void quantum_features_forward(const ansatz::AnsatzConfig& cfg, const ansatz::AnsatzParams& p,   \
                                std::span<const double> x, std::size_t rows, std::size_t d,       \
                                std::span<double> out);                                           \
  /* grad_x[rows, d] += ..., grad_angles[num_angles] += ... */                                    \
  void quantum_features_backward(const ansatz::AnsatzConfig& cfg, const ansatz::AnsatzParams& p,  \
                                 std::span<const double> x, std::size_t rows, std::size_t d,      \
                                 std::span<const double> grad_out, std::span<double> grad_x,      \
                                 std::span<double> grad_angles);                                  \
  void selective_scan_forward(const ScanForwardArgs& args);                                       \
  void selective_scan_backward(const ScanBackwardArgs& args);

namespace serial {
HQMAMBA_KERNEL_DECLS
}  // namespace serial

namespace omp {
HQMAMBA_KERNEL_DECLS
}  // namespace omp

HQMAMBA_KERNEL_DECLS

#undef HQMAMBA_KERNEL_DECLS

}  // namespace hqmamba::kernels
