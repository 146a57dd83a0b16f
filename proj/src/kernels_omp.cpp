#include <atomic>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernels_detail.hpp"

namespace hqmamba::kernels {

namespace {
std::atomic<Exec> g_policy{Exec::serial};
}

Exec exec_policy() { return g_policy.load(std::memory_order_relaxed); }
void set_exec_policy(Exec e) { g_policy.store(e, std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace omp {

// Loop indices are signed for OpenMP 2.x compatibility.
using Index = long long;

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(m); ++r) detail::matmul_row(a, b, c, r, k, n, accumulate);
}

void matmul_grad_a(std::span<const double> g, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(m); ++r) detail::matmul_grad_a_row(g, b, c, r, k, n);
}

void matmul_grad_b(std::span<const double> a, std::span<const double> g, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < static_cast<Index>(k); ++p) detail::matmul_grad_b_row(a, g, c, p, m, k, n);
}

void quantum_features_forward(const ansatz::AnsatzConfig& cfg, const ansatz::AnsatzParams& p,
                              std::span<const double> x, std::size_t rows, std::size_t d,
                              std::span<double> out) {
  const auto circuit = ansatz::build_circuit(cfg, p);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r)
    detail::quantum_row_forward(circuit, cfg.n_qubits, x, r, d, out);
}

void quantum_features_backward(const ansatz::AnsatzConfig& cfg, const ansatz::AnsatzParams& p,
                               std::span<const double> x, std::size_t rows, std::size_t d,
                               std::span<const double> grad_out, std::span<double> grad_x,
                               std::span<double> grad_angles) {
  const auto circuit = ansatz::build_circuit(cfg, p);
  const std::size_t na = cfg.num_angles();
  std::vector<double> angle_rows(rows * na);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r)
    detail::quantum_row_backward(circuit, cfg.n_qubits, x, r, d, grad_out, grad_x, angle_rows, na);
  detail::reduce_rows(angle_rows, rows, grad_angles);
}

void selective_scan_forward(const ScanForwardArgs& args) {
  const auto B = static_cast<Index>(args.dims.batch);
  const auto Di = static_cast<Index>(args.dims.d_inner);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index b = 0; b < B; ++b)
    for (Index i = 0; i < Di; ++i) detail::scan_channel_forward(args, b, i);
}

void selective_scan_backward(const ScanBackwardArgs& args) {
  const auto [B, L, Di, Ds] = args.dims;
  std::vector<double> ga(B * Di * Ds, 0.0), gd(B * Di, 0.0);
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < static_cast<Index>(B); ++b) {
    detail::scan_batch_backward(args, b, std::span(ga).subspan(b * Di * Ds, Di * Ds),
                                std::span(gd).subspan(b * Di, Di));
  }
  detail::reduce_rows(ga, B, args.grad_a);
  detail::reduce_rows(gd, B, args.grad_d);
}

}  // namespace omp

#define HQMAMBA_DISPATCH(name, ...) \
  (exec_policy() == Exec::parallel ? omp::name(__VA_ARGS__) : serial::name(__VA_ARGS__))

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  HQMAMBA_DISPATCH(matmul, a, b, c, m, k, n, accumulate);
}

void matmul_grad_a(std::span<const double> g, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  HQMAMBA_DISPATCH(matmul_grad_a, g, b, c, m, k, n);
}

void matmul_grad_b(std::span<const double> a, std::span<const double> g, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  HQMAMBA_DISPATCH(matmul_grad_b, a, g, c, m, k, n);
}

void quantum_features_forward(const ansatz::AnsatzConfig& cfg, const ansatz::AnsatzParams& p,
                              std::span<const double> x, std::size_t rows, std::size_t d,
                              std::span<double> out) {
  HQMAMBA_DISPATCH(quantum_features_forward, cfg, p, x, rows, d, out);
}

void quantum_features_backward(const ansatz::AnsatzConfig& cfg, const ansatz::AnsatzParams& p,
                               std::span<const double> x, std::size_t rows, std::size_t d,
                               std::span<const double> grad_out, std::span<double> grad_x,
                               std::span<double> grad_angles) {
  HQMAMBA_DISPATCH(quantum_features_backward, cfg, p, x, rows, d, grad_out, grad_x, grad_angles);
}

void selective_scan_forward(const ScanForwardArgs& args) {
  HQMAMBA_DISPATCH(selective_scan_forward, args);
}

void selective_scan_backward(const ScanBackwardArgs& args) {
  HQMAMBA_DISPATCH(selective_scan_backward, args);
}

#undef HQMAMBA_DISPATCH

}  // namespace hqmamba::kernels
