#include <vector>

#include "kernels_detail.hpp"

namespace hqmamba::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t r = 0; r < m; ++r) detail::matmul_row(a, b, c, r, k, n, accumulate);
}

void matmul_grad_a(std::span<const double> g, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < m; ++r) detail::matmul_grad_a_row(g, b, c, r, k, n);
}

void matmul_grad_b(std::span<const double> a, std::span<const double> g, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) detail::matmul_grad_b_row(a, g, c, p, m, k, n);
}

void quantum_features_forward(const ansatz::AnsatzConfig& cfg, const ansatz::AnsatzParams& p,
                              std::span<const double> x, std::size_t rows, std::size_t d,
                              std::span<double> out) {
  const auto circuit = ansatz::build_circuit(cfg, p);
  for (std::size_t r = 0; r < rows; ++r)
    detail::quantum_row_forward(circuit, cfg.n_qubits, x, r, d, out);
}

void quantum_features_backward(const ansatz::AnsatzConfig& cfg, const ansatz::AnsatzParams& p,
                               std::span<const double> x, std::size_t rows, std::size_t d,
                               std::span<const double> grad_out, std::span<double> grad_x,
                               std::span<double> grad_angles) {
  const auto circuit = ansatz::build_circuit(cfg, p);
  const std::size_t na = cfg.num_angles();
  std::vector<double> angle_rows(rows * na);
  for (std::size_t r = 0; r < rows; ++r)
    detail::quantum_row_backward(circuit, cfg.n_qubits, x, r, d, grad_out, grad_x, angle_rows, na);
  detail::reduce_rows(angle_rows, rows, grad_angles);
}

void selective_scan_forward(const ScanForwardArgs& args) {
  for (std::size_t b = 0; b < args.dims.batch; ++b)
    for (std::size_t i = 0; i < args.dims.d_inner; ++i) detail::scan_channel_forward(args, b, i);
}

void selective_scan_backward(const ScanBackwardArgs& args) {
  const auto [B, L, Di, Ds] = args.dims;
  std::vector<double> ga(B * Di * Ds, 0.0), gd(B * Di, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    detail::scan_batch_backward(args, b, std::span(ga).subspan(b * Di * Ds, Di * Ds),
                                std::span(gd).subspan(b * Di, Di));
  }
  detail::reduce_rows(ga, B, args.grad_a);
  detail::reduce_rows(gd, B, args.grad_d);
}

}  // namespace hqmamba::kernels::serial
