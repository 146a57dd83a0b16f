#pragma once

// Per-element bodies shared by the serial and OpenMP kernel variants. Each
// function computes one independent unit of work (a matrix row, a circuit
// row, a scan channel or batch entry), so the two variants differ only in how
// the outer loop is scheduled.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hqmamba/ansatz.hpp"
#include "hqmamba/kernels.hpp"

namespace hqmamba::kernels::detail {

inline void matmul_row(std::span<const double> a, std::span<const double> b, std::span<double> c,
                       std::size_t row, std::size_t k, std::size_t n, bool accumulate) {
  double* out = c.data() + row * n;
  if (!accumulate)
    for (std::size_t j = 0; j < n; ++j) out[j] = 0.0;
  const double* arow = a.data() + row * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b.data() + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
  }
}

inline void matmul_grad_a_row(std::span<const double> g, std::span<const double> b,
                              std::span<double> c, std::size_t row, std::size_t k, std::size_t n) {
  const double* grow = g.data() + row * n;
  double* out = c.data() + row * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b.data() + p * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
    out[p] += acc;
  }
}

inline void matmul_grad_b_row(std::span<const double> a, std::span<const double> g,
                              std::span<double> c, std::size_t p, std::size_t m, std::size_t k,
                              std::size_t n) {
  double* out = c.data() + p * n;
  for (std::size_t r = 0; r < m; ++r) {
    const double av = a[r * k + p];
    const double* grow = g.data() + r * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += av * grow[j];
  }
}

inline void quantum_row_forward(std::span<const qsim::GateOp> circuit, int n_qubits,
                                std::span<const double> x, std::size_t row, std::size_t d,
                                std::span<double> out) {
  const std::size_t dim = std::size_t{1} << n_qubits;
  const auto feats = ansatz::quantum_features(circuit, n_qubits, x.subspan(row * d, d));
  for (std::size_t i = 0; i < dim; ++i) out[row * dim + i] = feats[i];
}

inline void quantum_row_backward(std::span<const qsim::GateOp> circuit, int n_qubits,
                                 std::span<const double> x, std::size_t row, std::size_t d,
                                 std::span<const double> grad_out, std::span<double> grad_x,
                                 std::span<double> angle_rows, std::size_t n_angles) {
  const std::size_t dim = std::size_t{1} << n_qubits;
  const auto g = ansatz::quantum_features_backward(circuit, n_qubits, x.subspan(row * d, d),
                                                   grad_out.subspan(row * dim, dim));
  for (std::size_t i = 0; i < d; ++i) grad_x[row * d + i] += g.input[i];
  for (std::size_t i = 0; i < n_angles; ++i) angle_rows[row * n_angles + i] = g.angles[i];
}

inline void reduce_rows(std::span<const double> rows, std::size_t n_rows, std::span<double> out) {
  const std::size_t width = out.size();
  for (std::size_t r = 0; r < n_rows; ++r)
    for (std::size_t i = 0; i < width; ++i) out[i] += rows[r * width + i];
}

inline void scan_channel_forward(const ScanForwardArgs& s, std::size_t b, std::size_t i) {
  const auto [B, L, Di, Ds] = s.dims;
  std::vector<double> h(Ds, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    const std::size_t bt = b * L + t;
    const double dt = s.delta[bt * Di + i];
    const double ut = s.u[bt * Di + i];
    double acc = 0.0;
    for (std::size_t j = 0; j < Ds; ++j) {
      const double abar = std::exp(dt * s.a[i * Ds + j]);
      h[j] = abar * h[j] + dt * s.b[bt * Ds + j] * ut;
      acc += s.c[bt * Ds + j] * h[j];
    }
    if (!s.states.empty())
      for (std::size_t j = 0; j < Ds; ++j) s.states[(bt * Di + i) * Ds + j] = h[j];
    s.y[bt * Di + i] = acc + s.d[i] * ut;
  }
}

// Gradients for batch entry b. grad_u/grad_delta/grad_b/grad_c rows of entry b
// are written directly (disjoint across b); the parameter gradients shared by
// all entries go to the per-entry partial buffers.
inline void scan_batch_backward(const ScanBackwardArgs& s, std::size_t b, std::span<double> ga_part,
                                std::span<double> gd_part) {
  const auto [B, L, Di, Ds] = s.dims;
  std::vector<double> gh(Ds);
  for (std::size_t i = 0; i < Di; ++i) {
    std::fill(gh.begin(), gh.end(), 0.0);
    for (std::size_t t = L; t-- > 0;) {
      const std::size_t bt = b * L + t;
      const double gy = s.grad_y[bt * Di + i];
      const double dt = s.delta[bt * Di + i];
      const double ut = s.u[bt * Di + i];
      gd_part[i] += gy * ut;
      double gu = gy * s.d[i];
      double gdt = 0.0;
      for (std::size_t j = 0; j < Ds; ++j) {
        const double h_t = s.states[(bt * Di + i) * Ds + j];
        const double h_prev = t > 0 ? s.states[((bt - 1) * Di + i) * Ds + j] : 0.0;
        const double aij = s.a[i * Ds + j];
        const double bj = s.b[bt * Ds + j];
        gh[j] += gy * s.c[bt * Ds + j];
        s.grad_c[bt * Ds + j] += gy * h_t;
        const double abar = std::exp(dt * aij);
        const double g_abar = gh[j] * h_prev;
        gdt += g_abar * aij * abar + gh[j] * bj * ut;
        ga_part[i * Ds + j] += g_abar * dt * abar;
        s.grad_b[bt * Ds + j] += gh[j] * dt * ut;
        gu += gh[j] * dt * bj;
        gh[j] *= abar;
      }
      s.grad_u[bt * Di + i] += gu;
      s.grad_delta[bt * Di + i] += gdt;
    }
  }
}

}  // namespace hqmamba::kernels::detail
