#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hqmamba/autodiff.hpp"

namespace hqmamba::ssm {

/// Diagonal state matrix per channel: A = -exp(a_log), a_log of shape
/// [d_inner, d_state]; d is the skip gain [d_inner].
struct SsmParams {
  std::size_t d_inner = 0;
  std::size_t d_state = 0;
  std::vector<double> a_log;
  std::vector<double> d;

  std::vector<double> a() const;
  /// a_log[i, j] = ln(j + 1), d = 1.
  static SsmParams s4d_real(std::size_t d_inner, std::size_t d_state);
};

/// Per-token scan inputs. u, delta: [batch, length, d_inner];
/// b, c: [batch, length, d_state].
struct ScanInputs {
  std::size_t batch = 0, length = 0, d_inner = 0, d_state = 0;
  std::vector<double> u, delta, b, c;

  void validate(const SsmParams& p) const;
};

struct Discretized {
  std::vector<double> a_bar;  // [d_inner, d_state]
  std::vector<double> b_bar;  // [d_inner, d_state]
};

/// Zero-order hold on A, Euler on B: a_bar = exp(delta_i * A_ij),
/// b_bar = delta_i * B_j. Requires delta > 0.
Discretized discretize(std::span<const double> a, std::span<const double> delta_t,
                       std::span<const double> b_t, std::size_t d_inner, std::size_t d_state);

/// Recurrent scan with h_0 = 0; returns y [batch, length, d_inner].
std::vector<double> selective_scan_sequential(const SsmParams& p, const ScanInputs& s);

/// Convolution kernel K [length, d_inner] of the time-invariant special case:
/// K[k, i] = sum_j C_j a_bar_ij^k b_bar_ij. Throws UsageError when delta, B or C
/// vary over time or batch.
std::vector<double> ssm_conv_kernel(const SsmParams& p, const ScanInputs& s);

/// y[b,t,i] = sum_{k<=t} K[k,i] u[b,t-k,i] + d_i u[b,t,i].
std::vector<double> ssm_conv_apply(const SsmParams& p, std::span<const double> kernel,
                                   std::span<const double> u, std::size_t batch,
                                   std::size_t length);

/// Differentiable selective scan: u, delta [B, L, Di]; a [Di, Ds] (the negative
/// state matrix itself, not its log); b, c [B, L, Ds]; d [Di]. Returns y [B, L, Di].
ad::Tensor selective_scan(const ad::Tensor& u, const ad::Tensor& delta, const ad::Tensor& a,
                          const ad::Tensor& b, const ad::Tensor& c, const ad::Tensor& d);

}  // namespace hqmamba::ssm
