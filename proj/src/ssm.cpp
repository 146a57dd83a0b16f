#include "hqmamba/ssm.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "hqmamba/errors.hpp"
#include "hqmamba/kernels.hpp"

namespace hqmamba::ssm {

std::vector<double> SsmParams::a() const {
  std::vector<double> out(a_log.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -std::exp(a_log[i]);
  return out;
}

SsmParams SsmParams::s4d_real(std::size_t d_inner, std::size_t d_state) {
  SsmParams p{d_inner, d_state, std::vector<double>(d_inner * d_state), std::vector<double>(d_inner, 1.0)};
  for (std::size_t i = 0; i < d_inner; ++i)
    for (std::size_t j = 0; j < d_state; ++j) p.a_log[i * d_state + j] = std::log(static_cast<double>(j + 1));
  return p;
}

void ScanInputs::validate(const SsmParams& p) const {
  auto expect = [](const char* what, std::size_t got, std::size_t want) {
    if (got != want) {
      throw DimensionError(std::string("scan input '") + what + "' has " + std::to_string(got) +
                           " values, expected " + std::to_string(want));
    }
  };
  if (p.d_inner != d_inner || p.d_state != d_state) {
    throw DimensionError("scan dims [" + std::to_string(d_inner) + "," + std::to_string(d_state) +
                         "] do not match params [" + std::to_string(p.d_inner) + "," +
                         std::to_string(p.d_state) + "]");
  }
  expect("a_log", p.a_log.size(), d_inner * d_state);
  expect("d", p.d.size(), d_inner);
  expect("u", u.size(), batch * length * d_inner);
  expect("delta", delta.size(), batch * length * d_inner);
  expect("b", b.size(), batch * length * d_state);
  expect("c", c.size(), batch * length * d_state);
  for (double v : delta)
    if (!(v > 0.0)) throw DomainError("scan step size must be positive, got " + std::to_string(v));
}

Discretized discretize(std::span<const double> a, std::span<const double> delta_t,
                       std::span<const double> b_t, std::size_t d_inner, std::size_t d_state) {
  if (a.size() != d_inner * d_state || delta_t.size() != d_inner || b_t.size() != d_state) {
    throw DimensionError("discretize: shapes do not match [" + std::to_string(d_inner) + "," +
                         std::to_string(d_state) + "]");
  }
  Discretized out{std::vector<double>(d_inner * d_state), std::vector<double>(d_inner * d_state)};
  for (std::size_t i = 0; i < d_inner; ++i) {
    if (!(delta_t[i] > 0.0)) throw DomainError("discretize: step size must be positive, got " + std::to_string(delta_t[i]));
    for (std::size_t j = 0; j < d_state; ++j) {
      out.a_bar[i * d_state + j] = std::exp(delta_t[i] * a[i * d_state + j]);
      out.b_bar[i * d_state + j] = delta_t[i] * b_t[j];
    }
  }
  return out;
}

std::vector<double> selective_scan_sequential(const SsmParams& p, const ScanInputs& s) {
  s.validate(p);
  const auto a = p.a();
  std::vector<double> y(s.batch * s.length * s.d_inner);
  kernels::ScanForwardArgs args{{s.batch, s.length, s.d_inner, s.d_state}, s.u, s.delta, a, s.b, s.c, p.d, y, {}};
  kernels::selective_scan_forward(args);
  return y;
}

std::vector<double> ssm_conv_kernel(const SsmParams& p, const ScanInputs& s) {
  s.validate(p);
  const std::size_t Di = s.d_inner, Ds = s.d_state, L = s.length;
  // The convolution form only exists when delta, B and C are shared by all tokens.
  for (std::size_t bt = 0; bt < s.batch * L; ++bt) {
    for (std::size_t i = 0; i < Di; ++i)
      if (s.delta[bt * Di + i] != s.delta[i]) throw UsageError("ssm_conv_kernel: time-varying delta");
    for (std::size_t j = 0; j < Ds; ++j)
      if (s.b[bt * Ds + j] != s.b[j] || s.c[bt * Ds + j] != s.c[j])
        throw UsageError("ssm_conv_kernel: time-varying B or C");
  }
  const auto disc = discretize(p.a(), std::span(s.delta).first(Di), std::span(s.b).first(Ds), Di, Ds);
  std::vector<double> k(L * Di, 0.0);
  std::vector<double> power(Di * Ds, 1.0);  // a_bar^k
  for (std::size_t step = 0; step < L; ++step) {
    for (std::size_t i = 0; i < Di; ++i)
      for (std::size_t j = 0; j < Ds; ++j) {
        k[step * Di + i] += s.c[j] * power[i * Ds + j] * disc.b_bar[i * Ds + j];
        power[i * Ds + j] *= disc.a_bar[i * Ds + j];
      }
  }
  return k;
}

std::vector<double> ssm_conv_apply(const SsmParams& p, std::span<const double> kernel,
                                   std::span<const double> u, std::size_t batch, std::size_t length) {
  const std::size_t Di = p.d_inner;
  if (kernel.size() != length * Di || u.size() != batch * length * Di || p.d.size() != Di) {
    throw DimensionError("ssm_conv_apply: shape mismatch");
  }
  std::vector<double> y(u.size(), 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < length; ++t)
      for (std::size_t i = 0; i < Di; ++i) {
        double acc = p.d[i] * u[(b * length + t) * Di + i];
        for (std::size_t k = 0; k <= t; ++k) acc += kernel[k * Di + i] * u[(b * length + t - k) * Di + i];
        y[(b * length + t) * Di + i] = acc;
      }
  return y;
}

ad::Tensor selective_scan(const ad::Tensor& u, const ad::Tensor& delta, const ad::Tensor& a,
                          const ad::Tensor& b, const ad::Tensor& c, const ad::Tensor& d) {
  if (u.rank() != 3 || delta.shape() != u.shape() || a.rank() != 2 || a.dim(0) != u.dim(2) ||
      b.rank() != 3 || b.dim(0) != u.dim(0) || b.dim(1) != u.dim(1) || b.dim(2) != a.dim(1) ||
      c.shape() != b.shape() || d.shape() != ad::Shape{u.dim(2)}) {
    throw DimensionError("selective_scan: inconsistent shapes u" + ad::shape_str(u.shape()) + " delta" +
                         ad::shape_str(delta.shape()) + " A" + ad::shape_str(a.shape()) + " B" +
                         ad::shape_str(b.shape()) + " C" + ad::shape_str(c.shape()) + " D" +
                         ad::shape_str(d.shape()));
  }
  const kernels::ScanDims dims{u.dim(0), u.dim(1), u.dim(2), a.dim(1)};
  auto states = std::make_shared<std::vector<double>>();

  auto op = ad::custom_op(
      [dims, states](std::span<const ad::Tensor> in) {
        const bool keep = ad::grad_enabled();
        std::vector<double> y(dims.batch * dims.length * dims.d_inner);
        if (keep) states->assign(dims.batch * dims.length * dims.d_inner * dims.d_state, 0.0);
        kernels::selective_scan_forward({dims, in[0].data(), in[1].data(), in[2].data(), in[3].data(),
                                         in[4].data(), in[5].data(), y, *states});
        return ad::Value{{dims.batch, dims.length, dims.d_inner}, std::move(y)};
      },
      [dims, states](std::span<const ad::Tensor> in, const ad::Value&, std::span<const double> gy) {
        std::vector<std::vector<double>> g(6);
        for (std::size_t k = 0; k < 6; ++k) g[k].assign(in[k].numel(), 0.0);
        kernels::selective_scan_backward({dims, in[0].data(), in[1].data(), in[2].data(), in[3].data(),
                                          in[4].data(), in[5].data(), *states, gy, g[0], g[1], g[2],
                                          g[3], g[4], g[5]});
        return g;
      },
      "selective_scan");
  return op({u, delta, a, b, c, d});
}

}  // namespace hqmamba::ssm
