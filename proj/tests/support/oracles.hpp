#pragma once

// Independent reference implementations used only by the tests. None of this
// calls into the library code it checks.

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include "hqmamba/qsim.hpp"

namespace oracle {

using C = std::complex<double>;
using Matrix = std::vector<std::vector<C>>;

inline Matrix identity(std::size_t n) {
  Matrix m(n, std::vector<C>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.size(), k = b.size(), m = b[0].size();
  Matrix c(n, std::vector<C>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t l = 0; l < k; ++l) c[i][j] += a[i][l] * b[l][j];
  return c;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  const std::size_t ra = a.size(), ca = a[0].size(), rb = b.size(), cb = b[0].size();
  Matrix out(ra * rb, std::vector<C>(ca * cb, 0.0));
  for (std::size_t i = 0; i < ra; ++i)
    for (std::size_t j = 0; j < ca; ++j)
      for (std::size_t k = 0; k < rb; ++k)
        for (std::size_t l = 0; l < cb; ++l) out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
  return out;
}

inline Matrix ry(double t) {
  const double c = std::cos(t / 2), s = std::sin(t / 2);
  return {{c, -s}, {s, c}};
}

inline Matrix rz(double t) {
  return {{std::exp(C(0, -t / 2)), 0.0}, {0.0, std::exp(C(0, t / 2))}};
}

/// Single-qubit gate u on qubit q of n, qubit 0 being the most significant bit.
inline Matrix embed(const Matrix& u, int q, int n) {
  Matrix m = {{1.0}};
  for (int k = 0; k < n; ++k) m = kron(m, k == q ? u : identity(2));
  return m;
}

inline Matrix cnot(int control, int target, int n) {
  const std::size_t dim = std::size_t{1} << n;
  Matrix m(dim, std::vector<C>(dim, 0.0));
  for (std::size_t i = 0; i < dim; ++i) {
    const bool on = (i >> (n - 1 - control)) & 1;
    const std::size_t j = on ? i ^ (std::size_t{1} << (n - 1 - target)) : i;
    m[j][i] = 1.0;
  }
  return m;
}

inline Matrix gate_matrix(const hqmamba::qsim::GateOp& g, int n) {
  using hqmamba::qsim::GateKind;
  switch (g.kind) {
    case GateKind::RY:
      return embed(ry(g.angles[0]), g.target, n);
    case GateKind::RZ:
      return embed(rz(g.angles[0]), g.target, n);
    case GateKind::ROT3:
      return embed(matmul(rz(g.angles[0]), matmul(ry(g.angles[1]), rz(g.angles[2]))), g.target, n);
    case GateKind::CNOT:
      return cnot(g.control, g.target, n);
  }
  return identity(std::size_t{1} << n);
}

/// Dense-matrix simulation of the circuit on the (already normalized) input amplitudes.
inline std::vector<C> simulate(const std::vector<C>& input, const std::vector<hqmamba::qsim::GateOp>& circuit, int n) {
  Matrix u = identity(std::size_t{1} << n);
  for (const auto& g : circuit) u = matmul(gate_matrix(g, n), u);
  std::vector<C> out(input.size(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < u.size(); ++j) out[i] += u[i][j] * input[j];
  return out;
}

inline std::vector<double> probs(const std::vector<C>& s) {
  std::vector<double> p(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) p[i] = std::norm(s[i]);
  return p;
}

/// Parameter-shift derivative for a generator with eigenvalues +-1/2:
/// d<O>/dtheta = (f(theta + pi/2) - f(theta - pi/2)) / 2.
inline double parameter_shift(const std::function<double(double)>& f, double theta) {
  const double s = M_PI / 2;
  return (f(theta + s) - f(theta - s)) / 2;
}

/// Central differences of f at x for every coordinate.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    x[i] = v + h;
    const double up = f(x);
    x[i] = v - h;
    const double dn = f(x);
    x[i] = v;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

/// Brute-force expansion of the selective scan for one (batch, channel):
/// y_t = sum_{k<=t} C_t . (prod_{s=k+1..t} abar_s) bbar_k u_k + D u_t, with
/// abar_s = exp(delta_s A) and bbar_k = delta_k B_k, evaluated term by term.
/// Layouts as in the library: u, delta [B, L, Di]; b, c [B, L, Ds]; a [Di, Ds].
inline std::vector<double> unrolled_scan(std::size_t batch, std::size_t length, std::size_t di, std::size_t ds,
                                         const std::vector<double>& u, const std::vector<double>& delta,
                                         const std::vector<double>& a, const std::vector<double>& b,
                                         const std::vector<double>& c, const std::vector<double>& d) {
  std::vector<double> y(batch * length * di, 0.0);
  for (std::size_t bb = 0; bb < batch; ++bb)
    for (std::size_t i = 0; i < di; ++i)
      for (std::size_t t = 0; t < length; ++t) {
        double acc = d[i] * u[(bb * length + t) * di + i];
        for (std::size_t j = 0; j < ds; ++j)
          for (std::size_t k = 0; k <= t; ++k) {
            double decay = 1.0;
            for (std::size_t s = k + 1; s <= t; ++s) decay *= std::exp(delta[(bb * length + s) * di + i] * a[i * ds + j]);
            const double bbar = delta[(bb * length + k) * di + i] * b[(bb * length + k) * ds + j];
            acc += c[(bb * length + t) * ds + j] * decay * bbar * u[(bb * length + k) * di + i];
          }
        y[(bb * length + t) * di + i] = acc;
      }
  return y;
}

}  // namespace oracle
