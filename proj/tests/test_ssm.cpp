#include <cmath>

#include "doctest.h"
#include "hqmamba/errors.hpp"
#include "hqmamba/rng.hpp"
#include "hqmamba/ssm.hpp"
#include "support/oracles.hpp"

using namespace hqmamba;
using namespace hqmamba::ssm;
using doctest::Approx;

namespace {

std::vector<double> uniform_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

struct Instance {
  SsmParams p;
  ScanInputs s;
};

Instance random_instance(Rng& rng) {
  Instance in;
  const std::size_t B = 1 + rng.below(2), L = 1 + rng.below(8), Di = 1 + rng.below(4), Ds = 1 + rng.below(4);
  in.p.d_inner = Di;
  in.p.d_state = Ds;
  in.p.a_log = uniform_vec(rng, Di * Ds, -1.0, 1.5);
  in.p.d = uniform_vec(rng, Di, -1, 1);
  in.s = {B, L, Di, Ds, uniform_vec(rng, B * L * Di, -1, 1), uniform_vec(rng, B * L * Di, 0.01, 1.0),
          uniform_vec(rng, B * L * Ds, -1, 1), uniform_vec(rng, B * L * Ds, -1, 1)};
  return in;
}

// Single-channel instance with the same delta, B and C at every step.
Instance time_invariant(Rng& rng, std::size_t B, std::size_t L, std::size_t Di, std::size_t Ds) {
  Instance in;
  in.p.d_inner = Di;
  in.p.d_state = Ds;
  in.p.a_log = uniform_vec(rng, Di * Ds, -1.0, 1.0);
  in.p.d = uniform_vec(rng, Di, -1, 1);
  const auto delta = uniform_vec(rng, Di, 0.05, 0.5);
  const auto b = uniform_vec(rng, Ds, -1, 1), c = uniform_vec(rng, Ds, -1, 1);
  in.s = {B, L, Di, Ds, uniform_vec(rng, B * L * Di, -1, 1), {}, {}, {}};
  for (std::size_t t = 0; t < B * L; ++t) {
    in.s.delta.insert(in.s.delta.end(), delta.begin(), delta.end());
    in.s.b.insert(in.s.b.end(), b.begin(), b.end());
    in.s.c.insert(in.s.c.end(), c.begin(), c.end());
  }
  return in;
}

}  // namespace

TEST_CASE("discretization") {
  SUBCASE("half decay") {
    const std::vector<double> a{-1.0}, delta{std::log(2.0)}, b{1.0};
    const auto d = discretize(a, delta, b, 1, 1);
    CHECK(d.a_bar[0] == Approx(0.5).epsilon(1e-15));
    CHECK(d.b_bar[0] == Approx(std::log(2.0)));
  }
  SUBCASE("scalar case") {
    const std::vector<double> a{-1.0}, delta{0.1}, b{2.0};
    const auto d = discretize(a, delta, b, 1, 1);
    CHECK(d.a_bar[0] == Approx(std::exp(-0.1)).epsilon(1e-15));
    CHECK(d.b_bar[0] == Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("per-channel layout") {
    const std::vector<double> a{-1, -2, -3, -4}, delta{0.5, 0.25}, b{1, 3};
    const auto d = discretize(a, delta, b, 2, 2);
    CHECK(d.a_bar[1] == Approx(std::exp(-1.0)));
    CHECK(d.a_bar[3] == Approx(std::exp(-1.0)));
    CHECK(d.b_bar[1] == Approx(1.5));
    CHECK(d.b_bar[2] == Approx(0.25));
  }
  SUBCASE("non-positive step") {
    const std::vector<double> a{-1.0}, b{1.0};
    CHECK_THROWS_AS(discretize(a, std::vector<double>{0.0}, b, 1, 1), DomainError);
    CHECK_THROWS_AS(discretize(a, std::vector<double>{-0.1}, b, 1, 1), DomainError);
    CHECK_THROWS_AS(discretize(a, std::vector<double>{0.1, 0.1}, b, 1, 1), DimensionError);
  }
}

TEST_CASE("S4D-real initialization") {
  const auto p = SsmParams::s4d_real(3, 4);
  CHECK(p.a_log.size() == 12);
  CHECK(p.a_log[5] == Approx(std::log(2.0)));
  CHECK(p.a()[7] == Approx(-4.0));
  CHECK(p.d == std::vector<double>{1, 1, 1});
}

TEST_CASE("sequential scan equals the unrolled sum") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const auto in = random_instance(rng);
    const auto& s = in.s;
    const auto y = selective_scan_sequential(in.p, s);
    const auto want = oracle::unrolled_scan(s.batch, s.length, s.d_inner, s.d_state, s.u, s.delta, in.p.a(), s.b, s.c, in.p.d);
    REQUIRE(y.size() == want.size());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("length-one scan") {
  SsmParams p{1, 2, {0.0, std::log(3.0)}, {0.5}};
  const ScanInputs s{1, 1, 1, 2, {2.0}, {0.1}, {1.0, -1.0}, {3.0, 4.0}};
  // h = delta * B * u = (0.2, -0.2); y = C.h + D u.
  CHECK(selective_scan_sequential(p, s)[0] == Approx(0.6 - 0.8 + 1.0).epsilon(1e-14));
}

TEST_CASE("vanishing step reduces to the skip term") {
  Rng rng(4);
  auto in = random_instance(rng);
  for (auto& d : in.s.delta) d = 1e-14;
  const auto y = selective_scan_sequential(in.p, in.s);
  for (std::size_t bt = 0; bt < in.s.batch * in.s.length; ++bt)
    for (std::size_t i = 0; i < in.s.d_inner; ++i)
      CHECK(std::abs(y[bt * in.s.d_inner + i] - in.p.d[i] * in.s.u[bt * in.s.d_inner + i]) < 1e-12);
}

TEST_CASE("input validation") {
  Rng rng(6);
  auto in = random_instance(rng);
  in.s.delta[0] = 0.0;
  CHECK_THROWS_AS(selective_scan_sequential(in.p, in.s), DomainError);
  in = random_instance(rng);
  in.s.u.pop_back();
  CHECK_THROWS_AS(selective_scan_sequential(in.p, in.s), DimensionError);
}

TEST_CASE("convolution view of the time-invariant scan") {
  SUBCASE("known kernel") {
    SsmParams p{1, 1, {std::log(std::log(2.0))}, {0.0}};
    const ScanInputs s{1, 3, 1, 1, {1, 0, 0}, {1, 1, 1}, {0.2, 0.2, 0.2}, {1, 1, 1}};
    const auto k = ssm_conv_kernel(p, s);
    REQUIRE(k.size() == 3);
    CHECK(k[0] == Approx(0.2).epsilon(1e-14));
    CHECK(k[1] == Approx(0.1).epsilon(1e-14));
    CHECK(k[2] == Approx(0.05).epsilon(1e-14));
  }
  SUBCASE("matches the recurrence") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
      const auto in = time_invariant(rng, 1 + rng.below(2), 1 + rng.below(30), 1 + rng.below(4), 1 + rng.below(4));
      const auto k = ssm_conv_kernel(in.p, in.s);
      const auto y = ssm_conv_apply(in.p, k, in.s.u, in.s.batch, in.s.length);
      const auto r = selective_scan_sequential(in.p, in.s);
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - r[i]) <= 1e-10);
    }
  }
  SUBCASE("time-varying inputs are rejected") {
    Rng rng(1);
    auto in = time_invariant(rng, 1, 4, 2, 2);
    in.s.delta[3] += 0.1;
    CHECK_THROWS_AS(ssm_conv_kernel(in.p, in.s), UsageError);
    in = time_invariant(rng, 1, 4, 2, 2);
    in.s.c[5] += 0.1;
    CHECK_THROWS_AS(ssm_conv_kernel(in.p, in.s), UsageError);
  }
}

TEST_CASE("long sequences stay bounded") {
  Rng rng(12);
  const std::size_t L = 10000, Di = 2, Ds = 4;
  auto p = SsmParams::s4d_real(Di, Ds);
  ScanInputs s{1, L, Di, Ds, uniform_vec(rng, L * Di, -1, 1), uniform_vec(rng, L * Di, 0.001, 2.0),
               uniform_vec(rng, L * Ds, -1, 1), uniform_vec(rng, L * Ds, -1, 1)};
  const auto y = selective_scan_sequential(p, s);
  double worst = 0;
  for (double v : y) {
    REQUIRE(std::isfinite(v));
    worst = std::max(worst, std::abs(v));
  }
  // |h_j| <= max|B u| * delta / (1 - exp(-delta |A_j|)) stays O(1) for these ranges.
  CHECK(worst < 100.0);
}

TEST_CASE("differentiable scan") {
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_instance(rng);
    const auto& s = in.s;
    const std::size_t B = s.batch, L = s.length, Di = s.d_inner, Ds = s.d_state;
    auto u = ad::Tensor::from({B, L, Di}, s.u, true);
    auto delta = ad::Tensor::from({B, L, Di}, s.delta, true);
    auto a = ad::Tensor::from({Di, Ds}, in.p.a(), true);
    auto b = ad::Tensor::from({B, L, Ds}, s.b, true);
    auto c = ad::Tensor::from({B, L, Ds}, s.c, true);
    auto d = ad::Tensor::from({Di}, in.p.d, true);
    const auto y = selective_scan(u, delta, a, b, c, d);
    const auto want = selective_scan_sequential(in.p, s);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(y.data()[i] - want[i]) < 1e-12);

    const auto w = uniform_vec(rng, want.size(), -1, 1);
    const auto weights = ad::Tensor::from(y.shape(), w);
    ad::backward(ad::sum(ad::mul(y, weights)));

    std::vector<ad::Tensor> leaves{u, delta, a, b, c, d};
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      const std::vector<double> base(leaves[k].data().begin(), leaves[k].data().end());
      const auto fd = oracle::numeric_gradient(
          [&](const std::vector<double>& v) {
            std::vector<ad::Tensor> in2 = leaves;
            in2[k] = ad::Tensor::from(leaves[k].shape(), v);
            ad::NoGradGuard ng;
            return ad::sum(ad::mul(selective_scan(in2[0], in2[1], in2[2], in2[3], in2[4], in2[5]), weights)).item();
          },
          base, 1e-5);
      const std::vector<double> g(leaves[k].grad().begin(), leaves[k].grad().end());
      INFO("input " << k);
      CHECK(oracle::max_rel_error(g, fd) < 1e-6);
    }
  }
}
