#include <cmath>
#include <sstream>

#include "doctest.h"
#include "hqmamba/errors.hpp"
#include "hqmamba/expressivity.hpp"
#include "hqmamba/kernels.hpp"
#include "hqmamba/rng.hpp"

using namespace hqmamba;
using namespace hqmamba::expressivity;
using ansatz::AnsatzConfig;
using ansatz::EntanglePattern;
using doctest::Approx;

namespace {

// Composite Simpson rule on [0, 1].
double simpson(long dim, int intervals) {
  const double h = 1.0 / intervals;
  double s = haar_pdf(0.0, dim) + haar_pdf(1.0, dim);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * haar_pdf(i * h, dim);
  return s * h / 3.0;
}

// Fidelities drawn from the Haar law by inverting its CDF 1 - (1 - F)^(N-1).
std::vector<double> haar_samples(long dim, long n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& f : out) f = 1.0 - std::pow(1.0 - rng.uniform(), 1.0 / static_cast<double>(dim - 1));
  return out;
}

}  // namespace

TEST_CASE("Haar density") {
  CHECK(haar_pdf(0.0, 4) == Approx(3.0));
  CHECK(haar_pdf(0.5, 4) == Approx(0.75));
  CHECK(haar_pdf(0.3, 2) == Approx(1.0));
  CHECK_THROWS_AS(haar_pdf(0.5, 1), DomainError);
  for (long n : {2L, 4L, 8L, 16L, 64L}) CHECK(std::abs(simpson(n, 20000) - 1.0) < 1e-8);
}

TEST_CASE("Haar bin masses") {
  for (long n : {2L, 4L, 8L, 256L}) {
    double total = 0;
    for (int b = 0; b < 75; ++b) {
      const double m = haar_bin_mass(b / 75.0, (b + 1) / 75.0, n);
      CHECK(m >= 0.0);
      total += m;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  CHECK(haar_bin_mass(0.0, 0.5, 2) == Approx(0.5));
  CHECK(haar_bin_mass(0.0, 0.5, 3) == Approx(0.75));
}

TEST_CASE("inverse CDF sampler") {
  CHECK(haar_fidelity_from_uniform(0.0, 4) == 0.0);
  CHECK(haar_fidelity_from_uniform(0.75, 3) == Approx(0.5));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double f = haar_fidelity_from_uniform(rng.uniform(), 8);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
}

TEST_CASE("histogram") {
  const std::vector<double> f{0.0, 0.5, 1.0, 1.0 + 1e-15, -1e-16, 0.999};
  const auto h = FidelityHistogram::build(f, 4);
  CHECK(h.n_samples == 6);
  CHECK(h.counts == std::vector<long>{2, 0, 1, 3});
  CHECK(h.lower_edge(1) == 0.25);
  CHECK(h.upper_edge(3) == 1.0);
  CHECK_THROWS_AS(FidelityHistogram::build(f, 0), DomainError);
}

TEST_CASE("KL expressivity") {
  SUBCASE("histogram equal to Haar bin masses gives zero") {
    FidelityHistogram h;
    h.n_bins = 10;
    h.n_samples = 1000000;
    h.counts.resize(10);
    // N = 2: the Haar law is uniform.
    for (auto& c : h.counts) c = 100000;
    CHECK(std::abs(kl_expressivity(h, 2)) < 1e-15);
  }
  SUBCASE("all mass in the last bin") {
    const std::vector<double> ones(100, 1.0);
    const auto h = FidelityHistogram::build(ones, 75);
    CHECK(kl_expressivity(h, 2) == Approx(std::log(75.0)).epsilon(1e-12));
    CHECK(kl_expressivity(h, 2) == Approx(4.31748811353631).epsilon(1e-12));
    CHECK(kl_expressivity(h, 4) == Approx(3 * std::log(75.0)).epsilon(1e-12));
  }
  SUBCASE("Haar samples score near zero") {
    for (long n : {2L, 4L, 8L}) {
      const auto s = haar_samples(n, 100000, 7 + n);
      CHECK(kl_expressivity(FidelityHistogram::build(s, 75), n) < 0.01);
    }
  }
  SUBCASE("errors") {
    FidelityHistogram h;
    h.counts.assign(75, 0);
    CHECK_THROWS_AS(kl_expressivity(h, 2), DomainError);
  }
  CHECK(expr_max(4, 75) == Approx(3 * std::log(75.0)));
}

TEST_CASE("frame potentials") {
  const std::vector<double> f{0.0, 1.0};
  CHECK(frame_potential(f, 1) == 0.5);
  CHECK(frame_potential(f, 2) == 0.5);
  const std::vector<double> g{0.2, 0.6, 0.9};
  CHECK(frame_potential(g, 2) == Approx((0.04 + 0.36 + 0.81) / 3));
  CHECK(frame_potential(g, 3) < frame_potential(g, 2));
  CHECK_THROWS_AS(frame_potential(std::vector<double>{}, 1), DomainError);
  CHECK_THROWS_AS(frame_potential(g, 0), DomainError);

  CHECK(haar_frame_potential(1, 2) == Approx(0.5));
  CHECK(haar_frame_potential(2, 2) == Approx(1.0 / 3.0));
  CHECK(haar_frame_potential(2, 4) == Approx(0.1));
  for (long n : {2L, 4L, 8L}) {
    const auto s = haar_samples(n, 100000, 3);
    for (int t : {1, 2}) CHECK(std::abs(frame_potential(s, t) - haar_frame_potential(t, n)) < 0.01);
  }
}

TEST_CASE("ansatz fidelity sampling") {
  SUBCASE("idle circuit") {
    const auto s = sample_fidelities({2, 0, EntanglePattern::ring}, 200, 1);
    for (double f : s) CHECK(f == Approx(1.0).epsilon(1e-14));
    const auto r = analyze({1, 0, EntanglePattern::ring}, 500, 75, 1);
    CHECK(r.expr_kl == Approx(std::log(75.0)).epsilon(1e-9));
  }
  SUBCASE("one qubit, one rotation layer reaches Haar-like mean") {
    const auto s = sample_fidelities({1, 1, EntanglePattern::ring}, 20000, 4);
    CHECK(std::abs(frame_potential(s, 1) - 0.5) < 0.02);
  }
  SUBCASE("seeded determinism") {
    const AnsatzConfig cfg{3, 2, EntanglePattern::ring};
    CHECK(sample_fidelities(cfg, 300, 9) == sample_fidelities(cfg, 300, 9));
    CHECK(sample_fidelities(cfg, 300, 9) != sample_fidelities(cfg, 300, 10));
  }
  SUBCASE("single-layer ring and rotations-only agree sample for sample") {
    // One ROT3 layer followed by CNOTs: the CNOT block is a fixed unitary shared
    // by both states of a pair, so it drops out of the fidelity.
    const auto a = sample_fidelities({3, 1, EntanglePattern::ring}, 500, 2);
    const auto b = sample_fidelities({3, 1, EntanglePattern::none}, 500, 2);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Approx(b[i]).epsilon(1e-12));
  }
  SUBCASE("serial and parallel sampling are identical") {
    const AnsatzConfig cfg{3, 2, EntanglePattern::all_to_all};
    std::vector<double> s, p;
    {
      kernels::ScopedExec e(kernels::Exec::serial);
      s = sample_fidelities(cfg, 1000, 5);
    }
    {
      kernels::ScopedExec e(kernels::Exec::parallel);
      p = sample_fidelities(cfg, 1000, 5);
    }
    CHECK(s == p);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(sample_fidelities({2, 1, EntanglePattern::ring}, 0, 1), DomainError);
    CHECK_THROWS_AS(sample_fidelities({0, 1, EntanglePattern::ring}, 10, 1), ConfigError);
  }
}

TEST_CASE("report text round trip") {
  std::vector<double> samples;
  const auto r = analyze({2, 2, EntanglePattern::ring}, 400, 20, 11, &samples);
  CHECK(samples.size() == 400);
  CHECK(r.hilbert_dim == 4);
  CHECK(r.frame_potentials.at(1) == frame_potential(samples, 1));
  const auto back = parse_report(format_report(r));
  CHECK(back.n_qubits == 2);
  CHECK(back.pattern == "ring");
  CHECK(back.n_pairs == 400);
  CHECK(back.seed == 11);
  CHECK(back.expr_kl == r.expr_kl);
  CHECK(back.expr_max == r.expr_max);
  CHECK(back.frame_potentials == r.frame_potentials);
  CHECK(back.haar_frame_potentials == r.haar_frame_potentials);
  CHECK_THROWS_AS(parse_report("n_qubits = 2\n"), FormatError);
  CHECK_THROWS_AS(parse_report("format = other/2\n"), FormatError);
  CHECK_THROWS_AS(parse_report("format = hqmamba-expressivity/1\nbogus = 1\n"), FormatError);
}

TEST_CASE("samples CSV") {
  std::ostringstream os;
  const std::vector<double> f{0.25, 1.0};
  write_samples_csv(os, f);
  CHECK(os.str().rfind("index,fidelity\n", 0) == 0);
  CHECK(os.str().find("1,1") != std::string::npos);
}
