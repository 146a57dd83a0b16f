// Serial vs OpenMP timings of the batched kernels.
//
//   bench_kernels [--reps N] [--threads T] [--quick]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hqmamba/kernels.hpp"
#include "hqmamba/rng.hpp"

using namespace hqmamba;
namespace k = hqmamba::kernels;

namespace {

std::vector<double> uniform_vec(Rng& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

double time_best(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const std::string& name, double serial, double parallel, bool same) {
  std::printf("%-28s %10.3f %10.3f %8.2fx  %s\n", name.c_str(), serial * 1e3, parallel * 1e3, serial / parallel,
              same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmark: serial reference vs OpenMP"};
  int reps = 5, threads = omp_get_max_threads();
  bool quick = false;
  app.add_option("--reps", reps, "Repetitions (best time is reported)")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "OpenMP threads")->check(CLI::PositiveNumber);
  app.add_flag("--quick", quick, "Small sizes, for smoke testing");
  CLI11_PARSE(app, argc, argv);
  omp_set_num_threads(threads);

  const std::size_t scale = quick ? 1 : 8;
  Rng rng(1);
  std::printf("threads %d, best of %d\n", threads, reps);
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");
  bool all_same = true;

  {
    const std::size_t m = 256 * scale, kk = 64, n = 256;
    const auto a = uniform_vec(rng, m * kk), b = uniform_vec(rng, kk * n);
    std::vector<double> cs(m * n), co(m * n);
    const double ts = time_best(reps, [&] { k::serial::matmul(a, b, cs, m, kk, n, false); });
    const double to = time_best(reps, [&] { k::omp::matmul(a, b, co, m, kk, n, false); });
    row("matmul " + std::to_string(m) + "x64x256", ts, to, cs == co);
    all_same = all_same && cs == co;
  }
  {
    const ansatz::AnsatzConfig cfg{6, 2, ansatz::EntanglePattern::ring};
    const auto p = ansatz::init_params(cfg, 3);
    const std::size_t rows = 128 * scale, d = 64;
    const auto x = uniform_vec(rng, rows * d);
    std::vector<double> fs(rows * 64), fo(rows * 64);
    const double ts = time_best(reps, [&] { k::serial::quantum_features_forward(cfg, p, x, rows, d, fs); });
    const double to = time_best(reps, [&] { k::omp::quantum_features_forward(cfg, p, x, rows, d, fo); });
    row("quantum features 6q x " + std::to_string(rows), ts, to, fs == fo);
    all_same = all_same && fs == fo;

    const auto g = uniform_vec(rng, rows * 64);
    std::vector<double> gxs(rows * d), gxo(rows * d), gas(cfg.num_angles()), gao(cfg.num_angles());
    const double bs = time_best(reps, [&] {
      std::fill(gxs.begin(), gxs.end(), 0.0);
      std::fill(gas.begin(), gas.end(), 0.0);
      k::serial::quantum_features_backward(cfg, p, x, rows, d, g, gxs, gas);
    });
    const double bo = time_best(reps, [&] {
      std::fill(gxo.begin(), gxo.end(), 0.0);
      std::fill(gao.begin(), gao.end(), 0.0);
      k::omp::quantum_features_backward(cfg, p, x, rows, d, g, gxo, gao);
    });
    const bool same = gxs == gxo && gas == gao;
    row("quantum features backward", bs, bo, same);
    all_same = all_same && same;
  }
  {
    const k::ScanDims dims{4 * scale, 64, 64, 16};
    const std::size_t tok = dims.batch * dims.length;
    const auto u = uniform_vec(rng, tok * dims.d_inner), delta = uniform_vec(rng, tok * dims.d_inner, 0.01, 1);
    const auto a = uniform_vec(rng, dims.d_inner * dims.d_state, -3, -0.1);
    const auto b = uniform_vec(rng, tok * dims.d_state), c = uniform_vec(rng, tok * dims.d_state);
    const auto d = uniform_vec(rng, dims.d_inner);
    std::vector<double> ys(tok * dims.d_inner), yo(ys.size()), ss(ys.size() * dims.d_state), so(ss.size());
    const double ts = time_best(reps, [&] { k::serial::selective_scan_forward({dims, u, delta, a, b, c, d, ys, ss}); });
    const double to = time_best(reps, [&] { k::omp::selective_scan_forward({dims, u, delta, a, b, c, d, yo, so}); });
    const bool same = ys == yo && ss == so;
    row("selective scan " + std::to_string(dims.batch) + "x64x64x16", ts, to, same);
    all_same = all_same && same;
  }
  return all_same ? 0 : 1;
}
