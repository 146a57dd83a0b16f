#include <zlib.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "hqmamba/data.hpp"
#include "hqmamba/errors.hpp"

using namespace hqmamba;
using namespace hqmamba::data;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(const std::vector<std::uint8_t>& pixels, std::uint32_t n, std::uint32_t rows,
                                     std::uint32_t cols, std::uint32_t magic = 0x00000803) {
  std::vector<std::uint8_t> out;
  put_u32(out, magic);
  put_u32(out, n);
  put_u32(out, rows);
  put_u32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels, std::uint32_t magic = 0x00000801) {
  std::vector<std::uint8_t> out;
  put_u32(out, magic);
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

struct TempDir {
  TempDir() : path(fs::temp_directory_path() / ("hqmamba_data_" + std::to_string(std::rand()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::vector<std::uint8_t>& bytes, bool gzip = false) const {
    const auto p = (path / name).string();
    if (gzip) {
      gzFile f = gzopen(p.c_str(), "wb");
      gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
      gzclose(f);
    } else {
      std::ofstream os(p, std::ios::binary);
      os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    return p;
  }
  fs::path path;
};

// 2 images of 4x4.
std::vector<std::uint8_t> sample_pixels() {
  std::vector<std::uint8_t> px(32);
  for (std::size_t i = 0; i < 16; ++i) px[i] = static_cast<std::uint8_t>(i * 17);
  for (std::size_t i = 16; i < 32; ++i) px[i] = 255;
  return px;
}

}  // namespace

TEST_CASE("IDX loading") {
  TempDir dir;
  const auto img = dir.write("img", idx_images(sample_pixels(), 2, 4, 4));
  const auto lab = dir.write("lab", idx_labels({7, 2}));
  SUBCASE("plain files") {
    const auto ds = load_idx(img, lab);
    CHECK(ds.num_samples == 2);
    CHECK(ds.length == 16);
    CHECK(ds.feat == 1);
    CHECK(ds.image_side == 4);
    CHECK(ds.labels == std::vector<int>{7, 2});
    CHECK(ds.inputs[0] == 0.0);
    CHECK(ds.inputs[1] == Approx(17.0 / 255.0));
    CHECK(ds.inputs[15] == 1.0);
    CHECK(ds.inputs[31] == 1.0);
  }
  SUBCASE("gzip files give identical datasets") {
    const auto gi = dir.write("img.gz", idx_images(sample_pixels(), 2, 4, 4), true);
    const auto gl = dir.write("lab.gz", idx_labels({7, 2}), true);
    const auto a = load_idx(img, lab), b = load_idx(gi, gl);
    CHECK(a.inputs == b.inputs);
    CHECK(a.labels == b.labels);
    CHECK(read_maybe_gzip(gi) == read_maybe_gzip(img));
  }
  SUBCASE("all-zero image") {
    const auto z = dir.write("zero", idx_images(std::vector<std::uint8_t>(16, 0), 1, 4, 4));
    const auto l = dir.write("zl", idx_labels({0}));
    const auto ds = load_idx(z, l);
    for (double v : ds.inputs) CHECK(v == 0.0);
  }
  SUBCASE("bad magic") {
    const auto bad = dir.write("bad", idx_images(sample_pixels(), 2, 4, 4, 0x00000804));
    CHECK_THROWS_AS(load_idx(bad, lab), FormatError);
    const auto badl = dir.write("badl", idx_labels({7, 2}, 0x00000803));
    CHECK_THROWS_AS(load_idx(img, badl), FormatError);
  }
  SUBCASE("truncated file") {
    auto bytes = idx_images(sample_pixels(), 2, 4, 4);
    bytes.resize(bytes.size() - 3);
    const auto t = dir.write("trunc", bytes);
    CHECK_THROWS_AS(load_idx(t, lab), IoError);
  }
  SUBCASE("image and label counts disagree") {
    const auto l3 = dir.write("l3", idx_labels({1, 2, 3}));
    CHECK_THROWS_AS(load_idx(img, l3), ConsistencyError);
  }
  SUBCASE("label out of range") {
    const auto l = dir.write("l10", idx_labels({10, 2}));
    CHECK_THROWS(load_idx(img, l));
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_idx((dir.path / "nope").string(), lab), IoError);
    CHECK_THROWS_AS(load_mnist_split(dir.path.string(), true), IoError);
  }
}

TEST_CASE("bundled MNIST subset") {
  const auto train = load_mnist_split(HQMAMBA_TEST_DATA, true);
  const auto test = load_mnist_split(HQMAMBA_TEST_DATA, false);
  CHECK(train.num_samples == 1000);
  CHECK(test.num_samples == 1000);
  CHECK(train.length == 784);
  CHECK(train.image_side == 28);
  double lo = 1, hi = 0;
  for (double v : train.inputs) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == 0.0);
  CHECK(hi == 1.0);
  std::set<int> classes(train.labels.begin(), train.labels.end());
  CHECK(classes.size() == 10);
  const auto small = downsample(train, 4);
  CHECK(small.length == 49);
  CHECK(small.image_side == 7);
}

TEST_CASE("downsampling") {
  SequenceDataset ds;
  ds.num_samples = 1;
  ds.length = 16;
  ds.image_side = 4;
  ds.num_classes = 2;
  ds.labels = {1};
  for (int i = 0; i < 16; ++i) ds.inputs.push_back(i / 15.0);
  const auto d2 = downsample(ds, 2);
  REQUIRE(d2.length == 4);
  // top-left pool holds pixels 0, 1, 4, 5
  CHECK(d2.inputs[0] == Approx((0 + 1 + 4 + 5) / 60.0));
  CHECK(d2.inputs[3] == Approx((10 + 11 + 14 + 15) / 60.0));
  const auto d4 = downsample(ds, 4);
  CHECK(d4.inputs[0] == Approx(0.5));
  CHECK(downsample(ds, 1).inputs == ds.inputs);
  CHECK_THROWS_AS(downsample(ds, 3), ConfigError);
  SequenceDataset flat = ds;
  flat.image_side = 0;
  CHECK_THROWS(downsample(flat, 2));
}

TEST_CASE("subset and bins") {
  const auto ds = synthetic_dataset(10, 8, 3, 1);
  const auto s = subset(ds, 4);
  CHECK(s.num_samples == 4);
  CHECK(s.labels == std::vector<int>(ds.labels.begin(), ds.labels.begin() + 4));
  CHECK(std::equal(s.inputs.begin(), s.inputs.end(), ds.inputs.begin()));
  CHECK(subset(ds, 100).num_samples == 10);
  const auto b = to_bins(ds);
  CHECK(b.encoding == Encoding::bins);
  CHECK(b.bins.size() == 80);
  for (std::size_t i = 0; i < 80; ++i) CHECK(b.bins[i] == static_cast<int>(std::lround(ds.inputs[i] * 255)));
}

TEST_CASE("synthetic sequences") {
  SUBCASE("deterministic per seed") {
    const auto a = synthetic_dataset(50, 16, 4, 9), b = synthetic_dataset(50, 16, 4, 9);
    CHECK(a.inputs == b.inputs);
    CHECK(a.inputs != synthetic_dataset(50, 16, 4, 10).inputs);
    for (std::size_t i = 0; i < 50; ++i) CHECK(a.labels[i] == static_cast<int>(i % 4));
    for (double v : a.inputs) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("noise-free samples of one class coincide") {
    const auto ds = synthetic_dataset(20, 12, 5, 3, 0.0);
    for (std::size_t i = 5; i < 20; ++i)
      for (std::size_t t = 0; t < 12; ++t) CHECK(ds.inputs[i * 12 + t] == ds.inputs[(i % 5) * 12 + t]);
    CHECK(ds.inputs[1 * 12 + 3] == Approx(0.5 + 0.5 * std::sin(2 * M_PI * 2 * 3 / 12.0)));
  }
  SUBCASE("classes are linearly separable") {
    // Nearest class mean is a linear classifier.
    const int C = 10;
    const std::size_t L = 32;
    const auto train = synthetic_dataset(200, L, C, 1), test = synthetic_dataset(100, L, C, 2);
    std::vector<double> mean(C * L, 0.0);
    std::vector<int> count(C, 0);
    for (std::size_t i = 0; i < train.num_samples; ++i) {
      ++count[train.labels[i]];
      for (std::size_t t = 0; t < L; ++t) mean[train.labels[i] * L + t] += train.inputs[i * L + t];
    }
    for (int c = 0; c < C; ++c)
      for (std::size_t t = 0; t < L; ++t) mean[c * L + t] /= count[c];
    int correct = 0;
    for (std::size_t i = 0; i < test.num_samples; ++i) {
      int best = 0;
      double best_d = 1e300;
      for (int c = 0; c < C; ++c) {
        double d = 0;
        for (std::size_t t = 0; t < L; ++t) d += std::pow(test.inputs[i * L + t] - mean[c * L + t], 2);
        if (d < best_d) best_d = d, best = c;
      }
      correct += best == test.labels[i];
    }
    CHECK(correct > 80);
  }
}

TEST_CASE("batching") {
  const auto ds = synthetic_dataset(23, 4, 3, 7);
  SUBCASE("every sample appears exactly once per epoch") {
    const auto bs = batches(ds, 5, 1, 0);
    CHECK(bs.size() == 5);
    CHECK(bs.back().size() == 3);
    std::vector<int> seen(23, 0);
    for (const auto& b : bs)
      for (std::size_t k = 0; k < b.size(); ++k) {
        const auto i = b.indices[k];
        ++seen[i];
        CHECK(b.labels[k] == ds.labels[i]);
        CHECK(std::equal(b.inputs.begin() + k * 4, b.inputs.begin() + (k + 1) * 4, ds.inputs.begin() + i * 4));
      }
    for (int s : seen) CHECK(s == 1);
  }
  SUBCASE("one big batch") {
    const auto bs = batches(ds, 100, 1, 0);
    REQUIRE(bs.size() == 1);
    CHECK(bs[0].size() == 23);
  }
  SUBCASE("seeded order") {
    CHECK(epoch_permutation(23, 4, 1) == epoch_permutation(23, 4, 1));
    CHECK(epoch_permutation(23, 4, 1) != epoch_permutation(23, 4, 2));
    CHECK(epoch_permutation(23, 4, 1) != epoch_permutation(23, 5, 1));
    auto p = epoch_permutation(23, 4, 1);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < 23; ++i) CHECK(p[i] == i);
  }
  SUBCASE("sequential order") {
    const auto bs = sequential_batches(ds, 10);
    CHECK(bs.size() == 3);
    CHECK(bs[1].indices.front() == 10);
  }
  SUBCASE("bin datasets batch their bins") {
    const auto b = to_bins(ds);
    const auto bs = sequential_batches(b, 23);
    CHECK(bs[0].bins == b.bins);
    CHECK(bs[0].inputs.empty());
  }
  CHECK_THROWS(batches(ds, 0, 1, 0));
}
