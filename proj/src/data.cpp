#include "hqmamba/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "hqmamba/errors.hpp"
#include "hqmamba/rng.hpp"

namespace hqmamba::data {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at, const std::string& path) {
  if (at + 4 > b.size()) throw IoError(path + ": truncated IDX header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::vector<std::uint8_t> inflate_gzip(const std::vector<std::uint8_t>& in, const std::string& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError(path + ": zlib init failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IoError(path + ": corrupt or truncated gzip stream");
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw IoError(path + ": truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace

void SequenceDataset::validate() const {
  if (length == 0 || feat == 0) throw DimensionError("dataset sequences must be non-empty");
  if (labels.size() != num_samples) throw ConsistencyError("dataset label count does not match sample count");
  if (encoding == Encoding::real) {
    if (inputs.size() != num_samples * length * feat) throw DimensionError("dataset input size mismatch");
    for (double v : inputs)
      if (!std::isfinite(v)) throw NumericError("dataset contains a non-finite input");
  } else {
    if (feat != 1 || bins.size() != num_samples * length) throw DimensionError("dataset bin size mismatch");
    for (int v : bins)
      if (v < 0 || v > 255) throw DomainError("dataset bin out of [0, 256)");
  }
  for (int l : labels)
    if (l < 0 || l >= num_classes) throw DomainError("label " + std::to_string(l) + " outside [0, num_classes)");
}

std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) return inflate_gzip(raw, path);
  return raw;
}

SequenceDataset load_idx(const std::string& images_path, const std::string& labels_path, int num_classes) {
  const auto img = read_maybe_gzip(images_path);
  const auto lab = read_maybe_gzip(labels_path);

  const std::uint32_t im = be32(img, 0, images_path);
  if (im != kImageMagic) throw FormatError(images_path + ": image magic " + hex32(im) + ", expected 0x00000803");
  const std::uint32_t lm = be32(lab, 0, labels_path);
  if (lm != kLabelMagic) throw FormatError(labels_path + ": label magic " + hex32(lm) + ", expected 0x00000801");

  const std::size_t n = be32(img, 4, images_path);
  const std::size_t rows = be32(img, 8, images_path);
  const std::size_t cols = be32(img, 12, images_path);
  const std::size_t nl = be32(lab, 4, labels_path);
  if (img.size() < 16 + n * rows * cols) throw IoError(images_path + ": truncated image data");
  if (lab.size() < 8 + nl) throw IoError(labels_path + ": truncated label data");
  if (n != nl) {
    throw ConsistencyError("image count " + std::to_string(n) + " does not match label count " + std::to_string(nl));
  }

  SequenceDataset ds;
  ds.num_samples = n;
  ds.length = rows * cols;
  ds.feat = 1;
  ds.num_classes = num_classes;
  ds.image_side = rows == cols ? static_cast<int>(rows) : 0;
  ds.inputs.resize(n * rows * cols);
  for (std::size_t i = 0; i < ds.inputs.size(); ++i) ds.inputs[i] = img[16 + i] / 255.0;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = lab[8 + i];
  ds.validate();
  return ds;
}

std::string data_dir_from_env() {
  const char* v = std::getenv("HQMAMBA_DATA_DIR");
  return v ? v : "";
}

SequenceDataset load_mnist_split(const std::string& dir, bool train) {
  namespace fs = std::filesystem;
  const std::string prefix = train ? "train" : "t10k";
  auto find = [&](const std::string& stem) {
    for (const auto& name : {stem + ".gz", stem}) {
      const fs::path p = fs::path(dir) / name;
      if (fs::exists(p)) return p.string();
    }
    throw IoError("no " + stem + "[.gz] in '" + dir + "'");
  };
  return load_idx(find(prefix + "-images-idx3-ubyte"), find(prefix + "-labels-idx1-ubyte"));
}

SequenceDataset downsample(const SequenceDataset& ds, int factor) {
  if (factor != 1 && factor != 2 && factor != 4) {
    throw ConfigError("downsample factor must be 1, 2 or 4, got " + std::to_string(factor));
  }
  if (factor == 1) return ds;
  if (ds.encoding != Encoding::real || ds.image_side == 0 || ds.feat != 1 || ds.image_side % factor != 0) {
    throw ConfigError("downsample needs real-valued square images whose side divides by " + std::to_string(factor));
  }
  const std::size_t side = ds.image_side, f = factor, out_side = side / f;
  SequenceDataset out = ds;
  out.length = out_side * out_side;
  out.image_side = static_cast<int>(out_side);
  out.inputs.assign(ds.num_samples * out.length, 0.0);
  const double inv = 1.0 / static_cast<double>(f * f);
  for (std::size_t s = 0; s < ds.num_samples; ++s) {
    const double* src = ds.inputs.data() + s * ds.length;
    double* dst = out.inputs.data() + s * out.length;
    for (std::size_t r = 0; r < out_side; ++r)
      for (std::size_t c = 0; c < out_side; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < f; ++i)
          for (std::size_t j = 0; j < f; ++j) acc += src[(r * f + i) * side + c * f + j];
        dst[r * out_side + c] = acc * inv;
      }
  }
  return out;
}

SequenceDataset subset(const SequenceDataset& ds, std::size_t n) {
  if (n >= ds.num_samples) return ds;
  SequenceDataset out = ds;
  out.num_samples = n;
  out.labels.resize(n);
  if (ds.encoding == Encoding::real) out.inputs.resize(n * ds.sample_size());
  else out.bins.resize(n * ds.length);
  return out;
}

SequenceDataset to_bins(const SequenceDataset& ds) {
  if (ds.encoding == Encoding::bins) return ds;
  if (ds.feat != 1) throw ConfigError("pixel bins need single-feature sequences");
  SequenceDataset out = ds;
  out.encoding = Encoding::bins;
  out.bins.resize(ds.inputs.size());
  for (std::size_t i = 0; i < ds.inputs.size(); ++i) {
    out.bins[i] = static_cast<int>(std::lround(std::clamp(ds.inputs[i], 0.0, 1.0) * 255.0));
  }
  out.inputs.clear();
  return out;
}

SequenceDataset synthetic_dataset(std::size_t n, std::size_t length, int num_classes, std::uint64_t seed,
                                  double noise) {
  if (n < 1 || length < 1) throw ConfigError("synthetic dataset needs n >= 1 and length >= 1");
  if (num_classes < 1) throw ConfigError("synthetic dataset needs at least one class");
  SequenceDataset ds;
  ds.num_samples = n;
  ds.length = length;
  ds.num_classes = num_classes;
  ds.inputs.resize(n * length);
  ds.labels.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const int c = static_cast<int>(s % static_cast<std::size_t>(num_classes));
    ds.labels[s] = c;
    Rng rng(mix_seed(seed, s));
    for (std::size_t t = 0; t < length; ++t) {
      const double phase = 2.0 * std::numbers::pi * (c + 1) * static_cast<double>(t) / static_cast<double>(length);
      const double v = 0.5 + 0.5 * std::sin(phase) + noise * rng.normal();
      ds.inputs[s * length + t] = std::clamp(v, 0.0, 1.0);
    }
  }
  return ds;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(mix_seed(seed, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

namespace {

std::vector<Batch> cut(const SequenceDataset& ds, const std::vector<std::size_t>& order, std::size_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<Batch> out;
  const std::size_t per = ds.sample_size();
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t i = order[k];
      b.indices.push_back(i);
      b.labels.push_back(ds.labels[i]);
      if (ds.encoding == Encoding::real) {
        b.inputs.insert(b.inputs.end(), ds.inputs.begin() + i * per, ds.inputs.begin() + (i + 1) * per);
      } else {
        b.bins.insert(b.bins.end(), ds.bins.begin() + i * ds.length, ds.bins.begin() + (i + 1) * ds.length);
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

std::vector<Batch> batches(const SequenceDataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed,
                           std::uint64_t epoch) {
  return cut(ds, epoch_permutation(ds.num_samples, shuffle_seed, epoch), batch_size);
}

std::vector<Batch> sequential_batches(const SequenceDataset& ds, std::size_t batch_size) {
  std::vector<std::size_t> order(ds.num_samples);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return cut(ds, order, batch_size);
}

}  // namespace hqmamba::data
