#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hqmamba::data {

enum class Encoding { real, bins };

/// Immutable set of labelled sequences. Real inputs are [n, length, feat] in
/// [0, 1]; bin inputs are [n, length] integers in [0, 256).
struct SequenceDataset {
  Encoding encoding = Encoding::real;
  std::size_t num_samples = 0;
  std::size_t length = 0;
  std::size_t feat = 1;
  std::vector<double> inputs;
  std::vector<int> bins;
  std::vector<int> labels;
  int num_classes = 0;
  int image_side = 0;  // square image side when the sequences are flattened images, else 0

  void validate() const;
  std::size_t sample_size() const { return length * feat; }
};

/// Reads an IDX image/label pair (optionally gzip-compressed). Pixels are
/// scaled by 1/255 and each image is flattened row-major to [rows*cols, 1].
SequenceDataset load_idx(const std::string& images_path, const std::string& labels_path,
                         int num_classes = 10);

/// Raw file contents, inflated when the file starts with the gzip magic.
std::vector<std::uint8_t> read_maybe_gzip(const std::string& path);

/// Looks for train-* or t10k-* IDX files (".gz" or plain) in dir.
SequenceDataset load_mnist_split(const std::string& dir, bool train);

/// Dataset root from the HQMAMBA_DATA_DIR environment variable, or "" if unset.
std::string data_dir_from_env();

/// Average-pools every image by factor x factor; factor must divide the side.
SequenceDataset downsample(const SequenceDataset& ds, int factor);

/// The first n samples; n >= num_samples returns a copy.
SequenceDataset subset(const SequenceDataset& ds, std::size_t n);

/// Real inputs to pixel bins round(v * 255).
SequenceDataset to_bins(const SequenceDataset& ds);

/// Class c is a sinusoid 0.5 + 0.5 sin(2 pi (c+1) t / length) plus Gaussian
/// noise of the given sigma, clipped to [0, 1]. Labels cycle through classes.
SequenceDataset synthetic_dataset(std::size_t n, std::size_t length, int num_classes, std::uint64_t seed,
                                  double noise = 0.05);

struct Batch {
  std::vector<std::size_t> indices;
  std::vector<double> inputs;  // real encoding: [size, length, feat]
  std::vector<int> bins;       // bin encoding: [size, length]
  std::vector<int> labels;
  std::size_t size() const { return indices.size(); }
};

/// Fisher-Yates permutation of [0, n) seeded from (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// The dataset in permuted order, cut into batches; the last partial batch is kept.
std::vector<Batch> batches(const SequenceDataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed,
                           std::uint64_t epoch);

/// Batches in dataset order without shuffling.
std::vector<Batch> sequential_batches(const SequenceDataset& ds, std::size_t batch_size);

}  // namespace hqmamba::data
