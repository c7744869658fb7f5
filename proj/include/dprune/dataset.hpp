#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dprune/tensor.hpp"

namespace dprune {

constexpr std::size_t kPixelsPerImage = 28 * 28;

// Decoded IDX payloads. MNIST images are 28x28 unsigned bytes.
struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols
};

struct IdxLabels {
    std::size_t count = 0;
    std::vector<std::uint8_t> labels;
};

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
IdxLabels parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx_images(const IdxImages& images);
std::vector<std::uint8_t> serialize_idx_labels(const IdxLabels& labels);

struct RawDataset {
    std::vector<std::uint8_t> images;  // count * 28 * 28
    std::vector<std::uint8_t> labels;  // values 0..9

    std::size_t count() const { return labels.size(); }
};

// Pixel statistics over the [0,1]-scaled training images. Population
// standard deviation.
struct PixelStats {
    double mean = 0.0;
    double stdev = 0.0;
};

PixelStats compute_stats(const RawDataset& train);

struct NormalizedDataset {
    Tensor images;  // [N,1,28,28], value = (pixel/255 - mean)/stdev
    std::vector<std::uint8_t> labels;
    PixelStats stats;

    std::size_t count() const { return labels.size(); }
};

// Stats must come from the training split; the test split is normalized
// with the same values.
NormalizedDataset normalize(const RawDataset& raw, PixelStats stats);

struct Batch {
    Tensor images;  // [<=batch_size,1,28,28]
    std::vector<std::uint8_t> labels;
};

// One Fisher-Yates permutation of 0..n-1 determined by (seed, epoch_index).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed,
                                           std::size_t epoch_index);

// Walks one shuffled epoch in batches; the final short batch is kept.
class BatchStream {
public:
    BatchStream(const NormalizedDataset& data, std::size_t epoch_index, std::uint64_t seed,
                std::size_t batch_size = 64);

    std::optional<Batch> next();
    std::size_t batch_count() const;

private:
    const NormalizedDataset* data_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::size_t batch_size_;
};

// File-level loading. Gzip files (1f 8b) are inflated before parsing.
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes);

struct MnistFiles {
    std::string train_images = "train-images-idx3-ubyte";
    std::string train_labels = "train-labels-idx1-ubyte";
    std::string test_images = "t10k-images-idx3-ubyte";
    std::string test_labels = "t10k-labels-idx1-ubyte";
};

// Reads one split; limit == 0 keeps everything. Looks for `name` and then
// `name.gz` under dir.
RawDataset load_split(const std::string& dir, const std::string& images_name,
                      const std::string& labels_name, std::size_t limit = 0);

struct Mnist {
    RawDataset train;
    RawDataset test;
};

Mnist load_mnist(const std::string& dir, const MnistFiles& files = {},
                 std::size_t train_limit = 0, std::size_t test_limit = 0);

}  // namespace dprune
