#include "dprune/dataset.hpp"

#include <zlib.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dprune/rng.hpp"

namespace dprune {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    return std::uint32_t(bytes[offset]) << 24 | std::uint32_t(bytes[offset + 1]) << 16 |
           std::uint32_t(bytes[offset + 2]) << 8 | std::uint32_t(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw TruncatedError("idx images: missing magic");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kImageMagic)
        throw BadMagicError("idx images: bad magic " + std::to_string(magic));
    if (bytes.size() < 16) throw TruncatedError("idx images: missing dimension header");
    IdxImages images;
    images.count = read_be32(bytes, 4);
    images.rows = read_be32(bytes, 8);
    images.cols = read_be32(bytes, 12);
    if (images.rows != 28 || images.cols != 28)
        throw BadDimsError("idx images: expected 28x28, got " + std::to_string(images.rows) +
                           "x" + std::to_string(images.cols));
    const std::size_t payload = images.count * images.rows * images.cols;
    if (bytes.size() < 16 + payload)
        throw TruncatedError("idx images: payload holds " +
                             std::to_string((bytes.size() - 16) / (images.rows * images.cols)) +
                             " images but header declares " + std::to_string(images.count));
    if (bytes.size() > 16 + payload) throw ParseError("idx images: trailing bytes");
    images.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + payload);
    return images;
}

IdxLabels parse_idx_labels(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw TruncatedError("idx labels: missing magic");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kLabelMagic)
        throw BadMagicError("idx labels: bad magic " + std::to_string(magic));
    if (bytes.size() < 8) throw TruncatedError("idx labels: missing count");
    IdxLabels labels;
    labels.count = read_be32(bytes, 4);
    if (bytes.size() < 8 + labels.count)
        throw TruncatedError("idx labels: payload holds " + std::to_string(bytes.size() - 8) +
                             " labels but header declares " + std::to_string(labels.count));
    if (bytes.size() > 8 + labels.count) throw ParseError("idx labels: trailing bytes");
    labels.labels.assign(bytes.begin() + 8, bytes.begin() + 8 + labels.count);
    for (std::uint8_t v : labels.labels)
        if (v > 9) throw LabelError("idx labels: value " + std::to_string(v) + " outside 0..9");
    return labels;
}

std::vector<std::uint8_t> serialize_idx_images(const IdxImages& images) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.pixels.size());
    write_be32(out, kImageMagic);
    write_be32(out, static_cast<std::uint32_t>(images.count));
    write_be32(out, static_cast<std::uint32_t>(images.rows));
    write_be32(out, static_cast<std::uint32_t>(images.cols));
    out.insert(out.end(), images.pixels.begin(), images.pixels.end());
    return out;
}

std::vector<std::uint8_t> serialize_idx_labels(const IdxLabels& labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.labels.size());
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.count));
    out.insert(out.end(), labels.labels.begin(), labels.labels.end());
    return out;
}

PixelStats compute_stats(const RawDataset& train) {
    if (train.images.empty()) throw EmptyError("compute_stats: no training pixels");
    // 256-bin histogram makes the two moments exact and cheap
    std::size_t hist[256] = {};
    for (std::uint8_t p : train.images) ++hist[p];
    const double n = static_cast<double>(train.images.size());
    double sum = 0.0;
    for (int v = 0; v < 256; ++v) sum += hist[v] * (v / 255.0);
    const double mean = sum / n;
    double varsum = 0.0;
    for (int v = 0; v < 256; ++v) {
        const double d = v / 255.0 - mean;
        varsum += hist[v] * d * d;
    }
    PixelStats stats{mean, std::sqrt(varsum / n)};
    if (stats.stdev == 0.0)
        throw DegenerateDataError("compute_stats: constant pixel values, stdev is zero");
    return stats;
}

NormalizedDataset normalize(const RawDataset& raw, PixelStats stats) {
    if (stats.stdev <= 0.0)
        throw DegenerateDataError("normalize: stdev must be positive");
    if (raw.images.size() != raw.count() * kPixelsPerImage)
        throw ShapeError("normalize: image byte count does not match label count");
    NormalizedDataset data;
    data.stats = stats;
    data.labels = raw.labels;
    data.images = Tensor(Shape{raw.count(), 1, 28, 28});
    double* p = data.images.data();
    const double inv = 1.0 / stats.stdev;
    for (std::size_t i = 0; i < raw.images.size(); ++i)
        p[i] = (raw.images[i] / 255.0 - stats.mean) * inv;
    return data;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed,
                                           std::size_t epoch_index) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix64(seed, 0xe70c5ULL + epoch_index));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.index(i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

BatchStream::BatchStream(const NormalizedDataset& data, std::size_t epoch_index,
                         std::uint64_t seed, std::size_t batch_size)
    : data_(&data),
      order_(epoch_permutation(data.count(), seed, epoch_index)),
      batch_size_(batch_size) {
    if (batch_size_ == 0) throw ConfigError("batch size must be positive");
}

std::size_t BatchStream::batch_count() const {
    return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::optional<Batch> BatchStream::next() {
    if (pos_ >= order_.size()) return std::nullopt;
    const std::size_t n = std::min(batch_size_, order_.size() - pos_);
    Batch batch;
    batch.images = Tensor(Shape{n, 1, 28, 28});
    batch.labels.resize(n);
    const double* src = data_->images.data();
    double* dst = batch.images.data();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t idx = order_[pos_ + k];
        std::copy(src + idx * kPixelsPerImage, src + (idx + 1) * kPixelsPerImage,
                  dst + k * kPixelsPerImage);
        batch.labels[k] = data_->labels[idx];
    }
    pos_ += n;
    return batch;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    if (is.bad()) throw IoError("read failed for " + path);
    return bytes;
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError("inflateInit failed");
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf;
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw ParseError("gzip decompression failed (zlib rc " + std::to_string(rc) + ")");
        }
        out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

namespace {

std::vector<std::uint8_t> load_maybe_gz(const std::string& dir, const std::string& name) {
    namespace fs = std::filesystem;
    const fs::path plain = fs::path(dir) / name;
    const fs::path gz = fs::path(dir) / (name + ".gz");
    std::string path;
    if (fs::exists(plain))
        path = plain.string();
    else if (fs::exists(gz))
        path = gz.string();
    else
        throw IoError("no " + name + " (or .gz) under " + dir);
    auto bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes);
    return bytes;
}

}  // namespace

RawDataset load_split(const std::string& dir, const std::string& images_name,
                      const std::string& labels_name, std::size_t limit) {
    const IdxImages images = parse_idx_images(load_maybe_gz(dir, images_name));
    const IdxLabels labels = parse_idx_labels(load_maybe_gz(dir, labels_name));
    if (images.count != labels.count)
        throw ParseError("split has " + std::to_string(images.count) + " images but " +
                         std::to_string(labels.count) + " labels");
    RawDataset raw;
    const std::size_t n = limit == 0 ? images.count : std::min(limit, images.count);
    raw.images.assign(images.pixels.begin(),
                      images.pixels.begin() + n * images.rows * images.cols);
    raw.labels.assign(labels.labels.begin(), labels.labels.begin() + n);
    return raw;
}

Mnist load_mnist(const std::string& dir, const MnistFiles& files, std::size_t train_limit,
                 std::size_t test_limit) {
    Mnist data;
    data.train = load_split(dir, files.train_images, files.train_labels, train_limit);
    data.test = load_split(dir, files.test_images, files.test_labels, test_limit);
    return data;
}

}  // namespace dprune
