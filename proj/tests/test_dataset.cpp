#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include "dprune/dataset.hpp"
#include "dprune/synth.hpp"
#include "testutil.hpp"

using namespace dprune;
using testing::TempDir;

namespace {

std::vector<std::uint8_t> image_fixture_bytes() {
    // two hand-written images with a recognizable pixel pattern
    IdxImages images;
    images.count = 2;
    images.rows = 28;
    images.cols = 28;
    images.pixels.resize(2 * 28 * 28);
    for (std::size_t i = 0; i < images.pixels.size(); ++i)
        images.pixels[i] = static_cast<std::uint8_t>((i * 7 + 3) % 256);
    return serialize_idx_images(images);
}

std::vector<std::uint8_t> label_fixture_bytes() {
    IdxLabels labels;
    labels.count = 2;
    labels.labels = {3, 8};
    return serialize_idx_labels(labels);
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    REQUIRE(deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8,
                         Z_DEFAULT_STRATEGY) == Z_OK);
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())) + 32);
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

}  // namespace

TEST_CASE("idx image parsing and round trip") {
    const auto bytes = image_fixture_bytes();
    const IdxImages parsed = parse_idx_images(bytes);
    CHECK(parsed.count == 2);
    CHECK(parsed.rows == 28);
    CHECK(parsed.cols == 28);
    for (std::size_t i = 0; i < parsed.pixels.size(); ++i)
        CHECK(parsed.pixels[i] == static_cast<std::uint8_t>((i * 7 + 3) % 256));
    CHECK(serialize_idx_images(parsed) == bytes);
}

TEST_CASE("idx label parsing and round trip") {
    const auto bytes = label_fixture_bytes();
    const IdxLabels parsed = parse_idx_labels(bytes);
    CHECK(parsed.count == 2);
    CHECK(parsed.labels == std::vector<std::uint8_t>{3, 8});
    CHECK(serialize_idx_labels(parsed) == bytes);
}

TEST_CASE("idx parse failures are distinct") {
    SUBCASE("label magic fed to the image parser") {
        CHECK_THROWS_AS(parse_idx_images(label_fixture_bytes()), BadMagicError);
    }
    SUBCASE("image magic fed to the label parser") {
        CHECK_THROWS_AS(parse_idx_labels(image_fixture_bytes()), BadMagicError);
    }
    SUBCASE("declared count exceeds the payload") {
        auto bytes = image_fixture_bytes();
        bytes[7] = 3;  // count 2 -> 3, payload unchanged
        CHECK_THROWS_AS(parse_idx_images(bytes), TruncatedError);
    }
    SUBCASE("cut payload") {
        auto bytes = image_fixture_bytes();
        bytes.resize(bytes.size() - 100);
        CHECK_THROWS_AS(parse_idx_images(bytes), TruncatedError);
    }
    SUBCASE("non 28x28 dimensions") {
        auto bytes = image_fixture_bytes();
        bytes[11] = 27;  // rows 28 -> 27
        CHECK_THROWS_AS(parse_idx_images(bytes), BadDimsError);
    }
    SUBCASE("label above 9") {
        IdxLabels labels{1, {10}};
        CHECK_THROWS_AS(parse_idx_labels(serialize_idx_labels(labels)), LabelError);
    }
}

TEST_CASE("pixel statistics") {
    SUBCASE("two pixels 0 and 255 scale to mean .5 and std .5") {
        RawDataset raw;
        raw.images = {0, 255};
        const PixelStats stats = compute_stats(raw);
        CHECK(stats.mean == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(stats.stdev == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("constant images are degenerate") {
        RawDataset raw;
        raw.images.assign(784, 128);
        CHECK_THROWS_AS(compute_stats(raw), DegenerateDataError);
    }
    SUBCASE("empty input") {
        CHECK_THROWS_AS(compute_stats(RawDataset{}), EmptyError);
    }
}

TEST_CASE("normalization") {
    const RawDataset raw = synthesize_digits(64, 5);
    const PixelStats stats = compute_stats(raw);
    const NormalizedDataset data = normalize(raw, stats);
    CHECK(data.images.shape() == Shape{64, 1, 28, 28});

    SUBCASE("pixel equal to the scaled mean maps to zero") {
        for (std::size_t i = 0; i < raw.images.size(); ++i) {
            const double expected = (raw.images[i] / 255.0 - stats.mean) / stats.stdev;
            CHECK(data.images[i] == doctest::Approx(expected).epsilon(1e-15));
        }
    }

    SUBCASE("normalized training data has mean 0 and std 1") {
        double sum = 0.0, comp = 0.0;
        for (double v : data.images.span()) {  // Kahan
            const double y = v - comp;
            const double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        const double mean = sum / static_cast<double>(data.images.size());
        CHECK(std::abs(mean) <= 1e-10);
        double var = 0.0;
        for (double v : data.images.span()) var += (v - mean) * (v - mean);
        var /= static_cast<double>(data.images.size());
        CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-10);
    }

    SUBCASE("denormalization inverts within 1e-12") {
        for (std::size_t i = 0; i < 784; ++i) {
            const double back = (data.images[i] * stats.stdev + stats.mean) * 255.0;
            CHECK(std::abs(back - raw.images[i]) <= 1e-12 * 255.0);
        }
    }

    SUBCASE("zero stdev rejected") {
        CHECK_THROWS_AS(normalize(raw, PixelStats{0.5, 0.0}), DegenerateDataError);
    }
}

TEST_CASE("epoch shuffling") {
    const std::size_t n = 1000;
    const auto perm = epoch_permutation(n, 7, 0);

    SUBCASE("is a permutation") {
        auto sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
    }
    SUBCASE("deterministic per (seed, epoch), distinct across epochs and seeds") {
        CHECK(epoch_permutation(n, 7, 0) == perm);
        CHECK(epoch_permutation(n, 7, 1) != perm);
        CHECK(epoch_permutation(n, 8, 0) != perm);
    }
}

TEST_CASE("batch stream") {
    const RawDataset raw = synthesize_digits(1000, 11);
    const NormalizedDataset data = normalize(raw, compute_stats(raw));

    BatchStream stream(data, 0, 7, 64);
    CHECK(stream.batch_count() == 16);  // 1000 = 15 * 64 + 40

    std::map<int, int> seen;
    std::size_t batches = 0, last_size = 0;
    std::vector<Batch> first_epoch;
    while (auto batch = stream.next()) {
        ++batches;
        last_size = batch->labels.size();
        for (auto l : batch->labels) ++seen[l];
        first_epoch.push_back(std::move(*batch));
    }
    CHECK(batches == 16);
    CHECK(last_size == 40);

    std::map<int, int> want;
    for (auto l : data.labels) ++want[l];
    CHECK(seen == want);

    SUBCASE("same (seed, epoch) twice gives the identical order") {
        BatchStream again(data, 0, 7, 64);
        std::size_t idx = 0;
        while (auto batch = again.next()) {
            const Batch& ref = first_epoch[idx++];
            CHECK(batch->labels == ref.labels);
            for (std::size_t i = 0; i < batch->images.size(); ++i)
                CHECK(batch->images[i] == ref.images[i]);
        }
    }

    SUBCASE("938 batches for the full training set size") {
        CHECK((60000 + 63) / 64 == 938);
        CHECK(60000 - 937 * 64 == 32);
    }
}

TEST_CASE("loading idx files from disk, plain and gzip") {
    TempDir dir("dataset");
    const RawDataset raw = synthesize_digits(40, 21);
    IdxImages images{raw.count(), 28, 28, raw.images};
    IdxLabels labels{raw.count(), raw.labels};

    write_bytes(dir.path / "train-images-idx3-ubyte", serialize_idx_images(images));
    write_bytes(dir.path / "train-labels-idx1-ubyte", serialize_idx_labels(labels));
    // test split stored gzip-compressed
    write_bytes(dir.path / "t10k-images-idx3-ubyte.gz",
                gzip_compress(serialize_idx_images(images)));
    write_bytes(dir.path / "t10k-labels-idx1-ubyte.gz",
                gzip_compress(serialize_idx_labels(labels)));

    const Mnist data = load_mnist(dir.str());
    CHECK(data.train.count() == 40);
    CHECK(data.test.count() == 40);
    CHECK(data.train.images == raw.images);
    CHECK(data.test.images == raw.images);  // gzip path decodes to the same bytes

    SUBCASE("limits cut the split") {
        const Mnist limited = load_mnist(dir.str(), {}, 10, 5);
        CHECK(limited.train.count() == 10);
        CHECK(limited.train.images.size() == 10 * kPixelsPerImage);
        CHECK(limited.test.count() == 5);
    }

    SUBCASE("missing files raise io errors") {
        CHECK_THROWS_AS(load_split(dir.str(), "absent-images", "absent-labels"), IoError);
    }
}

TEST_CASE("synthetic digits are deterministic and labeled") {
    const RawDataset a = synthesize_digits(128, 3);
    const RawDataset b = synthesize_digits(128, 3);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);

    const RawDataset c = synthesize_digits(128, 4);
    CHECK(a.images != c.images);

    for (auto l : a.labels) CHECK(l <= 9);
    // image prefix is stable when the count grows
    const RawDataset longer = synthesize_digits(200, 3);
    CHECK(std::equal(a.images.begin(), a.images.end(), longer.images.begin()));

    // images are not blank
    std::size_t bright = 0;
    for (auto p : a.images)
        if (p > 128) ++bright;
    CHECK(bright > a.images.size() / 50);
}
