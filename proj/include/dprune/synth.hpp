#pragma once

#include "dprune/dataset.hpp"

namespace dprune {

// Deterministic 28x28 digit-like images for offline runs and tests: each
// class is a seven-segment stroke template rendered with per-image affine
// jitter, stroke-width and brightness variation, and pixel noise. Image i
// depends only on (seed, i), so prefixes are stable across counts.
RawDataset synthesize_digits(std::size_t count, std::uint64_t seed);

// Writes train/test IDX files (canonical MNIST names by default) under dir.
void write_synthetic_mnist(const std::string& dir, std::size_t train_count,
                           std::size_t test_count, std::uint64_t seed,
                           const MnistFiles& files = {});

}  // namespace dprune
