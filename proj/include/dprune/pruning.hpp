#pragma once

#include <optional>
#include <utility>

#include "dprune/dataset.hpp"
#include "dprune/model.hpp"

namespace dprune {

// Row h holds neuron h's measurement vector over the pattern set: the
// pre-ReLU fc1 output squashed by sigmoid and centered by -0.5, so every
// stored value lies in (-0.5, 0.5). Collected in eval mode (dropout off).
struct ActivationMatrix {
    Tensor values;  // [H, P]
    std::size_t pattern_count = 0;
    std::string source;

    std::size_t hidden() const { return values.shape()[0]; }
};

struct PruneConfig {
    double angle_threshold_deg = 15.0;  // alpha, valid range (0, 90)
    std::size_t pattern_limit = 10000;
    double norm_epsilon = 1e-9;
};

// Two hidden neurons are similar when their angle is <= alpha and
// complementary when it is >= 180 - alpha. Complementary pairs are handled
// first, then similar pairs among the survivors.
struct PrunePlan {
    std::size_t original_size = 0;
    std::vector<std::pair<std::size_t, std::size_t>> complementary_removals;  // both removed
    std::vector<std::pair<std::size_t, std::size_t>> similar_merges;  // (kept, removed)
    std::vector<double> complementary_angles;  // parallel to complementary_removals
    std::vector<double> merge_angles;          // parallel to similar_merges
    std::vector<std::size_t> kept;       // sorted surviving indices
    std::vector<std::size_t> zero_norm;  // excluded from pairing, always kept

    std::size_t removed_count() const { return original_size - kept.size(); }
};

struct PruneReport {
    PrunePlan plan;
    double angle_threshold_deg = 0.0;
    std::size_t pre_size = 0;
    std::size_t post_size = 0;
    double removed_fraction = 0.0;  // 1 - post/pre
    double pre_accuracy = 0.0;
    double post_accuracy = 0.0;
};

ActivationMatrix collect_activations(const Network& net, const NormalizedDataset& patterns,
                                     std::size_t limit);

// Angle between two vectors in degrees, in [0, 180]. nullopt when either
// norm falls below eps (the angle is undefined there).
std::optional<double> angle_deg(std::span<const double> u, std::span<const double> v,
                                double eps);

PrunePlan build_plan(const ActivationMatrix& acts, const PruneConfig& cfg);

// Builds the smaller network: conv blocks copied bit-exactly, kept fc1 rows
// and biases copied, each merged neuron's outgoing fc2 column added to its
// keeper's column, complementary columns dropped without compensation.
// No retraining.
Network apply_plan(const Network& net, const PrunePlan& plan);

struct PruneOutcome {
    Network net;
    PruneReport report;
};

// collect -> build_plan -> apply_plan -> evaluate on the test split.
// Patterns come from the training split so the pruning decision never sees
// test data.
PruneOutcome prune_and_evaluate(const Network& net, const NormalizedDataset& patterns,
                                const NormalizedDataset& test, const PruneConfig& cfg);

}  // namespace dprune
