#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dprune/pruning.hpp"
#include "testutil.hpp"

using namespace dprune;
using testing::random_tensor;
using testing::synth_prepared;

namespace {

ActivationMatrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
    ActivationMatrix acts;
    const std::size_t h = rows.size(), p = rows[0].size();
    acts.values = Tensor(Shape{h, p});
    acts.pattern_count = p;
    acts.source = "fixture";
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < p; ++j) acts.values[i * p + j] = rows[i][j];
    return acts;
}

void check_plan_soundness(const PrunePlan& plan) {
    std::vector<int> seen(plan.original_size, 0);
    for (const auto& [i, j] : plan.complementary_removals) {
        ++seen[i];
        ++seen[j];
    }
    for (const auto& [k, r] : plan.similar_merges) ++seen[r];
    for (std::size_t idx : plan.kept) ++seen[idx];
    // every neuron appears exactly once as removed-or-kept
    for (std::size_t h = 0; h < plan.original_size; ++h) CHECK(seen[h] == 1);
    CHECK(std::is_sorted(plan.kept.begin(), plan.kept.end()));
    CHECK(plan.kept.size() + 2 * plan.complementary_removals.size() +
              plan.similar_merges.size() ==
          plan.original_size);
}

}  // namespace

TEST_CASE("angle between vectors") {
    const std::vector<double> u{1.0, 0.0}, v{0.0, 1.0}, w{2.0, 0.0}, nu{-1.0, 0.0};
    CHECK(*angle_deg(u, u, 1e-9) <= 1e-6);
    CHECK(*angle_deg(u, w, 1e-9) <= 1e-6);  // same direction
    CHECK(*angle_deg(u, nu, 1e-9) == doctest::Approx(180.0).epsilon(1e-12));
    CHECK(*angle_deg(u, v, 1e-9) == doctest::Approx(90.0).epsilon(1e-12));

    SUBCASE("symmetry and scaling invariance") {
        Rng rng(1);
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<double> a(8), b(8);
            for (auto& x : a) x = rng.uniform(-1, 1);
            for (auto& x : b) x = rng.uniform(-1, 1);
            const double ab = *angle_deg(a, b, 1e-9);
            const double ba = *angle_deg(b, a, 1e-9);
            CHECK(ab == ba);
            const double c = rng.uniform(0.1, 10.0);
            std::vector<double> ca(8);
            for (std::size_t i = 0; i < 8; ++i) ca[i] = c * a[i];
            CHECK(std::abs(*angle_deg(ca, b, 1e-9) - ab) <= 1e-9);
        }
    }

    SUBCASE("near-zero norms are undefined") {
        const std::vector<double> z{1e-12, -1e-12};
        CHECK_FALSE(angle_deg(z, u, 1e-9).has_value());
        CHECK_FALSE(angle_deg(u, z, 1e-9).has_value());
    }

    CHECK_THROWS_AS(angle_deg(std::vector<double>{1.0}, u, 1e-9), ShapeError);
}

TEST_CASE("build_plan on crafted matrices") {
    SUBCASE("vacuous thresholds keep everything") {
        const auto acts = matrix_from_rows({{0.4, 0.0}, {0.0, 0.4}, {0.3, 0.3}});
        const PrunePlan plan = build_plan(acts, {0.001, 0, 1e-9});
        CHECK(plan.complementary_removals.empty());
        CHECK(plan.similar_merges.empty());
        CHECK(plan.kept == std::vector<std::size_t>{0, 1, 2});
        check_plan_soundness(plan);
    }

    SUBCASE("two identical rows merge, lower index kept") {
        const auto acts = matrix_from_rows({{0.1, 0.2}, {0.1, 0.2}, {-0.3, 0.4}});
        const PrunePlan plan = build_plan(acts, {15.0, 0, 1e-9});
        CHECK(plan.complementary_removals.empty());
        REQUIRE(plan.similar_merges.size() == 1);
        CHECK(plan.similar_merges[0] == std::pair<std::size_t, std::size_t>{0, 1});
        CHECK(plan.kept == std::vector<std::size_t>{0, 2});
        check_plan_soundness(plan);
    }

    SUBCASE("complementary pairs go first: rows r, r, -r leave one r alive") {
        const std::vector<double> r{0.2, -0.1, 0.35};
        std::vector<double> neg(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) neg[i] = -r[i];
        const PrunePlan plan = build_plan(matrix_from_rows({r, r, neg}), {15.0, 0, 1e-9});
        REQUIRE(plan.complementary_removals.size() == 1);
        CHECK(plan.complementary_removals[0] == std::pair<std::size_t, std::size_t>{0, 2});
        CHECK(plan.similar_merges.empty());
        CHECK(plan.kept == std::vector<std::size_t>{1});
        check_plan_soundness(plan);
    }

    SUBCASE("near-zero-norm rows are excluded from pairing and kept") {
        const auto acts = matrix_from_rows({{0.1, 0.2}, {0.1, 0.2}, {0.0, 0.0}});
        const PrunePlan plan = build_plan(acts, {15.0, 0, 1e-9});
        CHECK(plan.zero_norm == std::vector<std::size_t>{2});
        CHECK(plan.kept == std::vector<std::size_t>{0, 2});
        check_plan_soundness(plan);
    }

    SUBCASE("threshold range is enforced") {
        const auto acts = matrix_from_rows({{0.1, 0.2}, {0.1, 0.2}});
        CHECK_THROWS_AS(build_plan(acts, {0.0, 0, 1e-9}), ConfigError);
        CHECK_THROWS_AS(build_plan(acts, {90.0, 0, 1e-9}), ConfigError);
    }
}

TEST_CASE("removal count is monotone in the threshold") {
    Rng rng(7);
    // random rows plus planted similar and complementary structure
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t h = 24, p = 16;
        std::vector<std::vector<double>> rows(h, std::vector<double>(p));
        for (auto& row : rows)
            for (auto& v : row) v = rng.uniform(-0.5, 0.5);
        for (int k = 0; k < 4; ++k) {
            const std::size_t src = rng.index(h), dst = rng.index(h);
            if (src == dst) continue;
            const double flip = rng.uniform() < 0.5 ? -1.0 : 1.0;
            for (std::size_t j = 0; j < p; ++j)
                rows[dst][j] = flip * rows[src][j] + rng.uniform(-0.05, 0.05);
        }
        const auto acts = matrix_from_rows(rows);

        std::size_t prev = 0;
        for (double alpha = 5.0; alpha <= 85.0; alpha += 5.0) {
            const PrunePlan plan = build_plan(acts, {alpha, 0, 1e-9});
            check_plan_soundness(plan);
            CHECK(plan.removed_count() >= prev);
            prev = plan.removed_count();
        }
    }
}

TEST_CASE("collect_activations") {
    const PreparedData data = synth_prepared(96, 32, 5);
    Network net = init_network({12, 3});

    const ActivationMatrix acts = collect_activations(net, data.train, 64);
    CHECK(acts.values.shape() == Shape{12, 64});
    CHECK(acts.pattern_count == 64);
    for (double v : acts.values.span()) {
        CHECK(v > -0.5);
        CHECK(v < 0.5);
    }

    SUBCASE("limit larger than the pattern set saturates") {
        const ActivationMatrix all = collect_activations(net, data.train, 10000);
        CHECK(all.pattern_count == 96);
    }

    SUBCASE("zero raw output stores exactly zero") {
        net.fc1.weights.fill(0.0);
        net.fc1.bias.fill(0.0);
        const ActivationMatrix zero = collect_activations(net, data.train, 16);
        for (double v : zero.values.span()) CHECK(v == 0.0);
    }

    SUBCASE("matches a direct eval-mode forward") {
        const ActivationMatrix a = collect_activations(net, data.train, 8);
        Tensor batch(Shape{8, 1, 28, 28},
                     {data.train.images.data(), data.train.images.data() + 8 * kPixelsPerImage});
        const ForwardCache cache = forward_eval(net, batch);
        for (std::size_t b = 0; b < 8; ++b)
            for (std::size_t h = 0; h < 12; ++h) {
                const double raw = cache.fc1_out.at({b, h});
                const double want = 1.0 / (1.0 + std::exp(-raw)) - 0.5;
                CHECK(a.values.at({h, b}) == doctest::Approx(want).epsilon(1e-12));
            }
    }

    SUBCASE("empty pattern set") {
        NormalizedDataset empty;
        CHECK_THROWS_AS(collect_activations(net, empty, 10), EmptyError);
    }
}

TEST_CASE("apply_plan") {
    Rng rng(9);
    const PreparedData data = synth_prepared(64, 64, 6);
    const Network net = init_network({12, 4});

    SUBCASE("empty plan reproduces the network bit-exactly") {
        PrunePlan plan;
        plan.original_size = 12;
        for (std::size_t h = 0; h < 12; ++h) plan.kept.push_back(h);
        const Network same = apply_plan(net, plan);
        CHECK(same.hidden() == 12);
        const ForwardCache a = forward_eval(net, data.test.images);
        const ForwardCache b = forward_eval(same, data.test.images);
        for (std::size_t i = 0; i < a.log_probs.size(); ++i)
            CHECK(a.log_probs[i] == b.log_probs[i]);
    }

    SUBCASE("merged outgoing column is the sum of the two originals") {
        PrunePlan plan;
        plan.original_size = 12;
        plan.similar_merges = {{2, 5}};
        for (std::size_t h = 0; h < 12; ++h)
            if (h != 5) plan.kept.push_back(h);
        const Network pruned = apply_plan(net, plan);
        CHECK(pruned.hidden() == 11);
        // kept index 2 still sits at position 2 (indices below 5 unshifted)
        for (std::size_t o = 0; o < 10; ++o)
            CHECK(pruned.fc2.weights.at({o, 2}) ==
                  doctest::Approx(net.fc2.weights.at({o, 2}) + net.fc2.weights.at({o, 5}))
                      .epsilon(1e-15));
        // conv blocks copied bit-exactly
        for (std::size_t i = 0; i < net.conv1.weights.size(); ++i)
            CHECK(pruned.conv1.weights[i] == net.conv1.weights[i]);
        // kept fc1 rows untouched
        for (std::size_t i = 0; i < 640; ++i)
            CHECK(pruned.fc1.weights.at({2, i}) == net.fc1.weights.at({2, i}));
    }

    SUBCASE("invalid plans are rejected") {
        PrunePlan oob;
        oob.original_size = 12;
        oob.similar_merges = {{2, 17}};
        for (std::size_t h = 0; h < 12; ++h)
            if (h != 5) oob.kept.push_back(h);
        CHECK_THROWS_AS(apply_plan(net, oob), PlanError);

        PrunePlan twice;
        twice.original_size = 12;
        twice.complementary_removals = {{1, 2}, {2, 3}};
        twice.kept = {0, 4, 5, 6, 7, 8, 9, 10, 11};
        CHECK_THROWS_AS(apply_plan(net, twice), PlanError);

        PrunePlan wrong_h;
        wrong_h.original_size = 13;
        CHECK_THROWS_AS(apply_plan(net, wrong_h), PlanError);
    }
}

TEST_CASE("duplicated neuron with split outgoing column restores the original") {
    // duplicate neuron `dup` of a 12-hidden network as neuron 12, splitting
    // its outgoing column into c and column - c; pruning must merge the pair
    // back into the original function
    const PreparedData data = synth_prepared(128, 64, 8);
    Rng rng(10);

    for (std::uint64_t seed : {21u, 22u, 23u}) {
        const Network base = init_network({12, seed});
        const std::size_t dup = rng.index(12);
        const Network wide = testing::duplicate_fc1_neuron(base, dup, rng);

        const PruneOutcome outcome =
            prune_and_evaluate(wide, data.train, data.test, {1.0, 0, 1e-9});
        CHECK(outcome.net.hidden() == 12);
        REQUIRE(outcome.report.plan.similar_merges.size() == 1);
        CHECK(outcome.report.plan.similar_merges[0] ==
              std::pair<std::size_t, std::size_t>{dup, 12});

        const ForwardCache want = forward_eval(base, data.test.images);
        const ForwardCache got = forward_eval(outcome.net, data.test.images);
        for (std::size_t i = 0; i < want.log_probs.size(); ++i)
            CHECK(std::abs(got.log_probs[i] - want.log_probs[i]) <= 1e-9);
    }
}

TEST_CASE("prune_and_evaluate with a vacuous threshold changes nothing") {
    const PreparedData data = synth_prepared(128, 64, 12);
    const Network net = init_network({20, 31});

    const PruneOutcome outcome = prune_and_evaluate(net, data.train, data.test, {0.001, 0, 1e-9});
    CHECK(outcome.report.pre_size == 20);
    CHECK(outcome.report.post_size == 20);
    CHECK(outcome.report.removed_fraction == 0.0);
    CHECK(outcome.report.pre_accuracy == outcome.report.post_accuracy);
    CHECK(outcome.report.plan.complementary_removals.empty());
    CHECK(outcome.report.plan.similar_merges.empty());

    const ForwardCache a = forward_eval(net, data.test.images);
    const ForwardCache b = forward_eval(outcome.net, data.test.images);
    for (std::size_t i = 0; i < a.log_probs.size(); ++i)
        CHECK(a.log_probs[i] == b.log_probs[i]);
}
