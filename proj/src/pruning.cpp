#include "dprune/pruning.hpp"

#include <algorithm>
#include <cmath>

#include "dprune/harness.hpp"

namespace dprune {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

struct PairAngle {
    double angle;
    std::size_t i, j;
};

}  // namespace

ActivationMatrix collect_activations(const Network& net, const NormalizedDataset& patterns,
                                     std::size_t limit) {
    if (patterns.count() == 0) throw EmptyError("collect_activations: no patterns");
    const std::size_t total = limit == 0 ? patterns.count() : std::min(limit, patterns.count());
    const std::size_t hidden = net.hidden();

    ActivationMatrix acts;
    acts.values = Tensor(Shape{hidden, total});
    acts.pattern_count = total;
    acts.source = "train";

    double* out = acts.values.data();
    constexpr std::size_t kEvalBatch = 256;
    const double* src = patterns.images.data();
    for (std::size_t start = 0; start < total; start += kEvalBatch) {
        const std::size_t n = std::min(kEvalBatch, total - start);
        Tensor batch(Shape{n, 1, 28, 28},
                     {src + start * kPixelsPerImage, src + (start + n) * kPixelsPerImage});
        const ForwardCache cache = forward_eval(net, batch);
        const double* raw = cache.fc1_out.data();  // [n, hidden]
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t h = 0; h < hidden; ++h)
                out[h * total + start + b] = sigmoid(raw[b * hidden + h]) - 0.5;
    }
    return acts;
}

std::optional<double> angle_deg(std::span<const double> u, std::span<const double> v,
                                double eps) {
    if (u.size() != v.size())
        throw ShapeError("angle_deg: length mismatch " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
    const double nu = norm(u), nv = norm(v);
    if (nu < eps || nv < eps) return std::nullopt;
    const double c = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
    return std::acos(c) * kRadToDeg;
}

PrunePlan build_plan(const ActivationMatrix& acts, const PruneConfig& cfg) {
    if (cfg.angle_threshold_deg <= 0.0 || cfg.angle_threshold_deg >= 90.0)
        throw ConfigError("angle threshold must lie in (0, 90) degrees");
    const std::size_t hidden = acts.hidden();
    if (hidden < 2) throw ConfigError("build_plan: need at least 2 hidden neurons");
    const std::size_t patterns = acts.values.shape()[1];
    const double alpha = cfg.angle_threshold_deg;

    PrunePlan plan;
    plan.original_size = hidden;

    std::vector<double> norms(hidden);
    std::vector<bool> defined(hidden);
    const double* base = acts.values.data();
    for (std::size_t h = 0; h < hidden; ++h) {
        norms[h] = norm(std::span(base + h * patterns, patterns));
        defined[h] = norms[h] >= cfg.norm_epsilon;
        if (!defined[h]) plan.zero_norm.push_back(h);
    }

    // angles computed once from the original matrix, never recomputed
    std::vector<PairAngle> similar, complementary;
    for (std::size_t i = 0; i + 1 < hidden; ++i) {
        if (!defined[i]) continue;
        const std::span<const double> u(base + i * patterns, patterns);
        for (std::size_t j = i + 1; j < hidden; ++j) {
            if (!defined[j]) continue;
            const std::span<const double> v(base + j * patterns, patterns);
            const double c = std::clamp(dot(u, v) / (norms[i] * norms[j]), -1.0, 1.0);
            const double angle = std::acos(c) * kRadToDeg;
            if (angle <= alpha)
                similar.push_back({angle, i, j});
            else if (angle >= 180.0 - alpha)
                complementary.push_back({angle, i, j});
        }
    }

    // widest angles first so a larger threshold only appends candidates
    std::sort(complementary.begin(), complementary.end(), [](const PairAngle& a, const PairAngle& b) {
        if (a.angle != b.angle) return a.angle > b.angle;
        return std::tie(a.i, a.j) < std::tie(b.i, b.j);
    });
    std::sort(similar.begin(), similar.end(), [](const PairAngle& a, const PairAngle& b) {
        if (a.angle != b.angle) return a.angle < b.angle;
        return std::tie(a.i, a.j) < std::tie(b.i, b.j);
    });

    std::vector<bool> alive(hidden, true);
    for (const auto& p : complementary) {
        if (!alive[p.i] || !alive[p.j]) continue;
        alive[p.i] = alive[p.j] = false;
        plan.complementary_removals.emplace_back(p.i, p.j);
        plan.complementary_angles.push_back(p.angle);
    }
    for (const auto& p : similar) {
        if (!alive[p.i] || !alive[p.j]) continue;
        alive[p.j] = false;  // lower index kept
        plan.similar_merges.emplace_back(p.i, p.j);
        plan.merge_angles.push_back(p.angle);
    }
    for (std::size_t h = 0; h < hidden; ++h)
        if (alive[h]) plan.kept.push_back(h);
    return plan;
}

Network apply_plan(const Network& net, const PrunePlan& plan) {
    const std::size_t hidden = net.hidden();
    if (plan.original_size != hidden)
        throw PlanError("plan was built for " + std::to_string(plan.original_size) +
                        " hidden neurons, network has " + std::to_string(hidden));

    std::vector<int> state(hidden, 0);  // 0 untouched, 1 kept, -1 removed
    auto mark = [&](std::size_t idx, int s) {
        if (idx >= hidden) throw PlanError("plan index " + std::to_string(idx) + " out of range");
        if (state[idx] != 0) throw PlanError("plan touches neuron " + std::to_string(idx) + " twice");
        state[idx] = s;
    };
    for (const auto& [i, j] : plan.complementary_removals) {
        mark(i, -1);
        mark(j, -1);
    }
    for (const auto& [keep, drop] : plan.similar_merges) {
        if (keep >= hidden || state[keep] == -1)
            throw PlanError("merge keeper " + std::to_string(keep) + " is not alive");
        mark(drop, -1);
    }
    if (plan.kept.size() + std::count(state.begin(), state.end(), -1) != hidden)
        throw PlanError("kept/removed sets do not partition the hidden layer");
    for (std::size_t idx : plan.kept)
        if (idx >= hidden || state[idx] == -1)
            throw PlanError("kept index " + std::to_string(idx) + " was removed");
    if (plan.kept.empty()) throw PlanError("plan keeps no neurons");

    Network pruned(plan.kept.size());
    pruned.conv1.weights = net.conv1.weights;
    pruned.conv1.bias = net.conv1.bias;
    pruned.conv2.weights = net.conv2.weights;
    pruned.conv2.bias = net.conv2.bias;
    pruned.dropout = net.dropout;

    // kept neurons keep their incoming weights and bias
    const std::size_t in = net.fc1.in_features();
    for (std::size_t k = 0; k < plan.kept.size(); ++k) {
        const double* src = net.fc1.weights.data() + plan.kept[k] * in;
        std::copy(src, src + in, pruned.fc1.weights.data() + k * in);
        pruned.fc1.bias[k] = net.fc1.bias[plan.kept[k]];
    }

    // merge outgoing columns before dropping the removed ones
    Tensor fc2w = net.fc2.weights;  // [10, hidden]
    for (const auto& [keep, drop] : plan.similar_merges)
        for (std::size_t o = 0; o < kClasses; ++o)
            fc2w[o * hidden + keep] += fc2w[o * hidden + drop];
    for (std::size_t o = 0; o < kClasses; ++o)
        for (std::size_t k = 0; k < plan.kept.size(); ++k)
            pruned.fc2.weights[o * plan.kept.size() + k] = fc2w[o * hidden + plan.kept[k]];
    pruned.fc2.bias = net.fc2.bias;
    return pruned;
}

PruneOutcome prune_and_evaluate(const Network& net, const NormalizedDataset& patterns,
                                const NormalizedDataset& test, const PruneConfig& cfg) {
    const ActivationMatrix acts = collect_activations(net, patterns, cfg.pattern_limit);
    const PrunePlan plan = build_plan(acts, cfg);

    PruneOutcome outcome{apply_plan(net, plan), {}};
    outcome.report.plan = plan;
    outcome.report.angle_threshold_deg = cfg.angle_threshold_deg;
    outcome.report.pre_size = net.hidden();
    outcome.report.post_size = outcome.net.hidden();
    outcome.report.removed_fraction =
        1.0 - static_cast<double>(outcome.report.post_size) / outcome.report.pre_size;
    outcome.report.pre_accuracy = evaluate(net, test);
    outcome.report.post_accuracy = evaluate(outcome.net, test);
    return outcome;
}

}  // namespace dprune
