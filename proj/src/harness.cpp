#include "dprune/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include "dprune/optimizer.hpp"
#include "dprune/rng.hpp"

namespace dprune {

PreparedData prepare(const Mnist& raw) {
    const PixelStats stats = compute_stats(raw.train);
    return {normalize(raw.train, stats), normalize(raw.test, stats)};
}

PreparedData load_and_prepare(const RunConfig& cfg) {
    if (cfg.data_dir.empty())
        throw ConfigError("no data directory given (flag --data-dir or DPRUNE_DATA_DIR)");
    return prepare(load_mnist(cfg.data_dir, cfg.files, cfg.train_limit, cfg.test_limit));
}

TrainResult train(const RunConfig& cfg, const PreparedData& data, const BatchHook& on_batch) {
    const auto start = std::chrono::steady_clock::now();

    Network net = init_network({cfg.fc_hidden, cfg.seed});
    SgdState sgd(net, cfg.lr, cfg.momentum);
    Rng dropout_rng(mix64(cfg.seed, 0xd80bULL));

    ExperimentRecord record;
    record.config = cfg;
    record.run_id = "fc" + std::to_string(cfg.fc_hidden) + "_seed" + std::to_string(cfg.seed);

    std::size_t batch_index = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        BatchStream batches(data.train, epoch, cfg.seed, cfg.batch_size);
        while (auto batch = batches.next()) {
            zero_grad(net);
            const ForwardCache cache = forward(net, batch->images, Mode::train, dropout_rng);
            const LossResult loss = nll_loss(cache.log_probs, batch->labels);
            if (!std::isfinite(loss.value))
                throw Error("non-finite loss at batch " + std::to_string(batch_index));
            backward(net, cache, loss.grad);
            sgd_step(net, sgd);
            if (on_batch) on_batch(batch_index, loss.value);
            ++batch_index;
        }
        record.epoch_accuracies.push_back(evaluate(net, data.test));
    }

    record.final_accuracy = record.epoch_accuracies.empty() ? evaluate(net, data.test)
                                                            : record.epoch_accuracies.back();
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(net), std::move(record)};
}

double evaluate(const Network& net, const NormalizedDataset& test) {
    if (test.count() == 0) throw EmptyError("evaluate: empty test set");
    constexpr std::size_t kEvalBatch = 250;
    const double* src = test.images.data();
    std::size_t correct = 0;
    for (std::size_t start = 0; start < test.count(); start += kEvalBatch) {
        const std::size_t n = std::min(kEvalBatch, test.count() - start);
        Tensor batch(Shape{n, 1, 28, 28},
                     {src + start * kPixelsPerImage, src + (start + n) * kPixelsPerImage});
        const ForwardCache cache = forward_eval(net, batch);
        const double* lp = cache.log_probs.data();
        for (std::size_t b = 0; b < n; ++b) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < kClasses; ++c)
                if (lp[b * kClasses + c] > lp[b * kClasses + best]) best = c;
            if (best == test.labels[start + b]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.count());
}

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string acc6(double v) { return fmt("%.6f", v); }

}  // namespace

std::string runs_csv_header(std::size_t epochs) {
    std::ostringstream os;
    os << "run_id,fc_hidden,seed,epochs,batch,lr,momentum,train_limit,final_acc";
    for (std::size_t e = 1; e <= epochs; ++e) os << ",acc_epoch_" << e;
    os << ",seconds,mean_final_acc,max_final_acc";
    return os.str();
}

namespace {

void append_config_fields(std::ostringstream& os, const RunConfig& cfg) {
    os << cfg.epochs << ',' << cfg.batch_size << ',' << fmt("%g", cfg.lr) << ','
       << fmt("%g", cfg.momentum) << ',' << cfg.train_limit;
}

}  // namespace

std::string runs_csv_row(const ExperimentRecord& rec, bool timing) {
    std::ostringstream os;
    os << rec.run_id << ',' << rec.config.fc_hidden << ',' << rec.config.seed << ',';
    append_config_fields(os, rec.config);
    os << ',' << acc6(rec.final_accuracy);
    for (double a : rec.epoch_accuracies) os << ',' << acc6(a);
    os << ',' << fmt("%.3f", timing ? rec.seconds : 0.0) << ",,";
    return os.str();
}

std::string runs_summary_row(std::size_t fc_hidden, const RunConfig& base, std::size_t epochs,
                             double mean_final, double max_final) {
    std::ostringstream os;
    os << "summary_fc" << fc_hidden << ',' << fc_hidden << ",,";
    append_config_fields(os, base);
    os << ',';  // final_acc empty
    for (std::size_t e = 0; e < epochs; ++e) os << ',';
    os << ',' << acc6(mean_final) << ',' << acc6(max_final);
    return os.str();
}

std::string prune_csv_header() {
    return "run_id,angle_deg,pre_size,post_size,removed_fraction,pre_acc,post_acc,"
           "acc_drop_points,acc_drop_relative,n_complementary_pairs,n_similar_merges";
}

std::string prune_csv_row(const std::string& run_id, const PruneReport& r) {
    std::ostringstream os;
    os << run_id << ',' << fmt("%g", r.angle_threshold_deg) << ',' << r.pre_size << ','
       << r.post_size << ',' << acc6(r.removed_fraction) << ',' << acc6(r.pre_accuracy) << ','
       << acc6(r.post_accuracy) << ',' << acc6(r.pre_accuracy - r.post_accuracy) << ','
       << acc6(r.pre_accuracy > 0.0 ? (r.pre_accuracy - r.post_accuracy) / r.pre_accuracy : 0.0)
       << ',' << r.plan.complementary_removals.size() << ',' << r.plan.similar_merges.size();
    return os.str();
}

namespace {

// Runs tasks 0..count-1 on `jobs` threads; results land in submission order
// so the output does not depend on scheduling.
void run_indexed(std::size_t count, std::size_t jobs,
                 const std::function<void(std::size_t)>& task) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                task(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(jobs, count); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

void sweep_fc_sizes(const std::vector<std::size_t>& sizes, std::size_t repeats,
                    const RunConfig& base, const PreparedData& data, std::ostream& csv,
                    bool timing, std::size_t jobs) {
    if (sizes.empty() || repeats == 0) throw ConfigError("sweep needs sizes and repeats >= 1");

    struct RunSlot {
        std::string row;
        double final_acc = 0.0;
    };
    std::vector<RunSlot> slots(sizes.size() * repeats);

    run_indexed(slots.size(), jobs, [&](std::size_t idx) {
        const std::size_t size_idx = idx / repeats;
        const std::size_t rep = idx % repeats;
        RunConfig cfg = base;
        cfg.fc_hidden = sizes[size_idx];
        cfg.seed = base.seed + rep;
        const TrainResult result = train(cfg, data);
        slots[idx] = {runs_csv_row(result.record, timing), result.record.final_accuracy};
    });

    csv << runs_csv_header(base.epochs) << '\n';
    for (const auto& slot : slots) csv << slot.row << '\n';
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        double sum = 0.0, mx = 0.0;
        for (std::size_t r = 0; r < repeats; ++r) {
            const double a = slots[s * repeats + r].final_acc;
            sum += a;
            mx = std::max(mx, a);
        }
        csv << runs_summary_row(sizes[s], base, base.epochs, sum / repeats, mx) << '\n';
    }
}

void sweep_prune_angles(const std::vector<double>& angles,
                        const std::vector<AngleSweepModel>& models, const PreparedData& data,
                        const PruneConfig& proto, std::ostream& csv, std::size_t jobs) {
    if (angles.empty() || models.empty())
        throw ConfigError("angle sweep needs at least one angle and one model");

    std::vector<std::string> rows(models.size() * angles.size());
    run_indexed(rows.size(), jobs, [&](std::size_t idx) {
        const std::size_t m = idx / angles.size();
        const std::size_t a = idx % angles.size();
        PruneConfig cfg = proto;
        cfg.angle_threshold_deg = angles[a];
        const PruneOutcome outcome =
            prune_and_evaluate(models[m].net, data.train, data.test, cfg);
        rows[idx] = prune_csv_row(models[m].id, outcome.report);
    });

    csv << prune_csv_header() << '\n';
    for (const auto& row : rows) csv << row << '\n';
}

}  // namespace dprune
