#pragma once

#include <functional>
#include <iosfwd>
#include <optional>

#include "dprune/dataset.hpp"
#include "dprune/model.hpp"
#include "dprune/pruning.hpp"

namespace dprune {

struct RunConfig {
    std::size_t fc_hidden = 400;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    double lr = 0.01;
    double momentum = 0.05;
    std::uint64_t seed = 1;
    std::size_t train_limit = 0;  // 0 = full split
    std::size_t test_limit = 0;
    std::string data_dir;
    MnistFiles files;
};

struct ExperimentRecord {
    std::string run_id;
    RunConfig config;
    std::vector<double> epoch_accuracies;  // one test-set evaluation per epoch
    double final_accuracy = 0.0;           // equals the last epoch entry
    double seconds = 0.0;
    std::optional<PruneReport> prune;
};

// Both splits normalized with training-split statistics.
struct PreparedData {
    NormalizedDataset train;
    NormalizedDataset test;
};

PreparedData prepare(const Mnist& raw);
PreparedData load_and_prepare(const RunConfig& cfg);

using BatchHook = std::function<void(std::size_t batch_index, double loss)>;

struct TrainResult {
    Network net;
    ExperimentRecord record;
};

// One full training run: per epoch, shuffle, then per batch
// zero_grad / forward / loss / backward / step, then one test evaluation.
TrainResult train(const RunConfig& cfg, const PreparedData& data,
                  const BatchHook& on_batch = {});

// Fraction of test items whose argmax log-probability matches the label;
// ties break toward the lowest class index. Dropout is off.
double evaluate(const Network& net, const NormalizedDataset& test);

// CSV output. Accuracies carry 6 decimal digits. The `seconds` column is
// written as 0.000 unless timing is enabled, keeping equal configurations
// byte-identical across runs.
std::string runs_csv_header(std::size_t epochs);
std::string runs_csv_row(const ExperimentRecord& rec, bool timing);
std::string runs_summary_row(std::size_t fc_hidden, const RunConfig& base,
                             std::size_t epochs, double mean_final, double max_final);
std::string prune_csv_header();
std::string prune_csv_row(const std::string& run_id, const PruneReport& report);

// Trains `repeats` networks per size (seeds base.seed, base.seed+1, ...) and
// appends one row per run plus one summary row per size.
void sweep_fc_sizes(const std::vector<std::size_t>& sizes, std::size_t repeats,
                    const RunConfig& base, const PreparedData& data, std::ostream& csv,
                    bool timing = false, std::size_t jobs = 1);

struct AngleSweepModel {
    std::string id;
    Network net;
};

// Prunes every model at every angle and appends one prune row each.
void sweep_prune_angles(const std::vector<double>& angles,
                        const std::vector<AngleSweepModel>& models,
                        const PreparedData& data, const PruneConfig& proto,
                        std::ostream& csv, std::size_t jobs = 1);

// Entry point behind the dprune binary; exposed so tests can drive the CLI
// in-process. Returns the process exit code (0 ok, 1 runtime failure,
// 2 usage error).
int run_cli(int argc, const char* const* argv);

}  // namespace dprune
