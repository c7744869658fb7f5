#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "dprune/harness.hpp"
#include "dprune/synth.hpp"

namespace dprune {

namespace {

namespace fs = std::filesystem;

void add_data_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--data-dir", cfg.data_dir, "directory holding the MNIST IDX files")
        ->envname("DPRUNE_DATA_DIR");
    cmd->add_option("--train-images", cfg.files.train_images, "training images file name")
        ->capture_default_str();
    cmd->add_option("--train-labels", cfg.files.train_labels, "training labels file name")
        ->capture_default_str();
    cmd->add_option("--test-images", cfg.files.test_images, "test images file name")
        ->capture_default_str();
    cmd->add_option("--test-labels", cfg.files.test_labels, "test labels file name")
        ->capture_default_str();
    cmd->add_option("--train-limit", cfg.train_limit,
                    "use only the first N training images (0 = all)");
    cmd->add_option("--test-limit", cfg.test_limit, "use only the first N test images (0 = all)");
}

void add_train_options(CLI::App* cmd, RunConfig& cfg, bool with_fc_and_seed = true) {
    if (with_fc_and_seed) {
        cmd->add_option("--fc", cfg.fc_hidden, "fully connected hidden layer size")
            ->capture_default_str();
    }
    cmd->add_option("--seed", cfg.seed, "base RNG seed")->capture_default_str();
    cmd->add_option("--epochs", cfg.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch", cfg.batch_size, "mini-batch size")->capture_default_str();
    cmd->add_option("--lr", cfg.lr, "SGD learning rate")->capture_default_str();
    cmd->add_option("--momentum", cfg.momentum, "SGD momentum")->capture_default_str();
    add_data_options(cmd, cfg);
}

// Appends rows, writing the header first when the file is new or empty.
// An existing file must carry the same header.
void append_csv(const std::string& path, const std::string& header,
                const std::vector<std::string>& rows) {
    bool need_header = true;
    if (fs::exists(path) && fs::file_size(path) > 0) {
        std::ifstream is(path);
        std::string first;
        std::getline(is, first);
        if (first != header)
            throw ConfigError("existing file " + path + " has a different CSV header");
        need_header = false;
    }
    std::ofstream os(path, std::ios::app);
    if (!os) throw IoError("cannot open " + path + " for appending");
    if (need_header) os << header << '\n';
    for (const auto& row : rows) os << row << '\n';
    if (!os) throw IoError("write failed for " + path);
}

void write_prune_detail(const std::string& path, const PruneReport& r) {
    nlohmann::json detail;
    detail["angle_threshold_deg"] = r.angle_threshold_deg;
    detail["pre_size"] = r.pre_size;
    detail["post_size"] = r.post_size;
    detail["pre_accuracy"] = r.pre_accuracy;
    detail["post_accuracy"] = r.post_accuracy;
    detail["zero_norm"] = r.plan.zero_norm;
    detail["kept"] = r.plan.kept;
    auto& comp = detail["complementary_pairs"] = nlohmann::json::array();
    for (std::size_t k = 0; k < r.plan.complementary_removals.size(); ++k)
        comp.push_back({{"i", r.plan.complementary_removals[k].first},
                        {"j", r.plan.complementary_removals[k].second},
                        {"angle_deg", r.plan.complementary_angles[k]}});
    auto& merges = detail["similar_merges"] = nlohmann::json::array();
    for (std::size_t k = 0; k < r.plan.similar_merges.size(); ++k)
        merges.push_back({{"kept", r.plan.similar_merges[k].first},
                          {"removed", r.plan.similar_merges[k].second},
                          {"angle_deg", r.plan.merge_angles[k]}});
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << detail.dump(2) << '\n';
}

std::vector<double> default_angles() {
    std::vector<double> angles;
    for (int a = 10; a <= 80; a += 5) angles.push_back(a);
    return angles;
}

struct FetchFile {
    const char* name;
    std::size_t gz_bytes;
};

// canonical gzip payload sizes, checked after download
constexpr FetchFile kFetchFiles[] = {
    {"train-images-idx3-ubyte.gz", 9912422},
    {"train-labels-idx1-ubyte.gz", 28881},
    {"t10k-images-idx3-ubyte.gz", 1648877},
    {"t10k-labels-idx1-ubyte.gz", 4542},
};

void fetch_data(const std::string& base_url, const std::string& dir) {
    if (base_url.rfind("http://", 0) != 0)
        throw ConfigError("only http:// mirrors are supported; got " + base_url);
    const std::size_t host_start = 7;
    const std::size_t slash = base_url.find('/', host_start);
    const std::string host = base_url.substr(0, slash == std::string::npos ? base_url.size() : slash);
    std::string prefix = slash == std::string::npos ? "/" : base_url.substr(slash);
    if (prefix.back() != '/') prefix += '/';

    fs::create_directories(dir);
    httplib::Client client(host);
    client.set_connection_timeout(30);
    client.set_read_timeout(60);
    for (const auto& file : kFetchFiles) {
        std::cout << "fetching " << file.name << " ..." << std::flush;
        auto res = client.Get(prefix + file.name);
        if (!res || res->status != 200)
            throw IoError("download of " + std::string(file.name) + " failed" +
                          (res ? " (status " + std::to_string(res->status) + ")" : ""));
        if (res->body.size() != file.gz_bytes)
            throw IoError("size mismatch for " + std::string(file.name) + ": got " +
                          std::to_string(res->body.size()) + " bytes, expected " +
                          std::to_string(file.gz_bytes));
        const auto path = fs::path(dir) / file.name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open " + path.string() + " for writing");
        os.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
        if (!os) throw IoError("write failed for " + path.string());
        std::cout << " ok (" << res->body.size() << " bytes)\n";
    }
    const Mnist check = load_mnist(dir);
    std::cout << "verified: " << check.train.count() << " training and " << check.test.count()
              << " test images\n";
}

std::string model_id(const std::string& path) {
    return fs::path(path).stem().string();
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"CNN digit recognition with distinctiveness pruning of the hidden layer"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value file mirroring the flags, e.g. train.fc=400; "
                   "command-line values win");
    app.allow_config_extras(CLI::config_extras_mode::ignore);

    // train
    auto* train_cmd = app.add_subcommand("train", "train one model and optionally save it");
    auto train_cfg = std::make_shared<RunConfig>();
    auto train_out = std::make_shared<std::string>();
    auto train_csv = std::make_shared<std::string>();
    auto train_timing = std::make_shared<bool>(false);
    add_train_options(train_cmd, *train_cfg);
    train_cmd->add_option("--out", *train_out, "write the trained model here");
    train_cmd->add_option("--csv", *train_csv, "append one run row to this CSV file");
    train_cmd->add_flag("--timing", *train_timing, "record wall-clock seconds in the CSV");
    train_cmd->callback([=] {
        const PreparedData data = load_and_prepare(*train_cfg);
        const TrainResult result = train(*train_cfg, data);
        for (std::size_t e = 0; e < result.record.epoch_accuracies.size(); ++e)
            std::cout << "epoch " << e + 1 << ": test accuracy "
                      << result.record.epoch_accuracies[e] << '\n';
        std::cout << "final accuracy " << result.record.final_accuracy << " ("
                  << result.record.seconds << " s)\n";
        if (!train_out->empty()) save_network(result.net, *train_out);
        if (!train_csv->empty())
            append_csv(*train_csv, runs_csv_header(train_cfg->epochs),
                       {runs_csv_row(result.record, *train_timing)});
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved model on the test split");
    auto eval_cfg = std::make_shared<RunConfig>();
    auto eval_model = std::make_shared<std::string>();
    eval_cmd->add_option("--model", *eval_model, "model file")->required();
    add_data_options(eval_cmd, *eval_cfg);
    eval_cmd->callback([=] {
        const PreparedData data = load_and_prepare(*eval_cfg);
        const Network net = load_network(*eval_model);
        std::cout << evaluate(net, data.test) << '\n';
    });

    // prune
    auto* prune_cmd = app.add_subcommand("prune", "prune a saved model by distinctiveness");
    auto prune_cfg = std::make_shared<RunConfig>();
    auto prune_opts = std::make_shared<PruneConfig>();
    auto prune_model = std::make_shared<std::string>();
    auto prune_report = std::make_shared<std::string>();
    auto prune_json = std::make_shared<std::string>();
    auto prune_out = std::make_shared<std::string>();
    prune_cmd->add_option("--model", *prune_model, "model file")->required();
    prune_cmd->add_option("--angle", prune_opts->angle_threshold_deg,
                          "angle threshold in degrees, (0,90)")
        ->required();
    prune_cmd->add_option("--pattern-limit", prune_opts->pattern_limit,
                          "training patterns used for activation vectors")
        ->capture_default_str();
    prune_cmd->add_option("--norm-epsilon", prune_opts->norm_epsilon,
                          "below this activation norm a neuron is left unpaired")
        ->capture_default_str();
    prune_cmd->add_option("--report", *prune_report, "append one prune row to this CSV file");
    prune_cmd->add_option("--json", *prune_json, "write pair/angle detail to this JSON file");
    prune_cmd->add_option("--out", *prune_out, "write the pruned model here");
    add_data_options(prune_cmd, *prune_cfg);
    prune_cmd->callback([=] {
        const PreparedData data = load_and_prepare(*prune_cfg);
        const Network net = load_network(*prune_model);
        const PruneOutcome outcome = prune_and_evaluate(net, data.train, data.test, *prune_opts);
        const PruneReport& r = outcome.report;
        std::cout << "hidden " << r.pre_size << " -> " << r.post_size << ", accuracy "
                  << r.pre_accuracy << " -> " << r.post_accuracy << " ("
                  << r.plan.complementary_removals.size() << " complementary pairs, "
                  << r.plan.similar_merges.size() << " merges)\n";
        if (!prune_report->empty())
            append_csv(*prune_report, prune_csv_header(),
                       {prune_csv_row(model_id(*prune_model), r)});
        if (!prune_json->empty()) write_prune_detail(*prune_json, r);
        if (!prune_out->empty()) save_network(outcome.net, *prune_out);
    });

    // sweep-fc
    auto* sfc_cmd = app.add_subcommand("sweep-fc", "accuracy vs fully connected layer size");
    auto sfc_cfg = std::make_shared<RunConfig>();
    auto sfc_sizes =
        std::make_shared<std::vector<std::size_t>>(std::vector<std::size_t>{20, 40, 80, 120, 160, 200, 400, 600});
    auto sfc_repeats = std::make_shared<std::size_t>(3);
    auto sfc_out = std::make_shared<std::string>("sweep_fc.csv");
    auto sfc_timing = std::make_shared<bool>(false);
    auto sfc_jobs = std::make_shared<std::size_t>(1);
    sfc_cmd->add_option("--sizes", *sfc_sizes, "hidden sizes to sweep")
        ->delimiter(',')
        ->capture_default_str();
    sfc_cmd->add_option("--repeats", *sfc_repeats, "independent runs per size")
        ->capture_default_str();
    sfc_cmd->add_option("--out", *sfc_out, "output CSV file")->capture_default_str();
    sfc_cmd->add_flag("--timing", *sfc_timing, "record wall-clock seconds in the CSV");
    sfc_cmd->add_option("--jobs", *sfc_jobs, "worker threads (1 = fully deterministic)")
        ->capture_default_str();
    add_train_options(sfc_cmd, *sfc_cfg, false);
    sfc_cmd->callback([=] {
        const PreparedData data = load_and_prepare(*sfc_cfg);
        std::ofstream os(*sfc_out, std::ios::trunc);
        if (!os) throw IoError("cannot open " + *sfc_out + " for writing");
        sweep_fc_sizes(*sfc_sizes, *sfc_repeats, *sfc_cfg, data, os, *sfc_timing, *sfc_jobs);
        if (!os) throw IoError("write failed for " + *sfc_out);
        std::cout << "wrote " << *sfc_out << '\n';
    });

    // sweep-angle
    auto* sa_cmd = app.add_subcommand("sweep-angle", "pruning outcome vs angle threshold");
    auto sa_cfg = std::make_shared<RunConfig>();
    auto sa_angles = std::make_shared<std::vector<double>>(default_angles());
    auto sa_models = std::make_shared<std::vector<std::string>>();
    auto sa_repeats = std::make_shared<std::size_t>(10);
    auto sa_out = std::make_shared<std::string>("sweep_angle.csv");
    auto sa_jobs = std::make_shared<std::size_t>(1);
    auto sa_prune = std::make_shared<PruneConfig>();
    sa_cmd->add_option("--angles", *sa_angles, "angle thresholds in degrees")
        ->delimiter(',')
        ->capture_default_str();
    sa_cmd->add_option("--models", *sa_models,
                       "saved model files to prune (default: train fresh ones)")
        ->delimiter(',');
    sa_cmd->add_option("--repeats", *sa_repeats, "models to train when none are given")
        ->capture_default_str();
    sa_cmd->add_option("--pattern-limit", sa_prune->pattern_limit,
                       "training patterns used for activation vectors")
        ->capture_default_str();
    sa_cmd->add_option("--out", *sa_out, "output CSV file")->capture_default_str();
    sa_cmd->add_option("--jobs", *sa_jobs, "worker threads (1 = fully deterministic)")
        ->capture_default_str();
    add_train_options(sa_cmd, *sa_cfg);
    sa_cmd->callback([=] {
        const PreparedData data = load_and_prepare(*sa_cfg);
        std::vector<AngleSweepModel> models;
        if (!sa_models->empty()) {
            for (const auto& path : *sa_models) models.push_back({model_id(path), load_network(path)});
        } else {
            for (std::size_t m = 0; m < *sa_repeats; ++m) {
                RunConfig cfg = *sa_cfg;
                cfg.seed = sa_cfg->seed + m;
                TrainResult result = train(cfg, data);
                std::cout << result.record.run_id << ": final accuracy "
                          << result.record.final_accuracy << '\n';
                models.push_back({result.record.run_id, std::move(result.net)});
            }
        }
        std::ofstream os(*sa_out, std::ios::trunc);
        if (!os) throw IoError("cannot open " + *sa_out + " for writing");
        sweep_prune_angles(*sa_angles, models, data, *sa_prune, os, *sa_jobs);
        if (!os) throw IoError("write failed for " + *sa_out);
        std::cout << "wrote " << *sa_out << '\n';
    });

    // fetch-data
    auto* fetch_cmd = app.add_subcommand("fetch-data", "download the MNIST archives");
    auto fetch_dir = std::make_shared<std::string>();
    auto fetch_url =
        std::make_shared<std::string>("http://ossci-datasets.s3.amazonaws.com/mnist/");
    fetch_cmd->add_option("--data-dir", *fetch_dir, "target directory")
        ->envname("DPRUNE_DATA_DIR")
        ->required();
    fetch_cmd->add_option("--base-url", *fetch_url, "http mirror to download from")
        ->capture_default_str();
    fetch_cmd->callback([=] { fetch_data(*fetch_url, *fetch_dir); });

    // synth-data
    auto* synth_cmd =
        app.add_subcommand("synth-data", "generate a synthetic digit dataset in IDX format");
    auto synth_dir = std::make_shared<std::string>();
    auto synth_train = std::make_shared<std::size_t>(8000);
    auto synth_test = std::make_shared<std::size_t>(2000);
    auto synth_seed = std::make_shared<std::uint64_t>(12345);
    synth_cmd->add_option("--data-dir", *synth_dir, "target directory")
        ->envname("DPRUNE_DATA_DIR")
        ->required();
    synth_cmd->add_option("--train-count", *synth_train, "training images")->capture_default_str();
    synth_cmd->add_option("--test-count", *synth_test, "test images")->capture_default_str();
    synth_cmd->add_option("--seed", *synth_seed, "generator seed")->capture_default_str();
    synth_cmd->callback([=] {
        write_synthetic_mnist(*synth_dir, *synth_train, *synth_test, *synth_seed);
        std::cout << "wrote " << *synth_train << " training and " << *synth_test
                  << " test images under " << *synth_dir << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace dprune
