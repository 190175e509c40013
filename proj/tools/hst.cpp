// hst: generate synthetic data, train, evaluate, run ablation grids and
// inspect checkpoints. Exit codes: 0 success, 1 runtime or I/O failure,
// 2 usage error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hst/experiment.hpp"
#include "hst/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace hst;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

// Flat key=value config file; keys are option names without the leading dashes
// (underscores and dashes are interchangeable). Values only fill options not
// given on the command line.
void apply_config_file(CLI::App* app, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(in);
    } catch (const CLI::ParseError& e) {
        throw UsageError("config file " + path + ": " + e.what());
    }
    for (const CLI::ConfigItem& item : items) {
        if (item.name == "++" || item.name == "--") continue;
        std::string key = item.name;
        std::replace(key.begin(), key.end(), '_', '-');
        CLI::Option* opt = app->get_option_no_throw("--" + key);
        if (opt == nullptr || key == "config") throw UsageError("config file " + path + ": unknown key '" + item.name + "'");
        if (opt->count() > 0) continue;
        for (const std::string& v : item.inputs) opt->add_result(v);
        try {
            opt->run_callback();
        } catch (const CLI::ParseError& e) {
            throw UsageError("config file " + path + ": " + item.name + ": " + e.what());
        }
    }
}

// Every option that ended up set, as explicit arguments. Path options are made
// absolute so the list can be replayed from any directory.
std::vector<std::string> resolved_arguments(CLI::App* app, const std::vector<std::string>& path_options) {
    std::vector<std::string> out = {app->get_name()};
    for (const CLI::Option* opt : app->get_options()) {
        if (opt->get_lnames().empty() || opt->count() == 0) continue;
        const std::string name = opt->get_lnames().front();
        if (name == "config" || name == "help") continue;
        const bool is_path = std::find(path_options.begin(), path_options.end(), name) != path_options.end();
        for (const std::string& r : opt->results()) {
            out.push_back("--" + name + "=" + (is_path ? absolute(r) : r));
        }
    }
    return out;
}

struct Manifest {
    std::string command;
    std::vector<std::string> arguments;
    json config;
    std::uint64_t seed = 0;
    json inputs = json::object();
    json artifacts = json::object();
    std::string output_option;
};

void write_manifest(const fs::path& dir, const Manifest& m, double seconds) {
    json j;
    j["tool"] = "hst";
    j["version"] = kVersion;
    j["command"] = m.command;
    j["arguments"] = m.arguments;
    j["output_option"] = m.output_option;
    j["config"] = m.config;
    j["seed"] = m.seed;
    j["inputs"] = m.inputs;
    j["artifacts"] = m.artifacts;
    j["duration_seconds"] = seconds;
    write_text(dir / "manifest.json", j.dump(2) + "\n");
}

// ---- training options shared by train and ablate ----

struct TrainFlags {
    TrainConfig scratch;
    std::string preset = "default";
    std::string mode = "full";
    bool fixed_thresholds = false;
    bool freeze_features = false;
    std::vector<std::pair<CLI::Option*, std::function<void(TrainConfig&)>>> setters;
    CLI::Option* mode_opt = nullptr;
    CLI::Option* fixed_opt = nullptr;
    CLI::Option* freeze_opt = nullptr;

    template <class T>
    void bind(CLI::App* app, const std::string& name, T TrainConfig::*field, const std::string& help) {
        CLI::Option* o = app->add_option(name, scratch.*field, help)->capture_default_str();
        setters.emplace_back(o, [this, field](TrainConfig& c) { c.*field = scratch.*field; });
    }

    void bind_asym(CLI::App* app, const std::string& name, double AsymmetricLossConfig::*field, const std::string& help) {
        CLI::Option* o = app->add_option(name, scratch.asymmetric.*field, help)->capture_default_str();
        setters.emplace_back(o, [this, field](TrainConfig& c) { c.asymmetric.*field = scratch.asymmetric.*field; });
    }

    void add(CLI::App* app) {
        app->add_option("--preset", preset, "Base configuration: default or benchmark")
            ->check(CLI::IsMember({"default", "benchmark"}))
            ->capture_default_str();
        mode_opt = app->add_option("--mode", mode, "baseline, ist-only, cst-only or full")
                       ->check(CLI::IsMember({"baseline", "ist-only", "cst-only", "full"}))
                       ->capture_default_str();
        bind(app, "--epochs", &TrainConfig::epochs, "Training epochs");
        bind(app, "--warmup-epochs", &TrainConfig::warmup_epochs, "Epochs without pseudo labels");
        bind(app, "--batch-size", &TrainConfig::batch_size, "Samples per batch");
        bind(app, "--learning-rate", &TrainConfig::learning_rate, "Adam learning rate");
        bind(app, "--lr-decay", &TrainConfig::lr_decay, "Learning-rate multiplier per step");
        bind(app, "--lr-step-epochs", &TrainConfig::lr_step_epochs, "Epochs between learning-rate steps");
        bind(app, "--weight-decay", &TrainConfig::weight_decay, "L2 weight decay");
        bind(app, "--threshold-learning-rate", &TrainConfig::threshold_learning_rate, "Adam rate for the thresholds");
        bind(app, "--lambda-ist", &TrainConfig::lambda_ist, "Weight of the co-occurrence loss");
        bind(app, "--lambda-cst", &TrainConfig::lambda_cst, "Weight of the ranking loss");
        bind(app, "--lambda-dtl", &TrainConfig::lambda_dtl, "Weight of the threshold losses");
        bind(app, "--prototypes", &TrainConfig::prototypes, "Prototypes per category (K)");
        bind(app, "--seed", &TrainConfig::seed, "Seed for label dropping and training");
        bind(app, "--beta", &TrainConfig::beta, "Threshold-loss steepness");
        bind(app, "--hidden-dim", &TrainConfig::hidden_dim, "Category feature width D'");
        bind(app, "--ist-hidden1", &TrainConfig::ist_hidden1, "Pair network first hidden width");
        bind(app, "--ist-hidden2", &TrainConfig::ist_hidden2, "Pair network second hidden width");
        bind(app, "--theta-intra", &TrainConfig::theta_intra, "Initial (or fixed) intra threshold");
        bind(app, "--theta-cross", &TrainConfig::theta_cross, "Initial (or fixed) cross threshold");
        bind_asym(app, "--gamma-positive", &AsymmetricLossConfig::gamma_positive, "Focusing exponent, positive pairs");
        bind_asym(app, "--gamma-negative", &AsymmetricLossConfig::gamma_negative, "Focusing exponent, negative pairs");
        bind_asym(app, "--margin", &AsymmetricLossConfig::margin, "Probability margin for negative pairs");
        fixed_opt = app->add_flag("--fixed-thresholds", fixed_thresholds, "Keep thresholds at their initial values");
        freeze_opt = app->add_flag("--freeze-features", freeze_features,
                                   "Stop co-occurrence and ranking losses from updating the features");
    }

    TrainConfig resolve() const {
        TrainConfig c = preset == "benchmark" ? benchmark_train_config() : TrainConfig{};
        for (const auto& [opt, set] : setters)
            if (opt->count() > 0) set(c);
        if (mode_opt->count() > 0) c.mode = parse_mode(mode);
        if (fixed_opt->count() > 0) c.learn_thresholds = !fixed_thresholds;
        if (freeze_opt->count() > 0) c.freeze_features = freeze_features;
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return c;
    }
};

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("cannot parse '" + item + "' as a number");
        }
    }
    if (out.empty()) throw UsageError("empty list");
    return out;
}

void check_proportion(double kp) {
    if (!(kp > 0.0 && kp <= 1.0)) throw UsageError("known proportion must lie in (0, 1]");
}

// ---- generate ----

struct GenerateCmd {
    PlantedOptions options = benchmark_data_options();
    std::string out;
    std::string config;
    CLI::App* app = nullptr;

    void add(CLI::App& root) {
        app = root.add_subcommand("generate", "Write a synthetic dataset with planted co-occurrence structure");
        app->add_option("--config", config, "Key=value file with option defaults");
        app->add_option("--categories", options.categories, "Number of categories C")->capture_default_str();
        app->add_option("--samples", options.samples, "Number of samples N")->capture_default_str();
        app->add_option("--regions", options.regions, "Regions per sample R")->capture_default_str();
        app->add_option("--feature-dim", options.feature_dim, "Region feature width D")->capture_default_str();
        app->add_option("--group-size", options.group_size, "Categories per co-occurring block")->capture_default_str();
        app->add_option("--affinity", options.affinity, "Log-odds bonus inside a block")->capture_default_str();
        app->add_option("--base-logit", options.base_logit, "Log-odds of each category on its own")->capture_default_str();
        app->add_option("--center-norm", options.center_norm, "Norm of each category center")->capture_default_str();
        app->add_option("--noise-sigma", options.noise_sigma, "Region noise standard deviation")->capture_default_str();
        app->add_flag("--orthogonal-centers", options.orthogonal_centers, "Make category centers mutually orthogonal");
        app->add_option("--seed", options.seed, "Generator seed")->capture_default_str();
        app->add_option("--out", out, "Output dataset file")->required();
    }

    int run() {
        if (!config.empty()) apply_config_file(app, config);
        if (options.categories == 0 || options.samples == 0 || options.regions == 0 || options.feature_dim == 0) {
            throw UsageError("categories, samples, regions and feature-dim must be positive");
        }
        GeneratorConfig gc;
        try {
            gc = planted_config(options);
            gc.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        const auto start = std::chrono::steady_clock::now();
        const Dataset ds = generate(gc);
        const fs::path path(out);
        if (path.has_parent_path()) ensure_dir(path.parent_path());
        save_dataset(ds, path);

        Manifest m;
        m.command = "generate";
        m.arguments = resolved_arguments(app, {"out"});
        m.output_option = "out";
        m.config = gc.to_json();
        m.seed = options.seed;
        m.artifacts["dataset"] = path.filename().string();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_manifest(path.has_parent_path() ? path.parent_path() : fs::path("."), m, secs);
        std::printf("wrote %s: C=%zu N=%zu R=%zu D=%zu\n", path.string().c_str(), ds.categories, ds.size(), ds.regions,
                    ds.feature_dim);
        return 0;
    }
};

// ---- train ----

struct TrainCmd {
    TrainFlags flags;
    std::string data;
    std::string out_dir = "run";
    std::string config;
    double known = 1.0;
    double test_fraction = 0.2;
    bool quiet = false;
    CLI::App* app = nullptr;

    void add(CLI::App& root) {
        app = root.add_subcommand("train", "Drop labels, train on the training split and evaluate on the held-out split");
        app->add_option("--config", config, "Key=value file with option defaults");
        app->add_option("--data", data, "Dataset file")->required();
        app->add_option("--out-dir", out_dir, "Directory for checkpoint, log and report")->capture_default_str();
        app->add_option("--known,--known-proportion", known, "Fraction of labels kept per training sample")->capture_default_str();
        app->add_option("--test-fraction", test_fraction, "Fraction of samples held out for evaluation")
            ->capture_default_str();
        app->add_flag("--quiet", quiet, "Do not print per-epoch progress");
        flags.add(app);
    }

    int run() {
        if (!config.empty()) apply_config_file(app, config);
        const TrainConfig cfg = flags.resolve();
        check_proportion(known);
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("test fraction must lie in (0, 1)");

        const auto start = std::chrono::steady_clock::now();
        const Dataset full = load_dataset(data);
        auto [train_full, test] = split_dataset(full, test_fraction);
        if (train_full.size() == 0 || test.size() == 0) throw std::runtime_error("split leaves an empty part");
        const Dataset train_set = drop_labels(train_full, known, cfg.seed);
        const std::vector<LabelVector> truth = labels_of(train_full);

        TrainState state = init_state(train_set.categories, train_set.feature_dim, cfg);
        state.metadata["data"] = absolute(data);
        state.metadata["known"] = known;
        state.metadata["test_fraction"] = test_fraction;
        const TrainingInputs inputs{truth, &test};
        while (state.epoch < cfg.epochs) {
            run_epoch(state, train_set, inputs);
            const EpochRecord& r = state.history.back();
            if (!quiet) {
                std::printf("epoch %zu/%zu lr=%.3g loss=%.5f theta=(%.4f, %.4f) pseudo=(%zu, %zu) test_map=%.4f\n",
                            r.epoch, cfg.epochs, r.learning_rate, r.losses.total, r.theta_intra, r.theta_cross,
                            r.intra.emitted, r.cross.emitted, r.test_map.value_or(0.0) * 100.0);
                std::fflush(stdout);
            }
        }

        const fs::path dir(out_dir);
        ensure_dir(dir);
        save_checkpoint(state, dir / "checkpoint.json");
        write_text(dir / "train_log.csv", history_csv(state.history));
        const EvalReport report = evaluate(predict(state, test), labels_of(test));
        write_text(dir / "eval.csv", report_csv(report));
        write_text(dir / "eval.md", report_markdown(report));

        Manifest m;
        m.command = "train";
        m.arguments = resolved_arguments(app, {"data", "out-dir", "config"});
        m.output_option = "out-dir";
        m.config = cfg.to_json();
        m.config["known"] = known;
        m.config["test_fraction"] = test_fraction;
        m.seed = cfg.seed;
        m.inputs["data"] = absolute(data);
        m.artifacts = {{"checkpoint", "checkpoint.json"},
                       {"log", "train_log.csv"},
                       {"report_csv", "eval.csv"},
                       {"report_markdown", "eval.md"}};
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_manifest(dir, m, secs);
        std::printf("test mAP %.2f  OF1 %.2f  CF1 %.2f  -> %s\n", report.mean_average_precision * 100.0,
                    report.overall_f1 * 100.0, report.per_class_f1 * 100.0, dir.string().c_str());
        return 0;
    }
};

// ---- evaluate ----

struct EvaluateCmd {
    std::string checkpoint;
    std::string data;
    std::string split = "auto";
    std::string out_dir = "eval";
    CLI::App* app = nullptr;

    void add(CLI::App& root) {
        app = root.add_subcommand("evaluate", "Score a checkpoint on a dataset (mAP, OF1, CF1)");
        app->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
        app->add_option("--data", data, "Dataset file")->required();
        app->add_option("--split", split,
                        "Which samples to score: test, train, all, or auto (the held-out split recorded in the "
                        "checkpoint, else all)")
            ->check(CLI::IsMember({"auto", "test", "train", "all"}))
            ->capture_default_str();
        app->add_option("--out-dir", out_dir, "Directory for the report")->capture_default_str();
    }

    int run() {
        const auto start = std::chrono::steady_clock::now();
        const TrainState state = load_checkpoint(checkpoint);
        const Dataset full = load_dataset(data);
        if (full.categories != state.categories || full.feature_dim != state.feature_dim) {
            throw std::runtime_error("dataset has C=" + std::to_string(full.categories) + " D=" +
                                     std::to_string(full.feature_dim) + " but the checkpoint expects C=" +
                                     std::to_string(state.categories) + " D=" + std::to_string(state.feature_dim));
        }
        std::string which = split;
        const bool recorded = state.metadata.contains("test_fraction");
        if (which == "auto") which = recorded ? "test" : "all";
        Dataset scored;
        if (which == "all") {
            scored = full;
        } else {
            if (!recorded) throw UsageError("checkpoint records no split; use --split all");
            auto parts = split_dataset(full, state.metadata["test_fraction"].get<double>());
            scored = which == "test" ? std::move(parts.second) : std::move(parts.first);
        }
        const EvalReport report = evaluate(predict(state, scored), labels_of(scored));
        const fs::path dir(out_dir);
        ensure_dir(dir);
        write_text(dir / "eval.csv", report_csv(report));
        write_text(dir / "eval.md", report_markdown(report));

        Manifest m;
        m.command = "evaluate";
        m.arguments = resolved_arguments(app, {"checkpoint", "data", "out-dir"});
        m.output_option = "out-dir";
        m.config = {{"split", which}};
        m.seed = state.config.seed;
        m.inputs = {{"checkpoint", absolute(checkpoint)}, {"data", absolute(data)}};
        m.artifacts = {{"report_csv", "eval.csv"}, {"report_markdown", "eval.md"}};
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_manifest(dir, m, secs);
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", report.mean_average_precision);
        std::printf("%s split, %zu samples: mAP %s  OF1 %.4f  CF1 %.4f\n", which.c_str(), scored.size(), buf,
                    report.overall_f1, report.per_class_f1);
        return 0;
    }
};

// ---- ablate ----

struct AblateCmd {
    TrainFlags flags;
    std::string data;
    std::string grid = "modes";
    std::string known = "0.1,0.5,0.9";
    std::size_t seeds = 3;
    std::size_t first_seed = 1;
    double test_fraction = 0.2;
    std::string out_dir = "ablation";
    std::size_t workers = 0;
    std::string config;
    CLI::App* app = nullptr;

    void add(CLI::App& root) {
        app = root.add_subcommand("ablate", "Run an ablation grid and report median test mAP per cell");
        app->add_option("--config", config, "Key=value file with option defaults");
        app->add_option("--data", data, "Dataset file")->required();
        app->add_option("--grid", grid,
                        "modes (mode x known proportion), thresholds (fixed 0.1..0.9 and learned), or prototypes "
                        "(K in 1, 5, 10, 20)")
            ->check(CLI::IsMember({"modes", "thresholds", "prototypes"}))
            ->capture_default_str();
        app->add_option("--known", known, "Comma-separated known-label proportions")->capture_default_str();
        app->add_option("--seeds", seeds, "Seeds per cell")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--first-seed", first_seed, "First seed; cells use consecutive seeds")->capture_default_str();
        app->add_option("--test-fraction", test_fraction, "Held-out fraction")->capture_default_str();
        app->add_option("--out-dir", out_dir, "Directory for the report")->capture_default_str();
        app->add_option("--workers", workers, "Worker threads (0: one per hardware thread)")->capture_default_str();
        flags.add(app);
    }

    int run() {
        if (!config.empty()) apply_config_file(app, config);
        const TrainConfig base = flags.resolve();
        const std::vector<double> proportions = parse_list(known);
        for (double kp : proportions) check_proportion(kp);
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("test fraction must lie in (0, 1)");
        std::vector<std::uint64_t> seed_list;
        for (std::size_t i = 0; i < seeds; ++i) seed_list.push_back(first_seed + i);

        const auto start = std::chrono::steady_clock::now();
        const Dataset full = load_dataset(data);
        const AblationReport report =
            run_ablation(full, parse_grid(grid), proportions, seed_list, base, test_fraction,
                         [](const std::string& row, double kp, std::uint64_t seed, const std::optional<double>& map,
                            const std::string& error) {
                             if (map) std::printf("%-10s known=%.2f seed=%llu mAP=%.4f\n", row.c_str(), kp,
                                                  static_cast<unsigned long long>(seed), *map * 100.0);
                             else std::printf("%-10s known=%.2f seed=%llu FAILED: %s\n", row.c_str(), kp,
                                              static_cast<unsigned long long>(seed), error.c_str());
                             std::fflush(stdout);
                         },
                         workers);
        const fs::path dir(out_dir);
        ensure_dir(dir);
        const std::string md = ablation_markdown(report);
        write_text(dir / "ablation.md", md);
        write_text(dir / "ablation.csv", ablation_csv(report));

        Manifest m;
        m.command = "ablate";
        m.arguments = resolved_arguments(app, {"data", "out-dir"});
        m.output_option = "out-dir";
        m.config = base.to_json();
        m.config["grid"] = grid;
        m.config["known"] = proportions;
        m.config["seeds"] = seed_list;
        m.config["test_fraction"] = test_fraction;
        m.seed = first_seed;
        m.inputs["data"] = absolute(data);
        m.artifacts = {{"report_markdown", "ablation.md"}, {"report_csv", "ablation.csv"}};
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_manifest(dir, m, secs);
        std::printf("\n%s", md.c_str());
        return 0;
    }
};

// ---- inspect ----

struct InspectCmd {
    std::string checkpoint;
    std::string data;
    std::string sample;
    std::string out_dir = "inspect";
    CLI::App* app = nullptr;

    void add(CLI::App& root) {
        app = root.add_subcommand("inspect", "Dump the prototype bank and one sample's co-occurrence matrix");
        app->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
        app->add_option("--data", data, "Dataset file (needed for --sample)");
        app->add_option("--sample", sample, "Sample id or zero-based index");
        app->add_option("--out-dir", out_dir, "Directory for the dumps")->capture_default_str();
    }

    int run() {
        const auto start = std::chrono::steady_clock::now();
        const TrainState state = load_checkpoint(checkpoint);
        const fs::path dir(out_dir);
        ensure_dir(dir);
        Manifest m;
        m.command = "inspect";
        m.output_option = "out-dir";
        m.seed = state.config.seed;
        m.inputs["checkpoint"] = absolute(checkpoint);
        std::printf("checkpoint: C=%zu D=%zu mode=%s epoch=%zu theta_intra=%.6g theta_cross=%.6g\n", state.categories,
                    state.feature_dim, to_string(state.config.mode).c_str(), state.epoch,
                    state.thresholds.theta_intra, state.thresholds.theta_cross);
        if (state.bank) {
            save_prototypes(*state.bank, dir / "prototypes.jsonl");
            m.artifacts["prototypes"] = "prototypes.jsonl";
            std::printf("prototypes: K=%zu D'=%zu -> %s\n", state.bank->prototypes_per_category(), state.bank->dim(),
                        (dir / "prototypes.jsonl").string().c_str());
            for (std::size_t c = 0; c < state.bank->categories(); ++c) {
                std::printf("  category %zu%s members:", c, state.bank->empty[c] ? " (empty)" : "");
                for (std::size_t n : state.bank->counts[c]) std::printf(" %zu", n);
                std::printf("\n");
            }
        } else {
            std::printf("prototypes: none (mode without cross-image transfer, or still in warmup)\n");
        }
        if (!sample.empty()) {
            if (data.empty()) throw UsageError("--sample needs --data");
            const Dataset ds = load_dataset(data);
            if (ds.categories != state.categories || ds.feature_dim != state.feature_dim) {
                throw std::runtime_error("dataset shape does not match the checkpoint");
            }
            const Sample* s = nullptr;
            for (const Sample& cand : ds.samples)
                if (cand.id == sample) s = &cand;
            if (s == nullptr) {
                std::size_t idx = 0;
                try {
                    std::size_t used = 0;
                    idx = std::stoul(sample, &used);
                    if (used != sample.size()) throw std::invalid_argument(sample);
                } catch (const std::exception&) {
                    throw UsageError("no sample with id '" + sample + "'");
                }
                if (idx >= ds.size()) throw UsageError("sample index out of range");
                s = &ds.samples[idx];
            }
            const CategoryFeatures f = extract_category_features(*s, state.sarl);
            const std::vector<double> probs = classify(f, state.sarl);
            std::ostringstream csv;
            csv.precision(17);
            if (state.ist) {
                const CooccurrenceMatrix cooc = predict_cooccurrence(f, *state.ist);
                csv << "row";
                for (std::size_t j = 0; j < state.categories; ++j) csv << ",c" << j;
                csv << '\n';
                for (std::size_t i = 0; i < state.categories; ++i) {
                    csv << 'c' << i;
                    for (std::size_t j = 0; j < state.categories; ++j) csv << ',' << cooc.at(i, j);
                    csv << '\n';
                }
                write_text(dir / "cooccurrence.csv", csv.str());
                m.artifacts["cooccurrence"] = "cooccurrence.csv";
            }
            std::printf("sample %s\n  c  label  prob", s->id.c_str());
            if (state.bank) std::printf("  mean_sim");
            std::printf("\n");
            std::optional<SimilarityRecord> sim;
            if (state.bank) sim = prototype_similarity(f, *state.bank);
            for (std::size_t c = 0; c < state.categories; ++c) {
                std::printf("  %-2zu %+d    %.4f", c, s->labels[c], probs[c]);
                if (sim) std::printf("  %.4f", sim->present[c] ? sim->mean[c] : 0.0);
                std::printf("\n");
            }
            if (state.ist) std::printf("co-occurrence matrix -> %s\n", (dir / "cooccurrence.csv").string().c_str());
            m.inputs["data"] = absolute(data);
        }
        m.arguments = resolved_arguments(app, {"checkpoint", "data", "out-dir"});
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_manifest(dir, m, secs);
        return 0;
    }
};

int dispatch(const std::vector<std::string>& args);

// ---- rerun ----

struct RerunCmd {
    std::string manifest;
    std::string out;
    CLI::App* app = nullptr;

    void add(CLI::App& root) {
        app = root.add_subcommand("rerun", "Repeat the command recorded in a manifest");
        app->add_option("--manifest", manifest, "manifest.json from an earlier run")->required();
        app->add_option("--out", out,
                        "Redirect the output (directory, or dataset file for generate) instead of overwriting");
    }

    int run() {
        const json m = read_json(manifest);
        if (!m.contains("arguments") || !m.contains("output_option")) throw UsageError(manifest + " is not a manifest");
        std::vector<std::string> args = m.at("arguments").get<std::vector<std::string>>();
        if (args.empty() || args.front() == "rerun") throw UsageError(manifest + " has no command to repeat");
        if (!out.empty()) {
            const std::string prefix = "--" + m.at("output_option").get<std::string>() + "=";
            bool replaced = false;
            for (std::string& a : args)
                if (a.rfind(prefix, 0) == 0) {
                    a = prefix + absolute(out);
                    replaced = true;
                }
            if (!replaced) args.push_back(prefix + absolute(out));
        }
        return dispatch(args);
    }
};

int dispatch(const std::vector<std::string>& args) {
    CLI::App root{"hst: multi-label learning with partial labels on synthetic data"};
    root.set_version_flag("--version", std::string("hst ") + kVersion);
    root.require_subcommand(1);
    GenerateCmd gen;
    TrainCmd train;
    EvaluateCmd eval;
    AblateCmd ablate;
    InspectCmd inspect;
    RerunCmd rerun;
    gen.add(root);
    train.add(root);
    eval.add(root);
    ablate.add(root);
    inspect.add(root);
    rerun.add(root);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        root.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return root.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return root.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return root.exit(e);
    } catch (const CLI::ParseError& e) {
        root.exit(e);
        return 2;
    }

    try {
        if (gen.app->parsed()) return gen.run();
        if (train.app->parsed()) return train.run();
        if (eval.app->parsed()) return eval.run();
        if (ablate.app->parsed()) return ablate.run();
        if (inspect.app->parsed()) return inspect.run();
        if (rerun.app->parsed()) return rerun.run();
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args);
}
