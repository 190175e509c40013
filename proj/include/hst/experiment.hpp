#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hst/dataset.hpp"
#include "hst/metrics.hpp"
#include "hst/trainer.hpp"

namespace hst {

// The standard synthetic benchmark: C=20, N=2000, R=8, D=32.
PlantedOptions benchmark_data_options(std::uint64_t seed = 7);
// Training preset used for benchmark runs (narrow pair network).
TrainConfig benchmark_train_config();

struct RunResult {
    EvalReport report;
    std::vector<EpochRecord> history;
};

// Split, drop labels on the training part, train and evaluate on the held-out part.
// `seed` drives label dropping and training.
RunResult run_experiment(const Dataset& full, double known_proportion, double test_fraction, TrainConfig config,
                         std::uint64_t seed);

enum class Grid { modes, thresholds, prototypes };

std::string to_string(Grid grid);
Grid parse_grid(const std::string& text);

struct AblationRow {
    std::string label;
    TrainConfig config;
};

std::vector<AblationRow> ablation_rows(Grid grid, const TrainConfig& base);

struct AblationCell {
    std::vector<std::optional<double>> maps;  // per seed, empty on failure
    std::vector<std::string> errors;
    std::optional<double> median() const;
};

struct AblationReport {
    Grid grid = Grid::modes;
    std::vector<std::string> rows;
    std::vector<double> known;
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<AblationCell>> cells;  // [row][known]
};

// Cells run on `workers` threads (0: hardware concurrency); results do not depend on it. Progress
// callbacks are serialized but arrive in completion order.
using AblationProgress = std::function<void(const std::string& row, double known, std::uint64_t seed,
                                            const std::optional<double>& map, const std::string& error)>;

AblationReport run_ablation(const Dataset& full, Grid grid, const std::vector<double>& known,
                            const std::vector<std::uint64_t>& seeds, const TrainConfig& base, double test_fraction,
                            const AblationProgress& progress = {}, std::size_t workers = 0);

std::string ablation_markdown(const AblationReport& report);
std::string ablation_csv(const AblationReport& report);

double median(std::vector<double> values);

}  // namespace hst
