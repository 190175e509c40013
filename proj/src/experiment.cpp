#include "hst/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

namespace hst {

namespace {

std::string fmt(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

PlantedOptions benchmark_data_options(std::uint64_t seed) {
    PlantedOptions o;
    o.categories = 20;
    o.samples = 2000;
    o.regions = 8;
    o.feature_dim = 32;
    o.affinity = 6.0;
    o.base_logit = -3.0;
    o.center_norm = 5.0;
    o.orthogonal_centers = true;
    o.seed = seed;
    return o;
}

TrainConfig benchmark_train_config() {
    TrainConfig c;
    c.learning_rate = 1e-2;
    c.hidden_dim = 32;
    c.ist_hidden1 = 32;
    c.ist_hidden2 = 32;
    return c;
}

RunResult run_experiment(const Dataset& full_set, double known_proportion, double test_fraction, TrainConfig config,
                         std::uint64_t seed) {
    auto [train_full, test] = split_dataset(full_set, test_fraction);
    const Dataset train_set = drop_labels(train_full, known_proportion, seed);
    const std::vector<LabelVector> truth = labels_of(train_full);
    config.seed = seed;
    TrainingInputs inputs{truth, nullptr};
    TrainState state = train(train_set, config, inputs);
    RunResult r;
    r.report = evaluate(predict(state, test), labels_of(test));
    r.history = std::move(state.history);
    return r;
}

std::string to_string(Grid grid) {
    switch (grid) {
        case Grid::modes: return "modes";
        case Grid::thresholds: return "thresholds";
        case Grid::prototypes: return "prototypes";
    }
    return "modes";
}

Grid parse_grid(const std::string& text) {
    if (text == "modes") return Grid::modes;
    if (text == "thresholds") return Grid::thresholds;
    if (text == "prototypes") return Grid::prototypes;
    throw std::invalid_argument("unknown grid '" + text + "' (expected modes, thresholds or prototypes)");
}

std::vector<AblationRow> ablation_rows(Grid grid, const TrainConfig& base) {
    std::vector<AblationRow> rows;
    switch (grid) {
        case Grid::modes:
            for (Mode m : {Mode::baseline, Mode::ist_only, Mode::cst_only, Mode::full}) {
                TrainConfig c = base;
                c.mode = m;
                rows.push_back({to_string(m), c});
            }
            break;
        case Grid::thresholds:
            for (int i = 1; i <= 9; ++i) {
                TrainConfig c = base;
                c.mode = Mode::full;
                c.learn_thresholds = false;
                c.theta_intra = c.theta_cross = i / 10.0;
                rows.push_back({"theta=" + fmt(i / 10.0, 1), c});
            }
            {
                TrainConfig c = base;
                c.mode = Mode::full;
                c.learn_thresholds = true;
                rows.push_back({"dtl", c});
            }
            break;
        case Grid::prototypes:
            for (std::size_t k : {1, 5, 10, 20}) {
                TrainConfig c = base;
                c.mode = Mode::full;
                c.prototypes = k;
                rows.push_back({"K=" + std::to_string(k), c});
            }
            break;
    }
    return rows;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::optional<double> AblationCell::median() const {
    std::vector<double> ok;
    for (const auto& m : maps)
        if (m) ok.push_back(*m);
    if (ok.empty()) return std::nullopt;
    return hst::median(ok);
}

AblationReport run_ablation(const Dataset& full_set, Grid grid, const std::vector<double>& known,
                            const std::vector<std::uint64_t>& seeds, const TrainConfig& base, double test_fraction,
                            const AblationProgress& progress, std::size_t workers) {
    if (known.empty()) throw std::invalid_argument("ablation needs at least one known proportion");
    if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
    const std::vector<AblationRow> rows = ablation_rows(grid, base);
    AblationReport report;
    report.grid = grid;
    report.known = known;
    report.seeds = seeds;
    for (const AblationRow& row : rows) {
        report.rows.push_back(row.label);
        report.cells.emplace_back(known.size());
        for (AblationCell& cell : report.cells.back()) {
            cell.maps.resize(seeds.size());
            cell.errors.resize(seeds.size());
        }
    }

    const std::size_t jobs = rows.size() * known.size() * seeds.size();
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;
    auto work = [&] {
        for (std::size_t j = next++; j < jobs; j = next++) {
            const std::size_t s = j % seeds.size();
            const std::size_t k = (j / seeds.size()) % known.size();
            const std::size_t r = j / (seeds.size() * known.size());
            AblationCell& cell = report.cells[r][k];
            try {
                cell.maps[s] = run_experiment(full_set, known[k], test_fraction, rows[r].config, seeds[s])
                                   .report.mean_average_precision;
            } catch (const std::exception& e) {
                cell.errors[s] = e.what();
            }
            if (progress) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                progress(rows[r].label, known[k], seeds[s], cell.maps[s], cell.errors[s]);
            }
        }
    };
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, jobs);
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work);
    work();
    for (std::thread& t : threads) t.join();
    return report;
}

std::string ablation_markdown(const AblationReport& report) {
    std::ostringstream out;
    out << "Median test mAP (%) over " << report.seeds.size() << " seed(s), grid: " << to_string(report.grid) << "\n\n";
    out << "| " << (report.grid == Grid::modes ? "mode" : "setting") << " |";
    for (double kp : report.known) out << ' ' << fmt(kp * 100.0, 0) << "% |";
    out << " avg |\n|---|";
    for (std::size_t i = 0; i <= report.known.size(); ++i) out << "---:|";
    out << '\n';
    bool failures = false;
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
        out << "| " << report.rows[r] << " |";
        double sum = 0.0;
        bool complete = true;
        for (const AblationCell& cell : report.cells[r]) {
            const auto m = cell.median();
            const bool partial = std::any_of(cell.errors.begin(), cell.errors.end(), [](const auto& e) { return !e.empty(); });
            failures = failures || partial;
            if (m) {
                out << ' ' << fmt(*m * 100.0, 2) << (partial ? "*" : "") << " |";
                sum += *m;
            } else {
                out << " failed |";
                complete = false;
            }
        }
        if (complete) out << ' ' << fmt(sum / static_cast<double>(report.known.size()) * 100.0, 2) << " |\n";
        else out << " - |\n";
    }
    if (failures) out << "\n* at least one seed failed in this cell; see the CSV for errors.\n";
    return out.str();
}

std::string ablation_csv(const AblationReport& report) {
    std::ostringstream out;
    out << "row,known,seed,map,error\n";
    for (std::size_t r = 0; r < report.rows.size(); ++r)
        for (std::size_t k = 0; k < report.known.size(); ++k) {
            const AblationCell& cell = report.cells[r][k];
            for (std::size_t s = 0; s < report.seeds.size(); ++s) {
                std::string err = cell.errors[s];
                std::replace(err.begin(), err.end(), '"', '\'');
                out << report.rows[r] << ',' << full(report.known[k]) << ',' << report.seeds[s] << ','
                    << (cell.maps[s] ? full(*cell.maps[s]) : std::string()) << ',';
                if (!err.empty()) out << '"' << err << '"';
                out << '\n';
            }
        }
    return out.str();
}

}  // namespace hst
