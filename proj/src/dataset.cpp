#include "hst/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "hst/random.hpp"

namespace hst {

namespace {

using json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

json tensor_rows(const Tensor& t) {
    json rows = json::array();
    for (std::size_t i = 0; i < t.dim(0); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < t.dim(1); ++j) row.push_back(t.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Tensor rows_tensor(const json& rows, std::size_t expected_rows, std::size_t expected_cols, const char* what) {
    if (!rows.is_array() || rows.size() != expected_rows) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(expected_rows) + " rows");
    }
    Tensor out({expected_rows, expected_cols});
    for (std::size_t i = 0; i < expected_rows; ++i) {
        const json& row = rows[i];
        if (!row.is_array() || row.size() != expected_cols) {
            throw std::invalid_argument(std::string(what) + ": row " + std::to_string(i) + " must have " +
                                        std::to_string(expected_cols) + " values");
        }
        for (std::size_t j = 0; j < expected_cols; ++j) {
            if (!row[j].is_number()) {
                throw std::invalid_argument(std::string(what) + ": non-numeric value in row " + std::to_string(i));
            }
            out.at(i, j) = row[j].get<double>();
        }
    }
    return out;
}

}  // namespace

void Dataset::validate() const {
    if (categories == 0 || feature_dim == 0 || regions == 0) {
        throw std::invalid_argument("dataset dimensions C, D and R must be positive");
    }
    for (const Sample& s : samples) {
        if (s.labels.size() != categories) {
            throw std::invalid_argument("sample " + s.id + " has " + std::to_string(s.labels.size()) +
                                        " labels, expected " + std::to_string(categories));
        }
        if (s.regions.shape() != Shape{regions, feature_dim}) {
            throw std::invalid_argument("sample " + s.id + " has regions " + shape_string(s.regions.shape()));
        }
        for (int y : s.labels) {
            if (y < -1 || y > 1) throw std::invalid_argument("sample " + s.id + " has label value " + std::to_string(y));
        }
    }
}

void GeneratorConfig::validate() const {
    if (categories == 0 || samples == 0 || regions == 0 || feature_dim == 0) {
        throw std::invalid_argument("generator counts C, N, R and D must be positive");
    }
    if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) {
        throw std::invalid_argument("noise_sigma must be positive");
    }
    if (pair_affinity.shape() != Shape{categories, categories}) {
        throw std::invalid_argument("pair_affinity must be C x C");
    }
    if (category_centers.shape() != Shape{categories, feature_dim}) {
        throw std::invalid_argument("category_centers must be C x D");
    }
    if (base_logits.size() != categories) throw std::invalid_argument("base_logits must have C entries");
    for (std::size_t i = 0; i < categories; ++i) {
        if (pair_affinity.at(i, i) != 0.0) throw std::invalid_argument("pair_affinity diagonal must be zero");
        for (std::size_t j = 0; j < i; ++j) {
            if (pair_affinity.at(i, j) != pair_affinity.at(j, i)) {
                throw std::invalid_argument("pair_affinity must be symmetric");
            }
        }
    }
}

json GeneratorConfig::to_json() const {
    json j;
    j["C"] = categories;
    j["N"] = samples;
    j["R"] = regions;
    j["D"] = feature_dim;
    j["noise_sigma"] = noise_sigma;
    j["seed"] = seed;
    j["base_logits"] = base_logits;
    j["pair_affinity"] = tensor_rows(pair_affinity);
    j["category_centers"] = tensor_rows(category_centers);
    return j;
}

GeneratorConfig GeneratorConfig::from_json(const json& j) {
    GeneratorConfig cfg;
    cfg.categories = j.at("C").get<std::size_t>();
    cfg.samples = j.at("N").get<std::size_t>();
    cfg.regions = j.at("R").get<std::size_t>();
    cfg.feature_dim = j.at("D").get<std::size_t>();
    cfg.noise_sigma = j.at("noise_sigma").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.base_logits = j.at("base_logits").get<std::vector<double>>();
    cfg.pair_affinity = rows_tensor(j.at("pair_affinity"), cfg.categories, cfg.categories, "pair_affinity");
    cfg.category_centers = rows_tensor(j.at("category_centers"), cfg.categories, cfg.feature_dim, "category_centers");
    cfg.validate();
    return cfg;
}

Dataset generate(const GeneratorConfig& config) {
    config.validate();
    const std::size_t C = config.categories, R = config.regions, D = config.feature_dim;

    Dataset ds;
    ds.categories = C;
    ds.feature_dim = D;
    ds.regions = R;
    ds.seed = config.seed;
    ds.provenance["generator"] = config.to_json();
    ds.samples.reserve(config.samples);

    const int width = static_cast<int>(std::to_string(config.samples - 1).size());
    for (std::size_t n = 0; n < config.samples; ++n) {
        Rng rng = make_rng(config.seed, n);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, config.noise_sigma);

        Sample s;
        std::ostringstream id;
        id << "s" << std::setw(width) << std::setfill('0') << n;
        s.id = id.str();
        s.labels.assign(C, -1);
        std::vector<std::size_t> positives;
        for (std::size_t c = 0; c < C; ++c) {
            double logit = config.base_logits[c];
            for (std::size_t j : positives) logit += config.pair_affinity.at(c, j);
            if (uniform(rng) < sigmoid(logit)) {
                s.labels[c] = 1;
                positives.push_back(c);
            }
        }

        std::vector<std::size_t> slots(R);
        std::iota(slots.begin(), slots.end(), 0);
        std::shuffle(slots.begin(), slots.end(), rng);

        Tensor means({R, D});
        std::vector<std::size_t> members(R, 0);
        for (std::size_t k = 0; k < positives.size(); ++k) {
            const std::size_t slot = slots[k % R];
            for (std::size_t d = 0; d < D; ++d) means.at(slot, d) += config.category_centers.at(positives[k], d);
            ++members[slot];
        }
        s.regions = Tensor({R, D});
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t d = 0; d < D; ++d) {
                const double center = members[r] > 0 ? means.at(r, d) / static_cast<double>(members[r]) : 0.0;
                s.regions.at(r, d) = center + noise(rng);
            }
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

Dataset drop_labels(const Dataset& dataset, double known_proportion, std::uint64_t seed) {
    if (!(known_proportion > 0.0 && known_proportion <= 1.0)) {
        throw std::invalid_argument("known proportion must lie in (0, 1]");
    }
    const std::size_t C = dataset.categories;
    const auto rounded = static_cast<std::size_t>(std::llround(known_proportion * static_cast<double>(C)));
    const std::size_t keep = std::clamp<std::size_t>(rounded, 1, C);

    Dataset out = dataset;
    out.provenance["drop"] = json{{"known_proportion", known_proportion}, {"seed", seed}, {"kept_per_sample", keep}};
    if (keep == C) return out;

    std::vector<std::size_t> order(C);
    for (std::size_t n = 0; n < out.samples.size(); ++n) {
        Rng rng = make_rng(seed, n);
        std::iota(order.begin(), order.end(), 0);
        // Partial Fisher-Yates: the first `keep` entries are a uniform subset.
        for (std::size_t i = 0; i < keep; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, C - 1);
            std::swap(order[i], order[pick(rng)]);
        }
        LabelVector& labels = out.samples[n].labels;
        for (std::size_t i = keep; i < C; ++i) labels[order[i]] = 0;
    }
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double test_fraction) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("test fraction must lie in [0, 1)");
    }
    const auto test_count =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(dataset.size())));
    const std::size_t train_count = dataset.size() - test_count;
    Dataset train = dataset;
    Dataset test = dataset;
    train.samples.assign(dataset.samples.begin(), dataset.samples.begin() + static_cast<std::ptrdiff_t>(train_count));
    test.samples.assign(dataset.samples.begin() + static_cast<std::ptrdiff_t>(train_count), dataset.samples.end());
    return {std::move(train), std::move(test)};
}

DatasetError::DatasetError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");

    json header;
    header["version"] = kFormatVersion;
    header["C"] = dataset.categories;
    header["D"] = dataset.feature_dim;
    header["R"] = dataset.regions;
    header["N"] = dataset.size();
    header["seed"] = dataset.seed;
    header["provenance"] = dataset.provenance;
    out << header.dump() << '\n';

    for (const Sample& s : dataset.samples) {
        json record;
        record["id"] = s.id;
        record["labels"] = s.labels;
        record["regions"] = tensor_rows(s.regions);
        out << record.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw DatasetError(1, "missing header");

    Dataset ds;
    std::size_t expected = 0;
    try {
        const json header = json::parse(line);
        if (header.at("version").get<int>() != kFormatVersion) {
            throw std::invalid_argument("unsupported version " + header.at("version").dump());
        }
        ds.categories = header.at("C").get<std::size_t>();
        ds.feature_dim = header.at("D").get<std::size_t>();
        ds.regions = header.at("R").get<std::size_t>();
        ds.seed = header.at("seed").get<std::uint64_t>();
        ds.provenance = header.at("provenance");
        expected = header.at("N").get<std::size_t>();
        if (ds.categories == 0 || ds.feature_dim == 0 || ds.regions == 0) {
            throw std::invalid_argument("C, D and R must be positive");
        }
    } catch (const std::exception& e) {
        throw DatasetError(line_no, std::string("bad header: ") + e.what());
    }

    ds.samples.reserve(expected);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) throw DatasetError(line_no, "empty record");
        try {
            const json record = json::parse(line);
            Sample s;
            s.id = record.at("id").get<std::string>();
            const json& labels = record.at("labels");
            if (!labels.is_array() || labels.size() != ds.categories) {
                throw std::invalid_argument("expected " + std::to_string(ds.categories) + " labels");
            }
            for (const json& y : labels) {
                if (!y.is_number_integer()) throw std::invalid_argument("label is not an integer");
                const int v = y.get<int>();
                if (v < -1 || v > 1) throw std::invalid_argument("label value " + std::to_string(v) + " outside {-1,0,1}");
                s.labels.push_back(v);
            }
            s.regions = rows_tensor(record.at("regions"), ds.regions, ds.feature_dim, "regions");
            ds.samples.push_back(std::move(s));
        } catch (const std::exception& e) {
            throw DatasetError(line_no, e.what());
        }
    }
    if (ds.samples.size() != expected) {
        throw DatasetError(line_no, "header declares " + std::to_string(expected) + " samples, found " +
                                        std::to_string(ds.samples.size()));
    }
    return ds;
}

GeneratorConfig planted_config(const PlantedOptions& options) {
    GeneratorConfig cfg;
    cfg.categories = options.categories;
    cfg.samples = options.samples;
    cfg.regions = options.regions;
    cfg.feature_dim = options.feature_dim;
    cfg.noise_sigma = options.noise_sigma;
    cfg.seed = options.seed;
    cfg.base_logits.assign(options.categories, options.base_logit);

    const std::size_t C = options.categories, D = options.feature_dim;
    const std::size_t group = std::max<std::size_t>(options.group_size, 1);
    cfg.pair_affinity = Tensor({C, C});
    for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t j = 0; j < C; ++j) {
            if (i != j && i / group == j / group) cfg.pair_affinity.at(i, j) = options.affinity;
        }
    }

    // Centers use a stream disjoint from the per-sample streams.
    Rng rng = make_rng(options.seed ^ 0xC3A5C85C97CB3127ULL, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    cfg.category_centers = Tensor({C, D});
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> u(D);
        for (double& x : u) x = normal(rng);
        // Gram-Schmidt against earlier centers while the dimension allows it.
        if (options.orthogonal_centers && c < D) {
            for (std::size_t k = 0; k < c; ++k) {
                double dot = 0.0;
                for (std::size_t d = 0; d < D; ++d) dot += u[d] * cfg.category_centers.at(k, d);
                const double scale = dot / (options.center_norm * options.center_norm);
                for (std::size_t d = 0; d < D; ++d) u[d] -= scale * cfg.category_centers.at(k, d);
            }
        }
        double norm = 0.0;
        for (double x : u) norm += x * x;
        norm = std::sqrt(norm);
        for (std::size_t d = 0; d < D; ++d) cfg.category_centers.at(c, d) = u[d] * options.center_norm / norm;
    }
    return cfg;
}

}  // namespace hst
