#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hst/losses.hpp"
#include "hst/tensor.hpp"

namespace hst {

struct Sample {
    std::string id;
    Tensor regions;  // [R, D]
    LabelVector labels;
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t categories = 0;
    std::size_t feature_dim = 0;
    std::size_t regions = 0;
    std::uint64_t seed = 0;
    // Generator config and any later transformations (label dropping).
    nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

    std::size_t size() const { return samples.size(); }
    // Throws std::invalid_argument naming the first violation.
    void validate() const;
};

struct GeneratorConfig {
    std::size_t categories = 0;
    std::size_t samples = 0;
    std::size_t regions = 0;
    std::size_t feature_dim = 0;
    Tensor pair_affinity;             // [C, C], symmetric, zero diagonal
    std::vector<double> base_logits;  // [C]
    Tensor category_centers;          // [C, D]
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static GeneratorConfig from_json(const nlohmann::ordered_json& j);
};

// Category c is positive with probability
//   sigmoid(base_c + sum_{j < c, y_j = +1} affinity[c][j]),
// sampled in category order. Each positive gets one region drawn around its
// center; when a sample has more positives than regions, positives share a
// region whose mean is the average of their centers. Other regions are pure
// noise. Every label is known (+1/-1).
Dataset generate(const GeneratorConfig& config);

// Keeps exactly max(1, round(known_proportion * C)) labels per sample, chosen
// uniformly without replacement, and zeroes the rest.
Dataset drop_labels(const Dataset& dataset, double known_proportion, std::uint64_t seed);

// Deterministic head/tail split: the last round(test_fraction * N) samples form
// the test part.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double test_fraction);

class DatasetError : public std::runtime_error {
public:
    DatasetError(std::size_t line, const std::string& message);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Planted benchmark structure: categories are grouped into consecutive blocks
// with positive affinity inside each block and none across blocks.
struct PlantedOptions {
    std::size_t categories = 20;
    std::size_t samples = 2000;
    std::size_t regions = 8;
    std::size_t feature_dim = 32;
    std::size_t group_size = 4;
    double affinity = 3.0;
    double base_logit = -2.5;
    double center_norm = 3.0;
    double noise_sigma = 1.0;
    bool orthogonal_centers = false;
    std::uint64_t seed = 0;
};

GeneratorConfig planted_config(const PlantedOptions& options);

}  // namespace hst
