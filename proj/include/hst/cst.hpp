#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hst/autograd.hpp"
#include "hst/dataset.hpp"
#include "hst/losses.hpp"
#include "hst/random.hpp"
#include "hst/sarl.hpp"

namespace hst {

struct KMeansOptions {
    std::size_t max_iterations = 50;
    double tolerance = 1e-6;  // stop once no centroid moves farther than this
};

struct KMeansResult {
    Tensor centroids;  // [K, D]
    std::vector<std::size_t> assignment;
    std::vector<std::size_t> counts;
    // Sum of squared distances after each assignment step.
    std::vector<double> objective;
};

// Lloyd iterations from k-means++ seeds. A cluster that loses all members
// keeps its previous centroid. Requires 1 <= K <= number of points.
KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, const KMeansOptions& options = {});

struct PrototypeBank {
    Tensor prototypes;  // [C, K, D']
    std::vector<std::vector<std::size_t>> counts;
    std::vector<bool> empty;  // categories with no known positive

    std::size_t categories() const { return prototypes.dim(0); }
    std::size_t prototypes_per_category() const { return prototypes.dim(1); }
    std::size_t dim() const { return prototypes.dim(2); }
    std::span<const double> prototype(std::size_t c, std::size_t k) const {
        return prototypes.values().subspan((c * prototypes_per_category() + k) * dim(), dim());
    }
};

// Clusters, per category, the features of samples where that category is a
// known positive. With fewer members than K, each member becomes a prototype
// and the remaining slots hold the member mean.
PrototypeBank build_prototypes(const Dataset& dataset, std::span<const CategoryFeatures> features, std::size_t k,
                               std::uint64_t seed, const KMeansOptions& options = {});

struct SimilarityRecord {
    Tensor similarities;        // [C, K]
    std::vector<double> mean;   // average over K
    std::vector<bool> present;  // false for empty-flagged categories
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

SimilarityRecord prototype_similarity(const CategoryFeatures& features, const PrototypeBank& bank);

LabelVector generate_cross_pseudo_labels(const SimilarityRecord& sim, const LabelVector& labels, double theta_cross);

// Mean over in-batch pairs m < n and categories known in both samples of
// 1 - cos when both are positive, 1 + cos otherwise.
LossValue ranking_loss(std::span<const CategoryFeatures> features, std::span<const LabelVector> labels);

namespace ops {

// features: [B*C, D'] node, sample-major. Returns a scalar node; a constant 0
// when no triple contributes. `contributing` receives the triple count.
NodeId ranking_loss(Graph& g, NodeId features, std::size_t batch, std::span<const LabelVector> labels,
                    std::size_t* contributing = nullptr);

}  // namespace ops

// Same header-plus-records layout as dataset files.
void save_prototypes(const PrototypeBank& bank, const std::filesystem::path& path);
PrototypeBank load_prototypes(const std::filesystem::path& path);

}  // namespace hst
