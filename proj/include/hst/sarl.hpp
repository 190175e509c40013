#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hst/autograd.hpp"
#include "hst/dataset.hpp"
#include "hst/random.hpp"

namespace hst {

// Row c holds the feature vector of category c for one sample: [C, D'].
struct CategoryFeatures {
    Tensor values;

    std::size_t categories() const { return values.dim(0); }
    std::size_t dim() const { return values.dim(1); }
    std::span<const double> row(std::size_t c) const { return values.values().subspan(c * dim(), dim()); }
};

struct SarlParams {
    Tensor category_embeddings;  // [C, D]
    Tensor encoder_w1;           // [D, D']
    Tensor encoder_b1;           // [D']
    Tensor encoder_w2;           // [D', D']
    Tensor encoder_b2;           // [D']
    Tensor classifier_w;         // [C, D'], one affine map per category
    Tensor classifier_b;         // [C]

    static SarlParams init(std::size_t categories, std::size_t feature_dim, std::size_t hidden_dim, Rng& rng);

    std::size_t categories() const { return category_embeddings.dim(0); }
    std::size_t feature_dim() const { return category_embeddings.dim(1); }
    std::size_t hidden_dim() const { return encoder_w1.dim(1); }

    std::vector<std::pair<std::string, Tensor*>> tensors();
};

struct SarlNodes {
    NodeId category_embeddings, encoder_w1, encoder_b1, encoder_w2, encoder_b2, classifier_w, classifier_b;
};

struct SarlOutput {
    NodeId attention;      // [B, C, R]
    NodeId features;       // [B*C, D']
    NodeId probabilities;  // [B, C]
};

// Adds the parameters as graph leaves (trainable or constant).
SarlNodes bind_sarl(Graph& g, const SarlParams& params, bool trainable = true);

// Stacks sample regions into a [B, R, D] tensor.
Tensor stack_regions(std::span<const Sample* const> samples);

// Regions pass through a two-layer ReLU encoder; each category attends over
// them with scaled dot-product scores between its embedding and the raw
// regions, and pools the encoded regions. A per-category sigmoid classifier
// reads the pooled feature.
SarlOutput sarl_forward(Graph& g, const SarlNodes& nodes, NodeId regions);

CategoryFeatures extract_category_features(const Sample& sample, const SarlParams& params);
std::vector<CategoryFeatures> extract_category_features(std::span<const Sample* const> samples,
                                                        const SarlParams& params);
Tensor attention_weights(const Sample& sample, const SarlParams& params);  // [C, R]
std::vector<double> classify(const CategoryFeatures& features, const SarlParams& params);

}  // namespace hst
