#pragma once

#include <span>
#include <vector>

#include "hst/autograd.hpp"

namespace hst {

// Ternary label: +1 known positive, -1 known negative, 0 unknown.
// Pseudo labels reuse the type with values in {0, 1}.
using LabelVector = std::vector<int>;

inline constexpr double kProbabilityFloor = 1e-7;

struct AsymmetricLossConfig {
    double gamma_positive = 1.0;
    double gamma_negative = 2.0;
    double margin = 0.05;

    void validate() const;
};

// Loss value plus whether any term contributed (false means the value is 0
// by convention).
struct LossValue {
    double value = 0.0;
    bool has_terms = false;
};

// Negative partial binary cross-entropy of one sample, normalized by the
// number of known entries. Probabilities are clamped to [1e-7, 1 - 1e-7].
double partial_bce(std::span<const double> probabilities, std::span<const int> labels);

// Pair-level asymmetric loss. targets: +1 positive pair, -1 negative pair,
// 0 excluded. Returns the mean over contributing pairs.
LossValue asymmetric_pair_loss(std::span<const double> probabilities, std::span<const int> targets,
                               const AsymmetricLossConfig& cfg);

namespace ops {

// probabilities [B,C]; labels flattened row-major, B*C entries. Mean over the
// batch of the per-sample partial BCE; samples with no known entries add 0.
NodeId partial_bce(Graph& g, NodeId probabilities, std::vector<int> labels);

// probabilities: any shape with P entries; targets as in asymmetric_pair_loss.
NodeId asymmetric_pair_loss(Graph& g, NodeId probabilities, std::vector<int> targets,
                            const AsymmetricLossConfig& cfg);

}  // namespace ops

}  // namespace hst
