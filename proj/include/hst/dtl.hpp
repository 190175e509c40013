#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hst/autograd.hpp"
#include "hst/cst.hpp"
#include "hst/ist.hpp"
#include "hst/losses.hpp"
#include "hst/optim.hpp"

namespace hst {

inline constexpr double kDefaultSteepness = 4.0;

struct ScalarMoments {
    double first = 0.0;
    double second = 0.0;
    std::size_t steps = 0;
};

// Learnable pseudo-label thresholds. Values are kept inside their valid range:
// [0, inf) for the intra threshold and [-1, 1] for the cross threshold.
struct ThresholdPair {
    double theta_intra = 0.5;
    double theta_cross = 0.5;
    ScalarMoments intra_state;
    ScalarMoments cross_state;

    void clamp();
};

struct ThresholdDifferences {
    std::vector<double> intra;
    std::vector<double> cross;
};

// Known c: intra evidence minus theta_intra, mean prototype similarity minus
// theta_cross. Unknown c, and cross entries of categories without prototypes,
// are 0.
ThresholdDifferences threshold_differences(const CooccurrenceMatrix& cooc, const SimilarityRecord& sim,
                                           const LabelVector& labels, const ThresholdPair& thresholds);

// Partial BCE of sigmoid(beta * d) against the known labels.
double dtl_loss(std::span<const double> differences, const LabelVector& labels, double beta = kDefaultSteepness);

struct ThresholdGradients {
    double intra = 0.0;
    double cross = 0.0;
};

// One Adam step per threshold, then clamp. A zero gradient leaves the value
// unchanged only while the moment estimates are zero as well.
void step_thresholds(ThresholdPair& thresholds, const ThresholdGradients& grads, double learning_rate,
                     const AdamConfig& cfg = {});

namespace ops {

// evidence [B, C] minus a scalar threshold node, zeroed where mask is 0.
NodeId threshold_differences(Graph& g, NodeId evidence, NodeId theta, const std::vector<int>& known_mask);

// Batch mean of the per-sample DTL loss; labels flattened [B*C].
NodeId dtl_loss(Graph& g, NodeId differences, std::vector<int> labels, double beta = kDefaultSteepness);

}  // namespace ops

}  // namespace hst
