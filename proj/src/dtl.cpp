#include "hst/dtl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hst {

void ThresholdPair::clamp() {
    theta_intra = std::max(theta_intra, 0.0);
    theta_cross = std::clamp(theta_cross, -1.0, 1.0);
}

ThresholdDifferences threshold_differences(const CooccurrenceMatrix& cooc, const SimilarityRecord& sim,
                                           const LabelVector& labels, const ThresholdPair& thresholds) {
    const std::size_t C = labels.size();
    if (cooc.categories() != C || sim.mean.size() != C) {
        throw std::invalid_argument("threshold_differences: inputs disagree on the category count");
    }
    const std::vector<double> evidence = intra_evidence(cooc, labels);
    ThresholdDifferences d{std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
    for (std::size_t c = 0; c < C; ++c) {
        if (labels[c] == 0) continue;
        d.intra[c] = evidence[c] - thresholds.theta_intra;
        if (sim.present[c]) d.cross[c] = sim.mean[c] - thresholds.theta_cross;
    }
    return d;
}

double dtl_loss(std::span<const double> differences, const LabelVector& labels, double beta) {
    if (differences.size() != labels.size()) throw std::invalid_argument("dtl_loss: size mismatch");
    std::vector<double> probs(differences.size());
    for (std::size_t c = 0; c < probs.size(); ++c) {
        const double z = beta * differences[c];
        probs[c] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    return partial_bce(probs, labels);
}

void step_thresholds(ThresholdPair& thresholds, const ThresholdGradients& grads, double learning_rate,
                     const AdamConfig& cfg) {
    if (!std::isfinite(grads.intra) || !std::isfinite(grads.cross)) {
        throw std::invalid_argument("step_thresholds: non-finite gradient");
    }
    auto step = [&](double& value, ScalarMoments& state, double grad) {
        ++state.steps;
        double g = grad;
        adam_update({&value, 1}, {&g, 1}, {&state.first, 1}, {&state.second, 1}, state.steps, learning_rate, cfg);
    };
    step(thresholds.theta_intra, thresholds.intra_state, grads.intra);
    step(thresholds.theta_cross, thresholds.cross_state, grads.cross);
    thresholds.clamp();
}

namespace ops {

NodeId threshold_differences(Graph& g, NodeId evidence, NodeId theta, const std::vector<int>& known_mask) {
    const Tensor& e = g.value(evidence);
    if (known_mask.size() != e.size()) throw std::invalid_argument("threshold_differences: mask size mismatch");
    Tensor mask(e.shape());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = known_mask[i] != 0 ? 1.0 : 0.0;
    const NodeId shifted = ops::sub(g, evidence, ops::broadcast_scalar(g, theta, e.shape()));
    return ops::mul(g, shifted, g.constant(std::move(mask)));
}

NodeId dtl_loss(Graph& g, NodeId differences, std::vector<int> labels, double beta) {
    return ops::partial_bce(g, ops::sigmoid(g, ops::scale(g, differences, beta)), std::move(labels));
}

}  // namespace ops

}  // namespace hst
