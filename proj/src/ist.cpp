#include "hst/ist.hpp"

#include <cmath>

namespace hst {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = dist(rng);
    return t;
}

}  // namespace

IstParams IstParams::init(std::size_t feature_dim, std::size_t hidden1, std::size_t hidden2, Rng& rng) {
    IstParams p;
    const double in = 2.0 * static_cast<double>(feature_dim);
    p.w1 = uniform_tensor({2 * feature_dim, hidden1}, std::sqrt(6.0 / in), rng);
    p.b1 = Tensor({hidden1});
    p.w2 = uniform_tensor({hidden1, hidden2}, std::sqrt(6.0 / static_cast<double>(hidden1)), rng);
    p.b2 = Tensor({hidden2});
    p.w3 = uniform_tensor({hidden2, 1}, 1.0 / std::sqrt(static_cast<double>(hidden2)), rng);
    p.b3 = Tensor({1});
    return p;
}

std::vector<std::pair<std::string, Tensor*>> IstParams::tensors() {
    return {{"ist.w1", &w1}, {"ist.b1", &b1}, {"ist.w2", &w2}, {"ist.b2", &b2}, {"ist.w3", &w3}, {"ist.b3", &b3}};
}

IstNodes bind_ist(Graph& g, const IstParams& p, bool trainable) {
    auto leaf = [&](const Tensor& t) { return trainable ? g.parameter(t) : g.constant(t); };
    return {leaf(p.w1), leaf(p.b1), leaf(p.w2), leaf(p.b2), leaf(p.w3), leaf(p.b3)};
}

NodeId pair_probabilities(Graph& g, const IstNodes& n, NodeId features,
                          std::vector<std::pair<std::size_t, std::size_t>> pairs) {
    const std::size_t dim = g.value(features).dim(1);
    const std::size_t count = pairs.size();
    // concat(f_i, f_j) W1 == f_i W1[:D'] + f_j W1[D':]
    const NodeId left = ops::matmul(g, features, ops::slice_rows(g, n.w1, 0, dim));
    const NodeId right = ops::matmul(g, features, ops::slice_rows(g, n.w1, dim, dim));
    const NodeId h1 = ops::relu(g, ops::add_bias(g, ops::pair_sum(g, left, right, std::move(pairs)), n.b1));
    const NodeId h2 = ops::relu(g, ops::add_bias(g, ops::matmul(g, h1, n.w2), n.b2));
    const NodeId logit = ops::add_bias(g, ops::matmul(g, h2, n.w3), n.b3);
    return ops::reshape(g, ops::sigmoid(g, logit), {count});
}

CooccurrenceMatrix predict_cooccurrence(const CategoryFeatures& features, const IstParams& params) {
    const std::size_t C = features.categories();
    if (features.dim() != params.feature_dim()) {
        throw std::invalid_argument("predict_cooccurrence: feature width " + std::to_string(features.dim()) +
                                    " does not match pair network input " + std::to_string(params.feature_dim()));
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(C * C);
    for (std::size_t i = 0; i < C; ++i)
        for (std::size_t j = 0; j < C; ++j) pairs.emplace_back(i, j);
    Graph g;
    const IstNodes nodes = bind_ist(g, params, false);
    const NodeId f = g.constant(features.values);
    const NodeId probs = pair_probabilities(g, nodes, f, std::move(pairs));
    return {g.value(probs).reshaped({C, C})};
}

std::vector<double> intra_evidence(const CooccurrenceMatrix& cooc, const LabelVector& labels) {
    const std::size_t C = labels.size();
    std::vector<double> evidence(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j < C; ++j) {
            if (j != c && labels[j] == 1) evidence[c] += cooc.at(c, j);
        }
    }
    return evidence;
}

LabelVector generate_intra_pseudo_labels(const CooccurrenceMatrix& cooc, const LabelVector& labels,
                                         double theta_intra) {
    const std::vector<double> evidence = intra_evidence(cooc, labels);
    LabelVector pseudo(labels.size(), 0);
    for (std::size_t c = 0; c < labels.size(); ++c) {
        if (labels[c] == 0 && evidence[c] >= theta_intra) pseudo[c] = 1;
    }
    return pseudo;
}

std::vector<std::pair<std::pair<std::size_t, std::size_t>, int>> known_pairs(const LabelVector& labels) {
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, int>> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 0) continue;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (j == i || labels[j] == 0) continue;
            out.push_back({{i, j}, labels[i] == 1 && labels[j] == 1 ? 1 : -1});
        }
    }
    return out;
}

LossValue asymmetric_loss(const CooccurrenceMatrix& cooc, const LabelVector& labels, const AsymmetricLossConfig& cfg) {
    cfg.validate();
    std::vector<double> probs;
    std::vector<int> targets;
    for (const auto& [pair, target] : known_pairs(labels)) {
        probs.push_back(cooc.at(pair.first, pair.second));
        targets.push_back(target);
    }
    return asymmetric_pair_loss(probs, targets, cfg);
}

}  // namespace hst
