#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hst/autograd.hpp"
#include "hst/losses.hpp"
#include "hst/random.hpp"
#include "hst/sarl.hpp"

namespace hst {

// Entry (i, j) estimates the probability that categories i and j co-occur in
// one image. Only off-diagonal entries are consumed.
struct CooccurrenceMatrix {
    Tensor values;  // [C, C]

    std::size_t categories() const { return values.dim(0); }
    double at(std::size_t i, std::size_t j) const { return values.at(i, j); }
};

// Pair network: concat(f_i, f_j) [2D'] -> hidden1 -> hidden2 -> 1, ReLU after
// the first two layers and a sigmoid on the output.
struct IstParams {
    Tensor w1;  // [2D', H1]
    Tensor b1;  // [H1]
    Tensor w2;  // [H1, H2]
    Tensor b2;  // [H2]
    Tensor w3;  // [H2, 1]
    Tensor b3;  // [1]

    static IstParams init(std::size_t feature_dim, std::size_t hidden1, std::size_t hidden2, Rng& rng);

    std::size_t feature_dim() const { return w1.dim(0) / 2; }
    std::vector<std::pair<std::string, Tensor*>> tensors();
};

struct IstNodes {
    NodeId w1, b1, w2, b2, w3, b3;
};

IstNodes bind_ist(Graph& g, const IstParams& params, bool trainable = true);

// Probabilities [P] for row pairs (i, j) of a [M, D'] feature node.
NodeId pair_probabilities(Graph& g, const IstNodes& nodes, NodeId features,
                          std::vector<std::pair<std::size_t, std::size_t>> pairs);

CooccurrenceMatrix predict_cooccurrence(const CategoryFeatures& features, const IstParams& params);

// Sum over known positives j != c of p(c, j). Entries outside those columns
// are never read.
std::vector<double> intra_evidence(const CooccurrenceMatrix& cooc, const LabelVector& labels);

// 1 at unknown c whose evidence reaches theta; 0 elsewhere, including every
// known position.
LabelVector generate_intra_pseudo_labels(const CooccurrenceMatrix& cooc, const LabelVector& labels,
                                         double theta_intra);

// Ordered off-diagonal pairs with both labels known: +1 when both are
// positive, -1 otherwise.
std::vector<std::pair<std::pair<std::size_t, std::size_t>, int>> known_pairs(const LabelVector& labels);

LossValue asymmetric_loss(const CooccurrenceMatrix& cooc, const LabelVector& labels, const AsymmetricLossConfig& cfg);

}  // namespace hst
