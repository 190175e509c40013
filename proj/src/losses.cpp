#include "hst/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace hst {

void AsymmetricLossConfig::validate() const {
    if (!(gamma_positive >= 0.0) || !(gamma_negative >= 0.0)) {
        throw std::invalid_argument("asymmetric loss exponents must be non-negative");
    }
    if (!(margin >= 0.0 && margin < 1.0)) {
        throw std::invalid_argument("asymmetric loss margin must lie in [0, 1)");
    }
}

namespace {

double clamp_probability(double p) { return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor); }

bool inside_clamp(double p) { return p > kProbabilityFloor && p < 1.0 - kProbabilityFloor; }

std::size_t known_count(std::span<const int> labels) {
    std::size_t known = 0;
    for (int y : labels) known += y != 0 ? 1 : 0;
    return known;
}

double partial_bce_row(const double* p, const int* y, std::size_t n) {
    const std::size_t known = known_count({y, n});
    if (known == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        if (y[c] == 1) {
            acc -= std::log(clamp_probability(p[c]));
        } else if (y[c] == -1) {
            acc -= std::log(1.0 - clamp_probability(p[c]));
        }
    }
    return acc / static_cast<double>(known);
}

double positive_term(double p, double gamma) {
    const double q = clamp_probability(p);
    return -std::pow(1.0 - q, gamma) * std::log(q);
}

double positive_slope(double p, double gamma) {
    if (!inside_clamp(p)) return 0.0;
    double slope = -std::pow(1.0 - p, gamma) / p;
    if (gamma != 0.0) slope += gamma * std::pow(1.0 - p, gamma - 1.0) * std::log(p);
    return slope;
}

double negative_term(double p, double gamma, double margin) {
    const double q = clamp_probability(p);
    const double shifted = std::max(p - margin, 0.0);
    return -std::pow(shifted, gamma) * std::log(1.0 - q);
}

double negative_slope(double p, double gamma, double margin) {
    const double shifted = std::max(p - margin, 0.0);
    double slope = 0.0;
    if (inside_clamp(p)) slope += std::pow(shifted, gamma) / (1.0 - p);
    if (gamma != 0.0 && shifted > 0.0) {
        slope -= gamma * std::pow(shifted, gamma - 1.0) * std::log(1.0 - clamp_probability(p));
    }
    return slope;
}

class PartialBceOp final : public Op {
public:
    explicit PartialBceOp(std::vector<int> labels) : labels_(std::move(labels)) {}
    std::string_view name() const override { return "partial_bce"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& p = *in[0];
        if (p.rank() != 2 || p.size() != labels_.size()) {
            throw std::invalid_argument("probabilities " + shape_string(p.shape()) + " do not match " +
                                        std::to_string(labels_.size()) + " labels");
        }
        const std::size_t batch = p.dim(0), classes = p.dim(1);
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            acc += partial_bce_row(p.data() + b * classes, labels_.data() + b * classes, classes);
        }
        return Tensor::scalar(batch == 0 ? 0.0 : acc / static_cast<double>(batch));
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const Tensor& p = *in[0];
        const std::size_t batch = p.dim(0), classes = p.dim(1);
        for (std::size_t b = 0; b < batch; ++b) {
            const int* y = labels_.data() + b * classes;
            const std::size_t known = known_count({y, classes});
            if (known == 0) continue;
            const double w = g[0] / (static_cast<double>(known) * static_cast<double>(batch));
            for (std::size_t c = 0; c < classes; ++c) {
                const double pc = p[b * classes + c];
                if (y[c] == 0 || !inside_clamp(pc)) continue;
                (*gin[0])[b * classes + c] += y[c] == 1 ? -w / pc : w / (1.0 - pc);
            }
        }
    }

private:
    std::vector<int> labels_;
};

class AsymmetricLossOp final : public Op {
public:
    AsymmetricLossOp(std::vector<int> targets, AsymmetricLossConfig cfg) : targets_(std::move(targets)), cfg_(cfg) {
        for (int t : targets_) count_ += t != 0 ? 1 : 0;
    }
    std::string_view name() const override { return "asymmetric_pair_loss"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        if (in[0]->size() != targets_.size()) {
            throw std::invalid_argument("probabilities " + shape_string(in[0]->shape()) + " do not match " +
                                        std::to_string(targets_.size()) + " pair targets");
        }
        return Tensor::scalar(asymmetric_pair_loss(in[0]->values(), targets_, cfg_).value);
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        if (count_ == 0) return;
        const double w = g[0] / static_cast<double>(count_);
        const Tensor& p = *in[0];
        for (std::size_t i = 0; i < targets_.size(); ++i) {
            if (targets_[i] == 1) {
                (*gin[0])[i] += w * positive_slope(p[i], cfg_.gamma_positive);
            } else if (targets_[i] == -1) {
                (*gin[0])[i] += w * negative_slope(p[i], cfg_.gamma_negative, cfg_.margin);
            }
        }
    }

private:
    std::vector<int> targets_;
    AsymmetricLossConfig cfg_;
    std::size_t count_ = 0;
};

}  // namespace

double partial_bce(std::span<const double> probabilities, std::span<const int> labels) {
    if (probabilities.size() != labels.size()) {
        throw std::invalid_argument("partial_bce: probability and label lengths differ");
    }
    return partial_bce_row(probabilities.data(), labels.data(), labels.size());
}

LossValue asymmetric_pair_loss(std::span<const double> probabilities, std::span<const int> targets,
                               const AsymmetricLossConfig& cfg) {
    if (probabilities.size() != targets.size()) {
        throw std::invalid_argument("asymmetric_pair_loss: probability and target lengths differ");
    }
    LossValue out;
    std::size_t count = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] == 1) {
            acc += positive_term(probabilities[i], cfg.gamma_positive);
        } else if (targets[i] == -1) {
            acc += negative_term(probabilities[i], cfg.gamma_negative, cfg.margin);
        } else {
            continue;
        }
        ++count;
    }
    if (count > 0) {
        out.value = acc / static_cast<double>(count);
        out.has_terms = true;
    }
    return out;
}

namespace ops {

NodeId partial_bce(Graph& g, NodeId probabilities, std::vector<int> labels) {
    return g.apply(std::make_unique<PartialBceOp>(std::move(labels)), {probabilities});
}

NodeId asymmetric_pair_loss(Graph& g, NodeId probabilities, std::vector<int> targets,
                            const AsymmetricLossConfig& cfg) {
    cfg.validate();
    return g.apply(std::make_unique<AsymmetricLossOp>(std::move(targets), cfg), {probabilities});
}

}  // namespace ops

}  // namespace hst
