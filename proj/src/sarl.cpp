#include "hst/sarl.hpp"

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

SarlParams SarlParams::init(std::size_t categories, std::size_t feature_dim, std::size_t hidden_dim, Rng& rng) {
    SarlParams p;
    const double d = static_cast<double>(feature_dim);
    const double h = static_cast<double>(hidden_dim);
    p.category_embeddings = uniform_tensor({categories, feature_dim}, 1.0 / std::sqrt(d), rng);
    // He-uniform for the ReLU encoder.
    p.encoder_w1 = uniform_tensor({feature_dim, hidden_dim}, std::sqrt(6.0 / d), rng);
    p.encoder_b1 = Tensor({hidden_dim});
    p.encoder_w2 = uniform_tensor({hidden_dim, hidden_dim}, std::sqrt(6.0 / h), rng);
    p.encoder_b2 = Tensor({hidden_dim});
    p.classifier_w = uniform_tensor({categories, hidden_dim}, 1.0 / std::sqrt(h), rng);
    p.classifier_b = Tensor({categories});
    return p;
}

std::vector<std::pair<std::string, Tensor*>> SarlParams::tensors() {
    return {{"sarl.category_embeddings", &category_embeddings},
            {"sarl.encoder_w1", &encoder_w1},
            {"sarl.encoder_b1", &encoder_b1},
            {"sarl.encoder_w2", &encoder_w2},
            {"sarl.encoder_b2", &encoder_b2},
            {"sarl.classifier_w", &classifier_w},
            {"sarl.classifier_b", &classifier_b}};
}

SarlNodes bind_sarl(Graph& g, const SarlParams& p, bool trainable) {
    auto leaf = [&](const Tensor& t) { return trainable ? g.parameter(t) : g.constant(t); };
    SarlNodes n{};
    n.category_embeddings = leaf(p.category_embeddings);
    n.encoder_w1 = leaf(p.encoder_w1);
    n.encoder_b1 = leaf(p.encoder_b1);
    n.encoder_w2 = leaf(p.encoder_w2);
    n.encoder_b2 = leaf(p.encoder_b2);
    n.classifier_w = leaf(p.classifier_w);
    n.classifier_b = leaf(p.classifier_b);
    return n;
}

Tensor stack_regions(std::span<const Sample* const> samples) {
    if (samples.empty()) throw std::invalid_argument("stack_regions: empty batch");
    const Shape& first = samples.front()->regions.shape();
    if (first.size() != 2 || first[0] == 0) throw std::invalid_argument("sample regions must be a nonempty [R, D] matrix");
    Tensor out({samples.size(), first[0], first[1]});
    const std::size_t block = first[0] * first[1];
    for (std::size_t b = 0; b < samples.size(); ++b) {
        if (samples[b]->regions.shape() != first) {
            throw std::invalid_argument("sample " + samples[b]->id + " has regions " +
                                        shape_string(samples[b]->regions.shape()) + ", expected " + shape_string(first));
        }
        std::copy_n(samples[b]->regions.data(), block, out.data() + b * block);
    }
    return out;
}

SarlOutput sarl_forward(Graph& g, const SarlNodes& n, NodeId regions) {
    const Shape& rs = g.value(regions).shape();
    if (rs.size() != 3) throw std::invalid_argument("sarl_forward: regions must be [B, R, D]");
    const std::size_t batch = rs[0], dim = rs[2];
    const std::size_t categories = g.value(n.category_embeddings).dim(0);
    const std::size_t hidden = g.value(n.encoder_w1).dim(1);

    const NodeId embeddings = ops::repeat_batch(g, n.category_embeddings, batch);     // [B, C, D]
    const NodeId raw_scores = ops::batch_matmul(g, embeddings, regions, true);         // [B, C, R]
    const NodeId scores = ops::scale(g, raw_scores, 1.0 / std::sqrt(static_cast<double>(dim)));
    const NodeId attention = ops::softmax(g, scores);
    const std::size_t regions_per = rs[1];
    const NodeId flat = ops::reshape(g, regions, {batch * regions_per, dim});
    const NodeId h1 = ops::relu(g, ops::add_bias(g, ops::matmul(g, flat, n.encoder_w1), n.encoder_b1));
    const NodeId h2 = ops::relu(g, ops::add_bias(g, ops::matmul(g, h1, n.encoder_w2), n.encoder_b2));
    const NodeId encoded = ops::reshape(g, h2, {batch, regions_per, hidden});
    const NodeId pooled = ops::batch_matmul(g, attention, encoded);                    // [B, C, D']
    const NodeId features = ops::reshape(g, pooled, {batch * categories, hidden});

    const NodeId grouped = ops::reshape(g, features, {batch, categories, hidden});
    const NodeId weights = ops::repeat_batch(g, n.classifier_w, batch);
    const NodeId logits = ops::add_bias(g, ops::sum_last(g, ops::mul(g, grouped, weights)), n.classifier_b);
    return {attention, features, ops::sigmoid(g, logits)};
}

std::vector<CategoryFeatures> extract_category_features(std::span<const Sample* const> samples,
                                                        const SarlParams& params) {
    std::vector<CategoryFeatures> out;
    if (samples.empty()) return out;
    Graph g;
    const SarlNodes nodes = bind_sarl(g, params, false);
    const NodeId regions = g.constant(stack_regions(samples));
    const SarlOutput result = sarl_forward(g, nodes, regions);
    const Tensor& features = g.value(result.features);
    const std::size_t C = params.categories(), H = params.hidden_dim();
    out.reserve(samples.size());
    for (std::size_t b = 0; b < samples.size(); ++b) {
        Tensor block({C, H});
        std::copy_n(features.data() + b * C * H, C * H, block.data());
        out.push_back({std::move(block)});
    }
    return out;
}

CategoryFeatures extract_category_features(const Sample& sample, const SarlParams& params) {
    const Sample* one[] = {&sample};
    return std::move(extract_category_features(one, params).front());
}

Tensor attention_weights(const Sample& sample, const SarlParams& params) {
    Graph g;
    const SarlNodes nodes = bind_sarl(g, params, false);
    const Sample* one[] = {&sample};
    const SarlOutput result = sarl_forward(g, nodes, g.constant(stack_regions(one)));
    const Tensor& a = g.value(result.attention);
    return a.reshaped({a.dim(1), a.dim(2)});
}

std::vector<double> classify(const CategoryFeatures& features, const SarlParams& params) {
    const std::size_t C = params.categories(), H = params.hidden_dim();
    if (features.values.shape() != Shape{C, H}) {
        throw std::invalid_argument("classify: features " + shape_string(features.values.shape()) + " do not match [" +
                                    std::to_string(C) + "," + std::to_string(H) + "]");
    }
    std::vector<double> probs(C);
    for (std::size_t c = 0; c < C; ++c) {
        double logit = 0.0;
        for (std::size_t k = 0; k < H; ++k) logit += features.values.at(c, k) * params.classifier_w.at(c, k);
        logit += params.classifier_b[c];
        probs[c] = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
    }
    return probs;
}

}  // namespace hst
