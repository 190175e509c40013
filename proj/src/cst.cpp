#include "hst/cst.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace hst {

namespace {

double squared_distance(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

std::size_t nearest(const double* point, const Tensor& centroids, double* best_distance) {
    const std::size_t k = centroids.dim(0), d = centroids.dim(1);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
        const double dist = squared_distance(point, centroids.data() + c * d, d);
        if (dist < best_d) {
            best_d = dist;
            best = c;
        }
    }
    if (best_distance) *best_distance = best_d;
    return best;
}

Tensor seed_plus_plus(const Tensor& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.dim(0), d = points.dim(1);
    Tensor centroids({k, d});
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::copy_n(points.data() + first(rng) * d, d, centroids.data());

    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], squared_distance(points.data() + i * d, centroids.data() + (c - 1) * d, d));
            total += dist[i];
        }
        std::size_t chosen = n - 1;
        if (total > 0.0) {
            const double target = uniform(rng) * total;
            double running = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                running += dist[i];
                if (running > target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = first(rng);
        }
        std::copy_n(points.data() + chosen * d, d, centroids.data() + c * d);
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, const KMeansOptions& options) {
    if (points.rank() != 2) throw std::invalid_argument("kmeans: points must be [N, D]");
    const std::size_t n = points.dim(0), d = points.dim(1);
    if (k == 0 || k > n) {
        throw std::invalid_argument("kmeans: K=" + std::to_string(k) + " needs 1 <= K <= " + std::to_string(n));
    }

    KMeansResult result;
    result.centroids = seed_plus_plus(points, k, rng);
    result.assignment.assign(n, 0);
    result.counts.assign(k, 0);

    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        double objective = 0.0;
        std::fill(result.counts.begin(), result.counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            double dist = 0.0;
            result.assignment[i] = nearest(points.data() + i * d, result.centroids, &dist);
            objective += dist;
            ++result.counts[result.assignment[i]];
        }
        result.objective.push_back(objective);

        Tensor sums({k, d});
        for (std::size_t i = 0; i < n; ++i) {
            double* dst = sums.data() + result.assignment[i] * d;
            const double* src = points.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (result.counts[c] == 0) continue;
            double* centroid = result.centroids.data() + c * d;
            double moved = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double updated = sums.at(c, j) / static_cast<double>(result.counts[c]);
                moved += (updated - centroid[j]) * (updated - centroid[j]);
                centroid[j] = updated;
            }
            shift = std::max(shift, std::sqrt(moved));
        }
        if (shift < options.tolerance) break;
    }
    return result;
}

PrototypeBank build_prototypes(const Dataset& dataset, std::span<const CategoryFeatures> features, std::size_t k,
                               std::uint64_t seed, const KMeansOptions& options) {
    if (k == 0) throw std::invalid_argument("build_prototypes: K must be at least 1");
    if (features.size() != dataset.size()) {
        throw std::invalid_argument("build_prototypes: one feature matrix per sample required");
    }
    const std::size_t C = dataset.categories;
    if (features.empty()) {
        throw std::invalid_argument("build_prototypes: no samples");
    }
    const std::size_t dim = features.front().dim();

    PrototypeBank bank;
    bank.prototypes = Tensor({C, k, dim});
    bank.counts.assign(C, std::vector<std::size_t>(k, 0));
    bank.empty.assign(C, false);

    for (std::size_t c = 0; c < C; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t n = 0; n < dataset.size(); ++n) {
            if (dataset.samples[n].labels[c] == 1) members.push_back(n);
        }
        if (members.empty()) {
            bank.empty[c] = true;
            continue;
        }
        Tensor points({members.size(), dim});
        for (std::size_t m = 0; m < members.size(); ++m) {
            const auto row = features[members[m]].row(c);
            std::copy(row.begin(), row.end(), points.data() + m * dim);
        }
        double* out = bank.prototypes.data() + c * k * dim;

        const std::size_t clusters = std::min(k, members.size());
        Rng rng = make_rng(seed, c);
        const KMeansResult fit = kmeans(points, clusters, rng, options);
        std::copy_n(fit.centroids.data(), clusters * dim, out);
        std::copy(fit.counts.begin(), fit.counts.end(), bank.counts[c].begin());

        if (clusters < k) {
            std::vector<double> mean(dim, 0.0);
            for (std::size_t m = 0; m < members.size(); ++m)
                for (std::size_t j = 0; j < dim; ++j) mean[j] += points.at(m, j);
            for (double& v : mean) v /= static_cast<double>(members.size());
            for (std::size_t slot = clusters; slot < k; ++slot) std::copy(mean.begin(), mean.end(), out + slot * dim);
        }
    }
    return bank;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

SimilarityRecord prototype_similarity(const CategoryFeatures& features, const PrototypeBank& bank) {
    const std::size_t C = bank.categories(), K = bank.prototypes_per_category();
    if (features.categories() != C || features.dim() != bank.dim()) {
        throw std::invalid_argument("prototype_similarity: features " + shape_string(features.values.shape()) +
                                    " do not match bank " + shape_string(bank.prototypes.shape()));
    }
    SimilarityRecord rec;
    rec.similarities = Tensor({C, K});
    rec.mean.assign(C, 0.0);
    rec.present.assign(C, false);
    for (std::size_t c = 0; c < C; ++c) {
        if (bank.empty[c]) continue;
        rec.present[c] = true;
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double s = cosine_similarity(features.row(c), bank.prototype(c, k));
            rec.similarities.at(c, k) = s;
            total += s;
        }
        rec.mean[c] = total / static_cast<double>(K);
    }
    return rec;
}

LabelVector generate_cross_pseudo_labels(const SimilarityRecord& sim, const LabelVector& labels, double theta_cross) {
    if (sim.mean.size() != labels.size()) throw std::invalid_argument("generate_cross_pseudo_labels: size mismatch");
    LabelVector pseudo(labels.size(), 0);
    for (std::size_t c = 0; c < labels.size(); ++c) {
        if (labels[c] == 0 && sim.present[c] && sim.mean[c] >= theta_cross) pseudo[c] = 1;
    }
    return pseudo;
}

LossValue ranking_loss(std::span<const CategoryFeatures> features, std::span<const LabelVector> labels) {
    if (features.size() < 2 || features.size() != labels.size()) {
        throw std::invalid_argument("ranking_loss: needs a batch of at least two labelled samples");
    }
    const std::size_t C = labels.front().size();
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t m = 0; m < features.size(); ++m) {
        for (std::size_t n = m + 1; n < features.size(); ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                if (labels[m][c] == 0 || labels[n][c] == 0) continue;
                const double s = cosine_similarity(features[m].row(c), features[n].row(c));
                total += (labels[m][c] == 1 && labels[n][c] == 1) ? 1.0 - s : 1.0 + s;
                ++count;
            }
        }
    }
    LossValue out;
    if (count > 0) {
        out.value = total / static_cast<double>(count);
        out.has_terms = true;
    }
    return out;
}

namespace ops {

NodeId ranking_loss(Graph& g, NodeId features, std::size_t batch, std::span<const LabelVector> labels,
                    std::size_t* contributing) {
    if (batch < 2 || labels.size() != batch) {
        throw std::invalid_argument("ranking_loss: needs a batch of at least two labelled samples");
    }
    const Tensor& f = g.value(features);
    const std::size_t C = labels.front().size();
    if (f.rank() != 2 || f.dim(0) != batch * C) {
        throw std::invalid_argument("ranking_loss: features " + shape_string(f.shape()) + " do not match batch");
    }
    const std::size_t dim = f.dim(1);

    // weights[c, m, n] over the per-category similarity matrices
    Tensor weights({C, batch, batch});
    std::size_t count = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t m = 0; m < batch; ++m) {
            if (labels[m][c] == 0) continue;
            for (std::size_t n = m + 1; n < batch; ++n) {
                if (labels[n][c] == 0) continue;
                weights.at(c, m, n) = (labels[m][c] == 1 && labels[n][c] == 1) ? -1.0 : 1.0;
                ++count;
            }
        }
    }
    if (contributing) *contributing = count;
    if (count == 0) return g.constant(Tensor::scalar(0.0));
    for (double& w : weights.values()) w /= static_cast<double>(count);

    const NodeId unit = ops::normalize_rows(g, features);
    const NodeId by_category = ops::swap_leading(g, ops::reshape(g, unit, {batch, C, dim}));  // [C, B, D']
    const NodeId sims = ops::batch_matmul(g, by_category, by_category, true);                  // [C, B, B]
    return ops::add_constant(g, ops::weighted_sum(g, sims, std::move(weights)), 1.0);
}

}  // namespace ops

void save_prototypes(const PrototypeBank& bank, const std::filesystem::path& path) {
    using json = nlohmann::ordered_json;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::size_t C = bank.categories(), K = bank.prototypes_per_category(), D = bank.dim();
    json header;
    header["version"] = 1;
    header["kind"] = "prototypes";
    header["C"] = C;
    header["K"] = K;
    header["D"] = D;
    out << header.dump() << '\n';
    for (std::size_t c = 0; c < C; ++c) {
        json record;
        record["category"] = c;
        record["empty"] = static_cast<bool>(bank.empty[c]);
        record["counts"] = bank.counts[c];
        json rows = json::array();
        for (std::size_t k = 0; k < K; ++k) {
            const auto p = bank.prototype(c, k);
            rows.push_back(std::vector<double>(p.begin(), p.end()));
        }
        record["prototypes"] = std::move(rows);
        out << record.dump() << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

PrototypeBank load_prototypes(const std::filesystem::path& path) {
    using json = nlohmann::ordered_json;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw DatasetError(1, "missing header");
    std::size_t C = 0, K = 0, D = 0;
    try {
        const json header = json::parse(line);
        if (header.at("kind").get<std::string>() != "prototypes") throw std::invalid_argument("not a prototype file");
        C = header.at("C").get<std::size_t>();
        K = header.at("K").get<std::size_t>();
        D = header.at("D").get<std::size_t>();
    } catch (const std::exception& e) {
        throw DatasetError(line_no, std::string("bad header: ") + e.what());
    }
    PrototypeBank bank;
    bank.prototypes = Tensor({C, K, D});
    bank.counts.assign(C, std::vector<std::size_t>(K, 0));
    bank.empty.assign(C, false);
    for (std::size_t c = 0; c < C; ++c) {
        ++line_no;
        if (!std::getline(in, line)) throw DatasetError(line_no, "missing category record");
        try {
            const json record = json::parse(line);
            if (record.at("category").get<std::size_t>() != c) throw std::invalid_argument("categories out of order");
            bank.empty[c] = record.at("empty").get<bool>();
            bank.counts[c] = record.at("counts").get<std::vector<std::size_t>>();
            const json& rows = record.at("prototypes");
            if (bank.counts[c].size() != K || rows.size() != K) throw std::invalid_argument("expected K entries");
            for (std::size_t k = 0; k < K; ++k) {
                const auto row = rows[k].get<std::vector<double>>();
                if (row.size() != D) throw std::invalid_argument("prototype width mismatch");
                std::copy(row.begin(), row.end(), bank.prototypes.data() + (c * K + k) * D);
            }
        } catch (const DatasetError&) {
            throw;
        } catch (const std::exception& e) {
            throw DatasetError(line_no, e.what());
        }
    }
    return bank;
}

}  // namespace hst
