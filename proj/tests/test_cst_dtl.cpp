#include "doctest.h"

#include <cmath>
#include <random>

#include "hst/cst.hpp"
#include "hst/dtl.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hst;
using test_util::random_tensor;

namespace {

PrototypeBank random_bank(std::size_t C, std::size_t K, std::size_t D, std::mt19937_64& r) {
    PrototypeBank bank;
    bank.prototypes = random_tensor({C, K, D}, r);
    bank.counts.assign(C, std::vector<std::size_t>(K, 1));
    bank.empty.assign(C, false);
    return bank;
}

}  // namespace

TEST_SUITE("cst") {

TEST_CASE("k-means with K=1 returns the member mean") {
    std::mt19937_64 r(1);
    const Tensor pts = random_tensor({9, 3}, r);
    Rng rng = make_rng(2);
    const KMeansResult km = kmeans(pts, 1, rng);
    for (std::size_t d = 0; d < 3; ++d) {
        double mean = 0;
        for (std::size_t i = 0; i < 9; ++i) mean += pts.at(i, d);
        CHECK(std::abs(km.centroids.at(0, d) - mean / 9.0) < 1e-10);
    }
}

TEST_CASE("k-means objective never increases") {
    std::mt19937_64 r(3);
    for (int t = 0; t < 20; ++t) {
        const Tensor pts = random_tensor({40, 4}, r);
        Rng rng = make_rng(t);
        const KMeansResult km = kmeans(pts, 5, rng);
        for (std::size_t i = 1; i < km.objective.size(); ++i) CHECK(km.objective[i] <= km.objective[i - 1] + 1e-12);
    }
}

TEST_CASE("k-means rejects K outside [1, points]") {
    Rng rng = make_rng(1);
    CHECK_THROWS_AS(kmeans(Tensor({3, 2}), 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(kmeans(Tensor({3, 2}), 4, rng), std::invalid_argument);
}

TEST_CASE("build_prototypes: members, padding and empty categories") {
    Dataset ds;
    ds.categories = 3;
    ds.feature_dim = 2;
    ds.regions = 1;
    std::vector<CategoryFeatures> feats;
    for (int n = 0; n < 3; ++n) {
        ds.samples.push_back({"s" + std::to_string(n), Tensor({1, 2}), {1, n == 0 ? 1 : -1, 0}});
        feats.push_back({Tensor::matrix(3, 2, {1.0 + n, 2.0 * n, 5, 5, 7, 7})});
    }
    const PrototypeBank bank = build_prototypes(ds, feats, 2, 4);
    CHECK_FALSE(bank.empty[0]);
    CHECK_FALSE(bank.empty[1]);
    CHECK(bank.empty[2]);
    // Category 1 has a single member: both slots hold it.
    CHECK(bank.prototype(1, 0)[0] == 5.0);
    CHECK(bank.prototype(1, 1)[1] == 5.0);
}

TEST_CASE("similarity examples") {
    PrototypeBank bank;
    bank.prototypes = Tensor({1, 2, 2});
    bank.prototypes.at(0, 0, 0) = 1.0;
    bank.prototypes.at(0, 1, 0) = -3.0;
    bank.counts = {{1, 1}};
    bank.empty = {false};
    const SimilarityRecord same = prototype_similarity({Tensor::matrix(1, 2, {2, 0})}, bank);
    CHECK(same.similarities.at(0, 0) == 1.0);
    const SimilarityRecord orth = prototype_similarity({Tensor::matrix(1, 2, {0, 4})}, bank);
    CHECK(orth.mean[0] == 0.0);
    bank.empty = {true};
    CHECK_FALSE(prototype_similarity({Tensor::matrix(1, 2, {2, 0})}, bank).present[0]);
}

TEST_CASE("similarity matches a brute-force cosine loop") {
    std::mt19937_64 r(5);
    for (int t = 0; t < 50; ++t) {
        const std::size_t C = 1 + r() % 6, K = 1 + r() % 4, D = 1 + r() % 5;
        const PrototypeBank bank = random_bank(C, K, D, r);
        const CategoryFeatures f{random_tensor({C, D}, r)};
        const SimilarityRecord s = prototype_similarity(f, bank);
        for (std::size_t c = 0; c < C; ++c) {
            std::vector<double> fc(f.row(c).begin(), f.row(c).end());
            double mean = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                std::vector<double> pk(bank.prototype(c, k).begin(), bank.prototype(c, k).end());
                const double cs = oracle::cosine(fc, pk);
                CHECK(std::abs(s.similarities.at(c, k) - cs) < 1e-12);
                CHECK(std::abs(s.similarities.at(c, k)) <= 1.0);
                mean += cs;
            }
            CHECK(std::abs(s.mean[c] - mean / K) < 1e-12);
        }
    }
}

TEST_CASE("cross pseudo labels") {
    SimilarityRecord s{Tensor({3, 1}), {0.9, 0.95, 0.99}, {true, true, false}};
    CHECK(generate_cross_pseudo_labels(s, {0, 1, 0}, 0.8) == LabelVector{1, 0, 0});
    SimilarityRecord top{Tensor({2, 1}), {1.0, 1.0}, {true, true}};
    CHECK(generate_cross_pseudo_labels(top, {0, 0}, 1.0 + 1e-12) == LabelVector{0, 0});
}

TEST_CASE("ranking loss examples") {
    const std::vector<CategoryFeatures> same = {{Tensor::matrix(1, 2, {1, 2})}, {Tensor::matrix(1, 2, {1, 2})}};
    const std::vector<CategoryFeatures> opposite = {{Tensor::matrix(1, 2, {1, 2})}, {Tensor::matrix(1, 2, {-1, -2})}};
    const std::vector<CategoryFeatures> orth = {{Tensor::matrix(1, 2, {1, 0})}, {Tensor::matrix(1, 2, {0, 3})}};
    const std::vector<LabelVector> pos = {{1}, {1}}, mixed = {{1}, {-1}}, unknown = {{1}, {0}};
    CHECK(ranking_loss(same, pos).value == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(ranking_loss(opposite, pos).value == doctest::Approx(2.0));
    CHECK(ranking_loss(orth, mixed).value == doctest::Approx(1.0));
    CHECK_FALSE(ranking_loss(same, unknown).has_terms);
}

TEST_CASE("ranking loss graph op matches the direct value") {
    std::mt19937_64 r(6);
    const std::size_t B = 4, C = 3, D = 5;
    std::vector<CategoryFeatures> feats;
    std::vector<LabelVector> labels;
    Tensor flat({B * C, D});
    for (std::size_t b = 0; b < B; ++b) {
        feats.push_back({random_tensor({C, D}, r)});
        labels.push_back(oracle::random_labels(C, r));
        std::copy_n(feats.back().values.data(), C * D, flat.data() + b * C * D);
    }
    labels[0][0] = labels[1][0] = 1;
    Graph g;
    std::size_t count = 0;
    const NodeId loss = ops::ranking_loss(g, g.parameter(flat), B, labels, &count);
    CHECK(count > 0);
    CHECK(g.value(loss).item() == doctest::Approx(ranking_loss(feats, labels).value).epsilon(1e-13));
}

TEST_CASE("prototype file round trip") {
    test_util::TempDir dir;
    std::mt19937_64 r(7);
    PrototypeBank bank = random_bank(3, 2, 4, r);
    bank.empty[1] = true;
    save_prototypes(bank, dir / "p.jsonl");
    const PrototypeBank back = load_prototypes(dir / "p.jsonl");
    CHECK(back.prototypes == bank.prototypes);
    CHECK(back.empty == bank.empty);
    CHECK(back.counts == bank.counts);
}

}

TEST_SUITE("dtl") {

TEST_CASE("threshold differences: examples and masking") {
    CooccurrenceMatrix m{Tensor({2, 2}, 0.0)};
    m.values.at(0, 1) = 0.25;
    m.values.at(1, 0) = 0.7;
    const SimilarityRecord s{Tensor({2, 1}), {0.4, 0.6}, {true, true}};
    ThresholdPair th;
    th.theta_intra = 0.25;
    th.theta_cross = 0.5;
    const ThresholdDifferences d = threshold_differences(m, s, {-1, 1}, th);
    CHECK(d.intra[0] == 0.0);
    CHECK(d.cross[1] == doctest::Approx(0.1));
    const ThresholdDifferences u = threshold_differences(m, s, {0, 0}, th);
    CHECK(u.intra == std::vector<double>{0, 0});
    CHECK(u.cross == std::vector<double>{0, 0});
}

TEST_CASE("threshold differences match the direct formula") {
    std::mt19937_64 r(8);
    for (int t = 0; t < 200; ++t) {
        const std::size_t C = 1 + r() % 8;
        const CooccurrenceMatrix m = test_util::random_cooc(C, r);
        SimilarityRecord s{Tensor({C, 1}), oracle::random_vector(C, r), std::vector<bool>(C)};
        for (std::size_t c = 0; c < C; ++c) s.present[c] = r() % 4 != 0;
        const LabelVector y = oracle::random_labels(C, r);
        ThresholdPair th;
        th.theta_intra = std::uniform_real_distribution<double>(0, 2)(r);
        th.theta_cross = std::uniform_real_distribution<double>(-1, 1)(r);
        oracle::Matrix p(C, std::vector<double>(C));
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = 0; j < C; ++j) p[i][j] = m.at(i, j);
        const auto want = oracle::differences(p, s.mean, s.present, y, th.theta_intra, th.theta_cross);
        const ThresholdDifferences got = threshold_differences(m, s, y, th);
        CHECK(got.intra == want.intra);
        CHECK(got.cross == want.cross);
    }
}

TEST_CASE("dtl loss examples") {
    const double zero[] = {0.0};
    CHECK(dtl_loss(zero, {1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(dtl_loss(zero, {-1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const double big[] = {10.0};
    CHECK(dtl_loss(big, {1}) < 1e-6);
    CHECK(dtl_loss(zero, {0}) == 0.0);
}

TEST_CASE("dtl gradient pushes theta down for a known positive below threshold") {
    Graph g;
    const NodeId evidence = g.constant(Tensor::matrix(1, 2, {0.2, 0.0}));
    const NodeId theta = g.parameter(Tensor::scalar(0.5));
    const NodeId d = ops::threshold_differences(g, evidence, theta, {1, 0});
    const NodeId loss = ops::dtl_loss(g, d, {1, 0});
    const double grad = g.backward(loss).at(theta).item();
    CHECK(grad > 0.0);  // gradient descent lowers theta
    auto value_at = [&](double th) {
        g.set_value(theta, Tensor::scalar(th));
        return g.forward(loss).item();
    };
    CHECK(value_at(0.5 - 1e-5) < value_at(0.5 + 1e-5));
}

TEST_CASE("step_thresholds: zero gradient, clamping") {
    ThresholdPair th;
    th.theta_intra = 0.3;
    th.theta_cross = 0.7;
    step_thresholds(th, {0.0, 0.0}, 0.1);
    CHECK(th.theta_intra == 0.3);
    CHECK(th.theta_cross == 0.7);
    th.theta_cross = 0.99;
    step_thresholds(th, {0.0, -1.0}, 0.5);
    CHECK(th.theta_cross == 1.0);
    th.theta_intra = 0.01;
    step_thresholds(th, {5.0, 0.0}, 0.5);
    CHECK(th.theta_intra == 0.0);
}

TEST_CASE("learned threshold converges into the separating margin") {
    // Positives carry evidence above a = 0.7, negatives below b = 0.4.
    std::mt19937_64 r(9);
    ThresholdPair th;
    th.theta_intra = 1.5;
    std::uniform_real_distribution<double> hi(0.7, 1.2), lo(0.0, 0.4);
    for (int it = 0; it < 3000; ++it) {
        Tensor ev({8, 1});
        std::vector<int> labels(8);
        for (std::size_t n = 0; n < 8; ++n) {
            labels[n] = n % 2 ? 1 : -1;
            ev[n] = labels[n] == 1 ? hi(r) : lo(r);
        }
        Graph g;
        const NodeId theta = g.parameter(Tensor::scalar(th.theta_intra));
        const NodeId d = ops::threshold_differences(g, g.constant(ev), theta, std::vector<int>(8, 1));
        const NodeId loss = ops::dtl_loss(g, d, labels, 20.0);
        step_thresholds(th, {g.backward(loss).at(theta).item(), 0.0}, 0.01);
    }
    CHECK(th.theta_intra > 0.4);
    CHECK(th.theta_intra < 0.7);
}

}
