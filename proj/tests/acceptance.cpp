// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero when any selected criterion fails.
//
//   acceptance [--criterion N]...

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "hst/experiment.hpp"
#include "hst/grad_check.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#ifndef HST_BINARY
#error "HST_BINARY must name the hst executable"
#endif

using namespace hst;
using test_util::random_tensor;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

// ---------------------------------------------------------------- criterion 1

// Smallest distance of any input to a point where the graph is not smooth:
// ReLU at 0 and the asymmetric-loss margin. Instances closer than the
// tolerance are redrawn.
double kink_distance(const Graph& g, NodeId loss, double margin) {
    double best = INFINITY;
    for (NodeId id = 0; id <= loss; ++id) {
        const std::string_view op = g.op_name(id);
        if (op == "relu") {
            for (double v : g.value(g.inputs(id)[0]).values()) best = std::min(best, std::abs(v));
        } else if (op == "asymmetric_pair_loss") {
            for (double v : g.value(g.inputs(id)[0]).values()) best = std::min(best, std::abs(v - margin));
        }
    }
    return best;
}

struct GradFamily {
    std::string name;
    std::size_t instances = 0;
    std::size_t redraws = 0;
    double worst = 0.0;
};

Outcome criterion_gradients() {
    const auto start = Clock::now();
    std::mt19937_64 rng(101);
    std::vector<GradFamily> families;
    const AsymmetricLossConfig asym;

    // build(g, rng) returns the scalar loss node.
    auto family = [&](const std::string& name, std::size_t count,
                      const std::function<NodeId(Graph&, std::mt19937_64&)>& build) {
        GradFamily f{name};
        while (f.instances < count) {
            Graph g;
            const NodeId loss = build(g, rng);
            if (kink_distance(g, loss, asym.margin) < 1e-4) {
                ++f.redraws;
                continue;
            }
            const GradCheckReport r = grad_check(g, loss, {.tolerance = 1e-4, .step = 1e-5});
            f.worst = std::max(f.worst, r.max_relative_error);
            ++f.instances;
        }
        families.push_back(f);
    };
    auto uniform = [](std::mt19937_64& r, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(r); };
    auto dim = [](std::mt19937_64& r, std::size_t lo, std::size_t hi) { return lo + r() % (hi - lo + 1); };
    // Random projection to a scalar so every output element matters.
    auto project = [](Graph& g, NodeId x, std::mt19937_64& r) {
        return ops::weighted_sum(g, x, random_tensor(g.value(x).shape(), r));
    };

    family("matmul", 8, [&](Graph& g, std::mt19937_64& r) {
        const std::size_t m = dim(r, 1, 4), k = dim(r, 1, 4), n = dim(r, 1, 4);
        return project(g, ops::matmul(g, g.parameter(random_tensor({m, k}, r)), g.parameter(random_tensor({k, n}, r))), r);
    });
    family("batch_matmul", 8, [&](Graph& g, std::mt19937_64& r) {
        const std::size_t b = dim(r, 1, 3), m = dim(r, 1, 3), k = dim(r, 1, 3), n = dim(r, 1, 3);
        const bool t = r() % 2;
        const NodeId a = g.parameter(random_tensor({b, m, k}, r));
        const NodeId c = g.parameter(random_tensor(t ? Shape{b, n, k} : Shape{b, k, n}, r));
        return project(g, ops::batch_matmul(g, a, c, t), r);
    });
    family("transpose/swap/reshape/slice/repeat", 8, [&](Graph& g, std::mt19937_64& r) {
        const NodeId a = g.parameter(random_tensor({2, 3, 4}, r));
        const NodeId s = ops::swap_leading(g, a);
        const NodeId m = ops::reshape(g, s, {6, 4});
        const NodeId t = ops::transpose(g, ops::slice_rows(g, m, 1, 4));
        return project(g, ops::repeat_batch(g, t, 2), r);
    });
    family("add/sub/mul/add_bias/scale/add_constant", 8, [&](Graph& g, std::mt19937_64& r) {
        const NodeId a = g.parameter(random_tensor({3, 4}, r));
        const NodeId b = g.parameter(random_tensor({3, 4}, r));
        const NodeId bias = g.parameter(random_tensor({4}, r));
        const NodeId x = ops::mul(g, ops::add(g, a, b), ops::sub(g, a, b));
        return project(g, ops::add_constant(g, ops::scale(g, ops::add_bias(g, x, bias), 1.7), 0.3), r);
    });
    family("broadcast_scalar", 8, [&](Graph& g, std::mt19937_64& r) {
        const NodeId s = g.parameter(Tensor::scalar(uniform(r, -1, 1)));
        return project(g, ops::mul(g, ops::broadcast_scalar(g, s, {2, 3}), g.parameter(random_tensor({2, 3}, r))), r);
    });
    family("relu", 8, [&](Graph& g, std::mt19937_64& r) {
        return project(g, ops::relu(g, g.parameter(random_tensor({4, 5}, r))), r);
    });
    family("sigmoid/log", 8, [&](Graph& g, std::mt19937_64& r) {
        const NodeId p = ops::sigmoid(g, g.parameter(random_tensor({3, 4}, r, -3, 3)));
        return project(g, ops::log(g, p), r);
    });
    family("softmax", 8, [&](Graph& g, std::mt19937_64& r) {
        return project(g, ops::softmax(g, g.parameter(random_tensor({3, 5}, r, -2, 2))), r);
    });
    family("sum/mean/sum_last", 8, [&](Graph& g, std::mt19937_64& r) {
        const NodeId a = g.parameter(random_tensor({2, 3, 4}, r));
        const NodeId s = project(g, ops::sum_last(g, a), r);
        return ops::add(g, ops::add(g, ops::sum(g, ops::mul(g, a, a)), ops::mean(g, a)), s);
    });
    family("normalize_rows", 8, [&](Graph& g, std::mt19937_64& r) {
        return project(g, ops::normalize_rows(g, g.parameter(random_tensor({3, 4}, r))), r);
    });
    family("cosine", 8, [&](Graph& g, std::mt19937_64& r) {
        const NodeId a = g.parameter(random_tensor({4, 3}, r));
        return project(g, ops::cosine(g, a, g.parameter(random_tensor({4, 3}, r))), r);
    });
    family("pair_sum", 8, [&](Graph& g, std::mt19937_64& r) {
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (int p = 0; p < 6; ++p) pairs.emplace_back(r() % 3, r() % 4);
        const NodeId u = g.parameter(random_tensor({3, 2}, r));
        return project(g, ops::pair_sum(g, u, g.parameter(random_tensor({4, 2}, r)), pairs), r);
    });
    family("partial_bce", 10, [&](Graph& g, std::mt19937_64& r) {
        const std::size_t B = dim(r, 1, 4), C = dim(r, 2, 6);
        std::vector<int> y(B * C);
        for (int& v : y) v = static_cast<int>(r() % 3) - 1;
        y[0] = 1;
        return ops::partial_bce(g, ops::sigmoid(g, g.parameter(random_tensor({B, C}, r, -3, 3))), y);
    });
    family("asymmetric_pair_loss", 10, [&](Graph& g, std::mt19937_64& r) {
        const std::size_t P = dim(r, 2, 12);
        std::vector<int> t(P);
        for (int& v : t) v = static_cast<int>(r() % 3) - 1;
        t[0] = 1;
        t[1] = -1;
        return ops::asymmetric_pair_loss(g, ops::sigmoid(g, g.parameter(random_tensor({P}, r, -3, 3))), t, asym);
    });
    family("ranking_loss", 10, [&](Graph& g, std::mt19937_64& r) {
        const std::size_t B = dim(r, 2, 4), C = dim(r, 1, 4), D = dim(r, 2, 5);
        std::vector<LabelVector> labels(B);
        for (auto& y : labels) y = oracle::random_labels(C, r);
        labels[0][0] = labels[1][0] = 1;
        return ops::ranking_loss(g, g.parameter(random_tensor({B * C, D}, r)), B, labels);
    });
    family("threshold_differences + dtl_loss", 10, [&](Graph& g, std::mt19937_64& r) {
        const std::size_t B = dim(r, 1, 4), C = dim(r, 2, 6);
        std::vector<int> y(B * C);
        for (int& v : y) v = static_cast<int>(r() % 3) - 1;
        y[0] = -1;
        const NodeId ev = g.parameter(random_tensor({B, C}, r, 0, 2));
        const NodeId theta = g.parameter(Tensor::scalar(uniform(r, 0, 1.5)));
        return ops::dtl_loss(g, ops::threshold_differences(g, ev, theta, y), y);
    });
    family("sarl_forward + pair network", 8, [&](Graph& g, std::mt19937_64& r) {
        Rng init(r());
        const SarlParams sp = SarlParams::init(3, 4, 4, init);
        const IstParams ip = IstParams::init(4, 4, 4, init);
        const SarlNodes sn = bind_sarl(g, sp, true);
        const IstNodes in = bind_ist(g, ip, true);
        const SarlOutput out = sarl_forward(g, sn, g.constant(random_tensor({2, 3, 4}, r)));
        const NodeId pp = pair_probabilities(g, in, out.features, {{0, 1}, {2, 1}, {3, 5}, {4, 3}});
        return ops::add(g, project(g, out.probabilities, r), project(g, pp, r));
    });

    // Composite objective: every mode, in and after warmup.
    {
        GradFamily f{"total_loss"};
        PlantedOptions po;
        po.categories = 5;
        po.samples = 24;
        po.regions = 3;
        po.feature_dim = 4;
        const Dataset full = generate(planted_config(po));
        std::uint64_t s = 0;
        while (f.instances < 12) {
            ++s;
            const Dataset ds = drop_labels(full, 0.6, s);
            TrainConfig c;
            c.epochs = 4;
            c.warmup_epochs = 1;
            c.batch_size = 6;
            c.learning_rate = 1e-2;
            c.hidden_dim = 4;
            c.ist_hidden1 = 4;
            c.ist_hidden2 = 4;
            c.prototypes = 2;
            c.seed = s;
            c.mode = static_cast<Mode>(s % 4);
            c.theta_intra = 0.3;
            c.theta_cross = 0.0;
            TrainState state = init_state(ds.categories, ds.feature_dim, c);
            for (std::size_t e = 0; e < s % 3; ++e) run_epoch(state, ds);
            std::vector<const Sample*> batch;
            for (std::size_t i = 0; i < 6; ++i) batch.push_back(&ds.samples[i]);
            BatchLoss loss = total_loss(state, batch);
            if (kink_distance(loss.graph, loss.total, c.asymmetric.margin) < 1e-4) {
                ++f.redraws;
                continue;
            }
            const GradCheckReport r = grad_check(loss.graph, loss.total, {.tolerance = 1e-4, .step = 1e-5});
            f.worst = std::max(f.worst, r.max_relative_error);
            ++f.instances;
        }
        families.push_back(f);
    }

    std::size_t total = 0, redraws = 0;
    double worst = 0.0;
    std::string worst_name;
    for (const GradFamily& f : families) {
        total += f.instances;
        redraws += f.redraws;
        if (f.worst >= worst) worst = f.worst, worst_name = f.name;
        std::printf("    %-42s instances=%zu redrawn=%zu max_rel_err=%.3e\n", f.name.c_str(), f.instances, f.redraws,
                    f.worst);
    }
    const double secs = seconds_since(start);
    return {worst < 1e-4 && total >= 100 && secs < 60.0,
            fmt("%zu instances (%zu redrawn near a kink), max relative error %.3e (%s), %.1f s", total, redraws, worst,
                worst_name.c_str(), secs)};
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion_oracles() {
    const auto start = Clock::now();
    std::mt19937_64 r(202);
    std::map<std::string, std::size_t> mismatches;
    const int trials = 1000;
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(r); };

    for (int t = 0; t < trials; ++t) {
        const std::size_t C = 1 + r() % 8;
        const CooccurrenceMatrix cooc = test_util::random_cooc(C, r);
        oracle::Matrix p(C, std::vector<double>(C));
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = 0; j < C; ++j) p[i][j] = cooc.at(i, j);
        const LabelVector y = oracle::random_labels(C, r);

        const double theta_intra = uniform(0.0, 2.0);
        if (generate_intra_pseudo_labels(cooc, y, theta_intra) != oracle::intra_pseudo(p, y, theta_intra))
            ++mismatches["intra pseudo labels"];

        const std::size_t K = 1 + r() % 4, D = 1 + r() % 6;
        PrototypeBank bank;
        bank.prototypes = random_tensor({C, K, D}, r);
        bank.counts.assign(C, std::vector<std::size_t>(K, 1));
        bank.empty.assign(C, false);
        for (std::size_t c = 0; c < C; ++c) bank.empty[c] = r() % 5 == 0;
        const CategoryFeatures f{random_tensor({C, D}, r)};
        oracle::Matrix fm(C);
        std::vector<oracle::Matrix> protos(C);
        std::vector<bool> present(C);
        for (std::size_t c = 0; c < C; ++c) {
            fm[c].assign(f.row(c).begin(), f.row(c).end());
            for (std::size_t k = 0; k < K; ++k) protos[c].emplace_back(bank.prototype(c, k).begin(), bank.prototype(c, k).end());
            present[c] = !bank.empty[c];
        }
        const SimilarityRecord sim = prototype_similarity(f, bank);
        const std::vector<double> mean = oracle::mean_similarity(fm, protos);
        const double theta_cross = uniform(-1.0, 1.0);
        if (generate_cross_pseudo_labels(sim, y, theta_cross) != oracle::cross_pseudo(mean, present, y, theta_cross))
            ++mismatches["cross pseudo labels"];

        ThresholdPair th;
        th.theta_intra = uniform(0.0, 2.0);
        th.theta_cross = uniform(-1.0, 1.0);
        const ThresholdDifferences d = threshold_differences(cooc, sim, y, th);
        const auto want = oracle::differences(p, sim.mean, present, y, th.theta_intra, th.theta_cross);
        if (d.intra != want.intra || d.cross != want.cross) ++mismatches["threshold differences"];

        const std::size_t N = 1 + r() % 50;
        std::vector<double> scores(N);
        std::vector<int> truths(N);
        for (std::size_t n = 0; n < N; ++n) {
            // Coarse scores so ties occur.
            scores[n] = std::floor(uniform(0.0, 1.0) * 8.0) / 8.0;
            truths[n] = r() % 3 == 0 ? 1 : -1;
        }
        if (average_precision(scores, truths) != oracle::average_precision(scores, truths))
            ++mismatches["average precision"];

        std::vector<std::vector<double>> probs(N);
        std::vector<LabelVector> labels(N);
        for (std::size_t n = 0; n < N; ++n) {
            probs[n] = oracle::random_vector(C, r, 0.0, 1.0);
            labels[n].resize(C);
            for (int& v : labels[n]) v = r() % 2 ? 1 : -1;
        }
        const F1Scores got = f1_measures(probs, labels);
        const oracle::F1 want_f1 = oracle::f1_measures(probs, labels);
        if (got.overall != want_f1.overall || got.per_class != want_f1.per_class) ++mismatches["f1 measures"];
    }
    std::size_t total = 0;
    std::string detail;
    for (const char* name :
         {"intra pseudo labels", "cross pseudo labels", "threshold differences", "average precision", "f1 measures"}) {
        total += mismatches[name];
        detail += fmt("%s %zu/%d, ", name, mismatches[name], trials);
    }
    const double secs = seconds_since(start);
    return {total == 0 && secs < 60.0, "mismatches: " + detail + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion_identities() {
    std::mt19937_64 r(303);
    double bce_err = 0.0, asym_err = 0.0, sum_err = 0.0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t C = 1 + r() % 10;
        std::vector<double> p = oracle::random_vector(C, r, 0.0, 1.0);
        std::vector<int> y(C), t01(C);
        for (std::size_t c = 0; c < C; ++c) {
            y[c] = r() % 2 ? 1 : -1;
            t01[c] = y[c] == 1;
        }
        bce_err = std::max(bce_err, std::abs(partial_bce(p, y) - oracle::mean_bce(p, t01)));

        const std::size_t M = 2 + r() % 7;
        const CooccurrenceMatrix cooc = test_util::random_cooc(M, r);
        LabelVector lab = oracle::random_labels(M, r);
        lab[0] = 1;
        lab[1] = r() % 2 ? 1 : -1;
        std::vector<double> pp;
        std::vector<int> tt;
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < M; ++j)
                if (i != j && lab[i] != 0 && lab[j] != 0) {
                    pp.push_back(cooc.at(i, j));
                    tt.push_back(lab[i] == 1 && lab[j] == 1);
                }
        asym_err = std::max(asym_err, std::abs(asymmetric_loss(cooc, lab, {0.0, 0.0, 0.0}).value - oracle::mean_bce(pp, tt)));
    }

    PlantedOptions po;
    po.categories = 8;
    po.samples = 96;
    po.regions = 4;
    po.feature_dim = 6;
    const Dataset full = generate(planted_config(po));
    std::size_t checked = 0;
    for (Mode mode : {Mode::baseline, Mode::ist_only, Mode::cst_only, Mode::full}) {
        const Dataset ds = drop_labels(full, 0.4, 5);
        TrainConfig c;
        c.epochs = 4;
        c.warmup_epochs = 1;
        c.learning_rate = 1e-2;
        c.hidden_dim = 8;
        c.ist_hidden1 = 8;
        c.ist_hidden2 = 8;
        c.prototypes = 3;
        c.mode = mode;
        TrainState state = init_state(ds.categories, ds.feature_dim, c);
        for (std::size_t e = 0; e < 3; ++e) {
            for (std::size_t b = 0; b + 16 <= ds.size(); b += 16) {
                std::vector<const Sample*> batch;
                for (std::size_t i = b; i < b + 16; ++i) batch.push_back(&ds.samples[i]);
                const BatchLoss loss = total_loss(state, batch);
                sum_err = std::max(sum_err, std::abs(loss.breakdown.component_sum() - loss.breakdown.total));
                ++checked;
            }
            run_epoch(state, ds);
        }
    }
    return {bce_err <= 1e-12 && asym_err <= 1e-12 && sum_err <= 1e-9,
            fmt("partial BCE vs mean BCE %.2e (500 inst.), asymmetric(0,0,0) vs pairwise BCE %.2e (500 inst.), "
                "breakdown sum vs total %.2e (%zu batches)",
                bce_err, asym_err, sum_err, checked)};
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion_kmeans() {
    std::mt19937_64 r(404);
    std::size_t increases = 0, runs = 0;
    double mean_err = 0.0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + r() % 60, d = 1 + r() % 6, k = 1 + r() % std::min<std::size_t>(n, 8);
        const Tensor pts = random_tensor({n, d}, r, -3, 3);
        Rng rng = make_rng(t);
        const KMeansResult km = kmeans(pts, k, rng);
        for (std::size_t i = 1; i < km.objective.size(); ++i) increases += km.objective[i] > km.objective[i - 1];
        ++runs;
        Rng rng1 = make_rng(t, 1);
        const KMeansResult one = kmeans(pts, 1, rng1);
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += pts.at(i, j);
            mean_err = std::max(mean_err, std::abs(one.centroids.at(0, j) - m / static_cast<double>(n)));
        }
    }

    std::size_t recovered = 0;
    const double sigma = 0.5;
    for (int t = 0; t < 100; ++t) {
        std::mt19937_64 g(mix_seed(4040, t));
        const std::size_t d = 4, per = 40;
        Tensor centers = random_tensor({2, d}, g, -1, 1);
        // Separate the planted centers by 10 sigma.
        for (std::size_t j = 0; j < d; ++j) centers.at(1, j) = centers.at(0, j) + (j == 0 ? 10.0 * sigma : 0.0);
        Tensor pts({2 * per, d});
        std::normal_distribution<double> noise(0.0, sigma);
        for (std::size_t i = 0; i < 2 * per; ++i)
            for (std::size_t j = 0; j < d; ++j) pts.at(i, j) = centers.at(i / per, j) + noise(g);
        Rng rng = make_rng(t, 2);
        const KMeansResult km = kmeans(pts, 2, rng);
        bool ok = true;
        for (std::size_t c = 0; c < 2; ++c) {
            double best = INFINITY;
            for (std::size_t k = 0; k < 2; ++k) {
                double dist = 0.0;
                for (std::size_t j = 0; j < d; ++j) dist += std::pow(km.centroids.at(k, j) - centers.at(c, j), 2);
                best = std::min(best, std::sqrt(dist));
            }
            ok &= best <= 3.0 * sigma;
        }
        recovered += ok;
    }
    return {increases == 0 && mean_err <= 1e-10 && recovered >= 95,
            fmt("objective increases %zu over %zu runs, K=1 mean error %.2e, planted recovery %zu/100", increases, runs,
                mean_err, recovered)};
}

// ------------------------------------------------------------ criteria 5, 6

std::optional<double> cell_median(const AblationCell& cell) { return cell.median(); }

Outcome criterion_modes() {
    const auto start = Clock::now();
    const Dataset full = generate(planted_config(benchmark_data_options()));
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    const AblationReport report = run_ablation(full, Grid::modes, {0.1}, seeds, benchmark_train_config(), 0.2);
    std::printf("%s", ablation_markdown(report).c_str());
    std::map<std::string, double> med;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto m = cell_median(report.cells[i][0]);
        med[report.rows[i]] = m ? *m * 100.0 : -INFINITY;
    }
    const double secs = seconds_since(start);
    const double gain = med["full"] - med["baseline"];
    const bool ok = gain >= 2.0 && med["ist-only"] >= med["baseline"] && med["cst-only"] >= med["baseline"] && secs < 600.0;
    return {ok, fmt("median mAP at 10%% known: baseline %.2f, ist-only %.2f, cst-only %.2f, full %.2f "
                    "(full - baseline %+.2f), %.0f s",
                    med["baseline"], med["ist-only"], med["cst-only"], med["full"], gain, secs)};
}

Outcome criterion_thresholds() {
    const auto start = Clock::now();
    const Dataset full = generate(planted_config(benchmark_data_options()));
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    const AblationReport report =
        run_ablation(full, Grid::thresholds, {0.1, 0.5}, seeds, benchmark_train_config(), 0.2);
    std::printf("%s", ablation_markdown(report).c_str());
    bool ok = true;
    std::string detail;
    for (std::size_t k = 0; k < report.known.size(); ++k) {
        double best = -INFINITY, dtl = -INFINITY;
        std::string best_row;
        for (std::size_t i = 0; i < report.rows.size(); ++i) {
            const auto m = cell_median(report.cells[i][k]);
            const double v = m ? *m * 100.0 : -INFINITY;
            if (report.rows[i] == "dtl") {
                dtl = v;
            } else if (v > best) {
                best = v;
                best_row = report.rows[i];
            }
        }
        ok &= dtl >= best - 1.0;
        detail += fmt("%.0f%% known: dtl %.2f vs best fixed %.2f (%s); ", report.known[k] * 100.0, dtl, best,
                      best_row.c_str());
    }
    const double secs = seconds_since(start);
    ok &= secs < 1800.0;
    return {ok, detail + fmt("%.0f s", secs)};
}

// ---------------------------------------------------------------- criterion 7

Outcome criterion_invariants() {
    std::mt19937_64 r(707);
    std::size_t known_violations = 0, monotone_violations = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t C = 1 + r() % 8;
        const CooccurrenceMatrix cooc = test_util::random_cooc(C, r);
        const LabelVector y = oracle::random_labels(C, r);
        SimilarityRecord sim{Tensor({C, 1}), oracle::random_vector(C, r), std::vector<bool>(C, true)};
        for (std::size_t c = 0; c < C; ++c) sim.present[c] = r() % 5 != 0;
        double lo = std::uniform_real_distribution<double>(0, 2)(r), hi = std::uniform_real_distribution<double>(0, 2)(r);
        if (lo > hi) std::swap(lo, hi);
        double clo = std::uniform_real_distribution<double>(-1, 1)(r), chi = std::uniform_real_distribution<double>(-1, 1)(r);
        if (clo > chi) std::swap(clo, chi);
        const LabelVector a = generate_intra_pseudo_labels(cooc, y, lo), b = generate_intra_pseudo_labels(cooc, y, hi);
        const LabelVector ca = generate_cross_pseudo_labels(sim, y, clo), cb = generate_cross_pseudo_labels(sim, y, chi);
        for (std::size_t c = 0; c < C; ++c) {
            if (y[c] != 0 && (a[c] || b[c] || ca[c] || cb[c])) ++known_violations;
            // Pointwise: anything emitted at the higher threshold is emitted at the lower one.
            if ((b[c] && !a[c]) || (cb[c] && !ca[c])) ++monotone_violations;
        }
    }

    // Training-time behaviour on planted data.
    PlantedOptions po;
    po.categories = 10;
    po.samples = 300;
    po.regions = 6;
    po.feature_dim = 12;
    po.center_norm = 5.0;
    const Dataset full = generate(planted_config(po));
    const Dataset ds = drop_labels(full, 0.3, 3);
    const auto truth = labels_of(full);
    TrainConfig c;
    c.epochs = 6;
    c.warmup_epochs = 3;
    c.learning_rate = 1e-2;
    c.hidden_dim = 12;
    c.ist_hidden1 = 12;
    c.ist_hidden2 = 12;
    c.prototypes = 3;
    c.theta_intra = 0.0;  // would emit everywhere if not suppressed
    c.theta_cross = -1.0;
    c.learn_thresholds = false;
    TrainState state = init_state(ds.categories, ds.feature_dim, c);
    std::size_t warmup_emitted = 0, post_emitted = 0, batch_known_violations = 0;
    std::vector<const Sample*> batch;
    for (std::size_t i = 0; i < 32; ++i) batch.push_back(&ds.samples[i]);
    while (state.epoch < c.epochs) {
        const BatchLoss probe = total_loss(state, batch);
        for (std::size_t n = 0; n < batch.size(); ++n) {
            for (std::size_t k = 0; k < ds.categories; ++k) {
                const int intra = probe.intra_pseudo.empty() ? 0 : probe.intra_pseudo[n][k];
                const int cross = probe.cross_pseudo.empty() ? 0 : probe.cross_pseudo[n][k];
                if (state.in_warmup()) warmup_emitted += intra + cross;
                if (batch[n]->labels[k] != 0 && (intra || cross)) ++batch_known_violations;
            }
        }
        run_epoch(state, ds, {truth, nullptr});
        const EpochRecord& rec = state.history.back();
        if (rec.epoch <= c.warmup_epochs) warmup_emitted += rec.intra.emitted + rec.cross.emitted;
        else post_emitted += rec.intra.emitted + rec.cross.emitted;
    }
    const bool ok = known_violations == 0 && monotone_violations == 0 && warmup_emitted == 0 &&
                    batch_known_violations == 0 && post_emitted > 0;
    return {ok, fmt("1000 instances: known-position emissions %zu, monotonicity violations %zu; training: warmup "
                    "emissions %zu, post-warmup emissions %zu, emissions at known positions %zu",
                    known_violations, monotone_violations, warmup_emitted, post_emitted, batch_known_violations)};
}

// ---------------------------------------------------------------- criterion 8

int run_cli(const std::string& args, const std::filesystem::path& cwd) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" HST_BINARY "' " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Every regular file except the manifest (which records wall-clock time).
bool same_outputs(const std::filesystem::path& a, const std::filesystem::path& b, std::string& why) {
    std::size_t compared = 0;
    for (const auto& entry : std::filesystem::directory_iterator(a)) {
        const std::string name = entry.path().filename().string();
        if (!entry.is_regular_file() || name == "manifest.json") continue;
        if (test_util::read_file(entry.path()) != test_util::read_file(b / name)) {
            why = a.filename().string() + "/" + name + " differs";
            return false;
        }
        ++compared;
    }
    if (compared == 0) {
        why = "no outputs in " + a.string();
        return false;
    }
    return true;
}

Outcome criterion_reproducibility() {
    // Bit-identical training logs.
    const Dataset full = generate(planted_config(benchmark_data_options(11)));
    TrainConfig c = benchmark_train_config();
    c.epochs = 8;
    c.warmup_epochs = 2;
    const RunResult a = run_experiment(full, 0.3, 0.2, c, 3), b = run_experiment(full, 0.3, 0.2, c, 3);
    const bool logs = history_csv(a.history) == history_csv(b.history);

    // Dataset round trip.
    test_util::TempDir dir;
    save_dataset(drop_labels(full, 0.4, 2), dir / "a.jsonl");
    save_dataset(load_dataset(dir / "a.jsonl"), dir / "b.jsonl");
    const bool round_trip = test_util::read_file(dir / "a.jsonl") == test_util::read_file(dir / "b.jsonl");

    // Rerun every command from its manifest.
    const std::string small =
        " --epochs 4 --warmup-epochs 1 --learning-rate 0.01 --hidden-dim 8 --ist-hidden1 8 --ist-hidden2 8 "
        "--prototypes 2";
    std::vector<std::string> failures;
    auto step = [&](const std::string& args) {
        if (run_cli(args, dir.path()) != 0) failures.push_back("'" + args.substr(0, 40) + "...' failed");
    };
    step("generate --categories 6 --samples 120 --regions 4 --feature-dim 8 --seed 5 --out gen/ds.jsonl");
    step("train --data gen/ds.jsonl --known 0.5 --seed 2 --out-dir train" + small);
    step("evaluate --checkpoint train/checkpoint.json --data gen/ds.jsonl --out-dir eval");
    step("inspect --checkpoint train/checkpoint.json --data gen/ds.jsonl --sample 3 --out-dir inspect");
    step("ablate --data gen/ds.jsonl --grid prototypes --known 0.5 --seeds 1 --out-dir ablate" + small);
    std::size_t reproduced = 0;
    for (const char* d : {"gen", "train", "eval", "inspect", "ablate"}) {
        const std::string out = std::string(d) == "gen" ? "regen/ds.jsonl" : std::string("re-") + d;
        step("rerun --manifest " + std::string(d) + "/manifest.json --out " + out);
        std::string why;
        const std::filesystem::path again = dir / (std::string(d) == "gen" ? "regen" : "re-" + std::string(d));
        if (std::filesystem::exists(again) && same_outputs(dir / d, again, why)) ++reproduced;
        else failures.push_back(why.empty() ? std::string(d) + " rerun missing" : why);
    }
    std::string detail = fmt("training logs %s, dataset round trip %s, reruns reproduced %zu/5",
                             logs ? "identical" : "differ", round_trip ? "byte-identical" : "differs", reproduced);
    for (const auto& f : failures) detail += "; " + f;
    return {logs && round_trip && reproduced == 5 && failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
        {"gradient integrity", criterion_gradients},
        {"oracle equivalence", criterion_oracles},
        {"loss identities", criterion_identities},
        {"k-means properties", criterion_kmeans},
        {"end-to-end trend", criterion_modes},
        {"learned thresholds competitive", criterion_thresholds},
        {"warmup and masking invariants", criterion_invariants},
        {"reproducibility", criterion_reproducibility},
    };
    std::vector<std::size_t> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) {
            const int n = std::atoi(argv[++i]);
            if (n < 1 || n > static_cast<int>(criteria.size())) {
                std::fprintf(stderr, "criterion must be 1..%zu\n", criteria.size());
                return 2;
            }
            selected.push_back(static_cast<std::size_t>(n));
        } else {
            std::fprintf(stderr, "usage: acceptance [--criterion N]...\n");
            return 2;
        }
    }
    if (selected.empty())
        for (std::size_t n = 1; n <= criteria.size(); ++n) selected.push_back(n);

    bool all = true;
    for (std::size_t n : selected) {
        Outcome o;
        try {
            o = criteria[n - 1].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all &= o.passed;
        std::printf("criterion %zu (%s): %s: %s\n", n, criteria[n - 1].first, o.passed ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
