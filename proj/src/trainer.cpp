#include "hst/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace hst {

namespace {

using json = nlohmann::ordered_json;

constexpr double kDivergenceLimit = 1e6;

std::vector<int> flatten(std::span<const Sample* const> batch) {
    std::vector<int> out;
    for (const Sample* s : batch) out.insert(out.end(), s->labels.begin(), s->labels.end());
    return out;
}

std::vector<int> flatten(const std::vector<LabelVector>& rows) {
    std::vector<int> out;
    for (const LabelVector& r : rows) out.insert(out.end(), r.begin(), r.end());
    return out;
}

struct Term {
    const char* name;
    NodeId node;
    double* slot;
};

}  // namespace

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::baseline: return "baseline";
        case Mode::ist_only: return "ist-only";
        case Mode::cst_only: return "cst-only";
        case Mode::full: return "full";
    }
    return "full";
}

Mode parse_mode(const std::string& text) {
    if (text == "baseline") return Mode::baseline;
    if (text == "ist-only") return Mode::ist_only;
    if (text == "cst-only") return Mode::cst_only;
    if (text == "full") return Mode::full;
    throw std::invalid_argument("unknown mode '" + text + "' (expected baseline, ist-only, cst-only or full)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
    if (epochs == 0) fail("epochs must be positive");
    if (warmup_epochs >= epochs) fail("warmup_epochs must be smaller than epochs");
    if (batch_size == 0) fail("batch_size must be positive");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(threshold_learning_rate >= 0.0)) fail("threshold_learning_rate must be non-negative");
    if (!(lr_decay > 0.0)) fail("lr_decay must be positive");
    if (lr_step_epochs == 0) fail("lr_step_epochs must be positive");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (!(lambda_ist >= 0.0) || !(lambda_cst >= 0.0) || !(lambda_dtl >= 0.0)) fail("loss weights must be non-negative");
    if (prototypes == 0) fail("prototypes must be at least 1");
    if (!(beta > 0.0)) fail("beta must be positive");
    if (hidden_dim == 0 || ist_hidden1 == 0 || ist_hidden2 == 0) fail("layer widths must be positive");
    if (!(theta_intra >= 0.0)) fail("theta_intra must be non-negative");
    if (!(theta_cross >= -1.0 && theta_cross <= 1.0)) fail("theta_cross must lie in [-1, 1]");
    asymmetric.validate();
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
    return learning_rate * std::pow(lr_decay, static_cast<double>(epoch / lr_step_epochs));
}

json TrainConfig::to_json() const {
    json j;
    j["epochs"] = epochs;
    j["warmup_epochs"] = warmup_epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["lr_decay"] = lr_decay;
    j["lr_step_epochs"] = lr_step_epochs;
    j["weight_decay"] = weight_decay;
    j["threshold_learning_rate"] = threshold_learning_rate;
    j["lambda_ist"] = lambda_ist;
    j["lambda_cst"] = lambda_cst;
    j["lambda_dtl"] = lambda_dtl;
    j["prototypes"] = prototypes;
    j["seed"] = seed;
    j["beta"] = beta;
    j["hidden_dim"] = hidden_dim;
    j["ist_hidden1"] = ist_hidden1;
    j["ist_hidden2"] = ist_hidden2;
    j["gamma_positive"] = asymmetric.gamma_positive;
    j["gamma_negative"] = asymmetric.gamma_negative;
    j["margin"] = asymmetric.margin;
    j["mode"] = to_string(mode);
    j["learn_thresholds"] = learn_thresholds;
    j["theta_intra"] = theta_intra;
    j["theta_cross"] = theta_cross;
    j["freeze_features"] = freeze_features;
    return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.warmup_epochs = j.at("warmup_epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.lr_decay = j.at("lr_decay").get<double>();
    c.lr_step_epochs = j.at("lr_step_epochs").get<std::size_t>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.threshold_learning_rate = j.at("threshold_learning_rate").get<double>();
    c.lambda_ist = j.at("lambda_ist").get<double>();
    c.lambda_cst = j.at("lambda_cst").get<double>();
    c.lambda_dtl = j.at("lambda_dtl").get<double>();
    c.prototypes = j.at("prototypes").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.beta = j.at("beta").get<double>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.ist_hidden1 = j.at("ist_hidden1").get<std::size_t>();
    c.ist_hidden2 = j.at("ist_hidden2").get<std::size_t>();
    c.asymmetric.gamma_positive = j.at("gamma_positive").get<double>();
    c.asymmetric.gamma_negative = j.at("gamma_negative").get<double>();
    c.asymmetric.margin = j.at("margin").get<double>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.learn_thresholds = j.at("learn_thresholds").get<bool>();
    c.theta_intra = j.at("theta_intra").get<double>();
    c.theta_cross = j.at("theta_cross").get<double>();
    c.freeze_features = j.at("freeze_features").get<bool>();
    c.validate();
    return c;
}

std::vector<std::pair<std::string, Tensor*>> TrainState::parameters() {
    auto out = sarl.tensors();
    if (ist) {
        auto more = ist->tensors();
        out.insert(out.end(), more.begin(), more.end());
    }
    return out;
}

TrainState init_state(std::size_t categories, std::size_t feature_dim, const TrainConfig& config) {
    config.validate();
    if (categories == 0 || feature_dim == 0) throw std::invalid_argument("init_state: empty dimensions");
    TrainState s;
    s.config = config;
    s.categories = categories;
    s.feature_dim = feature_dim;
    Rng sarl_rng = make_rng(config.seed, 1);
    s.sarl = SarlParams::init(categories, feature_dim, config.hidden_dim, sarl_rng);
    if (config.uses_ist()) {
        Rng ist_rng = make_rng(config.seed, 2);
        s.ist = IstParams::init(config.hidden_dim, config.ist_hidden1, config.ist_hidden2, ist_rng);
    }
    s.thresholds.theta_intra = config.theta_intra;
    s.thresholds.theta_cross = config.theta_cross;
    s.rng = make_rng(config.seed, 3);
    for (auto& [name, tensor] : s.parameters()) {
        s.moments.push_back({name, Tensor(tensor->shape()), Tensor(tensor->shape())});
    }
    return s;
}

BatchLoss total_loss(const TrainState& state, std::span<const Sample* const> batch) {
    const TrainConfig& cfg = state.config;
    const std::size_t B = batch.size();
    const std::size_t C = state.categories;
    const bool warmup = state.in_warmup();
    if (B == 0) throw std::invalid_argument("total_loss: empty batch");

    BatchLoss out;
    Graph& g = out.graph;
    out.sarl = bind_sarl(g, state.sarl, true);
    const SarlOutput fw = sarl_forward(g, out.sarl, g.constant(stack_regions(batch)));
    const std::vector<int> labels = flatten(batch);
    std::vector<LabelVector> label_rows;
    label_rows.reserve(B);
    for (const Sample* s : batch) label_rows.push_back(s->labels);

    std::vector<Term> terms;
    LossBreakdown& bd = out.breakdown;
    terms.push_back({"known_bce", ops::partial_bce(g, fw.probabilities, labels), &bd.known_bce});

    const NodeId shared = cfg.freeze_features ? g.constant(g.value(fw.features)) : fw.features;

    if (cfg.uses_ist()) {
        out.ist = bind_ist(g, *state.ist, true);
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        std::vector<int> targets;
        std::vector<std::ptrdiff_t> slot(B * C * C, -1);
        auto add_pair = [&](std::size_t b, std::size_t i, std::size_t j, int target) {
            std::ptrdiff_t& idx = slot[(b * C + i) * C + j];
            if (idx >= 0) return;
            idx = static_cast<std::ptrdiff_t>(pairs.size());
            pairs.emplace_back(b * C + i, b * C + j);
            targets.push_back(target);
        };
        for (std::size_t b = 0; b < B; ++b) {
            for (const auto& [pair, target] : known_pairs(label_rows[b])) add_pair(b, pair.first, pair.second, target);
        }
        if (!warmup) {
            // Columns of known positives feed the pseudo labels and the threshold evidence.
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t j = 0; j < C; ++j) {
                    if (label_rows[b][j] != 1) continue;
                    for (std::size_t c = 0; c < C; ++c)
                        if (c != j) add_pair(b, c, j, 0);
                }
        }

        std::optional<NodeId> probs;
        if (!pairs.empty()) probs = pair_probabilities(g, *out.ist, shared, pairs);
        const bool has_loss_pairs = std::any_of(targets.begin(), targets.end(), [](int t) { return t != 0; });
        if (probs && has_loss_pairs) {
            const NodeId ist = ops::asymmetric_pair_loss(g, *probs, targets, cfg.asymmetric);
            terms.push_back({"ist", ops::scale(g, ist, cfg.lambda_ist), &bd.ist});
        }

        if (!warmup) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            Tensor evidence({B, C});
            out.intra_pseudo.resize(B);
            for (std::size_t b = 0; b < B; ++b) {
                CooccurrenceMatrix cooc{Tensor({C, C}, nan)};
                for (std::size_t i = 0; i < C; ++i)
                    for (std::size_t j = 0; j < C; ++j) {
                        const std::ptrdiff_t idx = slot[(b * C + i) * C + j];
                        if (idx >= 0) cooc.values.at(i, j) = g.value(*probs)[static_cast<std::size_t>(idx)];
                    }
                out.intra_pseudo[b] = generate_intra_pseudo_labels(cooc, label_rows[b], state.thresholds.theta_intra);
                const std::vector<double> e = intra_evidence(cooc, label_rows[b]);
                std::copy(e.begin(), e.end(), evidence.data() + b * C);
            }
            if (cfg.learn_thresholds) {
                out.theta_intra = g.parameter(Tensor::scalar(state.thresholds.theta_intra));
                const NodeId d = ops::threshold_differences(g, g.constant(std::move(evidence)), *out.theta_intra, labels);
                terms.push_back(
                    {"dtl_intra", ops::scale(g, ops::dtl_loss(g, d, labels, cfg.beta), cfg.lambda_dtl), &bd.dtl_intra});
            }
        }
    }

    if (cfg.uses_cst()) {
        if (B >= 2) {
            std::size_t contributing = 0;
            const NodeId rank = ops::ranking_loss(g, shared, B, label_rows, &contributing);
            if (contributing > 0) terms.push_back({"cst", ops::scale(g, rank, cfg.lambda_cst), &bd.cst});
        }
        if (!warmup && state.bank) {
            const Tensor& f = g.value(fw.features);
            const std::size_t H = f.dim(1);
            Tensor evidence({B, C});
            std::vector<int> dtl_labels = labels;
            out.cross_pseudo.resize(B);
            for (std::size_t b = 0; b < B; ++b) {
                CategoryFeatures cf{Tensor({C, H})};
                std::copy_n(f.data() + b * C * H, C * H, cf.values.data());
                const SimilarityRecord sim = prototype_similarity(cf, *state.bank);
                out.cross_pseudo[b] = generate_cross_pseudo_labels(sim, label_rows[b], state.thresholds.theta_cross);
                for (std::size_t c = 0; c < C; ++c) {
                    evidence.at(b, c) = sim.mean[c];
                    if (!sim.present[c]) dtl_labels[b * C + c] = 0;
                }
            }
            if (cfg.learn_thresholds) {
                out.theta_cross = g.parameter(Tensor::scalar(state.thresholds.theta_cross));
                const NodeId d =
                    ops::threshold_differences(g, g.constant(std::move(evidence)), *out.theta_cross, dtl_labels);
                terms.push_back({"dtl_cross", ops::scale(g, ops::dtl_loss(g, d, dtl_labels, cfg.beta), cfg.lambda_dtl),
                                 &bd.dtl_cross});
            }
        }
    }

    if (!out.intra_pseudo.empty()) {
        terms.push_back({"intra_bce", ops::partial_bce(g, fw.probabilities, flatten(out.intra_pseudo)), &bd.intra_bce});
    }
    if (!out.cross_pseudo.empty()) {
        terms.push_back({"cross_bce", ops::partial_bce(g, fw.probabilities, flatten(out.cross_pseudo)), &bd.cross_bce});
    }

    NodeId total = terms.front().node;
    for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(g, total, terms[i].node);
    for (const Term& t : terms) {
        const double v = g.value(t.node).item();
        if (!std::isfinite(v)) throw TrainingError(std::string("non-finite loss component '") + t.name + "'");
        *t.slot = v;
    }
    out.total = total;
    bd.total = g.value(total).item();
    return out;
}

void run_epoch(TrainState& state, const Dataset& train_set, const TrainingInputs& inputs) {
    const TrainConfig& cfg = state.config;
    if (train_set.categories != state.categories || train_set.feature_dim != state.feature_dim) {
        throw std::invalid_argument("run_epoch: dataset shape does not match the model");
    }
    if (train_set.size() == 0) throw std::invalid_argument("run_epoch: empty training set");
    if (!inputs.withheld_truth.empty() && inputs.withheld_truth.size() != train_set.size()) {
        throw std::invalid_argument("run_epoch: withheld truth must align with the training set");
    }
    const std::size_t N = train_set.size();
    const std::size_t epoch = state.epoch;
    const double lr = cfg.learning_rate_at(epoch);
    const double threshold_lr = cfg.threshold_learning_rate * (lr / cfg.learning_rate);

    if (cfg.uses_cst() && !state.in_warmup()) {
        std::vector<const Sample*> all;
        for (const Sample& s : train_set.samples) all.push_back(&s);
        const std::vector<CategoryFeatures> features = extract_category_features(all, state.sarl);
        state.bank = build_prototypes(train_set, features, cfg.prototypes, mix_seed(cfg.seed, 1000 + epoch));
    }

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), state.rng);

    std::vector<LabelVector> intra_all(N, LabelVector(state.categories, 0));
    std::vector<LabelVector> cross_all(N, LabelVector(state.categories, 0));
    LossBreakdown sums;
    std::size_t batches = 0;
    const AdamConfig adam{0.9, 0.999, 1e-8, cfg.weight_decay};

    std::vector<const Sample*> batch;
    for (std::size_t start = 0; start < N; start += cfg.batch_size) {
        const std::size_t end = std::min(N, start + cfg.batch_size);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set.samples[order[i]]);

        BatchLoss loss = total_loss(state, batch);
        if (loss.breakdown.total > kDivergenceLimit) {
            std::ostringstream msg;
            msg << "training diverged at epoch " << epoch + 1 << ", step " << state.step + 1
                << ": total=" << loss.breakdown.total << " known_bce=" << loss.breakdown.known_bce
                << " ist=" << loss.breakdown.ist << " cst=" << loss.breakdown.cst;
            throw TrainingError(msg.str());
        }
        const GradientMap grads = loss.graph.backward(loss.total);

        ++state.step;
        std::vector<NodeId> nodes = {loss.sarl.category_embeddings, loss.sarl.encoder_w1, loss.sarl.encoder_b1,
                                     loss.sarl.encoder_w2,          loss.sarl.encoder_b2, loss.sarl.classifier_w,
                                     loss.sarl.classifier_b};
        if (loss.ist) {
            nodes.insert(nodes.end(), {loss.ist->w1, loss.ist->b1, loss.ist->w2, loss.ist->b2, loss.ist->w3, loss.ist->b3});
        }
        auto params = state.parameters();
        for (std::size_t p = 0; p < params.size(); ++p) {
            Tensor& value = *params[p].second;
            const Tensor& grad = grads.at(nodes[p]);
            if (!grad.all_finite()) throw TrainingError("non-finite gradient for " + params[p].first);
            adam_update(value.values(), grad.values(), state.moments[p].first_moment.values(),
                        state.moments[p].second_moment.values(), state.step, lr, adam);
        }
        if (loss.theta_intra || loss.theta_cross) {
            ThresholdGradients tg;
            if (loss.theta_intra) tg.intra = grads.at(*loss.theta_intra).item();
            if (loss.theta_cross) tg.cross = grads.at(*loss.theta_cross).item();
            step_thresholds(state.thresholds, tg, threshold_lr);
        }

        for (std::size_t i = 0; i < batch.size(); ++i) {
            if (!loss.intra_pseudo.empty()) intra_all[order[start + i]] = loss.intra_pseudo[i];
            if (!loss.cross_pseudo.empty()) cross_all[order[start + i]] = loss.cross_pseudo[i];
        }
        const LossBreakdown& b = loss.breakdown;
        sums.known_bce += b.known_bce;
        sums.intra_bce += b.intra_bce;
        sums.cross_bce += b.cross_bce;
        sums.ist += b.ist;
        sums.cst += b.cst;
        sums.dtl_intra += b.dtl_intra;
        sums.dtl_cross += b.dtl_cross;
        sums.total += b.total;
        ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.learning_rate = lr;
    const double scale = 1.0 / static_cast<double>(batches);
    rec.losses = {sums.known_bce * scale, sums.intra_bce * scale, sums.cross_bce * scale, sums.ist * scale,
                  sums.cst * scale,       sums.dtl_intra * scale, sums.dtl_cross * scale, sums.total * scale};
    rec.theta_intra = state.thresholds.theta_intra;
    rec.theta_cross = state.thresholds.theta_cross;

    const std::vector<LabelVector> observed = labels_of(train_set);
    if (!inputs.withheld_truth.empty()) {
        rec.intra = pseudo_label_quality(intra_all, inputs.withheld_truth, observed);
        rec.cross = pseudo_label_quality(cross_all, inputs.withheld_truth, observed);
    } else {
        // Without ground truth only the emitted counts are meaningful.
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < state.categories; ++c) {
                rec.intra.emitted += intra_all[n][c] == 1 ? 1 : 0;
                rec.cross.emitted += cross_all[n][c] == 1 ? 1 : 0;
            }
    }

    state.epoch += 1;
    if (inputs.eval != nullptr && inputs.eval->size() > 0) {
        rec.test_map = evaluate(predict(state, *inputs.eval), labels_of(*inputs.eval)).mean_average_precision;
    }
    state.history.push_back(rec);
}

TrainState train(const Dataset& train_set, const TrainConfig& config, const TrainingInputs& inputs) {
    TrainState state = init_state(train_set.categories, train_set.feature_dim, config);
    resume(state, train_set, inputs);
    return state;
}

void resume(TrainState& state, const Dataset& train_set, const TrainingInputs& inputs) {
    while (state.epoch < state.config.epochs) run_epoch(state, train_set, inputs);
}

std::vector<std::vector<double>> predict(const TrainState& state, const Dataset& dataset, std::size_t batch_size) {
    if (dataset.categories != state.categories || dataset.feature_dim != state.feature_dim) {
        throw std::invalid_argument("predict: dataset shape does not match the model");
    }
    if (batch_size == 0) throw std::invalid_argument("predict: batch size must be positive");
    std::vector<std::vector<double>> out;
    out.reserve(dataset.size());
    std::vector<const Sample*> batch;
    for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
        batch.clear();
        for (std::size_t i = start; i < std::min(dataset.size(), start + batch_size); ++i) {
            batch.push_back(&dataset.samples[i]);
        }
        Graph g;
        const SarlNodes nodes = bind_sarl(g, state.sarl, false);
        const SarlOutput fw = sarl_forward(g, nodes, g.constant(stack_regions(batch)));
        const Tensor& p = g.value(fw.probabilities);
        for (std::size_t b = 0; b < batch.size(); ++b) {
            out.emplace_back(p.data() + b * state.categories, p.data() + (b + 1) * state.categories);
        }
    }
    return out;
}

std::vector<LabelVector> labels_of(const Dataset& dataset) {
    std::vector<LabelVector> out;
    out.reserve(dataset.size());
    for (const Sample& s : dataset.samples) out.push_back(s.labels);
    return out;
}

std::string history_csv(std::span<const EpochRecord> history) {
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    std::ostringstream out;
    out << "epoch,lr,loss_total,loss_cls,loss_ist,loss_cst,loss_dtl,theta_intra,theta_cross,"
           "pseudo_precision_intra,pseudo_recall_intra,pseudo_precision_cross,pseudo_recall_cross,"
           "pseudo_count_intra,pseudo_count_cross,loss_known_bce,test_map\n";
    for (const EpochRecord& r : history) {
        out << r.epoch << ',' << num(r.learning_rate) << ',' << num(r.losses.total) << ','
            << num(r.losses.classification()) << ',' << num(r.losses.ist) << ',' << num(r.losses.cst) << ','
            << num(r.losses.dtl()) << ',' << num(r.theta_intra) << ',' << num(r.theta_cross) << ','
            << opt(r.intra.precision) << ',' << num(r.intra.recall) << ',' << opt(r.cross.precision) << ','
            << num(r.cross.recall) << ',' << r.intra.emitted << ',' << r.cross.emitted << ','
            << num(r.losses.known_bce) << ',' << opt(r.test_map) << '\n';
    }
    return out.str();
}

namespace {

json tensor_json(const Tensor& t) {
    json j;
    j["shape"] = t.shape();
    j["data"] = std::vector<double>(t.values().begin(), t.values().end());
    return j;
}

Tensor tensor_from(const json& j) {
    Tensor t(j.at("shape").get<Shape>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != t.size()) throw std::runtime_error("checkpoint tensor size mismatch");
    std::copy(data.begin(), data.end(), t.data());
    return t;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json quality_json(const PseudoLabelQuality& q) {
    json j;
    j["precision"] = optional_json(q.precision);
    j["recall"] = q.recall;
    j["emitted"] = q.emitted;
    j["correct"] = q.correct;
    j["hidden_positives"] = q.hidden_positives;
    return j;
}

PseudoLabelQuality quality_from(const json& j) {
    PseudoLabelQuality q;
    q.precision = optional_from(j.at("precision"));
    q.recall = j.at("recall").get<double>();
    q.emitted = j.at("emitted").get<std::size_t>();
    q.correct = j.at("correct").get<std::size_t>();
    q.hidden_positives = j.at("hidden_positives").get<std::size_t>();
    return q;
}

json moments_json(const ScalarMoments& m) { return json{{"first", m.first}, {"second", m.second}, {"steps", m.steps}}; }

ScalarMoments moments_from(const json& j) {
    return {j.at("first").get<double>(), j.at("second").get<double>(), j.at("steps").get<std::size_t>()};
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    json j;
    j["format"] = "hst-checkpoint";
    j["version"] = 1;
    j["config"] = state.config.to_json();
    j["categories"] = state.categories;
    j["feature_dim"] = state.feature_dim;
    j["epoch"] = state.epoch;
    j["step"] = state.step;
    std::ostringstream rng;
    rng << state.rng;
    j["rng"] = rng.str();
    json params = json::object();
    auto& mutable_state = const_cast<TrainState&>(state);
    for (auto& [name, tensor] : mutable_state.parameters()) params[name] = tensor_json(*tensor);
    j["parameters"] = params;
    json moments = json::array();
    for (const ParameterSlot& m : state.moments) {
        moments.push_back({{"name", m.name}, {"first", tensor_json(m.first_moment)}, {"second", tensor_json(m.second_moment)}});
    }
    j["moments"] = moments;
    j["thresholds"] = {{"theta_intra", state.thresholds.theta_intra},
                       {"theta_cross", state.thresholds.theta_cross},
                       {"intra_state", moments_json(state.thresholds.intra_state)},
                       {"cross_state", moments_json(state.thresholds.cross_state)}};
    if (state.bank) {
        json bank;
        bank["prototypes"] = tensor_json(state.bank->prototypes);
        bank["counts"] = state.bank->counts;
        bank["empty"] = state.bank->empty;
        j["bank"] = bank;
    } else {
        j["bank"] = nullptr;
    }
    json history = json::array();
    for (const EpochRecord& r : state.history) {
        json h;
        h["epoch"] = r.epoch;
        h["learning_rate"] = r.learning_rate;
        h["losses"] = {{"known_bce", r.losses.known_bce}, {"intra_bce", r.losses.intra_bce},
                       {"cross_bce", r.losses.cross_bce}, {"ist", r.losses.ist},
                       {"cst", r.losses.cst},             {"dtl_intra", r.losses.dtl_intra},
                       {"dtl_cross", r.losses.dtl_cross}, {"total", r.losses.total}};
        h["theta_intra"] = r.theta_intra;
        h["theta_cross"] = r.theta_cross;
        h["intra"] = quality_json(r.intra);
        h["cross"] = quality_json(r.cross);
        h["test_map"] = optional_json(r.test_map);
        history.push_back(h);
    }
    j["history"] = history;
    j["metadata"] = state.metadata;

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
        out << j.dump() << '\n';
        if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "hst-checkpoint") throw std::runtime_error("not a checkpoint file");
        const TrainConfig config = TrainConfig::from_json(j.at("config"));
        TrainState s = init_state(j.at("categories").get<std::size_t>(), j.at("feature_dim").get<std::size_t>(), config);
        s.epoch = j.at("epoch").get<std::size_t>();
        s.step = j.at("step").get<std::size_t>();
        std::istringstream rng(j.at("rng").get<std::string>());
        rng >> s.rng;
        if (!rng) throw std::runtime_error("corrupt rng state");
        const json& params = j.at("parameters");
        for (auto& [name, tensor] : s.parameters()) {
            Tensor t = tensor_from(params.at(name));
            if (t.shape() != tensor->shape()) {
                throw std::runtime_error("parameter " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                                         shape_string(tensor->shape()));
            }
            *tensor = std::move(t);
        }
        const json& moments = j.at("moments");
        if (moments.size() != s.moments.size()) throw std::runtime_error("moment count mismatch");
        for (std::size_t i = 0; i < s.moments.size(); ++i) {
            if (moments[i].at("name").get<std::string>() != s.moments[i].name) throw std::runtime_error("moment order mismatch");
            s.moments[i].first_moment = tensor_from(moments[i].at("first"));
            s.moments[i].second_moment = tensor_from(moments[i].at("second"));
        }
        const json& th = j.at("thresholds");
        s.thresholds.theta_intra = th.at("theta_intra").get<double>();
        s.thresholds.theta_cross = th.at("theta_cross").get<double>();
        s.thresholds.intra_state = moments_from(th.at("intra_state"));
        s.thresholds.cross_state = moments_from(th.at("cross_state"));
        if (!j.at("bank").is_null()) {
            const json& b = j.at("bank");
            PrototypeBank bank;
            bank.prototypes = tensor_from(b.at("prototypes"));
            bank.counts = b.at("counts").get<std::vector<std::vector<std::size_t>>>();
            bank.empty = b.at("empty").get<std::vector<bool>>();
            s.bank = std::move(bank);
        }
        for (const json& h : j.at("history")) {
            EpochRecord r;
            r.epoch = h.at("epoch").get<std::size_t>();
            r.learning_rate = h.at("learning_rate").get<double>();
            const json& l = h.at("losses");
            r.losses = {l.at("known_bce").get<double>(), l.at("intra_bce").get<double>(), l.at("cross_bce").get<double>(),
                        l.at("ist").get<double>(),       l.at("cst").get<double>(),       l.at("dtl_intra").get<double>(),
                        l.at("dtl_cross").get<double>(), l.at("total").get<double>()};
            r.theta_intra = h.at("theta_intra").get<double>();
            r.theta_cross = h.at("theta_cross").get<double>();
            r.intra = quality_from(h.at("intra"));
            r.cross = quality_from(h.at("cross"));
            r.test_map = optional_from(h.at("test_map"));
            s.history.push_back(r);
        }
        s.metadata = j.at("metadata");
        return s;
    } catch (const json::exception& e) {
        throw std::runtime_error("checkpoint " + path.string() + " is malformed: " + e.what());
    }
}

}  // namespace hst
