#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hst/cst.hpp"
#include "hst/dataset.hpp"
#include "hst/dtl.hpp"
#include "hst/ist.hpp"
#include "hst/metrics.hpp"
#include "hst/optim.hpp"
#include "hst/sarl.hpp"

namespace hst {

enum class Mode { baseline, ist_only, cst_only, full };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t warmup_epochs = 5;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double lr_decay = 0.1;            // multiplier applied every lr_step_epochs
    std::size_t lr_step_epochs = 10;
    double weight_decay = 5e-4;
    double threshold_learning_rate = 1e-2;
    double lambda_ist = 10.0;
    double lambda_cst = 0.05;
    double lambda_dtl = 0.1;
    std::size_t prototypes = 10;
    std::uint64_t seed = 0;
    double beta = kDefaultSteepness;
    std::size_t hidden_dim = 64;
    std::size_t ist_hidden1 = 512;
    std::size_t ist_hidden2 = 1024;
    AsymmetricLossConfig asymmetric;
    Mode mode = Mode::full;
    bool learn_thresholds = true;
    // Threshold values used when learning is off; initial values otherwise.
    double theta_intra = 0.5;
    double theta_cross = 0.5;
    // Stops the IST and CST losses from updating the shared features.
    bool freeze_features = false;

    void validate() const;
    bool uses_ist() const { return mode == Mode::ist_only || mode == Mode::full; }
    bool uses_cst() const { return mode == Mode::cst_only || mode == Mode::full; }
    double learning_rate_at(std::size_t epoch) const;

    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::ordered_json& j);
};

// Weighted contributions; their sum is the total loss.
struct LossBreakdown {
    double known_bce = 0.0;
    double intra_bce = 0.0;
    double cross_bce = 0.0;
    double ist = 0.0;
    double cst = 0.0;
    double dtl_intra = 0.0;
    double dtl_cross = 0.0;
    double total = 0.0;

    double classification() const { return known_bce + intra_bce + cross_bce; }
    double dtl() const { return dtl_intra + dtl_cross; }
    double component_sum() const { return known_bce + intra_bce + cross_bce + ist + cst + dtl_intra + dtl_cross; }
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double learning_rate = 0.0;
    LossBreakdown losses;   // batch means
    double theta_intra = 0.0;
    double theta_cross = 0.0;
    PseudoLabelQuality intra;
    PseudoLabelQuality cross;
    std::optional<double> test_map;
};

struct ParameterSlot {
    std::string name;
    Tensor first_moment;
    Tensor second_moment;
};

struct TrainState {
    TrainConfig config;
    std::size_t categories = 0;
    std::size_t feature_dim = 0;
    SarlParams sarl;
    std::optional<IstParams> ist;
    ThresholdPair thresholds;
    std::optional<PrototypeBank> bank;
    std::size_t epoch = 0;  // completed epochs
    std::size_t step = 0;   // completed optimizer steps
    Rng rng;
    std::vector<ParameterSlot> moments;
    std::vector<EpochRecord> history;
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

    bool in_warmup() const { return epoch < config.warmup_epochs; }
    std::vector<std::pair<std::string, Tensor*>> parameters();
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

TrainState init_state(std::size_t categories, std::size_t feature_dim, const TrainConfig& config);

struct BatchLoss {
    Graph graph;
    NodeId total = 0;
    LossBreakdown breakdown;
    SarlNodes sarl{};
    std::optional<IstNodes> ist;
    std::optional<NodeId> theta_intra;
    std::optional<NodeId> theta_cross;
    std::vector<LabelVector> intra_pseudo;  // per sample; empty when not generated
    std::vector<LabelVector> cross_pseudo;
};

// Builds the composite objective for one batch at the state's current epoch.
// During warmup the pseudo-label and threshold terms are absent.
BatchLoss total_loss(const TrainState& state, std::span<const Sample* const> batch);

// Optional inputs to training: the full labels behind the partial training
// labels (for pseudo-label precision/recall) and a held-out evaluation set.
struct TrainingInputs {
    std::span<const LabelVector> withheld_truth;
    const Dataset* eval = nullptr;
};

// Runs one epoch and appends its record to state.history.
void run_epoch(TrainState& state, const Dataset& train_set, const TrainingInputs& inputs = {});

// Fresh state trained for config.epochs epochs.
TrainState train(const Dataset& train_set, const TrainConfig& config, const TrainingInputs& inputs = {});

// Continues a state until config.epochs epochs have completed.
void resume(TrainState& state, const Dataset& train_set, const TrainingInputs& inputs = {});

// SARL features and classifier only.
std::vector<std::vector<double>> predict(const TrainState& state, const Dataset& dataset, std::size_t batch_size = 32);

std::vector<LabelVector> labels_of(const Dataset& dataset);

std::string history_csv(std::span<const EpochRecord> history);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace hst
