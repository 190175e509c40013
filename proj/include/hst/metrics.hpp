#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hst/losses.hpp"

namespace hst {

// Truth values count as positive iff equal to +1.

// Mean of precision at each positive, scores sorted descending with ties kept
// in sample order. Empty when there is no positive.
std::optional<double> average_precision(std::span<const double> scores, std::span<const int> truths);

struct ClassCounts {
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
};

double f1_from_counts(const ClassCounts& counts);

struct F1Scores {
    double overall = 0.0;    // micro-averaged over every (sample, class)
    double per_class = 0.0;  // mean of per-class F1
    std::vector<ClassCounts> counts;
};

// A prediction is positive when its probability reaches the threshold.
F1Scores f1_measures(const std::vector<std::vector<double>>& probabilities, const std::vector<LabelVector>& truths,
                     double decision_threshold = 0.5);

struct PseudoLabelQuality {
    std::optional<double> precision;  // empty when no pseudo positive was emitted
    double recall = 0.0;
    std::size_t emitted = 0;
    std::size_t correct = 0;
    std::size_t hidden_positives = 0;
};

// Counts only positions left unknown in `observed`.
PseudoLabelQuality pseudo_label_quality(std::span<const LabelVector> pseudo, std::span<const LabelVector> full_truth,
                                        std::span<const LabelVector> observed);

struct EvalReport {
    std::vector<std::optional<double>> average_precision;
    std::vector<std::size_t> support;
    std::vector<ClassCounts> counts;
    double mean_average_precision = 0.0;  // over classes with a positive
    double overall_f1 = 0.0;
    double per_class_f1 = 0.0;
};

EvalReport evaluate(const std::vector<std::vector<double>>& probabilities, const std::vector<LabelVector>& truths,
                    double decision_threshold = 0.5);

// Per-class rows, then a "mean" row (ap = mAP, f1 = CF1) and an "overall" row
// (summed counts, f1 = OF1). Values in full precision.
std::string report_csv(const EvalReport& report);
std::string report_markdown(const EvalReport& report);

}  // namespace hst
