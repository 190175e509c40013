#include "hst/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hst {

namespace {

std::string full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

void check_rectangular(const std::vector<std::vector<double>>& probabilities, const std::vector<LabelVector>& truths) {
    if (probabilities.size() != truths.size()) throw std::invalid_argument("metrics: sample counts differ");
    for (std::size_t n = 0; n < truths.size(); ++n) {
        if (probabilities[n].size() != truths.front().size() || truths[n].size() != truths.front().size()) {
            throw std::invalid_argument("metrics: class counts differ at sample " + std::to_string(n));
        }
    }
}

}  // namespace

std::optional<double> average_precision(std::span<const double> scores, std::span<const int> truths) {
    if (scores.size() != truths.size()) throw std::invalid_argument("average_precision: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::size_t hits = 0;
    double total = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (truths[order[rank]] != 1) continue;
        ++hits;
        total += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
    if (hits == 0) return std::nullopt;
    return total / static_cast<double>(hits);
}

double f1_from_counts(const ClassCounts& c) {
    const double denom = 2.0 * static_cast<double>(c.true_positives) + static_cast<double>(c.false_positives) +
                         static_cast<double>(c.false_negatives);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(c.true_positives) / denom;
}

F1Scores f1_measures(const std::vector<std::vector<double>>& probabilities, const std::vector<LabelVector>& truths,
                     double decision_threshold) {
    check_rectangular(probabilities, truths);
    F1Scores out;
    const std::size_t C = truths.empty() ? 0 : truths.front().size();
    out.counts.assign(C, {});
    for (std::size_t n = 0; n < truths.size(); ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const bool predicted = probabilities[n][c] >= decision_threshold;
            const bool actual = truths[n][c] == 1;
            if (predicted && actual) ++out.counts[c].true_positives;
            if (predicted && !actual) ++out.counts[c].false_positives;
            if (!predicted && actual) ++out.counts[c].false_negatives;
        }
    }
    ClassCounts micro;
    double per_class = 0.0;
    for (const ClassCounts& c : out.counts) {
        micro.true_positives += c.true_positives;
        micro.false_positives += c.false_positives;
        micro.false_negatives += c.false_negatives;
        per_class += f1_from_counts(c);
    }
    out.overall = f1_from_counts(micro);
    out.per_class = C == 0 ? 0.0 : per_class / static_cast<double>(C);
    return out;
}

PseudoLabelQuality pseudo_label_quality(std::span<const LabelVector> pseudo, std::span<const LabelVector> full_truth,
                                        std::span<const LabelVector> observed) {
    if (pseudo.size() != full_truth.size() || pseudo.size() != observed.size()) {
        throw std::invalid_argument("pseudo_label_quality: sample counts differ");
    }
    PseudoLabelQuality q;
    for (std::size_t n = 0; n < pseudo.size(); ++n) {
        for (std::size_t c = 0; c < pseudo[n].size(); ++c) {
            if (observed[n][c] != 0) continue;
            const bool positive = full_truth[n][c] == 1;
            q.hidden_positives += positive ? 1 : 0;
            if (pseudo[n][c] == 1) {
                ++q.emitted;
                q.correct += positive ? 1 : 0;
            }
        }
    }
    if (q.emitted > 0) q.precision = static_cast<double>(q.correct) / static_cast<double>(q.emitted);
    if (q.hidden_positives > 0) q.recall = static_cast<double>(q.correct) / static_cast<double>(q.hidden_positives);
    return q;
}

EvalReport evaluate(const std::vector<std::vector<double>>& probabilities, const std::vector<LabelVector>& truths,
                    double decision_threshold) {
    check_rectangular(probabilities, truths);
    const std::size_t C = truths.empty() ? 0 : truths.front().size();
    EvalReport report;
    report.average_precision.resize(C);
    report.support.assign(C, 0);

    std::vector<double> scores(truths.size());
    std::vector<int> column(truths.size());
    double total = 0.0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t n = 0; n < truths.size(); ++n) {
            scores[n] = probabilities[n][c];
            column[n] = truths[n][c];
            report.support[c] += truths[n][c] == 1 ? 1 : 0;
        }
        report.average_precision[c] = average_precision(scores, column);
        if (report.average_precision[c]) {
            total += *report.average_precision[c];
            ++defined;
        }
    }
    report.mean_average_precision = defined == 0 ? 0.0 : total / static_cast<double>(defined);

    F1Scores f1 = f1_measures(probabilities, truths, decision_threshold);
    report.overall_f1 = f1.overall;
    report.per_class_f1 = f1.per_class;
    report.counts = std::move(f1.counts);
    return report;
}

std::string report_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "class,support,ap,tp,fp,fn,f1\n";
    ClassCounts sum;
    std::size_t support = 0;
    for (std::size_t c = 0; c < r.support.size(); ++c) {
        const ClassCounts& k = r.counts[c];
        out << c << ',' << r.support[c] << ',' << (r.average_precision[c] ? full(*r.average_precision[c]) : "") << ','
            << k.true_positives << ',' << k.false_positives << ',' << k.false_negatives << ',' << full(f1_from_counts(k))
            << '\n';
        sum.true_positives += k.true_positives;
        sum.false_positives += k.false_positives;
        sum.false_negatives += k.false_negatives;
        support += r.support[c];
    }
    out << "mean,," << full(r.mean_average_precision) << ",,,," << full(r.per_class_f1) << '\n';
    out << "overall," << support << ",," << sum.true_positives << ',' << sum.false_positives << ','
        << sum.false_negatives << ',' << full(r.overall_f1) << '\n';
    return out.str();
}

std::string report_markdown(const EvalReport& r) {
    std::ostringstream out;
    out << "| metric | value |\n|---|---|\n";
    out << "| mAP | " << percent(r.mean_average_precision) << " |\n";
    out << "| OF1 | " << percent(r.overall_f1) << " |\n";
    out << "| CF1 | " << percent(r.per_class_f1) << " |\n\n";
    out << "| class | support | AP | F1 |\n|---|---|---|---|\n";
    for (std::size_t c = 0; c < r.support.size(); ++c) {
        out << "| " << c << " | " << r.support[c] << " | "
            << (r.average_precision[c] ? percent(*r.average_precision[c]) : "n/a") << " | "
            << percent(f1_from_counts(r.counts[c])) << " |\n";
    }
    return out.str();
}

}  // namespace hst
