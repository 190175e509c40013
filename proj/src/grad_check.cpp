#include "hst/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace hst {

GradCheckReport grad_check(Graph& graph, NodeId loss, const GradCheckOptions& options) {
    graph.forward(loss);
    const GradientMap grads = graph.backward(loss);

    GradCheckReport report;
    for (NodeId param : graph.parameters()) {
        if (param > loss) continue;
        ParameterCheck check{param, 0.0, 0.0};
        const Tensor original = graph.value(param);
        const Tensor& analytic = grads.at(param);
        for (std::size_t i = 0; i < original.size(); ++i) {
            Tensor probe = original;
            probe[i] = original[i] + options.step;
            graph.set_value(param, probe);
            const double up = graph.forward(loss).item();
            probe[i] = original[i] - options.step;
            graph.set_value(param, probe);
            const double down = graph.forward(loss).item();
            const double numeric = (up - down) / (2.0 * options.step);

            const double diff = std::abs(analytic[i] - numeric);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
            check.max_absolute_error = std::max(check.max_absolute_error, diff);
            check.max_relative_error = std::max(check.max_relative_error, diff / denom);
        }
        graph.set_value(param, original);
        report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
        report.parameters.push_back(check);
    }
    graph.forward(loss);
    report.passed = report.max_relative_error < options.tolerance;
    return report;
}

}  // namespace hst
