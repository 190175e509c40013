#pragma once

#include <vector>

#include "hst/autograd.hpp"

namespace hst {

struct ParameterCheck {
    NodeId node = 0;
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
};

struct GradCheckReport {
    std::vector<ParameterCheck> parameters;
    double max_relative_error = 0.0;
    bool passed = true;
};

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-5;
    // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
    double floor = 1e-6;
};

// Compares backward() against central differences for every parameter element.
// Leaf values are restored before returning.
GradCheckReport grad_check(Graph& graph, NodeId loss, const GradCheckOptions& options = {});

}  // namespace hst
