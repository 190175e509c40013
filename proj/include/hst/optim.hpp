#pragma once

#include <cstddef>
#include <span>

namespace hst {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // L2 term added to the gradient
};

// One bias-corrected Adam update; `step` counts from 1.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> first_moment,
                 std::span<double> second_moment, std::size_t step, double learning_rate, const AdamConfig& cfg);

}  // namespace hst
