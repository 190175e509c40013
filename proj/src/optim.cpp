#include "hst/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hst {

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> first_moment,
                 std::span<double> second_moment, std::size_t step, double learning_rate, const AdamConfig& cfg) {
    if (grad.size() != param.size() || first_moment.size() != param.size() || second_moment.size() != param.size()) {
        throw std::invalid_argument("adam_update: size mismatch");
    }
    if (step == 0) throw std::invalid_argument("adam_update: step counts from 1");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i] + cfg.weight_decay * param[i];
        first_moment[i] = cfg.beta1 * first_moment[i] + (1.0 - cfg.beta1) * g;
        second_moment[i] = cfg.beta2 * second_moment[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = first_moment[i] / c1;
        const double v_hat = second_moment[i] / c2;
        param[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

}  // namespace hst
