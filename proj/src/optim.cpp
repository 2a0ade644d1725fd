#include "resmamba/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rmb {

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& state)
{
    if (grads.size() != params.size()) {
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " parameters but " +
                                    std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!grads[i].empty() && grads[i].size() != params[i].numel()) {
            throw std::invalid_argument("adam_step: gradient " + std::to_string(i) + " does not match parameter shape " +
                                        shape_to_string(params[i].shape()));
        }
        for (double g : grads[i]) {
            if (!std::isfinite(g)) {
                throw std::runtime_error("adam_step: non-finite gradient in parameter " + std::to_string(i) +
                                         " (training diverged)");
            }
        }
    }

    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.numel(), 0.0);
            state.second_moment.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw std::invalid_argument("adam_step: optimizer state was built for a different parameter list");
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].mutable_values();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != values.size()) {
            throw std::invalid_argument("adam_step: moment shape does not match parameter " + std::to_string(i));
        }
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = grads[i].empty() ? 0.0 : grads[i][j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            values[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

void adam_step(std::span<Tensor> params, AdamState& state)
{
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
        const auto g = p.grad();
        grads.emplace_back(g.begin(), g.end());
    }
    adam_step(params, grads, state);
}

void zero_grads(std::span<Tensor> params)
{
    for (auto& p : params) p.zero_grad();
}

}  // namespace rmb
