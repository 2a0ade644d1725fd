#include "resmamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmb {

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::span<Tensor> inputs, double step,
                                double floor)
{
    for (auto& input : inputs) {
        if (!input.requires_grad()) throw std::invalid_argument("check_gradients: every input must require grad");
        input.zero_grad();
    }
    loss_fn().backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& input : inputs) {
        const auto g = input.grad();
        analytic.emplace_back(g.begin(), g.end());
        if (analytic.back().empty()) analytic.back().assign(input.numel(), 0.0);
    }

    GradCheckResult result;
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto values = inputs[k].mutable_values();
        double worst = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double plus = loss_fn().item();
            values[i] = saved - step;
            const double minus = loss_fn().item();
            values[i] = saved;

            const double numeric = (plus - minus) / (2.0 * step);
            const double abs_err = std::abs(analytic[k][i] - numeric);
            const double denom = std::max({std::abs(analytic[k][i]), std::abs(numeric), floor});
            const double rel = std::isfinite(abs_err) ? abs_err / denom : HUGE_VAL;
            worst = std::max(worst, rel);
            result.max_abs_error = std::max(result.max_abs_error, abs_err);
            ++result.checked;
        }
        result.per_input.push_back(worst);
        result.max_rel_error = std::max(result.max_rel_error, worst);
    }
    for (auto& input : inputs) input.zero_grad();
    return result;
}

}  // namespace rmb
