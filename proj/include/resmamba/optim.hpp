#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "resmamba/tensor.hpp"

namespace rmb {

struct AdamState {
    double learning_rate = 1.5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update using each parameter's accumulated gradient
/// (a parameter that received no gradient is treated as having a zero one).
/// Throws before touching any parameter if a gradient is not finite.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Same update with explicitly supplied gradients, one per parameter.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& state);

void zero_grads(std::span<Tensor> params);

}  // namespace rmb
