#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "resmamba/tensor.hpp"

namespace rmb {

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    /// Worst relative error per input, same order as the inputs.
    std::vector<double> per_input;
};

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences for every element of every tensor in `inputs`.
///
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
/// the floor keeps near-zero gradients from amplifying round-off.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::span<Tensor> inputs,
                                double step = 1e-5, double floor = 1e-3);

}  // namespace rmb
