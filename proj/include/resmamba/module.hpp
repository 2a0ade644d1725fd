#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "resmamba/rng.hpp"
#include "resmamba/tensor.hpp"

namespace rmb {

/// Ordered (name, parameter) pairs. The order is the checkpoint order.
using NamedParameters = std::vector<std::pair<std::string, Tensor>>;

std::vector<Tensor> parameter_tensors(const NamedParameters& named);
std::size_t count_parameters(const NamedParameters& named);

Tensor zeros_parameter(Shape shape);
Tensor constant_parameter(Shape shape, double value);
Tensor normal_parameter(Shape shape, double stddev, Rng& rng);

/// He-normal initialisation for a [Cout, Cin, k, k] kernel.
Tensor conv_kernel_parameter(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, Rng& rng);

/// Trainable scalar counts of the standard layers.
constexpr std::size_t conv_parameter_count(std::size_t filters, std::size_t kernel, std::size_t in_channels,
                                           bool bias = true)
{
    return filters * kernel * kernel * in_channels + (bias ? filters : 0);
}

constexpr std::size_t linear_parameter_count(std::size_t in_features, std::size_t out_features, bool bias = true)
{
    return in_features * out_features + (bias ? out_features : 0);
}

}  // namespace rmb
