#include "resmamba/module.hpp"

#include <cmath>

namespace rmb {

std::vector<Tensor> parameter_tensors(const NamedParameters& named)
{
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& [name, tensor] : named) out.push_back(tensor);
    return out;
}

std::size_t count_parameters(const NamedParameters& named)
{
    std::size_t total = 0;
    for (const auto& [name, tensor] : named) total += tensor.numel();
    return total;
}

Tensor zeros_parameter(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor constant_parameter(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

Tensor normal_parameter(Shape shape, double stddev, Rng& rng)
{
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = rng.normal(0.0, stddev);
    return Tensor(std::move(shape), std::move(values), true);
}

Tensor conv_kernel_parameter(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, Rng& rng)
{
    const double fan_in = static_cast<double>(in_channels * kernel * kernel);
    return normal_parameter({out_channels, in_channels, kernel, kernel}, std::sqrt(2.0 / fan_in), rng);
}

}  // namespace rmb
