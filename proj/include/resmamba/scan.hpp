#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "resmamba/tensor.hpp"

namespace rmb {

enum class ScanMode { Sequential, Parallel };

/// Row-major views of one selective-scan instance.
///
///   u, delta : [L, D]     b, c : [L, N]
///   a        : [D, N]     d_skip : [D]
///
/// Recurrence per channel d, with h_0 = 0:
///   h_t = exp(delta_t[d] * a[d,:]) * h_{t-1} + delta_t[d] * b_t * u_t[d]
///   y_t[d] = <c_t, h_t> + d_skip[d] * u_t[d]
struct ScanView {
    std::size_t length = 0;
    std::size_t channels = 0;
    std::size_t state = 0;
    std::span<const double> u;
    std::span<const double> delta;
    std::span<const double> a;
    std::span<const double> b;
    std::span<const double> c;
    std::span<const double> d_skip;
};

/// Writes y ([L, D]) and, when `states` is non-empty, every h_t ([L, D, N]).
void scan_forward_sequential(const ScanView& view, std::span<double> y, std::span<double> states);

/// Same result through a work-efficient (Blelloch) prefix scan over the
/// affine step maps h -> a*h + b. The reduction tree depends only on L.
void scan_forward_parallel(const ScanView& view, std::span<double> y, std::span<double> states);

/// In-place inclusive scan of `lanes` independent recurrences
/// h_t = a_t * h_{t-1} + b_t (h_{-1} = 0), stored [length, lanes].
/// On return `b` holds h_t; `a` is left unchanged.
void affine_prefix_scan(std::span<const double> a, std::span<double> b, std::size_t length, std::size_t lanes);

struct ScanGradients {
    std::vector<double> u, delta, a, b, c, d_skip;
};

/// Gradients of sum(grad_y * y) with respect to every scan input, given the
/// states saved by a forward pass. The adjoint recurrence runs through the
/// same machinery as the selected forward mode.
ScanGradients scan_backward(const ScanView& view, std::span<const double> states, std::span<const double> grad_y,
                            ScanMode mode);

/// Input-dependent parameters of a selective scan. `delta`, `b`, `c` carry
/// one row per step ([L, *] or batched [B, L, *]); `a` and `d_skip` are shared.
struct SSMParams {
    Tensor delta;   // [L, D], strictly positive
    Tensor a;       // [D, N], negative
    Tensor b;       // [L, N]
    Tensor c;       // [L, N]
    Tensor d_skip;  // [D]

    std::size_t d_model() const { return a.size(0); }
    std::size_t d_state() const { return a.size(1); }
};

/// Differentiable selective scan of u ([L, D] or [B, L, D]).
Tensor selective_scan(const Tensor& u, const SSMParams& params, ScanMode mode);

inline Tensor selective_scan_seq(const Tensor& u, const SSMParams& params)
{
    return selective_scan(u, params, ScanMode::Sequential);
}

inline Tensor selective_scan_par(const Tensor& u, const SSMParams& params)
{
    return selective_scan(u, params, ScanMode::Parallel);
}

struct ScanGradReport {
    double u = 0.0;
    double delta = 0.0;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double d_skip = 0.0;
    double max = 0.0;
};

/// Finite-difference validation of the scan backward on a random instance.
ScanGradReport scan_gradcheck(std::uint64_t seed, std::size_t length = 5, std::size_t channels = 1,
                              std::size_t state = 2, ScanMode mode = ScanMode::Parallel);

}  // namespace rmb
