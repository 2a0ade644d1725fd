#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resmamba/module.hpp"
#include "resmamba/tensor.hpp"

namespace rmb {

struct BenchRecord {
    std::size_t n = 0;
    std::size_t d = 0;
    std::string impl;  // scan_seq, scan_par or attention_ref
    double wall_ns = 0.0;  // median over repeats of one call
    std::optional<std::size_t> bytes_peak;  // working buffers allocated by the call
    std::size_t inner_iterations = 1;  // calls per timed sample
};

/// Row-major [d, d] query/key/value projections used by attention_reference.
struct AttentionProjections {
    std::vector<double> wq, wk, wv;
};
AttentionProjections attention_projections(std::size_t d, std::uint64_t seed);

/// Single-head softmax(Q K^T / sqrt(d)) V of x [n, d] with projections drawn
/// from `seed`. Forward only; untracked.
Tensor attention_reference(const Tensor& x, std::uint64_t seed = 0);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct ScalingOptions {
    std::vector<std::size_t> n_list;
    std::size_t d = 32;
    std::size_t d_state = 8;
    std::size_t repeats = 5;
    std::vector<std::string> impls{"scan_seq", "scan_par", "attention_ref"};
    double min_sample_ns = 2e6;  // a timed sample is repeated until it lasts at least this long
    std::uint64_t seed = 0;
};

struct ScalingFit {
    std::string impl;
    double slope = 0.0;
};

struct ScalingReport {
    std::vector<BenchRecord> records;
    std::vector<ScalingFit> fits;
    int workers = 1;

    double slope(const std::string& impl) const;
};

ScalingReport scaling_run(const ScalingOptions& options);
inline ScalingReport scaling_run(std::vector<std::size_t> n_list, std::size_t d, std::size_t repeats)
{
    ScalingOptions o;
    o.n_list = std::move(n_list);
    o.d = d;
    o.repeats = repeats;
    return scaling_run(o);
}

/// n = lo, 2 lo, 4 lo, ... <= hi.
std::vector<std::size_t> geometric_sizes(std::size_t lo, std::size_t hi);

/// `impl,n,d,wall_ns` rows.
std::string bench_csv(std::span<const BenchRecord> records);
/// Human-readable slopes, worker count and per-record timings.
std::string bench_summary(const ScalingReport& report);

struct LayerCount {
    std::string layer;
    std::size_t count = 0;
    std::string formula;  // closed form for conv and linear layers, empty otherwise
};

struct ParamCountReport {
    std::size_t total = 0;
    std::vector<LayerCount> layers;
};

/// Trainable scalar count grouped by layer (parameter name minus its last
/// component). Conv layers are checked against q*k^2*d + q.
ParamCountReport param_count(const NamedParameters& params);
std::string format_param_count(const ParamCountReport& report);

}  // namespace rmb
