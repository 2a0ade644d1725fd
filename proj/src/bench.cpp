#include "resmamba/bench.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "resmamba/rng.hpp"
#include "resmamba/scan.hpp"

namespace rmb {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kAttentionRowBlock = 128;

RowMatrix random_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng)
{
    RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
    return m;
}

struct AttentionWeights {
    RowMatrix wq, wk, wv;
};

AttentionWeights attention_weights(std::size_t d, std::uint64_t seed)
{
    Rng rng(seed);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
    AttentionWeights w;
    w.wq = random_matrix(d, d, stddev, rng);
    w.wk = random_matrix(d, d, stddev, rng);
    w.wv = random_matrix(d, d, stddev, rng);
    return w;
}

// Scores are formed one block of query rows at a time, so memory stays
// O(block * n) while the work remains O(n^2 d).
RowMatrix attention_forward(const Eigen::Ref<const RowMatrix>& x, const AttentionWeights& w)
{
    const Eigen::Index n = x.rows();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x.cols()));
    const RowMatrix q = x * w.wq;
    const RowMatrix k = x * w.wk;
    const RowMatrix v = x * w.wv;
    RowMatrix out(n, x.cols());
    const auto block = static_cast<Eigen::Index>(kAttentionRowBlock);
    for (Eigen::Index r0 = 0; r0 < n; r0 += block) {
        const Eigen::Index rows = std::min(block, n - r0);
        RowMatrix s = (q.middleRows(r0, rows) * k.transpose()) * inv_sqrt_d;
        for (Eigen::Index r = 0; r < rows; ++r) {
            auto row = s.row(r);
            row.array() = (row.array() - row.maxCoeff()).exp();
            row /= row.sum();
        }
        out.middleRows(r0, rows) = s * v;
    }
    return out;
}

struct ScanInstance {
    std::size_t length, channels, state;
    std::vector<double> u, delta, a, b, c, d_skip;

    ScanView view() const { return {length, channels, state, u, delta, a, b, c, d_skip}; }
};

ScanInstance make_scan_instance(std::size_t n, std::size_t d, std::size_t state, std::uint64_t seed)
{
    Rng rng(seed);
    ScanInstance s{n, d, state, {}, {}, {}, {}, {}, {}};
    s.u.resize(n * d);
    s.delta.resize(n * d);
    s.a.resize(d * state);
    s.b.resize(n * state);
    s.c.resize(n * state);
    s.d_skip.resize(d);
    for (auto& v : s.u) v = rng.normal();
    for (auto& v : s.delta) v = rng.uniform(1e-3, 1e-1);
    for (auto& v : s.a) v = -rng.uniform(0.5, 4.0);
    for (auto& v : s.b) v = rng.normal();
    for (auto& v : s.c) v = rng.normal();
    for (auto& v : s.d_skip) v = rng.normal();
    return s;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double elapsed_ns(const std::function<void()>& fn, std::size_t iterations)
{
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < iterations; ++i) fn();
    const auto stop = std::chrono::steady_clock::now();
    return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count());
}

BenchRecord time_call(const std::function<void()>& fn, const ScalingOptions& o)
{
    BenchRecord r;
    // Warmup call, discarded; also used to choose how many calls make one sample.
    const double first = std::max(elapsed_ns(fn, 1), 1.0);
    std::size_t iterations = 1;
    while (static_cast<double>(iterations) * first < o.min_sample_ns && iterations < (std::size_t{1} << 20)) {
        iterations *= 2;
    }
    // Re-measure in case the warmup was unrepresentative of a cold start.
    while (elapsed_ns(fn, iterations) < o.min_sample_ns && iterations < (std::size_t{1} << 24)) iterations *= 2;
    std::vector<double> samples;
    for (std::size_t rep = 0; rep < std::max<std::size_t>(o.repeats, 1); ++rep) {
        samples.push_back(elapsed_ns(fn, iterations) / static_cast<double>(iterations));
    }
    r.wall_ns = median(std::move(samples));
    r.inner_iterations = iterations;
    return r;
}

}  // namespace

AttentionProjections attention_projections(std::size_t d, std::uint64_t seed)
{
    const auto w = attention_weights(d, seed);
    const auto flat = [](const RowMatrix& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
    return {flat(w.wq), flat(w.wk), flat(w.wv)};
}

Tensor attention_reference(const Tensor& x, std::uint64_t seed)
{
    if (x.dim() != 2) throw std::invalid_argument("attention_reference: expected [n, d], got " + shape_to_string(x.shape()));
    const auto w = attention_weights(x.size(1), seed);
    const Eigen::Map<const RowMatrix> xm(x.values().data(), static_cast<Eigen::Index>(x.size(0)),
                                         static_cast<Eigen::Index>(x.size(1)));
    const RowMatrix out = attention_forward(xm, w);
    return Tensor(x.shape(), std::vector<double>(out.data(), out.data() + out.size()));
}

double loglog_slope(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 paired points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw std::invalid_argument("loglog_slope: x values are all equal");
    return sxy / sxx;
}

double ScalingReport::slope(const std::string& impl) const
{
    for (const auto& f : fits) {
        if (f.impl == impl) return f.slope;
    }
    throw std::out_of_range("no scaling fit for '" + impl + "'");
}

std::vector<std::size_t> geometric_sizes(std::size_t lo, std::size_t hi)
{
    if (lo == 0 || hi < lo) throw std::invalid_argument("geometric_sizes: need 0 < lo <= hi");
    std::vector<std::size_t> out;
    for (std::size_t n = lo; n <= hi; n *= 2) out.push_back(n);
    return out;
}

ScalingReport scaling_run(const ScalingOptions& o)
{
    if (o.n_list.size() < 2) throw std::invalid_argument("scaling_run: need at least two sequence lengths");
    if (o.d == 0 || o.d_state == 0) throw std::invalid_argument("scaling_run: d and d_state must be positive");
    ScalingReport report;
#ifdef _OPENMP
    report.workers = omp_get_max_threads();
#endif
    for (const auto& impl : o.impls) {
        if (impl != "scan_seq" && impl != "scan_par" && impl != "attention_ref") {
            throw std::invalid_argument("scaling_run: unknown implementation '" + impl + "'");
        }
        std::vector<double> xs, ys;
        for (std::size_t n : o.n_list) {
            if (n == 0) throw std::invalid_argument("scaling_run: sequence length must be positive");
            BenchRecord rec;
            if (impl == "attention_ref") {
                Rng rng(mix_seed(o.seed, n));
                const RowMatrix x = random_matrix(n, o.d, 1.0, rng);
                const auto w = attention_weights(o.d, o.seed);
                RowMatrix sink;
                rec = time_call([&] { sink = attention_forward(x, w); }, o);
                rec.bytes_peak = (3 * n * o.d + kAttentionRowBlock * n + n * o.d) * sizeof(double);
            } else {
                const auto inst = make_scan_instance(n, o.d, o.d_state, mix_seed(o.seed, n));
                const auto view = inst.view();
                std::vector<double> y(n * o.d);
                const bool parallel = impl == "scan_par";
                rec = time_call(
                    [&] {
                        if (parallel) scan_forward_parallel(view, y, {});
                        else scan_forward_sequential(view, y, {});
                    },
                    o);
                std::size_t padded = 1;
                while (padded < n) padded *= 2;
                rec.bytes_peak = parallel ? (2 * n + 2 * padded) * o.d * o.d_state * sizeof(double) + y.size() * sizeof(double)
                                          : o.d * o.d_state * sizeof(double) + y.size() * sizeof(double);
            }
            rec.n = n;
            rec.d = o.d;
            rec.impl = impl;
            xs.push_back(static_cast<double>(n));
            ys.push_back(rec.wall_ns);
            report.records.push_back(rec);
        }
        report.fits.push_back({impl, loglog_slope(xs, ys)});
    }
    return report;
}

std::string bench_csv(std::span<const BenchRecord> records)
{
    std::ostringstream os;
    os << "impl,n,d,wall_ns\n";
    os << std::fixed << std::setprecision(1);
    for (const auto& r : records) os << r.impl << ',' << r.n << ',' << r.d << ',' << r.wall_ns << '\n';
    return os.str();
}

std::string bench_summary(const ScalingReport& report)
{
    std::ostringstream os;
    os << "workers: " << report.workers << '\n';
    os << std::fixed << std::setprecision(3);
    for (const auto& f : report.fits) os << "slope " << f.impl << ": " << f.slope << '\n';
    os << std::setprecision(1);
    for (const auto& r : report.records) {
        os << r.impl << " n=" << r.n << " d=" << r.d << " median_ns=" << r.wall_ns
           << " calls_per_sample=" << r.inner_iterations;
        if (r.bytes_peak) os << " bytes=" << *r.bytes_peak;
        os << '\n';
    }
    return os.str();
}

ParamCountReport param_count(const NamedParameters& params)
{
    ParamCountReport report;
    std::map<std::string, std::size_t> position;
    std::vector<std::vector<const Tensor*>> members;
    for (const auto& [name, tensor] : params) {
        const auto dot = name.rfind('.');
        const std::string layer = dot == std::string::npos ? name : name.substr(0, dot);
        auto [it, inserted] = position.emplace(layer, report.layers.size());
        if (inserted) {
            report.layers.push_back({layer, 0, {}});
            members.emplace_back();
        }
        report.layers[it->second].count += tensor.numel();
        members[it->second].push_back(&tensor);
        report.total += tensor.numel();
    }
    // Annotate conv layers (4-D weight plus optional bias) with their closed form.
    for (std::size_t i = 0; i < report.layers.size(); ++i) {
        const Tensor* weight = nullptr;
        const Tensor* bias = nullptr;
        for (const Tensor* t : members[i]) {
            if (t->dim() == 4) weight = t;
            else if (t->dim() == 1) bias = t;
        }
        if (weight && members[i].size() <= 2 && weight->size(2) == weight->size(3)) {
            const std::size_t q = weight->size(0), d = weight->size(1), k = weight->size(2);
            const bool has_bias = bias != nullptr && bias->size(0) == q;
            const std::size_t closed = conv_parameter_count(q, k, d, has_bias);
            if (closed != report.layers[i].count) {
                throw std::logic_error("param_count: conv layer " + report.layers[i].layer + " disagrees with q*k^2*d+q");
            }
            std::ostringstream f;
            f << "conv q=" << q << " k=" << k << " d=" << d << (has_bias ? " q*k^2*d+q" : " q*k^2*d");
            report.layers[i].formula = f.str();
        }
    }
    return report;
}

std::string format_param_count(const ParamCountReport& report)
{
    std::size_t width = 5;
    for (const auto& l : report.layers) width = std::max(width, l.layer.size());
    std::ostringstream os;
    for (const auto& l : report.layers) {
        os << std::left << std::setw(static_cast<int>(width)) << l.layer << "  " << std::right << std::setw(10)
           << l.count;
        if (!l.formula.empty()) os << "  " << l.formula;
        os << '\n';
    }
    os << std::left << std::setw(static_cast<int>(width)) << "total" << "  " << std::right << std::setw(10)
       << report.total << '\n';
    return os.str();
}

}  // namespace rmb
