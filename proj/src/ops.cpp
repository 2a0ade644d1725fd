#include "resmamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace rmb {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                    shape_to_string(b.shape()));
    }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank)
{
    if (x.dim() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                    shape_to_string(x.shape()));
    }
}

template <class Forward, class Derivative>
Tensor unary(const Tensor& x, Forward forward, Derivative derivative)
{
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
    return make_result(x.shape(), std::move(out), {x}, [x, derivative](auto g, auto y) {
        const auto xv = x.values();
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * derivative(xv[i], y[i]);
    });
}

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b)
{
    require_same_shape("add", a, b);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](auto g, auto) {
        for (const auto& t : {a, b}) {
            if (!t.requires_grad()) continue;
            auto gt = t.grad_buffer();
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b)
{
    require_same_shape("sub", a, b);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](auto g, auto) {
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b)
{
    require_same_shape("mul", a, b);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](auto g, auto) {
        const auto av = a.values();
        const auto bv = b.values();
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor)
{
    return unary(a, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor square(const Tensor& a)
{
    return unary(a, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor exp(const Tensor& a)
{
    return unary(a, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor silu(const Tensor& x)
{
    return unary(
        x, [](double v) { return v * logistic(v); },
        [](double v, double) {
            const double s = logistic(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor relu(const Tensor& x)
{
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x)
{
    return unary(x, [](double v) { return logistic(v); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x)
{
    return unary(
        x, [](double v) { return v > 20.0 ? v : std::log1p(std::exp(v)); }, [](double v, double) { return logistic(v); });
}

Tensor softmax_lastaxis(const Tensor& x)
{
    if (x.dim() == 0) throw std::invalid_argument("softmax_lastaxis: needs at least one axis");
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double* o = out.data() + r * d;
        const double peak = *std::max_element(in, in + d);
        double total = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            o[j] = std::exp(in[j] - peak);
            total += o[j];
        }
        for (std::size_t j = 0; j < d; ++j) o[j] /= total;
    }
    return make_result(x.shape(), std::move(out), {x}, [x, d, rows](auto g, auto y) {
        auto gx = x.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
            for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
        }
    });
}

Tensor log_softmax_lastaxis(const Tensor& x)
{
    if (x.dim() == 0) throw std::invalid_argument("log_softmax_lastaxis: needs at least one axis");
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        const double peak = *std::max_element(in, in + d);
        double total = 0.0;
        for (std::size_t j = 0; j < d; ++j) total += std::exp(in[j] - peak);
        const double log_norm = peak + std::log(total);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[j] - log_norm;
    }
    return make_result(x.shape(), std::move(out), {x}, [x, d, rows](auto g, auto y) {
        auto gx = x.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            double total = 0.0;
            for (std::size_t j = 0; j < d; ++j) total += g[r * d + j];
            for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] - std::exp(y[r * d + j]) * total;
        }
    });
}

Tensor sum(const Tensor& x)
{
    double total = 0.0;
    for (double v : x.values()) total += v;
    return make_result(Shape{}, {total}, {x}, [x](auto g, auto) {
        auto gx = x.grad_buffer();
        for (auto& v : gx) v += g[0];
    });
}

Tensor mean(const Tensor& x)
{
    const double n = static_cast<double>(x.numel());
    double total = 0.0;
    for (double v : x.values()) total += v;
    return make_result(Shape{}, {total / n}, {x}, [x, n](auto g, auto) {
        auto gx = x.grad_buffer();
        for (auto& v : gx) v += g[0] / n;
    });
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target)
{
    require_same_shape("mse_loss", prediction, target);
    const auto pv = prediction.values();
    const auto tv = target.values();
    const double n = static_cast<double>(pv.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double diff = pv[i] - tv[i];
        total += diff * diff;
    }
    return make_result(Shape{}, {total / n}, {prediction, target}, [prediction, target, n](auto g, auto) {
        const auto pv = prediction.values();
        const auto tv = target.values();
        const double factor = 2.0 * g[0] / n;
        if (prediction.requires_grad()) {
            auto gp = prediction.grad_buffer();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += factor * (pv[i] - tv[i]);
        }
        if (target.requires_grad()) {
            auto gt = target.grad_buffer();
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= factor * (pv[i] - tv[i]);
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                                    shape_to_string(b.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.size(0));
    const auto k = static_cast<Eigen::Index>(a.size(1));
    const auto n = static_cast<Eigen::Index>(b.size(1));
    std::vector<double> out(static_cast<std::size_t>(m * n));
    MatrixMap(out.data(), m, n).noalias() = ConstMatrixMap(a.values().data(), m, k) * ConstMatrixMap(b.values().data(), k, n);
    return make_result(Shape{a.size(0), b.size(1)}, std::move(out), {a, b}, [a, b, m, k, n](auto g, auto) {
        const ConstMatrixMap gm(g.data(), m, n);
        if (a.requires_grad()) {
            MatrixMap(a.grad_buffer().data(), m, k).noalias() += gm * ConstMatrixMap(b.values().data(), k, n).transpose();
        }
        if (b.requires_grad()) {
            MatrixMap(b.grad_buffer().data(), k, n).noalias() += ConstMatrixMap(a.values().data(), m, k).transpose() * gm;
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias)
{
    require_rank("linear weight", weight, 2);
    if (x.dim() == 0 || x.shape().back() != weight.size(0)) {
        throw std::invalid_argument("linear: input " + shape_to_string(x.shape()) + " does not match weight " +
                                    shape_to_string(weight.shape()));
    }
    if (bias.defined() && bias.shape() != Shape{weight.size(1)}) {
        throw std::invalid_argument("linear: bias shape " + shape_to_string(bias.shape()) + " does not match weight " +
                                    shape_to_string(weight.shape()));
    }
    const auto k = static_cast<Eigen::Index>(weight.size(0));
    const auto n = static_cast<Eigen::Index>(weight.size(1));
    const auto m = static_cast<Eigen::Index>(x.numel() / weight.size(0));
    Shape out_shape = x.shape();
    out_shape.back() = weight.size(1);

    std::vector<double> out(static_cast<std::size_t>(m * n));
    MatrixMap om(out.data(), m, n);
    om.noalias() = ConstMatrixMap(x.values().data(), m, k) * ConstMatrixMap(weight.values().data(), k, n);
    if (bias.defined()) {
        om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), n);
    }
    return make_result(std::move(out_shape), std::move(out), {x, weight, bias}, [x, weight, bias, m, k, n](auto g, auto) {
        const ConstMatrixMap gm(g.data(), m, n);
        if (x.requires_grad()) {
            MatrixMap(x.grad_buffer().data(), m, k).noalias() +=
                gm * ConstMatrixMap(weight.values().data(), k, n).transpose();
        }
        if (weight.requires_grad()) {
            MatrixMap(weight.grad_buffer().data(), k, n).noalias() +=
                ConstMatrixMap(x.values().data(), m, k).transpose() * gm;
        }
        if (bias.defined() && bias.requires_grad()) {
            Eigen::Map<Eigen::RowVectorXd>(bias.grad_buffer().data(), n) += gm.colwise().sum();
        }
    });
}

namespace {

struct ConvGeometry {
    std::ptrdiff_t batch, in_channels, height, width;
    std::ptrdiff_t out_channels, kernel, stride, padding;
    std::ptrdiff_t out_height, out_width;

    // Output columns whose tap kw lands inside the input row.
    std::pair<std::ptrdiff_t, std::ptrdiff_t> column_range(std::ptrdiff_t kw) const
    {
        const std::ptrdiff_t shift = kw - padding;
        std::ptrdiff_t lo = 0;
        if (shift < 0) lo = (-shift + stride - 1) / stride;
        std::ptrdiff_t hi = out_width;
        if (width - 1 - shift < 0) {
            hi = 0;
        } else {
            hi = std::min(out_width, (width - 1 - shift) / stride + 1);
        }
        return {lo, std::max(lo, hi)};
    }
};

void conv_forward(const ConvGeometry& geo, const double* x, const double* w, const double* bias, double* out)
{
    const std::ptrdiff_t plane = geo.out_height * geo.out_width;
    const std::ptrdiff_t jobs = geo.batch * geo.out_channels;
#pragma omp parallel for schedule(static) if (jobs * plane * geo.in_channels > 200000)
    for (std::ptrdiff_t job = 0; job < jobs; ++job) {
        const std::ptrdiff_t b = job / geo.out_channels;
        const std::ptrdiff_t co = job % geo.out_channels;
        double* o = out + job * plane;
        std::fill(o, o + plane, 0.0);
        for (std::ptrdiff_t ci = 0; ci < geo.in_channels; ++ci) {
            const double* xin = x + (b * geo.in_channels + ci) * geo.height * geo.width;
            const double* wk = w + (co * geo.in_channels + ci) * geo.kernel * geo.kernel;
            for (std::ptrdiff_t kh = 0; kh < geo.kernel; ++kh) {
                for (std::ptrdiff_t kw = 0; kw < geo.kernel; ++kw) {
                    const double wv = wk[kh * geo.kernel + kw];
                    const auto [lo, hi] = geo.column_range(kw);
                    for (std::ptrdiff_t oh = 0; oh < geo.out_height; ++oh) {
                        const std::ptrdiff_t ih = oh * geo.stride + kh - geo.padding;
                        if (ih < 0 || ih >= geo.height) continue;
                        const double* row = xin + ih * geo.width + kw - geo.padding;
                        double* orow = o + oh * geo.out_width;
                        if (geo.stride == 1) {
                            for (std::ptrdiff_t ow = lo; ow < hi; ++ow) orow[ow] += wv * row[ow];
                        } else {
                            for (std::ptrdiff_t ow = lo; ow < hi; ++ow) orow[ow] += wv * row[ow * geo.stride];
                        }
                    }
                }
            }
        }
        if (bias) {
            for (std::ptrdiff_t i = 0; i < plane; ++i) o[i] += bias[co];
        }
    }
}

void conv_backward_input(const ConvGeometry& geo, const double* g, const double* w, double* gx)
{
    const std::ptrdiff_t plane = geo.out_height * geo.out_width;
    const std::ptrdiff_t jobs = geo.batch * geo.in_channels;
#pragma omp parallel for schedule(static) if (jobs * plane * geo.out_channels > 200000)
    for (std::ptrdiff_t job = 0; job < jobs; ++job) {
        const std::ptrdiff_t b = job / geo.in_channels;
        const std::ptrdiff_t ci = job % geo.in_channels;
        double* gin = gx + job * geo.height * geo.width;
        for (std::ptrdiff_t co = 0; co < geo.out_channels; ++co) {
            const double* gout = g + (b * geo.out_channels + co) * plane;
            const double* wk = w + (co * geo.in_channels + ci) * geo.kernel * geo.kernel;
            for (std::ptrdiff_t kh = 0; kh < geo.kernel; ++kh) {
                for (std::ptrdiff_t kw = 0; kw < geo.kernel; ++kw) {
                    const double wv = wk[kh * geo.kernel + kw];
                    const auto [lo, hi] = geo.column_range(kw);
                    for (std::ptrdiff_t oh = 0; oh < geo.out_height; ++oh) {
                        const std::ptrdiff_t ih = oh * geo.stride + kh - geo.padding;
                        if (ih < 0 || ih >= geo.height) continue;
                        double* row = gin + ih * geo.width + kw - geo.padding;
                        const double* grow = gout + oh * geo.out_width;
                        for (std::ptrdiff_t ow = lo; ow < hi; ++ow) row[ow * geo.stride] += wv * grow[ow];
                    }
                }
            }
        }
    }
}

void conv_backward_weight(const ConvGeometry& geo, const double* g, const double* x, double* gw, double* gb)
{
    const std::ptrdiff_t plane = geo.out_height * geo.out_width;
#pragma omp parallel for schedule(static) if (geo.batch * plane * geo.in_channels * geo.out_channels > 200000)
    for (std::ptrdiff_t co = 0; co < geo.out_channels; ++co) {
        for (std::ptrdiff_t ci = 0; ci < geo.in_channels; ++ci) {
            double* wk = gw + (co * geo.in_channels + ci) * geo.kernel * geo.kernel;
            for (std::ptrdiff_t kh = 0; kh < geo.kernel; ++kh) {
                for (std::ptrdiff_t kw = 0; kw < geo.kernel; ++kw) {
                    const auto [lo, hi] = geo.column_range(kw);
                    double acc0 = 0.0, acc1 = 0.0;
                    for (std::ptrdiff_t b = 0; b < geo.batch; ++b) {
                        const double* gout = g + (b * geo.out_channels + co) * plane;
                        const double* xin = x + (b * geo.in_channels + ci) * geo.height * geo.width;
                        for (std::ptrdiff_t oh = 0; oh < geo.out_height; ++oh) {
                            const std::ptrdiff_t ih = oh * geo.stride + kh - geo.padding;
                            if (ih < 0 || ih >= geo.height) continue;
                            const double* row = xin + ih * geo.width + kw - geo.padding;
                            const double* grow = gout + oh * geo.out_width;
                            std::ptrdiff_t ow = lo;
                            for (; ow + 1 < hi; ow += 2) {
                                acc0 += grow[ow] * row[ow * geo.stride];
                                acc1 += grow[ow + 1] * row[(ow + 1) * geo.stride];
                            }
                            if (ow < hi) acc0 += grow[ow] * row[ow * geo.stride];
                        }
                    }
                    wk[kh * geo.kernel + kw] += acc0 + acc1;
                }
            }
        }
        if (gb) {
            double acc = 0.0;
            for (std::ptrdiff_t b = 0; b < geo.batch; ++b) {
                const double* gout = g + (b * geo.out_channels + co) * plane;
                for (std::ptrdiff_t i = 0; i < plane; ++i) acc += gout[i];
            }
            gb[co] += acc;
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding)
{
    require_rank("conv2d input", x, 4);
    require_rank("conv2d weight", weight, 4);
    if (weight.size(1) != x.size(1) || weight.size(2) != weight.size(3)) {
        throw std::invalid_argument("conv2d: weight " + shape_to_string(weight.shape()) + " does not fit input " +
                                    shape_to_string(x.shape()));
    }
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    if (bias.defined() && bias.shape() != Shape{weight.size(0)}) {
        throw std::invalid_argument("conv2d: bias shape " + shape_to_string(bias.shape()));
    }
    const auto k = static_cast<std::ptrdiff_t>(weight.size(2));
    const auto h = static_cast<std::ptrdiff_t>(x.size(2));
    const auto w = static_cast<std::ptrdiff_t>(x.size(3));
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto p = static_cast<std::ptrdiff_t>(padding);
    if (h + 2 * p < k || w + 2 * p < k) {
        throw std::invalid_argument("conv2d: non-positive output extent for input " + shape_to_string(x.shape()) +
                                    " kernel " + std::to_string(k) + " padding " + std::to_string(p));
    }
    const ConvGeometry geo{static_cast<std::ptrdiff_t>(x.size(0)),
                           static_cast<std::ptrdiff_t>(x.size(1)),
                           h,
                           w,
                           static_cast<std::ptrdiff_t>(weight.size(0)),
                           k,
                           s,
                           p,
                           (h + 2 * p - k) / s + 1,
                           (w + 2 * p - k) / s + 1};

    Shape out_shape{x.size(0), weight.size(0), static_cast<std::size_t>(geo.out_height),
                    static_cast<std::size_t>(geo.out_width)};
    std::vector<double> out(shape_numel(out_shape));
    conv_forward(geo, x.values().data(), weight.values().data(), bias.defined() ? bias.values().data() : nullptr,
                 out.data());

    return make_result(std::move(out_shape), std::move(out), {x, weight, bias}, [x, weight, bias, geo](auto g, auto) {
        if (x.requires_grad()) conv_backward_input(geo, g.data(), weight.values().data(), x.grad_buffer().data());
        const bool want_bias = bias.defined() && bias.requires_grad();
        if (weight.requires_grad() || want_bias) {
            std::vector<double> scratch;
            double* gw = nullptr;
            if (weight.requires_grad()) {
                gw = weight.grad_buffer().data();
            } else {
                scratch.assign(weight.numel(), 0.0);
                gw = scratch.data();
            }
            conv_backward_weight(geo, g.data(), x.values().data(), gw, want_bias ? bias.grad_buffer().data() : nullptr);
        }
    });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps)
{
    if (x.dim() == 0) throw std::invalid_argument("layernorm: input needs at least one axis");
    const std::size_t d = x.shape().back();
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
        throw std::invalid_argument("layernorm: gamma/beta must have shape [" + std::to_string(d) + "]");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("layernorm: eps must be positive");
    const std::size_t rows = x.numel() / d;
    const auto xv = x.values();
    const auto gv = gamma.values();
    const auto bv = beta.values();

    std::vector<double> normalized(xv.size());
    std::vector<double> inv_std(rows);
    std::vector<double> out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + eps);
        inv_std[r] = rstd;
        for (std::size_t j = 0; j < d; ++j) {
            const double xhat = (in[j] - mu) * rstd;
            normalized[r * d + j] = xhat;
            out[r * d + j] = gv[j] * xhat + bv[j];
        }
    }

    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [x, gamma, beta, d, rows, normalized = std::move(normalized),
                        inv_std = std::move(inv_std)](auto g, auto) {
                           const auto gv = gamma.values();
                           if (gamma.requires_grad()) {
                               auto gg = gamma.grad_buffer();
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * normalized[r * d + j];
                           }
                           if (beta.requires_grad()) {
                               auto gb = beta.grad_buffer();
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                           }
                           if (!x.requires_grad()) return;
                           auto gx = x.grad_buffer();
                           const double inv_d = 1.0 / static_cast<double>(d);
                           for (std::size_t r = 0; r < rows; ++r) {
                               double mean_g = 0.0;
                               double mean_gx = 0.0;
                               for (std::size_t j = 0; j < d; ++j) {
                                   const double gh = g[r * d + j] * gv[j];
                                   mean_g += gh;
                                   mean_gx += gh * normalized[r * d + j];
                               }
                               mean_g *= inv_d;
                               mean_gx *= inv_d;
                               for (std::size_t j = 0; j < d; ++j) {
                                   const double gh = g[r * d + j] * gv[j];
                                   gx[r * d + j] += inv_std[r] * (gh - mean_g - normalized[r * d + j] * mean_gx);
                               }
                           }
                       });
}

Tensor upsample_nearest2x(const Tensor& x)
{
    require_rank("upsample_nearest2x", x, 4);
    const std::size_t planes = x.size(0) * x.size(1);
    const std::size_t h = x.size(2);
    const std::size_t w = x.size(3);
    const auto xv = x.values();
    std::vector<double> out(planes * 4 * h * w);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* in = xv.data() + p * h * w;
        double* o = out.data() + p * 4 * h * w;
        for (std::size_t i = 0; i < 2 * h; ++i) {
            for (std::size_t j = 0; j < 2 * w; ++j) o[i * 2 * w + j] = in[(i / 2) * w + j / 2];
        }
    }
    return make_result(Shape{x.size(0), x.size(1), 2 * h, 2 * w}, std::move(out), {x}, [x, planes, h, w](auto g, auto) {
        auto gx = x.grad_buffer();
        for (std::size_t p = 0; p < planes; ++p) {
            const double* go = g.data() + p * 4 * h * w;
            double* gi = gx.data() + p * h * w;
            for (std::size_t i = 0; i < 2 * h; ++i) {
                for (std::size_t j = 0; j < 2 * w; ++j) gi[(i / 2) * w + j / 2] += go[i * 2 * w + j];
            }
        }
    });
}

Tensor global_avg_pool(const Tensor& x)
{
    require_rank("global_avg_pool", x, 4);
    const std::size_t planes = x.size(0) * x.size(1);
    const std::size_t area = x.size(2) * x.size(3);
    const auto xv = x.values();
    std::vector<double> out(planes);
    for (std::size_t p = 0; p < planes; ++p) {
        double total = 0.0;
        for (std::size_t i = 0; i < area; ++i) total += xv[p * area + i];
        out[p] = total / static_cast<double>(area);
    }
    return make_result(Shape{x.size(0), x.size(1)}, std::move(out), {x}, [x, planes, area](auto g, auto) {
        auto gx = x.grad_buffer();
        const double inv = 1.0 / static_cast<double>(area);
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t i = 0; i < area; ++i) gx[p * area + i] += g[p] * inv;
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b)
{
    require_rank("concat_channels", a, 4);
    require_rank("concat_channels", b, 4);
    if (a.size(0) != b.size(0) || a.size(2) != b.size(2) || a.size(3) != b.size(3)) {
        throw std::invalid_argument("concat_channels: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                                    shape_to_string(b.shape()));
    }
    const std::size_t batch = a.size(0);
    const std::size_t a_block = a.numel() / batch;
    const std::size_t b_block = b.numel() / batch;
    std::vector<double> out(a.numel() + b.numel());
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t n = 0; n < batch; ++n) {
        std::copy_n(av.data() + n * a_block, a_block, out.data() + n * (a_block + b_block));
        std::copy_n(bv.data() + n * b_block, b_block, out.data() + n * (a_block + b_block) + a_block);
    }
    return make_result(Shape{batch, a.size(1) + b.size(1), a.size(2), a.size(3)}, std::move(out), {a, b},
                       [a, b, batch, a_block, b_block](auto g, auto) {
                           const std::size_t stride = a_block + b_block;
                           if (a.requires_grad()) {
                               auto ga = a.grad_buffer();
                               for (std::size_t n = 0; n < batch; ++n)
                                   for (std::size_t i = 0; i < a_block; ++i) ga[n * a_block + i] += g[n * stride + i];
                           }
                           if (b.requires_grad()) {
                               auto gb = b.grad_buffer();
                               for (std::size_t n = 0; n < batch; ++n)
                                   for (std::size_t i = 0; i < b_block; ++i)
                                       gb[n * b_block + i] += g[n * stride + a_block + i];
                           }
                       });
}

Tensor reshape(const Tensor& x, Shape shape)
{
    if (shape_numel(shape) != x.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                                    shape_to_string(shape));
    }
    const auto xv = x.values();
    return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), {x}, [x](auto g, auto) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
}

Tensor gather(const Tensor& x, const std::vector<std::size_t>& index, Shape out_shape)
{
    if (shape_numel(out_shape) != index.size()) {
        throw std::invalid_argument("gather: index length does not match output shape " + shape_to_string(out_shape));
    }
    const auto xv = x.values();
    std::vector<double> out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= xv.size()) throw std::out_of_range("gather: index out of range");
        out[i] = xv[index[i]];
    }
    return make_result(std::move(out_shape), std::move(out), {x}, [x, index](auto g, auto) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < index.size(); ++i) gx[index[i]] += g[i];
    });
}

Tensor to_tokens(const Tensor& x)
{
    require_rank("to_tokens", x, 4);
    const std::size_t batch = x.size(0), channels = x.size(1), area = x.size(2) * x.size(3);
    std::vector<std::size_t> index(x.numel());
    std::size_t i = 0;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < area; ++p)
            for (std::size_t c = 0; c < channels; ++c) index[i++] = (b * channels + c) * area + p;
    return gather(x, index, Shape{batch, area, channels});
}

Tensor from_tokens(const Tensor& tokens, std::size_t height, std::size_t width)
{
    require_rank("from_tokens", tokens, 3);
    if (tokens.size(1) != height * width) {
        throw std::invalid_argument("from_tokens: sequence length " + std::to_string(tokens.size(1)) +
                                    " does not match " + std::to_string(height) + "x" + std::to_string(width));
    }
    const std::size_t batch = tokens.size(0), channels = tokens.size(2), area = height * width;
    std::vector<std::size_t> index(tokens.numel());
    std::size_t i = 0;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < area; ++p) index[i++] = (b * area + p) * channels + c;
    return gather(tokens, index, Shape{batch, channels, height, width});
}

}  // namespace rmb
