#include "resmamba/tsmamba.hpp"

#include <cmath>
#include <stdexcept>

#include "resmamba/ops.hpp"

namespace rmb {

namespace {

std::vector<std::size_t> inverse(const std::vector<std::size_t>& order)
{
    std::vector<std::size_t> inv(order.size());
    for (std::size_t t = 0; t < order.size(); ++t) inv[order[t]] = t;
    return inv;
}

// Reorders the sequence axis of [B,L,C]: out[b,t,:] = x[b,order[t],:].
Tensor permute_sequence(const Tensor& x, const std::vector<std::size_t>& order)
{
    const std::size_t batch = x.size(0), length = x.size(1), channels = x.size(2);
    std::vector<std::size_t> index(x.numel());
    std::size_t i = 0;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < length; ++t)
            for (std::size_t c = 0; c < channels; ++c) index[i++] = (b * length + order[t]) * channels + c;
    return gather(x, index, x.shape());
}

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

}  // namespace

std::string_view orientation_name(Orientation o)
{
    switch (o) {
        case Orientation::RowMajorForward: return "row_forward";
        case Orientation::RowMajorBackward: return "row_backward";
        case Orientation::ColMajorForward: return "col_forward";
    }
    return "unknown";
}

std::vector<std::size_t> orientation_order(std::size_t height, std::size_t width, Orientation o)
{
    const std::size_t area = height * width;
    std::vector<std::size_t> order(area);
    for (std::size_t t = 0; t < area; ++t) {
        switch (o) {
            case Orientation::RowMajorForward: order[t] = t; break;
            case Orientation::RowMajorBackward: order[t] = area - 1 - t; break;
            case Orientation::ColMajorForward: order[t] = (t % height) * width + t / height; break;
        }
    }
    return order;
}

Tensor flatten_oriented(const Tensor& x, Orientation o)
{
    if (x.dim() != 4) throw std::invalid_argument("flatten_oriented: expected [B,C,H,W], got " + shape_to_string(x.shape()));
    return permute_sequence(to_tokens(x), orientation_order(x.size(2), x.size(3), o));
}

Tensor unflatten_oriented(const Tensor& seq, Orientation o, std::size_t height, std::size_t width)
{
    if (seq.dim() != 3 || seq.size(1) != height * width) {
        throw std::invalid_argument("unflatten_oriented: sequence " + shape_to_string(seq.shape()) + " does not fit " +
                                    std::to_string(height) + "x" + std::to_string(width));
    }
    return from_tokens(permute_sequence(seq, inverse(orientation_order(height, width, o))), height, width);
}

void TSMambaConfig::validate() const
{
    if (num_layers == 0) throw std::invalid_argument("TSMambaConfig: num_layers must be positive");
    if (widths.size() != num_layers) {
        throw std::invalid_argument("TSMambaConfig: " + std::to_string(widths.size()) + " widths for " +
                                    std::to_string(num_layers) + " layers");
    }
    for (auto w : widths) {
        if (w == 0) throw std::invalid_argument("TSMambaConfig: widths must be positive");
    }
    if (d_state == 0 || mlp_ratio == 0 || in_channels == 0) {
        throw std::invalid_argument("TSMambaConfig: d_state, mlp_ratio and in_channels must be positive");
    }
    const std::size_t factor = std::size_t{1} << num_layers;
    if (image_height == 0 || image_width == 0 || image_height % factor != 0 || image_width % factor != 0) {
        throw std::invalid_argument("TSMambaConfig: image size " + std::to_string(image_height) + "x" +
                                    std::to_string(image_width) + " is not divisible by " + std::to_string(factor));
    }
}

OrientedScan OrientedScan::create(std::size_t channels, std::size_t d_state, Rng& rng)
{
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(channels));
    OrientedScan s;
    s.delta_weight = normal_parameter({channels, channels}, proj_std, rng);
    // Initial step sizes log-uniform in [1e-3, 1e-1].
    std::vector<double> bias(channels);
    for (auto& b : bias) {
        const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
        b = inverse_softplus(dt);
    }
    s.delta_bias = Tensor({channels}, std::move(bias), true);
    s.b_weight = normal_parameter({channels, d_state}, proj_std, rng);
    s.c_weight = normal_parameter({channels, d_state}, proj_std, rng);
    std::vector<double> log_a(channels * d_state);
    for (std::size_t d = 0; d < channels; ++d)
        for (std::size_t n = 0; n < d_state; ++n) log_a[d * d_state + n] = std::log(static_cast<double>(n + 1));
    s.log_a = Tensor({channels, d_state}, std::move(log_a), true);
    s.d_skip = constant_parameter({channels}, 1.0);
    return s;
}

SSMParams OrientedScan::params_for(const Tensor& seq) const
{
    SSMParams p;
    p.delta = softplus(linear(seq, delta_weight, delta_bias));
    p.b = linear(seq, b_weight, Tensor{});
    p.c = linear(seq, c_weight, Tensor{});
    p.a = scale(exp(log_a), -1.0);
    p.d_skip = d_skip;
    return p;
}

void OrientedScan::collect(const std::string& prefix, NamedParameters& out) const
{
    out.emplace_back(prefix + "delta_weight", delta_weight);
    out.emplace_back(prefix + "delta_bias", delta_bias);
    out.emplace_back(prefix + "b_weight", b_weight);
    out.emplace_back(prefix + "c_weight", c_weight);
    out.emplace_back(prefix + "log_a", log_a);
    out.emplace_back(prefix + "d_skip", d_skip);
}

Tensor ss2d_tokens(const Tensor& tokens, std::size_t height, std::size_t width, const OrientedScans& scans,
                   ScanMode mode)
{
    if (tokens.dim() != 3 || tokens.size(1) != height * width) {
        throw std::invalid_argument("ss2d: tokens " + shape_to_string(tokens.shape()) + " do not fit " +
                                    std::to_string(height) + "x" + std::to_string(width));
    }
    if (height * width == 0) throw std::invalid_argument("ss2d: empty image");
    const std::size_t channels = tokens.size(2);
    for (const auto& s : scans) {
        if (s.d_skip.numel() != channels) {
            throw std::invalid_argument("ss2d: scan parameters built for " + std::to_string(s.d_skip.numel()) +
                                        " channels, input has " + std::to_string(channels));
        }
    }

    Tensor merged;
    for (std::size_t k = 0; k < kOrientations.size(); ++k) {
        const auto order = orientation_order(height, width, kOrientations[k]);
        const Tensor seq = permute_sequence(tokens, order);
        const Tensor y = selective_scan(seq, scans[k].params_for(seq), mode);
        const Tensor restored = permute_sequence(y, inverse(order));
        merged = merged.defined() ? add(merged, restored) : restored;
    }
    return scale(merged, 1.0 / static_cast<double>(kOrientations.size()));
}

Tensor ss2d(const Tensor& x, const OrientedScans& scans, ScanMode mode)
{
    if (x.dim() != 4) throw std::invalid_argument("ss2d: expected [B,C,H,W], got " + shape_to_string(x.shape()));
    return from_tokens(ss2d_tokens(to_tokens(x), x.size(2), x.size(3), scans, mode), x.size(2), x.size(3));
}

TSMambaBlock TSMambaBlock::create(std::size_t channels, std::size_t d_state, std::size_t mlp_ratio, Rng& rng)
{
    TSMambaBlock block;
    block.channels = channels;
    block.norm1_gamma = constant_parameter({channels}, 1.0);
    block.norm1_beta = zeros_parameter({channels});
    for (auto& s : block.scans) s = OrientedScan::create(channels, d_state, rng);
    block.out_weight = zeros_parameter({channels, channels});
    block.out_bias = zeros_parameter({channels});
    block.norm2_gamma = constant_parameter({channels}, 1.0);
    block.norm2_beta = zeros_parameter({channels});
    const std::size_t hidden = channels * mlp_ratio;
    block.mlp_in_weight = normal_parameter({channels, hidden}, std::sqrt(2.0 / static_cast<double>(channels)), rng);
    block.mlp_in_bias = zeros_parameter({hidden});
    block.mlp_out_weight = zeros_parameter({hidden, channels});
    block.mlp_out_bias = zeros_parameter({channels});
    return block;
}

Tensor TSMambaBlock::forward(const Tensor& x, ScanMode mode) const
{
    if (x.dim() != 4 || x.size(1) != channels) {
        throw std::invalid_argument("TSMambaBlock: expected [B," + std::to_string(channels) + ",H,W], got " +
                                    shape_to_string(x.shape()));
    }
    const std::size_t height = x.size(2), width = x.size(3);
    const Tensor tokens = to_tokens(x);
    const Tensor mixed = ss2d_tokens(layernorm(tokens, norm1_gamma, norm1_beta), height, width, scans, mode);
    const Tensor x1 = add(tokens, linear(mixed, out_weight, out_bias));
    const Tensor hidden = silu(linear(layernorm(x1, norm2_gamma, norm2_beta), mlp_in_weight, mlp_in_bias));
    const Tensor x2 = add(x1, linear(hidden, mlp_out_weight, mlp_out_bias));
    return from_tokens(x2, height, width);
}

void TSMambaBlock::collect(const std::string& prefix, NamedParameters& out) const
{
    out.emplace_back(prefix + "norm1.gamma", norm1_gamma);
    out.emplace_back(prefix + "norm1.beta", norm1_beta);
    for (std::size_t k = 0; k < scans.size(); ++k) {
        scans[k].collect(prefix + "ss2d." + std::string(orientation_name(kOrientations[k])) + ".", out);
    }
    out.emplace_back(prefix + "ss2d.out_weight", out_weight);
    out.emplace_back(prefix + "ss2d.out_bias", out_bias);
    out.emplace_back(prefix + "norm2.gamma", norm2_gamma);
    out.emplace_back(prefix + "norm2.beta", norm2_beta);
    out.emplace_back(prefix + "mlp.in_weight", mlp_in_weight);
    out.emplace_back(prefix + "mlp.in_bias", mlp_in_bias);
    out.emplace_back(prefix + "mlp.out_weight", mlp_out_weight);
    out.emplace_back(prefix + "mlp.out_bias", mlp_out_bias);
}

TSMambaEncoder::TSMambaEncoder(const TSMambaConfig& config, Rng& rng) : config_(config)
{
    config_.validate();
    std::size_t in = config_.in_channels;
    for (std::size_t i = 0; i < config_.num_layers; ++i) {
        const std::size_t width = config_.widths[i];
        Stage stage;
        stage.down_weight = conv_kernel_parameter(width, in, 3, rng);
        stage.down_bias = zeros_parameter({width});
        stage.block = TSMambaBlock::create(width, config_.d_state, config_.mlp_ratio, rng);
        stages_.push_back(std::move(stage));
        in = width;
    }
}

EncoderOutput TSMambaEncoder::forward(const Tensor& x) const
{
    const std::size_t factor = std::size_t{1} << config_.num_layers;
    if (x.dim() != 4 || x.size(1) != config_.in_channels) {
        throw std::invalid_argument("encoder: expected [B," + std::to_string(config_.in_channels) + ",H,W], got " +
                                    shape_to_string(x.shape()));
    }
    if (x.size(2) % factor != 0 || x.size(3) % factor != 0) {
        throw std::invalid_argument("encoder: spatial extents of " + shape_to_string(x.shape()) +
                                    " are not divisible by " + std::to_string(factor));
    }
    EncoderOutput out;
    Tensor h = x;
    for (const auto& stage : stages_) {
        h = conv2d(h, stage.down_weight, stage.down_bias, 2, 1);
        h = stage.block.forward(h, config_.scan_mode);
        out.skips.push_back(h);
    }
    out.latent = h;
    return out;
}

void TSMambaEncoder::collect(const std::string& prefix, NamedParameters& out) const
{
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        const std::string stage_prefix = prefix + "stage" + std::to_string(i) + ".";
        out.emplace_back(stage_prefix + "down.weight", stages_[i].down_weight);
        out.emplace_back(stage_prefix + "down.bias", stages_[i].down_bias);
        stages_[i].block.collect(stage_prefix + "block.", out);
    }
}

std::size_t tsmamba_block_parameter_count(std::size_t channels, std::size_t d_state, std::size_t mlp_ratio)
{
    const std::size_t c = channels, n = d_state, hidden = channels * mlp_ratio;
    const std::size_t norm = 2 * c;
    const std::size_t per_orientation = linear_parameter_count(c, c) + 2 * linear_parameter_count(c, n, false) +
                                        c * n /* log_a */ + c /* d_skip */;
    return norm + 3 * per_orientation + linear_parameter_count(c, c) + norm + linear_parameter_count(c, hidden) +
           linear_parameter_count(hidden, c);
}

std::size_t encoder_parameter_count(const TSMambaConfig& config)
{
    std::size_t total = 0;
    std::size_t in = config.in_channels;
    for (auto width : config.widths) {
        total += conv_parameter_count(width, 3, in) + tsmamba_block_parameter_count(width, config.d_state, config.mlp_ratio);
        in = width;
    }
    return total;
}

}  // namespace rmb
