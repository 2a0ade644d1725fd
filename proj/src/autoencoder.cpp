#include "resmamba/autoencoder.hpp"

#include <cmath>
#include <stdexcept>

#include "resmamba/ops.hpp"

namespace rmb {

namespace {

Rng seeded(std::uint64_t seed) { return Rng(seed); }

}  // namespace

AEModel::AEModel(const TSMambaConfig& config, std::uint64_t seed)
    : AEModel(config, seeded(seed))
{
}

AEModel::AEModel(const TSMambaConfig& config, Rng rng) : encoder_(config, rng)
{
    const auto& widths = encoder_.config().widths;
    const std::size_t layers = widths.size();
    for (std::size_t j = 0; j < layers; ++j) {
        const std::size_t in = widths[layers - 1 - j];
        const bool last = j + 1 == layers;
        const std::size_t out = last ? widths.front() : widths[layers - 2 - j];
        DecoderStage stage;
        stage.up_weight = conv_kernel_parameter(out, in, 3, rng);
        stage.up_bias = zeros_parameter({out});
        if (!last) {
            stage.skip_index = layers - 2 - j;
            stage.merge_weight = conv_kernel_parameter(out, 2 * out, 3, rng);
            stage.merge_bias = zeros_parameter({out});
        }
        decoder_.push_back(std::move(stage));
    }
    head_weight_ = conv_kernel_parameter(encoder_.config().in_channels, widths.front(), 3, rng);
    head_bias_ = zeros_parameter({encoder_.config().in_channels});
}

Tensor AEModel::forward(const Tensor& x) const
{
    const auto& cfg = config();
    const Shape expected{x.dim() == 4 ? x.size(0) : 0, cfg.in_channels, cfg.image_height, cfg.image_width};
    if (x.dim() != 4 || x.shape() != expected) {
        throw std::invalid_argument("autoencoder: input " + shape_to_string(x.shape()) + " does not match config [B," +
                                    std::to_string(cfg.in_channels) + "," + std::to_string(cfg.image_height) + "," +
                                    std::to_string(cfg.image_width) + "]");
    }
    const auto encoded = encoder_.forward(x);
    Tensor h = encoded.latent;
    for (const auto& stage : decoder_) {
        h = silu(conv2d(upsample_nearest2x(h), stage.up_weight, stage.up_bias, 1, 1));
        if (stage.merge_weight.defined()) {
            h = silu(conv2d(concat_channels(h, encoded.skips[stage.skip_index]), stage.merge_weight, stage.merge_bias, 1, 1));
        }
    }
    return sigmoid(conv2d(h, head_weight_, head_bias_, 1, 1));
}

NamedParameters AEModel::named_parameters() const
{
    NamedParameters out;
    encoder_.collect("encoder.", out);
    for (std::size_t j = 0; j < decoder_.size(); ++j) {
        const std::string prefix = "decoder.stage" + std::to_string(j) + ".";
        out.emplace_back(prefix + "up.weight", decoder_[j].up_weight);
        out.emplace_back(prefix + "up.bias", decoder_[j].up_bias);
        if (decoder_[j].merge_weight.defined()) {
            out.emplace_back(prefix + "merge.weight", decoder_[j].merge_weight);
            out.emplace_back(prefix + "merge.bias", decoder_[j].merge_bias);
        }
    }
    out.emplace_back("decoder.head.weight", head_weight_);
    out.emplace_back("decoder.head.bias", head_bias_);
    return out;
}

Tensor reconstruction_loss(const Tensor& x, const Tensor& reconstruction) { return mse_loss(reconstruction, x); }

Tensor residual(const Tensor& x, const Tensor& reconstruction)
{
    if (x.shape() != reconstruction.shape()) {
        throw std::invalid_argument("residual: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                                    shape_to_string(reconstruction.shape()));
    }
    const auto xv = x.values();
    const auto rv = reconstruction.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(xv[i] - rv[i]);
    return Tensor(x.shape(), std::move(out));
}

std::size_t autoencoder_parameter_count(const TSMambaConfig& config)
{
    std::size_t total = encoder_parameter_count(config);
    const auto& w = config.widths;
    const std::size_t layers = w.size();
    for (std::size_t j = 0; j < layers; ++j) {
        const bool last = j + 1 == layers;
        const std::size_t in = w[layers - 1 - j];
        const std::size_t out = last ? w.front() : w[layers - 2 - j];
        total += conv_parameter_count(out, 3, in);
        if (!last) total += conv_parameter_count(out, 3, 2 * out);
    }
    return total + conv_parameter_count(config.in_channels, 3, w.front());
}

}  // namespace rmb
