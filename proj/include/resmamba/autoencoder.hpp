#pragma once

#include <cstdint>
#include <vector>

#include "resmamba/module.hpp"
#include "resmamba/tsmamba.hpp"

namespace rmb {

/// TSMamba encoder with a conv + nearest-upsample decoder. Each decoder stage
/// upsamples, convolves, and (except the last, full-resolution one) merges
/// the encoder feature map of the same resolution by concatenation and a 3x3
/// conv. A 3x3 conv and a sigmoid produce the reconstruction.
class AEModel {
public:
    AEModel(const TSMambaConfig& config, std::uint64_t seed);

    /// x: [B, in_channels, image_height, image_width] with values in [0, 1].
    Tensor forward(const Tensor& x) const;

    NamedParameters named_parameters() const;
    const TSMambaConfig& config() const { return encoder_.config(); }
    const TSMambaEncoder& encoder() const { return encoder_; }

    struct DecoderStage {
        Tensor up_weight, up_bias;
        Tensor merge_weight, merge_bias;  // undefined on the last stage
        std::size_t skip_index = 0;
    };
    const std::vector<DecoderStage>& decoder() const { return decoder_; }

private:
    AEModel(const TSMambaConfig& config, Rng rng);

    TSMambaEncoder encoder_;
    std::vector<DecoderStage> decoder_;
    Tensor head_weight_, head_bias_;
};

/// Mean squared error over all elements.
Tensor reconstruction_loss(const Tensor& x, const Tensor& reconstruction);

/// Elementwise |x - reconstruction|, untracked.
Tensor residual(const Tensor& x, const Tensor& reconstruction);

/// Closed-form parameter count of the whole autoencoder.
std::size_t autoencoder_parameter_count(const TSMambaConfig& config);

}  // namespace rmb
