#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "resmamba/checkpoint.hpp"
#include "resmamba/module.hpp"
#include "resmamba/rng.hpp"

namespace rmb {

struct ClassifierConfig {
    std::size_t in_channels = 1;
    std::size_t num_classes = 2;
    std::vector<std::size_t> widths{8, 16, 32, 64};
    std::vector<std::size_t> blocks{2, 2, 2, 2};
    std::size_t stem_kernel = 3;
    std::size_t stem_stride = 2;

    /// The 18-layer layout: 7x7/2 stem, widths 64..512, two blocks per stage.
    static ClassifierConfig resnet18(std::size_t in_channels, std::size_t num_classes);

    void validate() const;
};

/// ResNet-style classifier: stem conv, stages of basic residual blocks
/// (two 3x3 convs with identity or 1x1 projection shortcut), global average
/// pooling and a linear head.
class ClassifierModel {
public:
    ClassifierModel(const ClassifierConfig& config, std::uint64_t seed);

    /// [B, in_channels, H, W] -> logits [B, num_classes].
    Tensor forward(const Tensor& x) const;

    NamedParameters named_parameters() const;
    /// Parameters excluding the linear head.
    NamedParameters body_parameters() const;
    const ClassifierConfig& config() const { return config_; }

    /// Fresh zero head; used when a checkpoint head does not fit.
    void reset_head();

    struct ResidualBlock {
        std::size_t stride = 1;
        Tensor conv1_weight, conv1_bias;
        Tensor conv2_weight, conv2_bias;  // zero at init, so the block starts as identity
        Tensor proj_weight, proj_bias;    // undefined for identity shortcuts
    };

private:
    ClassifierConfig config_;
    Tensor stem_weight_, stem_bias_;
    std::vector<ResidualBlock> blocks_;
    Tensor head_weight_, head_bias_;
};

/// Logits of residual images.
inline Tensor classify(const ClassifierModel& model, const Tensor& residuals) { return model.forward(residuals); }

/// Row-wise argmax of [B, K] logits; ties go to the lowest class index.
std::vector<std::size_t> predict(const Tensor& logits);

/// Mean negative log-likelihood of `labels` under softmax(logits).
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

/// Restores a classifier from a checkpoint. Body tensors must match exactly;
/// a head with a different class count is replaced by a fresh one and a
/// notice is written to std::clog. Returns true when the head was reset.
bool load_weights(ClassifierModel& model, const Checkpoint& checkpoint);

std::size_t classifier_parameter_count(const ClassifierConfig& config);

}  // namespace rmb
