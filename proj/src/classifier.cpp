#include "resmamba/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "resmamba/ops.hpp"

namespace rmb {

ClassifierConfig ClassifierConfig::resnet18(std::size_t in_channels, std::size_t num_classes)
{
    ClassifierConfig c;
    c.in_channels = in_channels;
    c.num_classes = num_classes;
    c.widths = {64, 128, 256, 512};
    c.blocks = {2, 2, 2, 2};
    c.stem_kernel = 7;
    c.stem_stride = 2;
    return c;
}

void ClassifierConfig::validate() const
{
    if (in_channels == 0 || num_classes < 2) {
        throw std::invalid_argument("ClassifierConfig: need in_channels > 0 and at least two classes");
    }
    if (widths.empty() || widths.size() != blocks.size()) {
        throw std::invalid_argument("ClassifierConfig: widths and blocks must be non-empty and of equal length");
    }
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] == 0 || blocks[i] == 0) throw std::invalid_argument("ClassifierConfig: zero width or block count");
    }
    if (stem_kernel == 0 || stem_kernel % 2 == 0 || stem_stride == 0) {
        throw std::invalid_argument("ClassifierConfig: stem kernel must be odd and stride positive");
    }
}

ClassifierModel::ClassifierModel(const ClassifierConfig& config, std::uint64_t seed) : config_(config)
{
    config_.validate();
    Rng rng(seed);
    stem_weight_ = conv_kernel_parameter(config_.widths.front(), config_.in_channels, config_.stem_kernel, rng);
    stem_bias_ = zeros_parameter({config_.widths.front()});
    std::size_t in = config_.widths.front();
    for (std::size_t s = 0; s < config_.widths.size(); ++s) {
        const std::size_t width = config_.widths[s];
        for (std::size_t b = 0; b < config_.blocks[s]; ++b) {
            ResidualBlock block;
            block.stride = (s > 0 && b == 0) ? 2 : 1;
            block.conv1_weight = conv_kernel_parameter(width, in, 3, rng);
            block.conv1_bias = zeros_parameter({width});
            block.conv2_weight = zeros_parameter({width, width, 3, 3});
            block.conv2_bias = zeros_parameter({width});
            if (block.stride != 1 || in != width) {
                block.proj_weight = conv_kernel_parameter(width, in, 1, rng);
                block.proj_bias = zeros_parameter({width});
            }
            blocks_.push_back(std::move(block));
            in = width;
        }
    }
    reset_head();
}

void ClassifierModel::reset_head()
{
    head_weight_ = zeros_parameter({config_.widths.back(), config_.num_classes});
    head_bias_ = zeros_parameter({config_.num_classes});
}

Tensor ClassifierModel::forward(const Tensor& x) const
{
    if (x.dim() != 4 || x.size(1) != config_.in_channels) {
        throw std::invalid_argument("classifier: expected [B," + std::to_string(config_.in_channels) +
                                    ",H,W] input, got " + shape_to_string(x.shape()));
    }
    Tensor h = relu(conv2d(x, stem_weight_, stem_bias_, config_.stem_stride, config_.stem_kernel / 2));
    for (const auto& block : blocks_) {
        const Tensor branch = conv2d(relu(conv2d(h, block.conv1_weight, block.conv1_bias, block.stride, 1)),
                                     block.conv2_weight, block.conv2_bias, 1, 1);
        const Tensor shortcut =
            block.proj_weight.defined() ? conv2d(h, block.proj_weight, block.proj_bias, block.stride, 0) : h;
        h = relu(add(branch, shortcut));
    }
    return linear(global_avg_pool(h), head_weight_, head_bias_);
}

NamedParameters ClassifierModel::body_parameters() const
{
    NamedParameters out;
    out.emplace_back("stem.weight", stem_weight_);
    out.emplace_back("stem.bias", stem_bias_);
    std::size_t index = 0;
    for (std::size_t s = 0; s < config_.widths.size(); ++s) {
        for (std::size_t b = 0; b < config_.blocks[s]; ++b, ++index) {
            const auto& block = blocks_[index];
            const std::string prefix = "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
            out.emplace_back(prefix + "conv1.weight", block.conv1_weight);
            out.emplace_back(prefix + "conv1.bias", block.conv1_bias);
            out.emplace_back(prefix + "conv2.weight", block.conv2_weight);
            out.emplace_back(prefix + "conv2.bias", block.conv2_bias);
            if (block.proj_weight.defined()) {
                out.emplace_back(prefix + "proj.weight", block.proj_weight);
                out.emplace_back(prefix + "proj.bias", block.proj_bias);
            }
        }
    }
    return out;
}

NamedParameters ClassifierModel::named_parameters() const
{
    auto out = body_parameters();
    out.emplace_back("head.weight", head_weight_);
    out.emplace_back("head.bias", head_bias_);
    return out;
}

std::vector<std::size_t> predict(const Tensor& logits)
{
    if (logits.dim() != 2) throw std::invalid_argument("predict: logits must be [B, K]");
    const std::size_t rows = logits.size(0), k = logits.size(1);
    const auto v = logits.values();
    std::vector<std::size_t> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (v[r * k + j] > v[r * k + best]) best = j;
        }
        out[r] = best;
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels)
{
    if (logits.dim() != 2 || logits.size(0) != labels.size()) {
        throw std::invalid_argument("cross_entropy: logits " + shape_to_string(logits.shape()) + " vs " +
                                    std::to_string(labels.size()) + " labels");
    }
    const std::size_t rows = logits.size(0), k = logits.size(1);
    for (auto label : labels) {
        if (label >= k) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                        std::to_string(k) + ")");
        }
    }
    const auto v = logits.values();
    std::vector<double> probs(v.size());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = v.data() + r * k;
        const double peak = *std::max_element(row, row + k);
        double norm = 0.0;
        for (std::size_t j = 0; j < k; ++j) norm += std::exp(row[j] - peak);
        for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(row[j] - peak) / norm;
        total -= row[labels[r]] - peak - std::log(norm);
    }
    std::vector<std::size_t> targets(labels.begin(), labels.end());
    return make_result(Shape{}, {total / static_cast<double>(rows)}, {logits},
                       [logits, targets, rows, k, probs = std::move(probs)](auto g, auto) {
                           auto gl = logits.grad_buffer();
                           const double factor = g[0] / static_cast<double>(rows);
                           for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t j = 0; j < k; ++j) {
                                   const double onehot = j == targets[r] ? 1.0 : 0.0;
                                   gl[r * k + j] += factor * (probs[r * k + j] - onehot);
                               }
                           }
                       });
}

bool load_weights(ClassifierModel& model, const Checkpoint& checkpoint)
{
    const auto body = model.body_parameters();
    Checkpoint body_only;
    for (const auto& t : checkpoint.tensors) {
        if (t.name != "head.weight" && t.name != "head.bias") body_only.tensors.push_back(t);
    }
    restore_parameters(body, body_only);

    const auto* head_w = checkpoint.find("head.weight");
    const auto* head_b = checkpoint.find("head.bias");
    const auto params = model.named_parameters();
    const Tensor& model_head_w = params[params.size() - 2].second;
    const Tensor& model_head_b = params.back().second;
    if (head_w && head_b && head_w->shape == model_head_w.shape() && head_b->shape == model_head_b.shape()) {
        std::copy(head_w->values.begin(), head_w->values.end(), Tensor(model_head_w).mutable_values().begin());
        std::copy(head_b->values.begin(), head_b->values.end(), Tensor(model_head_b).mutable_values().begin());
        return false;
    }
    std::clog << "load_weights: checkpoint head "
              << (head_w ? shape_to_string(head_w->shape) : std::string("<missing>")) << " does not fit "
              << model.config().num_classes << " classes; head re-initialised\n";
    model.reset_head();
    return true;
}

std::size_t classifier_parameter_count(const ClassifierConfig& config)
{
    std::size_t total = conv_parameter_count(config.widths.front(), config.stem_kernel, config.in_channels);
    std::size_t in = config.widths.front();
    for (std::size_t s = 0; s < config.widths.size(); ++s) {
        const std::size_t width = config.widths[s];
        for (std::size_t b = 0; b < config.blocks[s]; ++b) {
            const bool project = (s > 0 && b == 0) || in != width;
            total += conv_parameter_count(width, 3, in) + conv_parameter_count(width, 3, width);
            if (project) total += conv_parameter_count(width, 1, in);
            in = width;
        }
    }
    return total + linear_parameter_count(config.widths.back(), config.num_classes);
}

}  // namespace rmb
