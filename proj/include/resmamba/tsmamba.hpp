#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "resmamba/module.hpp"
#include "resmamba/rng.hpp"
#include "resmamba/scan.hpp"
#include "resmamba/tensor.hpp"

namespace rmb {

/// Pixel orders used to turn an image into a sequence.
enum class Orientation {
    RowMajorForward,   // (0,0), (0,1), ... row by row
    RowMajorBackward,  // row-major order reversed
    ColMajorForward,   // (0,0), (1,0), ... column by column
};

inline constexpr std::array<Orientation, 3> kOrientations{Orientation::RowMajorForward, Orientation::RowMajorBackward,
                                                           Orientation::ColMajorForward};

std::string_view orientation_name(Orientation o);

/// order[t] is the row-major pixel index visited at sequence step t.
std::vector<std::size_t> orientation_order(std::size_t height, std::size_t width, Orientation o);

/// [B,C,H,W] -> [B,H*W,C] in the given pixel order.
Tensor flatten_oriented(const Tensor& x, Orientation o);
/// [B,H*W,C] -> [B,C,H,W]; inverse of flatten_oriented.
Tensor unflatten_oriented(const Tensor& seq, Orientation o, std::size_t height, std::size_t width);

struct TSMambaConfig {
    std::size_t num_layers = 4;
    std::vector<std::size_t> widths{16, 32, 64, 128};
    std::size_t d_state = 8;
    std::size_t mlp_ratio = 2;
    std::size_t image_height = 64;
    std::size_t image_width = 64;
    std::size_t in_channels = 1;
    ScanMode scan_mode = ScanMode::Parallel;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;
};

/// Projections producing one orientation's input-dependent scan parameters.
struct OrientedScan {
    Tensor delta_weight;  // [C, C]
    Tensor delta_bias;    // [C]
    Tensor b_weight;      // [C, N]
    Tensor c_weight;      // [C, N]
    Tensor log_a;         // [C, N], A = -exp(log_a)
    Tensor d_skip;        // [C]

    static OrientedScan create(std::size_t channels, std::size_t d_state, Rng& rng);

    /// delta = softplus(seq Wd + bd), B = seq Wb, C = seq Wc for seq [B,L,C].
    SSMParams params_for(const Tensor& seq) const;
    void collect(const std::string& prefix, NamedParameters& out) const;
};

using OrientedScans = std::array<OrientedScan, 3>;

/// 2D selective scan of x [B,C,H,W]: each orientation is flattened, scanned
/// and restored, and the three results are averaged.
Tensor ss2d(const Tensor& x, const OrientedScans& scans, ScanMode mode = ScanMode::Parallel);

/// ss2d on channel-last tokens [B,H*W,C] in row-major pixel order.
Tensor ss2d_tokens(const Tensor& tokens, std::size_t height, std::size_t width, const OrientedScans& scans,
                   ScanMode mode);

/// LayerNorm -> SS2D -> projection, then LayerNorm -> MLP, both pre-norm residual.
struct TSMambaBlock {
    std::size_t channels = 0;
    Tensor norm1_gamma, norm1_beta;
    OrientedScans scans;
    Tensor out_weight, out_bias;  // zero at init
    Tensor norm2_gamma, norm2_beta;
    Tensor mlp_in_weight, mlp_in_bias;
    Tensor mlp_out_weight, mlp_out_bias;  // zero at init

    static TSMambaBlock create(std::size_t channels, std::size_t d_state, std::size_t mlp_ratio, Rng& rng);

    Tensor forward(const Tensor& x, ScanMode mode) const;
    void collect(const std::string& prefix, NamedParameters& out) const;
};

struct EncoderOutput {
    Tensor latent;
    std::vector<Tensor> skips;  // one per stage, finest first
};

/// Stages of [stride-2 3x3 conv -> TSMambaBlock].
class TSMambaEncoder {
public:
    TSMambaEncoder(const TSMambaConfig& config, Rng& rng);

    EncoderOutput forward(const Tensor& x) const;
    void collect(const std::string& prefix, NamedParameters& out) const;

    const TSMambaConfig& config() const { return config_; }

    struct Stage {
        Tensor down_weight;
        Tensor down_bias;
        TSMambaBlock block;
    };
    const std::vector<Stage>& stages() const { return stages_; }

private:
    TSMambaConfig config_;
    std::vector<Stage> stages_;
};

/// Closed-form trainable-parameter counts.
std::size_t tsmamba_block_parameter_count(std::size_t channels, std::size_t d_state, std::size_t mlp_ratio);
std::size_t encoder_parameter_count(const TSMambaConfig& config);

}  // namespace rmb
