#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "resmamba/classifier.hpp"
#include "resmamba/tsmamba.hpp"

namespace rmb {

/// Run configuration read from a flat `key = value` file ('#' starts a comment).
///
/// Keys: profile, image_size, channels, widths, d_state, mlp_ratio, scan_mode,
/// epochs_ae, epochs_clf, lr, lr_clf, batch, seed, target_class, num_classes,
/// train_fraction, clf_arch, clf_widths, clf_blocks.
///
/// `profile` selects the defaults the other keys override: "desk" (60 epochs,
/// lr 1e-3, small classifier) or "full" (110 epochs, lr 1.5e-5, 18-layer
/// classifier). Unknown keys are rejected.
struct PipelineConfig {
    std::string profile = "desk";
    std::size_t image_size = 64;
    std::size_t channels = 1;
    std::vector<std::size_t> widths{16, 32, 64, 128};
    std::size_t d_state = 8;
    std::size_t mlp_ratio = 2;
    ScanMode scan_mode = ScanMode::Parallel;
    std::size_t epochs_ae = 60;
    std::size_t epochs_clf = 60;
    double lr = 1e-3;
    double lr_clf = 1e-3;
    std::size_t batch = 16;
    std::uint64_t seed = 0;
    std::string target_class = "target";
    std::size_t num_classes = 2;
    double train_fraction = 0.70;
    std::string clf_arch = "basic";  // "basic" or "resnet18"
    std::vector<std::size_t> clf_widths{8, 16, 32, 64};
    std::vector<std::size_t> clf_blocks{2, 2, 2, 2};

    static PipelineConfig for_profile(const std::string& profile);

    TSMambaConfig ae_config() const;
    ClassifierConfig classifier_config() const;
    void validate() const;

    /// Canonical `key = value` text; parse_config(to_text()) reproduces *this.
    std::string to_text() const;
};

PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace rmb
