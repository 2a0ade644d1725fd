#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "resmamba/tensor.hpp"

namespace rmb {

struct ImageRecord {
    std::filesystem::path path;
    std::size_t label = 0;
};

/// Images laid out as root/<class>/*.png, classes indexed by sorted name.
struct Dataset {
    std::filesystem::path root;
    std::vector<std::string> class_names;
    std::vector<ImageRecord> records;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    /// Planar [channels, height, width] values in [0, 1], one per record.
    std::vector<std::vector<double>> images;

    std::size_t size() const { return records.size(); }
    std::size_t num_classes() const { return class_names.size(); }
    std::size_t image_numel() const { return channels * height * width; }
    /// Index of a class name; throws when absent.
    std::size_t class_index(const std::string& name) const;
    std::vector<std::size_t> labels() const;

    Dataset subset(std::span<const std::size_t> indices) const;
    /// Records whose label equals `label`.
    Dataset only_class(std::size_t label) const;
    /// Stacks the selected images into [B, channels, height, width].
    Tensor batch(std::span<const std::size_t> indices) const;
};

Dataset load_dataset(const std::filesystem::path& root, std::size_t image_size, std::size_t channels = 1);

struct SplitSpec {
    double train_fraction = 0.70;
    std::uint64_t seed = 0;
};

/// Per class, max(1, floor(fraction * n)) images (capped at n - 1) go to
/// training, picked by a seeded shuffle; the rest go to validation.
std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec);

/// Index form of split, used by split itself: (train indices, val indices),
/// each sorted ascending.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::span<const std::size_t> labels,
                                                                            std::size_t num_classes,
                                                                            const SplitSpec& spec);

struct SyntheticSpec {
    std::uint64_t seed = 0;
    std::size_t per_class = 200;
    std::size_t num_classes = 2;  // 2 or 5
    std::size_t size = 64;
};

/// Class directory names written by gen_synthetic for the given class count.
std::vector<std::string> synthetic_class_names(std::size_t num_classes);

/// Renders one synthetic grayscale image of the given class.
std::vector<std::uint8_t> synthetic_image(const std::string& class_name, std::size_t size, std::uint64_t seed);

/// Writes out_root/<class>/<class>_NNNN.png. Deterministic per seed.
void gen_synthetic(const std::filesystem::path& out_root, const SyntheticSpec& spec);

}  // namespace rmb
