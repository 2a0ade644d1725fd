#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "resmamba/config.hpp"
#include "resmamba/dataset.hpp"

namespace rmb::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

private:
    std::filesystem::path path_;
};

void write_gray_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& pixels);

std::string read_text(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

/// Config small enough for unit tests: 16x16 images, widths 2,4 and a
/// one-stage classifier.
PipelineConfig tiny_config(std::size_t epochs = 2);

/// In-memory dataset of synthetic 16x16 images for the given class names.
Dataset tiny_synthetic_dataset(const std::vector<std::string>& class_names, std::size_t per_class,
                               std::uint64_t seed, std::size_t size = 16);

}  // namespace rmb::testing
