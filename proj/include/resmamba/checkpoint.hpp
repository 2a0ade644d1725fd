#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "resmamba/module.hpp"
#include "resmamba/tensor.hpp"

namespace rmb {

/// Binary checkpoint layout (all integers little-endian):
///
///   "RMBK1"                        5-byte magic
///   u32 version                    currently 1
///   u32 metadata count, then per entry: u32 len, key bytes, u32 len, value bytes
///   u32 tensor count, then per tensor:
///       u32 len, name bytes
///       u8  dtype (1 = f64, 2 = f32)
///       u32 rank, then rank x u64 extents
///       payload, row-major, numel x sizeof(dtype)
struct CheckpointTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::uint32_t version = kVersion;
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<CheckpointTensor> tensors;

    std::optional<std::string> meta(const std::string& key) const;
    /// Throws when the key is missing.
    std::string require_meta(const std::string& key) const;
    void set_meta(const std::string& key, std::string value);
    const CheckpointTensor* find(const std::string& name) const;
    std::size_t parameter_count() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Written to a temporary file in the target directory, then renamed.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint checkpoint_from_parameters(const NamedParameters& params);

/// Copies every named tensor into `params`; names and shapes must match exactly.
void restore_parameters(const NamedParameters& params, const Checkpoint& checkpoint);

/// Replaces `path` with `bytes` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trippable text for a double.
std::string format_double(double value);

}  // namespace rmb
