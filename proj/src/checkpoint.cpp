#include "resmamba/checkpoint.hpp"

#include <charconv>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace rmb {

namespace {

constexpr char kMagic[5] = {'R', 'M', 'B', 'K', '1'};
constexpr std::uint8_t kDtypeF64 = 1;
constexpr std::uint8_t kDtypeF32 = 2;

class Writer {
public:
    void raw(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::span<const std::uint8_t> take(std::size_t n)
    {
        if (n > bytes_.size() - pos_) throw std::runtime_error("checkpoint: truncated data");
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::uint8_t u8() { return take(1)[0]; }
    std::uint32_t u32()
    {
        const auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64()
    {
        const auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    std::string str()
    {
        const auto n = u32();
        const auto b = take(n);
        return std::string(b.begin(), b.end());
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::optional<std::string> Checkpoint::meta(const std::string& key) const
{
    for (const auto& [k, v] : metadata) {
        if (k == key) return v;
    }
    return std::nullopt;
}

std::string Checkpoint::require_meta(const std::string& key) const
{
    auto v = meta(key);
    if (!v) throw std::runtime_error("checkpoint: missing metadata key '" + key + "'");
    return *v;
}

void Checkpoint::set_meta(const std::string& key, std::string value)
{
    for (auto& [k, v] : metadata) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    metadata.emplace_back(key, std::move(value));
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const
{
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

std::size_t Checkpoint::parameter_count() const
{
    std::size_t total = 0;
    for (const auto& t : tensors) total += t.values.size();
    return total;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint)
{
    Writer w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(checkpoint.version);
    w.u32(static_cast<std::uint32_t>(checkpoint.metadata.size()));
    for (const auto& [key, value] : checkpoint.metadata) {
        w.str(key);
        w.str(value);
    }
    w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
    for (const auto& t : checkpoint.tensors) {
        if (shape_numel(t.shape) != t.values.size()) {
            throw std::invalid_argument("checkpoint: tensor '" + t.name + "' has inconsistent shape");
        }
        w.str(t.name);
        w.u8(kDtypeF64);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (auto extent : t.shape) w.u64(extent);
        for (double v : t.values) w.f64(v);
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    const auto magic = r.take(sizeof(kMagic));
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic bytes (not an RMBK1 checkpoint)");
    }
    Checkpoint ckpt;
    ckpt.version = r.u32();
    if (ckpt.version != Checkpoint::kVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(ckpt.version));
    }
    const auto meta_count = r.u32();
    for (std::uint32_t i = 0; i < meta_count; ++i) {
        auto key = r.str();
        auto value = r.str();
        ckpt.metadata.emplace_back(std::move(key), std::move(value));
    }
    const auto tensor_count = r.u32();
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        CheckpointTensor t;
        t.name = r.str();
        const auto dtype = r.u8();
        if (dtype != kDtypeF64 && dtype != kDtypeF32) {
            throw std::runtime_error("checkpoint: tensor '" + t.name + "' has unknown dtype tag " + std::to_string(dtype));
        }
        const auto rank = r.u32();
        for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(static_cast<std::size_t>(r.u64()));
        const auto n = shape_numel(t.shape);
        t.values.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            if (dtype == kDtypeF64) {
                t.values[k] = std::bit_cast<double>(r.u64());
            } else {
                t.values[k] = static_cast<double>(std::bit_cast<float>(r.u32()));
            }
        }
        ckpt.tensors.push_back(std::move(t));
    }
    if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes after last tensor");
    return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    const auto parent = path.parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text)
{
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint)
{
    write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

Checkpoint checkpoint_from_parameters(const NamedParameters& params)
{
    Checkpoint ckpt;
    for (const auto& [name, tensor] : params) {
        const auto v = tensor.values();
        ckpt.tensors.push_back({name, tensor.shape(), std::vector<double>(v.begin(), v.end())});
    }
    return ckpt;
}

void restore_parameters(const NamedParameters& params, const Checkpoint& checkpoint)
{
    std::vector<std::string> problems;
    for (const auto& [name, tensor] : params) {
        const auto* stored = checkpoint.find(name);
        if (!stored) {
            problems.push_back(name + " (missing)");
        } else if (stored->shape != tensor.shape()) {
            problems.push_back(name + " (shape " + shape_to_string(stored->shape) + " vs " +
                               shape_to_string(tensor.shape()) + ")");
        }
    }
    if (checkpoint.tensors.size() != params.size()) {
        for (const auto& t : checkpoint.tensors) {
            bool known = false;
            for (const auto& [name, tensor] : params) known = known || name == t.name;
            if (!known) problems.push_back(t.name + " (unexpected)");
        }
    }
    if (!problems.empty()) {
        std::string message = "checkpoint does not match model:";
        for (const auto& p : problems) message += " " + p + ";";
        throw std::runtime_error(message);
    }
    for (const auto& [name, tensor] : params) {
        const auto* stored = checkpoint.find(name);
        auto dst = Tensor(tensor).mutable_values();
        std::copy(stored->values.begin(), stored->values.end(), dst.begin());
    }
}

std::string format_double(double value)
{
    char buf[64];
    const auto result = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, result.ptr);
}

}  // namespace rmb
