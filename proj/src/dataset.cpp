#include "resmamba/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "resmamba/image.hpp"
#include "resmamba/rng.hpp"

namespace rmb {

namespace fs = std::filesystem;

std::size_t Dataset::class_index(const std::string& name) const
{
    const auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) throw std::invalid_argument("dataset has no class named '" + name + "'");
    return static_cast<std::size_t>(it - class_names.begin());
}

std::vector<std::size_t> Dataset::labels() const
{
    std::vector<std::size_t> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const
{
    Dataset out;
    out.root = root;
    out.class_names = class_names;
    out.height = height;
    out.width = width;
    out.channels = channels;
    for (auto i : indices) {
        if (i >= records.size()) throw std::out_of_range("dataset subset index out of range");
        out.records.push_back(records[i]);
        out.images.push_back(images[i]);
    }
    return out;
}

Dataset Dataset::only_class(std::size_t label) const
{
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].label == label) keep.push_back(i);
    }
    return subset(keep);
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const
{
    if (indices.empty()) throw std::invalid_argument("dataset batch: no indices");
    const std::size_t n = image_numel();
    std::vector<double> values;
    values.reserve(indices.size() * n);
    for (auto i : indices) {
        if (i >= images.size()) throw std::out_of_range("dataset batch index out of range");
        values.insert(values.end(), images[i].begin(), images[i].end());
    }
    return Tensor({indices.size(), channels, height, width}, std::move(values));
}

Dataset load_dataset(const fs::path& root, std::size_t image_size, std::size_t channels)
{
    if (image_size == 0) throw std::invalid_argument("load_dataset: image size must be positive");
    if (!fs::is_directory(root)) throw std::runtime_error("dataset root '" + root.string() + "' is not a directory");

    Dataset ds;
    ds.root = root;
    ds.height = ds.width = image_size;
    ds.channels = channels;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) ds.class_names.push_back(entry.path().filename().string());
    }
    std::sort(ds.class_names.begin(), ds.class_names.end());
    if (ds.class_names.empty()) throw std::runtime_error("dataset root '" + root.string() + "' has no class directories");

    for (std::size_t label = 0; label < ds.class_names.size(); ++label) {
        const fs::path dir = root / ds.class_names[label];
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            auto ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
            if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
        }
        if (files.empty()) throw std::runtime_error("class directory '" + dir.string() + "' contains no PNG images");
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            const Image8 image = read_png(file, channels);
            ds.records.push_back({file, label});
            ds.images.push_back(to_planar_resized(image, image_size, image_size));
        }
    }
    return ds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::span<const std::size_t> labels,
                                                                            std::size_t num_classes,
                                                                            const SplitSpec& spec)
{
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw std::invalid_argument("split: train fraction must lie in (0, 1)");
    }
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) throw std::invalid_argument("split: label out of range");
        by_class[labels[i]].push_back(i);
    }
    std::vector<std::size_t> train, val;
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto& members = by_class[c];
        if (members.size() < 2) {
            throw std::invalid_argument("split: class " + std::to_string(c) + " has " +
                                        std::to_string(members.size()) + " image(s); at least 2 are required");
        }
        Rng rng(mix_seed(spec.seed, c));
        rng.shuffle(members);
        const double want = std::floor(spec.train_fraction * static_cast<double>(members.size()) + 1e-9);
        const std::size_t n_train = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, members.size() - 1);
        train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
        val.insert(val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {std::move(train), std::move(val)};
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec)
{
    const auto labels = dataset.labels();
    const auto [train, val] = split_indices(labels, dataset.num_classes(), spec);
    return {dataset.subset(train), dataset.subset(val)};
}

// ---------------------------------------------------------------------------
// Synthetic textures

namespace {

using Field = std::vector<double>;

Field low_frequency_texture(std::size_t size, Rng& rng)
{
    Field f(size * size, 0.0);
    const double s = static_cast<double>(size);
    const auto gratings = 1 + rng.below(4);
    for (std::uint64_t g = 0; g < gratings; ++g) {
        const double freq = rng.uniform(0.5, 3.0);
        const double angle = rng.uniform(0.0, std::numbers::pi);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = rng.uniform(0.5, 1.0);
        const double kx = 2.0 * std::numbers::pi * freq * std::cos(angle) / s;
        const double ky = 2.0 * std::numbers::pi * freq * std::sin(angle) / s;
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                f[y * size + x] += amp * std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase);
            }
        }
    }
    const auto blobs = rng.below(3);
    for (std::uint64_t b = 0; b < blobs; ++b) {
        const double cx = rng.uniform(0.0, s), cy = rng.uniform(0.0, s);
        const double sigma = rng.uniform(0.08, 0.2) * s;
        const double amp = rng.uniform(-1.5, 1.5);
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
                f[y * size + x] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            }
        }
    }
    return f;
}

Field speckle_texture(std::size_t size, Rng& rng)
{
    Field noise(size * size);
    for (auto& v : noise) v = rng.normal();
    // Light random 3-tap smoothing keeps the spectrum high-pass but not white.
    const double w = rng.uniform(0.0, 0.35);
    Field f(size * size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double left = noise[y * size + (x + size - 1) % size];
            const double right = noise[y * size + (x + 1) % size];
            f[y * size + x] = noise[y * size + x] + w * (left + right);
        }
    }
    return f;
}

Field stripe_texture(std::size_t size, Rng& rng)
{
    Field f(size * size);
    const double s = static_cast<double>(size);
    const double freq = rng.uniform(8.0, 14.0);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double kx = 2.0 * std::numbers::pi * freq * std::cos(angle) / s;
    const double ky = 2.0 * std::numbers::pi * freq * std::sin(angle) / s;
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            f[y * size + x] = std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase);
        }
    }
    return f;
}

Field checker_texture(std::size_t size, Rng& rng)
{
    Field f(size * size);
    const auto cell = 2 + rng.below(5);
    const auto ox = rng.below(cell), oy = rng.below(cell);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            f[y * size + x] = (((x + ox) / cell + (y + oy) / cell) % 2 == 0) ? 1.0 : -1.0;
        }
    }
    return f;
}

Field ring_texture(std::size_t size, Rng& rng)
{
    Field f(size * size);
    const double s = static_cast<double>(size);
    const double cx = rng.uniform(0.0, s), cy = rng.uniform(0.0, s);
    const double period = rng.uniform(3.0, 6.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double r = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
            f[y * size + x] = std::sin(2.0 * std::numbers::pi * r / period + phase);
        }
    }
    return f;
}

// Every class shares one brightness/contrast distribution, so class
// identity is carried by spatial structure alone.
std::vector<std::uint8_t> quantize(Field f, Rng& rng)
{
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    double var = 0.0;
    for (double v : f) var += (v - mean) * (v - mean);
    const double stddev = std::sqrt(var / static_cast<double>(f.size()));
    const double level = rng.uniform(96.0, 160.0);
    const double contrast = rng.uniform(24.0, 44.0);
    std::vector<std::uint8_t> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double z = stddev > 0.0 ? (f[i] - mean) / stddev : 0.0;
        out[i] = static_cast<std::uint8_t>(std::clamp(std::round(level + contrast * z), 0.0, 255.0));
    }
    return out;
}

}  // namespace

std::vector<std::string> synthetic_class_names(std::size_t num_classes)
{
    if (num_classes == 2) return {"other", "target"};
    if (num_classes == 5) return {"checker", "other", "rings", "stripes", "target"};
    throw std::invalid_argument("synthetic data supports 2 or 5 classes, got " + std::to_string(num_classes));
}

std::vector<std::uint8_t> synthetic_image(const std::string& class_name, std::size_t size, std::uint64_t seed)
{
    if (size == 0) throw std::invalid_argument("synthetic image size must be positive");
    Rng rng(seed);
    Field f;
    if (class_name == "target") {
        f = low_frequency_texture(size, rng);
    } else if (class_name == "other") {
        f = speckle_texture(size, rng);
    } else if (class_name == "stripes") {
        f = stripe_texture(size, rng);
    } else if (class_name == "checker") {
        f = checker_texture(size, rng);
    } else if (class_name == "rings") {
        f = ring_texture(size, rng);
    } else {
        throw std::invalid_argument("unknown synthetic class '" + class_name + "'");
    }
    return quantize(std::move(f), rng);
}

void gen_synthetic(const fs::path& out_root, const SyntheticSpec& spec)
{
    const auto names = synthetic_class_names(spec.num_classes);
    for (std::size_t c = 0; c < names.size(); ++c) {
        const fs::path dir = out_root / names[c];
        fs::create_directories(dir);
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            Image8 image;
            image.width = image.height = spec.size;
            image.channels = 1;
            image.pixels = synthetic_image(names[c], spec.size, mix_seed(mix_seed(spec.seed, c), i));
            char file[64];
            std::snprintf(file, sizeof file, "%s_%04zu.png", names[c].c_str(), i);
            write_png(dir / file, image);
        }
    }
}

}  // namespace rmb
