#include "support/fixtures.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "resmamba/image.hpp"
#include "resmamba/rng.hpp"

namespace rmb::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag)
{
    std::random_device rd;
    for (int attempt = 0; attempt < 100; ++attempt) {
        const fs::path candidate = fs::temp_directory_path() / ("resmamba_" + tag + "_" + std::to_string(rd()));
        if (fs::create_directory(candidate)) {
            path_ = candidate;
            return;
        }
    }
    throw std::runtime_error("could not create a temporary directory");
}

TempDir::~TempDir()
{
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_gray_png(const fs::path& path, std::size_t width, std::size_t height, const std::vector<std::uint8_t>& pixels)
{
    fs::create_directories(path.parent_path());
    write_png(path, Image8{width, height, 1, pixels});
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> read_bytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PipelineConfig tiny_config(std::size_t epochs)
{
    PipelineConfig c;
    c.image_size = 16;
    c.widths = {2, 4};
    c.d_state = 2;
    c.mlp_ratio = 1;
    c.epochs_ae = epochs;
    c.epochs_clf = epochs;
    c.batch = 4;
    c.lr = 1e-2;
    c.lr_clf = 1e-2;
    c.clf_widths = {4};
    c.clf_blocks = {1};
    c.validate();
    return c;
}

Dataset tiny_synthetic_dataset(const std::vector<std::string>& class_names, std::size_t per_class,
                               std::uint64_t seed, std::size_t size)
{
    Dataset ds;
    ds.root = "<memory>";
    ds.class_names = class_names;
    ds.height = ds.width = size;
    ds.channels = 1;
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            const auto pixels = synthetic_image(class_names[c], size, mix_seed(mix_seed(seed, c), i));
            std::vector<double> image(pixels.size());
            for (std::size_t k = 0; k < pixels.size(); ++k) image[k] = pixels[k] / 255.0;
            ds.records.push_back({class_names[c] + "_" + std::to_string(i), c});
            ds.images.push_back(std::move(image));
        }
    }
    return ds;
}

}  // namespace rmb::testing
