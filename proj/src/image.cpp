#include "resmamba/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "resmamba/checkpoint.hpp"

namespace rmb {

namespace {

png_uint_32 png_format(std::size_t channels)
{
    if (channels == 1) return PNG_FORMAT_GRAY;
    if (channels == 3) return PNG_FORMAT_RGB;
    throw std::invalid_argument("png: only 1 or 3 channels are supported, got " + std::to_string(channels));
}

}  // namespace

Image8 read_png(const std::filesystem::path& path, std::size_t channels)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    const std::string name = path.string();
    if (!png_image_begin_read_from_file(&image, name.c_str())) {
        throw std::runtime_error("cannot decode PNG '" + name + "': " + image.message);
    }
    image.format = png_format(channels);
    Image8 out;
    out.width = image.width;
    out.height = image.height;
    out.channels = channels;
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string message = image.message;
        png_image_free(&image);
        throw std::runtime_error("cannot decode PNG '" + name + "': " + message);
    }
    return out;
}

std::vector<std::uint8_t> encode_png(const Image8& source)
{
    if (source.pixels.size() != source.width * source.height * source.channels || source.width == 0 ||
        source.height == 0) {
        throw std::invalid_argument("png: pixel buffer does not match image extents");
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(source.width);
    image.height = static_cast<png_uint_32>(source.height);
    image.format = png_format(source.channels);

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, source.pixels.data(), 0, nullptr)) {
        throw std::runtime_error(std::string("png encode failed: ") + image.message);
    }
    std::vector<std::uint8_t> bytes(size);
    if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, source.pixels.data(), 0, nullptr)) {
        throw std::runtime_error(std::string("png encode failed: ") + image.message);
    }
    bytes.resize(size);
    return bytes;
}

void write_png(const std::filesystem::path& path, const Image8& image)
{
    const auto bytes = encode_png(image);
    write_file_atomic(path, bytes);
}

std::vector<double> to_planar_resized(const Image8& image, std::size_t out_h, std::size_t out_w)
{
    const std::size_t c = image.channels, in_h = image.height, in_w = image.width;
    std::vector<double> out(c * out_h * out_w);
    const auto sample = [&](std::size_t y, std::size_t x, std::size_t ch) {
        return static_cast<double>(image.pixels[(y * in_w + x) * c + ch]) / 255.0;
    };
    if (in_h == out_h && in_w == out_w) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < out_h; ++y) {
                for (std::size_t x = 0; x < out_w; ++x) out[(ch * out_h + y) * out_w + x] = sample(y, x, ch);
            }
        }
        return out;
    }
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx =
                std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double top = sample(y0, x0, ch) * (1.0 - wx) + sample(y0, x1, ch) * wx;
                const double bottom = sample(y1, x0, ch) * (1.0 - wx) + sample(y1, x1, ch) * wx;
                out[(ch * out_h + y) * out_w + x] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    return out;
}

}  // namespace rmb
