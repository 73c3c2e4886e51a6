#include "gsedit/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "gsedit/error.hpp"

namespace gsedit {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::vector<std::uint8_t> decode_png(const std::filesystem::path& path, int& width, int& height, int& channels) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
        throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
        png_image_free(&image);
        throw FormatError("cannot decode PNG '" + path.string() + "': " + image.message);
    }
    width = static_cast<int>(image.width);
    height = static_cast<int>(image.height);
    channels = 3;
    return buffer;
}

void encode_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes, int width, int height,
                int channels) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr) == 0) {
        throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
    }
}

std::uint8_t to_byte(double v) {
    const double c = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
    int w = 0, h = 0, c = 0;
    const auto bytes = decode_png(path, w, h, c);
    Image out(h, w, 3);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = bytes[i] / 255.0;
    return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw ContractError("PNG output supports 1 or 3 channels, got " + std::to_string(image.channels()));
    }
    std::vector<std::uint8_t> bytes(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = to_byte(image[i]);
    encode_png(path, bytes, image.width(), image.height(), image.channels());
}

Mask read_mask_png(const std::filesystem::path& path) {
    int w = 0, h = 0, c = 0;
    const auto bytes = decode_png(path, w, h, c);
    Mask out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) out.set(y, x, bytes[(static_cast<std::size_t>(y) * w + x) * 3] >= 128);
    }
    return out;
}

void write_mask_png(const Mask& mask, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes(mask.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
    encode_png(path, bytes, mask.width, mask.height, 1);
}

Tensor read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string banner;
    int width = 0, height = 0;
    double scale = 0.0;
    in >> banner >> width >> height >> scale;
    if (!in || (banner != "PF" && banner != "Pf") || width < 0 || height < 0) {
        throw FormatError(path.string() + ": malformed PFM header");
    }
    if (scale >= 0.0) throw FormatError(path.string() + ": only little-endian PFM (negative scale) is supported");
    in.get();  // single whitespace byte before the raster
    const int channels = banner == "PF" ? 3 : 1;
    Tensor out(height, width, channels);
    std::vector<float> row(static_cast<std::size_t>(width) * channels);
    for (int y = height - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) throw FormatError(path.string() + ": truncated PFM raster");
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) out(y, x, c) = row[static_cast<std::size_t>(x) * channels + c];
        }
    }
    return out;
}

void write_pfm(const Tensor& tensor, const std::filesystem::path& path) {
    if (tensor.channels() != 1 && tensor.channels() != 3) {
        throw ContractError("PFM supports 1 or 3 channels, got " + std::to_string(tensor.channels()));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << (tensor.channels() == 3 ? "PF" : "Pf") << "\n" << tensor.width() << " " << tensor.height() << "\n-1.0\n";
    std::vector<float> row(static_cast<std::size_t>(tensor.width()) * tensor.channels());
    for (int y = tensor.height() - 1; y >= 0; --y) {
        for (int x = 0; x < tensor.width(); ++x) {
            for (int c = 0; c < tensor.channels(); ++c) {
                row[static_cast<std::size_t>(x) * tensor.channels() + c] = static_cast<float>(tensor(y, x, c));
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace gsedit
