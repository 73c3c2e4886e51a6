#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gsedit {

/// Dense height x width x channels array of doubles, row-major, channels
/// innermost. Used for images, depth maps, attention maps and noise fields.
class Tensor {
public:
    Tensor() = default;
    Tensor(int height, int width, int channels, double fill = 0.0);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
    bool empty() const { return data_.empty(); }

    double& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    double operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool same_shape(const Tensor& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

using Image = Tensor;
using ScoreField = Tensor;

/// Per-pixel boolean mask, row-major.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<bool> data;

    Mask() = default;
    Mask(int h, int w, bool fill = false) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    bool operator()(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    void set(int y, int x, bool v) { data[static_cast<std::size_t>(y) * width + x] = v; }

    friend bool operator==(const Mask&, const Mask&) = default;
};

}  // namespace gsedit
