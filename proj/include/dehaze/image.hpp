#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "dehaze/tensor.hpp"

namespace dehaze {

/// H x W x C raster of unit-interval intensities, row-major with interleaved
/// channels. C is 1 or 3.
class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
    /// Throws if `data` is the wrong length or holds values outside [0, 1].
    Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t pixels() const noexcept { return height_ * width_; }
    bool empty() const noexcept { return data_.empty(); }

    double& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * width_ + x) * channels_ + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return data_[(y * width_ + x) * channels_ + c]; }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    Image crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const;
    bool same_dims(const Image& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    /// Single-image (1, H, W, C) tensor view by copy.
    nn::Tensor to_tensor() const;

private:
    std::size_t height_ = 0, width_ = 0, channels_ = 0;
    std::vector<double> data_;
};

/// Single-channel H x W grid of reals; base for the scalar-valued maps.
struct Grid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    Grid() = default;
    Grid(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w, fill) {}

    double& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
    Grid crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const;
};

/// Per-pixel transmission in [0, 1].
struct TransmissionMap : Grid {
    using Grid::Grid;
    TransmissionMap() = default;
    explicit TransmissionMap(Grid g) : Grid(std::move(g)) {}

    TransmissionMap crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
        return TransmissionMap(Grid::crop(y0, x0, h, w));
    }
    /// Treats the map as a one-channel image (values clamped to [0, 1]).
    Image to_image() const;
    nn::Tensor to_tensor() const;
};

/// Global atmospheric light, one component per color channel.
struct Airlight {
    std::array<double, 3> rgb{1.0, 1.0, 1.0};

    double operator[](std::size_t c) const { return rgb[c]; }
    /// Throws unless every component lies in (0, 1].
    void validate() const;
};

}  // namespace dehaze
