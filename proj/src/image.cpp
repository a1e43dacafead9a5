#include "dehaze/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dehaze {

namespace {

void check_channels(std::size_t channels) {
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("image: channel count must be 1 or 3, got " + std::to_string(channels));
    }
}

}  // namespace

Image::Image(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {
    check_channels(channels);
    if (!(fill >= 0.0 && fill <= 1.0)) throw std::invalid_argument("image: fill value outside [0,1]");
}

Image::Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_channels(channels);
    if (data_.size() != height * width * channels) {
        throw ShapeError("image: " + std::to_string(height) + "x" + std::to_string(width) + "x" +
                         std::to_string(channels) + " needs " + std::to_string(height * width * channels) +
                         " values, got " + std::to_string(data_.size()));
    }
    for (double v : data_) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("image: value outside [0,1]");
    }
}

Image Image::crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
    if (y0 + h > height_ || x0 + w > width_) throw ShapeError("image crop exceeds bounds");
    Image out(h, w, channels_);
    for (std::size_t y = 0; y < h; ++y) {
        const double* src = data_.data() + ((y0 + y) * width_ + x0) * channels_;
        std::copy_n(src, w * channels_, out.data_.data() + y * w * channels_);
    }
    return out;
}

nn::Tensor Image::to_tensor() const { return nn::Tensor({1, height_, width_, channels_}, data_); }

Grid Grid::crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
    if (y0 + h > height || x0 + w > width) throw ShapeError("grid crop exceeds bounds");
    Grid out(h, w);
    for (std::size_t y = 0; y < h; ++y) std::copy_n(&data[(y0 + y) * width + x0], w, &out.data[y * w]);
    return out;
}

Image TransmissionMap::to_image() const {
    std::vector<double> v(data.size());
    std::transform(data.begin(), data.end(), v.begin(), [](double t) { return std::clamp(t, 0.0, 1.0); });
    return Image(height, width, 1, std::move(v));
}

nn::Tensor TransmissionMap::to_tensor() const { return nn::Tensor({1, height, width, 1}, data); }

void Airlight::validate() const {
    for (double a : rgb) {
        if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("airlight components must lie in (0, 1]");
    }
}

}  // namespace dehaze
