#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dehaze {

/// Raised whenever operand extents disagree. The message names both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace dehaze

namespace dehaze::nn {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. Four-dimensional activations use
/// (batch, height, width, channels) ordering; convolution kernels use
/// (kernel height, kernel width, input channels, output channels).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor nhwc(std::size_t n, std::size_t h, std::size_t w, std::size_t c, double fill = 0.0) {
        return Tensor({n, h, w, c}, fill);
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // NHWC accessors; only valid on rank-4 tensors.
    double& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) {
        return data_[((n * shape_[1] + y) * shape_[2] + x) * shape_[3] + c];
    }
    double at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
        return data_[((n * shape_[1] + y) * shape_[2] + x) * shape_[3] + c];
    }

    bool has_grad() const noexcept { return grad_.has_value(); }
    std::vector<double>& grad();  // allocates zeros on first use
    const std::vector<double>& grad() const;
    void clear_grad() noexcept { grad_.reset(); }

    bool all_finite() const noexcept;

private:
    Shape shape_;
    std::vector<double> data_;
    std::optional<std::vector<double>> grad_;
};

std::size_t element_count(const Shape& shape);

/// Throws ShapeError unless `t` is rank 4.
void require_rank4(const Tensor& t, const char* what);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace dehaze::nn
