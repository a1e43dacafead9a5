#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dehaze/tensor.hpp"

namespace dehaze {
class Rng;
}

namespace dehaze::nn {

/// Stride-1 convolution with zero same-padding. Kernel layout is
/// (kH, kW, inC, outC); kH and kW must be odd.
struct Conv2DLayer {
    Tensor kernel;
    std::vector<double> bias;

    Conv2DLayer() = default;
    Conv2DLayer(Tensor kernel, std::vector<double> bias);

    /// Glorot-uniform weights, zero bias.
    static Conv2DLayer glorot(std::size_t kh, std::size_t kw, std::size_t in_c, std::size_t out_c, Rng& rng);

    std::size_t kernel_h() const { return kernel.dim(0); }
    std::size_t kernel_w() const { return kernel.dim(1); }
    std::size_t in_channels() const { return kernel.dim(2); }
    std::size_t out_channels() const { return kernel.dim(3); }
    std::size_t pad_h() const { return kernel_h() / 2; }
    std::size_t pad_w() const { return kernel_w() / 2; }

    void validate() const;
};

struct ConvGrads {
    Tensor input;
    Tensor kernel;
    std::vector<double> bias;
};

Tensor conv2d_forward(const Tensor& input, const Conv2DLayer& layer);

/// Gradients of sum(grad_out * conv2d_forward(input, layer)).
ConvGrads conv2d_backward(const Tensor& input, const Conv2DLayer& layer, const Tensor& grad_out);

/// Winner positions (flat indices into the pooled input) for each output element.
struct ArgmaxIndex {
    Shape input_shape;
    std::vector<std::size_t> winner;
};

struct MaxPoolResult {
    Tensor output;
    ArgmaxIndex argmax;
};

/// Centered spatial max pooling. Window positions falling outside the image
/// are excluded from the max. Only stride 1 is supported.
MaxPoolResult maxpool_spatial_forward(const Tensor& input, std::size_t window, std::size_t stride = 1);
Tensor maxpool_spatial_backward(const ArgmaxIndex& argmax, const Tensor& grad_out);

/// Elementwise max of three equally shaped tensors.
Tensor channel_group_max(const Tensor& r, const Tensor& g, const Tensor& b);

/// Routes grad_out to whichever input won; ties go to the earliest argument.
std::array<Tensor, 3> channel_group_max_backward(const Tensor& r, const Tensor& g, const Tensor& b,
                                                 const Tensor& grad_out);

Tensor concat_channels(std::span<const Tensor> inputs);
std::vector<Tensor> split_channels(const Tensor& input, std::span<const std::size_t> widths);

struct BiReLU {
    double t_min = 0.0;
    double t_max = 1.0;

    void validate() const;
};

Tensor birelu_forward(const Tensor& input, const BiReLU& act);
/// Unit slope strictly inside (t_min, t_max), zero elsewhere.
Tensor birelu_backward(const Tensor& input, const BiReLU& act, const Tensor& grad_out);

struct LossResult {
    double loss = 0.0;
    Tensor grad;
};

/// Mean squared error over every element, with its gradient w.r.t. `pred`.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

struct SGDConfig {
    double learning_rate = 0.002;
    std::size_t batch_size = 64;
    std::size_t epochs = 18;
    std::uint64_t seed = 0;

    void validate() const;
};

using ParamList = std::vector<std::span<double>>;
using ConstParamList = std::vector<std::span<const double>>;

/// Plain SGD: p <- p - lr * g for every parameter, in place.
void sgd_step(const ParamList& params, const ConstParamList& grads, double learning_rate);

}  // namespace dehaze::nn
