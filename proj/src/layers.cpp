#include "dehaze/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "dehaze/random.hpp"

namespace dehaze::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Upper bound on the number of doubles in one im2col buffer; convolution runs
// over horizontal bands of output rows so large images stay within it.
constexpr std::size_t kColsBudget = std::size_t{1} << 21;

struct ConvGeometry {
    std::size_t n, h, w, in_c, out_c, kh, kw, ph, pw;
    std::size_t patch() const { return kh * kw * in_c; }
    std::size_t band_rows() const {
        const std::size_t per_row = std::max<std::size_t>(w * patch(), 1);
        return std::clamp<std::size_t>(kColsBudget / per_row, 1, std::max<std::size_t>(h, 1));
    }
};

ConvGeometry geometry(const Tensor& input, const Conv2DLayer& layer) {
    require_rank4(input, "conv2d");
    layer.validate();
    if (input.dim(3) != layer.in_channels()) {
        throw ShapeError("conv2d: input " + to_string(input.shape()) + " has " + std::to_string(input.dim(3)) +
                         " channels but kernel " + to_string(layer.kernel.shape()) + " expects " +
                         std::to_string(layer.in_channels()));
    }
    return {input.dim(0),        input.dim(1),     input.dim(2),     input.dim(3), layer.out_channels(),
            layer.kernel_h(),    layer.kernel_w(), layer.pad_h(),    layer.pad_w()};
}

// Fills `cols` with the receptive fields of output rows [y0, y1) of sample n.
// Row r of cols holds the (dy, dx, c) patch for output pixel r.
void im2col(const Tensor& input, const ConvGeometry& g, std::size_t n, std::size_t y0, std::size_t y1,
            std::vector<double>& cols) {
    const std::size_t patch = g.patch();
    cols.assign((y1 - y0) * g.w * patch, 0.0);
    const double* src = input.data().data();
    for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = 0; x < g.w; ++x) {
            double* row = cols.data() + ((y - y0) * g.w + x) * patch;
            for (std::size_t dy = 0; dy < g.kh; ++dy) {
                const auto sy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(g.ph);
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                for (std::size_t dx = 0; dx < g.kw; ++dx) {
                    const auto sx = static_cast<std::ptrdiff_t>(x + dx) - static_cast<std::ptrdiff_t>(g.pw);
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) continue;
                    const double* pix = src + ((n * g.h + sy) * g.w + sx) * g.in_c;
                    std::memcpy(row + (dy * g.kw + dx) * g.in_c, pix, g.in_c * sizeof(double));
                }
            }
        }
    }
}

void col2im_add(const std::vector<double>& cols, const ConvGeometry& g, std::size_t n, std::size_t y0,
                std::size_t y1, Tensor& grad_input) {
    const std::size_t patch = g.patch();
    double* dst = grad_input.data().data();
    for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = 0; x < g.w; ++x) {
            const double* row = cols.data() + ((y - y0) * g.w + x) * patch;
            for (std::size_t dy = 0; dy < g.kh; ++dy) {
                const auto sy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(g.ph);
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                for (std::size_t dx = 0; dx < g.kw; ++dx) {
                    const auto sx = static_cast<std::ptrdiff_t>(x + dx) - static_cast<std::ptrdiff_t>(g.pw);
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) continue;
                    double* pix = dst + ((n * g.h + sy) * g.w + sx) * g.in_c;
                    const double* src = row + (dy * g.kw + dx) * g.in_c;
                    for (std::size_t c = 0; c < g.in_c; ++c) pix[c] += src[c];
                }
            }
        }
    }
}

}  // namespace

Conv2DLayer::Conv2DLayer(Tensor k, std::vector<double> b) : kernel(std::move(k)), bias(std::move(b)) {
    validate();
}

Conv2DLayer Conv2DLayer::glorot(std::size_t kh, std::size_t kw, std::size_t in_c, std::size_t out_c, Rng& rng) {
    Tensor k({kh, kw, in_c, out_c});
    const double fan_in = static_cast<double>(kh * kw * in_c);
    const double fan_out = static_cast<double>(kh * kw * out_c);
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : k.data()) v = rng.uniform(-s, s);
    return Conv2DLayer(std::move(k), std::vector<double>(out_c, 0.0));
}

void Conv2DLayer::validate() const {
    if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be rank 4, got " + to_string(kernel.shape()));
    if (kernel_h() % 2 == 0 || kernel_w() % 2 == 0) {
        throw ShapeError("conv2d: kernel extents must be odd, got " + to_string(kernel.shape()));
    }
    if (bias.size() != out_channels()) {
        throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " does not match kernel " +
                         to_string(kernel.shape()));
    }
}

Tensor conv2d_forward(const Tensor& input, const Conv2DLayer& layer) {
    const ConvGeometry g = geometry(input, layer);
    Tensor out = Tensor::nhwc(g.n, g.h, g.w, g.out_c);
    const ConstRowMap kmat(layer.kernel.data().data(), g.patch(), g.out_c);
    const Eigen::Map<const Eigen::RowVectorXd> bias(layer.bias.data(), g.out_c);
    const std::size_t band = g.band_rows();
    std::vector<double> cols;
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t y0 = 0; y0 < g.h; y0 += band) {
            const std::size_t y1 = std::min(y0 + band, g.h);
            const std::size_t rows = (y1 - y0) * g.w;
            im2col(input, g, n, y0, y1, cols);
            RowMap dst(&out.at(n, y0, 0, 0), rows, g.out_c);
            dst.noalias() = ConstRowMap(cols.data(), rows, g.patch()) * kmat;
            dst.rowwise() += bias;
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Conv2DLayer& layer, const Tensor& grad_out) {
    const ConvGeometry g = geometry(input, layer);
    const Shape expected{g.n, g.h, g.w, g.out_c};
    if (grad_out.shape() != expected) {
        throw ShapeError("conv2d_backward: grad_out " + to_string(grad_out.shape()) + " does not match output " +
                         to_string(expected));
    }
    ConvGrads grads{Tensor(input.shape()), Tensor(layer.kernel.shape()), std::vector<double>(g.out_c, 0.0)};
    const ConstRowMap kmat(layer.kernel.data().data(), g.patch(), g.out_c);
    RowMap gk(grads.kernel.data().data(), g.patch(), g.out_c);
    const std::size_t band = g.band_rows();
    std::vector<double> cols;
    std::vector<double> grad_cols;
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t y0 = 0; y0 < g.h; y0 += band) {
            const std::size_t y1 = std::min(y0 + band, g.h);
            const std::size_t rows = (y1 - y0) * g.w;
            const ConstRowMap go(grad_out.data().data() + (n * g.h + y0) * g.w * g.out_c, rows, g.out_c);
            im2col(input, g, n, y0, y1, cols);
            gk.noalias() += ConstRowMap(cols.data(), rows, g.patch()).transpose() * go;
            // Plain loop: Eigen's vectorized reduction order depends on pointer
            // alignment, which would make bias gradients vary run to run.
            const double* gp = go.data();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t o = 0; o < g.out_c; ++o) grads.bias[o] += gp[r * g.out_c + o];
            grad_cols.resize(rows * g.patch());
            RowMap(grad_cols.data(), rows, g.patch()).noalias() = go * kmat.transpose();
            col2im_add(grad_cols, g, n, y0, y1, grads.input);
        }
    }
    return grads;
}

MaxPoolResult maxpool_spatial_forward(const Tensor& input, std::size_t window, std::size_t stride) {
    require_rank4(input, "maxpool");
    if (window == 0 || window % 2 == 0) {
        throw std::invalid_argument("maxpool: window must be odd, got " + std::to_string(window));
    }
    if (stride != 1) throw std::invalid_argument("maxpool: only stride 1 is supported");
    const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
    const std::size_t r = window / 2;
    MaxPoolResult result{Tensor(input.shape()), ArgmaxIndex{input.shape(), std::vector<std::size_t>(input.size())}};
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t y = 0; y < h; ++y) {
            const std::size_t ylo = y >= r ? y - r : 0, yhi = std::min(y + r, h - 1);
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t xlo = x >= r ? x - r : 0, xhi = std::min(x + r, w - 1);
                // Window scanned row-major; strict '>' keeps the first winner.
                const std::size_t o = ((b * h + y) * w + x) * c;
                const std::size_t first = ((b * h + ylo) * w + xlo) * c;
                double* best = result.output.data().data() + o;
                std::size_t* best_idx = result.argmax.winner.data() + o;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    best[ch] = input[first + ch];
                    best_idx[ch] = first + ch;
                }
                for (std::size_t yy = ylo; yy <= yhi; ++yy) {
                    for (std::size_t xx = xlo; xx <= xhi; ++xx) {
                        const std::size_t base = ((b * h + yy) * w + xx) * c;
                        const double* px = input.data().data() + base;
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            if (px[ch] > best[ch]) {
                                best[ch] = px[ch];
                                best_idx[ch] = base + ch;
                            }
                        }
                    }
                }
            }
        }
    }
    return result;
}

Tensor maxpool_spatial_backward(const ArgmaxIndex& argmax, const Tensor& grad_out) {
    if (grad_out.shape() != argmax.input_shape) {
        throw ShapeError("maxpool_backward: grad_out " + to_string(grad_out.shape()) + " does not match " +
                         to_string(argmax.input_shape));
    }
    Tensor grad_in(argmax.input_shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[argmax.winner[i]] += grad_out[i];
    return grad_in;
}

Tensor channel_group_max(const Tensor& r, const Tensor& g, const Tensor& b) {
    require_same_shape(r, g, "channel_group_max");
    require_same_shape(r, b, "channel_group_max");
    Tensor out(r.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max({r[i], g[i], b[i]});
    return out;
}

std::array<Tensor, 3> channel_group_max_backward(const Tensor& r, const Tensor& g, const Tensor& b,
                                                 const Tensor& grad_out) {
    require_same_shape(r, g, "channel_group_max_backward");
    require_same_shape(r, b, "channel_group_max_backward");
    require_same_shape(r, grad_out, "channel_group_max_backward");
    std::array<Tensor, 3> grads{Tensor(r.shape()), Tensor(r.shape()), Tensor(r.shape())};
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        std::size_t k = 0;
        if (g[i] > r[i]) k = 1;
        if (b[i] > (k == 0 ? r[i] : g[i])) k = 2;
        grads[k][i] = grad_out[i];
    }
    return grads;
}

Tensor concat_channels(std::span<const Tensor> inputs) {
    if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    for (const Tensor& t : inputs) require_rank4(t, "concat_channels");
    const Tensor& first = inputs.front();
    std::size_t total_c = 0;
    for (const Tensor& t : inputs) {
        if (t.dim(0) != first.dim(0) || t.dim(1) != first.dim(1) || t.dim(2) != first.dim(2)) {
            throw ShapeError("concat_channels: " + to_string(t.shape()) + " disagrees with " +
                             to_string(first.shape()) + " on N,H,W");
        }
        total_c += t.dim(3);
    }
    const std::size_t pixels = first.dim(0) * first.dim(1) * first.dim(2);
    Tensor out = Tensor::nhwc(first.dim(0), first.dim(1), first.dim(2), total_c);
    std::size_t offset = 0;
    for (const Tensor& t : inputs) {
        const std::size_t c = t.dim(3);
        for (std::size_t p = 0; p < pixels; ++p) {
            std::copy_n(t.data().data() + p * c, c, out.data().data() + p * total_c + offset);
        }
        offset += c;
    }
    return out;
}

std::vector<Tensor> split_channels(const Tensor& input, std::span<const std::size_t> widths) {
    require_rank4(input, "split_channels");
    std::size_t total = 0;
    for (std::size_t c : widths) total += c;
    if (total != input.dim(3)) {
        throw ShapeError("split_channels: widths sum to " + std::to_string(total) + " but input is " +
                         to_string(input.shape()));
    }
    const std::size_t pixels = input.dim(0) * input.dim(1) * input.dim(2);
    std::vector<Tensor> parts;
    std::size_t offset = 0;
    for (std::size_t c : widths) {
        Tensor part = Tensor::nhwc(input.dim(0), input.dim(1), input.dim(2), c);
        for (std::size_t p = 0; p < pixels; ++p) {
            std::copy_n(input.data().data() + p * total + offset, c, part.data().data() + p * c);
        }
        parts.push_back(std::move(part));
        offset += c;
    }
    return parts;
}

void BiReLU::validate() const {
    if (!(t_min < t_max)) throw std::invalid_argument("BiReLU: t_min must be below t_max");
}

Tensor birelu_forward(const Tensor& input, const BiReLU& act) {
    act.validate();
    Tensor out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = std::clamp(input[i], act.t_min, act.t_max);
    return out;
}

Tensor birelu_backward(const Tensor& input, const BiReLU& act, const Tensor& grad_out) {
    require_same_shape(input, grad_out, "birelu_backward");
    Tensor grad(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        grad[i] = (input[i] > act.t_min && input[i] < act.t_max) ? grad_out[i] : 0.0;
    }
    return grad;
}

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse_loss");
    if (pred.size() == 0) throw ShapeError("mse_loss: empty tensors");
    const double m = static_cast<double>(pred.size());
    LossResult r{0.0, Tensor(pred.shape())};
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        sum += d * d;
        r.grad[i] = 2.0 * d / m;
    }
    r.loss = sum / m;
    return r;
}

void SGDConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("SGDConfig: learning_rate must be positive");
    }
    if (batch_size < 1) throw std::invalid_argument("SGDConfig: batch_size must be at least 1");
    if (epochs < 1) throw std::invalid_argument("SGDConfig: epochs must be at least 1");
}

void sgd_step(const ParamList& params, const ConstParamList& grads, double learning_rate) {
    if (params.size() != grads.size()) {
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameter groups but " +
                         std::to_string(grads.size()) + " gradient groups");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size()) {
            throw ShapeError("sgd_step: group " + std::to_string(i) + " has " + std::to_string(params[i].size()) +
                             " parameters but " + std::to_string(grads[i].size()) + " gradients");
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].size(); ++j) params[i][j] -= learning_rate * grads[i][j];
    }
}

}  // namespace dehaze::nn
