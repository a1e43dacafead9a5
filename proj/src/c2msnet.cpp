#include "dehaze/c2msnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>
#include <utility>

#include "dehaze/image_io.hpp"
#include "dehaze/random.hpp"

namespace dehaze::net {

namespace {

void require_layer_shape(const nn::Conv2DLayer& layer, const nn::Shape& expected, const char* name) {
    layer.validate();
    if (layer.kernel.shape() != expected) {
        throw ShapeError(std::string("network layer ") + name + ": kernel " + nn::to_string(layer.kernel.shape()) +
                         " but the architecture requires " + nn::to_string(expected));
    }
}

nn::Shape branch_shape(std::size_t b) { return {kBranchKernels[b], kBranchKernels[b], kStage1Filters, kBranchFilters}; }

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void accumulate(NetworkParams& total, const NetworkParams& part) {
    auto dst = total.parameters();
    const auto src = part.parameters();
    for (std::size_t g = 0; g < dst.size(); ++g)
        for (std::size_t i = 0; i < dst[g].size(); ++i) dst[g][i] += src[g][i];
}

void scale(NetworkParams& p, double s) {
    for (auto group : p.parameters())
        for (double& v : group) v *= s;
}

}  // namespace

std::size_t worker_count() {
    if (const char* env = std::getenv("DEHAZE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

NetworkParams NetworkParams::initialize(std::uint64_t seed) {
    Rng rng(seed);
    NetworkParams p;
    for (auto& layer : p.stage1) layer = nn::Conv2DLayer::glorot(3, 3, 1, kStage1Filters, rng);
    for (std::size_t b = 0; b < 3; ++b) {
        p.stage2_ms[b] = nn::Conv2DLayer::glorot(kBranchKernels[b], kBranchKernels[b], kStage1Filters, kBranchFilters, rng);
    }
    p.stage2_final = nn::Conv2DLayer::glorot(kFinalKernel, kFinalKernel, kConcatChannels, 1, rng);
    return p;
}

NetworkParams NetworkParams::zeros_like() const {
    NetworkParams z = *this;
    for (auto group : z.parameters()) std::fill(group.begin(), group.end(), 0.0);
    return z;
}

void NetworkParams::validate() const {
    static constexpr const char* kPlaneNames[] = {"stage1_r", "stage1_g", "stage1_b"};
    static constexpr const char* kBranchNames[] = {"stage2_3x3", "stage2_5x5", "stage2_7x7"};
    for (std::size_t c = 0; c < 3; ++c) require_layer_shape(stage1[c], {3, 3, 1, kStage1Filters}, kPlaneNames[c]);
    for (std::size_t b = 0; b < 3; ++b) require_layer_shape(stage2_ms[b], branch_shape(b), kBranchNames[b]);
    require_layer_shape(stage2_final, {kFinalKernel, kFinalKernel, kConcatChannels, 1}, "stage2_final");
    birelu.validate();
}

bool NetworkParams::all_finite() const {
    for (auto group : parameters())
        for (double v : group)
            if (!std::isfinite(v)) return false;
    return std::isfinite(birelu.t_min) && std::isfinite(birelu.t_max);
}

nn::ParamList NetworkParams::parameters() {
    nn::ParamList list;
    auto add = [&](nn::Conv2DLayer& l) {
        list.emplace_back(l.kernel.data());
        list.emplace_back(l.bias);
    };
    for (auto& l : stage1) add(l);
    for (auto& l : stage2_ms) add(l);
    add(stage2_final);
    return list;
}

nn::ConstParamList NetworkParams::parameters() const {
    nn::ConstParamList list;
    for (auto s : const_cast<NetworkParams*>(this)->parameters()) list.emplace_back(s.data(), s.size());
    return list;
}

std::vector<std::string> NetworkParams::group_names() {
    std::vector<std::string> names;
    for (const char* layer : {"stage1_r", "stage1_g", "stage1_b", "stage2_3x3", "stage2_5x5", "stage2_7x7",
                              "stage2_final"}) {
        names.push_back(std::string(layer) + ".kernel");
        names.push_back(std::string(layer) + ".bias");
    }
    return names;
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (auto g : parameters()) n += g.size();
    return n;
}

ForwardCache forward(const nn::Tensor& input, const NetworkParams& params) {
    nn::require_rank4(input, "c2msnet forward");
    if (input.dim(3) != 3) {
        throw ShapeError("c2msnet forward: expected 3 color channels, got " + nn::to_string(input.shape()));
    }
    ForwardCache cache;
    static constexpr std::array<std::size_t, 3> kPlanes{1, 1, 1};
    auto planes = nn::split_channels(input, kPlanes);
    for (std::size_t c = 0; c < 3; ++c) {
        cache.planes[c] = std::move(planes[c]);
        cache.psi[c] = nn::conv2d_forward(cache.planes[c], params.stage1[c]);
    }
    cache.stage1 = nn::channel_group_max(cache.psi[0], cache.psi[1], cache.psi[2]);

    std::array<nn::Tensor, 3> branches;
    for (std::size_t b = 0; b < 3; ++b) branches[b] = nn::conv2d_forward(cache.stage1, params.stage2_ms[b]);
    cache.concat = nn::concat_channels(branches);
    if (cache.concat.dim(3) != kConcatChannels) throw ShapeError("c2msnet: concat stage must have 48 channels");
    cache.pooled = nn::maxpool_spatial_forward(cache.concat, kPoolWindow, 1);
    cache.pre_activation = nn::conv2d_forward(cache.pooled.output, params.stage2_final);
    cache.output = nn::birelu_forward(cache.pre_activation, params.birelu);
    return cache;
}

NetworkParams backward(const ForwardCache& cache, const NetworkParams& params, const nn::Tensor& grad_output) {
    nn::require_same_shape(cache.output, grad_output, "c2msnet backward");
    NetworkParams grads = params.zeros_like();

    const nn::Tensor g_pre = nn::birelu_backward(cache.pre_activation, params.birelu, grad_output);
    nn::ConvGrads final_g = nn::conv2d_backward(cache.pooled.output, params.stage2_final, g_pre);
    grads.stage2_final.kernel = std::move(final_g.kernel);
    grads.stage2_final.bias = std::move(final_g.bias);

    const nn::Tensor g_concat = nn::maxpool_spatial_backward(cache.pooled.argmax, final_g.input);
    static constexpr std::array<std::size_t, 3> kWidths{kBranchFilters, kBranchFilters, kBranchFilters};
    const auto g_branches = nn::split_channels(g_concat, kWidths);

    nn::Tensor g_stage1(cache.stage1.shape());
    for (std::size_t b = 0; b < 3; ++b) {
        nn::ConvGrads bg = nn::conv2d_backward(cache.stage1, params.stage2_ms[b], g_branches[b]);
        grads.stage2_ms[b].kernel = std::move(bg.kernel);
        grads.stage2_ms[b].bias = std::move(bg.bias);
        for (std::size_t i = 0; i < g_stage1.size(); ++i) g_stage1[i] += bg.input[i];
    }

    const auto g_psi = nn::channel_group_max_backward(cache.psi[0], cache.psi[1], cache.psi[2], g_stage1);
    for (std::size_t c = 0; c < 3; ++c) {
        nn::ConvGrads pg = nn::conv2d_backward(cache.planes[c], params.stage1[c], g_psi[c]);
        grads.stage1[c].kernel = std::move(pg.kernel);
        grads.stage1[c].bias = std::move(pg.bias);
    }
    return grads;
}

nn::Tensor forward_stage1(const nn::Tensor& input, const NetworkParams& params) {
    nn::require_rank4(input, "forward_stage1");
    if (input.dim(3) != 3) throw std::invalid_argument("forward_stage1: expected a 3-channel input");
    static constexpr std::array<std::size_t, 3> kPlanes{1, 1, 1};
    const auto planes = nn::split_channels(input, kPlanes);
    return nn::channel_group_max(nn::conv2d_forward(planes[0], params.stage1[0]),
                                 nn::conv2d_forward(planes[1], params.stage1[1]),
                                 nn::conv2d_forward(planes[2], params.stage1[2]));
}

nn::Tensor forward_stage1(const Image& img, const NetworkParams& params) {
    if (img.channels() != 3) throw std::invalid_argument("forward_stage1: expected a 3-channel image");
    return forward_stage1(img.to_tensor(), params);
}

TransmissionMap forward_stage2(const nn::Tensor& features, const NetworkParams& params) {
    nn::require_rank4(features, "forward_stage2");
    if (features.dim(3) != kStage1Filters || features.dim(0) != 1) {
        throw ShapeError("forward_stage2: expected (1,H,W,32) features, got " + nn::to_string(features.shape()));
    }
    std::array<nn::Tensor, 3> branches;
    for (std::size_t b = 0; b < 3; ++b) branches[b] = nn::conv2d_forward(features, params.stage2_ms[b]);
    const nn::Tensor concat = nn::concat_channels(branches);
    const nn::MaxPoolResult pooled = nn::maxpool_spatial_forward(concat, kPoolWindow, 1);
    const nn::Tensor out = nn::birelu_forward(nn::conv2d_forward(pooled.output, params.stage2_final), params.birelu);
    TransmissionMap tr(features.dim(1), features.dim(2));
    tr.data = out.data();
    return tr;
}

TransmissionMap predict_transmission(const Image& img, const NetworkParams& params) {
    return forward_stage2(forward_stage1(img, params), params);
}

classical::Result dehaze_net(const Image& img, const NetworkParams& params, const DehazeOptions& options) {
    if (img.channels() != 3) throw std::invalid_argument("dehaze_net: expected a 3-channel image");
    TransmissionMap tr = predict_transmission(img, params);
    const auto dark = classical::dark_channel(img, options.airlight_patch);
    const Airlight air = classical::estimate_airlight(img, dark, options.airlight_fraction);
    Image recovered = classical::recover_scene(img, tr, air, options.t_floor);
    return {std::move(recovered), std::move(tr), air};
}

std::vector<Sample> load_samples(const synth::DatasetManifest& manifest, synth::Split split) {
    std::vector<Sample> samples;
    for (const auto& e : manifest.entries) {
        if (e.split != split) continue;
        const Image hazy = io::read_image(manifest.resolve(e.hazy_path));
        const Image tr = io::read_image(manifest.resolve(e.transmission_path));
        if (hazy.channels() != 3 || tr.channels() != 1 || hazy.height() != tr.height() ||
            hazy.width() != tr.width()) {
            throw std::runtime_error("manifest entry has mismatched patch files: " + e.hazy_path);
        }
        samples.push_back({hazy.to_tensor(), tr.to_tensor()});
    }
    return samples;
}

SampleGrad sample_gradient(const Sample& sample, const NetworkParams& params) {
    const ForwardCache cache = forward(sample.hazy, params);
    nn::LossResult loss = nn::mse_loss(cache.output, sample.target);
    return {loss.loss, backward(cache, params, loss.grad)};
}

double evaluate_loss(const NetworkParams& params, std::span<const Sample> samples, std::size_t threads) {
    if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> losses(samples.size());
    parallel_for(samples.size(), threads ? threads : worker_count(), [&](std::size_t i) {
        const ForwardCache cache = forward(samples[i].hazy, params);
        losses[i] = nn::mse_loss(cache.output, samples[i].target).loss;
    });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(samples.size());
}

TrainResult train(std::span<const Sample> train_set, std::span<const Sample> val_set, const nn::SGDConfig& cfg,
                  const TrainOptions& options) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: no training samples");
    const std::size_t threads = options.threads ? options.threads : worker_count();
    const auto start = std::chrono::steady_clock::now();

    TrainResult result{NetworkParams::initialize(cfg.seed), {}};
    NetworkParams& params = result.params;
    TrainReport& report = result.report;
    report.initial_train_loss = evaluate_loss(params, train_set, threads);

    std::vector<std::size_t> order(train_set.size());
    std::vector<SampleGrad> per_sample;
    std::size_t batch_index = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed(cfg.seed, epoch + 1));
        rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size, ++batch_index) {
            const std::size_t bn = std::min(cfg.batch_size, order.size() - b0);
            per_sample.assign(bn, SampleGrad{});
            parallel_for(bn, threads,
                         [&](std::size_t k) { per_sample[k] = sample_gradient(train_set[order[b0 + k]], params); });

            NetworkParams total = params.zeros_like();
            double batch_loss = 0.0;
            for (const SampleGrad& sg : per_sample) {
                accumulate(total, sg.grads);
                batch_loss += sg.loss;
            }
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("train: non-finite loss in batch " + std::to_string(batch_index) +
                                         " (epoch " + std::to_string(epoch + 1) + ")");
            }
            scale(total, 1.0 / static_cast<double>(bn));
            nn::sgd_step(params.parameters(), std::as_const(total).parameters(), cfg.learning_rate);
            epoch_loss += batch_loss;
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
        report.val_loss.push_back(evaluate_loss(params, val_set, threads));
        report.epochs_completed = epoch + 1;
        if (options.on_epoch) options.on_epoch(epoch + 1, report.train_loss.back(), report.val_loss.back());
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

TrainResult train(const synth::DatasetManifest& manifest, const nn::SGDConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    if (manifest.entries.empty()) throw std::invalid_argument("train: manifest has no entries");
    const auto train_set = load_samples(manifest, synth::Split::train);
    const auto val_set = load_samples(manifest, synth::Split::val);
    return train(train_set, val_set, cfg, options);
}

}  // namespace dehaze::net
