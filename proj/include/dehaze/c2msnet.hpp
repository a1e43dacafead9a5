#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dehaze/classical.hpp"
#include "dehaze/haze_synth.hpp"
#include "dehaze/image.hpp"
#include "dehaze/layers.hpp"

namespace dehaze::net {

inline constexpr std::size_t kStage1Filters = 32;
inline constexpr std::size_t kBranchFilters = 16;
inline constexpr std::array<std::size_t, 3> kBranchKernels{3, 5, 7};
inline constexpr std::size_t kConcatChannels = kBranchFilters * kBranchKernels.size();
inline constexpr std::size_t kPoolWindow = 7;
inline constexpr std::size_t kFinalKernel = 5;

/// Every filter bank of the two-stage network.
///
/// stage1[c] is the 3x3x1x32 bank applied to color plane c (R, G, B).
/// stage2_ms holds the 3x3, 5x5 and 7x7 banks mapping 32 -> 16 channels.
/// stage2_final maps the pooled 48 channels to one transmission channel.
struct NetworkParams {
    std::array<nn::Conv2DLayer, 3> stage1;
    std::array<nn::Conv2DLayer, 3> stage2_ms;
    nn::Conv2DLayer stage2_final;
    nn::BiReLU birelu;

    static NetworkParams initialize(std::uint64_t seed);
    /// Same shapes, all weights and biases zero.
    NetworkParams zeros_like() const;

    /// Throws ShapeError on any deviation from the fixed architecture.
    void validate() const;
    bool all_finite() const;

    /// Flat views over every kernel and bias, in a fixed order
    /// (stage1 R/G/B, stage2 3x3/5x5/7x7, final; kernel before bias).
    nn::ParamList parameters();
    nn::ConstParamList parameters() const;
    static std::vector<std::string> group_names();

    std::size_t parameter_count() const;
};

/// Activations kept from a forward pass for the backward pass.
struct ForwardCache {
    std::array<nn::Tensor, 3> planes;  // (N,H,W,1) color planes
    std::array<nn::Tensor, 3> psi;     // per-plane stage-1 responses
    nn::Tensor stage1;                 // (N,H,W,32)
    nn::Tensor concat;                 // (N,H,W,48)
    nn::MaxPoolResult pooled;
    nn::Tensor pre_activation;         // (N,H,W,1)
    nn::Tensor output;                 // (N,H,W,1)
};

/// Input is (N,H,W,3) in [0,1].
ForwardCache forward(const nn::Tensor& input, const NetworkParams& params);

/// Parameter gradients of sum(grad_output * cache.output).
NetworkParams backward(const ForwardCache& cache, const NetworkParams& params, const nn::Tensor& grad_output);

nn::Tensor forward_stage1(const Image& img, const NetworkParams& params);
nn::Tensor forward_stage1(const nn::Tensor& input, const NetworkParams& params);
TransmissionMap forward_stage2(const nn::Tensor& features, const NetworkParams& params);
TransmissionMap predict_transmission(const Image& img, const NetworkParams& params);

struct DehazeOptions {
    std::size_t airlight_patch = 15;
    double airlight_fraction = 0.001;
    double t_floor = 0.1;
};

/// Network transmission, dark-channel airlight, optical-model inversion.
classical::Result dehaze_net(const Image& img, const NetworkParams& params, const DehazeOptions& options = {});

struct Sample {
    nn::Tensor hazy;    // (1,P,P,3)
    nn::Tensor target;  // (1,P,P,1)
};

std::vector<Sample> load_samples(const synth::DatasetManifest& manifest, synth::Split split);

/// Loss and gradients for one sample.
struct SampleGrad {
    double loss = 0.0;
    NetworkParams grads;
};
SampleGrad sample_gradient(const Sample& sample, const NetworkParams& params);

/// Mean per-sample MSE with parameters frozen. Empty input yields NaN.
double evaluate_loss(const NetworkParams& params, std::span<const Sample> samples, std::size_t threads = 0);

struct TrainReport {
    double initial_train_loss = 0.0;
    std::vector<double> train_loss;  // mean over the epoch's batches
    std::vector<double> val_loss;    // after the epoch, parameters frozen
    std::size_t epochs_completed = 0;
    double wall_seconds = 0.0;
};

struct TrainOptions {
    /// Worker threads for per-sample gradients; 0 means worker_count().
    std::size_t threads = 0;
    std::function<void(std::size_t epoch, double train_loss, double val_loss)> on_epoch;
};

struct TrainResult {
    NetworkParams params;
    TrainReport report;
};

/// Mini-batch SGD on MSE. Batches are drawn from a seeded shuffle each epoch;
/// per-sample gradients are reduced in sample order, so results do not
/// depend on the thread count.
TrainResult train(std::span<const Sample> train_set, std::span<const Sample> val_set, const nn::SGDConfig& cfg,
                  const TrainOptions& options = {});
TrainResult train(const synth::DatasetManifest& manifest, const nn::SGDConfig& cfg, const TrainOptions& options = {});

/// DEHAZE_THREADS when set and positive, else the hardware concurrency.
std::size_t worker_count();

}  // namespace dehaze::net
