#pragma once

#include <array>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dehaze/image.hpp"

namespace dehaze::metrics {

/// PSNR of identical images.
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

double mse_image(const Image& a, const Image& b);

/// 10 log10(1 / mse), peak 1.0; kPsnrInfinite when mse is zero.
double psnr(const Image& a, const Image& b);

struct SsimConfig {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
    std::array<double, 3> luma{0.299, 0.587, 0.114};
};

/// Mean SSIM over all fully contained Gaussian windows, computed on luma for
/// color input.
double ssim(const Image& a, const Image& b, const SsimConfig& cfg = {});

/// Normalized window-by-window Gaussian weights (window x window, row-major).
std::vector<double> gaussian_window(std::size_t window, double sigma);

struct MetricRow {
    std::string path;
    double ssim = 0.0;
    double mse = 0.0;
    double psnr = 0.0;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    SsimConfig ssim_config;

    void add(std::string path, const Image& result, const Image& reference);
    double mean_ssim() const;
    double mean_mse() const;
    double mean_psnr() const;

    /// `path,ssim,mse,psnr` header plus one row per image; PSNR of identical
    /// images is written as `inf`.
    std::string to_csv() const;
    /// Human-readable summary with the means and the SSIM constants used.
    std::string summary(const std::string& title) const;
};

struct Timing {
    double mean_seconds = 0.0;
    double stddev_seconds = 0.0;
};

struct BenchResult {
    std::vector<Timing> per_image;
    Timing overall;  // over every individual run
};

/// Runs `method` on every image `repeats` times (repeats >= 3).
BenchResult bench_time(const std::function<void(const Image&)>& method, std::span<const Image> images,
                       std::size_t repeats);

}  // namespace dehaze::metrics
