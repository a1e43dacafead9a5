#include "dehaze/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace dehaze::metrics {

namespace {

void require_same_dims(const Image& a, const Image& b, const char* what) {
    if (!a.same_dims(b)) {
        throw ShapeError(std::string(what) + ": image dims differ (" + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + "x" + std::to_string(a.channels()) + " vs " +
                         std::to_string(b.height()) + "x" + std::to_string(b.width()) + "x" +
                         std::to_string(b.channels()) + ")");
    }
    if (a.empty()) throw std::invalid_argument(std::string(what) + ": empty images");
}

Grid luma(const Image& img, const SsimConfig& cfg) {
    Grid g(img.height(), img.width());
    if (img.channels() == 1) {
        g.data = img.data();
        return g;
    }
    for (std::size_t p = 0; p < img.pixels(); ++p) {
        const double* px = img.data().data() + p * 3;
        g.data[p] = cfg.luma[0] * px[0] + cfg.luma[1] * px[1] + cfg.luma[2] * px[2];
    }
    return g;
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

Timing summarize(std::span<const double> samples) {
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= static_cast<double>(samples.size() > 1 ? samples.size() - 1 : 1);
    return {mean, std::sqrt(var)};
}

}  // namespace

double mse_image(const Image& a, const Image& b) {
    require_same_dims(a, b, "mse_image");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.data().size());
}

double psnr(const Image& a, const Image& b) {
    const double m = mse_image(a, b);
    return m == 0.0 ? kPsnrInfinite : 10.0 * std::log10(1.0 / m);
}

std::vector<double> gaussian_window(std::size_t window, double sigma) {
    if (window == 0 || window % 2 == 0 || !(sigma > 0.0)) {
        throw std::invalid_argument("ssim window must be odd and sigma positive");
    }
    std::vector<double> w(window * window);
    const double r = static_cast<double>(window / 2);
    double total = 0.0;
    for (std::size_t y = 0; y < window; ++y) {
        for (std::size_t x = 0; x < window; ++x) {
            const double dy = static_cast<double>(y) - r, dx = static_cast<double>(x) - r;
            w[y * window + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            total += w[y * window + x];
        }
    }
    for (double& v : w) v /= total;
    return w;
}

double ssim(const Image& a, const Image& b, const SsimConfig& cfg) {
    require_same_dims(a, b, "ssim");
    if (a.height() < cfg.window || a.width() < cfg.window) {
        throw std::invalid_argument("ssim: image smaller than the " + std::to_string(cfg.window) + "x" +
                                    std::to_string(cfg.window) + " window");
    }
    const std::vector<double> w = gaussian_window(cfg.window, cfg.sigma);
    const Grid la = luma(a, cfg), lb = luma(b, cfg);
    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
    const std::size_t oh = a.height() - cfg.window + 1, ow = a.width() - cfg.window + 1;

    double total = 0.0;
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::size_t dy = 0; dy < cfg.window; ++dy) {
                for (std::size_t dx = 0; dx < cfg.window; ++dx) {
                    const double wt = w[dy * cfg.window + dx];
                    const double va = la.at(y + dy, x + dx), vb = lb.at(y + dy, x + dx);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
            const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            const double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            total += num / den;
        }
    }
    return total / static_cast<double>(oh * ow);
}

void MetricReport::add(std::string path, const Image& result, const Image& reference) {
    const double m = mse_image(result, reference);
    rows.push_back({std::move(path), ssim(result, reference, ssim_config), m,
                    m == 0.0 ? kPsnrInfinite : 10.0 * std::log10(1.0 / m)});
}

double MetricReport::mean_ssim() const {
    double s = 0;
    for (const auto& r : rows) s += r.ssim;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

double MetricReport::mean_mse() const {
    double s = 0;
    for (const auto& r : rows) s += r.mse;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

double MetricReport::mean_psnr() const {
    double s = 0;
    for (const auto& r : rows) s += r.psnr;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os << "path,ssim,mse,psnr\n";
    for (const auto& r : rows) os << r.path << ',' << fmt(r.ssim) << ',' << fmt(r.mse) << ',' << fmt(r.psnr) << '\n';
    return os.str();
}

std::string MetricReport::summary(const std::string& title) const {
    std::ostringstream os;
    os << "report " << title << '\n';
    os << "images " << rows.size() << '\n';
    os << "mean_ssim " << fmt(mean_ssim()) << '\n';
    os << "mean_mse " << fmt(mean_mse()) << '\n';
    os << "mean_psnr " << fmt(mean_psnr()) << '\n';
    os << "ssim_window " << ssim_config.window << " sigma " << fmt(ssim_config.sigma) << " k1 "
       << fmt(ssim_config.k1) << " k2 " << fmt(ssim_config.k2) << " luma " << fmt(ssim_config.luma[0]) << ','
       << fmt(ssim_config.luma[1]) << ',' << fmt(ssim_config.luma[2]) << '\n';
    return os.str();
}

BenchResult bench_time(const std::function<void(const Image&)>& method, std::span<const Image> images,
                       std::size_t repeats) {
    if (repeats < 3) throw std::invalid_argument("bench: repeats must be at least 3");
    if (images.empty()) throw std::invalid_argument("bench: no images");
    BenchResult result;
    std::vector<double> all;
    for (const Image& img : images) {
        std::vector<double> runs;
        for (std::size_t r = 0; r < repeats; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            method(img);
            runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        result.per_image.push_back(summarize(runs));
        all.insert(all.end(), runs.begin(), runs.end());
    }
    result.overall = summarize(all);
    return result;
}

}  // namespace dehaze::metrics
