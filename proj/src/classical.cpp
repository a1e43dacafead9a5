#include "dehaze/classical.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace dehaze::classical {

namespace {

void require_rgb(const Image& img, const char* what) {
    if (img.channels() != 3) throw std::invalid_argument(std::string(what) + ": expected a 3-channel image");
    if (img.empty()) throw std::invalid_argument(std::string(what) + ": empty image");
}

void require_odd_patch(std::size_t patch) {
    if (patch == 0 || patch % 2 == 0) {
        throw std::invalid_argument("patch size must be odd and positive, got " + std::to_string(patch));
    }
}

// Running minimum of `n` strided samples over a centered window of radius r,
// clipped at both ends. Monotonic deque of candidate indices.
void min_line(const double* src, double* dst, std::size_t n, std::size_t stride, std::size_t r,
              std::deque<std::size_t>& q) {
    q.clear();
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t hi = std::min(i + r, n - 1);
        for (; next <= hi; ++next) {
            while (!q.empty() && src[q.back() * stride] >= src[next * stride]) q.pop_back();
            q.push_back(next);
        }
        const std::size_t lo = i >= r ? i - r : 0;
        while (q.front() < lo) q.pop_front();
        dst[i * stride] = src[q.front() * stride];
    }
}

Grid channel_min(const Image& img, const Airlight* air) {
    Grid g(img.height(), img.width());
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            double m = air ? img.at(y, x, 0) / air->rgb[0] : img.at(y, x, 0);
            for (std::size_t c = 1; c < 3; ++c) m = std::min(m, air ? img.at(y, x, c) / air->rgb[c] : img.at(y, x, c));
            g.at(y, x) = m;
        }
    }
    return g;
}

}  // namespace

Grid min_filter(const Grid& src, std::size_t patch) {
    require_odd_patch(patch);
    const std::size_t r = patch / 2;
    Grid rows(src.height, src.width);
    Grid out(src.height, src.width);
    if (src.data.empty()) return out;
    std::deque<std::size_t> q;
    // A clipped square window is a product of clipped intervals, so the 2-D
    // minimum separates into a row pass and a column pass.
    for (std::size_t y = 0; y < src.height; ++y) {
        min_line(&src.data[y * src.width], &rows.data[y * src.width], src.width, 1, r, q);
    }
    for (std::size_t x = 0; x < src.width; ++x) {
        min_line(&rows.data[x], &out.data[x], src.height, src.width, r, q);
    }
    return out;
}

DarkChannel dark_channel(const Image& img, std::size_t patch_size) {
    require_odd_patch(patch_size);
    require_rgb(img, "dark_channel");
    DarkChannel dark;
    static_cast<Grid&>(dark) = min_filter(channel_min(img, nullptr), patch_size);
    dark.patch_size = patch_size;
    return dark;
}

Airlight estimate_airlight(const Image& img, const DarkChannel& dark, double fraction) {
    require_rgb(img, "estimate_airlight");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("airlight fraction must lie in (0, 1]");
    if (dark.height != img.height() || dark.width != img.width()) {
        throw ShapeError("estimate_airlight: dark channel dims differ from image dims");
    }
    const std::size_t n = img.pixels();
    // Guard against products like 0.001 * 1000 landing a hair above an integer.
    const double wanted = fraction * static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::ceil(wanted - 1e-9 * std::max(1.0, wanted)));
    k = std::clamp<std::size_t>(k, 1, n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (dark.data[a] != dark.data[b]) return dark.data[a] > dark.data[b];
                          return a < b;
                      });
    Airlight air;
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) sum += img.data()[order[i] * 3 + c];
        air.rgb[c] = sum / static_cast<double>(k);
    }
    return air;
}

TransmissionMap estimate_transmission(const Image& img, const Airlight& air, double eta, std::size_t patch_size) {
    require_rgb(img, "estimate_transmission");
    require_odd_patch(patch_size);
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
    for (double a : air.rgb) {
        if (!(a > 0.0)) throw std::invalid_argument("estimate_transmission: airlight component must be positive");
    }
    // min over channels and min over the window commute.
    const Grid inner = min_filter(channel_min(img, &air), patch_size);
    TransmissionMap tr(img.height(), img.width());
    for (std::size_t i = 0; i < inner.data.size(); ++i) tr.data[i] = std::clamp(1.0 - eta * inner.data[i], 0.0, 1.0);
    return tr;
}

std::vector<double> recover_radiance(const Image& img, const TransmissionMap& tr, const Airlight& air,
                                     double t_floor) {
    if (img.channels() != 3) throw std::invalid_argument("recover_scene: expected a 3-channel image");
    if (tr.height != img.height() || tr.width != img.width()) {
        throw ShapeError("recover_scene: transmission " + std::to_string(tr.height) + "x" +
                         std::to_string(tr.width) + " does not match image " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()));
    }
    if (!(t_floor > 0.0 && t_floor < 1.0)) throw std::invalid_argument("t_floor must lie in (0, 1)");
    std::vector<double> out(img.data().size());
    for (std::size_t p = 0; p < img.pixels(); ++p) {
        const double t = std::max(tr.data[p], t_floor);
        for (std::size_t c = 0; c < 3; ++c) {
            out[p * 3 + c] = (img.data()[p * 3 + c] - air.rgb[c]) / t + air.rgb[c];
        }
    }
    return out;
}

Image recover_scene(const Image& img, const TransmissionMap& tr, const Airlight& air, double t_floor) {
    std::vector<double> r = recover_radiance(img, tr, air, t_floor);
    for (double& v : r) v = std::clamp(v, 0.0, 1.0);
    return Image(img.height(), img.width(), 3, std::move(r));
}

Result dehaze_classical(const Image& img, const Params& params) {
    const DarkChannel dark = dark_channel(img, params.patch_size);
    const Airlight air = estimate_airlight(img, dark, params.airlight_fraction);
    TransmissionMap tr = estimate_transmission(img, air, params.eta, params.patch_size);
    Image recovered = recover_scene(img, tr, air, params.t_floor);
    return {std::move(recovered), std::move(tr), air};
}

}  // namespace dehaze::classical
