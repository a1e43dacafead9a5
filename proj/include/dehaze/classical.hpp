#pragma once

#include <vector>

#include "dehaze/image.hpp"

namespace dehaze::classical {

/// Per-pixel minimum over a local window and over the color channels.
struct DarkChannel : Grid {
    std::size_t patch_size = 15;
};

struct Params {
    std::size_t patch_size = 15;
    double airlight_fraction = 0.001;
    double eta = 0.95;
    double t_floor = 0.1;
};

/// Sliding-window minimum over a patch x patch window clipped to the grid
/// bounds. Runs in O(H*W) regardless of the window size.
Grid min_filter(const Grid& src, std::size_t patch);

DarkChannel dark_channel(const Image& img, std::size_t patch_size = 15);

/// Mean color over the ceil(fraction*H*W) pixels with the brightest dark
/// channel; equal dark values are taken in row-major order.
Airlight estimate_airlight(const Image& img, const DarkChannel& dark, double fraction = 0.001);

/// 1 - eta * min_c(minfilter(I_c / A_c)), clamped to [0, 1].
TransmissionMap estimate_transmission(const Image& img, const Airlight& air, double eta = 0.95,
                                      std::size_t patch_size = 15);

/// Inverts the optical model without clamping: (I - A) / max(Tr, t_floor) + A.
std::vector<double> recover_radiance(const Image& img, const TransmissionMap& tr, const Airlight& air,
                                     double t_floor = 0.1);

/// recover_radiance clamped into a valid image.
Image recover_scene(const Image& img, const TransmissionMap& tr, const Airlight& air, double t_floor = 0.1);

struct Result {
    Image recovered;
    TransmissionMap transmission;
    Airlight airlight;
};

Result dehaze_classical(const Image& img, const Params& params = {});

}  // namespace dehaze::classical
