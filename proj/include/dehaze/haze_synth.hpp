#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dehaze/image.hpp"

namespace dehaze::synth {

/// Nonnegative scene depth in arbitrary consistent units.
struct DepthMap : Grid {
    using Grid::Grid;
    DepthMap() = default;
    explicit DepthMap(Grid g) : Grid(std::move(g)) {}

    void validate() const;
    /// Depth divided by its maximum (unchanged when the maximum is zero).
    DepthMap normalized() const;
};

struct HazeParams {
    double beta = 1.0;
    Airlight airlight{{0.8, 0.8, 0.8}};
    /// When set, each source image draws a gray airlight uniformly in [0.7, 1.0].
    bool jitter_airlight = false;
    std::uint64_t seed = 0;

    void validate() const;
};

/// exp(-beta * d) per pixel.
TransmissionMap transmission_from_depth(const DepthMap& depth, double beta);

/// Optical model forward pass: I_c = R_c * Tr + A_c * (1 - Tr).
Image synthesize_hazy(const Image& clean, const TransmissionMap& tr, const Airlight& air);

struct PatchPair {
    std::size_t y = 0, x = 0;  // top-left corner in the source
    Image hazy;
    TransmissionMap transmission;
};

/// Top-left corners drawn uniformly from [0, H-patch] x [0, W-patch].
std::vector<std::pair<std::size_t, std::size_t>> sample_corners(std::size_t height, std::size_t width,
                                                                std::size_t patch, std::size_t count,
                                                                std::uint64_t seed);

std::vector<PatchPair> extract_patches(const Image& hazy, const TransmissionMap& tr, std::size_t patch,
                                       std::size_t count, std::uint64_t seed);

enum class Split { train, val };

struct ManifestEntry {
    Split split = Split::train;
    std::string hazy_path;         // relative to the manifest directory
    std::string transmission_path; // relative to the manifest directory
    Airlight airlight;
};

struct ManifestFailure {
    std::string path;
    std::string reason;
};

/// Index of stored (hazy, transmission, airlight) training patches.
///
/// On disk: a header line `# c2msnet-manifest v1 patch_size=<n>`, zero or more
/// `# failed\t<path>\t<reason>` lines, then one comma-separated record per
/// patch: `split,hazy_path,transmission_path,A_r,A_g,A_b`. Paths are relative
/// to the manifest's directory. The clean crop each hazy patch was made from
/// is stored beside it under `clean/` with the same file name.
struct DatasetManifest {
    std::filesystem::path root;  // directory holding the manifest file
    std::size_t patch_size = 64;
    std::vector<ManifestEntry> entries;
    std::vector<ManifestFailure> failures;

    std::size_t count(Split s) const;
    std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
    std::filesystem::path clean_path(const ManifestEntry& e) const;

    std::string serialize() const;
    static DatasetManifest parse(const std::string& text, const std::filesystem::path& root);
    static DatasetManifest load(const std::filesystem::path& manifest_file);
    /// Throws unless every referenced file decodes at the declared patch size.
    void verify_files() const;
};

struct SourcePair {
    std::filesystem::path clean;
    std::filesystem::path depth;
};

struct BuildOptions {
    std::size_t patch = 64;
    std::size_t per_image = 10;
    double split_ratio = 0.8;
    std::filesystem::path out_dir;
    std::string manifest_name = "manifest.txt";
};

/// Synthesizes haze for every source pair, stores 16-bit patch files and
/// writes the manifest. Unreadable sources are skipped and recorded.
DatasetManifest build_manifest(const std::vector<SourcePair>& inputs, const HazeParams& params,
                               const BuildOptions& options);

/// Deterministic stand-in scene: smooth colored background with shapes and
/// dark pixels, plus a depth map increasing with distance from a vanishing
/// point. Used to generate datasets when no RGB-D captures are at hand.
struct Scene {
    Image clean;
    DepthMap depth;
};
Scene procedural_scene(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace dehaze::synth
