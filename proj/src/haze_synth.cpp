#include "dehaze/haze_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dehaze/image_io.hpp"
#include "dehaze/random.hpp"

namespace dehaze::synth {

namespace fs = std::filesystem;

void DepthMap::validate() const {
    if (data.size() != height * width) throw ShapeError("depth map data does not match its dims");
    for (double d : data) {
        if (!std::isfinite(d) || d < 0.0) throw std::invalid_argument("depth values must be finite and nonnegative");
    }
}

DepthMap DepthMap::normalized() const {
    DepthMap out = *this;
    const double mx = data.empty() ? 0.0 : *std::max_element(data.begin(), data.end());
    if (mx > 0.0) {
        for (double& d : out.data) d /= mx;
    }
    return out;
}

void HazeParams::validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be finite and nonnegative");
    airlight.validate();
}

TransmissionMap transmission_from_depth(const DepthMap& depth, double beta) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be finite and nonnegative");
    depth.validate();
    TransmissionMap tr(depth.height, depth.width);
    for (std::size_t i = 0; i < depth.data.size(); ++i) tr.data[i] = std::exp(-beta * depth.data[i]);
    return tr;
}

Image synthesize_hazy(const Image& clean, const TransmissionMap& tr, const Airlight& air) {
    if (clean.height() != tr.height || clean.width() != tr.width) {
        throw ShapeError("synthesize_hazy: image " + std::to_string(clean.height()) + "x" +
                         std::to_string(clean.width()) + " vs transmission " + std::to_string(tr.height) + "x" +
                         std::to_string(tr.width));
    }
    const std::size_t c = clean.channels();
    if (c != 3) throw std::invalid_argument("synthesize_hazy: expected a 3-channel image");
    air.validate();
    std::vector<double> out(clean.data().size());
    for (std::size_t p = 0; p < clean.pixels(); ++p) {
        const double t = tr.data[p];
        for (std::size_t k = 0; k < c; ++k) {
            const double v = clean.data()[p * c + k] * t + air.rgb[k] * (1.0 - t);
            // Rounding can push a convex blend of unit values an ulp outside [0, 1].
            out[p * c + k] = std::clamp(v, 0.0, 1.0);
        }
    }
    return Image(clean.height(), clean.width(), c, std::move(out));
}

std::vector<std::pair<std::size_t, std::size_t>> sample_corners(std::size_t height, std::size_t width,
                                                                std::size_t patch, std::size_t count,
                                                                std::uint64_t seed) {
    if (patch == 0 || patch > height || patch > width) {
        throw std::invalid_argument("patch size " + std::to_string(patch) + " exceeds image " +
                                    std::to_string(height) + "x" + std::to_string(width));
    }
    if (count < 1) throw std::invalid_argument("patch count must be at least 1");
    Rng rng(seed);
    std::vector<std::pair<std::size_t, std::size_t>> corners(count);
    for (auto& [y, x] : corners) {
        y = rng.index(height - patch + 1);
        x = rng.index(width - patch + 1);
    }
    return corners;
}

std::vector<PatchPair> extract_patches(const Image& hazy, const TransmissionMap& tr, std::size_t patch,
                                       std::size_t count, std::uint64_t seed) {
    if (hazy.height() != tr.height || hazy.width() != tr.width) {
        throw ShapeError("extract_patches: image and transmission dims differ");
    }
    std::vector<PatchPair> out;
    for (auto [y, x] : sample_corners(hazy.height(), hazy.width(), patch, count, seed)) {
        out.push_back({y, x, hazy.crop(y, x, patch, patch), tr.crop(y, x, patch, patch)});
    }
    return out;
}

std::size_t DatasetManifest::count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

fs::path DatasetManifest::clean_path(const ManifestEntry& e) const {
    return root / "clean" / fs::path(e.hazy_path).filename();
}

namespace {

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    return out;
}

constexpr const char* kHeader = "# c2msnet-manifest v1 patch_size=";

}  // namespace

std::string DatasetManifest::serialize() const {
    std::ostringstream os;
    os << kHeader << patch_size << '\n';
    for (const auto& f : failures) os << "# failed\t" << f.path << '\t' << f.reason << '\n';
    for (const auto& e : entries) {
        os << (e.split == Split::train ? "train" : "val") << ',' << e.hazy_path << ',' << e.transmission_path;
        for (double a : e.airlight.rgb) os << ',' << fmt_real(a);
        os << '\n';
    }
    return os.str();
}

DatasetManifest DatasetManifest::parse(const std::string& text, const fs::path& root) {
    DatasetManifest m;
    m.root = root;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind(kHeader, 0) != 0) {
        throw std::runtime_error("manifest: missing or unknown header");
    }
    m.patch_size = std::stoul(line.substr(std::string(kHeader).size()));
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line.rfind("# failed\t", 0) == 0) {
            auto f = split_fields(line.substr(9), '\t');
            m.failures.push_back({f.empty() ? "" : f[0], f.size() > 1 ? f[1] : ""});
            continue;
        }
        if (line[0] == '#') continue;
        auto f = split_fields(line, ',');
        if (f.size() != 6 || (f[0] != "train" && f[0] != "val")) {
            throw std::runtime_error("manifest: malformed record on line " + std::to_string(lineno));
        }
        ManifestEntry e;
        e.split = f[0] == "train" ? Split::train : Split::val;
        e.hazy_path = f[1];
        e.transmission_path = f[2];
        for (std::size_t c = 0; c < 3; ++c) e.airlight.rgb[c] = std::stod(f[3 + c]);
        m.entries.push_back(std::move(e));
    }
    return m;
}

DatasetManifest DatasetManifest::load(const fs::path& manifest_file) {
    std::ifstream in(manifest_file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read manifest: " + manifest_file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), manifest_file.parent_path());
}

void DatasetManifest::verify_files() const {
    for (const auto& e : entries) {
        const Image hazy = io::read_image(resolve(e.hazy_path));
        const Image tr = io::read_image(resolve(e.transmission_path));
        if (hazy.height() != patch_size || hazy.width() != patch_size || hazy.channels() != 3 ||
            tr.height() != patch_size || tr.width() != patch_size || tr.channels() != 1) {
            throw std::runtime_error("manifest: patch has wrong size: " + e.hazy_path);
        }
    }
}

DatasetManifest build_manifest(const std::vector<SourcePair>& inputs, const HazeParams& params,
                               const BuildOptions& options) {
    params.validate();
    if (!(options.split_ratio > 0.0 && options.split_ratio < 1.0)) {
        throw std::invalid_argument("split ratio must lie in (0, 1)");
    }
    if (options.per_image < 1) throw std::invalid_argument("per-image patch count must be at least 1");
    if (options.patch < 1) throw std::invalid_argument("patch size must be positive");

    DatasetManifest m;
    m.root = options.out_dir;
    m.patch_size = options.patch;
    fs::create_directories(options.out_dir);

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const SourcePair& src = inputs[i];
        try {
            const Image clean = io::read_image(src.clean);
            if (clean.channels() != 3) throw std::runtime_error("clean image is not RGB");
            DepthMap depth(io::read_grid(src.depth));
            if (depth.height != clean.height() || depth.width != clean.width()) {
                throw std::runtime_error("depth " + std::to_string(depth.height) + "x" + std::to_string(depth.width) +
                                         " does not match image " + std::to_string(clean.height()) + "x" +
                                         std::to_string(clean.width()));
            }
            depth.validate();

            Airlight air = params.airlight;
            if (params.jitter_airlight) {
                Rng rng(mix_seed(params.seed, 2 * i));
                air.rgb.fill(rng.uniform(0.7, 1.0));
            }
            // Synthesize from the 16-bit representations that get stored, so
            // stored patches are reproducible from stored patches.
            const TransmissionMap tr = io::quantized16(transmission_from_depth(depth.normalized(), params.beta));
            const Image clean_q = io::quantized16(clean);
            const Image hazy = synthesize_hazy(clean_q, tr, air);

            const auto corners =
                sample_corners(clean.height(), clean.width(), options.patch, options.per_image,
                               mix_seed(params.seed, 2 * i + 1));
            for (std::size_t j = 0; j < corners.size(); ++j) {
                const auto [y, x] = corners[j];
                char name[48];
                std::snprintf(name, sizeof name, "s%04zu_p%05zu.png", i, j);
                const std::string hazy_rel = std::string("hazy/") + name;
                const std::string trans_rel = std::string("trans/") + name;
                io::write_image(options.out_dir / hazy_rel, hazy.crop(y, x, options.patch, options.patch), 16);
                io::write_image(options.out_dir / trans_rel, tr.crop(y, x, options.patch, options.patch).to_image(),
                                16);
                io::write_image(options.out_dir / "clean" / name, clean_q.crop(y, x, options.patch, options.patch),
                                16);
                m.entries.push_back({Split::train, hazy_rel, trans_rel, air});
            }
        } catch (const std::exception& ex) {
            m.failures.push_back({src.clean.string(), ex.what()});
        }
    }

    std::vector<std::size_t> order(m.entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(params.seed, 0xFFFFFFFFull));
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::lround(options.split_ratio * static_cast<double>(order.size())));
    for (std::size_t k = n_train; k < order.size(); ++k) m.entries[order[k]].split = Split::val;

    io::write_text_atomic(options.out_dir / options.manifest_name, m.serialize());
    return m;
}

Scene procedural_scene(std::size_t height, std::size_t width, std::uint64_t seed) {
    Rng rng(seed);
    Scene s{Image(height, width, 3), DepthMap(height, width)};
    const double h = static_cast<double>(height), w = static_cast<double>(width);
    const double horizon = rng.uniform(0.25, 0.45) * h;
    const std::array<double, 3> sky{rng.uniform(0.45, 0.7), rng.uniform(0.55, 0.8), rng.uniform(0.75, 0.95)};
    const std::array<double, 3> ground{rng.uniform(0.15, 0.45), rng.uniform(0.2, 0.5), rng.uniform(0.05, 0.3)};

    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double fy = static_cast<double>(y);
            double depth;
            for (std::size_t c = 0; c < 3; ++c) {
                double v;
                if (fy < horizon) {
                    v = sky[c] * (0.85 + 0.15 * fy / std::max(horizon, 1.0));
                } else {
                    const double g = (fy - horizon) / std::max(h - horizon, 1.0);
                    v = ground[c] * (0.6 + 0.6 * g) + 0.08 * std::sin(0.7 * static_cast<double>(x) + 3.0 * c);
                }
                s.clean.at(y, x, c) = std::clamp(v, 0.0, 1.0);
            }
            if (fy < horizon) {
                depth = 1.0;
            } else {
                depth = 0.95 - 0.9 * (fy - horizon) / std::max(h - horizon, 1.0);
            }
            s.depth.at(y, x) = depth;
        }
    }

    // Objects standing on the ground: nearer ones are lower in frame and larger.
    const std::size_t objects = 4 + rng.index(5);
    for (std::size_t k = 0; k < objects; ++k) {
        const double base = rng.uniform(horizon + 0.1 * (h - horizon), h);
        const double near = (base - horizon) / std::max(h - horizon, 1.0);
        const double obj_h = (0.15 + 0.45 * near) * h * rng.uniform(0.6, 1.0);
        const double obj_w = (0.08 + 0.25 * near) * w * rng.uniform(0.6, 1.2);
        const double cx = rng.uniform(0.0, w);
        const double depth = std::clamp(0.95 - 0.9 * near, 0.0, 1.0);
        std::array<double, 3> color{rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95)};
        color[rng.index(3)] = rng.uniform(0.0, 0.08);  // guarantees a dark channel
        const bool round = rng.index(2) == 0;
        for (std::size_t y = 0; y < height; ++y) {
            const double fy = static_cast<double>(y);
            if (fy < base - obj_h || fy >= base) continue;
            for (std::size_t x = 0; x < width; ++x) {
                const double fx = static_cast<double>(x);
                if (round) {
                    const double dy = (fy - (base - obj_h / 2)) / (obj_h / 2);
                    const double dx = (fx - cx) / (obj_w / 2);
                    if (dx * dx + dy * dy > 1.0) continue;
                } else if (std::abs(fx - cx) > obj_w / 2) {
                    continue;
                }
                const double shade = 0.8 + 0.2 * std::cos(0.5 * fx + 0.3 * fy);
                for (std::size_t c = 0; c < 3; ++c) s.clean.at(y, x, c) = std::clamp(color[c] * shade, 0.0, 1.0);
                s.depth.at(y, x) = depth;
            }
        }
    }
    return s;
}

}  // namespace dehaze::synth
