#include "dehaze/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "dehaze/c2msnet.hpp"
#include "dehaze/checkpoint.hpp"
#include "dehaze/classical.hpp"
#include "dehaze/haze_synth.hpp"
#include "dehaze/image_io.hpp"
#include "dehaze/metrics.hpp"
#include "dehaze/random.hpp"

namespace dehaze::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<fs::path> list_rasters(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && io::is_lossless_raster(entry.path()) &&
            entry.path().filename().string().rfind(".tmp-", 0) != 0) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

fs::path find_depth(const fs::path& depth_dir, const fs::path& clean) {
    for (const char* ext : {".png", ".tif", ".tiff", ".pgm", ".pnm", ".bmp", ".txt", ".dat", ".csv"}) {
        fs::path candidate = depth_dir / (clean.stem().string() + ext);
        if (fs::exists(candidate)) return candidate;
    }
    return depth_dir / (clean.stem().string() + ".png");
}

Airlight parse_airlight(const std::string& text) {
    const auto parts = split_list(text, ',');
    Airlight a;
    if (parts.size() == 1) {
        a.rgb.fill(std::stod(parts[0]));
    } else if (parts.size() == 3) {
        for (std::size_t c = 0; c < 3; ++c) a.rgb[c] = std::stod(parts[c]);
    } else {
        throw UsageError("--airlight expects r,g,b or 'jitter', got '" + text + "'");
    }
    a.validate();
    return a;
}

enum class Method { classical, net, none };

Method parse_method(const std::string& name) {
    if (name == "classical") return Method::classical;
    if (name == "net") return Method::net;
    if (name == "none") return Method::none;
    throw UsageError("unknown method '" + name + "' (expected net, classical or none)");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::classical: return "classical";
        case Method::net: return "net";
        case Method::none: return "none";
    }
    return "?";
}

// A dehazing routine bound to its parameters.
std::function<Image(const Image&)> make_dehazer(Method m, const std::optional<net::NetworkParams>& params) {
    switch (m) {
        case Method::classical: return [](const Image& img) { return classical::dehaze_classical(img).recovered; };
        case Method::net:
            return [p = *params](const Image& img) { return net::dehaze_net(img, p).recovered; };
        case Method::none: return [](const Image& img) { return img; };
    }
    return {};
}

std::string with_suffix(const fs::path& path, const std::string& suffix) {
    return (path.parent_path() / (path.stem().string() + suffix + path.extension().string())).string();
}

struct Globals {
    std::uint64_t seed = 0;
    bool verbose = false;
};

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
    std::string input, depth, out;
    double beta = 1.0;
    std::string airlight = "0.8,0.8,0.8";
    std::size_t patch = 64;
    std::size_t per_image = 10;
    double split = 0.8;
};

int cmd_synth(const SynthArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
    synth::HazeParams params;
    params.beta = a.beta;
    params.seed = g.seed;
    if (a.airlight == "jitter") {
        params.jitter_airlight = true;
    } else {
        params.airlight = parse_airlight(a.airlight);
    }
    params.validate();
    if (!(a.split > 0.0 && a.split < 1.0)) throw UsageError("--split must lie in (0, 1)");

    std::vector<synth::SourcePair> inputs;
    for (const fs::path& clean : list_rasters(a.input)) inputs.push_back({clean, find_depth(a.depth, clean)});
    if (inputs.empty()) throw std::runtime_error("no lossless raster images in " + a.input);

    synth::BuildOptions opts;
    opts.patch = a.patch;
    opts.per_image = a.per_image;
    opts.split_ratio = a.split;
    opts.out_dir = a.out;
    const synth::DatasetManifest m = synth::build_manifest(inputs, params, opts);
    m.verify_files();

    for (const auto& f : m.failures) err << "failed: " << f.path << ": " << f.reason << '\n';
    out << "manifest " << (fs::path(a.out) / opts.manifest_name).string() << " entries " << m.entries.size()
        << " train " << m.count(synth::Split::train) << " val " << m.count(synth::Split::val) << '\n';
    if (g.verbose) out << "sources " << inputs.size() << " failed " << m.failures.size() << '\n';
    return m.failures.empty() ? 0 : 1;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
    std::string manifest;
    std::size_t epochs = 18;
    std::size_t batch = 64;
    double lr = 0.002;
    std::string checkpoint = "c2msnet.ckpt";
    std::string curve = "curve.csv";
};

std::string curve_csv(const net::TrainReport& report) {
    std::ostringstream os;
    os << "epoch,train_mse,val_mse\n";
    for (std::size_t e = 0; e < report.epochs_completed; ++e) {
        os << e + 1 << ',' << fmt17(report.train_loss[e]) << ',' << fmt17(report.val_loss[e]) << '\n';
    }
    return os.str();
}

int cmd_train(const TrainArgs& a, const Globals& g, std::ostream& out, std::ostream&) {
    nn::SGDConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.learning_rate = a.lr;
    cfg.seed = g.seed;
    cfg.validate();

    const auto manifest = synth::DatasetManifest::load(a.manifest);
    if (manifest.count(synth::Split::train) == 0) throw std::runtime_error("manifest has no training entries");
    net::TrainOptions opts;
    opts.on_epoch = [&](std::size_t epoch, double tl, double vl) {
        out << "epoch " << epoch << " train_mse " << std::setprecision(6) << tl << " val_mse " << vl << '\n';
    };
    const net::TrainResult result = net::train(manifest, cfg, opts);

    net::save_checkpoint(a.checkpoint, result.params);
    io::write_text_atomic(a.curve, curve_csv(result.report));
    out << "initial_train_mse " << result.report.initial_train_loss << " final_train_mse "
        << result.report.train_loss.back() << '\n';
    if (g.verbose) out << "wall_seconds " << result.report.wall_seconds << '\n';
    out << "checkpoint " << a.checkpoint << "\ncurve " << a.curve << '\n';
    return 0;
}

// ---- dehaze --------------------------------------------------------------

struct DehazeArgs {
    std::string image, method = "classical", checkpoint, out, out_trans;
};

std::optional<net::NetworkParams> load_for(Method m, const std::string& checkpoint, const char* cmd) {
    if (m != Method::net) return std::nullopt;
    if (checkpoint.empty()) {
        throw UsageError(std::string(cmd) + ": --method net requires --checkpoint <file> (see `dehaze train`)");
    }
    return net::load_checkpoint(checkpoint);
}

int cmd_dehaze(const DehazeArgs& a, const Globals&, std::ostream& out, std::ostream&) {
    const Method m = parse_method(a.method);
    if (m == Method::none) throw UsageError("dehaze: --method must be net or classical");
    const auto params = load_for(m, a.checkpoint, "dehaze");
    const Image img = io::read_image(a.image);
    if (img.channels() != 3) throw std::runtime_error("dehaze: input must be an RGB image");
    const classical::Result r = m == Method::net ? net::dehaze_net(img, *params) : classical::dehaze_classical(img);
    io::write_image(a.out, r.recovered);
    (void)io::read_image(a.out);
    if (!a.out_trans.empty()) io::write_image(a.out_trans, r.transmission.to_image());
    out << "wrote " << a.out << " airlight " << r.airlight.rgb[0] << ',' << r.airlight.rgb[1] << ','
        << r.airlight.rgb[2] << '\n';
    return 0;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
    std::string pairs, method = "classical", checkpoint, report = "report.csv";
};

struct EvalPair {
    std::string label;
    fs::path hazy, clean;
};

std::vector<EvalPair> collect_pairs(const fs::path& source) {
    std::vector<EvalPair> pairs;
    if (fs::is_directory(source)) {
        for (const fs::path& hazy : list_rasters(source / "hazy")) {
            const fs::path clean = source / "clean" / hazy.filename();
            if (fs::exists(clean)) pairs.push_back({fs::relative(hazy, source).generic_string(), hazy, clean});
        }
        return pairs;
    }
    const auto m = synth::DatasetManifest::load(source);
    const bool has_val = m.count(synth::Split::val) > 0;
    for (const auto& e : m.entries) {
        if (has_val && e.split != synth::Split::val) continue;
        const fs::path clean = m.clean_path(e);
        if (fs::exists(clean)) pairs.push_back({e.hazy_path, m.resolve(e.hazy_path), clean});
    }
    return pairs;
}

int cmd_eval(const EvalArgs& a, const Globals&, std::ostream& out, std::ostream&) {
    std::vector<Method> methods;
    for (const auto& name : split_list(a.method, ',')) methods.push_back(parse_method(name));
    if (methods.empty()) throw UsageError("eval: --method is empty");
    const bool needs_net = std::find(methods.begin(), methods.end(), Method::net) != methods.end();
    const auto params = load_for(needs_net ? Method::net : Method::none, a.checkpoint, "eval");

    const auto pairs = collect_pairs(a.pairs);
    if (pairs.empty()) throw std::runtime_error("eval: no valid (hazy, clean) pairs in " + a.pairs);
    std::vector<Image> hazy, clean;
    for (const auto& p : pairs) {
        hazy.push_back(io::read_image(p.hazy));
        clean.push_back(io::read_image(p.clean));
    }

    std::vector<std::pair<Method, metrics::MetricReport>> reports;
    for (Method m : methods) {
        const auto dehaze = make_dehazer(m, params);
        metrics::MetricReport report;
        for (std::size_t i = 0; i < pairs.size(); ++i) report.add(pairs[i].label, dehaze(hazy[i]), clean[i]);
        const fs::path csv = methods.size() == 1 ? fs::path(a.report) : fs::path(with_suffix(a.report, "_" + method_name(m)));
        io::write_text_atomic(csv, report.to_csv());
        io::write_text_atomic(csv.string() + ".summary.txt", report.summary(method_name(m)));
        out << "report " << csv.string() << " rows " << report.rows.size() << '\n';
        reports.emplace_back(m, std::move(report));
    }

    out << std::left << std::setw(10) << "method" << std::setw(12) << "ssim" << std::setw(12) << "mse"
        << "psnr\n";
    for (const auto& [m, r] : reports) {
        out << std::left << std::setw(10) << method_name(m) << std::setw(12) << std::setprecision(6) << r.mean_ssim()
            << std::setw(12) << r.mean_mse() << r.mean_psnr() << '\n';
    }
    return 0;
}

// ---- bench ---------------------------------------------------------------

struct BenchArgs {
    std::string method = "all", checkpoint, size = "100x100", out;
    std::size_t repeats = 10;
    std::size_t images = 3;
};

int cmd_bench(const BenchArgs& a, const Globals& g, std::ostream& out, std::ostream&) {
    if (a.repeats < 3) throw UsageError("bench: --repeats must be at least 3");
    const auto [h, w] = parse_size(a.size);
    std::vector<Method> methods;
    if (a.method == "all") {
        methods = {Method::classical, Method::net};
    } else {
        for (const auto& name : split_list(a.method, ',')) methods.push_back(parse_method(name));
    }

    std::optional<net::NetworkParams> params;
    if (std::find(methods.begin(), methods.end(), Method::net) != methods.end()) {
        // Timing does not depend on the weights, so an untrained network is acceptable.
        params = a.checkpoint.empty() ? net::NetworkParams::initialize(g.seed) : net::load_checkpoint(a.checkpoint);
    }

    std::vector<Image> images;
    for (std::size_t i = 0; i < a.images; ++i) {
        const auto scene = synth::procedural_scene(h, w, mix_seed(g.seed, i));
        const auto tr = synth::transmission_from_depth(scene.depth, 1.0);
        images.push_back(synth::synthesize_hazy(scene.clean, tr, Airlight{{0.8, 0.8, 0.8}}));
    }

    std::ostringstream csv;
    csv << "method,height,width,channels,repeats,mean_seconds,stddev_seconds\n";
    out << "size " << h << "x" << w << "x3 repeats " << a.repeats << '\n';
    for (Method m : methods) {
        const auto dehaze = make_dehazer(m, params);
        const auto result = metrics::bench_time([&](const Image& img) { (void)dehaze(img); }, images, a.repeats);
        out << std::left << std::setw(10) << method_name(m) << std::setprecision(6) << result.overall.mean_seconds
            << " s +- " << result.overall.stddev_seconds << " s\n";
        csv << method_name(m) << ',' << h << ',' << w << ",3," << a.repeats << ',' << fmt17(result.overall.mean_seconds)
            << ',' << fmt17(result.overall.stddev_seconds) << '\n';
    }
    if (!a.out.empty()) io::write_text_atomic(a.out, csv.str());
    return 0;
}

}  // namespace

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
    const auto parts = split_list(text, 'x');
    auto number = [&](const std::string& s) {
        if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
            throw UsageError("bad size '" + text + "' (expected HxW)");
        }
        return static_cast<std::size_t>(std::stoul(s));
    };
    if (parts.size() != 2 && parts.size() != 3) throw UsageError("bad size '" + text + "' (expected HxW)");
    if (parts.size() == 3 && number(parts[2]) != 3) throw UsageError("bench images must have 3 channels");
    const std::size_t h = number(parts[0]), w = number(parts[1]);
    if (h == 0 || w == 0) throw UsageError("bad size '" + text + "'");
    return {h, w};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Single-image haze removal: dark channel prior and a two-stage color-fusion CNN", "dehaze"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
    app.add_flag("--verbose", g.verbose, "Extra log lines");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Synthesize hazy training patches from clean images and depth maps");
    synth->add_option("--input", sa.input, "Directory of clean RGB images")->required();
    synth->add_option("--depth", sa.depth, "Directory of depth maps (same file stems)")->required();
    synth->add_option("--out", sa.out, "Output directory")->required();
    synth->add_option("--beta", sa.beta, "Scattering coefficient")->capture_default_str()->check(CLI::NonNegativeNumber);
    synth->add_option("--airlight", sa.airlight, "Airlight r,g,b or 'jitter'")->capture_default_str();
    synth->add_option("--patch", sa.patch, "Patch size")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--per-image", sa.per_image, "Patches per image")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--split", sa.split, "Train fraction")->capture_default_str()->check(CLI::Range(0.0, 1.0));

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train the network on a manifest");
    train->add_option("--manifest", ta.manifest, "Manifest file")->required();
    train->add_option("--epochs", ta.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--batch", ta.batch)->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--lr", ta.lr)->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--checkpoint", ta.checkpoint, "Checkpoint output")->capture_default_str();
    train->add_option("--curve", ta.curve, "Training curve CSV output")->capture_default_str();

    DehazeArgs da;
    auto* dehaze = app.add_subcommand("dehaze", "Dehaze one image");
    dehaze->add_option("--image", da.image)->required();
    dehaze->add_option("--method", da.method, "net or classical")->capture_default_str();
    dehaze->add_option("--checkpoint", da.checkpoint, "Required for --method net");
    dehaze->add_option("--out", da.out, "Recovered image")->required();
    dehaze->add_option("--out-trans", da.out_trans, "Transmission map image");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "SSIM / MSE / PSNR over (hazy, clean) pairs");
    eval->add_option("--pairs", ea.pairs, "Manifest file, or directory with hazy/ and clean/")->required();
    eval->add_option("--method", ea.method, "net, classical, none, or a comma list")->capture_default_str();
    eval->add_option("--checkpoint", ea.checkpoint);
    eval->add_option("--report", ea.report, "Per-image CSV report")->capture_default_str();

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Per-image timing of the dehazing methods");
    bench->add_option("--method", ba.method, "net, classical or all")->capture_default_str();
    bench->add_option("--checkpoint", ba.checkpoint);
    bench->add_option("--size", ba.size, "Image size HxW")->capture_default_str();
    bench->add_option("--repeats", ba.repeats)->capture_default_str();
    bench->add_option("--images", ba.images, "Number of synthetic test images")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    bench->add_option("--out", ba.out, "Timing CSV");

    std::vector<const char*> argv{"dehaze"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << "run with --help for usage\n";
        return kUsageError;
    }

    try {
        if (synth->parsed()) return cmd_synth(sa, g, out, err);
        if (train->parsed()) return cmd_train(ta, g, out, err);
        if (dehaze->parsed()) return cmd_dehaze(da, g, out, err);
        if (eval->parsed()) return cmd_eval(ea, g, out, err);
        if (bench->parsed()) return cmd_bench(ba, g, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return kUsageError;
}

}  // namespace dehaze::cli
