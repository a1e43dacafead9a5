#include <doctest.h>

#include <sstream>

#include "dehaze/c2msnet.hpp"
#include "dehaze/checkpoint.hpp"
#include "dehaze/cli.hpp"
#include "dehaze/image_io.hpp"
#include "scene_files.hpp"
#include "temp_dir.hpp"

using namespace dehaze;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

/// Small scene sources plus a manifest built through the CLI.
struct Dataset {
    testutil::TempDir dir{"cli"};
    fs::path manifest;

    explicit Dataset(std::size_t scenes = 2, const std::string& patch = "24", const std::string& per = "10") {
        testutil::write_scenes(dir / "src", scenes, 40, 48, 31);
        const auto r = run({"--seed", "5", "synth", "--input", (dir / "src/images").string(), "--depth",
                            (dir / "src/depth").string(), "--out", (dir / "data").string(), "--patch", patch,
                            "--per-image", per});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        manifest = dir / "data/manifest.txt";
    }
};

}  // namespace

TEST_CASE("usage errors") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"train"}).code == 2);  // --manifest is required
    const auto help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("synth") != std::string::npos);
}

TEST_CASE("synth writes per-image patches and a manifest") {
    Dataset d;
    const auto m = synth::DatasetManifest::load(d.manifest);
    CHECK(m.entries.size() == 20);
    CHECK(m.count(synth::Split::train) == 16);
    CHECK(m.patch_size == 24);

    // Same seed, same bytes.
    const auto again = run({"--seed", "5", "synth", "--input", (d.dir / "src/images").string(), "--depth",
                            (d.dir / "src/depth").string(), "--out", (d.dir / "again").string(), "--patch", "24"});
    CHECK(again.code == 0);
    CHECK(testutil::slurp(d.manifest) == testutil::slurp(d.dir / "again/manifest.txt"));

    CHECK(run({"synth", "--input", (d.dir / "src/images").string(), "--depth", (d.dir / "src/depth").string(),
               "--out", (d.dir / "x").string(), "--airlight", "1,2"})
              .code == 2);
}

TEST_CASE("synth reports a missing depth map by path") {
    testutil::TempDir dir("cli-missing");
    testutil::write_scenes(dir / "src", 2, 32, 32, 3);
    fs::remove(dir / "src/depth/scene1.txt");
    const auto r = run({"synth", "--input", (dir / "src/images").string(), "--depth", (dir / "src/depth").string(),
                        "--out", (dir / "out").string(), "--patch", "16", "--per-image", "2"});
    CHECK(r.code != 0);
    CHECK(r.err.find("scene1") != std::string::npos);
    const auto m = synth::DatasetManifest::load(dir / "out/manifest.txt");
    CHECK(m.entries.size() == 2);
    CHECK(m.failures.size() == 1);
}

TEST_CASE("train writes a curve and a reloadable checkpoint") {
    Dataset d;
    const fs::path ckpt = d.dir / "net.ckpt", curve = d.dir / "curve.csv";
    const auto r = run({"--seed", "1", "train", "--manifest", d.manifest.string(), "--epochs", "2", "--batch", "8",
                        "--checkpoint", ckpt.string(), "--curve", curve.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string text = testutil::slurp(curve);
    CHECK(text.rfind("epoch,train_mse,val_mse\n", 0) == 0);
    CHECK(line_count(text) == 3);

    // The last curve row's validation MSE is reproduced by the saved weights.
    const std::string last = text.substr(text.rfind('\n', text.size() - 2) + 1);
    const double logged = std::stod(last.substr(last.rfind(',') + 1));
    const auto params = net::load_checkpoint(ckpt);
    const auto m = synth::DatasetManifest::load(d.manifest);
    const auto val = net::load_samples(m, synth::Split::val);
    CHECK(std::abs(net::evaluate_loss(params, val) - logged) < 1e-12);

    const auto help = run({"train", "--help"});
    CHECK(help.out.find("18") != std::string::npos);
    CHECK(help.out.find("64") != std::string::npos);
    CHECK(help.out.find("0.002") != std::string::npos);

    CHECK(run({"train", "--manifest", (d.dir / "nope.txt").string()}).code == 1);
    CHECK(run({"train", "--manifest", d.manifest.string(), "--epochs", "0"}).code == 2);
}

TEST_CASE("dehaze") {
    testutil::TempDir dir("cli-dehaze");
    const auto scene = synth::procedural_scene(40, 50, 9);
    const Image hazy = synth::synthesize_hazy(scene.clean, synth::transmission_from_depth(scene.depth, 1.0),
                                              Airlight{{0.8, 0.8, 0.8}});
    io::write_image(dir / "hazy.png", hazy);

    const auto a = run({"dehaze", "--image", (dir / "hazy.png").string(), "--out", (dir / "a.png").string(),
                        "--out-trans", (dir / "t.png").string()});
    REQUIRE_MESSAGE(a.code == 0, a.err);
    const Image out = io::read_image(dir / "a.png");
    CHECK(out.height() == 40);
    CHECK(out.width() == 50);
    CHECK(io::read_image(dir / "t.png").channels() == 1);
    CHECK(run({"dehaze", "--image", (dir / "hazy.png").string(), "--out", (dir / "b.png").string()}).code == 0);
    CHECK(testutil::slurp(dir / "a.png") == testutil::slurp(dir / "b.png"));

    const auto no_ckpt =
        run({"dehaze", "--method", "net", "--image", (dir / "hazy.png").string(), "--out", (dir / "n.png").string()});
    CHECK(no_ckpt.code == 2);
    CHECK(no_ckpt.err.find("--checkpoint") != std::string::npos);

    net::save_checkpoint(dir / "net.ckpt", net::NetworkParams::initialize(2));
    CHECK(run({"dehaze", "--method", "net", "--checkpoint", (dir / "net.ckpt").string(), "--image",
               (dir / "hazy.png").string(), "--out", (dir / "n.png").string()})
              .code == 0);
    CHECK(fs::exists(dir / "n.png"));
    CHECK(run({"dehaze", "--image", (dir / "missing.png").string(), "--out", (dir / "m.png").string()}).code == 1);
}

TEST_CASE("eval") {
    testutil::TempDir dir("cli-eval");
    fs::create_directories(dir / "pairs/hazy");
    fs::create_directories(dir / "pairs/clean");
    for (int i = 0; i < 3; ++i) {
        const auto scene = synth::procedural_scene(32, 32, 40 + i);
        const std::string name = "img" + std::to_string(i) + ".png";
        io::write_image(dir / "pairs/hazy" / name, scene.clean);
        io::write_image(dir / "pairs/clean" / name, scene.clean);
    }
    const auto self = run({"eval", "--pairs", (dir / "pairs").string(), "--method", "none", "--report",
                           (dir / "self.csv").string()});
    REQUIRE_MESSAGE(self.code == 0, self.err);
    const std::string csv = testutil::slurp(dir / "self.csv");
    CHECK(line_count(csv) == 4);
    CHECK(csv.find(",1,0,inf\n") != std::string::npos);
    CHECK(fs::exists(dir / "self.csv.summary.txt"));

    Dataset d;
    net::save_checkpoint(d.dir / "net.ckpt", net::NetworkParams::initialize(2));
    const auto both = run({"eval", "--pairs", d.manifest.string(), "--method", "net,classical", "--checkpoint",
                           (d.dir / "net.ckpt").string(), "--report", (d.dir / "r.csv").string()});
    REQUIRE_MESSAGE(both.code == 0, both.err);
    CHECK(line_count(testutil::slurp(d.dir / "r_net.csv")) == 5);  // header + 4 validation patches
    CHECK(line_count(testutil::slurp(d.dir / "r_classical.csv")) == 5);
    CHECK(both.out.find("classical") != std::string::npos);

    CHECK(run({"eval", "--pairs", d.manifest.string(), "--method", "net"}).code == 2);
    CHECK(run({"eval", "--pairs", d.manifest.string(), "--method", "magic"}).code == 2);
}

TEST_CASE("bench") {
    CHECK(cli::parse_size("100x100") == std::pair<std::size_t, std::size_t>{100, 100});
    CHECK(cli::parse_size("48x64x3") == std::pair<std::size_t, std::size_t>{48, 64});
    CHECK_THROWS(cli::parse_size("48x64x4"));
    CHECK_THROWS(cli::parse_size("0x10"));
    CHECK_THROWS(cli::parse_size("abc"));

    CHECK(run({"bench", "--repeats", "2"}).code == 2);
    testutil::TempDir dir("cli-bench");
    const auto r = run({"bench", "--size", "24x24", "--repeats", "3", "--images", "1", "--out",
                        (dir / "t.csv").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string csv = testutil::slurp(dir / "t.csv");
    CHECK(line_count(csv) == 3);
    CHECK(csv.find("classical,24,24,3,3,") != std::string::npos);
    CHECK(csv.find("net,24,24,3,3,") != std::string::npos);
}
