#include "dehaze/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dehaze/image_io.hpp"

namespace dehaze::net {

namespace {

constexpr char kMagic[8] = {'C', '2', 'M', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kLayerNames[7] = {"stage1_r",   "stage1_g",   "stage1_b",    "stage2_3x3",
                                        "stage2_5x5", "stage2_7x7", "stage2_final"};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

class Writer {
public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void bytes(const std::string& s) { out_.append(s); }
    std::string take() { return std::move(out_); }

private:
    void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& b) : b_(b) {}
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        raw(&v, sizeof v);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
    }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, b_.data() + pos_, n);
        pos_ += n;
    }
    const std::string& b_;
    std::size_t pos_ = 0;
};

std::array<nn::Conv2DLayer*, 7> layers_of(NetworkParams& p) {
    return {&p.stage1[0],    &p.stage1[1],    &p.stage1[2],   &p.stage2_ms[0],
            &p.stage2_ms[1], &p.stage2_ms[2], &p.stage2_final};
}

}  // namespace

std::string serialize_checkpoint(const NetworkParams& params) {
    params.validate();
    Writer w;
    w.bytes(std::string(kMagic, sizeof kMagic));
    w.u32(kVersion);
    w.u32(7);
    auto layers = layers_of(const_cast<NetworkParams&>(params));
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const nn::Conv2DLayer& l = *layers[i];
        const std::string name = kLayerNames[i];
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        w.u32(static_cast<std::uint32_t>(l.kernel.rank()));
        for (std::size_t d : l.kernel.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (double v : l.kernel.data()) w.f64(v);
        w.u32(static_cast<std::uint32_t>(l.bias.size()));
        for (double v : l.bias) w.f64(v);
    }
    w.f64(params.birelu.t_min);
    w.f64(params.birelu.t_max);
    return w.take();
}

NetworkParams deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw CheckpointError("not a C2MSNet checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    if (r.u32() != 7) throw CheckpointError("checkpoint must hold 7 layers");

    NetworkParams p;
    auto layers = layers_of(p);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string name = r.bytes(r.u32());
        if (name != kLayerNames[i]) {
            throw CheckpointError("checkpoint layer " + std::to_string(i) + " is '" + name + "', expected '" +
                                  kLayerNames[i] + "'");
        }
        const std::uint32_t rank = r.u32();
        if (rank != 4) throw CheckpointError("layer " + name + " kernel must be rank 4");
        nn::Shape shape(rank);
        std::size_t count = 1;
        for (auto& d : shape) {
            d = r.u32();
            count *= d;
        }
        // Shape is validated below; cap the allocation before trusting it.
        if (count > (std::size_t{1} << 24)) throw CheckpointError("layer " + name + " kernel is implausibly large");
        std::vector<double> values(count);
        for (double& v : values) v = r.f64();
        const std::uint32_t bias_len = r.u32();
        if (bias_len > 4096) throw CheckpointError("layer " + name + " bias is implausibly large");
        std::vector<double> bias(bias_len);
        for (double& v : bias) v = r.f64();
        try {
            *layers[i] = nn::Conv2DLayer(nn::Tensor(shape, std::move(values)), std::move(bias));
        } catch (const std::exception& ex) {
            throw CheckpointError("layer " + name + ": " + ex.what());
        }
    }
    p.birelu.t_min = r.f64();
    p.birelu.t_max = r.f64();
    if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
    try {
        p.validate();
    } catch (const std::exception& ex) {
        throw CheckpointError(std::string("checkpoint does not match the architecture: ") + ex.what());
    }
    if (!p.all_finite()) throw CheckpointError("checkpoint holds non-finite parameters");
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params) {
    io::write_bytes_atomic(path, serialize_checkpoint(params));
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace dehaze::net
