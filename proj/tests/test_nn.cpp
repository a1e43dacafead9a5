#include <doctest.h>

#include "dehaze/layers.hpp"
#include "oracles.hpp"

using namespace dehaze;
using namespace dehaze::nn;

namespace {

Conv2DLayer random_layer(std::size_t k, std::size_t in_c, std::size_t out_c, Rng& rng) {
    Tensor kernel = oracle::random_tensor({k, k, in_c, out_c}, rng);
    std::vector<double> bias(out_c);
    for (double& b : bias) b = rng.uniform(-0.5, 0.5);
    return Conv2DLayer(std::move(kernel), std::move(bias));
}

Conv2DLayer delta_layer() {
    Tensor k({3, 3, 1, 1});
    k[4] = 1.0;
    return Conv2DLayer(std::move(k), {0.0});
}

}  // namespace

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK_FALSE(t.has_grad());
    CHECK(t.grad().size() == 6);
    t[0] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("conv2d identity and constant kernels") {
    const Tensor ones({1, 5, 5, 1}, 1.0);
    const Tensor out = conv2d_forward(ones, delta_layer());
    CHECK(out.shape() == ones.shape());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 1.0);

    Rng rng(3);
    const Tensor x = oracle::random_tensor({1, 4, 6, 2}, rng);
    const Conv2DLayer zero(Tensor({3, 3, 2, 2}), {0.25, -1.5});
    const Tensor y = conv2d_forward(x, zero);
    for (std::size_t i = 0; i < y.size(); i += 2) {
        CHECK(y[i] == 0.25);
        CHECK(y[i + 1] == -1.5);
    }
}

TEST_CASE("conv2d matches the direct six-loop oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const Tensor x = oracle::random_tensor({1, 4, 4, 2}, rng);
        const Conv2DLayer layer = random_layer(3, 2, 3, rng);
        const Tensor got = conv2d_forward(x, layer);
        const Tensor want = oracle::direct_conv(x, layer.kernel, layer.bias);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
    }
    // Larger kernels, batch of two, non-square image.
    Rng rng(99);
    const Tensor x = oracle::random_tensor({2, 6, 9, 3}, rng);
    const Conv2DLayer layer = random_layer(7, 3, 4, rng);
    const Tensor got = conv2d_forward(x, layer);
    const Tensor want = oracle::direct_conv(x, layer.kernel, layer.bias);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("conv2d rejects mismatched channels and even kernels") {
    Rng rng(1);
    const Tensor x({1, 4, 4, 2});
    const Conv2DLayer layer = random_layer(3, 3, 1, rng);
    try {
        (void)conv2d_forward(x, layer);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[1x4x4x2]") != std::string::npos);
        CHECK(msg.find("[3x3x3x1]") != std::string::npos);
    }
    CHECK_THROWS_AS(Conv2DLayer(Tensor({2, 3, 1, 1}), {0.0}), ShapeError);
    CHECK_THROWS_AS(Conv2DLayer(Tensor({3, 3, 1, 2}), {0.0}), ShapeError);
    CHECK_THROWS_AS(conv2d_backward(x, random_layer(3, 2, 2, rng), Tensor({1, 4, 4, 3})), ShapeError);
}

TEST_CASE("conv2d is linear in its input when bias is zero") {
    Rng rng(5);
    Conv2DLayer layer = random_layer(5, 2, 3, rng);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    const Tensor a = oracle::random_tensor({1, 6, 5, 2}, rng);
    const Tensor b = oracle::random_tensor({1, 6, 5, 2}, rng);
    Tensor mix(a.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.7 * a[i] - 1.3 * b[i];
    const Tensor fa = conv2d_forward(a, layer), fb = conv2d_forward(b, layer), fm = conv2d_forward(mix, layer);
    for (std::size_t i = 0; i < fm.size(); ++i) CHECK(std::abs(fm[i] - (0.7 * fa[i] - 1.3 * fb[i])) < 1e-12);
}

TEST_CASE("conv2d backward: zero and identity cases") {
    Rng rng(2);
    const Tensor x = oracle::random_tensor({1, 5, 5, 1}, rng);
    const Conv2DLayer layer = random_layer(3, 1, 2, rng);
    const ConvGrads zero = conv2d_backward(x, layer, Tensor({1, 5, 5, 2}));
    for (double v : zero.input.data()) CHECK(v == 0.0);
    for (double v : zero.kernel.data()) CHECK(v == 0.0);
    for (double v : zero.bias) CHECK(v == 0.0);

    const Tensor g = oracle::random_tensor({1, 5, 5, 1}, rng);
    const ConvGrads id = conv2d_backward(x, delta_layer(), g);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(id.input[i] == g[i]);
}

TEST_CASE("conv2d backward matches central differences") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        Rng rng(100 + seed);
        Tensor x = oracle::random_tensor({1, 4, 5, 2}, rng);
        Conv2DLayer layer = random_layer(3, 2, 3, rng);
        const Tensor g = oracle::random_tensor({1, 4, 5, 3}, rng);
        const ConvGrads grads = conv2d_backward(x, layer, g);
        auto objective = [&] { return oracle::dot(g, conv2d_forward(x, layer)); };
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(oracle::relative_error(grads.input[i], oracle::central_difference(objective, x[i])) < 1e-4);
        }
        for (std::size_t i = 0; i < layer.kernel.size(); ++i) {
            CHECK(oracle::relative_error(grads.kernel[i], oracle::central_difference(objective, layer.kernel[i])) <
                  1e-4);
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            CHECK(oracle::relative_error(grads.bias[i], oracle::central_difference(objective, layer.bias[i])) < 1e-4);
        }
    }
}

TEST_CASE("maxpool forward") {
    const Tensor constant({1, 6, 6, 2}, 0.3);
    const MaxPoolResult c = maxpool_spatial_forward(constant, 7);
    for (double v : c.output.data()) CHECK(v == 0.3);

    Tensor point({1, 12, 12, 1});
    point.at(0, 5, 6, 0) = 1.0;
    const MaxPoolResult p = maxpool_spatial_forward(point, 7);
    for (long y = 0; y < 12; ++y)
        for (long x = 0; x < 12; ++x) {
            const bool near = std::abs(y - 5) <= 3 && std::abs(x - 6) <= 3;
            CHECK(p.output.at(0, y, x, 0) == (near ? 1.0 : 0.0));
        }

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const Tensor x = oracle::random_tensor({1, 6, 6, 1}, rng);
        for (std::size_t window : {1u, 3u, 5u, 7u}) {
            const MaxPoolResult r = maxpool_spatial_forward(x, window);
            const Tensor want = oracle::windowed_max(x, static_cast<long>(window));
            for (std::size_t i = 0; i < x.size(); ++i) CHECK(r.output[i] == want[i]);
        }
    }
    // Negative inputs: out-of-bounds positions must not act as zeros.
    const Tensor neg({1, 3, 3, 1}, -2.0);
    const MaxPoolResult np = maxpool_spatial_forward(neg, 7);
    for (double v : np.output.data()) CHECK(v == -2.0);

    CHECK_THROWS(maxpool_spatial_forward(constant, 4));
    CHECK_THROWS(maxpool_spatial_forward(constant, 3, 2));
}

TEST_CASE("maxpool backward routing and conservation") {
    const Tensor constant({1, 5, 5, 2}, 1.0);
    const MaxPoolResult r = maxpool_spatial_forward(constant, 3);
    CHECK(r.argmax.winner[0] == 0);  // first row-major position wins ties
    Rng rng(4);
    const Tensor g = oracle::random_tensor({1, 5, 5, 2}, rng);
    const Tensor gi = maxpool_spatial_backward(r.argmax, g);
    double sg = 0, sgi = 0;
    for (double v : g.data()) sg += v;
    for (double v : gi.data()) sgi += v;
    CHECK(sgi == doctest::Approx(sg).epsilon(1e-12));

    const Tensor zero = maxpool_spatial_backward(r.argmax, Tensor({1, 5, 5, 2}));
    for (double v : zero.data()) CHECK(v == 0.0);

    Tensor x = oracle::random_tensor({1, 6, 6, 2}, rng);
    const Tensor gout = oracle::random_tensor({1, 6, 6, 2}, rng);
    const Tensor analytic = maxpool_spatial_backward(maxpool_spatial_forward(x, 3).argmax, gout);
    auto objective = [&] { return oracle::dot(gout, maxpool_spatial_forward(x, 3).output); };
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(oracle::relative_error(analytic[i], oracle::central_difference(objective, x[i])) < 1e-4);
    }
    CHECK_THROWS_AS(maxpool_spatial_backward(r.argmax, Tensor({1, 5, 5, 1})), ShapeError);
}

TEST_CASE("channel_group_max") {
    Rng rng(8);
    const Tensor a = oracle::random_tensor({1, 3, 4, 5}, rng);
    Tensor a1 = a, a2 = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
        a1[i] -= 1.0;
        a2[i] -= 2.0;
    }
    const Tensor same = channel_group_max(a, a, a);
    const Tensor dom = channel_group_max(a2, a, a1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(same[i] == a[i]);
        CHECK(dom[i] == a[i]);
    }
    const Tensor b = oracle::random_tensor({1, 3, 4, 5}, rng), c = oracle::random_tensor({1, 3, 4, 5}, rng);
    const Tensor m = channel_group_max(a, b, c);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(m[i] == std::max(a[i], std::max(b[i], c[i])));
    CHECK_THROWS_AS(channel_group_max(a, b, Tensor({1, 3, 4, 4})), ShapeError);

    // Gradient goes to the winner; ties go to the first argument.
    const Tensor g = oracle::random_tensor({1, 3, 4, 5}, rng);
    const auto grads = channel_group_max_backward(a, b, c, g);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double total = grads[0][i] + grads[1][i] + grads[2][i];
        CHECK(total == g[i]);
    }
    const auto tied = channel_group_max_backward(a, a, a, g);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(tied[0][i] == g[i]);
        CHECK(tied[1][i] == 0.0);
    }
}

TEST_CASE("concat and split channels") {
    Rng rng(6);
    std::vector<Tensor> parts{oracle::random_tensor({1, 4, 3, 16}, rng), oracle::random_tensor({1, 4, 3, 16}, rng),
                              oracle::random_tensor({1, 4, 3, 16}, rng)};
    const Tensor cat = concat_channels(parts);
    CHECK(cat.dim(3) == 48);
    const std::size_t widths[] = {16, 16, 16};
    const auto back = split_channels(cat, widths);
    for (std::size_t k = 0; k < 3; ++k) CHECK(back[k].data() == parts[k].data());

    const Tensor single = concat_channels(std::span(parts.data(), 1));
    CHECK(single.data() == parts[0].data());

    std::vector<Tensor> bad{Tensor({1, 4, 3, 2}), Tensor({1, 4, 4, 2})};
    CHECK_THROWS_AS(concat_channels(bad), ShapeError);
}

TEST_CASE("birelu forward and backward") {
    const BiReLU unit;
    const Tensor x({1, 1, 1, 3}, std::vector<double>{0.5, -0.3, 1.7});
    const Tensor y = birelu_forward(x, unit);
    CHECK(y[0] == 0.5);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 1.0);

    const Tensor g({1, 1, 1, 3}, std::vector<double>{2.0, 3.0, 4.0});
    const Tensor gb = birelu_backward(x, unit, g);
    CHECK(gb[0] == 2.0);
    CHECK(gb[1] == 0.0);
    CHECK(gb[2] == 0.0);

    Rng rng(10);
    Tensor z = oracle::random_tensor({1, 4, 4, 1}, rng, -0.5, 1.5);
    const Tensor gz = oracle::random_tensor({1, 4, 4, 1}, rng);
    const Tensor analytic = birelu_backward(z, unit, gz);
    auto objective = [&] { return oracle::dot(gz, birelu_forward(z, unit)); };
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (std::abs(z[i]) < 1e-3 || std::abs(z[i] - 1.0) < 1e-3) continue;  // kinks
        CHECK(oracle::relative_error(analytic[i], oracle::central_difference(objective, z[i])) < 1e-4);
    }
    CHECK_THROWS(birelu_forward(x, BiReLU{1.0, 0.0}));
}

TEST_CASE("mse loss") {
    Rng rng(12);
    const Tensor t = oracle::random_tensor({1, 3, 3, 1}, rng);
    const LossResult same = mse_loss(t, t);
    CHECK(same.loss == 0.0);
    for (double v : same.grad.data()) CHECK(v == 0.0);

    Tensor off = t;
    for (double& v : off.data()) v += 0.1;
    CHECK(mse_loss(off, t).loss == doctest::Approx(0.01).epsilon(1e-12));

    Tensor p = oracle::random_tensor({1, 3, 3, 1}, rng);
    const LossResult r = mse_loss(p, t);
    auto objective = [&] { return mse_loss(p, t).loss; };
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(oracle::relative_error(r.grad[i], oracle::central_difference(objective, p[i])) < 1e-6);
    }
    CHECK_THROWS_AS(mse_loss(p, Tensor({1, 3, 3, 2})), ShapeError);
}

TEST_CASE("sgd step") {
    std::vector<double> p{1.0, -2.0}, g{0.5, 0.0};
    sgd_step({std::span<double>(p)}, {std::span<const double>(g)}, 0.002);
    CHECK(p[0] == doctest::Approx(0.999).epsilon(1e-15));
    CHECK(p[1] == -2.0);

    std::vector<double> zeros(2, 0.0), q{3.0, 4.0};
    sgd_step({std::span<double>(q)}, {std::span<const double>(zeros)}, 0.1);
    CHECK(q == std::vector<double>{3.0, 4.0});

    // f(w) = a (w - w*)^2 decreases for any lr below 1/a.
    const double a = 3.0, target = 0.4;
    std::vector<double> w{2.0};
    auto f = [&] { return a * (w[0] - target) * (w[0] - target); };
    for (double lr : {0.002, 0.05, 0.3}) {
        w[0] = 2.0;
        const double before = f();
        std::vector<double> grad{2.0 * a * (w[0] - target)};
        sgd_step({std::span<double>(w)}, {std::span<const double>(grad)}, lr);
        CHECK(f() < before);
    }

    std::vector<double> short_grad(1);
    CHECK_THROWS_AS(sgd_step({std::span<double>(q)}, {std::span<const double>(short_grad)}, 0.1), ShapeError);
    CHECK_THROWS_AS(sgd_step({std::span<double>(q)}, {}, 0.1), ShapeError);
}

TEST_CASE("sgd config invariants") {
    SGDConfig cfg;
    CHECK(cfg.learning_rate == 0.002);
    CHECK(cfg.batch_size == 64);
    CHECK(cfg.epochs == 18);
    cfg.validate();
    cfg.epochs = 0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.learning_rate = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("glorot initialization bounds and determinism") {
    Rng a(42), b(42);
    const Conv2DLayer la = Conv2DLayer::glorot(5, 5, 48, 1, a);
    const Conv2DLayer lb = Conv2DLayer::glorot(5, 5, 48, 1, b);
    CHECK(la.kernel.data() == lb.kernel.data());
    const double s = std::sqrt(6.0 / (25.0 * 48 + 25.0));
    for (double v : la.kernel.data()) CHECK(std::abs(v) <= s);
    for (double v : la.bias) CHECK(v == 0.0);
}
