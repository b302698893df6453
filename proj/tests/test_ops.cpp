#include <doctest.h>

#include <cmath>

#include "promptrr/ops.hpp"
#include "promptrr/rng.hpp"
#include "promptrr/tensor.hpp"
#include "support/finite_diff.hpp"

using namespace promptrr;
using testsupport::fd_check;
using testsupport::random_tensor;

TEST_CASE("matmul values and validation") {
    Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 2});
    CHECK(c.data()[0] == doctest::Approx(58));
    CHECK(c.data()[1] == doctest::Approx(64));
    CHECK(c.data()[2] == doctest::Approx(139));
    CHECK(c.data()[3] == doctest::Approx(154));
    CHECK_THROWS_WITH_AS(matmul(a, a), doctest::Contains("[2 x 3]"), TensorError);
}

TEST_CASE("transpose2d round trip") {
    Rng rng(1);
    Tensor x = random_tensor({3, 5}, rng, false);
    Tensor t = transpose2d(x);
    CHECK(t.shape() == Shape{5, 3});
    Tensor back = transpose2d(t);
    for (int i = 0; i < x.numel(); ++i)
        CHECK(back.data()[static_cast<std::size_t>(i)] == x.data()[static_cast<std::size_t>(i)]);
}

TEST_CASE("softmax matches hand-computed values") {
    Tensor x = Tensor::from_data({3}, {1.f, 2.f, 3.f});
    Tensor y = softmax(x, 0);
    CHECK(y.data()[0] == doctest::Approx(0.090030573).epsilon(1e-6));
    CHECK(y.data()[1] == doctest::Approx(0.244728471).epsilon(1e-6));
    CHECK(y.data()[2] == doctest::Approx(0.665240956).epsilon(1e-6));

    // Large magnitudes must not overflow thanks to the max subtraction.
    Tensor big = Tensor::from_data({2}, {1000.f, 1001.f});
    Tensor yb = softmax(big, 0);
    CHECK(std::isfinite(yb.data()[0]));
    CHECK(yb.data()[0] + yb.data()[1] == doctest::Approx(1.0));
}

TEST_CASE("softmax normalizes every slice of the chosen axis") {
    Rng rng(2);
    Tensor x = random_tensor({2, 3, 4}, rng, false, -5.0, 5.0);
    for (int axis = 0; axis < 3; ++axis) {
        Tensor y = softmax(x, axis);
        // Sum along `axis` at a fixed other-index must be 1.
        const int n = x.dim(axis);
        int outer = 1, inner = 1;
        for (int i = 0; i < axis; ++i) outer *= x.dim(i);
        for (int i = axis + 1; i < 3; ++i) inner *= x.dim(i);
        for (int o = 0; o < outer; ++o)
            for (int in = 0; in < inner; ++in) {
                double s = 0;
                for (int j = 0; j < n; ++j)
                    s += y.data()[static_cast<std::size_t>((o * n + j) * inner + in)];
                CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
            }
    }
}

TEST_CASE("layer_norm standardizes and applies gain/bias") {
    Tensor x = Tensor::from_data({2}, {1.f, 3.f});
    Tensor g = Tensor::from_data({2}, {2.f, 2.f});
    Tensor b = Tensor::from_data({2}, {10.f, 20.f});
    Tensor y = layer_norm(x, g, b, 1e-5f, 0);
    const double inv = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y.data()[0] == doctest::Approx(10.0 - 2.0 * inv).epsilon(1e-6));
    CHECK(y.data()[1] == doctest::Approx(20.0 + 2.0 * inv).epsilon(1e-6));

    // A constant slice normalizes to pure bias.
    Tensor c = Tensor::full({4}, 3.14f);
    Tensor ones = Tensor::full({4}, 1.f);
    Tensor zero = Tensor::zeros({4});
    Tensor yc = layer_norm(c, ones, zero, 1e-5f, 0);
    for (float v : yc.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("layer_norm over channels of an image") {
    Rng rng(3);
    Tensor x = random_tensor({4, 2, 3}, rng, false, -2.0, 2.0);
    Tensor g = Tensor::full({4}, 1.f);
    Tensor b = Tensor::zeros({4});
    Tensor y = layer_norm(x, g, b, 1e-5f, 0);
    // Each pixel's channel vector is standardized.
    for (int p = 0; p < 6; ++p) {
        double m = 0, v = 0;
        for (int c = 0; c < 4; ++c) m += y.data()[static_cast<std::size_t>(c * 6 + p)];
        m /= 4;
        for (int c = 0; c < 4; ++c) {
            const double d = y.data()[static_cast<std::size_t>(c * 6 + p)] - m;
            v += d * d;
        }
        v /= 4;
        CHECK(m == doctest::Approx(0.0).epsilon(1e-5));
        CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("conv1x1 equals a per-pixel matrix product") {
    Rng rng(4);
    Tensor x = random_tensor({3, 4, 5}, rng, false);
    Tensor w = random_tensor({2, 3}, rng, false);
    Tensor b = random_tensor({2}, rng, false);
    Tensor y = conv1x1(x, w, b);
    CHECK(y.shape() == Shape{2, 4, 5});
    for (int o = 0; o < 2; ++o)
        for (int p = 0; p < 20; ++p) {
            double acc = b.data()[static_cast<std::size_t>(o)];
            for (int c = 0; c < 3; ++c)
                acc += static_cast<double>(w.data()[static_cast<std::size_t>(o * 3 + c)]) *
                       x.data()[static_cast<std::size_t>(c * 20 + p)];
            CHECK(y.data()[static_cast<std::size_t>(o * 20 + p)] ==
                  doctest::Approx(acc).epsilon(1e-5));
        }
}

TEST_CASE("dwconv3x3 matches brute force") {
    Rng rng(5);
    const int C = 2, H = 5, W = 4;
    Tensor x = random_tensor({C, H, W}, rng, false);
    Tensor w = random_tensor({C, 3, 3}, rng, false);
    Tensor b = random_tensor({C}, rng, false);
    Tensor y = dwconv3x3(x, w, b);
    for (int c = 0; c < C; ++c)
        for (int yy = 0; yy < H; ++yy)
            for (int xx = 0; xx < W; ++xx) {
                double acc = b.data()[static_cast<std::size_t>(c)];
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const int yi = yy + ky - 1, xi = xx + kx - 1;
                        if (yi < 0 || yi >= H || xi < 0 || xi >= W) continue;
                        acc += static_cast<double>(
                                   w.data()[static_cast<std::size_t>(c * 9 + ky * 3 + kx)]) *
                               x.data()[static_cast<std::size_t>((c * H + yi) * W + xi)];
                    }
                CHECK(y.data()[static_cast<std::size_t>((c * H + yy) * W + xx)] ==
                      doctest::Approx(acc).epsilon(1e-5));
            }
}

TEST_CASE("conv2d strided matches brute force") {
    Rng rng(6);
    const int Ci = 3, Co = 2, H = 7, W = 6, K = 3, S = 2, P = 1;
    Tensor x = random_tensor({Ci, H, W}, rng, false);
    Tensor w = random_tensor({Co, Ci, K, K}, rng, false);
    Tensor b = random_tensor({Co}, rng, false);
    Tensor y = conv2d(x, w, b, S, P);
    const int Ho = (H + 2 * P - K) / S + 1, Wo = (W + 2 * P - K) / S + 1;
    CHECK(y.shape() == Shape{Co, Ho, Wo});
    for (int o = 0; o < Co; ++o)
        for (int yo = 0; yo < Ho; ++yo)
            for (int xo = 0; xo < Wo; ++xo) {
                double acc = b.data()[static_cast<std::size_t>(o)];
                for (int c = 0; c < Ci; ++c)
                    for (int ky = 0; ky < K; ++ky)
                        for (int kx = 0; kx < K; ++kx) {
                            const int yi = yo * S + ky - P, xi = xo * S + kx - P;
                            if (yi < 0 || yi >= H || xi < 0 || xi >= W) continue;
                            acc += static_cast<double>(
                                       w.data()[static_cast<std::size_t>(
                                           ((o * Ci + c) * K + ky) * K + kx)]) *
                                   x.data()[static_cast<std::size_t>((c * H + yi) * W + xi)];
                        }
                CHECK(y.data()[static_cast<std::size_t>((o * Ho + yo) * Wo + xo)] ==
                      doctest::Approx(acc).epsilon(1e-5));
            }
}

TEST_CASE("gelu matches the tanh form") {
    Tensor x = Tensor::from_data({5}, {-3.f, -1.f, 0.f, 1.f, 3.f});
    Tensor y = gelu(x);
    for (int i = 0; i < 5; ++i) {
        const double v = x.data()[static_cast<std::size_t>(i)];
        const double u = 0.7978845608028654 * (v + 0.044715 * v * v * v);
        const double want = 0.5 * v * (1.0 + std::tanh(u));
        CHECK(y.data()[static_cast<std::size_t>(i)] == doctest::Approx(want).epsilon(1e-6));
    }
    CHECK(y.data()[2] == 0.f);
}

TEST_CASE("leaky_relu slope") {
    Tensor x = Tensor::from_data({3}, {-1.f, 0.f, 2.f});
    Tensor y = leaky_relu(x);
    CHECK(y.data()[0] == doctest::Approx(-0.2));
    CHECK(y.data()[1] == 0.f);
    CHECK(y.data()[2] == 2.f);
}

TEST_CASE("elementwise arithmetic and scaling") {
    Tensor a = Tensor::from_data({2}, {1.f, 2.f});
    Tensor b = Tensor::from_data({2}, {3.f, 5.f});
    CHECK(add(a, b).data()[1] == 7.f);
    CHECK(sub(a, b).data()[0] == -2.f);
    CHECK(mul(a, b).data()[1] == 10.f);
    CHECK(scale(a, 2.f).data()[1] == 4.f);
    Tensor s = Tensor::full({1}, 4.f);
    CHECK(div_by(a, s).data()[1] == 0.5f);
    CHECK_THROWS_AS(add(a, Tensor::zeros({3})), TensorError);
    CHECK_THROWS_AS(div_by(a, Tensor::zeros({2})), TensorError);
}

TEST_CASE("adaptive_avg_pool regions") {
    // Identity when the target equals the input size.
    Rng rng(7);
    Tensor x = random_tensor({2, 3, 3}, rng, false);
    Tensor same = adaptive_avg_pool(x, 3, 3);
    for (int i = 0; i < x.numel(); ++i)
        CHECK(same.data()[static_cast<std::size_t>(i)] == x.data()[static_cast<std::size_t>(i)]);

    // Even split halves.
    Tensor q = Tensor::from_data({1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    Tensor one = adaptive_avg_pool(q, 1, 1);
    CHECK(one.data()[0] == doctest::Approx(2.5));

    // Non-divisible sizes use overlapping floor/ceil regions.
    Tensor r = Tensor::from_data({1, 1, 5}, {0.f, 1.f, 2.f, 3.f, 4.f});
    Tensor h = adaptive_avg_pool(r, 1, 2);
    CHECK(h.data()[0] == doctest::Approx((0.0 + 1 + 2) / 3));
    CHECK(h.data()[1] == doctest::Approx((2.0 + 3 + 4) / 3));
}

TEST_CASE("upsample_nearest2x repeats pixels") {
    Tensor x = Tensor::from_data({1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    Tensor y = upsample_nearest2x(x);
    CHECK(y.shape() == Shape{1, 4, 4});
    const float want[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (int i = 0; i < 16; ++i) CHECK(y.data()[static_cast<std::size_t>(i)] == want[i]);
}

TEST_CASE("reshape flatten concat slice") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = reshape(x, {3, -1});
    CHECK(r.shape() == Shape{3, 2});
    CHECK(r.data()[5] == 6.f);
    CHECK(flatten(x).shape() == Shape{6});
    CHECK_THROWS_AS(reshape(x, {4, 2}), TensorError);

    Tensor a = Tensor::from_data({1, 2}, {1, 2});
    Tensor b = Tensor::from_data({2, 2}, {3, 4, 5, 6});
    Tensor cat = concat0(a, b);
    CHECK(cat.shape() == Shape{3, 2});
    CHECK(cat.data()[4] == 5.f);
    Tensor sl = slice0(cat, 1, 3);
    CHECK(sl.shape() == Shape{2, 2});
    CHECK(sl.data()[0] == 3.f);
    CHECK_THROWS_AS(slice0(cat, 2, 2), TensorError);
    CHECK_THROWS_AS(concat0(a, Tensor::zeros({1, 3})), TensorError);
}

TEST_CASE("reductions use the exact element count") {
    Tensor x = Tensor::from_data({4}, {1.f, 2.f, 3.f, 4.f});
    CHECK(sum(x).item() == 10.f);
    CHECK(mean(x).item() == 2.5f);
    CHECK(abs(Tensor::from_data({2}, {-3.f, 2.f})).data()[0] == 3.f);
}

TEST_CASE("linear applies W x + b for both ranks") {
    Tensor w = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_data({2}, {0.5f, -0.5f});
    Tensor x1 = Tensor::from_data({3}, {1, 1, 1});
    Tensor y1 = linear(x1, w, b);
    CHECK(y1.shape() == Shape{2});
    CHECK(y1.data()[0] == doctest::Approx(6.5));
    CHECK(y1.data()[1] == doctest::Approx(14.5));

    Tensor x2 = Tensor::from_data({2, 3}, {1, 0, 0, 0, 1, 0});
    Tensor y2 = linear(x2, w, b);
    CHECK(y2.shape() == Shape{2, 2});
    CHECK(y2.data()[0] == doctest::Approx(1.5));
    CHECK(y2.data()[3] == doctest::Approx(4.5));
}

TEST_CASE("scale_shift_channels broadcasts per channel") {
    Tensor x = Tensor::from_data({2, 1, 2}, {1, 2, 3, 4});
    Tensor s = Tensor::from_data({2}, {2.f, -1.f});
    Tensor t = Tensor::from_data({2}, {0.f, 10.f});
    Tensor y = scale_shift_channels(x, s, t);
    CHECK(y.data()[0] == 2.f);
    CHECK(y.data()[1] == 4.f);
    CHECK(y.data()[2] == 7.f);
    CHECK(y.data()[3] == 6.f);
}

// ---- finite-difference gradient checks -------------------------------------

TEST_CASE("gradients: matmul") {
    Rng rng(10);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    auto rep = fd_check([&] { return mean(mul(matmul(a, b), matmul(a, b))); }, {a, b});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: transpose2d") {
    Rng rng(11);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({3, 4}, rng, false);
    auto rep = fd_check([&] { return mean(mul(transpose2d(a), transpose2d(w))); }, {a});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: softmax") {
    Rng rng(12);
    Tensor x = random_tensor({2, 5}, rng, true, -2.0, 2.0);
    Tensor w = random_tensor({2, 5}, rng, false);
    for (int axis = 0; axis < 2; ++axis) {
        auto rep = fd_check([&] { return mean(mul(softmax(x, axis), w)); }, {x});
        CHECK(rep.failed == 0);
    }
}

TEST_CASE("gradients: layer_norm") {
    Rng rng(13);
    Tensor x = random_tensor({3, 2, 2}, rng, true, -2.0, 2.0);
    Tensor g = random_tensor({3}, rng, true, 0.5, 1.5);
    Tensor b = random_tensor({3}, rng);
    Tensor w = random_tensor({3, 2, 2}, rng, false);
    auto rep = fd_check([&] { return mean(mul(layer_norm(x, g, b, 1e-5f, 0), w)); }, {x, g, b});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: conv1x1") {
    Rng rng(14);
    Tensor x = random_tensor({3, 3, 4}, rng);
    Tensor w = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2}, rng);
    Tensor m = random_tensor({2, 3, 4}, rng, false);
    auto rep = fd_check([&] { return mean(mul(conv1x1(x, w, b), m)); }, {x, w, b});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: dwconv3x3") {
    Rng rng(15);
    Tensor x = random_tensor({2, 4, 5}, rng);
    Tensor w = random_tensor({2, 3, 3}, rng);
    Tensor b = random_tensor({2}, rng);
    Tensor m = random_tensor({2, 4, 5}, rng, false);
    auto rep = fd_check([&] { return mean(mul(dwconv3x3(x, w, b), m)); }, {x, w, b});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: conv2d stride 2") {
    Rng rng(16);
    Tensor x = random_tensor({2, 5, 6}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor m = random_tensor({3, 3, 3}, rng, false);
    auto rep = fd_check([&] { return mean(mul(conv2d(x, w, b, 2, 1), m)); }, {x, w, b});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: elementwise and activations") {
    Rng rng(17);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng, true, 0.5, 2.0);
    auto rep = fd_check([&] { return mean(mul(add(a, b), sub(a, b))); }, {a, b});
    CHECK(rep.failed == 0);

    rep = fd_check([&] { return mean(gelu(a)); }, {a});
    CHECK(rep.failed == 0);

    // Keep values away from the kink.
    Tensor c = random_tensor({10}, rng, true, 0.2, 2.0);
    Tensor d = random_tensor({10}, rng, true, -2.0, -0.2);
    rep = fd_check([&] { return mean(add(leaky_relu(c), leaky_relu(d))); }, {c, d});
    CHECK(rep.failed == 0);

    Tensor s = Tensor::full({1}, 1.7f, true);
    rep = fd_check([&] { return mean(div_by(a, s)); }, {a, s});
    CHECK(rep.failed == 0);

    rep = fd_check([&] { return mean(mul(scale(a, 3.f), a)); }, {a});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: pooling and upsampling") {
    Rng rng(18);
    Tensor x = random_tensor({2, 5, 4}, rng);
    Tensor m = random_tensor({2, 2, 2}, rng, false);
    auto rep = fd_check([&] { return mean(mul(adaptive_avg_pool(x, 2, 2), m)); }, {x});
    CHECK(rep.failed == 0);

    Tensor m2 = random_tensor({2, 10, 8}, rng, false);
    rep = fd_check([&] { return mean(mul(upsample_nearest2x(x), m2)); }, {x});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: shape ops") {
    Rng rng(19);
    Tensor x = random_tensor({2, 6}, rng);
    Tensor m = random_tensor({3, 4}, rng, false);
    auto rep = fd_check([&] { return mean(mul(reshape(x, {3, 4}), m)); }, {x});
    CHECK(rep.failed == 0);

    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({1, 3}, rng);
    Tensor m2 = random_tensor({3, 3}, rng, false);
    rep = fd_check([&] { return mean(mul(concat0(a, b), m2)); }, {a, b});
    CHECK(rep.failed == 0);

    Tensor m3 = random_tensor({1, 3}, rng, false);
    rep = fd_check([&] { return mean(mul(slice0(a, 1, 2), m3)); }, {a});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: reductions and linear") {
    Rng rng(20);
    Tensor x = random_tensor({7}, rng, true, 0.3, 2.0);
    auto rep = fd_check([&] { return sum(mul(x, x)); }, {x});
    CHECK(rep.failed == 0);
    rep = fd_check([&] { return mean(abs(x)); }, {x});
    CHECK(rep.failed == 0);

    Tensor w = random_tensor({3, 5}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor x2 = random_tensor({4, 5}, rng);
    Tensor m = random_tensor({4, 3}, rng, false);
    rep = fd_check([&] { return mean(mul(linear(x2, w, b), m)); }, {x2, w, b});
    CHECK(rep.failed == 0);

    Tensor x1 = random_tensor({5}, rng);
    Tensor m1 = random_tensor({3}, rng, false);
    rep = fd_check([&] { return mean(mul(linear(x1, w, b), m1)); }, {x1, w, b});
    CHECK(rep.failed == 0);
}

TEST_CASE("gradients: scale_shift_channels") {
    Rng rng(21);
    Tensor x = random_tensor({3, 2, 4}, rng);
    Tensor s = random_tensor({3}, rng, true, 0.5, 1.5);
    Tensor t = random_tensor({3}, rng);
    Tensor m = random_tensor({3, 2, 4}, rng, false);
    auto rep = fd_check([&] { return mean(mul(scale_shift_channels(x, s, t), m)); }, {x, s, t});
    CHECK(rep.failed == 0);
}
