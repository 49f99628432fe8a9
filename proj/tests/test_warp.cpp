#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lotseg/common.hpp"
#include "lotseg/warp.hpp"

using namespace lotseg;

namespace {

Grid random_grid(int h, int w, Rng& rng) {
    Grid g(h, w);
    for (double& x : g.v) x = rng.uniform(-1.0, 1.0);
    return g;
}

Field random_field(int h, int w, Rng& rng, double amp) {
    Field f(h, w);
    for (double& x : f.v) x = rng.uniform(-amp, amp);
    return f;
}

// direct bilinear sample with clamped coordinates, independent of warp()
double sample_oracle(const Grid& img, double y, double x) {
    y = std::clamp(y, 0.0, double(img.h - 1));
    x = std::clamp(x, 0.0, double(img.w - 1));
    const int y0 = std::min(int(y), img.h - 2 >= 0 ? img.h - 2 : 0);
    const int x0 = std::min(int(x), img.w - 2 >= 0 ? img.w - 2 : 0);
    const double ty = y - y0, tx = x - x0;
    return (1 - ty) * ((1 - tx) * img.at(y0, x0) + tx * img.at(y0, x0 + 1)) +
           ty * ((1 - tx) * img.at(y0 + 1, x0) + tx * img.at(y0 + 1, x0 + 1));
}

}  // namespace

TEST_CASE("warp with zero field is the identity") {
    Rng rng(1);
    const Grid img = random_grid(9, 7, rng);
    const Field zero(9, 7);
    const Grid out = warp(img, zero);
    for (std::size_t i = 0; i < img.v.size(); ++i) CHECK(out.v[i] == img.v[i]);
}

TEST_CASE("warp matches a pointwise bilinear oracle") {
    Rng rng(2);
    const Grid img = random_grid(12, 10, rng);
    const Field f = random_field(12, 10, rng, 2.5);
    const Grid out = warp(img, f);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 10; ++x)
            CHECK(out.at(y, x) ==
                  doctest::Approx(sample_oracle(img, y + f.dy(y, x), x + f.dx(y, x)))
                      .epsilon(1e-12));
}

TEST_CASE("out-of-bounds samples clamp to the border") {
    Grid img(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) img.at(y, x) = 10.0 * y + x;
    Field f(4, 4);
    f.dy(0, 0) = -5.0;  // far above the image -> row 0
    f.dx(0, 0) = -5.0;  // far left -> col 0
    f.dy(3, 3) = 9.0;   // far below -> row 3
    f.dx(3, 3) = 9.0;
    const Grid out = warp(img, f);
    CHECK(out.at(0, 0) == img.at(0, 0));
    CHECK(out.at(3, 3) == img.at(3, 3));
}

TEST_CASE("integer shifts relocate interior pixels exactly") {
    Rng rng(3);
    const Grid img = random_grid(8, 8, rng);
    Field f(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            f.dy(y, x) = 1.0;
            f.dx(y, x) = -2.0;
        }
    const Grid out = warp(img, f);
    for (int y = 0; y < 7; ++y)
        for (int x = 2; x < 8; ++x) CHECK(out.at(y, x) == doctest::Approx(img.at(y + 1, x - 2)));
}

TEST_CASE("grad_reg matches an explicit loop oracle and is zero on constants") {
    Rng rng(4);
    const int h = 6, w = 5;
    const Field f = random_field(h, w, rng, 1.0);

    double sum = 0.0;
    long terms = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) {
            const double a = f.dy(y, x + 1) - f.dy(y, x);
            const double b = f.dx(y, x + 1) - f.dx(y, x);
            sum += a * a + b * b;
            terms += 2;
        }
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double a = f.dy(y + 1, x) - f.dy(y, x);
            const double b = f.dx(y + 1, x) - f.dx(y, x);
            sum += a * a + b * b;
            terms += 2;
        }
    CHECK(grad_reg(f) == doctest::Approx(sum / double(terms)).epsilon(1e-12));

    Field c(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            c.dy(y, x) = 0.7;
            c.dx(y, x) = -1.3;
        }
    CHECK(grad_reg(c) == 0.0);
}

TEST_CASE("mse closed form") {
    Grid a(2, 2), b(2, 2);
    a.v = {0, 0, 0, 0};
    b.v = {1, 1, 1, 1};
    CHECK(mse(a, b) == doctest::Approx(1.0));
    b.v = {2, 0, 0, 0};
    CHECK(mse(a, b) == doctest::Approx(1.0));
}

TEST_CASE("reg_loss gradient matches central finite differences") {
    Rng rng(5);
    const int h = 8, w = 8;
    // smooth source so the bilinear interpolant is well approximated by
    // central differences at step 1e-3
    Grid src(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            src.at(y, x) = std::sin(0.7 * y) + std::cos(0.5 * x) + 0.1 * y * x / double(h * w);
    const Grid tgt = random_grid(h, w, rng);
    // keep sample points well away from integer lattice lines, where the
    // bilinear interpolant kinks and finite differences stop being valid
    Field f(h, w);
    for (double& x : f.v) x = std::floor(rng.uniform(-2.0, 2.0)) + 0.37;

    const double lambda = 0.1;
    Field grad(h, w);
    reg_loss_backward(f, src, tgt, lambda, grad);

    Rng pick(6);
    const double step = 1e-3;
    for (int k = 0; k < 100; ++k) {
        const std::size_t i = std::size_t(pick.integer(0, std::int64_t(f.v.size()) - 1));
        const double keep = f.v[i];
        f.v[i] = keep + step;
        const double lp = reg_loss(f, src, tgt, lambda);
        f.v[i] = keep - step;
        const double lm = reg_loss(f, src, tgt, lambda);
        f.v[i] = keep;
        const double fd = (lp - lm) / (2 * step);
        const double scale = std::max({std::abs(fd), std::abs(grad.v[i]), 1e-6});
        CHECK(std::abs(grad.v[i] - fd) / scale < 1e-4);
    }
}

TEST_CASE("warp_backward image gradient matches finite differences") {
    Rng rng(7);
    const int h = 6, w = 6;
    Grid src = random_grid(h, w, rng);
    Field f = random_field(h, w, rng, 0.6);
    for (double& x : f.v) x += 0.31;
    Grid d_out = random_grid(h, w, rng);

    Grid d_img(h, w);
    warp_backward(src, f, d_out, nullptr, &d_img);

    const double step = 1e-6;
    for (int k = 0; k < 36; ++k) {
        const std::size_t i = std::size_t(k);
        const double keep = src.v[i];
        auto scalar = [&]() {
            const Grid o = warp(src, f);
            double s = 0;
            for (std::size_t j = 0; j < o.v.size(); ++j) s += o.v[j] * d_out.v[j];
            return s;
        };
        src.v[i] = keep + step;
        const double lp = scalar();
        src.v[i] = keep - step;
        const double lm = scalar();
        src.v[i] = keep;
        const double fd = (lp - lm) / (2 * step);
        CHECK(d_img.v[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
}
