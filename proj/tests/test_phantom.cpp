#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "lotseg/phantom.hpp"
#include "lotseg/warp.hpp"

using namespace lotseg;

namespace {

PhantomConfig small_config() {
    PhantomConfig c;
    c.height = 64;
    c.width = 64;
    c.num_frames = 12;
    c.num_sequences = 4;
    c.motion_amplitude = 2.5;
    c.incoherence_flag = true;
    c.seed = 17;
    return c;
}

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return d;
}

}  // namespace

TEST_CASE("identical configs produce byte-identical phantoms") {
    const PhantomConfig c = small_config();
    auto [s1, t1] = generate_phantom(c);
    auto [s2, t2] = generate_phantom(c);
    REQUIRE(s1.size() == s2.size());
    for (std::size_t i = 0; i < s1.size(); ++i) {
        for (int t = 0; t < s1[i].num_frames(); ++t) {
            CHECK(s1[i].frames[std::size_t(t)].v == s2[i].frames[std::size_t(t)].v);
            CHECK((*s1[i].labels)[std::size_t(t)].v == (*s2[i].labels)[std::size_t(t)].v);
            CHECK(t1[i].flows[std::size_t(t)].v == t2[i].flows[std::size_t(t)].v);
        }
        CHECK(t1[i].incoherence_mask.v == t2[i].incoherence_mask.v);
    }
}

TEST_CASE("zero motion produces zero ground-truth flows") {
    PhantomConfig c = small_config();
    c.motion_amplitude = 0.0;
    c.incoherence_flag = false;
    c.num_sequences = 2;
    auto [seqs, truths] = generate_phantom(c);
    for (const auto& truth : truths)
        for (const Field& f : truth.flows)
            for (double x : f.v) CHECK(x == 0.0);
}

TEST_CASE("incoherence mask is empty without the flag") {
    PhantomConfig c = small_config();
    c.incoherence_flag = false;
    auto [seqs, truths] = generate_phantom(c);
    for (const auto& truth : truths) {
        CHECK_FALSE(truth.blob_incoherent);
        for (auto v : truth.incoherence_mask.v) CHECK(v == 0);
    }
}

TEST_CASE("gt flow matches the analytic backward-map displacement") {
    // oracle: for reference point r = B_t(p), the flow must carry p to the
    // position of r in frame t+dt, i.e. solve B_{t+dt}(p + f) = B_t(p).
    MotionSpec ms;
    ms.cy = 31.0;
    ms.cx = 30.0;
    ms.amp_r = 2.0;
    ms.amp_t = 0.7;
    ms.r0 = 11.0;
    ms.num_frames = 12;
    const Field f = phantom_gt_flow(ms, 2, 1, 64, 64);
    auto cycle = [&](int t) { return (1.0 - std::cos(2.0 * M_PI * t / 12.0)) / 2.0; };
    auto disp = [&](double py, double px) {
        const double ey = py - ms.cy, ex = px - ms.cx;
        const double q = std::exp((1.0 - (ey * ey + ex * ex) / (ms.r0 * ms.r0)) / 2.0) / ms.r0;
        return std::pair<double, double>{q * (ms.amp_r * ey - ms.amp_t * ex),
                                         q * (ms.amp_r * ex + ms.amp_t * ey)};
    };
    double max_resid = 0.0;
    for (int y = 0; y < 64; y += 3) {
        for (int x = 0; x < 64; x += 3) {
            const auto [dy0, dx0] = disp(y, x);
            const auto [dy1, dx1] = disp(y + f.dy(y, x), x + f.dx(y, x));
            // warp semantics: source frame t sampled at p+f must equal the
            // target frame t+1 at p, i.e. B_t(p+f) == B_{t+1}(p)
            const double ry = (y + f.dy(y, x)) + cycle(2) * dy1 - (y + cycle(3) * dy0);
            const double rx = (x + f.dx(y, x)) + cycle(2) * dx1 - (x + cycle(3) * dx0);
            max_resid = std::max(max_resid, std::hypot(ry, rx));
        }
    }
    CHECK(max_resid < 1e-6);
}

TEST_CASE("warping frame t by the gt flow reproduces frame t+1 outside the mask") {
    const PhantomConfig c = small_config();
    auto [seqs, truths] = generate_phantom(c);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const CineSequence& s = seqs[i];
        const PhantomTruth& truth = truths[i];
        for (int t = 0; t < s.num_frames(); ++t) {
            const int t1 = (t + 1) % s.num_frames();
            const Grid warped = warp(s.frames[std::size_t(t)], truth.flows[std::size_t(t)]);
            double acc = 0.0;
            std::size_t n = 0;
            for (int y = 0; y < s.height(); ++y)
                for (int x = 0; x < s.width(); ++x) {
                    if (truth.incoherence_mask.at(y, x)) continue;
                    const double d = warped.at(y, x) - s.frames[std::size_t(t1)].at(y, x);
                    acc += d * d;
                    ++n;
                }
            CHECK(acc / double(n) < 1e-3);
        }
    }
}

TEST_CASE("ambiguous blob intensities match the RV class distribution") {
    PhantomConfig c = small_config();
    c.num_sequences = 120;
    c.num_frames = 8;
    c.seed = 23;
    auto [seqs, truths] = generate_phantom(c);
    // compare interiors only: boundary pixels are smooth blends toward the
    // neighboring class and belong to neither distribution
    auto interior = [](const LabelMap& gt, int y, int x, int margin, int cls) {
        for (int dy = -margin; dy <= margin; ++dy)
            for (int dx = -margin; dx <= margin; ++dx) {
                const int yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= gt.h || xx < 0 || xx >= gt.w) return false;
                if (gt.at(yy, xx) != cls) return false;
            }
        return true;
    };
    std::vector<double> blob_px, rv_px;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const CineSequence& s = seqs[i];
        // the ambiguous sample is the incoherent blob (background in the
        // truth masks, located by the incoherence mask); the RV sample is
        // everything the truth calls RV, which in coherent sequences also
        // covers the genuinely-RV blob
        // one frame per sequence: the textures within the RV are fixed, so
        // extra frames add no independent intensity samples there
        for (int t = 0; t < 1; ++t) {
            const LabelMap& gt = truths[i].masks[std::size_t(t)];
            const LabelMap& inc = truths[i].incoherence_mask;
            for (int y = 0; y < s.height(); ++y)
                for (int x = 0; x < s.width(); ++x) {
                    // margin 4: the stored mask is dilated one pixel beyond
                    // the blob and unioned over the cycle's motion
                    if (truths[i].blob_incoherent && interior(inc, y, x, 4, 1))
                        blob_px.push_back(s.frames[std::size_t(t)].at(y, x));
                    else if (gt.at(y, x) == kRightVentricle &&
                             interior(gt, y, x, 2, kRightVentricle))
                        rv_px.push_back(s.frames[std::size_t(t)].at(y, x));
                }
        }
    }
    REQUIRE(blob_px.size() > 2000);
    REQUIRE(rv_px.size() > 2000);
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    CHECK(std::abs(mean(blob_px) - mean(rv_px)) < 0.01);
    // value-noise textures are spatially correlated (lattice spacing 4), so
    // the effective sample count is far below the pixel count
    CHECK(ks_statistic(blob_px, rv_px) < 0.08);
}

TEST_CASE("label noise flips the blob label at the configured rate") {
    PhantomConfig c = small_config();
    c.num_sequences = 250;
    c.label_noise = 0.3;
    c.seed = 31;
    PhantomConfig clean = c;
    clean.label_noise = 0.0;
    auto [seqs, truths] = generate_phantom(c);
    auto [cseqs, ctruths] = generate_phantom(clean);
    int flipped = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        // images must be identical across label_noise settings
        CHECK(seqs[i].frames[0].v == cseqs[i].frames[0].v);
        if ((*seqs[i].labels)[0].v != (*cseqs[i].labels)[0].v) ++flipped;
    }
    const double rate = double(flipped) / double(seqs.size());
    CHECK(std::abs(rate - 0.3) < 0.08);
}

TEST_CASE("incoherent blobs are drawn at the designed 35% rate") {
    PhantomConfig c = small_config();
    c.num_sequences = 250;
    c.seed = 37;
    auto [seqs, truths] = generate_phantom(c);
    int incoherent = 0;
    for (const auto& t : truths) incoherent += t.blob_incoherent ? 1 : 0;
    CHECK(std::abs(double(incoherent) / 250.0 - 0.35) < 0.08);
}

TEST_CASE("split is disjoint, seed-deterministic and validates fractions") {
    const auto [tr1, te1] = split_phantom(10, 0.8, 0.2, 5);
    const auto [tr2, te2] = split_phantom(10, 0.8, 0.2, 5);
    CHECK(tr1 == tr2);
    CHECK(te1 == te2);
    CHECK(tr1.size() == 8);
    CHECK(te1.size() == 2);
    std::set<int> all(tr1.begin(), tr1.end());
    all.insert(te1.begin(), te1.end());
    CHECK(all.size() == 10);
    CHECK_THROWS_AS(split_phantom(10, 1.0, 0.0, 5), ConfigError);
    CHECK_THROWS_AS(split_phantom(10, 0.7, 0.2, 5), ConfigError);
}

TEST_CASE("bundle round-trip preserves the truth tensors") {
    PhantomConfig c = small_config();
    c.num_sequences = 2;
    auto [seqs, truths] = generate_phantom(c);
    const Bundle b = phantom_to_bundle(seqs, truths);
    REQUIRE(b.records.size() == 2);
    for (std::size_t i = 0; i < b.records.size(); ++i) {
        const PhantomTruth r = truth_from_record(b.records[i]);
        CHECK(r.blob_incoherent == truths[i].blob_incoherent);
        CHECK(r.incoherence_mask.v == truths[i].incoherence_mask.v);
        for (int t = 0; t < seqs[i].num_frames(); ++t) {
            CHECK(r.flows[std::size_t(t)].v == truths[i].flows[std::size_t(t)].v);
            CHECK(r.masks[std::size_t(t)].v == truths[i].masks[std::size_t(t)].v);
        }
        CHECK(r.motion.amp_r == doctest::Approx(truths[i].motion.amp_r));
    }
    CHECK(b.records[0].attrs["ed_frame"] == 0);
    CHECK(b.records[0].attrs["es_frame"] == 6);
}

TEST_CASE("texture_amp scales in-class contrast without moving class means") {
    PhantomConfig c = small_config();
    c.num_sequences = 8;
    c.noise_sigma = 0.0;
    c.seed = 41;
    PhantomConfig strong = c;
    strong.texture_amp = 2.0;
    auto [seqs, truths] = generate_phantom(c);
    auto [sseqs, struths] = generate_phantom(strong);
    std::vector<double> mild_px, strong_px;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const LabelMap& gt = truths[i].masks[0];
        for (int y = 2; y < gt.h - 2; ++y)
            for (int x = 2; x < gt.w - 2; ++x) {
                if (gt.at(y, x) != kMyocardium) continue;
                mild_px.push_back(seqs[i].frames[0].at(y, x));
                strong_px.push_back(sseqs[i].frames[0].at(y, x));
            }
    }
    REQUIRE(mild_px.size() > 1500);
    auto moments = [](const std::vector<double>& v) {
        double m = 0;
        for (double x : v) m += x;
        m /= double(v.size());
        double s2 = 0;
        for (double x : v) s2 += (x - m) * (x - m);
        return std::pair<double, double>{m, std::sqrt(s2 / double(v.size()))};
    };
    const auto [m1, s1] = moments(mild_px);
    const auto [m2, s2] = moments(strong_px);
    CHECK(std::abs(m1 - m2) < 0.02);
    // boundary blending damps the scaling a little below exactly 2x
    CHECK(s2 / s1 > 1.6);
    CHECK(s2 / s1 < 2.2);
}

TEST_CASE("config validation rejects out-of-range settings") {
    PhantomConfig c = small_config();
    c.height = 16;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c = small_config();
    c.num_frames = 4;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c = small_config();
    c.motion_amplitude = 20.0;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c = small_config();
    c.label_noise = 1.5;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c = small_config();
    c.texture_amp = -0.5;
    CHECK_THROWS_AS(validate_config(c), ConfigError);
}
