#include "lotseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace lotseg {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

double cycle_phase(int t, int T) { return (1.0 - std::cos(kTau * double(t) / double(T))) / 2.0; }

struct Vec2 {
    double y = 0.0, x = 0.0;
};

Vec2 displacement(const MotionSpec& ms, double py, double px) {
    const double ey = py - ms.cy;
    const double ex = px - ms.cx;
    const double r2 = ey * ey + ex * ex;
    const double q = std::exp((1.0 - r2 / (ms.r0 * ms.r0)) / 2.0) / ms.r0;
    // radial component plus a 90-degree rotated (tangential) component
    return {q * (ms.amp_r * ey + ms.amp_t * (-ex)), q * (ms.amp_r * ex + ms.amp_t * ey)};
}

/// Backward map of frame t: reference coordinates of image position p.
Vec2 backward_map(const MotionSpec& ms, int t, double py, double px) {
    const double m = cycle_phase(t, ms.num_frames);
    const Vec2 d = displacement(ms, py, px);
    return {py + m * d.y, px + m * d.x};
}

/// Smoothly interpolated lattice of Gaussian values; gives every region a
/// continuous texture so warped sampling stays consistent with rendering.
struct NoiseGrid {
    double spacing = 4.0;
    int gh = 0, gw = 0;
    std::vector<double> g;

    NoiseGrid() = default;
    NoiseGrid(int h, int w, double spacing_, Rng rng) : spacing(spacing_) {
        gh = int(std::ceil(h / spacing)) + 3;
        gw = int(std::ceil(w / spacing)) + 3;
        g.resize(std::size_t(gh) * gw);
        for (double& x : g) x = rng.normal();
    }

    double sample(double y, double x) const {
        const double fy0 = y / spacing + 1.0;
        const double fx0 = x / spacing + 1.0;
        const double cy = std::clamp(fy0, 0.0, double(gh - 1) - 1e-9);
        const double cx = std::clamp(fx0, 0.0, double(gw - 1) - 1e-9);
        const int y0 = int(cy), x0 = int(cx);
        double ty = cy - y0, tx = cx - x0;
        // smoothstep the lattice weights so the texture is C1
        ty = ty * ty * (3.0 - 2.0 * ty);
        tx = tx * tx * (3.0 - 2.0 * tx);
        const double v00 = g[std::size_t(y0) * gw + x0];
        const double v01 = g[std::size_t(y0) * gw + std::min(x0 + 1, gw - 1)];
        const double v10 = g[std::size_t(std::min(y0 + 1, gh - 1)) * gw + x0];
        const double v11 = g[std::size_t(std::min(y0 + 1, gh - 1)) * gw + std::min(x0 + 1, gw - 1)];
        return (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    }
};

double smooth_disk(double dist, double radius, double edge = 1.2) {
    const double u = std::clamp((radius - dist) / edge + 0.5, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

struct SeqGeometry {
    double cy_lv, cx_lv, r_lv, r_myo;
    double cy_rv, cx_rv, r_rv;
    double cy_blob, cx_blob, r_blob;
};

SeqGeometry make_geometry(int h, int w, Rng rng) {
    const double s = std::min(h, w) / 64.0 * rng.uniform(0.92, 1.05);
    const double cy0 = h / 2.0 + rng.uniform(-1.5, 1.5) * s;
    const double cx0 = w / 2.0 + rng.uniform(-1.5, 1.5) * s;
    const double rot = rng.uniform(-0.15, 0.15);
    const double cr = std::cos(rot), sr = std::sin(rot);
    auto place = [&](double oy, double ox, double* py, double* px) {
        *py = cy0 + s * (cr * oy - sr * ox);
        *px = cx0 + s * (sr * oy + cr * ox);
    };
    SeqGeometry geo{};
    place(0.0, -9.0, &geo.cy_lv, &geo.cx_lv);
    geo.r_lv = 6.5 * s;
    geo.r_myo = 11.0 * s;
    place(0.0, 3.5, &geo.cy_rv, &geo.cx_rv);
    geo.r_rv = 7.0 * s;
    place(-18.0, 10.0, &geo.cy_blob, &geo.cx_blob);
    geo.r_blob = 10.0 * s;
    return geo;
}

double dist(double y, double x, double cy, double cx) {
    return std::hypot(y - cy, x - cx);
}

struct Appearance {
    const SeqGeometry* geo;
    NoiseGrid bg, lv, myo, rv;
    std::vector<NoiseGrid> blob;  // one grid, or one per frame when incoherent
    bool blob_incoherent = false;

    // Intensity bases; the ambiguous blob copies the RV base and texture
    // amplitude exactly so its single-frame statistics match the RV class.
    // At the default texture_amp = 1 the class intensity ranges stay
    // disjoint, so appearance alone identifies every structure except the
    // blob. Raising texture_amp trades that separability for texture
    // gradient inside the structures: interior flow is only constrained
    // where the texture has gradient (the aperture problem), so studies of
    // the flow posterior want stronger textures than segmentation studies.
    static constexpr double kBgBase = 0.15, kBgAmp = 0.06;
    static constexpr double kLvBase = 0.95, kLvAmp = 0.10;
    static constexpr double kMyoBase = 0.40, kMyoAmp = 0.10;
    static constexpr double kRvBase = 0.72, kRvAmp = 0.10;
    double tex = 1.0;

    double eval(double y, double x, int frame) const {
        double v = kBgBase + tex * kBgAmp * bg.sample(y, x);
        const double a_rv = smooth_disk(dist(y, x, geo->cy_rv, geo->cx_rv), geo->r_rv);
        if (a_rv > 0) v = (1 - a_rv) * v + a_rv * (kRvBase + tex * kRvAmp * rv.sample(y, x));
        const double a_myo = smooth_disk(dist(y, x, geo->cy_lv, geo->cx_lv), geo->r_myo);
        if (a_myo > 0) v = (1 - a_myo) * v + a_myo * (kMyoBase + tex * kMyoAmp * myo.sample(y, x));
        const double a_lv = smooth_disk(dist(y, x, geo->cy_lv, geo->cx_lv), geo->r_lv);
        if (a_lv > 0) v = (1 - a_lv) * v + a_lv * (kLvBase + tex * kLvAmp * lv.sample(y, x));
        const double a_blob = smooth_disk(dist(y, x, geo->cy_blob, geo->cx_blob), geo->r_blob);
        if (a_blob > 0) {
            const NoiseGrid& texg = blob_incoherent ? blob[std::size_t(frame)] : blob[0];
            v = (1 - a_blob) * v + a_blob * (kRvBase + tex * kRvAmp * texg.sample(y, x));
        }
        return v;
    }
};

std::uint8_t label_at(const SeqGeometry& geo, double y, double x, std::uint8_t blob_class) {
    if (dist(y, x, geo.cy_lv, geo.cx_lv) < geo.r_lv) return kLeftVentricle;
    if (dist(y, x, geo.cy_lv, geo.cx_lv) < geo.r_myo) return kMyocardium;
    if (dist(y, x, geo.cy_rv, geo.cx_rv) < geo.r_rv) return kRightVentricle;
    if (dist(y, x, geo.cy_blob, geo.cx_blob) < geo.r_blob) return blob_class;
    return kBackground;
}

}  // namespace

void validate_config(const PhantomConfig& c) {
    if (c.height < 32 || c.width < 32)
        throw ConfigError("phantom: image size must be at least 32x32");
    if (c.num_frames < 8) throw ConfigError("phantom: num_frames must be >= 8");
    if (c.num_sequences < 1) throw ConfigError("phantom: num_sequences must be >= 1");
    if (c.motion_amplitude < 0 || c.motion_amplitude >= std::min(c.height, c.width) / 8.0)
        throw ConfigError("phantom: motion_amplitude must be in [0, min(H,W)/8)");
    if (c.label_noise < 0.0 || c.label_noise > 1.0)
        throw ConfigError("phantom: label_noise must be in [0,1]");
    if (c.noise_sigma < 0.0) throw ConfigError("phantom: noise_sigma must be >= 0");
    if (c.texture_amp < 0.0) throw ConfigError("phantom: texture_amp must be >= 0");
}

Field phantom_gt_flow(const MotionSpec& ms, int t, int delta_t, int h, int w) {
    const double m0 = cycle_phase(t, ms.num_frames);
    const double m1 = cycle_phase(t + delta_t, ms.num_frames);
    Field flow(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec2 d0 = displacement(ms, y, x);
            double fy = (m1 - m0) * d0.y;
            double fx = (m1 - m0) * d0.x;
            // Solve f = m1*D(p) - m0*D(p+f) by fixed point; |m0|*Lip(D) << 1.
            for (int it = 0; it < 50; ++it) {
                const Vec2 dshift = displacement(ms, y + fy, x + fx);
                const double ny = m1 * d0.y - m0 * dshift.y;
                const double nx = m1 * d0.x - m0 * dshift.x;
                const double change = std::abs(ny - fy) + std::abs(nx - fx);
                fy = ny;
                fx = nx;
                if (change < 1e-13) break;
            }
            flow.dy(y, x) = fy;
            flow.dx(y, x) = fx;
        }
    }
    return flow;
}

std::pair<std::vector<CineSequence>, std::vector<PhantomTruth>>
generate_phantom(const PhantomConfig& config) {
    validate_config(config);
    const int h = config.height, w = config.width, T = config.num_frames;
    const Rng root(config.seed);

    std::vector<CineSequence> seqs;
    std::vector<PhantomTruth> truths;
    seqs.reserve(std::size_t(config.num_sequences));
    truths.reserve(std::size_t(config.num_sequences));

    for (int i = 0; i < config.num_sequences; ++i) {
        Rng g = root.fork(std::uint64_t(i) + 1);
        const SeqGeometry geo = make_geometry(h, w, g.fork(1));
        // 35% incoherent: most blobs are genuine RV tissue, so an image-only
        // segmenter (pushed toward the small foreground class by both the
        // label majority and the Dice term) settles on RV for every blob
        // and is wrong exactly on the incoherent minority
        const bool incoherent = config.incoherence_flag && g.fork(2).uniform() < 0.35;
        const bool flip_label = g.fork(3).uniform() < config.label_noise;

        Appearance app;
        app.geo = &geo;
        app.blob_incoherent = incoherent;
        app.tex = config.texture_amp;
        const double tex_spacing = 4.0 * std::min(h, w) / 64.0;
        app.bg = NoiseGrid(h, w, tex_spacing, g.fork(10));
        app.lv = NoiseGrid(h, w, tex_spacing, g.fork(11));
        app.myo = NoiseGrid(h, w, tex_spacing, g.fork(12));
        app.rv = NoiseGrid(h, w, tex_spacing, g.fork(13));
        if (incoherent) {
            for (int t = 0; t < T; ++t) app.blob.emplace_back(h, w, tex_spacing, g.fork(100 + std::uint64_t(t)));
        } else {
            app.blob.emplace_back(h, w, tex_spacing, g.fork(14));
        }

        MotionSpec ms;
        ms.cy = geo.cy_lv;
        ms.cx = geo.cx_lv;
        ms.amp_r = config.motion_amplitude * g.fork(4).uniform(0.75, 1.0);
        ms.amp_t = 0.35 * ms.amp_r;
        ms.r0 = geo.r_myo;
        ms.num_frames = T;

        // The blob is RV tissue exactly when it moves with the heart; an
        // incoherent blob is through-plane content that only looks like RV.
        const std::uint8_t blob_true = incoherent ? kBackground : kRightVentricle;
        std::uint8_t blob_label = blob_true;
        if (flip_label) blob_label = (blob_true == kRightVentricle) ? kBackground : kRightVentricle;

        CineSequence seq;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "seq%03d", i);
        seq.id = idbuf;
        seq.pixel_spacing[0] = 1.5;
        seq.pixel_spacing[1] = 1.5;
        seq.slice_thickness = 8.0;
        seq.region_tag = config.incoherence_flag ? "base" : (i % 2 == 0 ? "mid" : "apex");

        PhantomTruth truth;
        truth.blob_incoherent = incoherent;
        truth.motion = ms;
        truth.incoherence_mask = LabelMap(h, w, 0);

        std::vector<LabelMap> labels;
        for (int t = 0; t < T; ++t) {
            Rng noise = g.fork(200 + std::uint64_t(t));
            Grid frame(h, w);
            LabelMap mask(h, w);
            LabelMap label(h, w);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const Vec2 ref = backward_map(ms, t, y, x);
                    frame.at(y, x) = app.eval(ref.y, ref.x, t) + config.noise_sigma * noise.normal();
                    mask.at(y, x) = label_at(geo, ref.y, ref.x, blob_true);
                    label.at(y, x) = label_at(geo, ref.y, ref.x, blob_label);
                    if (incoherent && dist(ref.y, ref.x, geo.cy_blob, geo.cx_blob) < geo.r_blob + 1.0)
                        truth.incoherence_mask.at(y, x) = 1;
                }
            }
            quantize_f32(frame);
            seq.frames.push_back(std::move(frame));
            truth.masks.push_back(std::move(mask));
            labels.push_back(std::move(label));
        }
        seq.labels = std::move(labels);

        for (int t = 0; t < T; ++t) {
            Field flow = phantom_gt_flow(ms, t, 1, h, w);
            quantize_f32(flow);
            truth.flows.push_back(std::move(flow));
        }

        seqs.push_back(std::move(seq));
        truths.push_back(std::move(truth));
    }
    return {std::move(seqs), std::move(truths)};
}

std::pair<std::vector<int>, std::vector<int>>
split_phantom(int num_sequences, double train_fraction, double test_fraction, std::uint64_t seed) {
    if (std::abs(train_fraction + test_fraction - 1.0) > 1e-9)
        throw ConfigError("split_phantom: fractions must sum to 1");
    std::vector<int> idx(std::size_t(num_sequences), 0);
    for (int i = 0; i < num_sequences; ++i) idx[std::size_t(i)] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    const int n_train = int(std::lround(train_fraction * num_sequences));
    if (n_train <= 0 || n_train >= num_sequences)
        throw ConfigError("split_phantom: both splits must be nonempty");
    std::vector<int> train(idx.begin(), idx.begin() + n_train);
    std::vector<int> test(idx.begin() + n_train, idx.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

Bundle phantom_to_bundle(const std::vector<CineSequence>& seqs,
                         const std::vector<PhantomTruth>& truths) {
    if (seqs.size() != truths.size()) throw ContractError("phantom_to_bundle: size mismatch");
    Bundle bundle;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        SequenceRecord rec;
        rec.seq = seqs[i];
        const PhantomTruth& truth = truths[i];
        const int T = rec.seq.num_frames(), h = rec.seq.height(), w = rec.seq.width();

        TensorData flows;
        flows.shape = {T, h, w, 2};
        for (const Field& f : truth.flows)
            for (double x : f.v) flows.data.push_back(float(x));
        rec.extras["gt_flows"] = std::move(flows);

        TensorData gt_masks;
        gt_masks.shape = {T, h, w};
        for (const LabelMap& m : truth.masks)
            for (std::uint8_t c : m.v) gt_masks.data.push_back(float(c));
        rec.extras["gt_masks"] = std::move(gt_masks);

        TensorData mask;
        mask.shape = {h, w};
        for (std::uint8_t c : truth.incoherence_mask.v) mask.data.push_back(float(c));
        rec.extras["incoherence_mask"] = std::move(mask);

        rec.attrs["blob_incoherent"] = truth.blob_incoherent;
        rec.attrs["ed_frame"] = 0;
        rec.attrs["es_frame"] = T / 2;
        rec.attrs["motion"] = {{"cy", truth.motion.cy},     {"cx", truth.motion.cx},
                               {"amp_r", truth.motion.amp_r}, {"amp_t", truth.motion.amp_t},
                               {"r0", truth.motion.r0},     {"num_frames", truth.motion.num_frames}};
        bundle.records.push_back(std::move(rec));
    }
    return bundle;
}

PhantomTruth truth_from_record(const SequenceRecord& rec) {
    PhantomTruth truth;
    const int T = rec.seq.num_frames(), h = rec.seq.height(), w = rec.seq.width();
    const auto& flows = rec.extras.at("gt_flows");
    const auto& gt_masks = rec.extras.at("gt_masks");
    const auto& mask = rec.extras.at("incoherence_mask");
    std::size_t i = 0;
    for (int t = 0; t < T; ++t) {
        Field f(h, w);
        for (double& x : f.v) x = double(flows.data[i++]);
        truth.flows.push_back(std::move(f));
    }
    i = 0;
    for (int t = 0; t < T; ++t) {
        LabelMap m(h, w);
        for (std::uint8_t& c : m.v) c = std::uint8_t(gt_masks.data[i++]);
        truth.masks.push_back(std::move(m));
    }
    truth.incoherence_mask = LabelMap(h, w);
    for (std::size_t k = 0; k < mask.data.size(); ++k)
        truth.incoherence_mask.v[k] = std::uint8_t(mask.data[k]);
    truth.blob_incoherent = rec.attrs.value("blob_incoherent", false);
    if (rec.attrs.contains("motion")) {
        const auto& m = rec.attrs["motion"];
        truth.motion.cy = m.value("cy", 0.0);
        truth.motion.cx = m.value("cx", 0.0);
        truth.motion.amp_r = m.value("amp_r", 0.0);
        truth.motion.amp_t = m.value("amp_t", 0.0);
        truth.motion.r0 = m.value("r0", 1.0);
        truth.motion.num_frames = m.value("num_frames", 1);
    }
    return truth;
}

}  // namespace lotseg
