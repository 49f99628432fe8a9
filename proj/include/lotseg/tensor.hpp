#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lotseg/common.hpp"

namespace lotseg {

/// Single-channel H×W image, row-major.
struct Grid {
    int h = 0, w = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(std::size_t(h_) * w_, fill) {}

    double& at(int y, int x) { return v[std::size_t(y) * w + x]; }
    double at(int y, int x) const { return v[std::size_t(y) * w + x]; }
    std::size_t size() const { return v.size(); }

    bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }
};

/// Dense displacement field, H×W×2 with (dy, dx) in pixels.
struct Field {
    int h = 0, w = 0;
    std::vector<double> v;  // interleaved (dy, dx)

    Field() = default;
    Field(int h_, int w_) : h(h_), w(w_), v(std::size_t(h_) * w_ * 2, 0.0) {}

    double& dy(int y, int x) { return v[(std::size_t(y) * w + x) * 2]; }
    double dy(int y, int x) const { return v[(std::size_t(y) * w + x) * 2]; }
    double& dx(int y, int x) { return v[(std::size_t(y) * w + x) * 2 + 1]; }
    double dx(int y, int x) const { return v[(std::size_t(y) * w + x) * 2 + 1]; }
    std::size_t size() const { return v.size(); }

    bool same_shape(const Field& o) const { return h == o.h && w == o.w; }
};

/// Per-pixel class labels. Classes: 0=BG, 1=RV, 2=MYO, 3=LV.
struct LabelMap {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;

    LabelMap() = default;
    LabelMap(int h_, int w_, std::uint8_t fill = 0) : h(h_), w(w_), v(std::size_t(h_) * w_, fill) {}

    std::uint8_t& at(int y, int x) { return v[std::size_t(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return v[std::size_t(y) * w + x]; }
    std::size_t size() const { return v.size(); }

    bool same_shape(const LabelMap& o) const { return h == o.h && w == o.w; }
};

enum ClassId : int { kBackground = 0, kRightVentricle = 1, kMyocardium = 2, kLeftVentricle = 3 };
constexpr int kNumClasses = 4;

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// Snap values to the nearest float32. Everything that ends up in a bundle is
/// quantized at the source so that save/load round-trips are bit-exact.
inline void quantize_f32(std::vector<double>& v) {
    for (double& x : v) x = double(float(x));
}

inline void quantize_f32(Grid& g) { quantize_f32(g.v); }
inline void quantize_f32(Field& f) { quantize_f32(f.v); }

}  // namespace lotseg
