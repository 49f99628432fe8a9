#include "lotseg/warp.hpp"

#include <algorithm>
#include <cmath>

namespace lotseg {

namespace {

void check_same_shape(const Grid& image, const Field& field) {
    if (image.h != field.h || image.w != field.w)
        throw ContractError("warp: image " + std::to_string(image.h) + "x" +
                            std::to_string(image.w) + " vs field " + std::to_string(field.h) +
                            "x" + std::to_string(field.w));
    // NaN slips through std::clamp and turns the bilinear gather into an
    // out-of-bounds read, so reject it here instead.
    if (!all_finite(field.v)) throw ContractError("warp: non-finite field");
}

}  // namespace

Grid warp(const Grid& image, const Field& field) {
    check_same_shape(image, field);
    const int h = image.h, w = image.w;
    Grid out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sy = std::clamp(y + field.dy(y, x), 0.0, double(h - 1));
            const double sx = std::clamp(x + field.dx(y, x), 0.0, double(w - 1));
            const int y0 = std::min(int(std::floor(sy)), h - 2 >= 0 ? h - 2 : 0);
            const int x0 = std::min(int(std::floor(sx)), w - 2 >= 0 ? w - 2 : 0);
            const double fy = sy - y0;
            const double fx = sx - x0;
            const double i00 = image.at(y0, x0);
            const double i01 = image.at(y0, std::min(x0 + 1, w - 1));
            const double i10 = image.at(std::min(y0 + 1, h - 1), x0);
            const double i11 = image.at(std::min(y0 + 1, h - 1), std::min(x0 + 1, w - 1));
            out.at(y, x) = (1 - fy) * ((1 - fx) * i00 + fx * i01) + fy * ((1 - fx) * i10 + fx * i11);
        }
    }
    return out;
}

void warp_backward(const Grid& image, const Field& field, const Grid& d_out,
                   Field* d_field, Grid* d_image) {
    check_same_shape(image, field);
    if (d_out.h != image.h || d_out.w != image.w) throw ContractError("warp_backward: d_out shape mismatch");
    const int h = image.h, w = image.w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double g = d_out.at(y, x);
            const double ry = y + field.dy(y, x);
            const double rx = x + field.dx(y, x);
            const double sy = std::clamp(ry, 0.0, double(h - 1));
            const double sx = std::clamp(rx, 0.0, double(w - 1));
            const bool clamped_y = ry != sy;
            const bool clamped_x = rx != sx;
            const int y0 = std::min(int(std::floor(sy)), h - 2 >= 0 ? h - 2 : 0);
            const int x0 = std::min(int(std::floor(sx)), w - 2 >= 0 ? w - 2 : 0);
            const int y1 = std::min(y0 + 1, h - 1);
            const int x1 = std::min(x0 + 1, w - 1);
            const double fy = sy - y0;
            const double fx = sx - x0;
            const double i00 = image.at(y0, x0);
            const double i01 = image.at(y0, x1);
            const double i10 = image.at(y1, x0);
            const double i11 = image.at(y1, x1);
            if (d_field) {
                // Subgradient 0 along a clamped coordinate.
                const double dvdy = clamped_y ? 0.0 : (1 - fx) * (i10 - i00) + fx * (i11 - i01);
                const double dvdx = clamped_x ? 0.0 : (1 - fy) * (i01 - i00) + fy * (i11 - i10);
                d_field->dy(y, x) += g * dvdy;
                d_field->dx(y, x) += g * dvdx;
            }
            if (d_image) {
                d_image->at(y0, x0) += g * (1 - fy) * (1 - fx);
                d_image->at(y0, x1) += g * (1 - fy) * fx;
                d_image->at(y1, x0) += g * fy * (1 - fx);
                d_image->at(y1, x1) += g * fy * fx;
            }
        }
    }
}

namespace {

std::size_t grad_reg_term_count(int h, int w) {
    return 2u * (std::size_t(h) * (w - 1) + std::size_t(h - 1) * w);
}

}  // namespace

double grad_reg(const Field& field) {
    if (!all_finite(field.v)) throw ContractError("grad_reg: non-finite field");
    const int h = field.h, w = field.w;
    if (h < 2 || w < 2) return 0.0;
    double acc = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w) {
                const double gy = field.dy(y, x + 1) - field.dy(y, x);
                const double gx = field.dx(y, x + 1) - field.dx(y, x);
                acc += gy * gy + gx * gx;
            }
            if (y + 1 < h) {
                const double gy = field.dy(y + 1, x) - field.dy(y, x);
                const double gx = field.dx(y + 1, x) - field.dx(y, x);
                acc += gy * gy + gx * gx;
            }
        }
    }
    return acc / double(grad_reg_term_count(h, w));
}

void grad_reg_backward(const Field& field, double d_scalar, Field& d_field) {
    if (!field.same_shape(d_field)) throw ContractError("grad_reg_backward: shape mismatch");
    const int h = field.h, w = field.w;
    if (h < 2 || w < 2) return;
    const double scale = 2.0 * d_scalar / double(grad_reg_term_count(h, w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w) {
                const double gy = field.dy(y, x + 1) - field.dy(y, x);
                const double gx = field.dx(y, x + 1) - field.dx(y, x);
                d_field.dy(y, x + 1) += scale * gy;
                d_field.dy(y, x) -= scale * gy;
                d_field.dx(y, x + 1) += scale * gx;
                d_field.dx(y, x) -= scale * gx;
            }
            if (y + 1 < h) {
                const double gy = field.dy(y + 1, x) - field.dy(y, x);
                const double gx = field.dx(y + 1, x) - field.dx(y, x);
                d_field.dy(y + 1, x) += scale * gy;
                d_field.dy(y, x) -= scale * gy;
                d_field.dx(y + 1, x) += scale * gx;
                d_field.dx(y, x) -= scale * gx;
            }
        }
    }
}

double mse(const Grid& a, const Grid& b) {
    if (!a.same_shape(b)) throw ContractError("mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        acc += d * d;
    }
    return acc / double(a.v.size());
}

double reg_loss(const Field& field, const Grid& source, const Grid& target, double lambda) {
    if (!source.same_shape(target)) throw ContractError("reg_loss: source/target shape mismatch");
    return mse(warp(source, field), target) + lambda * grad_reg(field);
}

void reg_loss_backward(const Field& field, const Grid& source, const Grid& target,
                       double lambda, Field& d_field) {
    if (!source.same_shape(target)) throw ContractError("reg_loss_backward: shape mismatch");
    const Grid warped = warp(source, field);
    Grid d_warped(source.h, source.w);
    const double scale = 2.0 / double(warped.v.size());
    for (std::size_t i = 0; i < warped.v.size(); ++i)
        d_warped.v[i] = scale * (warped.v[i] - target.v[i]);
    warp_backward(source, field, d_warped, &d_field, nullptr);
    if (lambda != 0.0) grad_reg_backward(field, lambda, d_field);
}

}  // namespace lotseg
