#include "lotseg/nn.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace lotseg {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

Fmap grid_to_fmap(const Grid& g) {
    Fmap f(1, g.h, g.w);
    f.v = g.v;
    return f;
}

Grid fmap_channel(const Fmap& f, int channel) {
    Grid g(f.h, f.w);
    const std::size_t off = std::size_t(channel) * f.h * f.w;
    std::copy(f.v.begin() + long(off), f.v.begin() + long(off + g.size()), g.v.begin());
    return g;
}

Fmap stack_channels(const std::vector<const Grid*>& grids) {
    if (grids.empty()) throw ContractError("stack_channels: empty input");
    Fmap f(int(grids.size()), grids[0]->h, grids[0]->w);
    std::size_t off = 0;
    for (const Grid* g : grids) {
        if (!g->same_shape(*grids[0])) throw ContractError("stack_channels: shape mismatch");
        std::copy(g->v.begin(), g->v.end(), f.v.begin() + long(off));
        off += g->size();
    }
    return f;
}

std::size_t total_params(const std::vector<ParamView>& ps) {
    std::size_t n = 0;
    for (const auto& p : ps) n += p.n;
    return n;
}

Conv2d::Conv2d(int in_c, int out_c, int kernel)
    : in_c_(in_c), out_c_(out_c), k_(kernel), pad_(kernel / 2) {
    if (kernel % 2 == 0) throw ConfigError("Conv2d: kernel must be odd");
    w_.assign(std::size_t(out_c) * in_c * kernel * kernel, 0.0);
    b_.assign(std::size_t(out_c), 0.0);
    gw_.assign(w_.size(), 0.0);
    gb_.assign(b_.size(), 0.0);
}

void Conv2d::init_he(Rng& rng) {
    const double scale = std::sqrt(2.0 / (double(in_c_) * k_ * k_));
    for (double& x : w_) x = scale * rng.normal();
    for (double& x : b_) x = 0.0;
}

void Conv2d::init_zero() {
    std::fill(w_.begin(), w_.end(), 0.0);
    std::fill(b_.begin(), b_.end(), 0.0);
}

Fmap Conv2d::forward(const Fmap& x) {
    if (x.c != in_c_) throw ContractError("Conv2d: channel mismatch");
    x_ = x;
    const int h = x.h, w = x.w, hw = h * w, kk = k_ * k_;
    cols_.assign(std::size_t(in_c_) * kk * hw, 0.0);
    for (int ci = 0; ci < in_c_; ++ci) {
        for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
                double* row = cols_.data() + (std::size_t(ci) * kk + ky * k_ + kx) * hw;
                const int dy = ky - pad_, dx = kx - pad_;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
                    const double* src = &x.v[(std::size_t(ci) * h + sy) * w];
                    for (int xx = x_lo; xx < x_hi; ++xx) row[y * w + xx] = src[xx + dx];
                }
            }
        }
    }
    Fmap y(out_c_, h, w);
    ConstMapRM W(w_.data(), out_c_, in_c_ * kk);
    ConstMapRM C(cols_.data(), in_c_ * kk, hw);
    MapRM Y(y.v.data(), out_c_, hw);
    Y.noalias() = W * C;
    for (int co = 0; co < out_c_; ++co) Y.row(co).array() += b_[std::size_t(co)];
    return y;
}

Fmap Conv2d::backward(const Fmap& dy) {
    const int h = x_.h, w = x_.w, hw = h * w, kk = k_ * k_;
    if (dy.c != out_c_ || dy.h != h || dy.w != w) throw ContractError("Conv2d::backward: shape mismatch");
    ConstMapRM DY(dy.v.data(), out_c_, hw);
    ConstMapRM C(cols_.data(), in_c_ * kk, hw);
    MapRM GW(gw_.data(), out_c_, in_c_ * kk);
    GW.noalias() += DY * C.transpose();
    for (int co = 0; co < out_c_; ++co) gb_[std::size_t(co)] += DY.row(co).sum();

    std::vector<double> dcols(std::size_t(in_c_) * kk * hw);
    MapRM DC(dcols.data(), in_c_ * kk, hw);
    ConstMapRM W(w_.data(), out_c_, in_c_ * kk);
    DC.noalias() = W.transpose() * DY;

    Fmap dx(in_c_, h, w);
    for (int ci = 0; ci < in_c_; ++ci) {
        for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
                const double* row = dcols.data() + (std::size_t(ci) * kk + ky * k_ + kx) * hw;
                const int dyo = ky - pad_, dxo = kx - pad_;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dyo;
                    if (sy < 0 || sy >= h) continue;
                    const int x_lo = std::max(0, -dxo), x_hi = std::min(w, w - dxo);
                    double* dst = &dx.v[(std::size_t(ci) * h + sy) * w];
                    for (int xx = x_lo; xx < x_hi; ++xx) dst[xx + dxo] += row[y * w + xx];
                }
            }
        }
    }
    return dx;
}

void Conv2d::collect(std::vector<ParamView>& out) {
    out.push_back({w_.data(), gw_.data(), w_.size()});
    out.push_back({b_.data(), gb_.data(), b_.size()});
}

Fmap LeakyReLU::forward(const Fmap& x) {
    x_ = x;
    Fmap y = x;
    for (double& v : y.v)
        if (v < 0) v *= slope_;
    return y;
}

Fmap LeakyReLU::backward(const Fmap& dy) {
    Fmap dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i)
        if (x_.v[i] < 0) dx.v[i] *= slope_;
    return dx;
}

Fmap AvgPool2::forward(const Fmap& x) {
    if (x.h % 2 || x.w % 2) throw ContractError("AvgPool2: spatial size must be even");
    in_h_ = x.h;
    in_w_ = x.w;
    Fmap y(x.c, x.h / 2, x.w / 2);
    for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx)
                y.at(c, yy, xx) = 0.25 * (x.at(c, 2 * yy, 2 * xx) + x.at(c, 2 * yy, 2 * xx + 1) +
                                          x.at(c, 2 * yy + 1, 2 * xx) + x.at(c, 2 * yy + 1, 2 * xx + 1));
    return y;
}

Fmap AvgPool2::backward(const Fmap& dy) {
    Fmap dx(dy.c, in_h_, in_w_);
    for (int c = 0; c < dy.c; ++c)
        for (int yy = 0; yy < dy.h; ++yy)
            for (int xx = 0; xx < dy.w; ++xx) {
                const double g = 0.25 * dy.at(c, yy, xx);
                dx.at(c, 2 * yy, 2 * xx) = g;
                dx.at(c, 2 * yy, 2 * xx + 1) = g;
                dx.at(c, 2 * yy + 1, 2 * xx) = g;
                dx.at(c, 2 * yy + 1, 2 * xx + 1) = g;
            }
    return dx;
}

Fmap Upsample2::forward(const Fmap& x) {
    Fmap y(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    return y;
}

Fmap Upsample2::backward(const Fmap& dy) {
    Fmap dx(dy.c, dy.h / 2, dy.w / 2);
    for (int c = 0; c < dy.c; ++c)
        for (int yy = 0; yy < dy.h; ++yy)
            for (int xx = 0; xx < dy.w; ++xx) dx.at(c, yy / 2, xx / 2) += dy.at(c, yy, xx);
    return dx;
}

Fmap concat_channels(const Fmap& a, const Fmap& b) {
    if (a.h != b.h || a.w != b.w) throw ContractError("concat_channels: spatial mismatch");
    Fmap out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + long(a.v.size()));
    return out;
}

void split_channels(const Fmap& ab, int c_a, Fmap& da, Fmap& db) {
    da = Fmap(c_a, ab.h, ab.w);
    db = Fmap(ab.c - c_a, ab.h, ab.w);
    std::copy(ab.v.begin(), ab.v.begin() + long(da.v.size()), da.v.begin());
    std::copy(ab.v.begin() + long(da.v.size()), ab.v.end(), db.v.begin());
}

Fmap softmax_channels(const Fmap& logits) {
    Fmap p(logits.c, logits.h, logits.w);
    const int hw = logits.h * logits.w;
    for (int i = 0; i < hw; ++i) {
        double mx = -1e300;
        for (int c = 0; c < logits.c; ++c) mx = std::max(mx, logits.v[std::size_t(c) * hw + i]);
        double sum = 0.0;
        for (int c = 0; c < logits.c; ++c) {
            const double e = std::exp(logits.v[std::size_t(c) * hw + i] - mx);
            p.v[std::size_t(c) * hw + i] = e;
            sum += e;
        }
        for (int c = 0; c < logits.c; ++c) p.v[std::size_t(c) * hw + i] /= sum;
    }
    return p;
}

double ce_dice_loss(const Fmap& logits, const LabelMap& labels, Fmap* d_logits, double dice_smooth) {
    if (logits.h != labels.h || logits.w != labels.w)
        throw ContractError("ce_dice_loss: shape mismatch");
    const int C = logits.c, hw = logits.h * logits.w;
    for (std::uint8_t l : labels.v)
        if (int(l) >= C) throw ContractError("ce_dice_loss: label id out of range");

    const Fmap p = softmax_channels(logits);

    // cross-entropy
    double ce = 0.0;
    for (int i = 0; i < hw; ++i)
        ce -= std::log(std::max(p.v[std::size_t(labels.v[std::size_t(i)]) * hw + i], 1e-300));
    ce /= double(hw);

    // soft Dice, averaged over classes
    std::vector<double> num(std::size_t(C), 0.0), p_sum(std::size_t(C), 0.0), g_sum(std::size_t(C), 0.0);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < hw; ++i) p_sum[std::size_t(c)] += p.v[std::size_t(c) * hw + i];
    for (int i = 0; i < hw; ++i) {
        const int c = labels.v[std::size_t(i)];
        num[std::size_t(c)] += p.v[std::size_t(c) * hw + i];
        g_sum[std::size_t(c)] += 1.0;
    }
    double dice = 0.0;
    for (int c = 0; c < C; ++c)
        dice += (2.0 * num[std::size_t(c)] + dice_smooth) /
                (p_sum[std::size_t(c)] + g_sum[std::size_t(c)] + dice_smooth);
    dice /= double(C);
    const double loss = ce + (1.0 - dice);

    if (d_logits) {
        // dL/dp for both terms, then the softmax Jacobian.
        Fmap dp(C, logits.h, logits.w);
        for (int i = 0; i < hw; ++i) {
            const int g = labels.v[std::size_t(i)];
            dp.v[std::size_t(g) * hw + i] -=
                1.0 / (double(hw) * std::max(p.v[std::size_t(g) * hw + i], 1e-300));
        }
        for (int c = 0; c < C; ++c) {
            const double den = p_sum[std::size_t(c)] + g_sum[std::size_t(c)] + dice_smooth;
            const double dnum = 2.0 * num[std::size_t(c)] + dice_smooth;
            const double d_dc_dpsum = -dnum / (den * den);
            const double d_dc_dnum = 2.0 / den;
            for (int i = 0; i < hw; ++i) {
                double d = d_dc_dpsum;
                if (labels.v[std::size_t(i)] == c) d += d_dc_dnum;
                dp.v[std::size_t(c) * hw + i] += -d / double(C);
            }
        }
        *d_logits = Fmap(C, logits.h, logits.w);
        for (int i = 0; i < hw; ++i) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c)
                dot += p.v[std::size_t(c) * hw + i] * dp.v[std::size_t(c) * hw + i];
            for (int c = 0; c < C; ++c)
                d_logits->v[std::size_t(c) * hw + i] =
                    p.v[std::size_t(c) * hw + i] * (dp.v[std::size_t(c) * hw + i] - dot);
        }
    }
    return loss;
}

Adam::Adam(std::vector<ParamView> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    const std::size_t n = total_params(params_);
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    std::size_t off = 0;
    for (const auto& p : params_) {
        for (std::size_t i = 0; i < p.n; ++i) {
            const double g = p.grad[i];
            m_[off + i] = beta1_ * m_[off + i] + (1 - beta1_) * g;
            v_[off + i] = beta2_ * v_[off + i] + (1 - beta2_) * g * g;
            const double mhat = m_[off + i] / bc1;
            const double vhat = v_[off + i] / bc2;
            p.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        off += p.n;
    }
}

void Adam::zero_grad() {
    for (const auto& p : params_) std::fill(p.grad, p.grad + p.n, 0.0);
}

}  // namespace lotseg
