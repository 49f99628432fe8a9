#pragma once

#include <string>
#include <vector>

#include "lotseg/common.hpp"
#include "lotseg/tensor.hpp"

namespace lotseg {

/// C×H×W feature map, channel-major.
struct Fmap {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Fmap() = default;
    Fmap(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(std::size_t(c_) * h_ * w_, 0.0) {}

    double& at(int ci, int y, int x) { return v[(std::size_t(ci) * h + y) * w + x]; }
    double at(int ci, int y, int x) const { return v[(std::size_t(ci) * h + y) * w + x]; }
    std::size_t size() const { return v.size(); }
};

Fmap grid_to_fmap(const Grid& g);
Grid fmap_channel(const Fmap& f, int channel);
Fmap stack_channels(const std::vector<const Grid*>& grids);

/// View into one parameter tensor and its gradient accumulator.
struct ParamView {
    double* value = nullptr;
    double* grad = nullptr;
    std::size_t n = 0;
};

std::size_t total_params(const std::vector<ParamView>& ps);

/// Same-padded 2D convolution (kernel 1 or odd), stride 1.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_c, int out_c, int kernel);

    void init_he(Rng& rng);
    void init_zero();

    Fmap forward(const Fmap& x);
    Fmap backward(const Fmap& dy);  // accumulates weight grads, returns dx
    void collect(std::vector<ParamView>& out);

    int in_channels() const { return in_c_; }
    int out_channels() const { return out_c_; }

private:
    int in_c_ = 0, out_c_ = 0, k_ = 0, pad_ = 0;
    std::vector<double> w_, b_, gw_, gb_;
    Fmap x_;
    std::vector<double> cols_;  // cached im2col, (in_c*k*k) x (h*w)
};

class LeakyReLU {
public:
    explicit LeakyReLU(double slope = 0.0) : slope_(slope) {}
    Fmap forward(const Fmap& x);
    Fmap backward(const Fmap& dy);

private:
    double slope_;
    Fmap x_;
};

/// 2x2 average pooling (requires even spatial size).
class AvgPool2 {
public:
    Fmap forward(const Fmap& x);
    Fmap backward(const Fmap& dy);

private:
    int in_h_ = 0, in_w_ = 0;
};

/// 2x nearest-neighbor upsampling.
class Upsample2 {
public:
    Fmap forward(const Fmap& x);
    Fmap backward(const Fmap& dy);
};

Fmap concat_channels(const Fmap& a, const Fmap& b);
void split_channels(const Fmap& ab, int c_a, Fmap& da, Fmap& db);

/// Per-pixel softmax over channels.
Fmap softmax_channels(const Fmap& logits);

/// Cross-entropy plus soft Dice (smooth term in numerator and denominator).
/// If d_logits is non-null it receives the gradient with respect to the
/// pre-softmax logits.
double ce_dice_loss(const Fmap& logits, const LabelMap& labels, Fmap* d_logits,
                    double dice_smooth = 1e-5);

class Adam {
public:
    Adam(std::vector<ParamView> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);
    void step();
    void zero_grad();

private:
    std::vector<ParamView> params_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace lotseg
