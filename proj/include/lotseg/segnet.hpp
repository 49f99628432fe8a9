#pragma once

#include <array>
#include <string>
#include <vector>

#include "lotseg/cinedata.hpp"
#include "lotseg/nn.hpp"
#include "lotseg/posterior.hpp"

namespace lotseg {

struct DualEncoderConfig {
    int levels = 3;
    int base_width = 16;
    int num_classes = 4;
    int fusion_kernel = 3;        // spatial kernel of the fusion convolution
    int uncertainty_channels = 2; // (u_b, u_s)
    bool fuse_phi_skips = false;  // also concatenate uncertainty-encoder skips

    bool operator==(const DualEncoderConfig&) const = default;
};

void validate_config(const DualEncoderConfig& config);

/// Dual-encoder U-Net: an image encoder and an uncertainty encoder whose
/// bottleneck features are concatenated and fused by one learnable
/// convolution; the decoder keeps skip connections from the image encoder.
class DualEncoderUNet {
public:
    DualEncoderUNet() = default;
    DualEncoderUNet(const DualEncoderConfig& config, Rng rng);

    /// Pre-softmax logits, shape C×H×W. zero_phi zeroes the uncertainty
    /// encoder's features (ablation hook).
    Fmap forward(const Grid& image, const Grid& u_b, const Grid& u_s, bool cache = false,
                 bool zero_phi = false);

    void backward(const Fmap& d_logits);

    std::vector<ParamView> params();
    std::size_t param_count();
    const DualEncoderConfig& config() const { return cfg_; }

private:
    DualEncoderConfig cfg_;
    std::vector<Conv2d> img_a_, img_b_, phi_a_, phi_b_, dec_a_, dec_b_;
    std::vector<LeakyReLU> act_;
    std::vector<AvgPool2> img_pool_, phi_pool_;
    std::vector<Upsample2> up_;
    Conv2d fuse_, head_;
    bool zero_phi_cached_ = false;
    int width(int level) const { return cfg_.base_width << level; }
};

/// Per-pixel class probabilities (softmax of forward()).
Fmap seg_forward(DualEncoderUNet& net, const Grid& image, const Grid& u_b, const Grid& u_s);

/// One training/inference frame: normalized image, [0,1] uncertainty maps,
/// class labels, physical voxel geometry.
struct SegSample {
    std::string id;
    Grid image;
    Grid u_b;
    Grid u_s;
    LabelMap labels;  // empty for inference-only samples
    double pixel_spacing[2] = {1.0, 1.0};
    double slice_thickness = 1.0;
};

struct SegHyper {
    double learning_rate = 1e-3;
    int epochs = 25;
    int batch_size = 8;
    std::uint64_t seed = 0;
};

/// Minimizes pixel-wise cross-entropy plus soft Dice by minibatch Adam.
DualEncoderUNet train_seg(const std::vector<SegSample>& data, const DualEncoderConfig& config,
                          const SegHyper& hyper, std::vector<double>* epoch_loss = nullptr);

struct SegEnsemble {
    std::vector<DualEncoderUNet> samples;
    SghmcConfig sampler;
    double init_heldout_loss = 0.0;
    std::vector<double> sample_heldout_loss;
};

/// SGHMC over the segmentation loss, same chain as the tracker posterior.
SegEnsemble sghmc_sample_seg(const DualEncoderUNet& init, const std::vector<SegSample>& data,
                             const SghmcConfig& config);

struct SegResult {
    Fmap mean_prob;                               // C×H×W, arithmetic mean over members
    std::vector<LabelMap> member_masks;           // per-member argmax
    std::vector<std::vector<double>> volumes_ml;  // [member][class]
    std::vector<double> sigma_v_ml;               // per-class population SD of member volumes
};

/// Count of class pixels × pixel area × slice thickness, mm^3 -> mL.
double volume_ml(const LabelMap& mask, int class_id, const double pixel_spacing[2],
                 double slice_thickness);

SegResult ensemble_predict(std::vector<DualEncoderUNet>& members, const Grid& image,
                           const Grid& u_b, const Grid& u_s, const double pixel_spacing[2],
                           double slice_thickness);

void save_seg_checkpoint(const std::string& path, DualEncoderUNet& net);
DualEncoderUNet load_seg_checkpoint(const std::string& path);
void save_seg_ensemble(const std::string& path, SegEnsemble& ensemble);
SegEnsemble load_seg_ensemble(const std::string& path);

}  // namespace lotseg
