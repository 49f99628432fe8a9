#pragma once

#include <string>
#include <vector>

#include "lotseg/cinedata.hpp"
#include "lotseg/nn.hpp"
#include "lotseg/warp.hpp"

namespace lotseg {

struct FlowNetConfig {
    int levels = 3;
    int base_width = 16;
};

/// U-Net-style flow predictor: two stacked input frames in, a dense (dy, dx)
/// displacement field out. The output head is zero-initialized so an
/// untrained network predicts the identity transform.
class FlowUNet {
public:
    FlowUNet() = default;
    FlowUNet(const FlowNetConfig& config, Rng rng);

    /// Deterministic given weights and inputs. Expects normalized images.
    Field forward(const Grid& source, const Grid& target, bool cache = false);

    /// Back-propagates a gradient with respect to the predicted field;
    /// accumulates parameter gradients. Requires a preceding cached forward.
    void backward(const Field& d_field);

    std::vector<ParamView> params();
    std::size_t param_count();
    const FlowNetConfig& config() const { return cfg_; }

private:
    FlowNetConfig cfg_;
    std::vector<Conv2d> enc_a_, enc_b_, dec_a_, dec_b_;
    std::vector<LeakyReLU> act_;  // one per conv, in forward order
    std::vector<AvgPool2> pool_;
    std::vector<Upsample2> up_;
    Conv2d head_;
    int width(int level) const { return cfg_.base_width << level; }
};

struct TrackerHyper {
    double lambda = 0.1;  // smoothness weight
    double learning_rate = 1e-3;
    int epochs = 10;
    int batch_size = 8;
    std::uint64_t seed = 0;
};

void validate_hyper(const TrackerHyper& hyper);

/// All normalized delta_t frame pairs of the given sequences.
std::vector<FramePair> make_training_pairs(const std::vector<CineSequence>& seqs, int delta_t);

Field predict_flow(FlowUNet& net, const FramePair& pair);

/// Minimizes the warping loss by minibatch gradient descent (Adam).
/// Emits the mean loss per epoch into epoch_loss when non-null.
FlowUNet train_tracker(const std::vector<FramePair>& data, const FlowNetConfig& config,
                       const TrackerHyper& hyper, std::vector<double>* epoch_loss = nullptr);

/// Checkpoint container: directory with descriptor.json + params.f32.
void save_flow_checkpoint(const std::string& path, FlowUNet& net);
FlowUNet load_flow_checkpoint(const std::string& path);

/// Shared by all checkpoint kinds.
void write_params_f32(const std::string& path, std::vector<ParamView> params);
void read_params_f32(const std::string& path, std::vector<ParamView> params);

}  // namespace lotseg
