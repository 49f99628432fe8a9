#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lotseg/tracknet.hpp"

namespace lotseg {

struct SghmcConfig {
    double step_size = 1e-4;
    double friction = 0.05;
    double noise_scale = 1.0;  // 0 degenerates to momentum SGD
    int burn_in = 200;
    int thinning = 100;
    int num_samples = 10;
    int batch_size = 8;
    std::uint64_t seed = 0;
};

void validate_sampler(const SghmcConfig& config);

/// One SGHMC chain over an arbitrary parameter vector. grad_step must zero
/// the gradients, draw a minibatch from rng, accumulate mean-loss gradients
/// and return the loss. collect(i) is called for each retained sample.
void sghmc_chain(const std::vector<ParamView>& params, const SghmcConfig& config,
                 const std::function<double(Rng&)>& grad_step,
                 const std::function<void(int)>& collect);

struct FlowEnsemble {
    std::vector<FlowUNet> samples;  // M >= 2, shared architecture
    SghmcConfig sampler;
    double init_heldout_loss = 0.0;
    std::vector<double> sample_heldout_loss;
};

/// Draws M weight samples around the trained mode via SGHMC on the
/// registration loss.
FlowEnsemble sghmc_sample(const FlowUNet& init, const std::vector<FramePair>& data,
                          const SghmcConfig& config, double lambda);

/// Per-pixel squared warp residual (the scalar loss term equals this map's mean).
Grid u_s_map(const Field& field, const Grid& source, const Grid& target);

/// Per pixel: population SD (divisor M) of each displacement component across
/// the ensemble, combined as the Euclidean norm of the two component SDs.
Grid u_b_map(const std::vector<Field>& flows);

struct UncertaintyMaps {
    Grid u_s;  // residual map, min-max normalized to [0,1]
    Grid u_b;  // ensemble-spread map, min-max normalized to [0,1]
    std::string pair_id;
};

/// u_b over predict_flow of every ensemble member; u_s from the ensemble-mean
/// field. Both maps are min-max normalized per frame pair (constant maps
/// normalize to all zeros).
UncertaintyMaps compute_uncertainty(FlowEnsemble& ensemble, const FramePair& pair);

/// Min-max normalization to [0,1]; constant input maps to all zeros.
Grid minmax_normalize(const Grid& g);

/// Ensemble persistence: M checkpoints (member_00, ...) plus index.json.
void save_flow_ensemble(const std::string& path, FlowEnsemble& ensemble);
FlowEnsemble load_flow_ensemble(const std::string& path);

}  // namespace lotseg
