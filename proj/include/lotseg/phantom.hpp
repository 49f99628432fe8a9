#pragma once

#include <utility>
#include <vector>

#include "lotseg/cinedata.hpp"
#include "lotseg/tensor.hpp"

namespace lotseg {

struct PhantomConfig {
    int height = 64;
    int width = 64;
    int num_frames = 12;
    int num_sequences = 1;
    double motion_amplitude = 2.5;  // pixels, peak displacement over the cycle
    bool incoherence_flag = false;
    double label_noise = 0.0;  // probability the ambiguous-region label is flipped
    double noise_sigma = 0.01;
    double texture_amp = 1.0;  // scales every region's texture contrast
    std::uint64_t seed = 0;
};

/// Analytic motion model of one sequence: a windowed radial contraction plus
/// tangential swirl about (cy, cx), cyclic in t with period num_frames.
/// Displacement D(p) = q(r) * (amp_r * e + amp_t * perp(e)), where e = p - c,
/// q(r) = (1/r0) * exp((1 - (r/r0)^2)/2), modulated by m(t) = (1-cos(2*pi*t/T))/2.
struct MotionSpec {
    double cy = 0.0, cx = 0.0;
    double amp_r = 0.0;  // radial amplitude (pixels)
    double amp_t = 0.0;  // tangential amplitude (pixels)
    double r0 = 1.0;     // radius of peak displacement
    int num_frames = 1;
};

struct PhantomTruth {
    std::vector<LabelMap> masks;       // per-frame ground-truth classes
    std::vector<Field> flows;          // flows[t] warps frame t onto frame (t+1) mod T
    LabelMap incoherence_mask;         // 1 where frame-to-frame tracking is impossible
    bool blob_incoherent = false;      // this sequence's ambiguous region re-randomizes
    MotionSpec motion;
};

/// Exact ground-truth flow for the pair (t, t+delta_t): warp(I_t, flow) == I_{t+delta_t}
/// up to interpolation, outside the incoherence mask.
Field phantom_gt_flow(const MotionSpec& motion, int t, int delta_t, int h, int w);

/// Deterministic function of the config (identical bytes for identical config).
std::pair<std::vector<CineSequence>, std::vector<PhantomTruth>>
generate_phantom(const PhantomConfig& config);

/// Seed-deterministic disjoint split of [0, n) into train/test index sets.
std::pair<std::vector<int>, std::vector<int>>
split_phantom(int num_sequences, double train_fraction, double test_fraction, std::uint64_t seed);

/// Pack sequences plus their truths into a bundle (truth tensors stored as
/// extras "gt_flows" [T,H,W,2] and "incoherence_mask" [H,W]; motion and
/// ED/ES frames in attrs).
Bundle phantom_to_bundle(const std::vector<CineSequence>& seqs,
                         const std::vector<PhantomTruth>& truths);

/// Recover the truth stored by phantom_to_bundle.
PhantomTruth truth_from_record(const SequenceRecord& rec);

void validate_config(const PhantomConfig& config);

}  // namespace lotseg
