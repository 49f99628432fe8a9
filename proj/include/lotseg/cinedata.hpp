#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lotseg/tensor.hpp"

namespace lotseg {

/// One 2D+t short-axis slice stack.
struct CineSequence {
    std::string id;
    std::vector<Grid> frames;                       // T frames, H×W
    double pixel_spacing[2] = {1.0, 1.0};           // (mm, mm), (row, col)
    double slice_thickness = 1.0;                   // mm
    std::string region_tag = "unknown";             // base | mid | apex | unknown
    std::optional<std::vector<LabelMap>> labels;    // per-frame class maps

    int num_frames() const { return int(frames.size()); }
    int height() const { return frames.empty() ? 0 : frames[0].h; }
    int width() const { return frames.empty() ? 0 : frames[0].w; }
};

/// A (I_t, I_{t+delta_t}) pair from one sequence; the cycle is treated as
/// cyclic, so the target index is (t + delta_t) mod T.
struct FramePair {
    Grid source;
    Grid target;
    int t = 0;
    int delta_t = 1;
    std::string pair_id;
};

/// Arbitrary named tensor attached to a sequence inside a bundle
/// (ground-truth flows, incoherence masks, uncertainty maps, probabilities).
struct TensorData {
    std::vector<int> shape;
    std::vector<float> data;

    std::size_t elements() const {
        std::size_t n = 1;
        for (int s : shape) n *= std::size_t(s);
        return n;
    }
};

struct SequenceRecord {
    CineSequence seq;
    std::map<std::string, TensorData> extras;
    nlohmann::json attrs = nlohmann::json::object();
};

struct Bundle {
    std::vector<SequenceRecord> records;

    const SequenceRecord* find(const std::string& id) const {
        for (const auto& r : records)
            if (r.seq.id == id) return &r;
        return nullptr;
    }
};

/// On-disk container: a directory with a versioned JSON manifest plus one raw
/// little-endian float32 file per tensor, row-major. Round-trip is bit-exact.
void save_bundle(const std::string& path, const Bundle& bundle);
Bundle load_bundle(const std::string& path);

/// Per-frame z-scoring; constant frames map to all zeros.
Grid normalize(const Grid& image);

FramePair frame_pair(const CineSequence& seq, int t, int delta_t);

/// Validate basic sequence invariants (throws DataError / ContractError).
void validate_sequence(const CineSequence& seq);

}  // namespace lotseg
