#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "lotseg/evalstats.hpp"
#include "lotseg/phantom.hpp"
#include "lotseg/posterior.hpp"
#include "lotseg/segnet.hpp"

namespace lotseg {

/// One configuration file drives every pipeline stage. Unknown keys are
/// rejected so typos cannot silently fall back to defaults.
struct RunConfig {
    PhantomConfig phantom;
    double train_fraction = 2.0 / 3.0;
    double test_fraction = 1.0 / 3.0;

    int delta_t = 4;  // phase offset between paired frames

    FlowNetConfig flow;
    TrackerHyper tracker;
    SghmcConfig sampler;

    DualEncoderConfig seg;
    SegHyper seg_hyper;
    int seg_frame_stride = 3;  // train the segmenter on every k-th frame
    std::vector<std::string> variants = {"dual", "baseline"};

    SghmcConfig seg_sampler;

    std::vector<std::string> phases = {"ED", "ES"};
};

/// Parse and fully validate; throws ConfigError on unknown keys or bad values.
RunConfig parse_run_config(const nlohmann::json& j);

/// Read the file, apply LOTSEG_<SECTION>_<KEY> environment overrides, then
/// parse. master_seed, when >= 0, re-derives every per-stage seed from it.
RunConfig load_run_config(const std::string& path, long long master_seed = -1);

nlohmann::json run_config_to_json(const RunConfig& config);

/// FNV-1a hash of the canonical JSON dump, for provenance sidecars.
std::uint64_t config_hash(const RunConfig& config);

/// Pipeline stages. Each reads its upstream artifacts from fixed locations
/// under run_dir, writes its outputs there, and drops a provenance sidecar.
/// Missing upstream artifacts raise FormatError naming the command to run.
void cmd_phantom(const RunConfig& config, const std::string& run_dir);
void cmd_train_reg(const RunConfig& config, const std::string& run_dir);
void cmd_sample_posterior(const RunConfig& config, const std::string& run_dir);
void cmd_uncertainty(const RunConfig& config, const std::string& run_dir);
void cmd_train_seg(const RunConfig& config, const std::string& run_dir);
void cmd_predict(const RunConfig& config, const std::string& run_dir);
void cmd_evaluate(const RunConfig& config, const std::string& run_dir);

/// Dispatch by subcommand name; throws ConfigError on unknown names.
void run_command(const std::string& name, const RunConfig& config, const std::string& run_dir);

}  // namespace lotseg
