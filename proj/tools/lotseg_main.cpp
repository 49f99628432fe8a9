#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lotseg/pipeline.hpp"

namespace {

constexpr const char* kCommands[] = {"phantom",   "train-reg", "sample-posterior", "uncertainty",
                                     "train-seg", "predict",   "evaluate"};

constexpr const char* kDescriptions[] = {
    "generate the synthetic cine phantom and write train/test bundles",
    "train the motion tracker on the training bundle",
    "draw tracker weight samples with SGHMC",
    "compute per-pixel uncertainty maps for every frame pair",
    "train the segmentation variants and sample their ensembles",
    "run ensemble segmentation on the test bundle",
    "compute regional Dice, significance tests and the report CSV"};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"loss-of-tracking segmentation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    long long seed = -1;

    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < std::size(kCommands); ++i) {
        CLI::App* sub = app.add_subcommand(kCommands[i], kDescriptions[i]);
        sub->add_option("--config", config_path, "run configuration file (JSON)")->required();
        sub->add_option("--out", out_dir, "run directory for artifacts")->required();
        sub->add_option("--seed", seed, "master seed; re-derives every per-stage seed");
        subs.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const lotseg::RunConfig config = lotseg::load_run_config(config_path, seed);
        lotseg::run_command(command, config, out_dir);
    } catch (const lotseg::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const lotseg::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const lotseg::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const lotseg::ContractError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return 3;
    }
    return 0;
}
