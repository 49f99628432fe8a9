#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lotseg/pipeline.hpp"

using namespace lotseg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// small enough to run the whole pipeline twice in a test
json tiny_config_json() {
    json j;
    j["phantom"] = {{"height", 32},        {"width", 32},          {"num_frames", 8},
                    {"num_sequences", 6},  {"motion_amplitude", 2.0}, {"incoherence", true},
                    {"label_noise", 0.0},  {"noise_sigma", 0.01},  {"seed", 1},
                    {"train_fraction", 2.0 / 3.0}, {"test_fraction", 1.0 / 3.0}};
    j["pairing"] = {{"delta_t", 2}};
    j["tracker"] = {{"levels", 2}, {"base_width", 4},  {"lambda", 0.1},
                    {"learning_rate", 1e-3}, {"epochs", 2}, {"batch_size", 8}, {"seed", 2}};
    j["sampler"] = {{"step_size", 1e-4}, {"friction", 0.05}, {"noise_scale", 1.0},
                    {"burn_in", 2},      {"thinning", 1},    {"num_samples", 2},
                    {"batch_size", 4},   {"seed", 3}};
    j["seg"] = {{"levels", 2},         {"base_width", 4}, {"num_classes", 4},
                {"fusion_kernel", 3},  {"fuse_phi_skips", false},
                {"learning_rate", 1e-3}, {"epochs", 2},   {"batch_size", 8},
                {"frame_stride", 4},   {"variants", json::array({"dual", "baseline"})},
                {"seed", 4}};
    j["seg_sampler"] = {{"step_size", 1e-4}, {"friction", 0.05}, {"noise_scale", 1.0},
                        {"burn_in", 2},      {"thinning", 1},    {"num_samples", 2},
                        {"batch_size", 4},   {"seed", 5}};
    j["evaluate"] = {{"phases", json::array({"ED", "ES"})}};
    return j;
}

fs::path write_config(const json& j, const std::string& name) {
    const fs::path path = fs::temp_directory_path() / name;
    std::ofstream out(path);
    out << j.dump(2);
    return path;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("unknown config keys are rejected") {
    json j = tiny_config_json();
    CHECK_NOTHROW(parse_run_config(j));
    j["phantom"]["hieght"] = 64;
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
    j = tiny_config_json();
    j["trackerr"] = json::object();
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
}

TEST_CASE("invalid values are rejected with configuration errors") {
    json j = tiny_config_json();
    j["pairing"]["delta_t"] = 0;
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
    j = tiny_config_json();
    j["seg"]["variants"] = json::array({"dual", "fancy"});
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
    j = tiny_config_json();
    j["evaluate"]["phases"] = json::array({"MID"});
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
    j = tiny_config_json();
    j["tracker"]["epochs"] = "ten";
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
}

TEST_CASE("config round-trips through its json form") {
    const RunConfig c = parse_run_config(tiny_config_json());
    const RunConfig c2 = parse_run_config(run_config_to_json(c));
    CHECK(config_hash(c) == config_hash(c2));
    // different seed, different hash
    json j = tiny_config_json();
    j["phantom"]["seed"] = 99;
    CHECK(config_hash(parse_run_config(j)) != config_hash(c));
}

TEST_CASE("environment variables override file values") {
    const fs::path path = write_config(tiny_config_json(), "lotseg_test_env.json");
    setenv("LOTSEG_PHANTOM_SEED", "77", 1);
    setenv("LOTSEG_TRACKER_LAMBDA", "0.25", 1);
    setenv("LOTSEG_PHANTOM_INCOHERENCE", "false", 1);
    const RunConfig c = load_run_config(path.string());
    unsetenv("LOTSEG_PHANTOM_SEED");
    unsetenv("LOTSEG_TRACKER_LAMBDA");
    unsetenv("LOTSEG_PHANTOM_INCOHERENCE");
    CHECK(c.phantom.seed == 77);
    CHECK(c.tracker.lambda == doctest::Approx(0.25));
    CHECK_FALSE(c.phantom.incoherence_flag);
    fs::remove(path);
}

TEST_CASE("unparseable environment override fails loudly") {
    const fs::path path = write_config(tiny_config_json(), "lotseg_test_env_bad.json");
    setenv("LOTSEG_PHANTOM_SEED", "lots", 1);
    CHECK_THROWS_AS(load_run_config(path.string()), ConfigError);
    unsetenv("LOTSEG_PHANTOM_SEED");
    fs::remove(path);
}

TEST_CASE("master seed derives one independent stream per stage") {
    const fs::path path = write_config(tiny_config_json(), "lotseg_test_master.json");
    const RunConfig c = load_run_config(path.string(), 5);
    CHECK(c.phantom.seed == mix_seed(5, fnv1a64("phantom")));
    CHECK(c.tracker.seed == mix_seed(5, fnv1a64("tracker")));
    CHECK(c.sampler.seed == mix_seed(5, fnv1a64("sampler")));
    CHECK(c.seg_hyper.seed == mix_seed(5, fnv1a64("seg")));
    CHECK(c.seg_sampler.seed == mix_seed(5, fnv1a64("seg_sampler")));
    CHECK(c.phantom.seed != c.tracker.seed);
    // negative master seed leaves the file's seeds alone
    const RunConfig d = load_run_config(path.string(), -1);
    CHECK(d.phantom.seed == 1);
    fs::remove(path);
}

TEST_CASE("missing config file raises a configuration error") {
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("stages refuse to run before their inputs exist") {
    const RunConfig c = parse_run_config(tiny_config_json());
    const fs::path dir = fs::temp_directory_path() / "lotseg_test_empty_run";
    fs::remove_all(dir);
    fs::create_directories(dir);

    auto message_of = [&](auto&& fn) {
        try {
            fn();
        } catch (const FormatError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message_of([&] { cmd_train_reg(c, dir.string()); }).find("phantom") !=
          std::string::npos);
    CHECK(message_of([&] { cmd_sample_posterior(c, dir.string()); }).find("train-reg") !=
          std::string::npos);
    CHECK(message_of([&] { cmd_uncertainty(c, dir.string()); }).find("sample-posterior") !=
          std::string::npos);
    CHECK(message_of([&] { cmd_train_seg(c, dir.string()); }).find("uncertainty") !=
          std::string::npos);
    CHECK(message_of([&] { cmd_predict(c, dir.string()); }).find("uncertainty") !=
          std::string::npos);
    CHECK(message_of([&] { cmd_evaluate(c, dir.string()); }).find("phantom") !=
          std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("unknown command name is rejected") {
    const RunConfig c = parse_run_config(tiny_config_json());
    CHECK_THROWS_AS(run_command("segment", c, "/tmp/nowhere"), ConfigError);
}

TEST_CASE("full pipeline runs end to end and reruns bit-identically") {
    const RunConfig c = parse_run_config(tiny_config_json());
    const char* commands[] = {"phantom",   "train-reg", "sample-posterior", "uncertainty",
                              "train-seg", "predict",   "evaluate"};

    const fs::path a = fs::temp_directory_path() / "lotseg_test_run_a";
    const fs::path b = fs::temp_directory_path() / "lotseg_test_run_b";
    fs::remove_all(a);
    fs::remove_all(b);
    for (const char* cmd : commands) run_command(cmd, c, a.string());
    for (const char* cmd : commands) run_command(cmd, c, b.string());

    // every stage leaves a provenance sidecar
    for (const char* cmd : commands) {
        CHECK(fs::exists(a / (std::string(cmd) + ".provenance.json")));
        const json side = json::parse(slurp(a / (std::string(cmd) + ".provenance.json")));
        CHECK(side.at("command") == cmd);
        CHECK(side.at("artifact_version") == "v1");
    }

    // report exists, has content, and is byte-identical across reruns
    const std::string report_a = slurp(a / "eval" / "report.csv");
    const std::string report_b = slurp(b / "eval" / "report.csv");
    CHECK(!report_a.empty());
    CHECK(report_a == report_b);
    CHECK(report_a.rfind("record,method,region,phase,case_id,class,dice,sigma_v_ml,p_value", 0) ==
          0);
    // both variants are present
    CHECK(report_a.find(",dual,") != std::string::npos);
    CHECK(report_a.find(",baseline,") != std::string::npos);

    // volume summaries exist for both variants
    for (const char* variant : {"dual", "baseline"}) {
        const std::string vols = slurp(a / "pred" / variant / "volumes.csv");
        CHECK(vols.rfind("case_id,phase,frame,class,mean_volume_ml,sigma_v_ml", 0) == 0);
        CHECK(vols == slurp(b / "pred" / variant / "volumes.csv"));
    }

    // the evaluation consumed every test sequence at both phases: 2 test
    // sequences x 2 phases x 4 classes x 2 methods case rows
    int case_rows = 0;
    std::istringstream lines(report_a);
    std::string line;
    while (std::getline(lines, line)) case_rows += line.rfind("case,", 0) == 0;
    CHECK(case_rows == 2 * 2 * 4 * 2);

    fs::remove_all(a);
    fs::remove_all(b);
}
