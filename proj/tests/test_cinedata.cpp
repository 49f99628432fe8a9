#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lotseg/cinedata.hpp"

using namespace lotseg;
namespace fs = std::filesystem;

namespace {

CineSequence make_seq(const std::string& id, int T, int h, int w, std::uint64_t seed,
                      bool with_labels) {
    Rng rng(seed);
    CineSequence s;
    s.id = id;
    s.pixel_spacing[0] = 1.25;
    s.pixel_spacing[1] = 1.5;
    s.slice_thickness = 8.0;
    s.region_tag = "mid";
    for (int t = 0; t < T; ++t) {
        Grid g(h, w);
        for (double& x : g.v) x = rng.uniform(-1.0, 1.0);
        quantize_f32(g);
        s.frames.push_back(std::move(g));
    }
    if (with_labels) {
        std::vector<LabelMap> labels;
        for (int t = 0; t < T; ++t) {
            LabelMap m(h, w);
            for (auto& c : m.v) c = std::uint8_t(rng.integer(0, kNumClasses - 1));
            labels.push_back(std::move(m));
        }
        s.labels = std::move(labels);
    }
    return s;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lotseg_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("normalize produces zero mean unit variance") {
    Rng rng(1);
    Grid g(16, 16);
    for (double& x : g.v) x = rng.uniform(3.0, 9.0);
    const Grid n = normalize(g);
    double mean = 0;
    for (double x : n.v) mean += x;
    mean /= double(n.v.size());
    double var = 0;
    for (double x : n.v) var += (x - mean) * (x - mean);
    var /= double(n.v.size());
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("normalize maps constant frames to zeros") {
    Grid g(4, 4, 7.5);
    const Grid n = normalize(g);
    for (double x : n.v) CHECK(x == 0.0);
}

TEST_CASE("normalize closed form on a two-valued frame") {
    Grid g(2, 2);
    g.v = {0, 2, 0, 2};
    const Grid n = normalize(g);
    CHECK(n.v[0] == doctest::Approx(-1.0));
    CHECK(n.v[1] == doctest::Approx(1.0));
}

TEST_CASE("normalize rejects non-finite input") {
    Grid g(2, 2);
    g.v[1] = std::nan("");
    CHECK_THROWS_AS(normalize(g), DataError);
}

TEST_CASE("frame_pair wraps modulo T") {
    CineSequence s = make_seq("s", 12, 8, 8, 2, false);
    const FramePair p = frame_pair(s, 10, 4);
    CHECK(p.t == 10);
    for (std::size_t i = 0; i < p.target.v.size(); ++i)
        CHECK(p.target.v[i] == s.frames[2].v[i]);
    const FramePair full = frame_pair(s, 3, 12);
    for (std::size_t i = 0; i < full.target.v.size(); ++i)
        CHECK(full.target.v[i] == s.frames[3].v[i]);
    CHECK_THROWS_AS(frame_pair(s, 0, 0), ConfigError);
    CHECK_THROWS_AS(frame_pair(s, -1, 4), ContractError);
}

TEST_CASE("bundle round-trip is bit-exact") {
    Bundle b;
    SequenceRecord rec;
    rec.seq = make_seq("seq000", 4, 10, 12, 3, true);
    TensorData extra;
    extra.shape = {4, 10, 12};
    Rng rng(4);
    for (int i = 0; i < 4 * 10 * 12; ++i) extra.data.push_back(float(rng.normal()));
    rec.extras["u_b"] = extra;
    rec.attrs["ed_frame"] = 0;
    rec.attrs["blob_incoherent"] = true;
    b.records.push_back(rec);
    b.records.push_back({make_seq("seq001", 4, 10, 12, 5, false), {}, nlohmann::json::object()});

    const fs::path dir = temp_dir("roundtrip");
    save_bundle(dir.string(), b);
    const Bundle r = load_bundle(dir.string());

    REQUIRE(r.records.size() == 2);
    const SequenceRecord& r0 = r.records[0];
    CHECK(r0.seq.id == "seq000");
    CHECK(r0.seq.pixel_spacing[0] == 1.25);
    CHECK(r0.seq.pixel_spacing[1] == 1.5);
    CHECK(r0.seq.slice_thickness == 8.0);
    CHECK(r0.seq.region_tag == "mid");
    REQUIRE(r0.seq.frames.size() == 4);
    for (int t = 0; t < 4; ++t)
        for (std::size_t i = 0; i < r0.seq.frames[0].v.size(); ++i)
            CHECK(r0.seq.frames[std::size_t(t)].v[i] == rec.seq.frames[std::size_t(t)].v[i]);
    REQUIRE(r0.seq.labels.has_value());
    for (int t = 0; t < 4; ++t)
        CHECK((*r0.seq.labels)[std::size_t(t)].v == (*rec.seq.labels)[std::size_t(t)].v);
    REQUIRE(r0.extras.count("u_b"));
    CHECK(r0.extras.at("u_b").shape == extra.shape);
    CHECK(r0.extras.at("u_b").data == extra.data);
    CHECK(r0.attrs["ed_frame"] == 0);
    CHECK(r0.attrs["blob_incoherent"] == true);
    CHECK_FALSE(r.records[1].seq.labels.has_value());
    fs::remove_all(dir);
}

TEST_CASE("missing tensor file is a format error") {
    Bundle b;
    b.records.push_back({make_seq("seq000", 3, 8, 8, 6, false), {}, nlohmann::json::object()});
    const fs::path dir = temp_dir("missing");
    save_bundle(dir.string(), b);
    // remove the frames payload
    bool removed = false;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".f32") {
            fs::remove(e.path());
            removed = true;
            break;
        }
    REQUIRE(removed);
    CHECK_THROWS_AS(load_bundle(dir.string()), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("truncated payload names expected vs actual bytes") {
    Bundle b;
    b.records.push_back({make_seq("seq000", 3, 8, 8, 7, false), {}, nlohmann::json::object()});
    const fs::path dir = temp_dir("truncated");
    save_bundle(dir.string(), b);
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".f32") fs::resize_file(e.path(), 10);
    try {
        load_bundle(dir.string());
        FAIL("expected FormatError");
    } catch (const FormatError& err) {
        const std::string msg = err.what();
        CHECK(msg.find(std::to_string(3 * 8 * 8 * 4)) != std::string::npos);
        CHECK(msg.find("10") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("unknown manifest version is rejected") {
    Bundle b;
    b.records.push_back({make_seq("seq000", 3, 8, 8, 8, false), {}, nlohmann::json::object()});
    const fs::path dir = temp_dir("version");
    save_bundle(dir.string(), b);
    std::ifstream in(dir / "manifest.json");
    nlohmann::json m;
    in >> m;
    in.close();
    m["version"] = "v9";
    std::ofstream out(dir / "manifest.json");
    out << m.dump(2);
    out.close();
    CHECK_THROWS_AS(load_bundle(dir.string()), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("validate_sequence rejects bad metadata") {
    CineSequence s = make_seq("s", 3, 8, 8, 9, true);
    CHECK_NOTHROW(validate_sequence(s));
    s.pixel_spacing[0] = 0.0;
    CHECK_THROWS_AS(validate_sequence(s), ContractError);
    s.pixel_spacing[0] = 1.0;
    (*s.labels)[0].v[3] = 200;  // undeclared class id
    CHECK_THROWS_AS(validate_sequence(s), ContractError);
}
