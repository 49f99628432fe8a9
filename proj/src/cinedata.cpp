#include "lotseg/cinedata.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace lotseg {

namespace {

void write_f32(const fs::path& path, const float* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(data), std::streamsize(n * sizeof(float)));
    if (!out) throw FormatError("short write: " + path.string());
}

std::vector<float> read_f32(const fs::path& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("manifest references missing tensor file: " + path.string());
    in.seekg(0, std::ios::end);
    const std::size_t bytes = std::size_t(in.tellg());
    const std::size_t want = expected * sizeof(float);
    if (bytes != want)
        throw FormatError("truncated tensor payload " + path.string() + ": expected " +
                          std::to_string(want) + " bytes, got " + std::to_string(bytes));
    in.seekg(0);
    std::vector<float> v(expected);
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(want));
    if (!in) throw FormatError("short read: " + path.string());
    return v;
}

nlohmann::json tensor_entry(const std::string& file, std::vector<int> shape) {
    return {{"file", file}, {"shape", shape}, {"dtype", "float32"}};
}

std::vector<float> frames_to_f32(const std::vector<Grid>& frames) {
    std::vector<float> out;
    for (const Grid& g : frames)
        for (double x : g.v) out.push_back(float(x));
    return out;
}

std::vector<float> labels_to_f32(const std::vector<LabelMap>& labels) {
    std::vector<float> out;
    for (const LabelMap& m : labels)
        for (std::uint8_t c : m.v) out.push_back(float(c));
    return out;
}

}  // namespace

void validate_sequence(const CineSequence& seq) {
    if (seq.num_frames() < 2) throw ContractError("sequence " + seq.id + ": T >= 2 required");
    if (seq.pixel_spacing[0] <= 0 || seq.pixel_spacing[1] <= 0 || seq.slice_thickness <= 0)
        throw ContractError("sequence " + seq.id + ": spacing and thickness must be > 0");
    const int h = seq.height(), w = seq.width();
    for (const Grid& f : seq.frames)
        if (f.h != h || f.w != w) throw ContractError("sequence " + seq.id + ": ragged frames");
    if (seq.labels) {
        if (int(seq.labels->size()) != seq.num_frames())
            throw ContractError("sequence " + seq.id + ": label frame count mismatch");
        for (const LabelMap& m : *seq.labels) {
            if (m.h != h || m.w != w) throw ContractError("sequence " + seq.id + ": label shape mismatch");
            for (std::uint8_t c : m.v)
                if (c >= kNumClasses)
                    throw ContractError("sequence " + seq.id + ": unknown class id " + std::to_string(c));
        }
    }
}

void save_bundle(const std::string& path, const Bundle& bundle) {
    fs::create_directories(path);
    nlohmann::json manifest;
    manifest["version"] = "v1";
    manifest["class_map"] = {{"0", "BG"}, {"1", "RV"}, {"2", "MYO"}, {"3", "LV"}};
    manifest["sequences"] = nlohmann::json::array();
    for (const SequenceRecord& rec : bundle.records) {
        validate_sequence(rec.seq);
        const CineSequence& s = rec.seq;
        nlohmann::json entry;
        entry["id"] = s.id;
        entry["pixel_spacing"] = {s.pixel_spacing[0], s.pixel_spacing[1]};
        entry["slice_thickness"] = s.slice_thickness;
        entry["region_tag"] = s.region_tag;
        entry["attrs"] = rec.attrs;
        nlohmann::json tensors = nlohmann::json::object();

        const std::string frames_file = s.id + "_frames.f32";
        const auto frames = frames_to_f32(s.frames);
        write_f32(fs::path(path) / frames_file, frames.data(), frames.size());
        tensors["frames"] = tensor_entry(frames_file, {s.num_frames(), s.height(), s.width()});

        if (s.labels) {
            const std::string labels_file = s.id + "_labels.f32";
            const auto labels = labels_to_f32(*s.labels);
            write_f32(fs::path(path) / labels_file, labels.data(), labels.size());
            tensors["labels"] = tensor_entry(labels_file, {s.num_frames(), s.height(), s.width()});
        }
        for (const auto& [name, td] : rec.extras) {
            const std::string file = s.id + "_" + name + ".f32";
            if (td.data.size() != td.elements())
                throw ContractError("extra tensor " + name + ": data/shape mismatch");
            write_f32(fs::path(path) / file, td.data.data(), td.data.size());
            tensors[name] = tensor_entry(file, td.shape);
        }
        entry["tensors"] = tensors;
        manifest["sequences"].push_back(entry);
    }
    std::ofstream out(fs::path(path) / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw FormatError("cannot write manifest in " + path);
}

Bundle load_bundle(const std::string& path) {
    const fs::path manifest_path = fs::path(path) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw FormatError("missing manifest: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    if (!manifest.contains("version")) throw FormatError("manifest missing field 'version'");
    if (manifest["version"] != "v1")
        throw FormatError("unknown bundle version: " + manifest["version"].dump());
    if (!manifest.contains("sequences")) throw FormatError("manifest missing field 'sequences'");

    Bundle bundle;
    for (const auto& entry : manifest["sequences"]) {
        SequenceRecord rec;
        CineSequence& s = rec.seq;
        try {
            s.id = entry.at("id").get<std::string>();
            s.pixel_spacing[0] = entry.at("pixel_spacing").at(0).get<double>();
            s.pixel_spacing[1] = entry.at("pixel_spacing").at(1).get<double>();
            s.slice_thickness = entry.at("slice_thickness").get<double>();
            s.region_tag = entry.at("region_tag").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("malformed sequence entry: ") + e.what());
        }
        if (entry.contains("attrs")) rec.attrs = entry["attrs"];
        if (!entry.contains("tensors") || !entry["tensors"].contains("frames"))
            throw FormatError("sequence " + s.id + ": manifest missing field 'tensors.frames'");

        for (const auto& [name, tj] : entry["tensors"].items()) {
            if (!tj.contains("file") || !tj.contains("shape") || !tj.contains("dtype"))
                throw FormatError("sequence " + s.id + ", tensor " + name +
                                  ": manifest entry missing file/shape/dtype");
            if (tj["dtype"] != "float32")
                throw FormatError("sequence " + s.id + ", tensor " + name + ": unsupported dtype " +
                                  tj["dtype"].dump());
            TensorData td;
            td.shape = tj["shape"].get<std::vector<int>>();
            td.data = read_f32(fs::path(path) / tj["file"].get<std::string>(), td.elements());

            if (name == "frames") {
                if (td.shape.size() != 3)
                    throw FormatError("sequence " + s.id + ": frames must have shape [T,H,W]");
                const int t = td.shape[0], h = td.shape[1], w = td.shape[2];
                s.frames.assign(std::size_t(t), Grid(h, w));
                std::size_t i = 0;
                for (int f = 0; f < t; ++f)
                    for (double& x : s.frames[f].v) x = double(td.data[i++]);
            } else if (name == "labels") {
                if (td.shape.size() != 3)
                    throw FormatError("sequence " + s.id + ": labels must have shape [T,H,W]");
                const int t = td.shape[0], h = td.shape[1], w = td.shape[2];
                std::vector<LabelMap> labels(std::size_t(t), LabelMap(h, w));
                std::size_t i = 0;
                for (int f = 0; f < t; ++f)
                    for (std::uint8_t& c : labels[f].v) c = std::uint8_t(td.data[i++]);
                s.labels = std::move(labels);
            } else {
                rec.extras[name] = std::move(td);
            }
        }
        validate_sequence(s);
        bundle.records.push_back(std::move(rec));
    }
    return bundle;
}

Grid normalize(const Grid& image) {
    if (!all_finite(image.v)) throw DataError("normalize: non-finite input");
    const std::size_t n = image.v.size();
    double mean = 0.0;
    for (double x : image.v) mean += x;
    mean /= double(n);
    double var = 0.0;
    for (double x : image.v) var += (x - mean) * (x - mean);
    var /= double(n);
    Grid out(image.h, image.w);
    if (var <= 0.0) return out;  // constant frame -> all zeros
    const double inv_sd = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) out.v[i] = (image.v[i] - mean) * inv_sd;
    return out;
}

FramePair frame_pair(const CineSequence& seq, int t, int delta_t) {
    if (delta_t <= 0) throw ConfigError("frame_pair: delta_t must be >= 1");
    const int T = seq.num_frames();
    if (t < 0 || t >= T) throw ContractError("frame_pair: t out of range");
    FramePair pair;
    pair.t = t;
    pair.delta_t = delta_t;
    pair.source = seq.frames[std::size_t(t)];
    pair.target = seq.frames[std::size_t((t + delta_t) % T)];
    char buf[32];
    std::snprintf(buf, sizeof(buf), "/t%02d_dt%d", t, delta_t);
    pair.pair_id = seq.id + buf;
    return pair;
}

}  // namespace lotseg
