#include "lotseg/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace lotseg {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where,
                    const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (const auto& [key, val] : j.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key \"" + key + "\" in " + where);
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: bad value for \"") + key + "\"");
    }
}

void parse_sampler(const json& j, const std::string& where, SghmcConfig& c) {
    reject_unknown(j, where,
                   {"step_size", "friction", "noise_scale", "burn_in", "thinning", "num_samples",
                    "batch_size", "seed"});
    get_if(j, "step_size", c.step_size);
    get_if(j, "friction", c.friction);
    get_if(j, "noise_scale", c.noise_scale);
    get_if(j, "burn_in", c.burn_in);
    get_if(j, "thinning", c.thinning);
    get_if(j, "num_samples", c.num_samples);
    get_if(j, "batch_size", c.batch_size);
    get_if(j, "seed", c.seed);
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    reject_unknown(j, "top level",
                   {"phantom", "pairing", "tracker", "sampler", "seg", "seg_sampler", "evaluate"});
    RunConfig c;
    if (j.contains("phantom")) {
        const json& p = j["phantom"];
        reject_unknown(p, "phantom",
                       {"height", "width", "num_frames", "num_sequences", "motion_amplitude",
                        "incoherence", "label_noise", "noise_sigma", "texture_amp", "seed",
                        "train_fraction", "test_fraction"});
        get_if(p, "height", c.phantom.height);
        get_if(p, "width", c.phantom.width);
        get_if(p, "num_frames", c.phantom.num_frames);
        get_if(p, "num_sequences", c.phantom.num_sequences);
        get_if(p, "motion_amplitude", c.phantom.motion_amplitude);
        get_if(p, "incoherence", c.phantom.incoherence_flag);
        get_if(p, "label_noise", c.phantom.label_noise);
        get_if(p, "noise_sigma", c.phantom.noise_sigma);
        get_if(p, "texture_amp", c.phantom.texture_amp);
        get_if(p, "seed", c.phantom.seed);
        get_if(p, "train_fraction", c.train_fraction);
        get_if(p, "test_fraction", c.test_fraction);
    }
    if (j.contains("pairing")) {
        reject_unknown(j["pairing"], "pairing", {"delta_t"});
        get_if(j["pairing"], "delta_t", c.delta_t);
    }
    if (j.contains("tracker")) {
        const json& t = j["tracker"];
        reject_unknown(t, "tracker",
                       {"levels", "base_width", "lambda", "learning_rate", "epochs", "batch_size",
                        "seed"});
        get_if(t, "levels", c.flow.levels);
        get_if(t, "base_width", c.flow.base_width);
        get_if(t, "lambda", c.tracker.lambda);
        get_if(t, "learning_rate", c.tracker.learning_rate);
        get_if(t, "epochs", c.tracker.epochs);
        get_if(t, "batch_size", c.tracker.batch_size);
        get_if(t, "seed", c.tracker.seed);
    }
    if (j.contains("sampler")) parse_sampler(j["sampler"], "sampler", c.sampler);
    if (j.contains("seg")) {
        const json& s = j["seg"];
        reject_unknown(s, "seg",
                       {"levels", "base_width", "num_classes", "fusion_kernel", "fuse_phi_skips",
                        "learning_rate", "epochs", "batch_size", "frame_stride", "variants",
                        "seed"});
        get_if(s, "levels", c.seg.levels);
        get_if(s, "base_width", c.seg.base_width);
        get_if(s, "num_classes", c.seg.num_classes);
        get_if(s, "fusion_kernel", c.seg.fusion_kernel);
        get_if(s, "fuse_phi_skips", c.seg.fuse_phi_skips);
        get_if(s, "learning_rate", c.seg_hyper.learning_rate);
        get_if(s, "epochs", c.seg_hyper.epochs);
        get_if(s, "batch_size", c.seg_hyper.batch_size);
        get_if(s, "frame_stride", c.seg_frame_stride);
        get_if(s, "variants", c.variants);
        get_if(s, "seed", c.seg_hyper.seed);
    }
    if (j.contains("seg_sampler")) parse_sampler(j["seg_sampler"], "seg_sampler", c.seg_sampler);
    if (j.contains("evaluate")) {
        reject_unknown(j["evaluate"], "evaluate", {"phases"});
        get_if(j["evaluate"], "phases", c.phases);
    }

    validate_config(c.phantom);
    if (c.delta_t <= 0) throw ConfigError("config: pairing.delta_t must be positive");
    validate_hyper(c.tracker);
    validate_sampler(c.sampler);
    validate_config(c.seg);
    validate_sampler(c.seg_sampler);
    if (c.seg_frame_stride < 1) throw ConfigError("config: seg.frame_stride must be >= 1");
    if (c.variants.empty()) throw ConfigError("config: seg.variants must not be empty");
    for (const std::string& v : c.variants)
        if (v != "dual" && v != "baseline")
            throw ConfigError("config: unknown seg variant \"" + v + "\"");
    for (const std::string& p : c.phases)
        if (p != "ED" && p != "ES")
            throw ConfigError("config: unknown phase \"" + p + "\" (expected ED or ES)");
    if (c.phases.empty()) throw ConfigError("config: evaluate.phases must not be empty");
    return c;
}

namespace {

std::string upper(std::string s) {
    for (char& ch : s) ch = char(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

void apply_env_overrides(json& j) {
    for (auto& [section, body] : j.items()) {
        if (!body.is_object()) continue;
        for (auto& [key, val] : body.items()) {
            const std::string name = "LOTSEG_" + upper(section) + "_" + upper(key);
            const char* raw = std::getenv(name.c_str());
            if (!raw) continue;
            const std::string text(raw);
            try {
                if (val.is_boolean())
                    val = (text == "1" || text == "true" || text == "TRUE");
                else if (val.is_number_integer() || val.is_number_unsigned())
                    val = std::stoll(text);
                else if (val.is_number_float())
                    val = std::stod(text);
                else if (val.is_string())
                    val = text;
                else
                    throw ConfigError("config: " + name + " cannot override a non-scalar key");
            } catch (const std::invalid_argument&) {
                throw ConfigError("config: cannot parse " + name + "=\"" + text + "\"");
            }
        }
    }
}

}  // namespace

RunConfig load_run_config(const std::string& path, long long master_seed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
    apply_env_overrides(j);
    if (master_seed >= 0) {
        // derive one independent stream per stage from the master seed
        for (const char* section : {"phantom", "tracker", "sampler", "seg", "seg_sampler"}) {
            if (!j.contains(section)) j[section] = json::object();
            j[section]["seed"] =
                mix_seed(std::uint64_t(master_seed), fnv1a64(section));
        }
    }
    return parse_run_config(j);
}

json run_config_to_json(const RunConfig& c) {
    json j;
    j["phantom"] = {{"height", c.phantom.height},
                    {"width", c.phantom.width},
                    {"num_frames", c.phantom.num_frames},
                    {"num_sequences", c.phantom.num_sequences},
                    {"motion_amplitude", c.phantom.motion_amplitude},
                    {"incoherence", c.phantom.incoherence_flag},
                    {"label_noise", c.phantom.label_noise},
                    {"noise_sigma", c.phantom.noise_sigma},
                    {"texture_amp", c.phantom.texture_amp},
                    {"seed", c.phantom.seed},
                    {"train_fraction", c.train_fraction},
                    {"test_fraction", c.test_fraction}};
    j["pairing"] = {{"delta_t", c.delta_t}};
    j["tracker"] = {{"levels", c.flow.levels},
                    {"base_width", c.flow.base_width},
                    {"lambda", c.tracker.lambda},
                    {"learning_rate", c.tracker.learning_rate},
                    {"epochs", c.tracker.epochs},
                    {"batch_size", c.tracker.batch_size},
                    {"seed", c.tracker.seed}};
    auto sampler_json = [](const SghmcConfig& s) {
        return json{{"step_size", s.step_size},   {"friction", s.friction},
                    {"noise_scale", s.noise_scale}, {"burn_in", s.burn_in},
                    {"thinning", s.thinning},     {"num_samples", s.num_samples},
                    {"batch_size", s.batch_size}, {"seed", s.seed}};
    };
    j["sampler"] = sampler_json(c.sampler);
    j["seg"] = {{"levels", c.seg.levels},
                {"base_width", c.seg.base_width},
                {"num_classes", c.seg.num_classes},
                {"fusion_kernel", c.seg.fusion_kernel},
                {"fuse_phi_skips", c.seg.fuse_phi_skips},
                {"learning_rate", c.seg_hyper.learning_rate},
                {"epochs", c.seg_hyper.epochs},
                {"batch_size", c.seg_hyper.batch_size},
                {"frame_stride", c.seg_frame_stride},
                {"variants", c.variants},
                {"seed", c.seg_hyper.seed}};
    j["seg_sampler"] = sampler_json(c.seg_sampler);
    j["evaluate"] = {{"phases", c.phases}};
    return j;
}

std::uint64_t config_hash(const RunConfig& c) {
    const std::string dump = run_config_to_json(c).dump();
    return fnv1a64(dump);
}

namespace {

void write_provenance(const std::string& run_dir, const std::string& command,
                      const RunConfig& c) {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash(c)));
    json side;
    side["command"] = command;
    side["config_hash"] = hash;
    side["artifact_version"] = "v1";
    side["config"] = run_config_to_json(c);
    fs::create_directories(run_dir);
    std::ofstream out(fs::path(run_dir) / (command + ".provenance.json"));
    out << side.dump(2) << "\n";
    if (!out) throw FormatError("cannot write provenance sidecar for " + command);
}

void require_artifact(const fs::path& marker, const std::string& what,
                      const std::string& producer) {
    if (!fs::exists(marker))
        throw FormatError("missing " + what + " (" + marker.string() + "); run `" + producer +
                          "` first");
}

fs::path data_dir(const std::string& run_dir, const char* split) {
    return fs::path(run_dir) / "data" / split;
}
fs::path maps_dir(const std::string& run_dir, const char* split) {
    return fs::path(run_dir) / "maps" / split;
}

std::vector<CineSequence> bundle_sequences(const Bundle& b) {
    std::vector<CineSequence> seqs;
    seqs.reserve(b.records.size());
    for (const auto& r : b.records) seqs.push_back(r.seq);
    return seqs;
}

Grid tensor_frame(const TensorData& t, int frame, int h, int w, const std::string& name) {
    if (t.shape.size() != 3 || t.shape[1] != h || t.shape[2] != w)
        throw DataError("tensor " + name + " has unexpected shape");
    if (frame < 0 || frame >= t.shape[0])
        throw DataError("tensor " + name + " has no frame " + std::to_string(frame));
    Grid g(h, w);
    const std::size_t off = std::size_t(frame) * h * w;
    for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = double(t.data[off + i]);
    return g;
}

/// Phase frames requested by the config, resolved through the record's attrs.
std::vector<std::pair<std::string, int>> phase_frames(const RunConfig& c,
                                                      const SequenceRecord& rec) {
    std::vector<std::pair<std::string, int>> out;
    for (const std::string& phase : c.phases) {
        const char* key = (phase == "ED") ? "ed_frame" : "es_frame";
        if (!rec.attrs.contains(key))
            throw DataError("sequence " + rec.seq.id + " lacks attr " + key +
                            " needed for phase " + phase);
        out.emplace_back(phase, rec.attrs[key].get<int>());
    }
    return out;
}

std::string fmt6(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return buf;
}

}  // namespace

void cmd_phantom(const RunConfig& config, const std::string& run_dir) {
    auto [seqs, truths] = generate_phantom(config.phantom);
    const auto [train_idx, test_idx] =
        split_phantom(config.phantom.num_sequences, config.train_fraction, config.test_fraction,
                      mix_seed(config.phantom.seed, fnv1a64("split")));
    auto subset = [&](const std::vector<int>& idx) {
        std::vector<CineSequence> s;
        std::vector<PhantomTruth> t;
        for (int i : idx) {
            s.push_back(seqs[std::size_t(i)]);
            t.push_back(truths[std::size_t(i)]);
        }
        return phantom_to_bundle(s, t);
    };
    save_bundle(data_dir(run_dir, "train").string(), subset(train_idx));
    save_bundle(data_dir(run_dir, "test").string(), subset(test_idx));
    write_provenance(run_dir, "phantom", config);
}

void cmd_train_reg(const RunConfig& config, const std::string& run_dir) {
    require_artifact(data_dir(run_dir, "train") / "manifest.json", "training data bundle",
                     "phantom");
    const Bundle train = load_bundle(data_dir(run_dir, "train").string());
    const auto pairs = make_training_pairs(bundle_sequences(train), config.delta_t);
    FlowUNet net = train_tracker(pairs, config.flow, config.tracker);
    save_flow_checkpoint((fs::path(run_dir) / "tracker").string(), net);
    write_provenance(run_dir, "train-reg", config);
}

void cmd_sample_posterior(const RunConfig& config, const std::string& run_dir) {
    require_artifact(fs::path(run_dir) / "tracker" / "descriptor.json", "tracker checkpoint",
                     "train-reg");
    require_artifact(data_dir(run_dir, "train") / "manifest.json", "training data bundle",
                     "phantom");
    FlowUNet net = load_flow_checkpoint((fs::path(run_dir) / "tracker").string());
    const Bundle train = load_bundle(data_dir(run_dir, "train").string());
    const auto pairs = make_training_pairs(bundle_sequences(train), config.delta_t);
    FlowEnsemble ens = sghmc_sample(net, pairs, config.sampler, config.tracker.lambda);
    save_flow_ensemble((fs::path(run_dir) / "flow_ensemble").string(), ens);
    write_provenance(run_dir, "sample-posterior", config);
}

void cmd_uncertainty(const RunConfig& config, const std::string& run_dir) {
    require_artifact(fs::path(run_dir) / "flow_ensemble" / "index.json", "flow ensemble",
                     "sample-posterior");
    FlowEnsemble ens = load_flow_ensemble((fs::path(run_dir) / "flow_ensemble").string());
    for (const char* split : {"train", "test"}) {
        require_artifact(data_dir(run_dir, split) / "manifest.json", "data bundle", "phantom");
        Bundle bundle = load_bundle(data_dir(run_dir, split).string());
        for (SequenceRecord& rec : bundle.records) {
            const int T = rec.seq.num_frames(), h = rec.seq.height(), w = rec.seq.width();
            TensorData ub, us;
            ub.shape = {T, h, w};
            us.shape = {T, h, w};
            for (int t = 0; t < T; ++t) {
                FramePair pair = frame_pair(rec.seq, t, config.delta_t);
                pair.source = normalize(pair.source);
                pair.target = normalize(pair.target);
                const UncertaintyMaps maps = compute_uncertainty(ens, pair);
                for (double x : maps.u_b.v) ub.data.push_back(float(x));
                for (double x : maps.u_s.v) us.data.push_back(float(x));
            }
            rec.extras["u_b"] = std::move(ub);
            rec.extras["u_s"] = std::move(us);
        }
        save_bundle(maps_dir(run_dir, split).string(), bundle);
    }
    write_provenance(run_dir, "uncertainty", config);
}

namespace {

std::vector<SegSample> seg_samples_from_bundle(const Bundle& bundle, int frame_stride,
                                               bool zero_maps, bool need_labels) {
    std::vector<SegSample> out;
    for (const SequenceRecord& rec : bundle.records) {
        const int T = rec.seq.num_frames(), h = rec.seq.height(), w = rec.seq.width();
        if (!rec.extras.count("u_b") || !rec.extras.count("u_s"))
            throw FormatError("sequence " + rec.seq.id +
                              " lacks uncertainty maps; run `uncertainty` first");
        if (need_labels && !rec.seq.labels)
            throw DataError("sequence " + rec.seq.id + " has no labels");
        for (int t = 0; t < T; t += frame_stride) {
            SegSample s;
            s.id = rec.seq.id + "/t" + std::to_string(t);
            s.image = normalize(rec.seq.frames[std::size_t(t)]);
            if (zero_maps) {
                s.u_b = Grid(h, w);
                s.u_s = Grid(h, w);
            } else {
                s.u_b = tensor_frame(rec.extras.at("u_b"), t, h, w, "u_b");
                s.u_s = tensor_frame(rec.extras.at("u_s"), t, h, w, "u_s");
            }
            if (rec.seq.labels) s.labels = (*rec.seq.labels)[std::size_t(t)];
            s.pixel_spacing[0] = rec.seq.pixel_spacing[0];
            s.pixel_spacing[1] = rec.seq.pixel_spacing[1];
            s.slice_thickness = rec.seq.slice_thickness;
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace

void cmd_train_seg(const RunConfig& config, const std::string& run_dir) {
    require_artifact(maps_dir(run_dir, "train") / "manifest.json",
                     "training bundle with uncertainty maps", "uncertainty");
    const Bundle train = load_bundle(maps_dir(run_dir, "train").string());
    for (const std::string& variant : config.variants) {
        const bool zero_maps = (variant == "baseline");
        const auto samples =
            seg_samples_from_bundle(train, config.seg_frame_stride, zero_maps, true);

        SegHyper hyper = config.seg_hyper;
        hyper.seed = mix_seed(hyper.seed, fnv1a64(variant));
        DualEncoderUNet net = train_seg(samples, config.seg, hyper);
        save_seg_checkpoint((fs::path(run_dir) / "seg" / variant / "init").string(), net);

        SghmcConfig sampler = config.seg_sampler;
        sampler.seed = mix_seed(sampler.seed, fnv1a64(variant));
        SegEnsemble ens = sghmc_sample_seg(net, samples, sampler);
        save_seg_ensemble((fs::path(run_dir) / "seg" / variant / "ensemble").string(), ens);
    }
    write_provenance(run_dir, "train-seg", config);
}

void cmd_predict(const RunConfig& config, const std::string& run_dir) {
    require_artifact(maps_dir(run_dir, "test") / "manifest.json",
                     "test bundle with uncertainty maps", "uncertainty");
    const Bundle test = load_bundle(maps_dir(run_dir, "test").string());
    for (const std::string& variant : config.variants) {
        const fs::path seg_dir = fs::path(run_dir) / "seg" / variant;
        require_artifact(seg_dir / "ensemble" / "index.json",
                         "segmentation ensemble (" + variant + ")", "train-seg");
        SegEnsemble ens = load_seg_ensemble((seg_dir / "ensemble").string());
        const bool zero_maps = (variant == "baseline");
        const int C = ens.samples[0].config().num_classes;

        Bundle out = test;
        std::string csv = "case_id,phase,frame,class,mean_volume_ml,sigma_v_ml\n";
        for (SequenceRecord& rec : out.records) {
            const int T = rec.seq.num_frames(), h = rec.seq.height(), w = rec.seq.width();
            TensorData pred;
            pred.shape = {T, h, w};
            pred.data.assign(std::size_t(T) * h * w, 0.0f);
            TensorData sigma;
            sigma.shape = {T, C};
            sigma.data.assign(std::size_t(T) * C, 0.0f);
            json pred_frames = json::array();

            for (const auto& [phase, t] : phase_frames(config, rec)) {
                const Grid image = normalize(rec.seq.frames[std::size_t(t)]);
                const Grid ub = zero_maps ? Grid(h, w)
                                          : tensor_frame(rec.extras.at("u_b"), t, h, w, "u_b");
                const Grid us = zero_maps ? Grid(h, w)
                                          : tensor_frame(rec.extras.at("u_s"), t, h, w, "u_s");
                const SegResult res = ensemble_predict(ens.samples, image, ub, us,
                                                       rec.seq.pixel_spacing,
                                                       rec.seq.slice_thickness);
                // argmax of the ensemble-mean probability
                const int hw = h * w;
                for (int i = 0; i < hw; ++i) {
                    int best = 0;
                    double bv = res.mean_prob.v[std::size_t(i)];
                    for (int cc = 1; cc < C; ++cc)
                        if (res.mean_prob.v[std::size_t(cc) * hw + i] > bv) {
                            bv = res.mean_prob.v[std::size_t(cc) * hw + i];
                            best = cc;
                        }
                    pred.data[std::size_t(t) * hw + i] = float(best);
                }
                for (int cc = 0; cc < C; ++cc) {
                    sigma.data[std::size_t(t) * C + cc] = float(res.sigma_v_ml[std::size_t(cc)]);
                    double mean_vol = 0.0;
                    for (const auto& vols : res.volumes_ml) mean_vol += vols[std::size_t(cc)];
                    mean_vol /= double(res.volumes_ml.size());
                    csv += rec.seq.id + "," + phase + "," + std::to_string(t) + "," +
                           std::to_string(cc) + "," + fmt6(mean_vol) + "," +
                           fmt6(res.sigma_v_ml[std::size_t(cc)]) + "\n";
                }
                pred_frames.push_back(t);
            }
            rec.extras["pred_masks"] = std::move(pred);
            rec.extras["sigma_v"] = std::move(sigma);
            rec.attrs["pred_frames"] = pred_frames;
        }
        const fs::path pred_dir = fs::path(run_dir) / "pred" / variant;
        save_bundle(pred_dir.string(), out);
        std::ofstream vout(pred_dir / "volumes.csv");
        vout << csv;
        if (!vout) throw FormatError("cannot write " + (pred_dir / "volumes.csv").string());
    }
    write_provenance(run_dir, "predict", config);
}

namespace {

Region region_from_tag(const std::string& tag) {
    if (tag == "base") return Region::kBase;
    if (tag == "apex") return Region::kApex;
    return Region::kMid;
}

LabelMap mask_from_tensor(const TensorData& t, int frame, int h, int w, const std::string& name) {
    const Grid g = tensor_frame(t, frame, h, w, name);
    LabelMap m(h, w);
    for (std::size_t i = 0; i < g.v.size(); ++i) m.v[i] = std::uint8_t(g.v[i]);
    return m;
}

}  // namespace

void cmd_evaluate(const RunConfig& config, const std::string& run_dir) {
    require_artifact(data_dir(run_dir, "test") / "manifest.json", "test data bundle", "phantom");
    const Bundle gt = load_bundle(data_dir(run_dir, "test").string());

    std::vector<EvalCase> cases;
    for (const std::string& variant : config.variants) {
        const fs::path pred_dir = fs::path(run_dir) / "pred" / variant;
        require_artifact(pred_dir / "manifest.json", "predictions (" + variant + ")", "predict");
        const Bundle pred = load_bundle(pred_dir.string());
        for (const SequenceRecord& rec : pred.records) {
            const SequenceRecord* gt_rec = gt.find(rec.seq.id);
            if (!gt_rec) throw DataError("prediction for unknown sequence " + rec.seq.id);
            const int h = rec.seq.height(), w = rec.seq.width();
            for (const auto& [phase, t] : phase_frames(config, rec)) {
                const LabelMap pm =
                    mask_from_tensor(rec.extras.at("pred_masks"), t, h, w, "pred_masks");
                const LabelMap gm =
                    mask_from_tensor(gt_rec->extras.at("gt_masks"), t, h, w, "gt_masks");
                EvalCase ec;
                ec.method = variant;
                ec.region = region_from_tag(rec.seq.region_tag);
                ec.phase = phase;
                ec.case_id = rec.seq.id + "/t" + std::to_string(t);
                for (int c = 0; c < kNumClasses; ++c)
                    ec.dice_per_class.push_back(dice(pm, gm, c));
                const TensorData& sig = rec.extras.at("sigma_v");
                for (int c = 0; c < sig.shape[1]; ++c)
                    ec.sigma_v_ml.push_back(double(sig.data[std::size_t(t) * sig.shape[1] + c]));
                cases.push_back(std::move(ec));
            }
        }
    }

    std::vector<MethodComparison> comparisons;
    for (std::size_t a = 0; a < config.variants.size(); ++a) {
        for (std::size_t b = a + 1; b < config.variants.size(); ++b) {
            for (int c = 1; c < kNumClasses; ++c) {
                try {
                    comparisons.push_back(
                        compare_methods(cases, config.variants[a], config.variants[b], c));
                } catch (const StatsError&) {
                    // too few informative pairs for this class; leave it out
                }
            }
        }
    }

    fs::create_directories(fs::path(run_dir) / "eval");
    write_eval_csv((fs::path(run_dir) / "eval" / "report.csv").string(), cases, comparisons);
    write_provenance(run_dir, "evaluate", config);
}

void run_command(const std::string& name, const RunConfig& config, const std::string& run_dir) {
    if (name == "phantom") return cmd_phantom(config, run_dir);
    if (name == "train-reg") return cmd_train_reg(config, run_dir);
    if (name == "sample-posterior") return cmd_sample_posterior(config, run_dir);
    if (name == "uncertainty") return cmd_uncertainty(config, run_dir);
    if (name == "train-seg") return cmd_train_seg(config, run_dir);
    if (name == "predict") return cmd_predict(config, run_dir);
    if (name == "evaluate") return cmd_evaluate(config, run_dir);
    throw ConfigError("unknown command: " + name);
}

}  // namespace lotseg
