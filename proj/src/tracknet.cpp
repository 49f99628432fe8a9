#include "lotseg/tracknet.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace lotseg {

namespace {

constexpr double kLeakySlope = 0.1;

Fmap field_to_fmap(const Field& f) {
    Fmap m(2, f.h, f.w);
    for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x) {
            m.at(0, y, x) = f.dy(y, x);
            m.at(1, y, x) = f.dx(y, x);
        }
    return m;
}

Field fmap_to_field(const Fmap& m) {
    Field f(m.h, m.w);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            f.dy(y, x) = m.at(0, y, x);
            f.dx(y, x) = m.at(1, y, x);
        }
    return f;
}

void add_inplace(Fmap& a, const Fmap& b) {
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

}  // namespace

FlowUNet::FlowUNet(const FlowNetConfig& config, Rng rng) : cfg_(config) {
    if (cfg_.levels < 2) throw ConfigError("FlowUNet: levels must be >= 2");
    if (cfg_.base_width < 1) throw ConfigError("FlowUNet: base_width must be >= 1");
    const int L = cfg_.levels;
    for (int l = 0; l < L; ++l) {
        const int in_c = (l == 0) ? 2 : width(l - 1);
        enc_a_.emplace_back(in_c, width(l), 3);
        enc_b_.emplace_back(width(l), width(l), 3);
    }
    for (int l = 0; l < L - 1; ++l) {
        pool_.emplace_back();
        up_.emplace_back();
        dec_a_.emplace_back(width(l) + width(l + 1), width(l), 3);
        dec_b_.emplace_back(width(l), width(l), 3);
    }
    head_ = Conv2d(width(0), 2, 1);
    act_.assign(std::size_t(2 * L + 2 * (L - 1)), LeakyReLU(kLeakySlope));
    for (auto& c : enc_a_) c.init_he(rng);
    for (auto& c : enc_b_) c.init_he(rng);
    for (auto& c : dec_a_) c.init_he(rng);
    for (auto& c : dec_b_) c.init_he(rng);
    head_.init_zero();
}

Field FlowUNet::forward(const Grid& source, const Grid& target, bool cache) {
    if (!source.same_shape(target)) throw ContractError("FlowUNet: source/target shape mismatch");
    const int L = cfg_.levels;
    const int div = 1 << (L - 1);
    if (source.h % div || source.w % div)
        throw ContractError("FlowUNet: image size must be divisible by 2^(levels-1)");
    if (!cache) {
        FlowUNet tmp = *this;  // keep this call free of side effects
        return tmp.forward(source, target, true);
    }
    Fmap cur = stack_channels({&source, &target});
    std::vector<Fmap> skip((std::size_t(L)));
    int ai = 0;
    for (int l = 0; l < L; ++l) {
        cur = act_[std::size_t(ai++)].forward(enc_a_[std::size_t(l)].forward(cur));
        cur = act_[std::size_t(ai++)].forward(enc_b_[std::size_t(l)].forward(cur));
        skip[std::size_t(l)] = cur;
        if (l < L - 1) cur = pool_[std::size_t(l)].forward(cur);
    }
    for (int l = L - 2; l >= 0; --l) {
        cur = up_[std::size_t(l)].forward(cur);
        cur = concat_channels(skip[std::size_t(l)], cur);
        cur = act_[std::size_t(ai++)].forward(dec_a_[std::size_t(l)].forward(cur));
        cur = act_[std::size_t(ai++)].forward(dec_b_[std::size_t(l)].forward(cur));
    }
    return fmap_to_field(head_.forward(cur));
}

void FlowUNet::backward(const Field& d_field) {
    const int L = cfg_.levels;
    Fmap d = head_.backward(field_to_fmap(d_field));
    std::vector<Fmap> d_skip((std::size_t(L)));
    for (int l = 0; l <= L - 2; ++l) {
        // activation indices for decoder level l (decoder ran from L-2 down to l)
        const int base = 2 * L + 2 * (L - 2 - l);
        d = dec_b_[std::size_t(l)].backward(act_[std::size_t(base + 1)].backward(d));
        d = dec_a_[std::size_t(l)].backward(act_[std::size_t(base)].backward(d));
        Fmap ds, du;
        split_channels(d, width(l), ds, du);
        d_skip[std::size_t(l)] = std::move(ds);
        d = up_[std::size_t(l)].backward(du);
    }
    for (int l = L - 1; l >= 0; --l) {
        Fmap g = (l == L - 1) ? std::move(d) : pool_[std::size_t(l)].backward(d);
        if (l < L - 1) add_inplace(g, d_skip[std::size_t(l)]);
        g = enc_b_[std::size_t(l)].backward(act_[std::size_t(2 * l + 1)].backward(g));
        g = enc_a_[std::size_t(l)].backward(act_[std::size_t(2 * l)].backward(g));
        d = std::move(g);
    }
}

std::vector<ParamView> FlowUNet::params() {
    std::vector<ParamView> out;
    for (auto& c : enc_a_) c.collect(out);
    for (auto& c : enc_b_) c.collect(out);
    for (auto& c : dec_a_) c.collect(out);
    for (auto& c : dec_b_) c.collect(out);
    head_.collect(out);
    return out;
}

std::size_t FlowUNet::param_count() { return total_params(params()); }

void validate_hyper(const TrackerHyper& hyper) {
    if (hyper.lambda < 0) throw ConfigError("tracker: lambda must be >= 0");
    if (hyper.learning_rate < 0) throw ConfigError("tracker: learning_rate must be >= 0");
    if (hyper.epochs <= 0 || hyper.batch_size <= 0)
        throw ConfigError("tracker: epochs and batch_size must be positive");
}

std::vector<FramePair> make_training_pairs(const std::vector<CineSequence>& seqs, int delta_t) {
    std::vector<FramePair> pairs;
    for (const CineSequence& seq : seqs) {
        for (int t = 0; t < seq.num_frames(); ++t) {
            FramePair p = frame_pair(seq, t, delta_t);
            p.source = normalize(p.source);
            p.target = normalize(p.target);
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

Field predict_flow(FlowUNet& net, const FramePair& pair) {
    return net.forward(pair.source, pair.target, false);
}

FlowUNet train_tracker(const std::vector<FramePair>& data, const FlowNetConfig& config,
                       const TrackerHyper& hyper, std::vector<double>* epoch_loss) {
    if (data.empty()) throw ConfigError("train_tracker: empty dataset");
    validate_hyper(hyper);
    Rng rng(hyper.seed);
    FlowUNet net(config, rng.fork(0));
    Adam opt(net.params(), hyper.learning_rate);

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng erng = rng.fork(std::uint64_t(epoch) + 1);
        erng.shuffle(order);
        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(hyper.batch_size)) {
            const std::size_t end = std::min(order.size(), start + std::size_t(hyper.batch_size));
            opt.zero_grad();
            const double inv_batch = 1.0 / double(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const FramePair& p = data[order[i]];
                const Field flow = net.forward(p.source, p.target, true);
                const double loss = reg_loss(flow, p.source, p.target, hyper.lambda);
                if (!std::isfinite(loss))
                    throw TrainingError("train_tracker: non-finite loss at epoch " +
                                        std::to_string(epoch));
                sum += loss;
                Field d_flow(flow.h, flow.w);
                reg_loss_backward(flow, p.source, p.target, hyper.lambda, d_flow);
                for (double& g : d_flow.v) g *= inv_batch;
                net.backward(d_flow);
            }
            opt.step();
        }
        if (epoch_loss) epoch_loss->push_back(sum / double(order.size()));
    }
    return net;
}

void write_params_f32(const std::string& path, std::vector<ParamView> params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    for (const auto& p : params)
        for (std::size_t i = 0; i < p.n; ++i) {
            const float x = float(p.value[i]);
            out.write(reinterpret_cast<const char*>(&x), sizeof(float));
        }
    if (!out) throw FormatError("short write: " + path);
}

void read_params_f32(const std::string& path, std::vector<ParamView> params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("missing parameter file: " + path);
    in.seekg(0, std::ios::end);
    const std::size_t bytes = std::size_t(in.tellg());
    const std::size_t want = total_params(params) * sizeof(float);
    if (bytes != want)
        throw FormatError("parameter file " + path + ": expected " + std::to_string(want) +
                          " bytes, got " + std::to_string(bytes));
    in.seekg(0);
    for (const auto& p : params)
        for (std::size_t i = 0; i < p.n; ++i) {
            float x = 0;
            in.read(reinterpret_cast<char*>(&x), sizeof(float));
            p.value[i] = double(x);
        }
}

void save_flow_checkpoint(const std::string& path, FlowUNet& net) {
    fs::create_directories(path);
    nlohmann::json desc;
    desc["version"] = "v1";
    desc["kind"] = "flow";
    desc["levels"] = net.config().levels;
    desc["base_width"] = net.config().base_width;
    desc["param_count"] = net.param_count();
    std::ofstream out(fs::path(path) / "descriptor.json");
    out << desc.dump(2) << "\n";
    if (!out) throw FormatError("cannot write descriptor in " + path);
    write_params_f32((fs::path(path) / "params.f32").string(), net.params());
}

FlowUNet load_flow_checkpoint(const std::string& path) {
    std::ifstream in(fs::path(path) / "descriptor.json");
    if (!in) throw FormatError("missing checkpoint descriptor: " + path);
    nlohmann::json desc;
    try {
        in >> desc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed descriptor in " + path + ": " + e.what());
    }
    if (desc.value("version", "") != "v1") throw FormatError("unknown checkpoint version in " + path);
    if (desc.value("kind", "") != "flow") throw FormatError(path + ": not a flow checkpoint");
    FlowNetConfig cfg;
    cfg.levels = desc.at("levels").get<int>();
    cfg.base_width = desc.at("base_width").get<int>();
    FlowUNet net(cfg, Rng(0));
    if (desc.contains("param_count") && desc["param_count"].get<std::size_t>() != net.param_count())
        throw FormatError(path + ": parameter count does not match descriptor");
    read_params_f32((fs::path(path) / "params.f32").string(), net.params());
    return net;
}

}  // namespace lotseg
