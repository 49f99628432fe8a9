#include "lotseg/posterior.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace lotseg {

void validate_sampler(const SghmcConfig& c) {
    if (c.num_samples < 2) throw ContractError("sampler: num_samples must be >= 2");
    if (c.step_size < 0 || c.friction < 0 || c.friction > 1 || c.noise_scale < 0)
        throw ConfigError("sampler: step_size, noise_scale >= 0 and friction in [0,1] required");
    if (c.burn_in < 0 || c.thinning < 0 || c.batch_size <= 0)
        throw ConfigError("sampler: burn_in, thinning >= 0 and batch_size > 0 required");
}

void sghmc_chain(const std::vector<ParamView>& params, const SghmcConfig& cfg,
                 const std::function<double(Rng&)>& grad_step,
                 const std::function<void(int)>& collect) {
    validate_sampler(cfg);
    Rng rng(cfg.seed);
    Rng batch_rng = rng.fork(1);
    Rng noise_rng = rng.fork(2);
    std::vector<double> vel(total_params(params), 0.0);
    const double noise_sd = cfg.noise_scale * std::sqrt(2.0 * cfg.friction * cfg.step_size);

    long step = 0;
    auto do_step = [&]() {
        const double loss = grad_step(batch_rng);
        if (!std::isfinite(loss))
            throw SamplerError("sghmc: non-finite loss at step " + std::to_string(step));
        std::size_t off = 0;
        for (const auto& p : params) {
            for (std::size_t i = 0; i < p.n; ++i) {
                double& v = vel[off + i];
                v = (1.0 - cfg.friction) * v - cfg.step_size * p.grad[i];
                if (noise_sd > 0) v += noise_sd * noise_rng.normal();
                p.value[i] += v;
            }
            off += p.n;
        }
        ++step;
    };

    for (int i = 0; i < cfg.burn_in; ++i) do_step();
    for (int s = 0; s < cfg.num_samples; ++s) {
        for (int i = 0; i < cfg.thinning; ++i) do_step();
        collect(s);
    }
}

FlowEnsemble sghmc_sample(const FlowUNet& init, const std::vector<FramePair>& data,
                          const SghmcConfig& config, double lambda) {
    if (data.empty()) throw ConfigError("sghmc_sample: empty dataset");
    FlowEnsemble ens;
    ens.sampler = config;

    FlowUNet net = init;
    const std::vector<ParamView> params = net.params();

    auto batch_loss_grad = [&](Rng& rng) {
        for (const auto& p : params) std::fill(p.grad, p.grad + p.n, 0.0);
        const int B = std::min<int>(config.batch_size, int(data.size()));
        double loss = 0.0;
        for (int b = 0; b < B; ++b) {
            const FramePair& pair = data[std::size_t(rng.integer(0, std::int64_t(data.size()) - 1))];
            const Field flow = net.forward(pair.source, pair.target, true);
            loss += reg_loss(flow, pair.source, pair.target, lambda);
            Field d_flow(flow.h, flow.w);
            reg_loss_backward(flow, pair.source, pair.target, lambda, d_flow);
            for (double& g : d_flow.v) g /= double(B);
            net.backward(d_flow);
        }
        return loss / double(B);
    };

    // held-out sanity batch: fixed leading pairs, used only for diagnostics
    const std::size_t n_eval = std::min<std::size_t>(8, data.size());
    auto heldout_loss = [&](FlowUNet& m) {
        double loss = 0.0;
        for (std::size_t i = 0; i < n_eval; ++i) {
            const Field flow = m.forward(data[i].source, data[i].target, false);
            loss += reg_loss(flow, data[i].source, data[i].target, lambda);
        }
        return loss / double(n_eval);
    };
    FlowUNet init_copy = init;
    ens.init_heldout_loss = heldout_loss(init_copy);

    sghmc_chain(params, config, batch_loss_grad, [&](int) {
        ens.samples.push_back(net);
        ens.sample_heldout_loss.push_back(heldout_loss(net));
    });
    return ens;
}

Grid u_s_map(const Field& field, const Grid& source, const Grid& target) {
    if (!source.same_shape(target)) throw ContractError("u_s_map: shape mismatch");
    const Grid warped = warp(source, field);
    Grid out(source.h, source.w);
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        const double d = warped.v[i] - target.v[i];
        out.v[i] = d * d;
    }
    return out;
}

Grid u_b_map(const std::vector<Field>& flows) {
    if (flows.size() < 2) throw ContractError("u_b_map: at least 2 fields required");
    const int h = flows[0].h, w = flows[0].w;
    for (const Field& f : flows)
        if (f.h != h || f.w != w) throw ContractError("u_b_map: shape mismatch across ensemble");
    const double inv_m = 1.0 / double(flows.size());
    Grid out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double my = 0, mx = 0;
            for (const Field& f : flows) {
                my += f.dy(y, x);
                mx += f.dx(y, x);
            }
            my *= inv_m;
            mx *= inv_m;
            double vy = 0, vx = 0;
            for (const Field& f : flows) {
                vy += (f.dy(y, x) - my) * (f.dy(y, x) - my);
                vx += (f.dx(y, x) - mx) * (f.dx(y, x) - mx);
            }
            out.at(y, x) = std::sqrt(vy * inv_m + vx * inv_m);
        }
    }
    return out;
}

Grid minmax_normalize(const Grid& g) {
    double lo = g.v[0], hi = g.v[0];
    for (double x : g.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    Grid out(g.h, g.w);
    if (hi <= lo) return out;
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < g.v.size(); ++i) out.v[i] = (g.v[i] - lo) * inv;
    return out;
}

UncertaintyMaps compute_uncertainty(FlowEnsemble& ensemble, const FramePair& pair) {
    if (ensemble.samples.size() < 2) throw ContractError("compute_uncertainty: M >= 2 required");
    std::vector<Field> flows;
    flows.reserve(ensemble.samples.size());
    for (FlowUNet& member : ensemble.samples) flows.push_back(predict_flow(member, pair));

    Field mean_field(flows[0].h, flows[0].w);
    for (const Field& f : flows)
        for (std::size_t i = 0; i < f.v.size(); ++i) mean_field.v[i] += f.v[i];
    for (double& x : mean_field.v) x /= double(flows.size());

    UncertaintyMaps maps;
    maps.pair_id = pair.pair_id;
    maps.u_b = minmax_normalize(u_b_map(flows));
    maps.u_s = minmax_normalize(u_s_map(mean_field, pair.source, pair.target));
    quantize_f32(maps.u_b);
    quantize_f32(maps.u_s);
    return maps;
}

void save_flow_ensemble(const std::string& path, FlowEnsemble& ensemble) {
    fs::create_directories(path);
    nlohmann::json index;
    index["version"] = "v1";
    index["kind"] = "flow_ensemble";
    index["sampler"] = {{"step_size", ensemble.sampler.step_size},
                        {"friction", ensemble.sampler.friction},
                        {"noise_scale", ensemble.sampler.noise_scale},
                        {"burn_in", ensemble.sampler.burn_in},
                        {"thinning", ensemble.sampler.thinning},
                        {"num_samples", ensemble.sampler.num_samples},
                        {"batch_size", ensemble.sampler.batch_size},
                        {"seed", ensemble.sampler.seed}};
    index["members"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ensemble.samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "member_%02zu", i);
        save_flow_checkpoint((fs::path(path) / name).string(), ensemble.samples[i]);
        index["members"].push_back(name);
    }
    std::ofstream out(fs::path(path) / "index.json");
    out << index.dump(2) << "\n";
    if (!out) throw FormatError("cannot write ensemble index in " + path);
}

FlowEnsemble load_flow_ensemble(const std::string& path) {
    std::ifstream in(fs::path(path) / "index.json");
    if (!in) throw FormatError("missing ensemble index: " + path);
    nlohmann::json index;
    try {
        in >> index;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed ensemble index in " + path + ": " + e.what());
    }
    if (index.value("version", "") != "v1") throw FormatError("unknown ensemble version in " + path);
    FlowEnsemble ens;
    const auto& s = index["sampler"];
    ens.sampler.step_size = s.value("step_size", 1e-4);
    ens.sampler.friction = s.value("friction", 0.05);
    ens.sampler.noise_scale = s.value("noise_scale", 1.0);
    ens.sampler.burn_in = s.value("burn_in", 200);
    ens.sampler.thinning = s.value("thinning", 100);
    ens.sampler.num_samples = s.value("num_samples", 10);
    ens.sampler.batch_size = s.value("batch_size", 8);
    ens.sampler.seed = s.value("seed", std::uint64_t(0));
    for (const auto& name : index.at("members"))
        ens.samples.push_back(load_flow_checkpoint((fs::path(path) / name.get<std::string>()).string()));
    if (ens.samples.size() < 2) throw FormatError("ensemble in " + path + " has fewer than 2 members");
    return ens;
}

}  // namespace lotseg
