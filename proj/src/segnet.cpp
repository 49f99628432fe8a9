#include "lotseg/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace lotseg {

namespace {

Fmap slice_channels(const Fmap& x, int start, int count) {
    Fmap out(count, x.h, x.w);
    const std::size_t hw = std::size_t(x.h) * x.w;
    std::copy(x.v.begin() + long(std::size_t(start) * hw),
              x.v.begin() + long(std::size_t(start + count) * hw), out.v.begin());
    return out;
}

void add_inplace(Fmap& a, const Fmap& b) {
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

}  // namespace

void validate_config(const DualEncoderConfig& c) {
    if (c.levels < 2) throw ConfigError("segnet: levels must be >= 2");
    if (c.num_classes < 2) throw ConfigError("segnet: num_classes must be >= 2");
    if (c.base_width < 1) throw ConfigError("segnet: base_width must be >= 1");
    if (c.fusion_kernel < 1 || c.fusion_kernel % 2 == 0)
        throw ConfigError("segnet: fusion_kernel must be odd and >= 1");
    if (c.uncertainty_channels < 1) throw ConfigError("segnet: uncertainty_channels must be >= 1");
}

DualEncoderUNet::DualEncoderUNet(const DualEncoderConfig& config, Rng rng) : cfg_(config) {
    validate_config(config);
    const int L = cfg_.levels;
    for (int l = 0; l < L; ++l) {
        const int img_in = (l == 0) ? 1 : width(l - 1);
        const int phi_in = (l == 0) ? cfg_.uncertainty_channels : width(l - 1);
        img_a_.emplace_back(img_in, width(l), 3);
        img_b_.emplace_back(width(l), width(l), 3);
        phi_a_.emplace_back(phi_in, width(l), 3);
        phi_b_.emplace_back(width(l), width(l), 3);
    }
    for (int l = 0; l < L - 1; ++l) {
        img_pool_.emplace_back();
        phi_pool_.emplace_back();
        up_.emplace_back();
        const int skip_c = cfg_.fuse_phi_skips ? 2 * width(l) : width(l);
        dec_a_.emplace_back(skip_c + width(l + 1), width(l), 3);
        dec_b_.emplace_back(width(l), width(l), 3);
    }
    fuse_ = Conv2d(2 * width(L - 1), width(L - 1), cfg_.fusion_kernel);
    head_ = Conv2d(width(0), cfg_.num_classes, 1);
    act_.assign(std::size_t(4 * L + 1 + 2 * (L - 1)), LeakyReLU(0.1));
    for (auto* block : {&img_a_, &img_b_, &phi_a_, &phi_b_, &dec_a_, &dec_b_})
        for (auto& c : *block) c.init_he(rng);
    fuse_.init_he(rng);
    head_.init_he(rng);
}

Fmap DualEncoderUNet::forward(const Grid& image, const Grid& u_b, const Grid& u_s, bool cache,
                              bool zero_phi) {
    if (!image.same_shape(u_b) || !image.same_shape(u_s))
        throw ContractError("DualEncoderUNet: image/uncertainty shape mismatch");
    const int L = cfg_.levels;
    const int div = 1 << (L - 1);
    if (image.h % div || image.w % div)
        throw ContractError("DualEncoderUNet: image size must be divisible by 2^(levels-1)");
    if (!cache) {
        DualEncoderUNet tmp = *this;
        return tmp.forward(image, u_b, u_s, true, zero_phi);
    }
    zero_phi_cached_ = zero_phi;

    std::vector<Fmap> img_skip((std::size_t(L))), phi_skip((std::size_t(L)));
    Fmap cur = grid_to_fmap(image);
    for (int l = 0; l < L; ++l) {
        cur = act_[std::size_t(2 * l)].forward(img_a_[std::size_t(l)].forward(cur));
        cur = act_[std::size_t(2 * l + 1)].forward(img_b_[std::size_t(l)].forward(cur));
        img_skip[std::size_t(l)] = cur;
        if (l < L - 1) cur = img_pool_[std::size_t(l)].forward(cur);
    }
    Fmap phi = (cfg_.uncertainty_channels == 2) ? stack_channels({&u_b, &u_s})
                                                : stack_channels({&u_b});
    for (int l = 0; l < L; ++l) {
        phi = act_[std::size_t(2 * L + 2 * l)].forward(phi_a_[std::size_t(l)].forward(phi));
        phi = act_[std::size_t(2 * L + 2 * l + 1)].forward(phi_b_[std::size_t(l)].forward(phi));
        phi_skip[std::size_t(l)] = phi;
        if (l < L - 1) phi = phi_pool_[std::size_t(l)].forward(phi);
    }
    if (zero_phi) {
        for (Fmap& f : phi_skip) std::fill(f.v.begin(), f.v.end(), 0.0);
    }

    Fmap fused = concat_channels(img_skip[std::size_t(L - 1)], phi_skip[std::size_t(L - 1)]);
    fused = act_[std::size_t(4 * L)].forward(fuse_.forward(fused));

    Fmap d = fused;
    for (int l = L - 2; l >= 0; --l) {
        d = up_[std::size_t(l)].forward(d);
        Fmap skip = cfg_.fuse_phi_skips
                        ? concat_channels(img_skip[std::size_t(l)], phi_skip[std::size_t(l)])
                        : img_skip[std::size_t(l)];
        d = concat_channels(skip, d);
        const int base = 4 * L + 1 + 2 * (L - 2 - l);
        d = act_[std::size_t(base)].forward(dec_a_[std::size_t(l)].forward(d));
        d = act_[std::size_t(base + 1)].forward(dec_b_[std::size_t(l)].forward(d));
    }
    return head_.forward(d);
}

void DualEncoderUNet::backward(const Fmap& d_logits) {
    const int L = cfg_.levels;
    Fmap d = head_.backward(d_logits);
    std::vector<Fmap> d_img_skip((std::size_t(L))), d_phi_skip((std::size_t(L)));
    for (int l = 0; l <= L - 2; ++l) {
        const int base = 4 * L + 1 + 2 * (L - 2 - l);
        d = dec_b_[std::size_t(l)].backward(act_[std::size_t(base + 1)].backward(d));
        d = dec_a_[std::size_t(l)].backward(act_[std::size_t(base)].backward(d));
        d_img_skip[std::size_t(l)] = slice_channels(d, 0, width(l));
        int off = width(l);
        if (cfg_.fuse_phi_skips) {
            d_phi_skip[std::size_t(l)] = slice_channels(d, off, width(l));
            off += width(l);
        }
        d = up_[std::size_t(l)].backward(slice_channels(d, off, width(l + 1)));
    }
    d = fuse_.backward(act_[std::size_t(4 * L)].backward(d));
    Fmap d_b_img = slice_channels(d, 0, width(L - 1));
    Fmap d_b_phi = slice_channels(d, width(L - 1), width(L - 1));
    d_img_skip[std::size_t(L - 1)] = std::move(d_b_img);
    d_phi_skip[std::size_t(L - 1)] = std::move(d_b_phi);

    if (zero_phi_cached_)
        for (Fmap& f : d_phi_skip)
            if (f.c) std::fill(f.v.begin(), f.v.end(), 0.0);

    // image encoder
    Fmap dc;
    for (int l = L - 1; l >= 0; --l) {
        Fmap g = (l == L - 1) ? std::move(d_img_skip[std::size_t(l)])
                              : img_pool_[std::size_t(l)].backward(dc);
        if (l < L - 1) add_inplace(g, d_img_skip[std::size_t(l)]);
        g = img_b_[std::size_t(l)].backward(act_[std::size_t(2 * l + 1)].backward(g));
        g = img_a_[std::size_t(l)].backward(act_[std::size_t(2 * l)].backward(g));
        dc = std::move(g);
    }
    // uncertainty encoder
    for (int l = L - 1; l >= 0; --l) {
        Fmap g = (l == L - 1) ? std::move(d_phi_skip[std::size_t(l)])
                              : phi_pool_[std::size_t(l)].backward(dc);
        if (l < L - 1 && d_phi_skip[std::size_t(l)].c) add_inplace(g, d_phi_skip[std::size_t(l)]);
        g = phi_b_[std::size_t(l)].backward(act_[std::size_t(2 * L + 2 * l + 1)].backward(g));
        g = phi_a_[std::size_t(l)].backward(act_[std::size_t(2 * L + 2 * l)].backward(g));
        dc = std::move(g);
    }
}

std::vector<ParamView> DualEncoderUNet::params() {
    std::vector<ParamView> out;
    for (auto* block : {&img_a_, &img_b_, &phi_a_, &phi_b_, &dec_a_, &dec_b_})
        for (auto& c : *block) c.collect(out);
    fuse_.collect(out);
    head_.collect(out);
    return out;
}

std::size_t DualEncoderUNet::param_count() { return total_params(params()); }

Fmap seg_forward(DualEncoderUNet& net, const Grid& image, const Grid& u_b, const Grid& u_s) {
    return softmax_channels(net.forward(image, u_b, u_s, false));
}

namespace {

void validate_samples(const std::vector<SegSample>& data, bool need_labels) {
    if (data.empty()) throw DataError("segnet: empty dataset");
    for (const SegSample& s : data) {
        if (!s.image.same_shape(s.u_b) || !s.image.same_shape(s.u_s))
            throw DataError("segnet: sample " + s.id + " missing or misshaped uncertainty maps");
        if (need_labels && (s.labels.h != s.image.h || s.labels.w != s.image.w))
            throw DataError("segnet: sample " + s.id + " missing labels");
    }
}

}  // namespace

DualEncoderUNet train_seg(const std::vector<SegSample>& data, const DualEncoderConfig& config,
                          const SegHyper& hyper, std::vector<double>* epoch_loss) {
    validate_samples(data, true);
    if (hyper.learning_rate < 0 || hyper.epochs <= 0 || hyper.batch_size <= 0)
        throw ConfigError("segnet: bad hyperparameters");
    Rng rng(hyper.seed);
    DualEncoderUNet net(config, rng.fork(0));
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
                const SegSample& s = data[order[i]];
                const Fmap logits = net.forward(s.image, s.u_b, s.u_s, true);
                Fmap d_logits;
                const double loss = ce_dice_loss(logits, s.labels, &d_logits);
                if (!std::isfinite(loss))
                    throw TrainingError("train_seg: non-finite loss at epoch " + std::to_string(epoch));
                sum += loss;
                for (double& g : d_logits.v) g *= inv_batch;
                net.backward(d_logits);
            }
            opt.step();
        }
        if (epoch_loss) epoch_loss->push_back(sum / double(order.size()));
    }
    return net;
}

SegEnsemble sghmc_sample_seg(const DualEncoderUNet& init, const std::vector<SegSample>& data,
                             const SghmcConfig& config) {
    validate_samples(data, true);
    SegEnsemble ens;
    ens.sampler = config;

    DualEncoderUNet net = init;
    const std::vector<ParamView> params = net.params();

    auto batch_loss_grad = [&](Rng& rng) {
        for (const auto& p : params) std::fill(p.grad, p.grad + p.n, 0.0);
        const int B = std::min<int>(config.batch_size, int(data.size()));
        double loss = 0.0;
        for (int b = 0; b < B; ++b) {
            const SegSample& s = data[std::size_t(rng.integer(0, std::int64_t(data.size()) - 1))];
            const Fmap logits = net.forward(s.image, s.u_b, s.u_s, true);
            Fmap d_logits;
            loss += ce_dice_loss(logits, s.labels, &d_logits);
            for (double& g : d_logits.v) g /= double(B);
            net.backward(d_logits);
        }
        return loss / double(B);
    };

    const std::size_t n_eval = std::min<std::size_t>(8, data.size());
    auto heldout_loss = [&](DualEncoderUNet& m) {
        double loss = 0.0;
        for (std::size_t i = 0; i < n_eval; ++i) {
            const Fmap logits = m.forward(data[i].image, data[i].u_b, data[i].u_s, false);
            loss += ce_dice_loss(logits, data[i].labels, nullptr);
        }
        return loss / double(n_eval);
    };
    DualEncoderUNet init_copy = init;
    ens.init_heldout_loss = heldout_loss(init_copy);

    sghmc_chain(params, config, batch_loss_grad, [&](int) {
        ens.samples.push_back(net);
        ens.sample_heldout_loss.push_back(heldout_loss(net));
    });
    return ens;
}

double volume_ml(const LabelMap& mask, int class_id, const double pixel_spacing[2],
                 double slice_thickness) {
    if (class_id < 0 || class_id >= kNumClasses)
        throw ContractError("volume_ml: unknown class id " + std::to_string(class_id));
    if (pixel_spacing[0] <= 0 || pixel_spacing[1] <= 0 || slice_thickness <= 0)
        throw ContractError("volume_ml: spacing and thickness must be > 0");
    std::size_t count = 0;
    for (std::uint8_t c : mask.v)
        if (int(c) == class_id) ++count;
    return double(count) * pixel_spacing[0] * pixel_spacing[1] * slice_thickness / 1000.0;
}

SegResult ensemble_predict(std::vector<DualEncoderUNet>& members, const Grid& image,
                           const Grid& u_b, const Grid& u_s, const double pixel_spacing[2],
                           double slice_thickness) {
    if (members.size() < 2) throw ContractError("ensemble_predict: M >= 2 required");
    for (const auto& m : members)
        if (!(m.config() == members[0].config()))
            throw ContractError("ensemble_predict: heterogeneous member configs");
    const int C = members[0].config().num_classes;
    const std::size_t M = members.size();

    SegResult res;
    res.mean_prob = Fmap(C, image.h, image.w);
    const int hw = image.h * image.w;
    for (DualEncoderUNet& m : members) {
        const Fmap prob = seg_forward(m, image, u_b, u_s);
        for (std::size_t i = 0; i < prob.v.size(); ++i) res.mean_prob.v[i] += prob.v[i];

        LabelMap mask(image.h, image.w);
        for (int i = 0; i < hw; ++i) {
            int best = 0;
            double bv = prob.v[std::size_t(i)];
            for (int c = 1; c < C; ++c)
                if (prob.v[std::size_t(c) * hw + i] > bv) {
                    bv = prob.v[std::size_t(c) * hw + i];
                    best = c;
                }
            mask.v[std::size_t(i)] = std::uint8_t(best);
        }
        std::vector<double> vols(std::size_t(C), 0.0);
        for (int c = 0; c < C; ++c) vols[std::size_t(c)] = volume_ml(mask, c, pixel_spacing, slice_thickness);
        res.volumes_ml.push_back(std::move(vols));
        res.member_masks.push_back(std::move(mask));
    }
    for (double& x : res.mean_prob.v) x /= double(M);

    res.sigma_v_ml.assign(std::size_t(C), 0.0);
    for (int c = 0; c < C; ++c) {
        double mean = 0.0;
        for (const auto& vols : res.volumes_ml) mean += vols[std::size_t(c)];
        mean /= double(M);
        double var = 0.0;
        for (const auto& vols : res.volumes_ml)
            var += (vols[std::size_t(c)] - mean) * (vols[std::size_t(c)] - mean);
        res.sigma_v_ml[std::size_t(c)] = std::sqrt(var / double(M));
    }
    return res;
}

namespace {

nlohmann::json seg_config_json(const DualEncoderConfig& c) {
    return {{"levels", c.levels},
            {"base_width", c.base_width},
            {"num_classes", c.num_classes},
            {"fusion_kernel", c.fusion_kernel},
            {"uncertainty_channels", c.uncertainty_channels},
            {"fuse_phi_skips", c.fuse_phi_skips}};
}

DualEncoderConfig seg_config_from_json(const nlohmann::json& j) {
    DualEncoderConfig c;
    c.levels = j.at("levels").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.fusion_kernel = j.at("fusion_kernel").get<int>();
    c.uncertainty_channels = j.at("uncertainty_channels").get<int>();
    c.fuse_phi_skips = j.at("fuse_phi_skips").get<bool>();
    return c;
}

}  // namespace

void save_seg_checkpoint(const std::string& path, DualEncoderUNet& net) {
    fs::create_directories(path);
    nlohmann::json desc;
    desc["version"] = "v1";
    desc["kind"] = "seg";
    desc["config"] = seg_config_json(net.config());
    desc["param_count"] = net.param_count();
    std::ofstream out(fs::path(path) / "descriptor.json");
    out << desc.dump(2) << "\n";
    if (!out) throw FormatError("cannot write descriptor in " + path);
    write_params_f32((fs::path(path) / "params.f32").string(), net.params());
}

DualEncoderUNet load_seg_checkpoint(const std::string& path) {
    std::ifstream in(fs::path(path) / "descriptor.json");
    if (!in) throw FormatError("missing checkpoint descriptor: " + path);
    nlohmann::json desc;
    try {
        in >> desc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed descriptor in " + path + ": " + e.what());
    }
    if (desc.value("version", "") != "v1") throw FormatError("unknown checkpoint version in " + path);
    if (desc.value("kind", "") != "seg") throw FormatError(path + ": not a seg checkpoint");
    DualEncoderUNet net(seg_config_from_json(desc.at("config")), Rng(0));
    if (desc.contains("param_count") && desc["param_count"].get<std::size_t>() != net.param_count())
        throw FormatError(path + ": parameter count does not match descriptor");
    read_params_f32((fs::path(path) / "params.f32").string(), net.params());
    return net;
}

void save_seg_ensemble(const std::string& path, SegEnsemble& ensemble) {
    fs::create_directories(path);
    nlohmann::json index;
    index["version"] = "v1";
    index["kind"] = "seg_ensemble";
    index["members"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ensemble.samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "member_%02zu", i);
        save_seg_checkpoint((fs::path(path) / name).string(), ensemble.samples[i]);
        index["members"].push_back(name);
    }
    std::ofstream out(fs::path(path) / "index.json");
    out << index.dump(2) << "\n";
    if (!out) throw FormatError("cannot write ensemble index in " + path);
}

SegEnsemble load_seg_ensemble(const std::string& path) {
    std::ifstream in(fs::path(path) / "index.json");
    if (!in) throw FormatError("missing ensemble index: " + path);
    nlohmann::json index;
    try {
        in >> index;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed ensemble index in " + path + ": " + e.what());
    }
    if (index.value("version", "") != "v1") throw FormatError("unknown ensemble version in " + path);
    SegEnsemble ens;
    for (const auto& name : index.at("members"))
        ens.samples.push_back(load_seg_checkpoint((fs::path(path) / name.get<std::string>()).string()));
    if (ens.samples.size() < 2) throw FormatError("ensemble in " + path + " has fewer than 2 members");
    return ens;
}

}  // namespace lotseg
