// Python bindings for the main operations: warping and registration losses,
// uncertainty maps, evaluation statistics, the phantom generator, and the
// pipeline commands. Images are numpy float64 arrays [H,W], displacement
// fields [H,W,2] with (dy, dx), label maps uint8 [H,W].
#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "lotseg/evalstats.hpp"
#include "lotseg/phantom.hpp"
#include "lotseg/pipeline.hpp"
#include "lotseg/posterior.hpp"
#include "lotseg/warp.hpp"

namespace py = pybind11;
using namespace lotseg;

namespace {

Grid to_grid(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ContractError("expected a 2-d array");
    Grid g(int(a.shape(0)), int(a.shape(1)));
    std::copy(a.data(), a.data() + g.v.size(), g.v.begin());
    return g;
}

py::array_t<double> from_grid(const Grid& g) {
    py::array_t<double> out({g.h, g.w});
    std::copy(g.v.begin(), g.v.end(), out.mutable_data());
    return out;
}

Field to_field(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(2) != 2) throw ContractError("expected an [H,W,2] array");
    Field f(int(a.shape(0)), int(a.shape(1)));
    std::copy(a.data(), a.data() + f.v.size(), f.v.begin());
    return f;
}

py::array_t<double> from_field(const Field& f) {
    py::array_t<double> out({f.h, f.w, 2});
    std::copy(f.v.begin(), f.v.end(), out.mutable_data());
    return out;
}

LabelMap to_labels(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ContractError("expected a 2-d uint8 array");
    LabelMap m(int(a.shape(0)), int(a.shape(1)));
    std::copy(a.data(), a.data() + m.v.size(), m.v.begin());
    return m;
}

py::array_t<std::uint8_t> from_labels(const LabelMap& m) {
    py::array_t<std::uint8_t> out({m.h, m.w});
    std::copy(m.v.begin(), m.v.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_lotseg, m) {
    m.doc() = "cine motion tracking uncertainty and segmentation core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<StatsError>(m, "StatsError", PyExc_ValueError);

    m.def("warp",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& field) {
              return from_grid(warp(to_grid(image), to_field(field)));
          },
          py::arg("image"), py::arg("field"),
          "Bilinear warp with border clamping: out[p] = image[p + field[p]].");

    m.def("grad_reg",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& field) {
              return grad_reg(to_field(field));
          },
          py::arg("field"), "Mean squared forward-difference smoothness penalty.");

    m.def("reg_loss",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& field,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& source,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& target,
             double lambda_) {
              return reg_loss(to_field(field), to_grid(source), to_grid(target), lambda_);
          },
          py::arg("field"), py::arg("source"), py::arg("target"), py::arg("lambda_") = 0.1,
          "mse(warp(source, field), target) + lambda * grad_reg(field).");

    m.def("u_s_map",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& field,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& source,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& target) {
              return from_grid(u_s_map(to_field(field), to_grid(source), to_grid(target)));
          },
          py::arg("field"), py::arg("source"), py::arg("target"),
          "Per-pixel squared warp residual (sampling-uncertainty map, unnormalized).");

    m.def("u_b_map",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& fields) {
              if (fields.ndim() != 4 || fields.shape(3) != 2)
                  throw ContractError("expected an [M,H,W,2] array of fields");
              std::vector<Field> fs;
              const int h = int(fields.shape(1)), w = int(fields.shape(2));
              const std::size_t per = std::size_t(h) * w * 2;
              for (py::ssize_t k = 0; k < fields.shape(0); ++k) {
                  Field f(h, w);
                  std::copy(fields.data() + std::size_t(k) * per,
                            fields.data() + std::size_t(k + 1) * per, f.v.begin());
                  fs.push_back(std::move(f));
              }
              return from_grid(u_b_map(fs));
          },
          py::arg("fields"),
          "Per-pixel ensemble spread: Euclidean norm of the per-component population SD.");

    m.def("minmax_normalize",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
              return from_grid(minmax_normalize(to_grid(x)));
          },
          py::arg("x"), "Affine rescale to [0,1]; constant input maps to zeros.");

    m.def("normalize",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
              return from_grid(normalize(to_grid(x)));
          },
          py::arg("x"), "Z-score intensity normalization; constant input maps to zeros.");

    m.def("dice",
          [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
             const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b,
             int class_id) { return dice(to_labels(a), to_labels(b), class_id); },
          py::arg("a"), py::arg("b"), py::arg("class_id"),
          "Dice overlap of one class; both sets empty gives 1.0.");

    m.def("wilcoxon_signed_rank",
          [](const std::vector<double>& x, const std::vector<double>& y) {
              const WilcoxonResult r = wilcoxon_signed_rank(x, y);
              py::dict d;
              d["w_plus"] = r.w_plus;
              d["w_minus"] = r.w_minus;
              d["n_nonzero"] = r.n_nonzero;
              d["p_value"] = r.p_value;
              d["exact"] = r.exact;
              return d;
          },
          py::arg("x"), py::arg("y"),
          "Two-sided paired test; exact null distribution up to 20 nonzero differences.");

    m.def("region_split",
          [](int n) {
              std::vector<std::string> out;
              for (Region r : region_split(n)) out.emplace_back(region_name(r));
              return out;
          },
          py::arg("n"), "base/mid/apex assignment for n stacked slices.");

    m.def("volume_ml",
          [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& mask,
             int class_id, std::pair<double, double> pixel_spacing, double slice_thickness) {
              const double sp[2] = {pixel_spacing.first, pixel_spacing.second};
              return volume_ml(to_labels(mask), class_id, sp, slice_thickness);
          },
          py::arg("mask"), py::arg("class_id"), py::arg("pixel_spacing"),
          py::arg("slice_thickness"), "Class volume in mL from one slice.");

    m.def("generate_phantom",
          [](int height, int width, int num_frames, int num_sequences, double motion_amplitude,
             bool incoherence, double label_noise, double noise_sigma, double texture_amp,
             std::uint64_t seed) {
              PhantomConfig c;
              c.height = height;
              c.width = width;
              c.num_frames = num_frames;
              c.num_sequences = num_sequences;
              c.motion_amplitude = motion_amplitude;
              c.incoherence_flag = incoherence;
              c.label_noise = label_noise;
              c.noise_sigma = noise_sigma;
              c.texture_amp = texture_amp;
              c.seed = seed;
              auto [seqs, truths] = generate_phantom(c);
              py::list out;
              for (std::size_t i = 0; i < seqs.size(); ++i) {
                  const CineSequence& s = seqs[i];
                  const PhantomTruth& t = truths[i];
                  const int T = s.num_frames();
                  py::array_t<double> frames({T, s.height(), s.width()});
                  py::array_t<std::uint8_t> labels({T, s.height(), s.width()});
                  py::array_t<std::uint8_t> masks({T, s.height(), s.width()});
                  py::array_t<double> flows({T, s.height(), s.width(), 2});
                  const std::size_t hw = std::size_t(s.height()) * s.width();
                  for (int k = 0; k < T; ++k) {
                      std::copy(s.frames[std::size_t(k)].v.begin(),
                                s.frames[std::size_t(k)].v.end(),
                                frames.mutable_data() + std::size_t(k) * hw);
                      std::copy((*s.labels)[std::size_t(k)].v.begin(),
                                (*s.labels)[std::size_t(k)].v.end(),
                                labels.mutable_data() + std::size_t(k) * hw);
                      std::copy(t.masks[std::size_t(k)].v.begin(),
                                t.masks[std::size_t(k)].v.end(),
                                masks.mutable_data() + std::size_t(k) * hw);
                      std::copy(t.flows[std::size_t(k)].v.begin(),
                                t.flows[std::size_t(k)].v.end(),
                                flows.mutable_data() + std::size_t(k) * hw * 2);
                  }
                  py::dict rec;
                  rec["id"] = s.id;
                  rec["frames"] = frames;
                  rec["labels"] = labels;
                  rec["gt_masks"] = masks;
                  rec["gt_flows"] = flows;
                  rec["incoherence_mask"] = from_labels(t.incoherence_mask);
                  rec["blob_incoherent"] = t.blob_incoherent;
                  rec["region_tag"] = s.region_tag;
                  out.append(rec);
              }
              return out;
          },
          py::arg("height") = 64, py::arg("width") = 64, py::arg("num_frames") = 12,
          py::arg("num_sequences") = 4, py::arg("motion_amplitude") = 2.5,
          py::arg("incoherence") = true, py::arg("label_noise") = 0.0,
          py::arg("noise_sigma") = 0.01, py::arg("texture_amp") = 1.0, py::arg("seed") = 1,
          "Synthetic cine sequences with ground-truth masks, flows and incoherence masks.");

    m.def("run_command",
          [](const std::string& name, const std::string& config_path, const std::string& out_dir,
             long long master_seed) {
              const RunConfig c = load_run_config(config_path, master_seed);
              run_command(name, c, out_dir);
          },
          py::arg("name"), py::arg("config_path"), py::arg("out_dir"),
          py::arg("master_seed") = -1,
          "Run one pipeline stage (phantom, train-reg, sample-posterior, uncertainty, "
          "train-seg, predict, evaluate) against a run directory.");
}
