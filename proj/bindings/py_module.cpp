#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bitforge/data.hpp"
#include "bitforge/quantizer.hpp"
#include "bitforge/search.hpp"

namespace py = pybind11;
using namespace bitforge;

namespace {

Tensor tensor_from_numpy(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    auto buf = arr.request();
    if (buf.ndim != 4) throw std::invalid_argument("expected an (n, c, h, w) array");
    Tensor t(static_cast<int>(buf.shape[0]), static_cast<int>(buf.shape[1]),
             static_cast<int>(buf.shape[2]), static_cast<int>(buf.shape[3]));
    const double* ptr = static_cast<const double*>(buf.ptr);
    std::copy(ptr, ptr + t.size(), t.v.begin());
    return t;
}

py::array_t<double> numpy_from_tensor(const Tensor& t) {
    py::array_t<double> arr({t.n, t.c, t.h, t.w});
    std::copy(t.v.begin(), t.v.end(), arr.mutable_data());
    return arr;
}

BitwidthPolicy policy_from_list(const std::vector<std::pair<int, int>>& bits,
                                const std::vector<int>& pinned) {
    BitwidthPolicy p;
    for (auto [w, a] : bits) p.layers.push_back({w, a});
    p.pinned = pinned;
    p.normalize();
    return p;
}

std::vector<std::pair<int, int>> policy_to_list(const BitwidthPolicy& p) {
    std::vector<std::pair<int, int>> out;
    for (const auto& e : p.layers) out.emplace_back(e.w_bits, e.a_bits);
    return out;
}

py::dict report_to_dict(const CostReport& rep) {
    py::dict d;
    py::list layers;
    for (const LayerCost& lc : rep.layers) {
        py::dict l;
        l["layer"] = lc.layer;
        l["kind"] = to_string(lc.kind);
        l["w_bits"] = lc.w_bits;
        l["a_bits"] = lc.a_bits;
        l["macs"] = lc.macs;
        l["dram_bits"] = lc.dram_bits;
        l["t_computation"] = lc.t_computation;
        l["t_stall"] = lc.t_stall;
        l["latency"] = lc.latency;
        l["energy"] = lc.energy;
        l["intensity"] = lc.intensity;
        layers.append(l);
    }
    d["layers"] = layers;
    d["total_latency"] = rep.total_latency;
    d["total_energy"] = rep.total_energy;
    d["total_dram_bits"] = rep.total_dram_bits;
    d["total_macs"] = rep.total_macs;
    d["total_bitops"] = rep.total_bitops;
    return d;
}

Budget make_budget(const std::string& objective, double limit, const HardwareConfig& hw) {
    return Budget{objective_from_string(objective), limit, hw};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Hardware-aware mixed-precision bitwidth search";
    m.attr("__version__") = "0.1.0";

    py::class_<DatasetSplit>(m, "DatasetSplit")
        .def_property_readonly("count", &DatasetSplit::count)
        .def_property_readonly("x", [](const DatasetSplit& s) { return numpy_from_tensor(s.x); })
        .def_property_readonly("labels", [](const DatasetSplit& s) { return s.labels; });

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("train", &Dataset::train)
        .def_readonly("val", &Dataset::val)
        .def_readonly("calibration", &Dataset::calib)
        .def_readonly("num_classes", &Dataset::num_classes);

    m.def(
        "generate_dataset",
        [](uint64_t seed, int train_per_class, int val_per_class, int calib, int classes,
           int channels, int side, double noise) {
            SyntheticConfig cfg;
            cfg.seed = seed;
            cfg.train_per_class = train_per_class;
            cfg.val_per_class = val_per_class;
            cfg.calib_count = calib;
            cfg.classes = classes;
            cfg.channels = channels;
            cfg.side = side;
            cfg.noise_sd = noise;
            return generate_synthetic(cfg);
        },
        py::arg("seed") = 42, py::arg("train_per_class") = 64, py::arg("val_per_class") = 16,
        py::arg("calib") = 64, py::arg("classes") = 10, py::arg("channels") = 3,
        py::arg("side") = 32, py::arg("noise") = 0.6);
    m.def("load_dataset", &load_dataset, py::arg("dir"));
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("dir"), py::arg("seed"));

    py::class_<ModelGraph>(m, "Model")
        .def_static("load", &ModelGraph::load, py::arg("path"))
        .def("save", &ModelGraph::save, py::arg("dir"), py::arg("stem") = "model")
        .def_property_readonly("num_layers", &ModelGraph::num_layers)
        .def_property_readonly("total_params", &ModelGraph::total_params)
        .def("layer",
             [](const ModelGraph& g, int k) {
                 const LayerSpec& s = g.spec(k);
                 py::dict d;
                 d["index"] = s.index;
                 d["kind"] = to_string(s.kind);
                 d["c_in"] = s.c_in;
                 d["c_out"] = s.c_out;
                 d["kernel"] = s.s_kernel;
                 d["stride"] = s.s_stride;
                 d["feat"] = s.s_feat;
                 d["n_params"] = s.n_params;
                 d["depthwise"] = s.i_dw == 1;
                 return d;
             })
        .def("forward",
             [](const ModelGraph& g, py::array_t<double> batch) {
                 return numpy_from_tensor(forward(g, tensor_from_numpy(batch)).logits);
             })
        .def("evaluate",
             [](const ModelGraph& g, const DatasetSplit& split) { return evaluate(g, split); })
        .def("finetune",
             [](ModelGraph& g, const DatasetSplit& split, int epochs, double lr, double momentum,
                int batch_size, uint64_t seed) {
                 TrainConfig tc;
                 tc.epochs = epochs;
                 tc.lr = lr;
                 tc.momentum = momentum;
                 tc.batch_size = batch_size;
                 tc.shuffle_seed = seed;
                 return finetune(g, split, tc);
             },
             py::arg("split"), py::arg("epochs") = 1, py::arg("lr") = 1e-3,
             py::arg("momentum") = 0.9, py::arg("batch_size") = 32, py::arg("seed") = 0)
        .def("layer_features", [](const ModelGraph& g, int k, const std::string& step,
                                  double prev_action) {
            StepKind sk = step == "weight" ? StepKind::weight : StepKind::activation;
            auto f = layer_features(g, k, sk, prev_action);
            return std::vector<double>(f.begin(), f.end());
        });

    m.def(
        "linear_quantize",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> values, int bits,
           double clip, const std::string& mode) {
            QuantParams q{bits, clip,
                          mode == "symmetric" ? QuantMode::symmetric : QuantMode::non_negative};
            py::array_t<double> out(values.request().shape);
            const double* src = values.data();
            double* dst = out.mutable_data();
            for (py::ssize_t i = 0; i < values.size(); ++i) dst[i] = linear_quantize(src[i], q);
            return out;
        },
        py::arg("values"), py::arg("bits"), py::arg("clip"), py::arg("mode") = "symmetric");

    m.def(
        "calibrate_clip",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> values, int bits,
           const std::string& mode) {
            Histogram h = Histogram::build(std::span<const double>(values.data(), values.size()));
            ClipResult r = calibrate_clip(
                h, bits, mode == "symmetric" ? QuantMode::symmetric : QuantMode::non_negative);
            return py::make_tuple(r.clip, r.kl);
        },
        py::arg("values"), py::arg("bits"), py::arg("mode") = "symmetric");

    m.def(
        "kmeans_quantize",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> values, int bits,
           int iters, uint64_t seed) {
            CodebookQuant cb = kmeans_quantize(
                std::span<const double>(values.data(), values.size()), bits, iters, seed);
            py::dict d;
            d["centroids"] = cb.centroids;
            d["assignment"] = cb.assignment;
            d["sse"] = cb.sse;
            d["degenerate"] = cb.degenerate;
            return d;
        },
        py::arg("values"), py::arg("bits"), py::arg("iters") = 50, py::arg("seed") = 0);

    py::class_<HardwareConfig>(m, "HardwareConfig")
        .def_static("edge", &HardwareConfig::edge)
        .def_static("cloud", &HardwareConfig::cloud)
        .def_static("load", &HardwareConfig::load, py::arg("path"))
        .def_readwrite("name", &HardwareConfig::name)
        .def_readwrite("batch", &HardwareConfig::batch)
        .def_readwrite("pe_rows", &HardwareConfig::pe_rows)
        .def_readwrite("pe_cols", &HardwareConfig::pe_cols)
        .def_readwrite("pe_simd", &HardwareConfig::pe_simd)
        .def_readwrite("dram_bus_bits", &HardwareConfig::dram_bus_bits)
        .def_readwrite("clock_hz", &HardwareConfig::clock_hz)
        .def_readwrite("on_chip_kib", &HardwareConfig::on_chip_kib)
        .def_readwrite("e_mem_pj_per_bit", &HardwareConfig::e_mem_pj_per_bit)
        .def_readwrite("p_dynamic_w", &HardwareConfig::p_dynamic_w)
        .def_readwrite("t_overhead_us", &HardwareConfig::t_overhead_us)
        .def_readwrite("all_on_chip", &HardwareConfig::all_on_chip);

    m.def(
        "cost_report",
        [](const ModelGraph& model, const std::vector<std::pair<int, int>>& bits,
           const std::vector<int>& pinned, const HardwareConfig& hw) {
            return report_to_dict(cost_report(model, policy_from_list(bits, pinned), hw));
        },
        py::arg("model"), py::arg("bits"), py::arg("pinned"), py::arg("hw"));

    m.def(
        "roofline",
        [](const ModelGraph& model, const std::vector<std::pair<int, int>>& bits,
           const std::vector<int>& pinned, const HardwareConfig& hw) {
            BitwidthPolicy p = policy_from_list(bits, pinned);
            py::list out;
            for (int k = 0; k < model.num_layers(); ++k) {
                RooflinePoint pt =
                    roofline_point(model.spec(k), p.layers[k].w_bits, p.layers[k].a_bits, hw);
                py::dict d;
                d["layer"] = k;
                d["intensity"] = pt.intensity;
                d["attained"] = pt.attained;
                d["peak"] = pt.peak;
                d["bandwidth"] = pt.bandwidth;
                out.append(d);
            }
            return out;
        },
        py::arg("model"), py::arg("bits"), py::arg("pinned"), py::arg("hw"));

    m.def("bitops",
          [](const ModelGraph& model, const std::vector<std::pair<int, int>>& bits,
             const std::vector<int>& pinned) {
              return bitops(model, policy_from_list(bits, pinned));
          });
    m.def("model_size_bits",
          [](const ModelGraph& model, const std::vector<std::pair<int, int>>& bits,
             const std::vector<int>& pinned, bool codebook) {
              return model_size_bits(model, policy_from_list(bits, pinned), codebook);
          },
          py::arg("model"), py::arg("bits"), py::arg("pinned"), py::arg("codebook") = false);

    m.def("action_to_bits", &action_to_bits, py::arg("a"), py::arg("b_min") = kBitsMin,
          py::arg("b_max") = kBitsMax);

    m.def(
        "enforce_budget",
        [](const ModelGraph& model, const std::vector<std::pair<int, int>>& bits,
           const std::vector<int>& pinned, const std::string& objective, double limit,
           const HardwareConfig& hw) {
            BitwidthPolicy out =
                enforce_budget(model, policy_from_list(bits, pinned), make_budget(objective, limit, hw));
            py::dict d;
            d["bits"] = policy_to_list(out);
            d["infeasible"] = out.infeasible;
            return d;
        },
        py::arg("model"), py::arg("bits"), py::arg("pinned"), py::arg("objective"),
        py::arg("limit"), py::arg("hw"));

    m.def(
        "quantized_accuracy",
        [](const ModelGraph& model, const std::vector<std::pair<int, int>>& bits,
           const std::vector<int>& pinned, const Dataset& ds, int finetune_epochs, uint64_t seed) {
            BitwidthPolicy p = policy_from_list(bits, pinned);
            ModelQuantizer mq = ModelQuantizer::calibrate(model, p, ds.calib);
            ModelGraph tuned = model;
            if (finetune_epochs > 0) {
                TrainConfig tc;
                tc.epochs = finetune_epochs;
                tc.shuffle_seed = seed;
                finetune(tuned, ds.train, tc, &mq);
            }
            return evaluate(tuned, ds.val, &mq);
        },
        py::arg("model"), py::arg("bits"), py::arg("pinned"), py::arg("dataset"),
        py::arg("finetune_epochs") = 1, py::arg("seed") = 0);

    m.def(
        "search",
        [](const ModelGraph& model, const Dataset& ds, const std::string& optimizer, int episodes,
           uint64_t seed, const std::string& objective, double limit, const HardwareConfig& hw,
           const std::string& reward, int updates_per_episode) {
            SearchEnv env;
            env.model = &model;
            split_for_search(ds.train, env.finetune_split, env.reward_split);
            env.calib_split = ds.calib;
            env.seed = seed;
            env.budget = make_budget(objective, limit, hw);
            env.reward_cfg.mode = reward == "accuracy-guaranteed"
                                      ? RewardMode::accuracy_guaranteed
                                      : RewardMode::constrained;
            env.acc_origin = evaluate(model, env.reward_split);

            SearchOptions opts;
            opts.optimizer = optimizer_from_string(optimizer);
            opts.episodes = episodes;
            opts.agent.updates_per_episode = updates_per_episode;
            SearchResult res = search(env, opts);

            py::dict d;
            d["best_bits"] = policy_to_list(res.best_policy);
            d["best_reward"] = res.best_reward;
            d["best_accuracy"] = res.best_accuracy;
            d["best_cost"] = res.best_cost;
            d["infeasible"] = res.infeasible;
            d["acc_origin"] = env.acc_origin;
            py::list log;
            for (const SearchLogRow& r : res.log) {
                py::dict row;
                row["episode"] = r.episode;
                row["reward"] = r.reward;
                row["accuracy"] = r.accuracy;
                row["cost"] = r.cost;
                row["sigma"] = r.sigma;
                log.append(row);
            }
            d["log"] = log;
            return d;
        },
        py::arg("model"), py::arg("dataset"), py::arg("optimizer") = "random",
        py::arg("episodes") = 10, py::arg("seed") = 1, py::arg("objective") = "latency",
        py::arg("limit") = 0.0, py::arg("hw") = HardwareConfig::edge(),
        py::arg("reward") = "constrained", py::arg("updates_per_episode") = 5);

    py::class_<DdpgAgent>(m, "DdpgAgent")
        .def(py::init([](uint64_t seed, int hidden1, int hidden2) {
                 AgentConfig cfg;
                 cfg.seed = seed;
                 cfg.hidden1 = hidden1;
                 cfg.hidden2 = hidden2;
                 return DdpgAgent(cfg);
             }),
             py::arg("seed") = 0, py::arg("hidden1") = 400, py::arg("hidden2") = 300)
        .def("act",
             [](const DdpgAgent& a, const std::vector<double>& obs) {
                 if (obs.size() != kObsDim) throw std::invalid_argument("obs must have 10 entries");
                 return a.act(obs);
             })
        .def("explore_act",
             [](DdpgAgent& a, const std::vector<double>& obs) {
                 if (obs.size() != kObsDim) throw std::invalid_argument("obs must have 10 entries");
                 return a.explore_act(obs);
             })
        .def_property_readonly("sigma", &DdpgAgent::sigma)
        .def_property_readonly("baseline", &DdpgAgent::baseline)
        .def("save", &DdpgAgent::save)
        .def_static("load", &DdpgAgent::load_checkpoint);
}
