#include "bitforge/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "bitforge/error.hpp"
#include "bitforge/rng.hpp"

namespace bitforge {

using nlohmann::json;

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::depthwise_conv: return "depthwise_conv";
        case LayerKind::fc: return "fc";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "conv") return LayerKind::conv;
    if (s == "depthwise_conv") return LayerKind::depthwise_conv;
    if (s == "fc") return LayerKind::fc;
    throw config_error("unknown layer kind '" + s + "'");
}

ModelGraph::ModelGraph(std::vector<Layer> layers) : layers_(std::move(layers)) {
    validate();
}

void ModelGraph::validate() const {
    if (layers_.empty()) throw config_error("model has no layers");
    for (int k = 0; k < num_layers(); ++k) {
        const LayerSpec& s = layers_[k].spec;
        if (s.index != k) throw config_error("layer index mismatch at position " + std::to_string(k));
        if (s.kind == LayerKind::fc) {
            if (s.s_kernel != 1 || s.s_stride != 0)
                throw config_error("fc layer " + std::to_string(k) + " must have kernel=1, stride=0");
        } else {
            if (s.s_stride != 1 && s.s_stride != 2)
                throw config_error("conv layer " + std::to_string(k) + " stride must be 1 or 2");
            if (s.s_kernel < 1 || s.s_kernel % 2 == 0)
                throw config_error("conv layer " + std::to_string(k) + " kernel must be odd");
        }
        if (s.kind == LayerKind::depthwise_conv && s.c_out != s.c_in)
            throw config_error("depthwise layer " + std::to_string(k) + " needs c_out == c_in");
        if ((s.i_dw == 1) != (s.kind == LayerKind::depthwise_conv))
            throw config_error("i_dw inconsistent at layer " + std::to_string(k));
        if (s.n_params != s.analytic_params())
            throw config_error("n_params mismatch at layer " + std::to_string(k));
        if (layers_[k].weights.size() != static_cast<size_t>(s.weight_count()))
            throw config_error("weight buffer size mismatch at layer " + std::to_string(k));
        if (layers_[k].bias.size() != static_cast<size_t>(s.has_bias ? s.c_out : 0))
            throw config_error("bias buffer size mismatch at layer " + std::to_string(k));

        if (k + 1 < num_layers()) {
            const LayerSpec& nx = layers_[k + 1].spec;
            long long out_ch = s.c_out;
            long long out_side = s.out_feat();
            if (nx.kind == LayerKind::fc) {
                long long flat = s.kind == LayerKind::fc ? out_ch : out_ch * out_side * out_side;
                if (nx.c_in != flat || nx.s_feat != flat)
                    throw config_error("shape mismatch between layers " + std::to_string(k) +
                                       " and " + std::to_string(k + 1));
            } else {
                if (s.kind == LayerKind::fc)
                    throw config_error("conv layer after fc is not supported (layer " +
                                       std::to_string(k + 1) + ")");
                if (nx.c_in != out_ch || nx.s_feat != out_side)
                    throw config_error("shape mismatch between layers " + std::to_string(k) +
                                       " and " + std::to_string(k + 1));
            }
        }
    }
}

long long ModelGraph::total_params() const {
    long long total = 0;
    for (const Layer& l : layers_) total += l.spec.n_params;
    return total;
}

namespace {

LayerSpec spec_from_json(int index, const json& j) {
    LayerSpec s;
    s.index = index;
    s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    s.c_in = j.at("c_in").get<int>();
    s.c_out = j.at("c_out").get<int>();
    s.s_kernel = j.at("kernel").get<int>();
    s.s_stride = j.at("stride").get<int>();
    s.s_feat = j.at("feat").get<int>();
    s.has_bias = j.value("bias", false);
    s.i_dw = s.kind == LayerKind::depthwise_conv ? 1 : 0;
    s.n_params = s.analytic_params();
    return s;
}

void random_init(Layer& l, Rng& rng) {
    int fan_in = l.spec.kind == LayerKind::fc
                     ? l.spec.c_in
                     : (l.spec.kind == LayerKind::depthwise_conv
                            ? l.spec.s_kernel * l.spec.s_kernel
                            : l.spec.c_in * l.spec.s_kernel * l.spec.s_kernel);
    double bound = std::sqrt(6.0 / std::max(1, fan_in));
    for (double& w : l.weights) w = rng.uniform(-bound, bound);
    for (double& b : l.bias) b = 0.0;
}

std::vector<float> read_f32_file(const std::filesystem::path& path, size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open weights file " + path.string());
    std::vector<float> buf(expected);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected * 4));
    if (static_cast<size_t>(in.gcount()) != expected * 4)
        throw config_error("weights file " + path.string() + " too short");
    return buf;
}

}  // namespace

ModelGraph ModelGraph::load(const std::filesystem::path& model_json) {
    std::ifstream in(model_json);
    if (!in) throw config_error("cannot open model file " + model_json.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("model file " + model_json.string() + ": " + e.what());
    }
    if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty())
        throw config_error("model file needs a non-empty 'layers' array");

    std::vector<Layer> layers;
    int idx = 0;
    for (const json& lj : j["layers"]) {
        Layer l;
        l.spec = spec_from_json(idx++, lj);
        l.weights.assign(static_cast<size_t>(l.spec.weight_count()), 0.0);
        if (l.spec.has_bias) l.bias.assign(static_cast<size_t>(l.spec.c_out), 0.0);
        layers.push_back(std::move(l));
    }

    std::string init = j.value("init", "random:0");
    if (init.rfind("random:", 0) == 0) {
        uint64_t seed = std::stoull(init.substr(7));
        Rng rng(seed);
        for (Layer& l : layers) random_init(l, rng);
    } else if (init.rfind("weights:", 0) == 0) {
        std::filesystem::path sidecar = model_json.parent_path() / init.substr(8);
        std::ifstream sin(sidecar);
        if (!sin) throw config_error("cannot open weights sidecar " + sidecar.string());
        json sj;
        sin >> sj;
        std::filesystem::path bin = sidecar.parent_path() / sj.at("file").get<std::string>();
        size_t total = sj.at("total").get<size_t>();
        std::vector<float> raw = read_f32_file(bin, total);
        const json& offs = sj.at("layers");
        if (offs.size() != layers.size())
            throw config_error("weights sidecar layer count mismatch");
        for (size_t k = 0; k < layers.size(); ++k) {
            size_t off = offs[k].at("offset").get<size_t>();
            size_t cnt = offs[k].at("count").get<size_t>();
            if (cnt != layers[k].weights.size() + layers[k].bias.size())
                throw config_error("weights sidecar count mismatch at layer " + std::to_string(k));
            for (size_t i = 0; i < layers[k].weights.size(); ++i)
                layers[k].weights[i] = raw[off + i];
            for (size_t i = 0; i < layers[k].bias.size(); ++i)
                layers[k].bias[i] = raw[off + layers[k].weights.size() + i];
        }
    } else {
        throw config_error("model init must be 'random:<seed>' or 'weights:<path>'");
    }
    return ModelGraph(std::move(layers));
}

void ModelGraph::save(const std::filesystem::path& dir, const std::string& stem) const {
    std::filesystem::create_directories(dir);
    json j;
    j["layers"] = json::array();
    for (const Layer& l : layers_) {
        j["layers"].push_back({{"kind", to_string(l.spec.kind)},
                               {"c_in", l.spec.c_in},
                               {"c_out", l.spec.c_out},
                               {"kernel", l.spec.s_kernel},
                               {"stride", l.spec.s_stride},
                               {"feat", l.spec.s_feat},
                               {"bias", l.spec.has_bias}});
    }
    j["init"] = "weights:" + stem + "_weights.json";

    json sidecar;
    sidecar["file"] = stem + "_weights.bin";
    sidecar["dtype"] = "f32le";
    sidecar["layout"] = "layer-major, weights then bias per layer";
    sidecar["layers"] = json::array();
    std::vector<float> raw;
    for (const Layer& l : layers_) {
        size_t off = raw.size();
        for (double w : l.weights) raw.push_back(static_cast<float>(w));
        for (double b : l.bias) raw.push_back(static_cast<float>(b));
        sidecar["layers"].push_back(
            {{"index", l.spec.index}, {"offset", off}, {"count", raw.size() - off}});
    }
    sidecar["total"] = raw.size();

    std::ofstream mj(dir / (stem + ".json"));
    mj << j.dump(2) << "\n";
    std::ofstream sj(dir / (stem + "_weights.json"));
    sj << sidecar.dump(2) << "\n";
    std::ofstream bin(dir / (stem + "_weights.bin"), std::ios::binary);
    bin.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace {

// Zero-padded copy of one input channel; lets the conv kernels run without
// bounds checks in their inner loops.
void pad_channel(const Tensor& in, int n, int ci, int p, std::vector<double>& buf) {
    const int f = in.h;
    const int pf = f + 2 * p;
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int y = 0; y < f; ++y) {
        const double* src = &in.v[((static_cast<size_t>(n) * in.c + ci) * f + y) * f];
        std::copy(src, src + f, buf.begin() + static_cast<size_t>(y + p) * pf + p);
    }
}

void conv_forward(const LayerSpec& s, const std::vector<double>& w, const std::vector<double>& b,
                  const Tensor& in, Tensor& out) {
    const int k = s.s_kernel, stride = s.s_stride, p = s.pad();
    const int of = s.out_feat();
    const bool dw = s.kind == LayerKind::depthwise_conv;

    if (k == 1 && stride == 1 && !dw) {
        // Pointwise: a channel-mixing matmul over positions.
        const int hw = of * of;
        for (int n = 0; n < in.n; ++n) {
            for (int co = 0; co < s.c_out; ++co) {
                double* o = &out.v[(static_cast<size_t>(n) * s.c_out + co) * hw];
                double bias = b.empty() ? 0.0 : b[co];
                for (int i = 0; i < hw; ++i) o[i] = bias;
                const double* wrow = &w[static_cast<size_t>(co) * s.c_in];
                for (int ci = 0; ci < s.c_in; ++ci) {
                    const double* x = &in.v[(static_cast<size_t>(n) * s.c_in + ci) * hw];
                    double wv = wrow[ci];
                    for (int i = 0; i < hw; ++i) o[i] += wv * x[i];
                }
            }
        }
        return;
    }

    const int pf = s.s_feat + 2 * p;
    std::vector<double> pad(static_cast<size_t>(pf) * pf);
    for (int n = 0; n < in.n; ++n) {
        for (int ci_outer = 0; ci_outer < (dw ? s.c_out : s.c_in); ++ci_outer) {
            pad_channel(in, n, ci_outer, p, pad);
            const int co_lo = dw ? ci_outer : 0;
            const int co_hi = dw ? ci_outer + 1 : s.c_out;
            for (int co = co_lo; co < co_hi; ++co) {
                const double* wptr = dw ? &w[static_cast<size_t>(co) * k * k]
                                        : &w[(static_cast<size_t>(co) * s.c_in + ci_outer) * k * k];
                double* obase = &out.v[(static_cast<size_t>(n) * s.c_out + co) *
                                       static_cast<size_t>(of) * of];
                const bool first = dw || ci_outer == 0;
                for (int y = 0; y < of; ++y) {
                    double* orow = obase + static_cast<size_t>(y) * of;
                    if (first) {
                        double bias = b.empty() ? 0.0 : b[co];
                        for (int x = 0; x < of; ++x) orow[x] = bias;
                    }
                    for (int u = 0; u < k; ++u) {
                        const double* prow = &pad[static_cast<size_t>(y * stride + u) * pf];
                        for (int v = 0; v < k; ++v) {
                            double wv = wptr[u * k + v];
                            const double* px = prow + v;
                            for (int x = 0; x < of; ++x) orow[x] += wv * px[x * stride];
                        }
                    }
                }
            }
        }
    }
}

void conv_backward(const LayerSpec& s, const std::vector<double>& w, const Tensor& in,
                   const Tensor& dout, std::vector<double>& dw_grad, std::vector<double>& db_grad,
                   Tensor* din) {
    const int k = s.s_kernel, stride = s.s_stride, p = s.pad();
    const int of = s.out_feat();
    const bool dw = s.kind == LayerKind::depthwise_conv;
    const int hw = of * of;

    if (!db_grad.empty()) {
        for (int n = 0; n < in.n; ++n)
            for (int co = 0; co < s.c_out; ++co) {
                const double* g = &dout.v[(static_cast<size_t>(n) * s.c_out + co) * hw];
                double acc = 0.0;
                for (int i = 0; i < hw; ++i) acc += g[i];
                db_grad[co] += acc;
            }
    }

    if (k == 1 && stride == 1 && !dw) {
        for (int n = 0; n < in.n; ++n) {
            for (int co = 0; co < s.c_out; ++co) {
                const double* g = &dout.v[(static_cast<size_t>(n) * s.c_out + co) * hw];
                const double* wrow = &w[static_cast<size_t>(co) * s.c_in];
                double* grow = &dw_grad[static_cast<size_t>(co) * s.c_in];
                for (int ci = 0; ci < s.c_in; ++ci) {
                    const double* x = &in.v[(static_cast<size_t>(n) * s.c_in + ci) * hw];
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += g[i] * x[i];
                    grow[ci] += acc;
                    if (din) {
                        double* dx = &din->v[(static_cast<size_t>(n) * s.c_in + ci) * hw];
                        double wv = wrow[ci];
                        for (int i = 0; i < hw; ++i) dx[i] += wv * g[i];
                    }
                }
            }
        }
        return;
    }

    const int pf = s.s_feat + 2 * p;
    std::vector<double> pad(static_cast<size_t>(pf) * pf);
    std::vector<double> dpad(static_cast<size_t>(pf) * pf);
    for (int n = 0; n < in.n; ++n) {
        for (int ci = 0; ci < (dw ? s.c_out : s.c_in); ++ci) {
            pad_channel(in, n, ci, p, pad);
            if (din) std::fill(dpad.begin(), dpad.end(), 0.0);
            const int co_lo = dw ? ci : 0;
            const int co_hi = dw ? ci + 1 : s.c_out;
            for (int co = co_lo; co < co_hi; ++co) {
                size_t wbase = dw ? static_cast<size_t>(co) * k * k
                                  : (static_cast<size_t>(co) * s.c_in + ci) * k * k;
                const double* gbase =
                    &dout.v[(static_cast<size_t>(n) * s.c_out + co) * static_cast<size_t>(hw)];
                for (int y = 0; y < of; ++y) {
                    const double* grow = gbase + static_cast<size_t>(y) * of;
                    for (int u = 0; u < k; ++u) {
                        const double* prow = &pad[static_cast<size_t>(y * stride + u) * pf];
                        double* dprow = din ? &dpad[static_cast<size_t>(y * stride + u) * pf]
                                            : nullptr;
                        for (int v = 0; v < k; ++v) {
                            const double* px = prow + v;
                            double acc = 0.0;
                            for (int x = 0; x < of; ++x) acc += grow[x] * px[x * stride];
                            dw_grad[wbase + u * k + v] += acc;
                            if (din) {
                                double wv = w[wbase + u * k + v];
                                double* dpx = dprow + v;
                                for (int x = 0; x < of; ++x) dpx[x * stride] += wv * grow[x];
                            }
                        }
                    }
                }
            }
            if (din) {
                for (int y = 0; y < s.s_feat; ++y) {
                    const double* src = &dpad[static_cast<size_t>(y + p) * pf + p];
                    double* dst = &din->v[((static_cast<size_t>(n) * din->c + ci) *
                                           static_cast<size_t>(s.s_feat) + y) * s.s_feat];
                    for (int x = 0; x < s.s_feat; ++x) dst[x] += src[x];
                }
            }
        }
    }
}

void fc_forward(const LayerSpec& s, const std::vector<double>& w, const std::vector<double>& b,
                const Tensor& in, Tensor& out) {
    for (int n = 0; n < in.n; ++n) {
        const double* xi = in.sample(n);
        for (int o = 0; o < s.c_out; ++o) {
            const double* wrow = &w[static_cast<size_t>(o) * s.c_in];
            double acc = b.empty() ? 0.0 : b[o];
            for (int i = 0; i < s.c_in; ++i) acc += wrow[i] * xi[i];
            out.at(n, o, 0, 0) = acc;
        }
    }
}

void fc_backward(const LayerSpec& s, const std::vector<double>& w, const Tensor& in,
                 const Tensor& dout, std::vector<double>& dw_grad, std::vector<double>& db_grad,
                 Tensor* din) {
    for (int n = 0; n < in.n; ++n) {
        const double* xi = in.sample(n);
        double* dxi = din ? din->sample(n) : nullptr;
        for (int o = 0; o < s.c_out; ++o) {
            double g = dout.at(n, o, 0, 0);
            if (!db_grad.empty()) db_grad[o] += g;
            const double* wrow = &w[static_cast<size_t>(o) * s.c_in];
            double* grow = &dw_grad[static_cast<size_t>(o) * s.c_in];
            for (int i = 0; i < s.c_in; ++i) {
                grow[i] += g * xi[i];
                if (dxi) dxi[i] += g * wrow[i];
            }
        }
    }
}

Tensor output_shape(const LayerSpec& s, int batch) {
    if (s.kind == LayerKind::fc) return Tensor(batch, s.c_out, 1, 1);
    int of = s.out_feat();
    return Tensor(batch, s.c_out, of, of);
}

Tensor reshape_for(const LayerSpec& s, Tensor t) {
    if (s.kind == LayerKind::fc && (t.c != s.c_in || t.h != 1 || t.w != 1)) {
        Tensor r(t.n, s.c_in, 1, 1);
        r.v = std::move(t.v);
        return r;
    }
    return t;
}

struct PassState {
    std::vector<Tensor> inputs;    // post-quant input to each layer
    std::vector<Tensor> pre_relu;  // raw layer output before ReLU
    Tensor out;
};

// Shared by forward() and loss_and_grads(). Quantized weight copies are kept
// so the backward pass differentiates against the same values (STE).
PassState run_forward(const ModelGraph& model, const Tensor& batch, const QuantHook* hook,
                      std::vector<std::vector<double>>* quant_weights, bool keep_state,
                      std::vector<Tensor>* capture) {
    const auto& layers = model.layers();
    const LayerSpec& first = layers.front().spec;
    bool shape_ok = first.kind == LayerKind::fc
                        ? batch.features() == first.c_in
                        : batch.c == first.c_in && batch.h == first.s_feat && batch.w == first.s_feat;
    if (!shape_ok) throw config_error("input batch shape does not match first layer");

    PassState st;
    Tensor cur = batch;
    for (int k = 0; k < model.num_layers(); ++k) {
        const Layer& l = layers[k];
        cur = reshape_for(l.spec, std::move(cur));

        const std::vector<double>* w = &l.weights;
        std::vector<double> wq;
        if (hook) {
            wq = l.weights;
            hook->apply_weights(k, wq);
            w = &wq;
        }
        if (keep_state) st.inputs.push_back(cur);

        Tensor out = output_shape(l.spec, cur.n);
        if (l.spec.kind == LayerKind::fc)
            fc_forward(l.spec, *w, l.bias, cur, out);
        else
            conv_forward(l.spec, *w, l.bias, cur, out);

        bool last = k + 1 == model.num_layers();
        if (keep_state) st.pre_relu.push_back(out);
        if (!last) {
            for (double& x : out.v) x = x > 0.0 ? x : 0.0;
            if (capture) capture->push_back(out);
            if (hook) hook->apply_activations(k, out.v);
        } else if (capture) {
            capture->push_back(out);  // logits, unrectified and unquantized
        }
        if (quant_weights) quant_weights->push_back(hook ? std::move(wq) : l.weights);
        cur = std::move(out);
    }
    st.out = std::move(cur);
    return st;
}

}  // namespace

ForwardResult forward(const ModelGraph& model, const Tensor& batch, const QuantHook* hook,
                      bool capture_activations) {
    ForwardResult res;
    std::vector<Tensor>* cap = capture_activations ? &res.activations : nullptr;
    PassState st = run_forward(model, batch, hook, nullptr, false, cap);
    res.logits = std::move(st.out);
    return res;
}

double loss_and_grads(const ModelGraph& model, const Tensor& batch,
                      const std::vector<int>& labels, std::vector<LayerGrads>& grads,
                      const QuantHook* hook) {
    std::vector<std::vector<double>> wq;
    PassState st = run_forward(model, batch, hook, &wq, true, nullptr);
    const int n = batch.n;
    const int classes = model.layers().back().spec.c_out;

    grads.assign(model.num_layers(), {});
    for (int k = 0; k < model.num_layers(); ++k) {
        grads[k].weights.assign(model.layers()[k].weights.size(), 0.0);
        grads[k].bias.assign(model.layers()[k].bias.size(), 0.0);
    }

    // Softmax cross-entropy, mean over the batch.
    Tensor dcur(st.out.n, st.out.c, st.out.h, st.out.w);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* logits = st.out.sample(i);
        double mx = *std::max_element(logits, logits + classes);
        double denom = 0.0;
        for (int c = 0; c < classes; ++c) denom += std::exp(logits[c] - mx);
        double logz = std::log(denom) + mx;
        loss += logz - logits[labels[i]];
        double* d = dcur.sample(i);
        for (int c = 0; c < classes; ++c)
            d[c] = (std::exp(logits[c] - logz) - (c == labels[i] ? 1.0 : 0.0)) / n;
    }
    loss /= n;

    for (int k = model.num_layers() - 1; k >= 0; --k) {
        const Layer& l = model.layers()[k];
        if (k + 1 < model.num_layers()) {
            // ReLU mask; activation quantization is identity on the backward path.
            for (size_t i = 0; i < dcur.v.size(); ++i)
                if (st.pre_relu[k].v[i] <= 0.0) dcur.v[i] = 0.0;
        }
        Tensor din;
        Tensor* dinp = nullptr;
        if (k > 0) {
            const Tensor& in = st.inputs[k];
            din = Tensor(in.n, in.c, in.h, in.w);
            dinp = &din;
        }
        if (l.spec.kind == LayerKind::fc)
            fc_backward(l.spec, wq[k], st.inputs[k], dcur, grads[k].weights, grads[k].bias, dinp);
        else
            conv_backward(l.spec, wq[k], st.inputs[k], dcur, grads[k].weights, grads[k].bias, dinp);
        if (k > 0) {
            // Undo the fc flatten so the mask indices line up with pre_relu.
            const Tensor& pr = st.pre_relu[k - 1];
            din.n = pr.n; din.c = pr.c; din.h = pr.h; din.w = pr.w;
            dcur = std::move(din);
        }
    }
    return loss;
}

namespace {

// Quantizes activations only; used by the once-per-epoch weight mode where
// master weights are snapped at epoch start but activations stay hooked.
class ActivationOnlyHook : public QuantHook {
public:
    explicit ActivationOnlyHook(const QuantHook& inner) : inner_(inner) {}
    void apply_weights(int, std::span<double>) const override {}
    void apply_activations(int layer, std::span<double> a) const override {
        inner_.apply_activations(layer, a);
    }

private:
    const QuantHook& inner_;
};

}  // namespace

double finetune(ModelGraph& model, const DatasetSplit& data, const TrainConfig& cfg,
                const QuantHook* hook) {
    if (cfg.epochs < 1) throw config_error("finetune needs epochs >= 1");
    if (data.count() == 0) throw config_error("finetune on empty dataset");

    std::vector<std::vector<double>> vel_w(model.num_layers()), vel_b(model.num_layers());
    for (int k = 0; k < model.num_layers(); ++k) {
        vel_w[k].assign(model.layers()[k].weights.size(), 0.0);
        vel_b[k].assign(model.layers()[k].bias.size(), 0.0);
    }

    Rng rng(cfg.shuffle_seed);
    std::vector<int> order(data.count());
    std::iota(order.begin(), order.end(), 0);

    std::optional<ActivationOnlyHook> act_only;
    if (hook && !cfg.requantize_each_step) act_only.emplace(*hook);

    double epoch_loss = 0.0;
    for (int e = 0; e < cfg.epochs; ++e) {
        if (hook && !cfg.requantize_each_step) {
            // Snap master weights to the grid once, then train float this epoch.
            for (int k = 0; k < model.num_layers(); ++k)
                hook->apply_weights(k, model.layers()[k].weights);
        }
        const QuantHook* step_hook = cfg.requantize_each_step ? hook
                                     : act_only              ? &*act_only
                                                             : nullptr;
        rng.shuffle(order);
        epoch_loss = 0.0;
        int batches = 0;
        for (int start = 0; start < data.count(); start += cfg.batch_size) {
            int stop = std::min(start + cfg.batch_size, data.count());
            Tensor xb(stop - start, data.x.c, data.x.h, data.x.w);
            std::vector<int> yb(stop - start);
            for (int i = start; i < stop; ++i) {
                std::copy(data.x.sample(order[i]), data.x.sample(order[i]) + data.x.features(),
                          xb.sample(i - start));
                yb[i - start] = data.labels[order[i]];
            }
            std::vector<LayerGrads> grads;
            double loss = loss_and_grads(model, xb, yb, grads, step_hook);
            if (!std::isfinite(loss)) throw divergence_error("training loss diverged");
            epoch_loss += loss;
            ++batches;
            if (cfg.lr == 0.0) continue;
            for (int k = 0; k < model.num_layers(); ++k) {
                Layer& l = model.layers()[k];
                for (size_t i = 0; i < l.weights.size(); ++i) {
                    vel_w[k][i] = cfg.momentum * vel_w[k][i] + grads[k].weights[i];
                    l.weights[i] -= cfg.lr * vel_w[k][i];
                }
                for (size_t i = 0; i < l.bias.size(); ++i) {
                    vel_b[k][i] = cfg.momentum * vel_b[k][i] + grads[k].bias[i];
                    l.bias[i] -= cfg.lr * vel_b[k][i];
                }
            }
        }
        epoch_loss /= std::max(1, batches);
    }
    return epoch_loss;
}

double evaluate(const ModelGraph& model, const DatasetSplit& data, const QuantHook* hook) {
    if (data.count() == 0) throw config_error("evaluate on empty dataset");
    const int chunk = 64;
    long long correct = 0;
    for (int start = 0; start < data.count(); start += chunk) {
        int stop = std::min(start + chunk, data.count());
        Tensor xb = data.x.slice(start, stop);
        Tensor logits = forward(model, xb, hook).logits;
        int classes = logits.features();
        for (int i = 0; i < logits.n; ++i) {
            const double* row = logits.sample(i);
            int arg = 0;
            for (int c = 1; c < classes; ++c)
                if (row[c] > row[arg]) arg = c;  // ties stay at the lower index
            if (arg == data.labels[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / data.count();
}

std::array<double, 10> layer_features(const ModelGraph& model, int k, StepKind step,
                                      double prev_action) {
    const LayerSpec& s = model.spec(k);
    double iwa = step == StepKind::weight ? 1.0 : 0.0;
    if (s.kind == LayerKind::fc) {
        return {static_cast<double>(k), static_cast<double>(s.c_in), static_cast<double>(s.c_out),
                1.0, 0.0, static_cast<double>(s.s_feat), static_cast<double>(s.n_params),
                0.0, iwa, prev_action};
    }
    return {static_cast<double>(k), static_cast<double>(s.c_in), static_cast<double>(s.c_out),
            static_cast<double>(s.s_kernel), static_cast<double>(s.s_stride),
            static_cast<double>(s.s_feat), static_cast<double>(s.n_params),
            static_cast<double>(s.i_dw), iwa, prev_action};
}

}  // namespace bitforge
