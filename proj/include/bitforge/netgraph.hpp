#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bitforge/tensor.hpp"

namespace bitforge {

enum class LayerKind { conv, depthwise_conv, fc };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

// Static description of one layer. For fc layers c_in/c_out carry h_in/h_out,
// s_kernel is 1, s_stride is 0 and s_feat is the input vector length.
struct LayerSpec {
    int index = 0;
    LayerKind kind = LayerKind::conv;
    int c_in = 0;
    int c_out = 0;
    int s_kernel = 1;
    int s_stride = 0;
    int s_feat = 0;
    long long n_params = 0;
    bool has_bias = false;
    int i_dw = 0;

    int pad() const { return kind == LayerKind::fc ? 0 : (s_kernel - 1) / 2; }
    // Output feature-map side length (1 for fc). Same-style padding, so
    // out = ceil(feat / stride) for the supported odd kernels.
    int out_feat() const {
        if (kind == LayerKind::fc) return 1;
        return (s_feat + 2 * pad() - s_kernel) / s_stride + 1;
    }
    long long weight_count() const {
        switch (kind) {
            case LayerKind::conv: return 1LL * c_in * c_out * s_kernel * s_kernel;
            case LayerKind::depthwise_conv: return 1LL * c_in * s_kernel * s_kernel;
            case LayerKind::fc: return 1LL * c_in * c_out;
        }
        return 0;
    }
    long long analytic_params() const { return weight_count() + (has_bias ? c_out : 0); }
};

struct Layer {
    LayerSpec spec;
    std::vector<double> weights;  // conv: [c_out][c_in][k][k]; dw: [c][k][k]; fc: [out][in]
    std::vector<double> bias;     // empty when spec.has_bias == false
};

enum class StepKind { weight, activation };

// Per-layer fake-quantization callbacks applied during the forward pass.
// Backward treats both as identity (straight-through estimator).
class QuantHook {
public:
    virtual ~QuantHook() = default;
    virtual void apply_weights(int layer, std::span<double> w) const = 0;
    virtual void apply_activations(int layer, std::span<double> a) const = 0;
};

struct DatasetSplit {
    Tensor x;
    std::vector<int> labels;
    int count() const { return x.n; }
};

struct Dataset {
    DatasetSplit train, val, calib;
    int num_classes = 10;
};

// Strictly feed-forward chain of conv / depthwise_conv / fc layers with ReLU
// after every layer except the final classifier.
class ModelGraph {
public:
    ModelGraph() = default;
    explicit ModelGraph(std::vector<Layer> layers);

    static ModelGraph load(const std::filesystem::path& model_json);
    // Writes model.json + weights.bin + weights.json (offset sidecar) into dir.
    void save(const std::filesystem::path& dir, const std::string& stem = "model") const;

    int num_layers() const { return static_cast<int>(layers_.size()); }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    const LayerSpec& spec(int k) const { return layers_[k].spec; }

    int input_channels() const { return layers_.front().spec.c_in; }
    int input_side() const { return layers_.front().spec.s_feat; }
    long long total_params() const;

    // Validates shape compatibility of the chain; throws on violation.
    void validate() const;

private:
    std::vector<Layer> layers_;
};

struct ForwardResult {
    Tensor logits;
    // Post-ReLU activations per layer, populated when capture is requested.
    std::vector<Tensor> activations;
};

ForwardResult forward(const ModelGraph& model, const Tensor& batch,
                      const QuantHook* hook = nullptr, bool capture_activations = false);

struct TrainConfig {
    int epochs = 1;
    double lr = 1e-3;
    double momentum = 0.9;
    int batch_size = 32;
    uint64_t shuffle_seed = 0;
    // When false, weights are snapped to the quantization grid once at the
    // start of each epoch instead of in every forward pass.
    bool requantize_each_step = true;
};

// One or more epochs of SGD on softmax cross-entropy. Returns the mean loss
// of the final epoch; throws divergence_error on non-finite loss.
double finetune(ModelGraph& model, const DatasetSplit& data, const TrainConfig& cfg,
                const QuantHook* hook = nullptr);

// Top-1 accuracy under argmax with ties broken toward the lower class index.
double evaluate(const ModelGraph& model, const DatasetSplit& data,
                const QuantHook* hook = nullptr);

// Raw (un-normalized) ten-dimensional observation tuple for layer k.
std::array<double, 10> layer_features(const ModelGraph& model, int k, StepKind step,
                                      double prev_action);

// Training loss and parameter gradients for one batch; used by finetune and
// exposed for gradient verification.
struct LayerGrads {
    std::vector<double> weights;
    std::vector<double> bias;
};
double loss_and_grads(const ModelGraph& model, const Tensor& batch,
                      const std::vector<int>& labels, std::vector<LayerGrads>& grads,
                      const QuantHook* hook = nullptr);

}  // namespace bitforge
