#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bitforge/netgraph.hpp"
#include "bitforge/policy.hpp"

namespace bitforge {

enum class QuantMode { symmetric, non_negative };

// Linear quantization grid: scale s = clip / (2^(bits-1) - 1) in both modes;
// symmetric covers [-clip, clip], non-negative [0, clip].
struct QuantParams {
    int bits = 8;
    double clip = 1.0;
    QuantMode mode = QuantMode::symmetric;

    int levels() const { return (1 << (bits - 1)) - 1; }
    double scale() const { return clip / levels(); }
};

double linear_quantize(double v, const QuantParams& q);
void linear_quantize(std::span<double> values, const QuantParams& q);

// 2048 equal-width bins over [0, max_abs] of the absolute values.
struct Histogram {
    static constexpr int kBins = 2048;
    std::vector<double> counts;
    double max_abs = 0.0;

    double total() const;
    double bin_width() const { return max_abs / kBins; }
    static Histogram build(std::span<const double> values);
};

struct ClipResult {
    double clip = 0.0;
    double kl = 0.0;
};

// KL-divergence clip calibration over a 100-candidate grid spanning
// (0.05 * max_abs, max_abs]. See calibrate_clip() in quantizer.cpp for the
// exact collapse/expand convention.
ClipResult calibrate_clip(const Histogram& hist, int bits, QuantMode mode);
// The candidate grid, exposed so reports and tests can enumerate it.
std::vector<double> clip_candidates(double max_abs);
// KL value of a single candidate (the same convention calibrate_clip minimizes).
double clip_kl(const Histogram& hist, int bits, double clip);

// k-means codebook over weight values for the model-size objective.
struct CodebookQuant {
    int bits = 2;
    std::vector<double> centroids;  // sorted ascending
    std::vector<int> assignment;
    double sse = 0.0;
    bool degenerate = false;  // fewer distinct values than centroids
};

CodebookQuant kmeans_quantize(std::span<const double> values, int bits, int iters = 50,
                              uint64_t seed = 0);

// Total stored bits under a policy. Linear mode: sum n_params * w_bits;
// codebook mode adds 32 * 2^bits per layer for centroid storage.
long long model_size_bits(const ModelGraph& model, const BitwidthPolicy& policy,
                          bool codebook_mode);

// Calibrated fake-quantizer for a whole model: per-layer weight clip from the
// weight histogram, per-layer activation clip from one forward pass over the
// calibration split. The final classifier's output is left unquantized (it is
// not a ReLU output).
class ModelQuantizer : public QuantHook {
public:
    struct LayerParams {
        QuantParams weight;
        QuantParams activation;
        double weight_kl = 0.0;
        double act_kl = 0.0;
    };

    static ModelQuantizer calibrate(const ModelGraph& model, const BitwidthPolicy& policy,
                                    const DatasetSplit& calib);
    // Codebook variant: weights snapped to k-means centroids, activations
    // untouched (model-size objective quantizes weights only).
    static ModelQuantizer calibrate_codebook(const ModelGraph& model,
                                             const BitwidthPolicy& policy, uint64_t seed = 0);

    void apply_weights(int layer, std::span<double> w) const override;
    void apply_activations(int layer, std::span<double> a) const override;

    const std::vector<LayerParams>& params() const { return params_; }
    void write_calibration_csv(const std::filesystem::path& file) const;

private:
    std::vector<LayerParams> params_;
    std::vector<std::vector<double>> codebooks_;  // per layer, empty in linear mode
    bool codebook_mode_ = false;
    int last_layer_ = 0;
};

}  // namespace bitforge
