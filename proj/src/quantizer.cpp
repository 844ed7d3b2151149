#include "bitforge/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "bitforge/error.hpp"
#include "bitforge/rng.hpp"

namespace bitforge {

namespace {

// Half-away-from-zero; keeps symmetric grids symmetric.
double round_half_away(double x) { return std::round(x); }

// Index of the nearest centroid in a sorted codebook; equidistant values go
// to the lower centroid.
int nearest_centroid(const std::vector<double>& sorted_centroids, double v) {
    auto it = std::lower_bound(sorted_centroids.begin(), sorted_centroids.end(), v);
    if (it == sorted_centroids.begin()) return 0;
    if (it == sorted_centroids.end()) return static_cast<int>(sorted_centroids.size()) - 1;
    int hi = static_cast<int>(it - sorted_centroids.begin());
    int lo = hi - 1;
    return (v - sorted_centroids[lo]) <= (sorted_centroids[hi] - v) ? lo : hi;
}

}  // namespace

double linear_quantize(double v, const QuantParams& q) {
    double lo = q.mode == QuantMode::symmetric ? -q.clip : 0.0;
    double clamped = std::clamp(v, lo, q.clip);
    double s = q.scale();
    return round_half_away(clamped / s) * s;
}

void linear_quantize(std::span<double> values, const QuantParams& q) {
    double lo = q.mode == QuantMode::symmetric ? -q.clip : 0.0;
    double s = q.scale();
    for (double& v : values) v = round_half_away(std::clamp(v, lo, q.clip) / s) * s;
}

double Histogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), 0.0);
}

Histogram Histogram::build(std::span<const double> values) {
    Histogram h;
    h.counts.assign(kBins, 0.0);
    for (double v : values) h.max_abs = std::max(h.max_abs, std::abs(v));
    if (h.max_abs == 0.0) return h;
    for (double v : values) {
        int bin = static_cast<int>(std::abs(v) / h.max_abs * kBins);
        h.counts[std::min(bin, kBins - 1)] += 1.0;
    }
    return h;
}

std::vector<double> clip_candidates(double max_abs) {
    std::vector<double> c(100);
    for (int i = 0; i < 100; ++i) c[i] = max_abs * (0.05 + 0.95 * (i + 1) / 100.0);
    return c;
}

// KL-divergence of one clip candidate.
//
// Convention (the paper leaves all of this open):
//  * the candidate covers the m = floor(clip / bin_width) fully contained bins;
//  * P is the covered slice of the histogram, renormalized (tail dropped); a
//    candidate covering no mass is treated as infinitely bad;
//  * Q collapses the full histogram onto the quantization grid: covered bins
//    map to round(center / s), tail mass clamps onto the level of the last
//    covered bin; each level's mass is re-expanded uniformly over the level's
//    covered bins with nonzero counts (over all its bins when none are);
//  * zero entries of P and Q are smoothed with eps = 1e-9, both renormalized,
//    D_KL(P||Q) with natural log.
double clip_kl(const Histogram& hist, int bits, double clip) {
    const double bw = hist.bin_width();
    int m = static_cast<int>(std::floor(clip / bw + 1e-9));
    m = std::clamp(m, 1, Histogram::kBins);

    double covered = 0.0;
    for (int i = 0; i < m; ++i) covered += hist.counts[i];
    if (covered <= 0.0) return std::numeric_limits<double>::infinity();

    const int levels = (1 << (bits - 1)) - 1;
    const double s = clip / levels;

    std::vector<int> level_of(m);
    std::vector<double> level_sum(levels + 1, 0.0);
    std::vector<int> group_size(levels + 1, 0);
    std::vector<int> group_nonzero(levels + 1, 0);
    for (int i = 0; i < m; ++i) {
        double center = (i + 0.5) * bw;
        int lvl = std::min(static_cast<int>(round_half_away(center / s)), levels);
        level_of[i] = lvl;
        level_sum[lvl] += hist.counts[i];
        group_size[lvl] += 1;
        if (hist.counts[i] > 0.0) group_nonzero[lvl] += 1;
    }
    double tail = 0.0;
    for (int i = m; i < Histogram::kBins; ++i) tail += hist.counts[i];
    level_sum[level_of[m - 1]] += tail;  // clamp(x, clip) lands in the last covered bin

    constexpr double eps = 1e-9;
    std::vector<double> p(m), q(m);
    for (int i = 0; i < m; ++i) {
        int lvl = level_of[i];
        double share = 0.0;
        if (group_nonzero[lvl] > 0) {
            if (hist.counts[i] > 0.0) share = level_sum[lvl] / group_nonzero[lvl];
        } else if (group_size[lvl] > 0) {
            share = level_sum[lvl] / group_size[lvl];
        }
        p[i] = hist.counts[i] > 0.0 ? hist.counts[i] : eps;
        q[i] = share > 0.0 ? share : eps;
    }
    double psum = std::accumulate(p.begin(), p.end(), 0.0);
    double qsum = std::accumulate(q.begin(), q.end(), 0.0);
    double kl = 0.0;
    for (int i = 0; i < m; ++i) {
        double pi = p[i] / psum;
        double qi = q[i] / qsum;
        kl += pi * std::log(pi / qi);
    }
    return kl;
}

ClipResult calibrate_clip(const Histogram& hist, int bits, QuantMode /*mode*/) {
    if (hist.counts.empty() || hist.total() <= 0.0)
        throw config_error("calibrate_clip on an empty histogram");
    if (hist.max_abs == 0.0) return {1.0, 0.0};  // all-zero tensor: any positive clip works

    ClipResult best{0.0, std::numeric_limits<double>::infinity()};
    for (double c : clip_candidates(hist.max_abs)) {
        double kl = clip_kl(hist, bits, c);
        if (kl < best.kl) best = {c, kl};  // strict: ties keep the smallest clip
    }
    return best;
}

// ---------------------------------------------------------------------------
// k-means codebook
// ---------------------------------------------------------------------------

CodebookQuant kmeans_quantize(std::span<const double> values, int bits, int iters,
                              uint64_t seed) {
    if (values.empty()) throw config_error("kmeans_quantize on empty input");
    const int k = 1 << bits;

    std::vector<double> distinct(values.begin(), values.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    CodebookQuant cb;
    cb.bits = bits;
    if (static_cast<int>(distinct.size()) <= k) {
        // Degenerate: every distinct value is its own centroid, padded with
        // duplicates of the last one.
        cb.degenerate = static_cast<int>(distinct.size()) < k;
        cb.centroids = distinct;
        while (static_cast<int>(cb.centroids.size()) < k) cb.centroids.push_back(distinct.back());
    } else {
        // Farthest-point seeding from a seeded random start.
        Rng rng(seed);
        std::vector<double> centers;
        centers.push_back(values[rng.next_u64() % values.size()]);
        std::vector<double> dist(values.size());
        for (size_t i = 0; i < values.size(); ++i) dist[i] = std::abs(values[i] - centers[0]);
        while (static_cast<int>(centers.size()) < k) {
            size_t far = 0;
            for (size_t i = 1; i < values.size(); ++i)
                if (dist[i] > dist[far]) far = i;
            centers.push_back(values[far]);
            for (size_t i = 0; i < values.size(); ++i)
                dist[i] = std::min(dist[i], std::abs(values[i] - centers.back()));
        }
        std::sort(centers.begin(), centers.end());

        // Lloyd iterations; SSE is non-increasing by construction.
        std::vector<double> sums(k);
        std::vector<long long> cnts(k);
        for (int it = 0; it < iters; ++it) {
            std::fill(sums.begin(), sums.end(), 0.0);
            std::fill(cnts.begin(), cnts.end(), 0);
            for (double v : values) {
                int c = nearest_centroid(centers, v);
                sums[c] += v;
                cnts[c] += 1;
            }
            double moved = 0.0;
            for (int c = 0; c < k; ++c) {
                if (cnts[c] == 0) continue;  // empty cluster keeps its centroid
                double next = sums[c] / cnts[c];
                moved = std::max(moved, std::abs(next - centers[c]));
                centers[c] = next;
            }
            std::sort(centers.begin(), centers.end());
            if (moved < 1e-6) break;
        }
        cb.centroids = centers;
    }

    cb.assignment.resize(values.size());
    cb.sse = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        int c = nearest_centroid(cb.centroids, values[i]);
        cb.assignment[i] = c;
        double d = values[i] - cb.centroids[c];
        cb.sse += d * d;
    }
    return cb;
}

long long model_size_bits(const ModelGraph& model, const BitwidthPolicy& policy,
                          bool codebook_mode) {
    long long total = 0;
    for (int k = 0; k < model.num_layers(); ++k) {
        int bits = k < static_cast<int>(policy.layers.size()) ? policy.layers[k].w_bits : 32;
        total += model.spec(k).n_params * bits;
        if (codebook_mode) total += 32LL * (1LL << bits);
    }
    return total;
}

// ---------------------------------------------------------------------------
// ModelQuantizer
// ---------------------------------------------------------------------------

ModelQuantizer ModelQuantizer::calibrate(const ModelGraph& model, const BitwidthPolicy& policy,
                                         const DatasetSplit& calib) {
    policy.validate(model.num_layers());
    if (calib.count() == 0) throw config_error("calibration split is empty");

    ModelQuantizer mq;
    mq.last_layer_ = model.num_layers() - 1;
    mq.params_.resize(model.num_layers());

    // One float forward pass over the calibration split gathers activations.
    ForwardResult fr = forward(model, calib.x, nullptr, true);

    for (int k = 0; k < model.num_layers(); ++k) {
        LayerParams lp;
        Histogram wh = Histogram::build(model.layers()[k].weights);
        ClipResult wc = calibrate_clip(wh, policy.layers[k].w_bits, QuantMode::symmetric);
        lp.weight = {policy.layers[k].w_bits, wc.clip, QuantMode::symmetric};
        lp.weight_kl = wc.kl;

        if (k < mq.last_layer_) {
            Histogram ah = Histogram::build(fr.activations[k].v);
            if (ah.total() <= 0.0)
                throw config_error("no activation statistics for layer " + std::to_string(k));
            ClipResult ac = calibrate_clip(ah, policy.layers[k].a_bits, QuantMode::non_negative);
            lp.activation = {policy.layers[k].a_bits, ac.clip, QuantMode::non_negative};
            lp.act_kl = ac.kl;
        } else {
            lp.activation = {policy.layers[k].a_bits, 0.0, QuantMode::non_negative};
        }
        mq.params_[k] = lp;
    }
    return mq;
}

ModelQuantizer ModelQuantizer::calibrate_codebook(const ModelGraph& model,
                                                  const BitwidthPolicy& policy, uint64_t seed) {
    policy.validate(model.num_layers());
    ModelQuantizer mq;
    mq.codebook_mode_ = true;
    mq.last_layer_ = model.num_layers() - 1;
    mq.params_.resize(model.num_layers());
    mq.codebooks_.resize(model.num_layers());
    for (int k = 0; k < model.num_layers(); ++k) {
        CodebookQuant cb =
            kmeans_quantize(model.layers()[k].weights, policy.layers[k].w_bits, 50, seed + k);
        mq.codebooks_[k] = cb.centroids;
        mq.params_[k].weight = {policy.layers[k].w_bits, 0.0, QuantMode::symmetric};
        mq.params_[k].activation = {policy.layers[k].a_bits, 0.0, QuantMode::non_negative};
    }
    return mq;
}

void ModelQuantizer::apply_weights(int layer, std::span<double> w) const {
    if (codebook_mode_) {
        const std::vector<double>& cents = codebooks_[layer];
        for (double& v : w) v = cents[nearest_centroid(cents, v)];
        return;
    }
    linear_quantize(w, params_[layer].weight);
}

void ModelQuantizer::apply_activations(int layer, std::span<double> a) const {
    if (codebook_mode_) return;       // size objective quantizes weights only
    if (layer >= last_layer_) return;  // logits stay float
    linear_quantize(a, params_[layer].activation);
}

void ModelQuantizer::write_calibration_csv(const std::filesystem::path& file) const {
    std::ofstream out(file);
    if (!out) throw config_error("cannot write " + file.string());
    out << "layer,target,bits,clip,kl\n";
    char buf[160];
    for (size_t k = 0; k < params_.size(); ++k) {
        const LayerParams& lp = params_[k];
        std::snprintf(buf, sizeof buf, "%zu,w,%d,%.9g,%.9g\n", k, lp.weight.bits, lp.weight.clip,
                      lp.weight_kl);
        out << buf;
        if (static_cast<int>(k) < last_layer_ && !codebook_mode_) {
            std::snprintf(buf, sizeof buf, "%zu,a,%d,%.9g,%.9g\n", k, lp.activation.bits,
                          lp.activation.clip, lp.act_kl);
            out << buf;
        }
    }
}

}  // namespace bitforge
