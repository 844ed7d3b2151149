// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavy search runs are shared between criteria 6-8.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "bitforge/data.hpp"
#include "bitforge/quantizer.hpp"
#include "bitforge/runio.hpp"
#include "bitforge/search.hpp"

namespace fs = std::filesystem;
using namespace bitforge;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

double elapsed_s(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --------------------------------------------------------------------------
// Criterion 1: quantizer properties + KL oracle equality on 1000 cases
// --------------------------------------------------------------------------

double oracle_kl(const Histogram& h, int bits, double clip) {
    double bw = h.max_abs / Histogram::kBins;
    int m = std::clamp(static_cast<int>(std::floor(clip / bw + 1e-9)), 1, Histogram::kBins);
    double covered = 0.0;
    for (int i = 0; i < m; ++i) covered += h.counts[i];
    if (covered <= 0.0) return std::numeric_limits<double>::infinity();
    int levels = (1 << (bits - 1)) - 1;
    double s = clip / levels;
    std::vector<double> mass(levels + 1, 0.0);
    std::vector<std::vector<int>> groups(levels + 1);
    auto lvl = [&](int bin) {
        return std::min(static_cast<int>(std::round((bin + 0.5) * bw / s)), levels);
    };
    for (int i = 0; i < m; ++i) {
        mass[lvl(i)] += h.counts[i];
        groups[lvl(i)].push_back(i);
    }
    double tail = 0.0;
    for (int i = m; i < Histogram::kBins; ++i) tail += h.counts[i];
    mass[lvl(m - 1)] += tail;
    std::vector<double> q(m, 0.0);
    for (int l = 0; l <= levels; ++l) {
        if (groups[l].empty()) continue;
        int nz = 0;
        for (int i : groups[l])
            if (h.counts[i] > 0) ++nz;
        for (int i : groups[l])
            q[i] = nz > 0 ? (h.counts[i] > 0 ? mass[l] / nz : 0.0)
                          : mass[l] / groups[l].size();
    }
    const double eps = 1e-9;
    std::vector<double> p(m);
    for (int i = 0; i < m; ++i) {
        p[i] = h.counts[i] > 0 ? h.counts[i] : eps;
        if (q[i] <= 0) q[i] = eps;
    }
    double ps = std::accumulate(p.begin(), p.end(), 0.0);
    double qs = std::accumulate(q.begin(), q.end(), 0.0);
    double kl = 0.0;
    for (int i = 0; i < m; ++i) kl += (p[i] / ps) * std::log((p[i] / ps) / (q[i] / qs));
    return kl;
}

void criterion1() {
    auto t0 = Clock::now();
    Rng rng(1001);
    bool bound_ok = true, idem_ok = true, grid_ok = true, oracle_ok = true;

    for (int rep = 0; rep < 1000 && bound_ok && idem_ok && grid_ok; ++rep) {
        QuantParams q;
        q.bits = 2 + static_cast<int>(rng.next_u64() % 7);
        q.clip = rng.uniform(0.05, 5.0);
        q.mode = rng.uniform() < 0.5 ? QuantMode::symmetric : QuantMode::non_negative;
        double v = rng.normal(0.0, 2.5);
        double out = linear_quantize(v, q);
        double lo = q.mode == QuantMode::symmetric ? -q.clip : 0.0;
        double clamped = std::clamp(v, lo, q.clip);
        if (std::abs(out - clamped) > q.scale() / 2 + 1e-12) bound_ok = false;
        if (linear_quantize(out, q) != out) idem_ok = false;
        double ratio = out / q.scale();
        int top = (1 << (q.bits - 1)) - 1;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) > top ||
            std::round(ratio) < (q.mode == QuantMode::symmetric ? -top : 0))
            grid_ok = false;
    }

    int checked = 0;
    for (int rep = 0; rep < 1000 && oracle_ok; ++rep) {
        int n = 200 + static_cast<int>(rng.next_u64() % 800);
        std::vector<double> values(n);
        int shape = rep % 4;
        double sd = rng.uniform(0.2, 3.0);
        for (double& v : values) {
            switch (shape) {
                case 0: v = rng.normal(0.0, sd); break;
                case 1: v = rng.uniform(-sd, sd); break;
                case 2: v = rng.normal(0.0, sd) + (rng.uniform() < 0.05 ? rng.normal(0, 6 * sd) : 0.0); break;
                default: v = rng.normal(sd, 0.3 * sd); break;
            }
        }
        Histogram h = Histogram::build(values);
        if (h.total() <= 0) continue;
        int bits = 2 + static_cast<int>(rng.next_u64() % 7);
        ClipResult got = calibrate_clip(h, bits, QuantMode::symmetric);
        double best_c = 0, best_kl = std::numeric_limits<double>::infinity();
        for (double c : clip_candidates(h.max_abs)) {
            double kl = oracle_kl(h, bits, c);
            if (kl < best_kl) {
                best_kl = kl;
                best_c = c;
            }
        }
        if (got.clip != best_c) oracle_ok = false;
        ++checked;
    }

    double dt = elapsed_s(t0);
    bool pass = bound_ok && idem_ok && grid_ok && oracle_ok && dt < 60.0;
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "bound %s, idempotent %s, grid %s, oracle equal on %d cases %s, %.1fs",
                  bound_ok ? "ok" : "BAD", idem_ok ? "ok" : "BAD", grid_ok ? "ok" : "BAD", checked,
                  oracle_ok ? "ok" : "BAD", dt);
    report(1, pass, "quantizer error bound / idempotence / grid / KL oracle", detail);
}

// --------------------------------------------------------------------------
// Criterion 2: gradients vs central finite differences
// --------------------------------------------------------------------------

std::vector<bool> relu_pattern(const ModelGraph& m, const Tensor& batch) {
    ForwardResult fr = forward(m, batch, nullptr, true);
    std::vector<bool> pattern;
    for (size_t k = 0; k + 1 < fr.activations.size(); ++k)
        for (double v : fr.activations[k].v) pattern.push_back(v > 0.0);
    return pattern;
}

void criterion2(const fs::path& tmp) {
    auto t0 = Clock::now();

    fs::path file = tmp / "gradnet.json";
    {
        std::ofstream out(file);
        out << R"({"layers":[
          {"kind":"conv","c_in":2,"c_out":4,"kernel":3,"stride":2,"feat":8,"bias":true},
          {"kind":"depthwise_conv","c_in":4,"c_out":4,"kernel":3,"stride":1,"feat":4,"bias":true},
          {"kind":"fc","c_in":64,"c_out":5,"kernel":1,"stride":0,"feat":64,"bias":true}],
          "init":"random:21"})";
    }
    ModelGraph m = ModelGraph::load(file);
    Tensor batch(4, 2, 8, 8);
    Rng brng(99);
    for (double& v : batch.v) v = brng.normal();
    std::vector<int> labels = {0, 3, 1, 4};
    std::vector<LayerGrads> grads;
    loss_and_grads(m, batch, labels, grads);
    const double h = 1e-3;
    double worst_net = 0.0;
    int skipped = 0, checked = 0;
    for (int k = 0; k < m.num_layers(); ++k) {
        auto sweep = [&](std::vector<double>& buf, const std::vector<double>& g, size_t step) {
            for (size_t i = 0; i < buf.size(); i += step) {
                double keep = buf[i];
                std::vector<LayerGrads> scratch;
                buf[i] = keep + h;
                double up = loss_and_grads(m, batch, labels, scratch);
                auto mu = relu_pattern(m, batch);
                buf[i] = keep - h;
                double dn = loss_and_grads(m, batch, labels, scratch);
                auto md = relu_pattern(m, batch);
                buf[i] = keep;
                if (mu != md) {
                    ++skipped;  // FD stencil crosses a ReLU kink
                    continue;
                }
                double fd = (up - dn) / (2 * h);
                worst_net = std::max(worst_net, std::abs(fd - g[i]) /
                                                    std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
                ++checked;
            }
        };
        sweep(m.layers()[k].weights, grads[k].weights, m.layers()[k].weights.size() > 200 ? 7 : 1);
        sweep(m.layers()[k].bias, grads[k].bias, 1);
    }

    // Agent losses on kink-safe seeds (1e-4 stencil).
    AgentConfig acfg;
    acfg.hidden1 = 12;
    acfg.hidden2 = 8;
    acfg.seed = 48;
    DdpgAgent agent(acfg);
    Rng erng(30);
    std::vector<Transition> batch_t(10);
    for (Transition& tr : batch_t) {
        for (double& v : tr.obs) v = erng.uniform();
        for (double& v : tr.next_obs) v = erng.uniform();
        tr.action = erng.uniform();
        tr.reward = 0.2;
    }
    const double ha = 1e-4;
    std::vector<double> targets(batch_t.size(), 0.1);
    std::vector<double> cgrads, agrads, scratch;
    agent.critic_loss_and_grads(batch_t, targets, cgrads);
    double worst_critic = 0.0;
    for (size_t i = 0; i < agent.critic().param_count(); ++i) {
        double keep = agent.critic().params()[i];
        agent.critic().params()[i] = keep + ha;
        double up = agent.critic_loss_and_grads(batch_t, targets, scratch);
        agent.critic().params()[i] = keep - ha;
        double dn = agent.critic_loss_and_grads(batch_t, targets, scratch);
        agent.critic().params()[i] = keep;
        double fd = (up - dn) / (2 * ha);
        worst_critic = std::max(worst_critic, std::abs(fd - cgrads[i]) /
                                                  std::max({std::abs(fd), std::abs(cgrads[i]), 1e-8}));
    }
    agent.actor_loss_and_grads(batch_t, agrads);
    double worst_actor = 0.0;
    for (size_t i = 0; i < agent.actor().param_count(); ++i) {
        double keep = agent.actor().params()[i];
        agent.actor().params()[i] = keep + ha;
        double up = agent.actor_loss_and_grads(batch_t, scratch);
        agent.actor().params()[i] = keep - ha;
        double dn = agent.actor_loss_and_grads(batch_t, scratch);
        agent.actor().params()[i] = keep;
        double fd = (up - dn) / (2 * ha);
        worst_actor = std::max(worst_actor, std::abs(fd - agrads[i]) /
                                                std::max({std::abs(fd), std::abs(agrads[i]), 1e-8}));
    }

    double dt = elapsed_s(t0);
    bool pass = worst_net <= 1e-4 && worst_critic <= 1e-4 && worst_actor <= 1e-4 &&
                checked > 10 * skipped && dt < 120.0;
    char detail[200];
    std::snprintf(detail, sizeof detail,
                  "net %.2e (checked %d, kink-skipped %d), critic %.2e, actor %.2e, %.1fs",
                  worst_net, checked, skipped, worst_critic, worst_actor, dt);
    report(2, pass, "training-loss and agent-loss gradients vs finite differences", detail);
}

// --------------------------------------------------------------------------
// Criterion 3: cost model (monotonicity, roofline, spreadsheet oracle)
// --------------------------------------------------------------------------

struct SheetRow {
    double latency, energy;
};

SheetRow sheet_eval(const LayerSpec& s, int wb, int ab, const HardwareConfig& hw) {
    double out_side = s.kind == LayerKind::fc ? 1.0 : std::ceil(double(s.s_feat) / s.s_stride);
    double macs;
    if (s.kind == LayerKind::fc)
        macs = double(hw.batch) * s.c_in * s.c_out;
    else if (s.kind == LayerKind::depthwise_conv)
        macs = double(hw.batch) * s.c_in * out_side * out_side * s.s_kernel * s.s_kernel;
    else
        macs = double(hw.batch) * s.c_out * out_side * out_side * s.c_in * s.s_kernel * s.s_kernel;
    double elems = double(hw.pe_rows) * hw.pe_cols * hw.pe_simd;
    double t_comp;
    if (hw.family == HwFamily::temporal) {
        t_comp = std::ceil(macs / elems) * wb * ab / hw.clock_hz;
    } else {
        auto p2 = [](int b) { return b <= 2 ? 2 : (b <= 4 ? 4 : 8); };
        t_comp = std::ceil(macs / (elems * (16.0 / p2(wb)) * (16.0 / p2(ab)))) / hw.clock_hz;
    }
    double wbits = double(s.n_params) * wb;
    double cap = hw.on_chip_kib * 1024 * 8;
    double tiles = wbits > cap ? std::ceil(wbits / cap) : 1.0;
    double acts = s.kind == LayerKind::fc
                      ? double(hw.batch) * (s.c_in + s.c_out)
                      : double(hw.batch) *
                            (s.c_in * s.s_feat * s.s_feat + s.c_out * out_side * out_side);
    double dram = wbits * tiles + acts * ab;
    double stall = std::max(0.0, dram / (hw.dram_bus_bits * hw.clock_hz) - t_comp);
    double lat = t_comp + stall + hw.t_overhead_us * 1e-6;
    return {lat, hw.e_mem_pj_per_bit * 1e-12 * dram + hw.p_dynamic_w * lat};
}

void criterion3(const ModelGraph& desk) {
    auto t0 = Clock::now();
    Rng rng(31337);

    bool mono_ok = true;
    for (HwFamily family : {HwFamily::temporal, HwFamily::spatial}) {
        HardwareConfig hw = HardwareConfig::edge();
        hw.family = family;
        if (family == HwFamily::spatial) hw.pe_simd = 4;
        for (int rep = 0; rep < 250 && mono_ok; ++rep) {
            BitwidthPolicy p = BitwidthPolicy::uniform(desk.num_layers(), 8, 8);
            for (int k = 0; k < desk.num_layers(); ++k) {
                if (p.is_pinned(k)) continue;
                p.layers[k].w_bits = rng.uniform_int(2, 8);
                p.layers[k].a_bits = rng.uniform_int(2, 8);
            }
            CostReport base = cost_report(desk, p, hw);
            int k = 1 + static_cast<int>(rng.next_u64() % (desk.num_layers() - 2));
            BitwidthPolicy up = p;
            int& field = (rng.uniform() < 0.5) ? up.layers[k].w_bits : up.layers[k].a_bits;
            if (field == 8) continue;
            ++field;
            CostReport bumped = cost_report(desk, up, hw);
            if (bumped.total_latency < base.total_latency - 1e-15 ||
                bumped.total_energy < base.total_energy - 1e-15 ||
                bumped.total_dram_bits < base.total_dram_bits - 1e-15 ||
                bumped.total_bitops < base.total_bitops - 1e-15)
                mono_ok = false;
        }
    }

    // Roofline consistency on lane-aligned layers, zero overhead, both families.
    bool roof_ok = true;
    double worst_roof = 0.0;
    {
        LayerSpec big;
        big.kind = LayerKind::conv;
        big.c_in = big.c_out = 64;
        big.s_kernel = 1;
        big.s_stride = 1;
        big.s_feat = 64;
        big.n_params = 4096;
        for (HwFamily family : {HwFamily::temporal, HwFamily::spatial}) {
            HardwareConfig hw = HardwareConfig::edge();
            hw.family = family;
            hw.t_overhead_us = 0.0;
            for (int wb = 2; wb <= 8 && roof_ok; ++wb)
                for (int ab = 2; ab <= 8; ++ab) {
                    RooflinePoint pt = roofline_point(big, wb, ab, hw);
                    Workload wl = layer_workload(big, hw.batch);
                    // simulator-derived: macs / latency of a single-layer run
                    std::filesystem::path dummy;  // построить без файла
                    LayerCost lc;
                    {
                        // single-layer cost via the public API
                        std::vector<Layer> layers(1);
                        layers[0].spec = big;
                        layers[0].spec.index = 0;
                        layers[0].spec.has_bias = false;
                        layers[0].spec.n_params = layers[0].spec.analytic_params();
                        layers[0].weights.assign(layers[0].spec.weight_count(), 0.0);
                        ModelGraph one(std::move(layers));
                        BitwidthPolicy p;
                        p.layers = {{wb, ab}};
                        lc = cost_report(one, p, hw).layers[0];
                    }
                    double sim = static_cast<double>(wl.macs) / lc.latency;
                    double rel = std::abs(pt.attained - sim) / sim;
                    worst_roof = std::max(worst_roof, rel);
                    if (rel > 0.01) roof_ok = false;
                }
        }
    }

    // Spreadsheet-oracle equality on the desk net at 8/8, edge and cloud.
    bool sheet_ok = true;
    double worst_sheet = 0.0;
    for (HardwareConfig hw : {HardwareConfig::edge(), HardwareConfig::cloud()}) {
        BitwidthPolicy p8 = BitwidthPolicy::uniform(desk.num_layers(), 8, 8);
        CostReport rep = cost_report(desk, p8, hw);
        double lat = 0, en = 0;
        for (int k = 0; k < desk.num_layers(); ++k) {
            SheetRow row = sheet_eval(desk.spec(k), 8, 8, hw);
            lat += row.latency;
            en += row.energy;
        }
        worst_sheet = std::max(worst_sheet, std::abs(rep.total_latency - lat) / lat);
        worst_sheet = std::max(worst_sheet, std::abs(rep.total_energy - en) / en);
        if (worst_sheet > 1e-9) sheet_ok = false;
    }

    double dt = elapsed_s(t0);
    bool pass = mono_ok && roof_ok && sheet_ok && dt < 60.0;
    char detail[200];
    std::snprintf(detail, sizeof detail,
                  "monotone %s (500 policies), roofline worst %.4f%%, sheet worst %.1e, %.1fs",
                  mono_ok ? "ok" : "BAD", worst_roof * 100, worst_sheet, dt);
    report(3, pass, "cost-model monotonicity / roofline / spreadsheet oracle", detail);
}

// --------------------------------------------------------------------------
// Criterion 4: action decoding
// --------------------------------------------------------------------------

void criterion4() {
    bool ok = true;
    int prev = 2;
    for (int i = 0; i <= 1000; ++i) {
        int b = action_to_bits(i / 1000.0);
        if (b < 2 || b > 8 || b < prev) ok = false;
        prev = b;
    }
    ok = ok && action_to_bits(0.0) == 2 && action_to_bits(1.0) == 8;
    report(4, ok, "action decoding staircase over a in {0, 0.001, ..., 1}",
           ok ? "b in [2,8], monotone, endpoints 2 and 8" : "violation found");
}

// --------------------------------------------------------------------------
// Criterion 5: budget enforcement over 500 random (policy, budget) pairs
// --------------------------------------------------------------------------

void criterion5(const ModelGraph& desk) {
    Rng rng(55);
    bool ok = true;
    std::string why = "cost <= budget or flagged floor; never raised; idempotent";
    for (int rep = 0; rep < 500 && ok; ++rep) {
        Budget budget;
        budget.objective =
            rep % 3 == 0 ? Objective::bitops : (rep % 3 == 1 ? Objective::latency : Objective::energy);
        budget.hw = HardwareConfig::edge();
        BitwidthPolicy p = BitwidthPolicy::uniform(desk.num_layers(), 8, 8);
        for (int k = 0; k < desk.num_layers(); ++k) {
            if (p.is_pinned(k)) continue;
            p.layers[k].w_bits = rng.uniform_int(2, 8);
            p.layers[k].a_bits = rng.uniform_int(2, 8);
        }
        double floor_cost =
            policy_cost(desk, BitwidthPolicy::uniform(desk.num_layers(), 2, 2), budget);
        double top_cost =
            policy_cost(desk, BitwidthPolicy::uniform(desk.num_layers(), 8, 8), budget);
        budget.limit = rng.uniform(0.7 * floor_cost, 1.05 * top_cost);

        BitwidthPolicy out = enforce_budget(desk, p, budget);
        if (out.infeasible) {
            for (int k = 0; k < desk.num_layers(); ++k)
                if (!out.is_pinned(k) &&
                    (out.layers[k].w_bits != 2 || out.layers[k].a_bits != 2))
                    ok = false;
        } else if (policy_cost(desk, out, budget) > budget.limit) {
            ok = false;
            why = "cost above budget without flag";
        }
        for (int k = 0; k < desk.num_layers(); ++k)
            if (out.layers[k].w_bits > p.layers[k].w_bits ||
                out.layers[k].a_bits > p.layers[k].a_bits)
                ok = false;
        BitwidthPolicy twice = enforce_budget(desk, out, budget);
        if (!(twice == out) || twice.infeasible != out.infeasible) {
            ok = false;
            why = "not idempotent";
        }
    }
    report(5, ok, "budget enforcement over 500 random (policy, budget) pairs", why);
}

// --------------------------------------------------------------------------
// Criteria 6-8: desk-scale searches
// --------------------------------------------------------------------------

struct DeskContext {
    Dataset ds;
    ModelGraph model;  // trained float baseline
    double t8_edge = 0.0;
    double t8_cloud = 0.0;
};

DeskContext make_desk(const fs::path& models_dir) {
    DeskContext ctx{generate_synthetic(SyntheticConfig{}),
                    ModelGraph::load(models_dir / "desknet.json")};
    TrainConfig tc;
    tc.epochs = 12;
    tc.shuffle_seed = 1;
    finetune(ctx.model, ctx.ds.train, tc);
    BitwidthPolicy p8 = BitwidthPolicy::uniform(ctx.model.num_layers(), 8, 8);
    ctx.t8_edge = cost_report(ctx.model, p8, HardwareConfig::edge()).total_latency;
    ctx.t8_cloud = cost_report(ctx.model, p8, HardwareConfig::cloud()).total_latency;
    return ctx;
}

SearchEnv make_env(const DeskContext& ctx, const HardwareConfig& hw, double limit, uint64_t seed) {
    SearchEnv env;
    env.model = &ctx.model;
    split_for_search(ctx.ds.train, env.finetune_split, env.reward_split);
    env.calib_split = ctx.ds.calib;
    env.budget = {Objective::latency, limit, hw};
    env.seed = seed;
    env.acc_origin = evaluate(ctx.model, env.reward_split);
    return env;
}

// 5-epoch apply pipeline: quantize with the policy, finetune on the full
// train split, report val accuracy.
double apply_accuracy(const DeskContext& ctx, const BitwidthPolicy& policy, uint64_t seed) {
    ModelQuantizer mq = ModelQuantizer::calibrate(ctx.model, policy, ctx.ds.calib);
    ModelGraph tuned = ctx.model;
    TrainConfig tc;
    tc.epochs = 5;
    tc.shuffle_seed = seed;
    finetune(tuned, ctx.ds.train, tc, &mq);
    return evaluate(tuned, ctx.ds.val, &mq);
}

struct SearchRuns {
    std::vector<SearchResult> ddpg_edge, ddpg_cloud, evo_edge, rand_edge;
};

SearchRuns run_searches(const DeskContext& ctx, int episodes, const AgentConfig& agent_cfg) {
    SearchRuns runs;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        SearchOptions opts;
        opts.optimizer = OptimizerKind::ddpg;
        opts.episodes = episodes;
        opts.agent = agent_cfg;
        {
            SearchEnv env = make_env(ctx, HardwareConfig::edge(), 0.55 * ctx.t8_edge, seed);
            auto t0 = Clock::now();
            runs.ddpg_edge.push_back(search(env, opts));
            std::printf("       ddpg edge seed %llu: best reward %.5f acc %.4f (%.0fs)\n",
                        (unsigned long long)seed, runs.ddpg_edge.back().best_reward,
                        runs.ddpg_edge.back().best_accuracy, elapsed_s(t0));
            std::fflush(stdout);
        }
        {
            SearchEnv env = make_env(ctx, HardwareConfig::cloud(), 0.55 * ctx.t8_cloud, seed);
            runs.ddpg_cloud.push_back(search(env, opts));
        }
        {
            SearchEnv env = make_env(ctx, HardwareConfig::edge(), 0.55 * ctx.t8_edge, seed);
            SearchOptions e = opts;
            e.optimizer = OptimizerKind::evolutionary;
            runs.evo_edge.push_back(search(env, e));
        }
        {
            SearchEnv env = make_env(ctx, HardwareConfig::edge(), 0.55 * ctx.t8_edge, seed);
            SearchOptions r = opts;
            r.optimizer = OptimizerKind::random_search;
            runs.rand_edge.push_back(search(env, r));
        }
    }
    return runs;
}

void criterion6(const DeskContext& ctx, const SearchRuns& runs, double runtime_s) {
    std::vector<double> ddpg_acc, u4_acc;
    BitwidthPolicy u4 = BitwidthPolicy::uniform(ctx.model.num_layers(), 4, 4);
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        ddpg_acc.push_back(apply_accuracy(ctx, runs.ddpg_edge[seed - 1].best_policy, seed));
        u4_acc.push_back(apply_accuracy(ctx, u4, seed));
    }
    double md = median3(ddpg_acc), mu = median3(u4_acc);
    bool pass = md >= mu && runtime_s < 1800.0;
    char detail[200];
    std::snprintf(detail, sizeof detail,
                  "median apply accuracy: ddpg@0.55xT8 %.4f vs uniform-4 %.4f; searches %.0fs",
                  md, mu, runtime_s);
    report(6, pass, "desk-scale latency-constrained search beats the uniform-4 baseline", detail);
}

void criterion7(const DeskContext& ctx, const SearchRuns& runs) {
    HardwareConfig edge = HardwareConfig::edge();
    bool differ = true;
    std::vector<double> edge_on_edge, cloud_on_edge;
    for (int i = 0; i < 3; ++i) {
        const BitwidthPolicy& pe = runs.ddpg_edge[i].best_policy;
        const BitwidthPolicy& pc = runs.ddpg_cloud[i].best_policy;
        if (pe == pc) differ = false;
        edge_on_edge.push_back(cost_report(ctx.model, pe, edge).total_latency);
        cloud_on_edge.push_back(cost_report(ctx.model, pc, edge).total_latency);
    }
    double me = median3(edge_on_edge), mc = median3(cloud_on_edge);
    bool pass = differ && me <= mc;
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "policies differ: %s; median edge latency: edge-policy %.2fus vs cloud-policy %.2fus",
                  differ ? "yes" : "NO", me * 1e6, mc * 1e6);
    report(7, pass, "edge/cloud specialization and cross-evaluation", detail);
}

void criterion8(const SearchRuns& runs) {
    auto best = [](const std::vector<SearchResult>& rs) {
        std::vector<double> v;
        for (const SearchResult& r : rs) v.push_back(r.best_reward);
        return median3(v);
    };
    double d = best(runs.ddpg_edge), e = best(runs.evo_edge), r = best(runs.rand_edge);
    const double tie = 0.002;
    bool pass = d >= e - tie && e >= r - tie;
    char detail[160];
    std::snprintf(detail, sizeof detail, "median best reward: ddpg %.5f >= evolutionary %.5f >= random %.5f (ties %.3f)",
                  d, e, r, tie);
    report(8, pass, "optimizer ordering ddpg >= evolutionary >= random", detail);
}

// --------------------------------------------------------------------------
// Criterion 9: BitOPs-matched policies with diverging edge latency
// --------------------------------------------------------------------------

void criterion9(const fs::path& models_dir) {
    ModelGraph toy = ModelGraph::load(models_dir / "toy4.json");
    HardwareConfig edge = HardwareConfig::edge();

    struct Candidate {
        BitwidthPolicy policy;
        double bitops_v, latency_v;
    };
    std::vector<Candidate> cands;
    for (int w1 = 2; w1 <= 8; ++w1)
        for (int a1 = 2; a1 <= 8; ++a1)
            for (int w2 = 2; w2 <= 8; ++w2)
                for (int a2 = 2; a2 <= 8; ++a2) {
                    BitwidthPolicy p = BitwidthPolicy::uniform(toy.num_layers(), 8, 8);
                    p.layers[1] = {w1, a1};
                    p.layers[2] = {w2, a2};
                    cands.push_back(
                        {p, bitops(toy, p), cost_report(toy, p, edge).total_latency});
                }
    double best_gap = 0.0;
    const Candidate *pa = nullptr, *pb = nullptr;
    for (size_t i = 0; i < cands.size(); ++i)
        for (size_t j = i + 1; j < cands.size(); ++j) {
            double ops_rel = std::abs(cands[i].bitops_v - cands[j].bitops_v) /
                             std::max(cands[i].bitops_v, cands[j].bitops_v);
            if (ops_rel > 0.02) continue;
            double lat_rel = std::abs(cands[i].latency_v - cands[j].latency_v) /
                             std::max(cands[i].latency_v, cands[j].latency_v);
            if (lat_rel > best_gap) {
                best_gap = lat_rel;
                pa = &cands[i];
                pb = &cands[j];
            }
        }
    bool pass = best_gap >= 0.15 && pa && pb;
    char detail[220];
    if (pa && pb)
        std::snprintf(detail, sizeof detail,
                      "dw/conv bits (%d,%d)/(%d,%d) vs (%d,%d)/(%d,%d): bitops %.3gG vs %.3gG, "
                      "latency %.2fus vs %.2fus (%.0f%% apart)",
                      pa->policy.layers[1].w_bits, pa->policy.layers[1].a_bits,
                      pa->policy.layers[2].w_bits, pa->policy.layers[2].a_bits,
                      pb->policy.layers[1].w_bits, pb->policy.layers[1].a_bits,
                      pb->policy.layers[2].w_bits, pb->policy.layers[2].a_bits,
                      pa->bitops_v / 1e9, pb->bitops_v / 1e9, pa->latency_v * 1e6,
                      pb->latency_v * 1e6, best_gap * 100);
    else
        std::snprintf(detail, sizeof detail, "no bitops-matched pair found");
    report(9, pass, "bitops-matched policies diverge in edge latency by >= 15%", detail);
}

// --------------------------------------------------------------------------
// Criterion 10: byte-identical rerun from manifest (through the CLI)
// --------------------------------------------------------------------------

void criterion10(const fs::path& tmp) {
    using nlohmann::json;
    fs::path w = tmp / "repro";
    fs::remove_all(w);
    fs::create_directories(w);
    std::string cli = BITFORGE_CLI_PATH;
    auto run = [&](const std::string& args) {
        std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };
    bool ok = true;
    ok &= run("gen-data --seed 12 --out " + (w / "data").string() +
              " --train-per-class 8 --val-per-class 2") == 0;
    ok &= run("baseline --model " + std::string(BITFORGE_MODELS_DIR) + "/desknet.json --data " +
              (w / "data").string() + " --out " + (w / "base").string() + " --epochs 2") == 0;
    fs::path cfg = w / "cfg.json";
    {
        std::ofstream o(cfg);
        o << R"({"data":")" << (w / "data").string() << R"(","baseline":")" << (w / "base").string()
          << R"(","hw":"edge","objective":"latency","limit":"0.6x8","optimizer":"ddpg",)"
          << R"("episodes":4,"seed":21,"agent":{"updates_per_episode":2},"out":")"
          << (w / "run1").string() << "\"}";
    }
    ok &= run("search --config " + cfg.string()) == 0;

    json man = json::parse(slurp(w / "run1" / "manifest.json"));
    json resolved = man["config"];
    resolved["out"] = (w / "run2").string();
    fs::path cfg2 = w / "cfg2.json";
    {
        std::ofstream o(cfg2);
        o << resolved.dump();
    }
    ok &= run("search --config " + cfg2.string()) == 0;

    bool same_policy = slurp(w / "run1" / "policy.json") == slurp(w / "run2" / "policy.json");
    bool same_log =
        slurp(w / "run1" / "exploration.csv") == slurp(w / "run2" / "exploration.csv");
    bool same_agent = slurp(w / "run1" / "agent.json") == slurp(w / "run2" / "agent.json");
    bool pass = ok && same_policy && same_log && same_agent;
    char detail[160];
    std::snprintf(detail, sizeof detail, "policy %s, exploration log %s, agent checkpoint %s",
                  same_policy ? "identical" : "DIFFERS", same_log ? "identical" : "DIFFERS",
                  same_agent ? "identical" : "DIFFERS");
    report(10, pass, "manifest rerun reproduces policy and logs byte-for-byte", detail);
}

}  // namespace

int main() {
    fs::path models_dir(BITFORGE_MODELS_DIR);
    fs::path tmp = fs::temp_directory_path() / "bf_acceptance";
    fs::create_directories(tmp);

    criterion1();
    criterion2(tmp);
    ModelGraph desk = ModelGraph::load(models_dir / "desknet.json");
    criterion3(desk);
    criterion4();
    criterion5(desk);

    std::printf("       building desk-scale context (baseline training)...\n");
    std::fflush(stdout);
    DeskContext ctx = make_desk(models_dir);
    AgentConfig agent_cfg;  // paper hyperparameters with repo defaults
    auto t0 = Clock::now();
    SearchRuns runs = run_searches(ctx, 150, agent_cfg);
    double search_time = elapsed_s(t0);
    criterion6(ctx, runs, search_time);
    criterion7(ctx, runs);
    criterion8(runs);
    criterion9(models_dir);
    criterion10(tmp);

    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
