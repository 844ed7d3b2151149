#include "bitforge/hwsim.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "bitforge/error.hpp"

namespace bitforge {

using nlohmann::json;

HardwareConfig HardwareConfig::edge() {
    HardwareConfig hw;
    hw.name = "edge";
    hw.family = HwFamily::temporal;
    hw.batch = 1;
    hw.pe_rows = 8;
    hw.pe_cols = 8;       // 8x8 PE array
    hw.pe_simd = 256;     // bit-serial dot lanes per PE
    hw.dram_bus_bits = 4 * 64;
    hw.clock_hz = 2.0e8;
    hw.on_chip_kib = 140.0 * 36.0 * 1024.0 / 8.0 / 1024.0;  // 140 x 36Kb BRAM = 630 KiB
    hw.e_mem_pj_per_bit = 20.0;
    hw.p_dynamic_w = 1.0;
    hw.t_overhead_us = 0.05;
    return hw;
}

HardwareConfig HardwareConfig::cloud() {
    HardwareConfig hw;
    hw.name = "cloud";
    hw.family = HwFamily::temporal;
    hw.batch = 16;
    hw.pe_rows = 16;
    hw.pe_cols = 16;      // 16x16 PE array
    hw.pe_simd = 64;      // same lane total as edge across 4x the PEs, 4x the bandwidth
    hw.dram_bus_bits = 4 * 256;
    hw.clock_hz = 2.5e8;
    hw.on_chip_kib = 2160.0 * 36.0 * 1024.0 / 8.0 / 1024.0;  // 2160 x 36Kb BRAM
    hw.e_mem_pj_per_bit = 20.0;
    hw.p_dynamic_w = 4.0;
    hw.t_overhead_us = 0.1;
    return hw;
}

void HardwareConfig::validate() const {
    if (batch < 1 || pe_rows < 1 || pe_cols < 1 || pe_simd < 1 || dram_bus_bits <= 0 ||
        clock_hz <= 0 || on_chip_kib <= 0 || e_mem_pj_per_bit < 0 || p_dynamic_w < 0 ||
        t_overhead_us < 0)
        throw config_error("hardware config has non-positive fields");
}

HardwareConfig HardwareConfig::preset_or_file(const std::string& name_or_path) {
    if (name_or_path == "edge") return edge();
    if (name_or_path == "cloud") return cloud();
    return load(name_or_path);
}

HardwareConfig HardwareConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw config_error("cannot open hardware config " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("hardware config " + file.string() + ": " + e.what());
    }
    HardwareConfig hw;
    hw.name = j.value("name", file.stem().string());
    std::string fam = j.value("family", "temporal");
    if (fam == "temporal") hw.family = HwFamily::temporal;
    else if (fam == "spatial") hw.family = HwFamily::spatial;
    else throw config_error("hardware family must be temporal or spatial");
    hw.batch = j.value("batch", 1);
    hw.pe_rows = j.at("pe_rows").get<int>();
    hw.pe_cols = j.at("pe_cols").get<int>();
    hw.pe_simd = j.value("pe_simd", hw.family == HwFamily::temporal ? 256 : 1);
    hw.dram_bus_bits = j.at("dram_bus_bits").get<double>();
    hw.clock_hz = j.at("clock_hz").get<double>();
    hw.on_chip_kib = j.value("on_chip_kib", 630.0);
    hw.e_mem_pj_per_bit = j.value("e_mem_pj_per_bit", 20.0);
    hw.p_dynamic_w = j.value("p_dynamic_w", 1.0);
    hw.t_overhead_us = j.value("t_overhead_us", 0.05);
    hw.all_on_chip = j.value("all_on_chip", false);
    hw.validate();
    return hw;
}

void HardwareConfig::save(const std::filesystem::path& file) const {
    json j;
    j["name"] = name;
    j["family"] = family == HwFamily::temporal ? "temporal" : "spatial";
    j["batch"] = batch;
    j["pe_rows"] = pe_rows;
    j["pe_cols"] = pe_cols;
    j["pe_simd"] = pe_simd;
    j["dram_bus_bits"] = dram_bus_bits;
    j["clock_hz"] = clock_hz;
    j["on_chip_kib"] = on_chip_kib;
    j["e_mem_pj_per_bit"] = e_mem_pj_per_bit;
    j["p_dynamic_w"] = p_dynamic_w;
    j["t_overhead_us"] = t_overhead_us;
    j["all_on_chip"] = all_on_chip;
    std::ofstream out(file);
    if (!out) throw config_error("cannot write hardware config " + file.string());
    out << j.dump(2) << "\n";
}

Workload layer_workload(const LayerSpec& layer, int batch) {
    Workload w;
    w.weight_count = layer.n_params;
    if (layer.kind == LayerKind::fc) {
        w.macs = 1LL * batch * layer.c_in * layer.c_out;
        w.act_in = 1LL * batch * layer.c_in;
        w.act_out = 1LL * batch * layer.c_out;
        return w;
    }
    long long of = layer.out_feat();
    long long per_pos = layer.kind == LayerKind::depthwise_conv
                            ? 1LL * layer.s_kernel * layer.s_kernel
                            : 1LL * layer.c_in * layer.s_kernel * layer.s_kernel;
    w.macs = batch * layer.c_out * of * of * per_pos;
    w.act_in = 1LL * batch * layer.c_in * layer.s_feat * layer.s_feat;
    w.act_out = 1LL * batch * layer.c_out * of * of;
    return w;
}

namespace {

int next_pow2_bits(int bits) {
    int b = 2;
    while (b < bits) b *= 2;
    return b;  // 2, 4, 8 for bits in [2,8]
}

void check_bits(int bits) {
    if (bits < kBitsMin || bits > kBitsMax)
        throw config_error("unsupported bitwidth " + std::to_string(bits));
}

double spatial_lanes(int w_bits, int a_bits) {
    return (16.0 / next_pow2_bits(w_bits)) * (16.0 / next_pow2_bits(a_bits));
}

// DRAM traffic of one layer. Activations stream once in and once out; weights
// are fetched once per run while they fit on chip, and once per output tile
// (tiles = ceil(weight_bits / on-chip bits)) when they do not.
double layer_dram_bits(const Workload& w, int w_bits, int a_bits, const HardwareConfig& hw) {
    if (hw.all_on_chip) return 0.0;
    double weight_bits = static_cast<double>(w.weight_count) * w_bits;
    double cap_bits = hw.on_chip_kib * 1024.0 * 8.0;
    double tiles = weight_bits > cap_bits ? std::ceil(weight_bits / cap_bits) : 1.0;
    double act_bits = static_cast<double>(w.act_in + w.act_out) * a_bits;
    return weight_bits * tiles + act_bits;
}

double layer_t_comp(long long macs, int w_bits, int a_bits, const HardwareConfig& hw) {
    double elems = static_cast<double>(hw.pe_count()) * hw.pe_simd;
    if (hw.family == HwFamily::temporal) {
        double passes = std::ceil(static_cast<double>(macs) / elems);
        return passes * w_bits * a_bits / hw.clock_hz;
    }
    double lanes = spatial_lanes(w_bits, a_bits);
    return std::ceil(static_cast<double>(macs) / (elems * lanes)) / hw.clock_hz;
}

double peak_ops(int w_bits, int a_bits, const HardwareConfig& hw) {
    double elems = static_cast<double>(hw.pe_count()) * hw.pe_simd;
    if (hw.family == HwFamily::temporal) return elems * hw.clock_hz / (w_bits * a_bits);
    return elems * spatial_lanes(w_bits, a_bits) * hw.clock_hz;
}

}  // namespace

CostReport cost_report(const ModelGraph& model, const BitwidthPolicy& policy,
                       const HardwareConfig& hw) {
    policy.validate(model.num_layers());
    hw.validate();
    CostReport rep;
    for (int k = 0; k < model.num_layers(); ++k) {
        const LayerSpec& spec = model.spec(k);
        int wb = policy.layers[k].w_bits;
        int ab = policy.layers[k].a_bits;
        check_bits(wb);
        check_bits(ab);
        Workload wl = layer_workload(spec, hw.batch);

        LayerCost lc;
        lc.layer = k;
        lc.kind = spec.kind;
        lc.w_bits = wb;
        lc.a_bits = ab;
        lc.macs = wl.macs;
        lc.dram_bits = layer_dram_bits(wl, wb, ab, hw);
        lc.t_computation = layer_t_comp(wl.macs, wb, ab, hw);
        double t_dram = lc.dram_bits / (hw.dram_bus_bits * hw.clock_hz);
        lc.t_stall = std::max(0.0, t_dram - lc.t_computation);
        lc.t_overhead = hw.t_overhead_us * 1e-6;
        lc.latency = lc.t_computation + lc.t_stall + lc.t_overhead;
        lc.energy = hw.e_mem_pj_per_bit * 1e-12 * lc.dram_bits + hw.p_dynamic_w * lc.latency;
        lc.bitops = static_cast<double>(wl.macs) * wb * ab;
        lc.intensity = lc.dram_bits > 0 ? wl.macs / (lc.dram_bits / 8.0)
                                        : std::numeric_limits<double>::infinity();

        rep.total_latency += lc.latency;
        rep.total_energy += lc.energy;
        rep.total_dram_bits += lc.dram_bits;
        rep.total_macs += lc.macs;
        rep.total_bitops += lc.bitops;
        rep.layers.push_back(lc);
    }
    return rep;
}

CostReport latency(const ModelGraph& model, const BitwidthPolicy& policy,
                   const HardwareConfig& hw) {
    return cost_report(model, policy, hw);
}

CostReport energy(const ModelGraph& model, const BitwidthPolicy& policy,
                  const HardwareConfig& hw) {
    return cost_report(model, policy, hw);
}

double op_intensity(const LayerSpec& layer, int w_bits, int a_bits, const HardwareConfig& hw) {
    Workload wl = layer_workload(layer, hw.batch);
    double bits = layer_dram_bits(wl, w_bits, a_bits, hw);
    if (bits <= 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(wl.macs) / (bits / 8.0);
}

RooflinePoint roofline_point(const LayerSpec& layer, int w_bits, int a_bits,
                             const HardwareConfig& hw) {
    RooflinePoint pt;
    pt.peak = peak_ops(w_bits, a_bits, hw);
    pt.bandwidth = hw.bandwidth_bytes_per_s();
    pt.intensity = op_intensity(layer, w_bits, a_bits, hw);
    pt.attained = std::isinf(pt.intensity) ? pt.peak
                                           : std::min(pt.peak, pt.intensity * pt.bandwidth);
    return pt;
}

double bitops(const ModelGraph& model, const BitwidthPolicy& policy) {
    policy.validate(model.num_layers());
    double total = 0.0;
    for (int k = 0; k < model.num_layers(); ++k) {
        Workload wl = layer_workload(model.spec(k), 1);
        total += static_cast<double>(wl.macs) * policy.layers[k].w_bits * policy.layers[k].a_bits;
    }
    return total;
}

void CostReport::write_csv(const std::filesystem::path& file) const {
    std::ofstream out(file);
    if (!out) throw config_error("cannot write " + file.string());
    out << "layer,kind,w_bits,a_bits,macs,dram_bits,t_comp_us,t_stall_us,latency_us,energy_uj,"
           "intensity\n";
    char buf[256];
    for (const LayerCost& lc : layers) {
        std::snprintf(buf, sizeof buf, "%d,%s,%d,%d,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      lc.layer, to_string(lc.kind).c_str(), lc.w_bits, lc.a_bits, lc.macs,
                      lc.dram_bits, lc.t_computation * 1e6, lc.t_stall * 1e6, lc.latency * 1e6,
                      lc.energy * 1e6, lc.intensity);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "total,,,,%lld,%.9g,,,%.9g,%.9g,\n", total_macs,
                  total_dram_bits, total_latency * 1e6, total_energy * 1e6);
    out << buf;
}

void write_roofline_csv(const ModelGraph& model, const BitwidthPolicy& policy,
                        const HardwareConfig& hw, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw config_error("cannot write " + file.string());
    out << "layer,intensity,attained,peak,bandwidth\n";
    char buf[200];
    for (int k = 0; k < model.num_layers(); ++k) {
        RooflinePoint pt =
            roofline_point(model.spec(k), policy.layers[k].w_bits, policy.layers[k].a_bits, hw);
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", k, pt.intensity, pt.attained,
                      pt.peak, pt.bandwidth);
        out << buf;
    }
}

}  // namespace bitforge
