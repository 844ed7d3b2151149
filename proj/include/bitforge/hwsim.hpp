#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bitforge/netgraph.hpp"
#include "bitforge/policy.hpp"

namespace bitforge {

enum class HwFamily { temporal, spatial };

// Parametric multi-precision accelerator. The temporal family models a
// bit-serial design (one bit-pair per PE pass over pe_simd-wide dot lanes),
// the spatial family a fused-PE design where (16/b)^2 two-bit elements share
// a PE. PE array, DRAM port width and batch for the named presets follow the
// published edge/cloud configurations; clock, energy constants, pe_simd and
// overhead are documented defaults of this simulator.
struct HardwareConfig {
    std::string name = "custom";
    HwFamily family = HwFamily::temporal;
    int batch = 1;
    int pe_rows = 8;
    int pe_cols = 8;
    int pe_simd = 256;          // MAC lanes per PE per pass (temporal); 1 for spatial
    double dram_bus_bits = 256; // bits transferred per cycle
    double clock_hz = 2.0e8;
    double on_chip_kib = 630.0;
    double e_mem_pj_per_bit = 20.0;
    double p_dynamic_w = 1.0;
    double t_overhead_us = 0.05;
    bool all_on_chip = false;   // hypothetical: no DRAM traffic at all

    long long pe_count() const { return 1LL * pe_rows * pe_cols; }
    double bandwidth_bytes_per_s() const { return dram_bus_bits * clock_hz / 8.0; }

    static HardwareConfig edge();
    static HardwareConfig cloud();
    static HardwareConfig preset_or_file(const std::string& name_or_path);
    static HardwareConfig load(const std::filesystem::path& file);
    void save(const std::filesystem::path& file) const;
    void validate() const;
};

struct Workload {
    long long macs = 0;
    long long weight_count = 0;
    long long act_in = 0;
    long long act_out = 0;
};

// Analytic per-layer counts; macs and activation counts include the batch
// factor, weight_count does not.
Workload layer_workload(const LayerSpec& layer, int batch);

struct LayerCost {
    int layer = 0;
    LayerKind kind = LayerKind::conv;
    int w_bits = 8;
    int a_bits = 8;
    long long macs = 0;
    double dram_bits = 0.0;
    double t_computation = 0.0;  // seconds
    double t_stall = 0.0;
    double t_overhead = 0.0;
    double latency = 0.0;
    double energy = 0.0;  // joules
    double bitops = 0.0;
    double intensity = 0.0;  // MACs per DRAM byte
};

struct CostReport {
    std::vector<LayerCost> layers;
    double total_latency = 0.0;
    double total_energy = 0.0;
    double total_dram_bits = 0.0;
    long long total_macs = 0;
    double total_bitops = 0.0;

    void write_csv(const std::filesystem::path& file) const;
};

// Full latency/energy breakdown under the declared cycle model.
CostReport cost_report(const ModelGraph& model, const BitwidthPolicy& policy,
                       const HardwareConfig& hw);
// Op-named accessors over the same simulation.
CostReport latency(const ModelGraph& model, const BitwidthPolicy& policy,
                   const HardwareConfig& hw);
CostReport energy(const ModelGraph& model, const BitwidthPolicy& policy,
                  const HardwareConfig& hw);

double op_intensity(const LayerSpec& layer, int w_bits, int a_bits, const HardwareConfig& hw);

struct RooflinePoint {
    double intensity = 0.0;  // MACs / DRAM byte
    double attained = 0.0;   // MACs / s
    double peak = 0.0;
    double bandwidth = 0.0;  // bytes / s
};

RooflinePoint roofline_point(const LayerSpec& layer, int w_bits, int a_bits,
                             const HardwareConfig& hw);
void write_roofline_csv(const ModelGraph& model, const BitwidthPolicy& policy,
                        const HardwareConfig& hw, const std::filesystem::path& file);

// Sum over layers of macs * w_bits * a_bits (the hardware-agnostic proxy).
double bitops(const ModelGraph& model, const BitwidthPolicy& policy);

}  // namespace bitforge
