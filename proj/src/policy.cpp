#include "bitforge/policy.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "bitforge/error.hpp"

namespace bitforge {

using nlohmann::json;

BitwidthPolicy BitwidthPolicy::uniform(int num_layers, int w_bits, int a_bits) {
    BitwidthPolicy p;
    p.layers.assign(num_layers, {w_bits, a_bits});
    if (num_layers > 0) {
        p.pinned = num_layers > 1 ? std::vector<int>{0, num_layers - 1} : std::vector<int>{0};
    }
    p.normalize();
    return p;
}

void BitwidthPolicy::normalize() {
    for (Entry& e : layers) {
        e.w_bits = std::clamp(e.w_bits, kBitsMin, kBitsMax);
        e.a_bits = std::clamp(e.a_bits, kBitsMin, kBitsMax);
    }
    for (int p : pinned)
        if (p >= 0 && p < static_cast<int>(layers.size()))
            layers[p] = {kPinnedBits, kPinnedBits};
}

void BitwidthPolicy::validate(int num_layers) const {
    if (static_cast<int>(layers.size()) != num_layers)
        throw config_error("policy covers " + std::to_string(layers.size()) + " layers, model has " +
                           std::to_string(num_layers));
    for (size_t k = 0; k < layers.size(); ++k) {
        if (layers[k].w_bits < kBitsMin || layers[k].w_bits > kBitsMax ||
            layers[k].a_bits < kBitsMin || layers[k].a_bits > kBitsMax)
            throw config_error("policy bits out of range at layer " + std::to_string(k));
    }
    for (int p : pinned) {
        if (p < 0 || p >= num_layers) throw config_error("pinned index out of range");
        if (layers[p].w_bits != kPinnedBits || layers[p].a_bits != kPinnedBits)
            throw config_error("pinned layer " + std::to_string(p) + " is not 8/8");
    }
}

BitwidthPolicy BitwidthPolicy::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw config_error("cannot open policy file " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("policy file " + file.string() + ": " + e.what());
    }
    BitwidthPolicy p;
    size_t count = j.at("layers").size();
    p.layers.resize(count);
    for (const json& lj : j.at("layers")) {
        int k = lj.at("k").get<int>();
        if (k < 0 || static_cast<size_t>(k) >= count)
            throw config_error("policy layer index " + std::to_string(k) + " out of range");
        p.layers[k].w_bits = lj.at("w_bits").get<int>();
        p.layers[k].a_bits = lj.at("a_bits").get<int>();
    }
    for (const json& pj : j.value("pinned", json::array())) p.pinned.push_back(pj.get<int>());
    p.infeasible = j.value("infeasible", false);
    p.normalize();
    return p;
}

void BitwidthPolicy::save(const std::filesystem::path& file) const {
    json j;
    j["layers"] = json::array();
    for (size_t k = 0; k < layers.size(); ++k)
        j["layers"].push_back(
            {{"k", k}, {"w_bits", layers[k].w_bits}, {"a_bits", layers[k].a_bits}});
    j["pinned"] = pinned;
    j["infeasible"] = infeasible;
    std::ofstream out(file);
    if (!out) throw config_error("cannot write policy file " + file.string());
    out << j.dump(2) << "\n";
}

}  // namespace bitforge
