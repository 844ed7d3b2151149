#pragma once

#include <filesystem>
#include <vector>

namespace bitforge {

constexpr int kBitsMin = 2;
constexpr int kBitsMax = 8;
constexpr int kPinnedBits = 8;

// Per-layer bitwidth assignment. First and last layer are pinned to 8/8 by
// construction; the pinned list is part of the on-disk format.
struct BitwidthPolicy {
    struct Entry {
        int w_bits = kPinnedBits;
        int a_bits = kPinnedBits;
    };
    std::vector<Entry> layers;
    std::vector<int> pinned;
    bool infeasible = false;

    bool is_pinned(int k) const {
        for (int p : pinned) if (p == k) return true;
        return false;
    }

    // Uniform policy with the default first/last pinning.
    static BitwidthPolicy uniform(int num_layers, int w_bits, int a_bits);
    // Clamps entries into [2,8] and forces pinned layers to 8/8.
    void normalize();
    void validate(int num_layers) const;

    static BitwidthPolicy load(const std::filesystem::path& file);
    void save(const std::filesystem::path& file) const;

    bool operator==(const BitwidthPolicy& other) const {
        if (layers.size() != other.layers.size()) return false;
        for (size_t k = 0; k < layers.size(); ++k)
            if (layers[k].w_bits != other.layers[k].w_bits ||
                layers[k].a_bits != other.layers[k].a_bits)
                return false;
        return true;
    }
};

}  // namespace bitforge
