#pragma once

#include <cstdint>
#include <filesystem>

#include "bitforge/netgraph.hpp"

namespace bitforge {

struct SyntheticConfig {
    uint64_t seed = 42;
    int classes = 10;
    int channels = 3;
    int side = 32;
    int train_per_class = 64;
    int val_per_class = 16;
    int calib_count = 64;
    double noise_sd = 0.6;
};

// Ten-class image task: each class is a smooth random prototype field,
// samples are the prototype plus pixel noise. Fully determined by the seed.
Dataset generate_synthetic(const SyntheticConfig& cfg);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir, uint64_t seed);
Dataset load_dataset(const std::filesystem::path& dir);

// Deterministic 80/20 split of the train split used during search: every
// fifth sample (index % 5 == 4) goes to the held-out reward split.
void split_for_search(const DatasetSplit& train, DatasetSplit& finetune_split,
                      DatasetSplit& reward_split);

}  // namespace bitforge
