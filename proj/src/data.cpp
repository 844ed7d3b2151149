#include "bitforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "bitforge/error.hpp"
#include "bitforge/rng.hpp"

namespace bitforge {

using nlohmann::json;

namespace {

// Bilinear upsample of a coarse grid to side x side; gives smooth class
// prototypes that a small CNN can separate but low bitwidths blur together.
void upsample_into(const std::vector<double>& coarse, int cside, double* out, int side,
                   double gain) {
    for (int y = 0; y < side; ++y) {
        double fy = static_cast<double>(y) / side * (cside - 1);
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, cside - 1);
        double ty = fy - y0;
        for (int x = 0; x < side; ++x) {
            double fx = static_cast<double>(x) / side * (cside - 1);
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, cside - 1);
            double tx = fx - x0;
            double v = (1 - ty) * ((1 - tx) * coarse[y0 * cside + x0] + tx * coarse[y0 * cside + x1]) +
                       ty * ((1 - tx) * coarse[y1 * cside + x0] + tx * coarse[y1 * cside + x1]);
            out[y * side + x] = gain * v;
        }
    }
}

DatasetSplit make_split(const std::vector<std::vector<double>>& prototypes,
                        const SyntheticConfig& cfg, int per_class, Rng& rng) {
    int n = per_class * cfg.classes;
    DatasetSplit split;
    split.x = Tensor(n, cfg.channels, cfg.side, cfg.side);
    split.labels.resize(n);
    int features = cfg.channels * cfg.side * cfg.side;
    for (int i = 0; i < n; ++i) {
        int cls = i % cfg.classes;  // exact balance: n/classes per class
        split.labels[i] = cls;
        double* dst = split.x.sample(i);
        const double* proto = prototypes[cls].data();
        for (int f = 0; f < features; ++f) dst[f] = proto[f] + cfg.noise_sd * rng.normal();
    }
    return split;
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    Rng rng(cfg.seed);
    const int cside = 4;
    std::vector<std::vector<double>> prototypes(cfg.classes);
    for (int cls = 0; cls < cfg.classes; ++cls) {
        prototypes[cls].resize(static_cast<size_t>(cfg.channels) * cfg.side * cfg.side);
        for (int ch = 0; ch < cfg.channels; ++ch) {
            std::vector<double> coarse(cside * cside);
            for (double& v : coarse) v = rng.normal();
            upsample_into(coarse, cside, prototypes[cls].data() + static_cast<size_t>(ch) * cfg.side * cfg.side,
                          cfg.side, 1.0);
        }
    }

    Dataset ds;
    ds.num_classes = cfg.classes;
    ds.train = make_split(prototypes, cfg, cfg.train_per_class, rng);
    ds.val = make_split(prototypes, cfg, cfg.val_per_class, rng);

    ds.calib.x = Tensor(cfg.calib_count, cfg.channels, cfg.side, cfg.side);
    ds.calib.labels.resize(cfg.calib_count);
    int features = cfg.channels * cfg.side * cfg.side;
    for (int i = 0; i < cfg.calib_count; ++i) {
        int cls = i % cfg.classes;
        ds.calib.labels[i] = cls;
        double* dst = ds.calib.x.sample(i);
        for (int f = 0; f < features; ++f)
            dst[f] = prototypes[cls][f] + cfg.noise_sd * rng.normal();
    }
    return ds;
}

namespace {

constexpr char kMagic[4] = {'B', 'F', 'D', 'S'};

void write_split(const DatasetSplit& s, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw config_error("cannot write " + file.string());
    out.write(kMagic, 4);
    uint32_t hdr[5] = {1u, static_cast<uint32_t>(s.x.n), static_cast<uint32_t>(s.x.c),
                       static_cast<uint32_t>(s.x.h), static_cast<uint32_t>(s.x.w)};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    std::vector<float> data(s.x.v.begin(), s.x.v.end());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
    std::vector<int32_t> labels(s.labels.begin(), s.labels.end());
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size() * 4));
}

DatasetSplit read_split(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw config_error("cannot open dataset split " + file.string());
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw config_error(file.string() + " is not a dataset split file");
    uint32_t hdr[5];
    in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    if (hdr[0] != 1) throw config_error("unsupported dataset version in " + file.string());
    DatasetSplit s;
    s.x = Tensor(static_cast<int>(hdr[1]), static_cast<int>(hdr[2]), static_cast<int>(hdr[3]),
                 static_cast<int>(hdr[4]));
    std::vector<float> data(s.x.size());
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
    std::copy(data.begin(), data.end(), s.x.v.begin());
    std::vector<int32_t> labels(hdr[1]);
    in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size() * 4));
    if (!in) throw config_error("dataset split " + file.string() + " truncated");
    s.labels.assign(labels.begin(), labels.end());
    return s;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir, uint64_t seed) {
    std::filesystem::create_directories(dir);
    write_split(ds.train, dir / "train.bin");
    write_split(ds.val, dir / "val.bin");
    write_split(ds.calib, dir / "calib.bin");
    json j;
    j["seed"] = seed;
    j["classes"] = ds.num_classes;
    j["splits"] = {{"train", {{"file", "train.bin"}, {"count", ds.train.count()}}},
                   {"val", {{"file", "val.bin"}, {"count", ds.val.count()}}},
                   {"calibration", {{"file", "calib.bin"}, {"count", ds.calib.count()}}}};
    std::ofstream out(dir / "dataset.json");
    out << j.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "dataset.json");
    if (!in) throw config_error("no dataset.json under " + dir.string());
    json j;
    in >> j;
    Dataset ds;
    ds.num_classes = j.value("classes", 10);
    ds.train = read_split(dir / j["splits"]["train"]["file"].get<std::string>());
    ds.val = read_split(dir / j["splits"]["val"]["file"].get<std::string>());
    ds.calib = read_split(dir / j["splits"]["calibration"]["file"].get<std::string>());
    for (const DatasetSplit* s : {&ds.train, &ds.val, &ds.calib})
        for (int label : s->labels)
            if (label < 0 || label >= ds.num_classes)
                throw config_error("label out of range in dataset " + dir.string());
    return ds;
}

void split_for_search(const DatasetSplit& train, DatasetSplit& finetune_split,
                      DatasetSplit& reward_split) {
    int n = train.count();
    // Stratified: every fifth occurrence of each class is held out, so the
    // reward split keeps the class balance of the training data.
    std::vector<int> seen(256, 0);
    std::vector<bool> held(n, false);
    int n_reward = 0;
    for (int i = 0; i < n; ++i) {
        int cls = train.labels[i];
        if (cls >= static_cast<int>(seen.size())) seen.resize(cls + 1, 0);
        if (seen[cls] % 5 == 4) {
            held[i] = true;
            ++n_reward;
        }
        ++seen[cls];
    }
    int n_fine = n - n_reward;
    finetune_split.x = Tensor(n_fine, train.x.c, train.x.h, train.x.w);
    finetune_split.labels.resize(n_fine);
    reward_split.x = Tensor(n_reward, train.x.c, train.x.h, train.x.w);
    reward_split.labels.resize(n_reward);
    int fi = 0, ri = 0;
    for (int i = 0; i < n; ++i) {
        DatasetSplit& dst = held[i] ? reward_split : finetune_split;
        int& idx = held[i] ? ri : fi;
        std::copy(train.x.sample(i), train.x.sample(i) + train.x.features(), dst.x.sample(idx));
        dst.labels[idx] = train.labels[i];
        ++idx;
    }
}

}  // namespace bitforge
