#include "bitforge/runio.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "bitforge/error.hpp"

namespace bitforge {

using nlohmann::json;

std::filesystem::path resolve_run_root(const std::string& cli_out) {
    if (const char* env = std::getenv("BITFORGE_RUN_DIR"); env && *env)
        return std::filesystem::path(env);
    if (!cli_out.empty()) return std::filesystem::path(cli_out);
    return std::filesystem::path("runs");
}

void write_json_atomic(const std::filesystem::path& file, const json& j) {
    std::filesystem::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw config_error("cannot write " + tmp.string());
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, file);
}

json read_json(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw config_error("cannot open " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error(file.string() + ": " + e.what());
    }
    return j;
}

namespace {

std::string utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace

ManifestWriter::ManifestWriter(std::string command, json config_snapshot, uint64_t seed) {
    j_["tool"] = "bitforge";
    j_["version"] = kToolVersion;
    j_["command"] = std::move(command);
    j_["seed"] = seed;
    j_["config"] = std::move(config_snapshot);
    j_["started"] = utc_now();
    j_["artifacts"] = json::object();
    j_["results"] = json::object();
}

void ManifestWriter::add_artifact(const std::string& name, const std::string& relative_path) {
    j_["artifacts"][name] = relative_path;
}

void ManifestWriter::add_result(const std::string& name, const json& value) {
    j_["results"][name] = value;
}

void ManifestWriter::write(const std::filesystem::path& run_dir) {
    j_["finished"] = utc_now();
    write_json_atomic(run_dir / "manifest.json", j_);
}

void write_exploration_csv(const std::filesystem::path& file,
                           const std::vector<SearchLogRow>& rows) {
    std::ofstream out(file);
    if (!out) throw config_error("cannot write " + file.string());
    out << "episode,reward,accuracy,cost,sigma\n";
    char buf[160];
    for (const SearchLogRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g,%.12g\n", r.episode, r.reward,
                      r.accuracy, r.cost, r.sigma);
        out << buf;
    }
}

void write_policy_csv(const std::filesystem::path& file, const ModelGraph& model,
                      const BitwidthPolicy& policy) {
    std::ofstream out(file);
    if (!out) throw config_error("cannot write " + file.string());
    out << "layer,kind,w_bits,a_bits\n";
    for (int k = 0; k < model.num_layers(); ++k)
        out << k << "," << to_string(model.spec(k).kind) << "," << policy.layers[k].w_bits << ","
            << policy.layers[k].a_bits << "\n";
}

double parse_limit(const std::string& text, Objective objective, const ModelGraph& model,
                   const HardwareConfig& hw) {
    if (text.empty()) throw config_error("empty budget limit");
    size_t pos = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw config_error("cannot parse budget limit '" + text + "'");
    }
    std::string unit = text.substr(pos);
    if (unit == "x8") {
        // Fraction of the uniform-8/8 cost of this model on this hardware.
        Budget b{objective, 1.0, hw};
        BitwidthPolicy uniform8 = BitwidthPolicy::uniform(model.num_layers(), 8, 8);
        return value * policy_cost(model, uniform8, b);
    }
    if (unit.empty()) return value;
    struct UnitScale {
        const char* suffix;
        double scale;
    };
    static const UnitScale scales[] = {{"s", 1.0},    {"ms", 1e-3},  {"us", 1e-6},
                                       {"J", 1.0},    {"mJ", 1e-3},  {"uJ", 1e-6},
                                       {"bits", 1.0}, {"Kib", 8192}, {"KiB", 8192},
                                       {"MiB", 8388608}, {"bitops", 1.0}, {"Gbitops", 1e9}};
    for (const UnitScale& u : scales)
        if (unit == u.suffix) return value * u.scale;
    throw config_error("unknown budget unit '" + unit + "'");
}

}  // namespace bitforge
