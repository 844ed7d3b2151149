#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bitforge/search.hpp"

namespace bitforge {

inline constexpr const char* kToolVersion = "0.1.0";

// Resolves the output root: BITFORGE_RUN_DIR env var wins, then the explicit
// flag, then ./runs.
std::filesystem::path resolve_run_root(const std::string& cli_out);

// Writes JSON atomically (temp file + rename).
void write_json_atomic(const std::filesystem::path& file, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& file);

// Run manifest: config snapshot + artifact paths, written at run end.
class ManifestWriter {
public:
    ManifestWriter(std::string command, nlohmann::json config_snapshot, uint64_t seed);
    void add_artifact(const std::string& name, const std::string& relative_path);
    void add_result(const std::string& name, const nlohmann::json& value);
    void write(const std::filesystem::path& run_dir);

private:
    nlohmann::json j_;
};

void write_exploration_csv(const std::filesystem::path& file,
                           const std::vector<SearchLogRow>& rows);
// Per-layer bits for bar plots: layer,kind,w_bits,a_bits.
void write_policy_csv(const std::filesystem::path& file, const ModelGraph& model,
                      const BitwidthPolicy& policy);

// Parses "12.5ms", "3.4mJ", "0.55x8" (fraction of the uniform-8/8 cost), or a
// bare number in base units (s / J / bits / bit-ops).
double parse_limit(const std::string& text, Objective objective, const ModelGraph& model,
                   const HardwareConfig& hw);

}  // namespace bitforge
