#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bitforge/agent.hpp"
#include "bitforge/data.hpp"
#include "bitforge/hwsim.hpp"
#include "bitforge/netgraph.hpp"
#include "bitforge/policy.hpp"
#include "bitforge/quantizer.hpp"

namespace bitforge {

enum class Objective { latency, energy, model_size, bitops };
std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

struct Budget {
    Objective objective = Objective::latency;
    double limit = 0.0;  // seconds / joules / bits / bit-ops
    HardwareConfig hw;
};

enum class RewardMode { constrained, accuracy_guaranteed };

struct RewardConfig {
    RewardMode mode = RewardMode::constrained;
    double lambda = 0.1;
    double lambda_latency = 1.0;  // per millisecond saved
    double lambda_energy = 1.0;   // per millijoule saved
    double lambda_accuracy = 20.0;
};

// Per-dimension min-max table over all (layer, step) raw tuples of a model.
// The step indicator and previous-action dimensions are fixed to [0,1];
// constant dimensions map to 0.
class ObservationNormalizer {
public:
    ObservationNormalizer() = default;
    explicit ObservationNormalizer(const ModelGraph& model);
    std::array<double, kObsDim> normalize(const std::array<double, kObsDim>& raw) const;

private:
    std::array<double, kObsDim> lo_{}, hi_{};
};

// Eq-style action decoding: b = round(b_min - 0.5 + a * (b_max - b_min + 1)),
// half away from zero, clamped into [b_min, b_max].
int action_to_bits(double a, int b_min = kBitsMin, int b_max = kBitsMax);

double policy_cost(const ModelGraph& model, const BitwidthPolicy& policy, const Budget& budget);

// Deterministic bit decrement until the budget holds: passes walk unpinned
// layers from last to first, lowering the activation field then the weight
// field by one (weight only for the model-size objective), re-checking cost
// after each decrement. Sets the infeasible flag when the floor still
// exceeds the limit. Never raises bits.
BitwidthPolicy enforce_budget(const ModelGraph& model, const BitwidthPolicy& policy,
                              const Budget& budget);

struct SearchEnv {
    const ModelGraph* model = nullptr;
    DatasetSplit finetune_split;
    DatasetSplit reward_split;
    DatasetSplit calib_split;
    double acc_origin = 0.0;
    Budget budget;
    RewardConfig reward_cfg;
    int finetune_epochs = 1;
    int batch_size = 32;
    bool requantize_each_step = true;
    uint64_t seed = 0;

    // Resource baselines for accuracy-guaranteed mode (uniform 8/8 policy).
    double origin_latency = 0.0;
    double origin_energy = 0.0;

    void prepare_origin();  // fills origin_latency / origin_energy
};

struct PolicyEval {
    double reward = 0.0;
    double accuracy = 0.0;
    double cost = 0.0;
    BitwidthPolicy policy;
};

// Quantize -> finetune one (configured) epoch -> evaluate -> reward. The
// eval_seed controls the finetune shuffle so reruns are bit-identical.
PolicyEval evaluate_policy(const SearchEnv& env, const BitwidthPolicy& policy,
                           uint64_t eval_seed);

struct EpisodeResult {
    Episode transitions;
    PolicyEval eval;
};

// One DDPG episode: two steps (weight, activation) per unpinned layer, budget
// enforcement, then the quantize/finetune/evaluate reward.
EpisodeResult run_episode(const SearchEnv& env, DdpgAgent& agent, uint64_t episode_seed);

enum class OptimizerKind { ddpg, random_search, evolutionary };
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct SearchLogRow {
    int episode = 0;
    double reward = 0.0;
    double accuracy = 0.0;
    double cost = 0.0;
    double sigma = 0.0;
};

struct SearchResult {
    BitwidthPolicy best_policy;
    double best_reward = 0.0;
    double best_accuracy = 0.0;  // re-measured on the best policy
    double best_cost = 0.0;
    bool infeasible = false;
    std::vector<SearchLogRow> log;
    std::shared_ptr<DdpgAgent> agent;  // set for the ddpg optimizer
};

struct SearchOptions {
    OptimizerKind optimizer = OptimizerKind::ddpg;
    int episodes = 600;
    AgentConfig agent;
    // Evolutionary baseline knobs.
    int population = 20;
    int tournament = 4;
    double mutation_rate = 0.1;
    int elitism = 2;
};

SearchResult search(SearchEnv& env, const SearchOptions& opts);

}  // namespace bitforge
