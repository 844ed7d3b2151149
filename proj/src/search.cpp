#include "bitforge/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bitforge/error.hpp"

namespace bitforge {

std::string to_string(Objective o) {
    switch (o) {
        case Objective::latency: return "latency";
        case Objective::energy: return "energy";
        case Objective::model_size: return "model_size";
        case Objective::bitops: return "bitops";
    }
    return "?";
}

Objective objective_from_string(const std::string& s) {
    if (s == "latency") return Objective::latency;
    if (s == "energy") return Objective::energy;
    if (s == "model_size" || s == "size") return Objective::model_size;
    if (s == "bitops") return Objective::bitops;
    throw config_error("unknown objective '" + s + "'");
}

std::string to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::ddpg: return "ddpg";
        case OptimizerKind::random_search: return "random";
        case OptimizerKind::evolutionary: return "evolutionary";
    }
    return "?";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "ddpg") return OptimizerKind::ddpg;
    if (s == "random") return OptimizerKind::random_search;
    if (s == "evolutionary") return OptimizerKind::evolutionary;
    throw config_error("unknown optimizer '" + s + "'");
}

// ---------------------------------------------------------------------------
// Observation
// ---------------------------------------------------------------------------

ObservationNormalizer::ObservationNormalizer(const ModelGraph& model) {
    lo_.fill(std::numeric_limits<double>::infinity());
    hi_.fill(-std::numeric_limits<double>::infinity());
    for (int k = 0; k < model.num_layers(); ++k) {
        for (StepKind step : {StepKind::weight, StepKind::activation}) {
            std::array<double, kObsDim> raw = layer_features(model, k, step, 0.0);
            for (int d = 0; d < kObsDim; ++d) {
                lo_[d] = std::min(lo_[d], raw[d]);
                hi_[d] = std::max(hi_[d], raw[d]);
            }
        }
    }
    // The step indicator and the previous action are already in [0,1].
    lo_[8] = 0.0; hi_[8] = 1.0;
    lo_[9] = 0.0; hi_[9] = 1.0;
}

std::array<double, kObsDim> ObservationNormalizer::normalize(
    const std::array<double, kObsDim>& raw) const {
    std::array<double, kObsDim> out{};
    for (int d = 0; d < kObsDim; ++d) {
        double span = hi_[d] - lo_[d];
        out[d] = span > 0.0 ? (raw[d] - lo_[d]) / span : 0.0;
    }
    return out;
}

int action_to_bits(double a, int b_min, int b_max) {
    double raw = std::round(b_min - 0.5 + a * (b_max - b_min + 1));
    return std::clamp(static_cast<int>(raw), b_min, b_max);
}

// ---------------------------------------------------------------------------
// Budget
// ---------------------------------------------------------------------------

double policy_cost(const ModelGraph& model, const BitwidthPolicy& policy, const Budget& budget) {
    switch (budget.objective) {
        case Objective::latency: return cost_report(model, policy, budget.hw).total_latency;
        case Objective::energy: return cost_report(model, policy, budget.hw).total_energy;
        case Objective::model_size:
            return static_cast<double>(model_size_bits(model, policy, true));
        case Objective::bitops: return bitops(model, policy);
    }
    return 0.0;
}

BitwidthPolicy enforce_budget(const ModelGraph& model, const BitwidthPolicy& policy,
                              const Budget& budget) {
    BitwidthPolicy p = policy;
    p.normalize();
    p.infeasible = false;
    if (budget.limit <= 0.0) throw config_error("budget limit must be positive");
    double cost = policy_cost(model, p, budget);
    if (cost <= budget.limit) return p;

    const bool weights_only = budget.objective == Objective::model_size;
    bool any_left = true;
    while (any_left) {
        any_left = false;
        for (int k = model.num_layers() - 1; k >= 0; --k) {
            if (p.is_pinned(k)) continue;
            if (!weights_only && p.layers[k].a_bits > kBitsMin) {
                p.layers[k].a_bits -= 1;
                any_left = true;
                if (policy_cost(model, p, budget) <= budget.limit) return p;
            }
            if (p.layers[k].w_bits > kBitsMin) {
                p.layers[k].w_bits -= 1;
                any_left = true;
                if (policy_cost(model, p, budget) <= budget.limit) return p;
            }
        }
    }
    p.infeasible = true;  // floor reached (pinned layers stay 8/8)
    return p;
}

// ---------------------------------------------------------------------------
// Episode evaluation
// ---------------------------------------------------------------------------

void SearchEnv::prepare_origin() {
    BitwidthPolicy uniform8 = BitwidthPolicy::uniform(model->num_layers(), 8, 8);
    CostReport rep = cost_report(*model, uniform8, budget.hw);
    origin_latency = rep.total_latency;
    origin_energy = rep.total_energy;
}

PolicyEval evaluate_policy(const SearchEnv& env, const BitwidthPolicy& policy,
                           uint64_t eval_seed) {
    PolicyEval ev;
    ev.policy = policy;
    ev.cost = policy_cost(*env.model, policy, env.budget);

    const bool codebook = env.budget.objective == Objective::model_size;
    ModelQuantizer mq =
        codebook ? ModelQuantizer::calibrate_codebook(*env.model, policy, env.seed)
                 : ModelQuantizer::calibrate(*env.model, policy, env.calib_split);

    ModelGraph tuned = *env.model;
    TrainConfig tc;
    tc.epochs = env.finetune_epochs;
    tc.batch_size = env.batch_size;
    tc.shuffle_seed = eval_seed;
    tc.requantize_each_step = env.requantize_each_step;
    finetune(tuned, env.finetune_split, tc, &mq);
    ev.accuracy = evaluate(tuned, env.reward_split, &mq);

    if (env.reward_cfg.mode == RewardMode::constrained) {
        ev.reward = env.reward_cfg.lambda * (ev.accuracy - env.acc_origin);
    } else {
        CostReport rep = cost_report(*env.model, policy, env.budget.hw);
        // Savings raise the reward; deltas are measured in ms / mJ.
        double lat_term =
            env.reward_cfg.lambda_latency * (env.origin_latency - rep.total_latency) * 1e3;
        double en_term =
            env.reward_cfg.lambda_energy * (env.origin_energy - rep.total_energy) * 1e3;
        double acc_term = env.reward_cfg.lambda_accuracy * (ev.accuracy - env.acc_origin);
        ev.reward = lat_term + en_term + acc_term;
    }
    return ev;
}

namespace {

// Episode evaluations share one finetune shuffle order per run, so the reward
// is a deterministic function of the policy rather than a noisy sample.
uint64_t eval_seed(const SearchEnv& env) { return env.seed * 1000003ull + 17ull; }

std::vector<int> unpinned_layers(const ModelGraph& model, const BitwidthPolicy& proto) {
    std::vector<int> out;
    for (int k = 0; k < model.num_layers(); ++k)
        if (!proto.is_pinned(k)) out.push_back(k);
    return out;
}

BitwidthPolicy pinned_prototype(const ModelGraph& model) {
    return BitwidthPolicy::uniform(model.num_layers(), kPinnedBits, kPinnedBits);
}

}  // namespace

EpisodeResult run_episode(const SearchEnv& env, DdpgAgent& agent, uint64_t episode_seed) {
    const ModelGraph& model = *env.model;
    ObservationNormalizer norm(model);
    BitwidthPolicy policy = pinned_prototype(model);
    std::vector<int> free_layers = unpinned_layers(model, policy);

    struct Step {
        int layer;
        StepKind kind;
        double action;
    };
    std::vector<Step> steps;
    double prev_action = 0.0;
    std::vector<std::array<double, kObsDim>> observations;
    for (int k : free_layers) {
        for (StepKind kind : {StepKind::weight, StepKind::activation}) {
            std::array<double, kObsDim> obs =
                norm.normalize(layer_features(model, k, kind, prev_action));
            double a = agent.explore_act(obs);
            observations.push_back(obs);
            steps.push_back({k, kind, a});
            prev_action = a;
        }
    }

    for (const Step& st : steps) {
        int bits = action_to_bits(st.action);
        if (st.kind == StepKind::weight)
            policy.layers[st.layer].w_bits = bits;
        else
            policy.layers[st.layer].a_bits = bits;
    }
    if (env.budget.objective == Objective::model_size)
        for (int k : free_layers) policy.layers[k].a_bits = 8;

    if (env.reward_cfg.mode == RewardMode::constrained)
        policy = enforce_budget(model, policy, env.budget);
    else
        policy.normalize();

    EpisodeResult res;
    res.eval = evaluate_policy(env, policy, episode_seed);

    res.transitions.resize(steps.size());
    for (size_t i = 0; i < steps.size(); ++i) {
        Transition& tr = res.transitions[i];
        tr.obs = observations[i];
        tr.action = steps[i].action;
        tr.reward = res.eval.reward;
        tr.terminal = i + 1 == steps.size();
        if (!tr.terminal) tr.next_obs = observations[i + 1];
    }
    return res;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

namespace {

struct BestTracker {
    double reward = -std::numeric_limits<double>::infinity();
    BitwidthPolicy policy;
    bool seen = false;

    void offer(double r, const BitwidthPolicy& p) {
        if (!seen || r > reward) {
            reward = r;
            policy = p;
            seen = true;
        }
    }
};

BitwidthPolicy random_policy(const ModelGraph& model, const Budget& budget, Rng& rng) {
    BitwidthPolicy p = pinned_prototype(model);
    for (int k = 0; k < model.num_layers(); ++k) {
        if (p.is_pinned(k)) continue;
        p.layers[k].w_bits = rng.uniform_int(kBitsMin, kBitsMax);
        p.layers[k].a_bits = budget.objective == Objective::model_size
                                 ? 8
                                 : rng.uniform_int(kBitsMin, kBitsMax);
    }
    return p;
}

void mutate_policy(BitwidthPolicy& p, const Budget& budget, double rate, Rng& rng) {
    for (size_t k = 0; k < p.layers.size(); ++k) {
        if (p.is_pinned(static_cast<int>(k))) continue;
        if (rng.uniform() < rate) {
            int delta = rng.uniform() < 0.5 ? -1 : 1;
            p.layers[k].w_bits = std::clamp(p.layers[k].w_bits + delta, kBitsMin, kBitsMax);
        }
        if (budget.objective != Objective::model_size && rng.uniform() < rate) {
            int delta = rng.uniform() < 0.5 ? -1 : 1;
            p.layers[k].a_bits = std::clamp(p.layers[k].a_bits + delta, kBitsMin, kBitsMax);
        }
    }
}

}  // namespace

SearchResult search(SearchEnv& env, const SearchOptions& opts) {
    if (opts.episodes < 1) throw config_error("search needs episodes >= 1");
    env.prepare_origin();

    SearchResult result;
    BestTracker best;
    Rng rng(env.seed);

    auto log_episode = [&](int episode, const PolicyEval& ev, double sigma) {
        result.log.push_back({episode, ev.reward, ev.accuracy, ev.cost, sigma});
        best.offer(ev.reward, ev.policy);
    };

    if (opts.optimizer == OptimizerKind::ddpg) {
        AgentConfig acfg = opts.agent;
        acfg.seed = env.seed;
        auto agent = std::make_shared<DdpgAgent>(acfg);
        result.agent = agent;
        for (int e = 0; e < opts.episodes; ++e) {
            EpisodeResult er = run_episode(env, *agent, eval_seed(env));
            log_episode(e, er.eval, agent->sigma());
            agent->finish_episode(std::move(er.transitions));
        }
    } else if (opts.optimizer == OptimizerKind::random_search) {
        for (int e = 0; e < opts.episodes; ++e) {
            BitwidthPolicy p = random_policy(*env.model, env.budget, rng);
            if (env.reward_cfg.mode == RewardMode::constrained)
                p = enforce_budget(*env.model, p, env.budget);
            PolicyEval ev = evaluate_policy(env, p, eval_seed(env));
            log_episode(e, ev, 0.0);
        }
    } else {
        // Evolutionary baseline: tournament selection, +-1-bit mutation,
        // elitism; every candidate evaluation counts toward the episode
        // budget.
        struct Individual {
            BitwidthPolicy policy;  // pre-enforcement genes
            double reward = 0.0;
        };
        std::vector<Individual> pop;
        int evals = 0;
        auto eval_individual = [&](Individual& ind) {
            BitwidthPolicy p = ind.policy;
            if (env.reward_cfg.mode == RewardMode::constrained)
                p = enforce_budget(*env.model, p, env.budget);
            PolicyEval ev = evaluate_policy(env, p, eval_seed(env));
            ind.reward = ev.reward;
            log_episode(evals, ev, 0.0);
            ++evals;
        };

        int pop_size = std::min(opts.population, opts.episodes);
        for (int i = 0; i < pop_size && evals < opts.episodes; ++i) {
            Individual ind;
            ind.policy = random_policy(*env.model, env.budget, rng);
            eval_individual(ind);
            pop.push_back(std::move(ind));
        }
        while (evals < opts.episodes) {
            std::vector<Individual> next;
            std::sort(pop.begin(), pop.end(),
                      [](const Individual& a, const Individual& b) { return a.reward > b.reward; });
            for (int i = 0; i < opts.elitism && i < static_cast<int>(pop.size()); ++i)
                next.push_back(pop[i]);  // elites carry over without re-evaluation
            while (static_cast<int>(next.size()) < pop_size && evals < opts.episodes) {
                int winner = rng.uniform_int(0, static_cast<int>(pop.size()) - 1);
                for (int t = 1; t < opts.tournament; ++t) {
                    int challenger = rng.uniform_int(0, static_cast<int>(pop.size()) - 1);
                    if (pop[challenger].reward > pop[winner].reward) winner = challenger;
                }
                Individual child;
                child.policy = pop[winner].policy;
                mutate_policy(child.policy, env.budget, opts.mutation_rate, rng);
                eval_individual(child);
                next.push_back(std::move(child));
            }
            pop = std::move(next);
        }
    }

    result.best_policy = best.policy;
    result.best_reward = best.reward;
    result.infeasible = best.policy.infeasible;
    // Re-measure the winner under the same deterministic evaluation.
    PolicyEval fin = evaluate_policy(env, best.policy, eval_seed(env));
    result.best_accuracy = fin.accuracy;
    result.best_cost = fin.cost;
    return result;
}

}  // namespace bitforge
