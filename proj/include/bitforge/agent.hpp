#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <vector>

#include "bitforge/rng.hpp"

namespace bitforge {

constexpr int kObsDim = 10;

// Three fully-connected layers with ReLU hidden units. The actor squashes its
// output with a sigmoid, the critic is linear. All parameters live in one
// flat vector so Adam and finite-difference checks can treat the net as a
// plain parameter array.
class Mlp {
public:
    Mlp() = default;
    Mlp(int in, int h1, int h2, bool sigmoid_out, Rng& rng, double final_scale = 3e-3);

    double forward(std::span<const double> x) const;
    // Backward for scalar output with upstream gradient dout. Accumulates
    // into param_grads (same layout as params()); optionally fills dx.
    double forward_backward(std::span<const double> x, double dout,
                            std::span<double> param_grads, std::span<double> dx_or_empty) const;

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    size_t param_count() const { return params_.size(); }
    int input_dim() const { return in_; }

private:
    int in_ = 0, h1_ = 0, h2_ = 0;
    bool sigmoid_out_ = false;
    std::vector<double> params_;  // [W1 | b1 | W2 | b2 | W3 | b3]

    struct Offsets {
        size_t w1, b1, w2, b2, w3, b3;
    };
    Offsets offsets() const;
};

// Bias-corrected Adam over a flat parameter vector.
class Adam {
public:
    Adam() = default;
    Adam(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::span<double> params, std::span<const double> grads);

    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;
    std::vector<double> m, v;
};

struct Transition {
    std::array<double, kObsDim> obs{};
    double action = 0.0;
    double reward = 0.0;
    std::array<double, kObsDim> next_obs{};
    bool terminal = false;
};

using Episode = std::vector<Transition>;

// Ring buffer of whole episodes, oldest evicted first.
class ReplayStore {
public:
    explicit ReplayStore(size_t capacity = 32) : capacity_(capacity) {}
    void push(Episode e);
    size_t size() const { return episodes_.size(); }
    const Episode& at(size_t i) const { return episodes_[i]; }
    // Up to k distinct episode indices, uniformly without replacement.
    std::vector<size_t> sample(size_t k, Rng& rng) const;

private:
    size_t capacity_;
    std::deque<Episode> episodes_;
};

struct AgentConfig {
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double gamma = 1.0;
    double sigma0 = 0.5;
    double sigma_decay = 0.99;
    double baseline_ema = 0.95;
    double tau = 0.01;
    int hidden1 = 400;
    int hidden2 = 300;
    int replay_depth = 2;       // previous episodes mixed into each update
    int updates_per_episode = 32;
    size_t replay_capacity = 16;
    bool literal_eq11 = false;  // use online nets instead of targets for Q-hat
    uint64_t seed = 0;
};

struct UpdateStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
};

// DDPG with a per-episode reward broadcast to every step, an EMA reward
// baseline, truncated-normal exploration and soft-updated target networks.
class DdpgAgent {
public:
    explicit DdpgAgent(const AgentConfig& cfg);

    double act(std::span<const double> obs) const;
    // act() plus truncated-normal noise at the current sigma; rejection
    // sampling into [0,1] with a clamp fallback after 100 draws.
    double explore_act(std::span<const double> obs);

    std::vector<double> compute_targets(const Episode& episode) const;
    // One full post-episode training step: stores the episode, runs the
    // configured number of critic/actor updates over it plus replayed
    // episodes, soft-updates the targets, folds the reward into the baseline
    // and decays sigma.
    UpdateStats finish_episode(Episode episode);

    double sigma() const { return sigma_; }
    double baseline() const { return baseline_; }
    long episodes_done() const { return episodes_done_; }

    // Loss+gradient entry points used by the update and by gradient tests.
    double critic_loss_and_grads(const std::vector<Transition>& batch,
                                 const std::vector<double>& targets,
                                 std::vector<double>& grads) const;
    double actor_loss_and_grads(const std::vector<Transition>& batch,
                                std::vector<double>& grads) const;

    Mlp& actor() { return actor_; }
    Mlp& critic() { return critic_; }
    Mlp& actor_target() { return actor_target_; }
    Mlp& critic_target() { return critic_target_; }
    const Mlp& actor_target() const { return actor_target_; }
    const Mlp& critic_target() const { return critic_target_; }
    const AgentConfig& config() const { return cfg_; }

    // target <- tau * online + (1 - tau) * target, both nets.
    void soft_update_targets();

    void save(const std::filesystem::path& file) const;
    static DdpgAgent load_checkpoint(const std::filesystem::path& file);

private:

    AgentConfig cfg_;
    Mlp actor_, critic_, actor_target_, critic_target_;
    Adam actor_opt_, critic_opt_;
    ReplayStore store_;
    mutable Rng rng_;
    double sigma_ = 0.5;
    double baseline_ = 0.0;
    long episodes_done_ = 0;
};

}  // namespace bitforge
