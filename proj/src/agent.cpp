#include "bitforge/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "bitforge/error.hpp"

namespace bitforge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Mlp
// ---------------------------------------------------------------------------

Mlp::Mlp(int in, int h1, int h2, bool sigmoid_out, Rng& rng, double final_scale)
    : in_(in), h1_(h1), h2_(h2), sigmoid_out_(sigmoid_out) {
    params_.assign(static_cast<size_t>(h1) * in + h1 + static_cast<size_t>(h2) * h1 + h2 +
                       static_cast<size_t>(h2) + 1,
                   0.0);
    Offsets o = offsets();
    // Uniform fan-in init; the output layer starts near zero so the actor's
    // sigmoid begins around 0.5.
    double b1 = 1.0 / std::sqrt(static_cast<double>(in));
    for (size_t i = o.w1; i < o.b1; ++i) params_[i] = rng.uniform(-b1, b1);
    double b2 = 1.0 / std::sqrt(static_cast<double>(h1));
    for (size_t i = o.w2; i < o.b2; ++i) params_[i] = rng.uniform(-b2, b2);
    for (size_t i = o.w3; i < o.b3; ++i) params_[i] = rng.uniform(-final_scale, final_scale);
}

Mlp::Offsets Mlp::offsets() const {
    Offsets o;
    o.w1 = 0;
    o.b1 = o.w1 + static_cast<size_t>(h1_) * in_;
    o.w2 = o.b1 + h1_;
    o.b2 = o.w2 + static_cast<size_t>(h2_) * h1_;
    o.w3 = o.b2 + h2_;
    o.b3 = o.w3 + h2_;
    return o;
}

double Mlp::forward(std::span<const double> x) const {
    Offsets o = offsets();
    std::vector<double> a1(h1_), a2(h2_);
    for (int i = 0; i < h1_; ++i) {
        const double* w = &params_[o.w1 + static_cast<size_t>(i) * in_];
        double acc = params_[o.b1 + i];
        for (int j = 0; j < in_; ++j) acc += w[j] * x[j];
        a1[i] = acc > 0.0 ? acc : 0.0;
    }
    for (int i = 0; i < h2_; ++i) {
        const double* w = &params_[o.w2 + static_cast<size_t>(i) * h1_];
        double acc = params_[o.b2 + i];
        for (int j = 0; j < h1_; ++j) acc += w[j] * a1[j];
        a2[i] = acc > 0.0 ? acc : 0.0;
    }
    double out = params_[o.b3];
    for (int j = 0; j < h2_; ++j) out += params_[o.w3 + j] * a2[j];
    return sigmoid_out_ ? 1.0 / (1.0 + std::exp(-out)) : out;
}

double Mlp::forward_backward(std::span<const double> x, double dout,
                             std::span<double> param_grads, std::span<double> dx) const {
    Offsets o = offsets();
    std::vector<double> z1(h1_), a1(h1_), z2(h2_), a2(h2_);
    for (int i = 0; i < h1_; ++i) {
        const double* w = &params_[o.w1 + static_cast<size_t>(i) * in_];
        double acc = params_[o.b1 + i];
        for (int j = 0; j < in_; ++j) acc += w[j] * x[j];
        z1[i] = acc;
        a1[i] = acc > 0.0 ? acc : 0.0;
    }
    for (int i = 0; i < h2_; ++i) {
        const double* w = &params_[o.w2 + static_cast<size_t>(i) * h1_];
        double acc = params_[o.b2 + i];
        for (int j = 0; j < h1_; ++j) acc += w[j] * a1[j];
        z2[i] = acc;
        a2[i] = acc > 0.0 ? acc : 0.0;
    }
    double z3 = params_[o.b3];
    for (int j = 0; j < h2_; ++j) z3 += params_[o.w3 + j] * a2[j];
    double out = sigmoid_out_ ? 1.0 / (1.0 + std::exp(-z3)) : z3;

    double d3 = sigmoid_out_ ? dout * out * (1.0 - out) : dout;
    std::vector<double> d2(h2_), d1(h1_);
    for (int j = 0; j < h2_; ++j) {
        param_grads[o.w3 + j] += d3 * a2[j];
        d2[j] = z2[j] > 0.0 ? d3 * params_[o.w3 + j] : 0.0;
    }
    param_grads[o.b3] += d3;
    for (int i = 0; i < h2_; ++i) {
        if (d2[i] == 0.0) continue;
        double* wg = &param_grads[o.w2 + static_cast<size_t>(i) * h1_];
        const double* w = &params_[o.w2 + static_cast<size_t>(i) * h1_];
        for (int j = 0; j < h1_; ++j) {
            wg[j] += d2[i] * a1[j];
            d1[j] += d2[i] * w[j];
        }
        param_grads[o.b2 + i] += d2[i];
    }
    for (int i = 0; i < h1_; ++i) {
        double di = z1[i] > 0.0 ? d1[i] : 0.0;
        if (di == 0.0) continue;
        double* wg = &param_grads[o.w1 + static_cast<size_t>(i) * in_];
        const double* w = &params_[o.w1 + static_cast<size_t>(i) * in_];
        for (int j = 0; j < in_; ++j) {
            wg[j] += di * x[j];
            if (!dx.empty()) dx[j] += di * w[j];
        }
        param_grads[o.b1 + i] += di;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(size_t n, double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_), m(n, 0.0), v(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grads) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, t);
    double bc2 = 1.0 - std::pow(beta2, t);
    for (size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

// ---------------------------------------------------------------------------
// ReplayStore
// ---------------------------------------------------------------------------

void ReplayStore::push(Episode e) {
    episodes_.push_back(std::move(e));
    while (episodes_.size() > capacity_) episodes_.pop_front();
}

std::vector<size_t> ReplayStore::sample(size_t k, Rng& rng) const {
    std::vector<size_t> idx(episodes_.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(std::min(k, idx.size()));
    return idx;
}

// ---------------------------------------------------------------------------
// DdpgAgent
// ---------------------------------------------------------------------------

DdpgAgent::DdpgAgent(const AgentConfig& cfg)
    : cfg_(cfg), store_(cfg.replay_capacity), rng_(cfg.seed), sigma_(cfg.sigma0) {
    actor_ = Mlp(kObsDim, cfg.hidden1, cfg.hidden2, true, rng_);
    critic_ = Mlp(kObsDim + 1, cfg.hidden1, cfg.hidden2, false, rng_);
    actor_target_ = actor_;
    critic_target_ = critic_;
    actor_opt_ = Adam(actor_.param_count(), cfg.actor_lr, cfg.adam_beta1, cfg.adam_beta2);
    critic_opt_ = Adam(critic_.param_count(), cfg.critic_lr, cfg.adam_beta1, cfg.adam_beta2);
}

double DdpgAgent::act(std::span<const double> obs) const { return actor_.forward(obs); }

double DdpgAgent::explore_act(std::span<const double> obs) {
    double mean = act(obs);
    if (sigma_ == 0.0) return mean;
    for (int tries = 0; tries < 100; ++tries) {
        double a = rng_.normal(mean, sigma_);
        if (a >= 0.0 && a <= 1.0) return a;
    }
    return std::clamp(rng_.normal(mean, sigma_), 0.0, 1.0);
}

std::vector<double> DdpgAgent::compute_targets(const Episode& episode) const {
    const Mlp& actor_t = cfg_.literal_eq11 ? actor_ : actor_target_;
    const Mlp& critic_t = cfg_.literal_eq11 ? critic_ : critic_target_;
    std::vector<double> targets(episode.size());
    for (size_t k = 0; k < episode.size(); ++k) {
        const Transition& tr = episode[k];
        double q_next = 0.0;
        if (!tr.terminal) {
            double a_next = actor_t.forward(tr.next_obs);
            std::array<double, kObsDim + 1> sa;
            std::copy(tr.next_obs.begin(), tr.next_obs.end(), sa.begin());
            sa[kObsDim] = a_next;
            q_next = critic_t.forward(sa);
        }
        targets[k] = tr.reward - baseline_ + cfg_.gamma * q_next;
    }
    return targets;
}

double DdpgAgent::critic_loss_and_grads(const std::vector<Transition>& batch,
                                        const std::vector<double>& targets,
                                        std::vector<double>& grads) const {
    grads.assign(critic_.param_count(), 0.0);
    double loss = 0.0;
    const double n = static_cast<double>(batch.size());
    for (size_t k = 0; k < batch.size(); ++k) {
        std::array<double, kObsDim + 1> sa;
        std::copy(batch[k].obs.begin(), batch[k].obs.end(), sa.begin());
        sa[kObsDim] = batch[k].action;
        double q = critic_.forward(sa);
        double residual = q - targets[k];
        loss += residual * residual / n;
        critic_.forward_backward(sa, 2.0 * residual / n, grads, {});
    }
    return loss;
}

double DdpgAgent::actor_loss_and_grads(const std::vector<Transition>& batch,
                                       std::vector<double>& grads) const {
    grads.assign(actor_.param_count(), 0.0);
    std::vector<double> critic_scratch(critic_.param_count());
    double loss = 0.0;
    const double n = static_cast<double>(batch.size());
    for (const Transition& tr : batch) {
        double a = actor_.forward(tr.obs);
        std::array<double, kObsDim + 1> sa;
        std::copy(tr.obs.begin(), tr.obs.end(), sa.begin());
        sa[kObsDim] = a;
        std::array<double, kObsDim + 1> dsa{};
        std::fill(critic_scratch.begin(), critic_scratch.end(), 0.0);
        double q = critic_.forward_backward(sa, 1.0, critic_scratch, dsa);
        loss -= q / n;
        // Deterministic policy gradient: push the action along dQ/da.
        actor_.forward_backward(tr.obs, -dsa[kObsDim] / n, grads, {});
    }
    return loss;
}

void DdpgAgent::soft_update_targets() {
    auto blend = [&](const Mlp& online, Mlp& target) {
        for (size_t i = 0; i < online.params().size(); ++i)
            target.params()[i] =
                cfg_.tau * online.params()[i] + (1.0 - cfg_.tau) * target.params()[i];
    };
    blend(actor_, actor_target_);
    blend(critic_, critic_target_);
}

UpdateStats DdpgAgent::finish_episode(Episode episode) {
    double reward = episode.empty() ? 0.0 : episode.front().reward;
    UpdateStats stats;
    std::vector<double> cgrads, agrads;
    for (int u = 0; u < cfg_.updates_per_episode; ++u) {
        std::vector<Transition> batch(episode.begin(), episode.end());
        std::vector<double> targets = compute_targets(episode);
        for (size_t idx : store_.sample(cfg_.replay_depth, rng_)) {
            const Episode& past = store_.at(idx);
            std::vector<double> pt = compute_targets(past);
            batch.insert(batch.end(), past.begin(), past.end());
            targets.insert(targets.end(), pt.begin(), pt.end());
        }
        stats.critic_loss = critic_loss_and_grads(batch, targets, cgrads);
        critic_opt_.step(critic_.params(), cgrads);
        stats.actor_loss = actor_loss_and_grads(batch, agrads);
        actor_opt_.step(actor_.params(), agrads);
        if (!cfg_.literal_eq11) soft_update_targets();
        if (!std::isfinite(stats.critic_loss) || !std::isfinite(stats.actor_loss))
            throw divergence_error("agent update produced a non-finite loss");
    }
    store_.push(std::move(episode));

    // Baseline folds in this episode's reward only after targets used it.
    baseline_ = episodes_done_ == 0
                    ? reward
                    : cfg_.baseline_ema * baseline_ + (1.0 - cfg_.baseline_ema) * reward;
    ++episodes_done_;
    sigma_ = cfg_.sigma0 * std::pow(cfg_.sigma_decay, static_cast<double>(episodes_done_));
    return stats;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

void DdpgAgent::save(const std::filesystem::path& file) const {
    json j;
    j["version"] = 1;
    j["config"] = {{"actor_lr", cfg_.actor_lr},
                   {"critic_lr", cfg_.critic_lr},
                   {"adam_beta1", cfg_.adam_beta1},
                   {"adam_beta2", cfg_.adam_beta2},
                   {"gamma", cfg_.gamma},
                   {"sigma0", cfg_.sigma0},
                   {"sigma_decay", cfg_.sigma_decay},
                   {"baseline_ema", cfg_.baseline_ema},
                   {"tau", cfg_.tau},
                   {"hidden1", cfg_.hidden1},
                   {"hidden2", cfg_.hidden2},
                   {"replay_depth", cfg_.replay_depth},
                   {"updates_per_episode", cfg_.updates_per_episode},
                   {"replay_capacity", cfg_.replay_capacity},
                   {"literal_eq11", cfg_.literal_eq11},
                   {"seed", cfg_.seed}};
    j["sigma"] = sigma_;
    j["baseline"] = baseline_;
    j["episodes_done"] = episodes_done_;
    j["actor"] = actor_.params();
    j["critic"] = critic_.params();
    j["actor_target"] = actor_target_.params();
    j["critic_target"] = critic_target_.params();
    j["adam"] = {{"actor_m", actor_opt_.m},
                 {"actor_v", actor_opt_.v},
                 {"actor_t", actor_opt_.t},
                 {"critic_m", critic_opt_.m},
                 {"critic_v", critic_opt_.v},
                 {"critic_t", critic_opt_.t}};
    std::ofstream out(file);
    if (!out) throw config_error("cannot write agent checkpoint " + file.string());
    out << j.dump() << "\n";
}

DdpgAgent DdpgAgent::load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw config_error("cannot open agent checkpoint " + file.string());
    json j;
    in >> j;
    if (j.value("version", 0) != 1) throw config_error("unsupported agent checkpoint version");
    AgentConfig cfg;
    const json& c = j.at("config");
    cfg.actor_lr = c.at("actor_lr");
    cfg.critic_lr = c.at("critic_lr");
    cfg.adam_beta1 = c.at("adam_beta1");
    cfg.adam_beta2 = c.at("adam_beta2");
    cfg.gamma = c.at("gamma");
    cfg.sigma0 = c.at("sigma0");
    cfg.sigma_decay = c.at("sigma_decay");
    cfg.baseline_ema = c.at("baseline_ema");
    cfg.tau = c.at("tau");
    cfg.hidden1 = c.at("hidden1");
    cfg.hidden2 = c.at("hidden2");
    cfg.replay_depth = c.at("replay_depth");
    cfg.updates_per_episode = c.at("updates_per_episode");
    cfg.replay_capacity = c.at("replay_capacity");
    cfg.literal_eq11 = c.at("literal_eq11");
    cfg.seed = c.at("seed");
    DdpgAgent agent(cfg);
    agent.sigma_ = j.at("sigma");
    agent.baseline_ = j.at("baseline");
    agent.episodes_done_ = j.at("episodes_done");
    agent.actor_.params() = j.at("actor").get<std::vector<double>>();
    agent.critic_.params() = j.at("critic").get<std::vector<double>>();
    agent.actor_target_.params() = j.at("actor_target").get<std::vector<double>>();
    agent.critic_target_.params() = j.at("critic_target").get<std::vector<double>>();
    const json& a = j.at("adam");
    agent.actor_opt_.m = a.at("actor_m").get<std::vector<double>>();
    agent.actor_opt_.v = a.at("actor_v").get<std::vector<double>>();
    agent.actor_opt_.t = a.at("actor_t");
    agent.critic_opt_.m = a.at("critic_m").get<std::vector<double>>();
    agent.critic_opt_.v = a.at("critic_v").get<std::vector<double>>();
    agent.critic_opt_.t = a.at("critic_t");
    return agent;
}

}  // namespace bitforge
