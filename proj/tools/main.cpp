#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bitforge/data.hpp"
#include "bitforge/error.hpp"
#include "bitforge/runio.hpp"
#include "bitforge/search.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bitforge;

namespace {

// BITFORGE_RUN_DIR replaces the output root while keeping the run's leaf name.
fs::path resolve_out(const std::string& cli_out, const std::string& default_leaf) {
    const char* env = std::getenv("BITFORGE_RUN_DIR");
    if (env && *env) {
        fs::path leaf = cli_out.empty() ? fs::path(default_leaf) : fs::path(cli_out).filename();
        return fs::path(env) / leaf;
    }
    if (!cli_out.empty()) return cli_out;
    return fs::path("runs") / default_leaf;
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
    uint64_t seed = 42;
    std::string out;
    int train_per_class = 64;
    int val_per_class = 16;
    int calib = 64;
    int classes = 10;
    int channels = 3;
    int side = 32;
    double noise = 0.6;
};

int cmd_gen_data(const GenDataArgs& a) {
    SyntheticConfig cfg;
    cfg.seed = a.seed;
    cfg.train_per_class = a.train_per_class;
    cfg.val_per_class = a.val_per_class;
    cfg.calib_count = a.calib;
    cfg.classes = a.classes;
    cfg.channels = a.channels;
    cfg.side = a.side;
    cfg.noise_sd = a.noise;

    fs::path out = resolve_out(a.out, "data");
    fs::create_directories(out);
    Dataset ds = generate_synthetic(cfg);
    save_dataset(ds, out, a.seed);

    json snapshot = {{"seed", a.seed},
                     {"train_per_class", a.train_per_class},
                     {"val_per_class", a.val_per_class},
                     {"calib", a.calib},
                     {"classes", a.classes},
                     {"channels", a.channels},
                     {"side", a.side},
                     {"noise", a.noise},
                     {"out", fs::absolute(out).string()}};
    ManifestWriter mw("gen-data", snapshot, a.seed);
    mw.add_artifact("dataset", "dataset.json");
    mw.add_result("train_count", ds.train.count());
    mw.add_result("val_count", ds.val.count());
    mw.add_result("calibration_count", ds.calib.count());
    mw.write(out);
    std::cout << "dataset written to " << out.string() << " (train " << ds.train.count()
              << ", val " << ds.val.count() << ", calibration " << ds.calib.count() << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

struct BaselineArgs {
    std::string model;
    std::string data;
    std::string out;
    uint64_t seed = 1;
    int epochs = 12;
    double lr = 1e-3;
    int batch_size = 32;
};

int cmd_baseline(const BaselineArgs& a) {
    if (!fs::exists(a.data))
        throw config_error("dataset directory not found: " + a.data);
    Dataset ds = load_dataset(a.data);
    ModelGraph model = ModelGraph::load(a.model);

    fs::path out = resolve_out(a.out, "baseline");
    fs::create_directories(out);

    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.lr = a.lr;
    tc.batch_size = a.batch_size;
    tc.shuffle_seed = a.seed;
    double loss = finetune(model, ds.train, tc);

    DatasetSplit fine, reward;
    split_for_search(ds.train, fine, reward);
    double acc_reward = evaluate(model, reward);
    double acc_val = evaluate(model, ds.val);
    model.save(out, "model");

    json snapshot = {{"model", fs::absolute(a.model).string()},
                     {"data", fs::absolute(a.data).string()},
                     {"seed", a.seed},
                     {"epochs", a.epochs},
                     {"lr", a.lr},
                     {"batch_size", a.batch_size},
                     {"out", fs::absolute(out).string()}};
    ManifestWriter mw("baseline", snapshot, a.seed);
    mw.add_artifact("checkpoint", "model.json");
    mw.add_result("acc_origin", round4(acc_reward));
    mw.add_result("acc_val", round4(acc_val));
    mw.add_result("final_loss", loss);
    mw.write(out);
    std::cout << "baseline trained: acc_origin " << round4(acc_reward) << ", val accuracy "
              << round4(acc_val) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    return read_json(path);
}

template <typename T>
void override_if(json& cfg, const std::string& key, const std::optional<T>& v) {
    if (v.has_value()) cfg[key] = *v;
}

struct SearchArgs {
    std::string config;
    std::optional<uint64_t> seed;
    std::optional<std::string> objective, limit, hw, optimizer, reward, out, baseline, model, data;
    std::optional<int> episodes;
    bool literal_eq11 = false;
};

int cmd_search(const SearchArgs& a) {
    json cfg = load_config(a.config);
    override_if(cfg, "seed", a.seed);
    override_if(cfg, "objective", a.objective);
    override_if(cfg, "limit", a.limit);
    override_if(cfg, "hw", a.hw);
    override_if(cfg, "optimizer", a.optimizer);
    override_if(cfg, "reward", a.reward);
    override_if(cfg, "out", a.out);
    override_if(cfg, "baseline", a.baseline);
    override_if(cfg, "model", a.model);
    override_if(cfg, "data", a.data);
    override_if(cfg, "episodes", a.episodes);

    if (!cfg.contains("data")) throw config_error("search needs a dataset ('data')");
    std::string model_path;
    if (cfg.contains("baseline")) {
        model_path = (fs::path(cfg["baseline"].get<std::string>()) / "model.json").string();
        if (!fs::exists(model_path))
            throw config_error("baseline checkpoint not found: " + model_path);
    } else if (cfg.contains("model")) {
        model_path = cfg["model"].get<std::string>();
    } else {
        throw config_error("search needs 'baseline' (run dir) or 'model'");
    }

    ModelGraph model = ModelGraph::load(model_path);
    Dataset ds = load_dataset(cfg.at("data").get<std::string>());
    HardwareConfig hw = HardwareConfig::preset_or_file(cfg.value("hw", "edge"));

    SearchEnv env;
    env.model = &model;
    split_for_search(ds.train, env.finetune_split, env.reward_split);
    env.calib_split = ds.calib;
    env.seed = cfg.value("seed", 1ull);
    env.budget.objective = objective_from_string(cfg.value("objective", "latency"));
    env.budget.hw = hw;
    std::string limit_str = cfg.value("limit", "0.55x8");
    env.budget.limit = parse_limit(limit_str, env.budget.objective, model, hw);
    env.finetune_epochs = cfg.value("finetune_epochs", 1);
    env.batch_size = cfg.value("batch_size", 32);
    env.requantize_each_step = cfg.value("requantize_each_step", true);

    std::string reward_mode = cfg.value("reward", "constrained");
    if (reward_mode == "constrained")
        env.reward_cfg.mode = RewardMode::constrained;
    else if (reward_mode == "accuracy-guaranteed" || reward_mode == "accuracy_guaranteed")
        env.reward_cfg.mode = RewardMode::accuracy_guaranteed;
    else
        throw config_error("reward must be constrained or accuracy-guaranteed");
    env.reward_cfg.lambda = cfg.value("lambda", 0.1);
    env.reward_cfg.lambda_latency = cfg.value("lambda_latency", 1.0);
    env.reward_cfg.lambda_energy = cfg.value("lambda_energy", 1.0);
    env.reward_cfg.lambda_accuracy = cfg.value("lambda_accuracy", 20.0);

    env.acc_origin = evaluate(model, env.reward_split);

    SearchOptions opts;
    opts.optimizer = optimizer_from_string(cfg.value("optimizer", "ddpg"));
    opts.episodes = cfg.value("episodes", 600);
    if (cfg.contains("agent")) {
        const json& aj = cfg["agent"];
        opts.agent.actor_lr = aj.value("actor_lr", opts.agent.actor_lr);
        opts.agent.critic_lr = aj.value("critic_lr", opts.agent.critic_lr);
        opts.agent.sigma0 = aj.value("sigma0", opts.agent.sigma0);
        opts.agent.sigma_decay = aj.value("sigma_decay", opts.agent.sigma_decay);
        opts.agent.baseline_ema = aj.value("baseline_ema", opts.agent.baseline_ema);
        opts.agent.tau = aj.value("tau", opts.agent.tau);
        opts.agent.replay_depth = aj.value("replay_depth", opts.agent.replay_depth);
        opts.agent.updates_per_episode =
            aj.value("updates_per_episode", opts.agent.updates_per_episode);
        opts.agent.replay_capacity = aj.value("replay_capacity", opts.agent.replay_capacity);
        opts.agent.literal_eq11 = aj.value("literal_eq11", opts.agent.literal_eq11);
    }
    if (a.literal_eq11) opts.agent.literal_eq11 = true;
    opts.population = cfg.value("population", 20);
    opts.tournament = cfg.value("tournament", 4);
    opts.mutation_rate = cfg.value("mutation_rate", 0.1);
    opts.elitism = cfg.value("elitism", 2);

    fs::path out = resolve_out(cfg.value("out", ""), "search-" + cfg.value("optimizer", "ddpg") +
                                                         "-seed" + std::to_string(env.seed));
    fs::create_directories(out);

    SearchResult res = search(env, opts);

    res.best_policy.save(out / "policy.json");
    write_exploration_csv(out / "exploration.csv", res.log);
    write_policy_csv(out / "policy_bits.csv", model, res.best_policy);
    CostReport rep = cost_report(model, res.best_policy, hw);
    rep.write_csv(out / "costreport.csv");
    write_roofline_csv(model, res.best_policy, hw, out / "roofline.csv");
    if (env.budget.objective != Objective::model_size) {
        ModelQuantizer mq = ModelQuantizer::calibrate(model, res.best_policy, env.calib_split);
        mq.write_calibration_csv(out / "calibration.csv");
    }
    if (res.agent) res.agent->save(out / "agent.json");

    // Snapshot the fully resolved configuration so a rerun reproduces the run.
    json resolved = cfg;
    resolved["model"] = fs::absolute(model_path).string();
    resolved.erase("baseline");
    resolved["data"] = fs::absolute(cfg.at("data").get<std::string>()).string();
    resolved["hw"] = cfg.value("hw", "edge");
    resolved["objective"] = to_string(env.budget.objective);
    resolved["limit"] = limit_str;
    resolved["optimizer"] = to_string(opts.optimizer);
    resolved["episodes"] = opts.episodes;
    resolved["seed"] = env.seed;
    resolved["reward"] = reward_mode;
    resolved["out"] = fs::absolute(out).string();

    ManifestWriter mw("search", resolved, env.seed);
    for (const char* name : {"policy.json", "exploration.csv", "policy_bits.csv",
                             "costreport.csv", "roofline.csv"})
        mw.add_artifact(fs::path(name).stem().string(), name);
    if (res.agent) mw.add_artifact("agent", "agent.json");
    mw.add_result("acc_origin", round4(env.acc_origin));
    mw.add_result("best_reward", res.best_reward);
    mw.add_result("best_accuracy", res.best_accuracy);
    mw.add_result("best_cost", res.best_cost);
    mw.add_result("budget_limit", env.budget.limit);
    mw.add_result("infeasible", res.infeasible);
    mw.write(out);

    std::cout << "search done: best reward " << res.best_reward << ", accuracy "
              << res.best_accuracy << ", cost " << res.best_cost
              << (res.infeasible ? " [INFEASIBLE]" : "") << "\n";
    return res.infeasible ? 3 : 0;
}

// ---------------------------------------------------------------------------
// apply
// ---------------------------------------------------------------------------

struct ApplyArgs {
    std::string model;
    std::string policy;
    std::string data;
    std::string out;
    std::string hw = "edge";
    std::string objective = "latency";
    uint64_t seed = 1;
    int epochs = 5;
    int batch_size = 32;
};

int cmd_apply(const ApplyArgs& a) {
    ModelGraph model = ModelGraph::load(a.model);
    BitwidthPolicy policy = BitwidthPolicy::load(a.policy);
    policy.validate(model.num_layers());
    Dataset ds = load_dataset(a.data);

    fs::path out = resolve_out(a.out, "apply");
    fs::create_directories(out);

    Objective objective = objective_from_string(a.objective);
    ModelQuantizer mq = objective == Objective::model_size
                            ? ModelQuantizer::calibrate_codebook(model, policy, a.seed)
                            : ModelQuantizer::calibrate(model, policy, ds.calib);

    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.shuffle_seed = a.seed;
    finetune(model, ds.train, tc, &mq);
    double acc = evaluate(model, ds.val, &mq);
    model.save(out, "model");
    policy.save(out / "policy.json");

    HardwareConfig hw = HardwareConfig::preset_or_file(a.hw);
    CostReport rep = cost_report(model, policy, hw);
    rep.write_csv(out / "costreport.csv");

    json snapshot = {{"model", fs::absolute(a.model).string()},
                     {"policy", fs::absolute(a.policy).string()},
                     {"data", fs::absolute(a.data).string()},
                     {"hw", a.hw},
                     {"objective", a.objective},
                     {"seed", a.seed},
                     {"epochs", a.epochs},
                     {"batch_size", a.batch_size},
                     {"out", fs::absolute(out).string()}};
    ManifestWriter mw("apply", snapshot, a.seed);
    mw.add_artifact("checkpoint", "model.json");
    mw.add_artifact("policy", "policy.json");
    mw.add_artifact("costreport", "costreport.csv");
    mw.add_result("accuracy", round4(acc));
    mw.add_result("infeasible", policy.infeasible);
    mw.write(out);
    std::cout << "apply done: accuracy " << round4(acc) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const std::string& run) {
    fs::path dir(run);
    json manifest = read_json(dir / "manifest.json");
    std::string command = manifest.value("command", "");
    const json& results = manifest["results"];

    std::cout << "run: " << dir.string() << " (" << command << ", seed "
              << manifest.value("seed", 0ull) << ")\n";

    if (command == "baseline") {
        std::cout << "acc_origin: " << results.value("acc_origin", 0.0) << "\n";
        std::cout << "val accuracy: " << results.value("acc_val", 0.0) << "\n";
        return 0;
    }
    if (command == "gen-data") {
        std::cout << "train/val/calibration: " << results.value("train_count", 0) << "/"
                  << results.value("val_count", 0) << "/" << results.value("calibration_count", 0)
                  << "\n";
        return 0;
    }
    if (command != "search" && command != "apply")
        throw config_error("cannot report on command '" + command + "'");

    const json& cfg = manifest["config"];
    ModelGraph model = ModelGraph::load(cfg.at("model").get<std::string>());
    HardwareConfig hw = HardwareConfig::preset_or_file(cfg.value("hw", "edge"));
    BitwidthPolicy policy = BitwidthPolicy::load(dir / "policy.json");
    policy.validate(model.num_layers());

    if (policy.infeasible || results.value("infeasible", false))
        std::cout << "*** INFEASIBLE budget: floor policy reported ***\n";

    CostReport rep = cost_report(model, policy, hw);
    std::printf("%-6s %-15s %-7s %-7s %12s %12s %12s %12s\n", "layer", "kind", "w_bits", "a_bits",
                "macs", "latency_us", "energy_uj", "intensity");
    for (const LayerCost& lc : rep.layers)
        std::printf("%-6d %-15s %-7d %-7d %12lld %12.3f %12.3f %12.3f\n", lc.layer,
                    to_string(lc.kind).c_str(), lc.w_bits, lc.a_bits, lc.macs, lc.latency * 1e6,
                    lc.energy * 1e6, lc.intensity);
    long long size_bits = model_size_bits(model, policy, false);
    std::printf("totals: latency %.3f us, energy %.3f uJ, size %lld bits (%.1f KiB)\n",
                rep.total_latency * 1e6, rep.total_energy * 1e6, size_bits,
                size_bits / 8.0 / 1024.0);
    if (command == "search")
        std::printf("best reward %.6g, accuracy %.4f (origin %.4f)\n",
                    results.value("best_reward", 0.0), results.value("best_accuracy", 0.0),
                    results.value("acc_origin", 0.0));
    else
        std::printf("accuracy %.4f\n", results.value("accuracy", 0.0));

    write_policy_csv(dir / "policy_bits.csv", model, policy);
    write_roofline_csv(model, policy, hw, dir / "roofline.csv");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bitforge: hardware-aware mixed-precision bitwidth search"};
    app.require_subcommand(1);

    GenDataArgs gd;
    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic desk-scale dataset");
    gen->add_option("--seed", gd.seed);
    gen->add_option("--out", gd.out);
    gen->add_option("--train-per-class", gd.train_per_class);
    gen->add_option("--val-per-class", gd.val_per_class);
    gen->add_option("--calib", gd.calib);
    gen->add_option("--classes", gd.classes);
    gen->add_option("--channels", gd.channels);
    gen->add_option("--side", gd.side);
    gen->add_option("--noise", gd.noise);

    BaselineArgs bl;
    CLI::App* base = app.add_subcommand("baseline", "train the float baseline checkpoint");
    base->add_option("--model", bl.model)->required();
    base->add_option("--data", bl.data)->required();
    base->add_option("--out", bl.out);
    base->add_option("--seed", bl.seed);
    base->add_option("--epochs", bl.epochs);
    base->add_option("--lr", bl.lr);
    base->add_option("--batch-size", bl.batch_size);

    SearchArgs se;
    CLI::App* sc = app.add_subcommand("search", "run the bitwidth policy search");
    sc->add_option("--config", se.config);
    sc->add_option("--seed", se.seed);
    sc->add_option("--objective", se.objective);
    sc->add_option("--limit", se.limit);
    sc->add_option("--hw", se.hw);
    sc->add_option("--optimizer", se.optimizer);
    sc->add_option("--episodes", se.episodes);
    sc->add_option("--reward", se.reward);
    sc->add_option("--out", se.out);
    sc->add_option("--baseline", se.baseline);
    sc->add_option("--model", se.model);
    sc->add_option("--data", se.data);
    sc->add_flag("--literal-eq11", se.literal_eq11,
                 "train without target networks (online nets in the targets)");

    ApplyArgs ap;
    CLI::App* app_cmd = app.add_subcommand("apply", "quantize and finetune with a policy");
    app_cmd->add_option("--model", ap.model)->required();
    app_cmd->add_option("--policy", ap.policy)->required();
    app_cmd->add_option("--data", ap.data)->required();
    app_cmd->add_option("--out", ap.out);
    app_cmd->add_option("--hw", ap.hw);
    app_cmd->add_option("--objective", ap.objective);
    app_cmd->add_option("--seed", ap.seed);
    app_cmd->add_option("--epochs", ap.epochs);
    app_cmd->add_option("--batch-size", ap.batch_size);

    std::string report_run;
    CLI::App* rp = app.add_subcommand("report", "summarize a finished run");
    rp->add_option("--run", report_run)->required();

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(gd);
        if (base->parsed()) return cmd_baseline(bl);
        if (sc->parsed()) return cmd_search(se);
        if (app_cmd->parsed()) return cmd_apply(ap);
        if (rp->parsed()) return cmd_report(report_run);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::config: return 2;
            case ErrorKind::infeasible: return 3;
            case ErrorKind::divergence: return 4;
        }
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
