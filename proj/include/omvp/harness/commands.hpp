#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "omvp/env/render.hpp"
#include "omvp/harness/config.hpp"
#include "omvp/tensor/checkpoint.hpp"
#include "omvp/trainer/train.hpp"

namespace omvp::harness {

namespace fs = std::filesystem;
using tensor::Tensor;

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Trains from a config file. The run directory gets config.txt (canonical snapshot),
/// metrics.csv, ckpt_<env_step>.bin every checkpoint_interval and final.bin.
inline fs::path cmd_train(const std::string& config_path, std::ostream& log) {
    const RunConfig cfg = parse_config(config_path);
    const fs::path dir = run_directory(cfg);
    fs::create_directories(dir);
    {
        std::ofstream snap(dir / "config.txt");
        snap << format_config(cfg);
    }
    std::ofstream metrics(dir / "metrics.csv");
    if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    trainer::write_metrics_header(metrics);

    trainer::TrainHooks hooks;
    hooks.on_metrics = [&](const trainer::MetricsRow& r) {
        trainer::write_metrics_row(metrics, r);
        metrics.flush();
        char buf[160];
        std::snprintf(buf, sizeof buf, "step %ld  updates %ld  eps %.3f  eval reward %.3f  capture %.3f", r.env_step,
                      r.train_step, r.epsilon, r.eval_mean_reward, r.eval_capture_rate);
        log << buf << std::endl;
    };
    hooks.on_checkpoint = [&](const trainer::Networks& nets, long step) {
        tensor::save_checkpoint((dir / ("ckpt_" + std::to_string(step) + ".bin")).string(),
                                trainer::to_checkpoint(nets, cfg.train.env));
    };
    const auto res = trainer::train(cfg.train, hooks);
    tensor::save_checkpoint((dir / "final.bin").string(), trainer::to_checkpoint(res.nets, cfg.train.env));
    log << "run directory: " << dir.string() << std::endl;
    return dir;
}

// ---------------------------------------------------------------------------
// policy loading and scenario overrides
// ---------------------------------------------------------------------------

struct ScenarioOptions {
    std::optional<std::string> scenario;  // "8v4"
    std::optional<int> width;
    std::optional<int> horizon;
    bool pin_still = false;
};

struct LoadedPolicy {
    trainer::Networks nets;
    env::EnvConfig env;
};

/// `source` is a checkpoint path or the word "random". A checkpoint supplies its
/// training scenario; "random" starts from the default 13x13 8v4. Overrides apply on top.
inline LoadedPolicy load_policy(const std::string& source, const ScenarioOptions& opt) {
    std::optional<tensor::Checkpoint> ck;
    env::EnvConfig e;
    if (source != "random") {
        ck = tensor::load_checkpoint(source);
        e = trainer::checkpoint_shape(*ck).scenario();
    }
    if (opt.scenario) std::tie(e.pursuers, e.evaders) = parse_scenario(*opt.scenario);
    if (opt.width) e.width = *opt.width;
    if (opt.horizon) e.horizon = *opt.horizon;
    if (opt.pin_still) e.pinned_strategy = env::StrategyTag::Still;
    (void)env::reset(e, 0);  // rejects an unusable scenario before any rollout
    if (!ck) return {trainer::make_networks(trainer::Algorithm::Random, {}, e, 0), e};
    return {trainer::from_checkpoint(*ck, e), e};
}

inline std::string describe(const env::EnvConfig& e) {
    return std::to_string(e.width) + "x" + std::to_string(e.width) + " " + std::to_string(e.pursuers) + "v" +
           std::to_string(e.evaders) + " strategy=" + (e.pinned_strategy ? env::to_string(*e.pinned_strategy) : "random");
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::string source;
    ScenarioOptions scenario;
    int episodes = 50;
    std::uint64_t seed = 1;
    std::string csv;  // optional output path
};

inline void write_eval_csv(std::ostream& os, const std::string& algorithm, const env::EnvConfig& e,
                           const EvalOptions& o, const trainer::EvalResult& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%s,%d,%llu,%.17g,%.17g,%.17g\n", algorithm.c_str(), e.width,
                  e.pursuers, e.evaders, e.pinned_strategy ? env::to_string(*e.pinned_strategy).c_str() : "random",
                  o.episodes, static_cast<unsigned long long>(o.seed), r.mean_reward, r.capture_rate,
                  r.mean_first_capture);
    os << "algorithm,width,pursuers,evaders,strategy,episodes,seed,mean_reward,capture_rate,mean_first_capture\n"
       << buf;
}

/// Greedy evaluation on `episodes` seeded episodes.
inline trainer::EvalResult cmd_eval(const EvalOptions& o, std::ostream& out) {
    if (o.episodes < 1) throw InvalidConfig("eval: episodes must be at least 1");
    const LoadedPolicy lp = load_policy(o.source, o.scenario);
    const auto r = trainer::evaluate(lp.nets, lp.nets.online, lp.env, o.episodes, o.seed);
    char buf[256];
    out << "policy " << trainer::to_string(lp.nets.algorithm) << "  scenario " << describe(lp.env) << "  episodes "
        << o.episodes << "  seed " << o.seed << '\n';
    std::snprintf(buf, sizeof buf, "mean_reward %.17g\ncapture_rate %.17g\nmean_first_capture %.17g\n", r.mean_reward,
                  r.capture_rate, r.mean_first_capture);
    out << buf;
    if (!o.csv.empty()) {
        std::ofstream f(o.csv);
        if (!f) throw std::runtime_error("cannot write " + o.csv);
        write_eval_csv(f, trainer::to_string(lp.nets.algorithm), lp.env, o, r);
    }
    return r;
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

struct RenderOptions {
    std::string source = "random";
    ScenarioOptions scenario;
    std::uint64_t seed = 1;
    std::string trace;  // JSON lines, one record per step; empty: no trace
};

/// Plays one greedy episode (uniform actions for "random") and prints a frame after
/// every step. Returns the episode.
inline trainer::Episode cmd_render(const RenderOptions& o, std::ostream& frames) {
    const LoadedPolicy lp = load_policy(o.source, o.scenario);
    std::ofstream trace;
    if (!o.trace.empty()) {
        trace.open(o.trace);
        if (!trace) throw std::runtime_error("cannot write " + o.trace);
    }
    double total = 0.0;
    auto observer = [&](const env::WorldState& before, std::span<const env::Action> acts, const env::StepOutcome& out) {
        total += out.global_reward;
        env::render_frame(frames, out.next, total);
        if (trace.is_open()) trace << env::trace_record(before, acts, out).dump() << '\n';
    };
    return trainer::collect_episode(lp.env, lp.nets, lp.nets.online, 0.0, o.seed, 5, observer);
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

struct AttentionOptions {
    std::string source;
    ScenarioOptions scenario;
    std::uint64_t seed = 1;
    int t = 0;
};

struct AttentionExport {
    std::size_t tokens = 0;  // agents first, then the hidden row(s)
    std::size_t heads = 0;
    std::vector<std::vector<Tensor>> steps;  // steps[j][layer]: (heads*tokens) x tokens; j=0 is t-1 when t>0
    std::vector<int> times;
    std::vector<double> incoming;  // per key token at step t, averaged over layers, heads and queries
};

/// Greedy rollout with the same seeding as render and eval, stopping at step t.
inline AttentionExport attention_at(const LoadedPolicy& lp, std::uint64_t seed, int t) {
    if (!lp.nets.learns() || !lp.nets.agent.is_transformer()) throw InvalidConfig("attention: the checkpoint has no attention layers");
    if (t < 0) throw InvalidConfig("attention: t must be non-negative");
    env::WorldState world = env::reset(lp.env, trainer::derive_seed(seed, 1));
    std::mt19937_64 rng(trainer::derive_seed(seed, 2));
    trainer::Actor actor(lp.nets, lp.nets.online);
    std::vector<Tensor> previous, current;
    while (true) {
        if (world.done())
            throw InvalidConfig("attention: t=" + std::to_string(t) + " is past the episode end (" +
                                std::to_string(world.t) + " steps)");
        previous = std::move(current);
        const Tensor q = actor.q_values(world, &current);
        if (world.t == t) break;
        world = env::step(world, trainer::select_actions(q, 0.0, rng)).next;
    }
    AttentionExport ex;
    ex.tokens = current.front().cols();
    ex.heads = current.front().rows() / ex.tokens;
    if (t > 0) {
        ex.steps.push_back(previous);
        ex.times.push_back(t - 1);
    }
    ex.steps.push_back(current);
    ex.times.push_back(t);
    ex.incoming.assign(ex.tokens, 0.0);
    for (const Tensor& layer : current)
        for (std::size_t r = 0; r < layer.rows(); ++r)
            for (std::size_t k = 0; k < ex.tokens; ++k) ex.incoming[k] += layer(r, k);
    for (double& v : ex.incoming) v /= static_cast<double>(current.size() * ex.heads * ex.tokens);
    return ex;
}

inline void write_attention_csv(std::ostream& os, const AttentionExport& ex) {
    os << "t,layer,head,query,key,weight\n";
    char buf[128];
    for (std::size_t j = 0; j < ex.steps.size(); ++j)
        for (std::size_t l = 0; l < ex.steps[j].size(); ++l)
            for (std::size_t h = 0; h < ex.heads; ++h)
                for (std::size_t q = 0; q < ex.tokens; ++q)
                    for (std::size_t k = 0; k < ex.tokens; ++k) {
                        std::snprintf(buf, sizeof buf, "%d,%zu,%zu,%zu,%zu,%.17g\n", ex.times[j], l, h, q, k,
                                      ex.steps[j][l](h * ex.tokens + q, k));
                        os << buf;
                    }
}

/// Writes the CSV to `csv` and a per-token incoming-attention summary to `summary`.
inline AttentionExport cmd_attention(const AttentionOptions& o, std::ostream& csv, std::ostream& summary) {
    const LoadedPolicy lp = load_policy(o.source, o.scenario);
    const AttentionExport ex = attention_at(lp, o.seed, o.t);
    write_attention_csv(csv, ex);
    const std::size_t agents = static_cast<std::size_t>(lp.env.pursuers);
    summary << "mean incoming attention at t=" << o.t << " (" << ex.steps.back().size() << " layers, " << ex.heads
            << " heads)\n";
    char buf[96];
    for (std::size_t k = 0; k < ex.tokens; ++k) {
        const std::string name = k < agents ? "agent " + std::to_string(k) : "hidden " + std::to_string(k - agents);
        std::snprintf(buf, sizeof buf, "%-10s %.6f\n", name.c_str(), ex.incoming[k]);
        summary << buf;
    }
    return ex;
}

}  // namespace omvp::harness
