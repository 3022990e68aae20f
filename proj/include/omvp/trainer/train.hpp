#pragma once

#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "omvp/tensor/adam.hpp"
#include "omvp/trainer/td_loss.hpp"

namespace omvp::trainer {

struct MetricsRow {
    long env_step = 0;
    long train_step = 0;
    double epsilon = 0.0;
    double lr = 0.0;
    std::optional<double> loss;  // mean since the previous row; empty before the first update
    double eval_mean_reward = 0.0;
    double eval_capture_rate = 0.0;
};

inline void write_metrics_header(std::ostream& os) {
    os << "env_step,train_step,epsilon,lr,loss,eval_mean_reward,eval_capture_rate\n";
}

inline void write_metrics_row(std::ostream& os, const MetricsRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g,%.17g,", r.env_step, r.train_step, r.epsilon, r.lr);
    os << buf;
    if (r.loss) {
        std::snprintf(buf, sizeof buf, "%.17g", *r.loss);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.eval_mean_reward, r.eval_capture_rate);
    os << buf;
}

inline void write_metrics(std::ostream& os, const std::vector<MetricsRow>& rows) {
    write_metrics_header(os);
    for (const auto& r : rows) write_metrics_row(os, r);
}

struct TrainHooks {
    std::function<void(const MetricsRow&)> on_metrics;
    std::function<void(const Networks&, long env_step)> on_checkpoint;
};

struct TrainResult {
    Networks nets;
    std::vector<MetricsRow> metrics;
    long env_steps = 0;
    long train_steps = 0;
};

/// Seed used for the periodic evaluations of a run; every evaluation sees the same episodes.
inline std::uint64_t eval_seed(const TrainConfig& cfg) { return derive_seed(cfg.seed, 4); }

/// Collect one episode per iteration, then one update on a sampled batch once the
/// replay holds a batch. Evaluates every eval_interval env steps and once at the end.
inline TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    validate(cfg);
    TrainResult res;
    res.nets = make_networks(cfg);
    Networks& nets = res.nets;
    ReplayBuffer replay(cfg.replay_capacity);
    auto adam = tensor::make_adam(nets.online);
    std::mt19937_64 sample_rng(derive_seed(cfg.seed, 2));
    const std::size_t chunk = window_length(cfg);

    long next_eval = cfg.eval_interval, next_ckpt = cfg.checkpoint_interval;
    double loss_sum = 0.0;
    long loss_count = 0;
    std::uint64_t episode = 0;

    auto emit = [&]() {
        MetricsRow row;
        row.env_step = res.env_steps;
        row.train_step = res.train_steps;
        row.epsilon = epsilon_at(res.env_steps, cfg);
        row.lr = tensor::linear_lr(cfg.learning_rate, res.env_steps, cfg.total_steps);
        if (loss_count > 0) row.loss = loss_sum / static_cast<double>(loss_count);
        const EvalResult ev = evaluate(nets, nets.online, cfg.env, cfg.eval_episodes, eval_seed(cfg));
        row.eval_mean_reward = ev.mean_reward;
        row.eval_capture_rate = ev.capture_rate;
        loss_sum = 0.0;
        loss_count = 0;
        res.metrics.push_back(row);
        if (hooks.on_metrics) hooks.on_metrics(row);
    };

    while (res.env_steps < cfg.total_steps) {
        const double eps = epsilon_at(res.env_steps, cfg);
        Episode ep = collect_episode(cfg.env, nets, nets.online, eps, derive_seed(cfg.seed, 1, episode++), chunk);
        res.env_steps += static_cast<long>(ep.length());
        if (nets.learns()) replay.push(std::move(ep));

        const bool may_update = cfg.max_train_steps < 0 || res.train_steps < cfg.max_train_steps;
        if (nets.learns() && may_update && replay.size() >= cfg.batch_size) {
            auto windows = sample_windows(replay, cfg.batch_size, sample_rng);
            LossResult lr = td_loss(windows, nets, cfg);
            if (cfg.grad_clip > 0.0) tensor::clip_global_norm(lr.grads, cfg.grad_clip);
            tensor::adam_step(nets.online, lr.grads, adam,
                              tensor::linear_lr(cfg.learning_rate, res.env_steps, cfg.total_steps));
            ++res.train_steps;
            loss_sum += lr.loss;
            ++loss_count;
            if (res.train_steps % cfg.target_update == 0) update_targets(nets);
        }

        if (res.env_steps >= next_eval) {
            emit();
            while (next_eval <= res.env_steps) next_eval += cfg.eval_interval;
        }
        if (res.env_steps >= next_ckpt) {
            if (hooks.on_checkpoint) hooks.on_checkpoint(nets, res.env_steps);
            while (next_ckpt <= res.env_steps) next_ckpt += cfg.checkpoint_interval;
        }
    }
    if (res.env_steps > 0 && (res.metrics.empty() || res.metrics.back().env_step != res.env_steps)) emit();
    return res;
}

}  // namespace omvp::trainer
