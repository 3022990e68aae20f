#pragma once

#include <random>
#include <vector>

#include "omvp/trainer/replay.hpp"

namespace omvp::trainer {

/// A replay slice: `length` transitions of one episode starting at a stored-hidden step.
struct Window {
    const Episode* episode = nullptr;
    std::size_t start = 0;
};

inline std::size_t window_length(const TrainConfig& cfg) {
    return cfg.full_unroll ? static_cast<std::size_t>(cfg.env.horizon) : cfg.bptt_window;
}

/// Draws `batch` distinct episodes and one window start in each, uniform over the
/// steps where a hidden state was stored.
inline std::vector<Window> sample_windows(const ReplayBuffer& replay, std::size_t batch, std::mt19937_64& rng) {
    std::vector<Window> out;
    for (const Episode* ep : replay.sample(batch, rng)) {
        const std::size_t starts = (ep->length() + ep->chunk - 1) / ep->chunk;
        std::uniform_int_distribution<std::size_t> pick(0, starts - 1);
        out.push_back({ep, pick(rng) * ep->chunk});
    }
    return out;
}

/// y = r when the step ends the episode, else r + gamma * next.
inline double bootstrap_target(double reward, double gamma, bool terminal, double next_value) {
    return terminal ? reward : reward + gamma * next_value;
}

/// Inputs of one update, laid out step-major: row j * B + b is step j of window b.
struct PreparedBatch {
    std::size_t batch = 0, agents = 0, length = 0;
    std::vector<Tensor> features;  // length + 1 entries, (B*N) x F
    Tensor state_now;              // (L*B) x S, steps 0..L-1
    Tensor state_next;             // (L*B) x S, steps 1..L
    Tensor hidden;                 // (B*H) x width at each window start
    std::vector<std::vector<std::size_t>> actions;  // L entries of B*N
    std::vector<double> rewards, terminal, mask;    // L*B
};

inline PreparedBatch prepare_batch(const std::vector<Window>& windows, const Networks& nets,
                                   const env::EnvConfig& env_cfg, std::size_t length) {
    if (windows.empty()) throw ContractError("td_loss: empty batch");
    if (length == 0) throw ContractError("td_loss: zero-length window");
    PreparedBatch pb;
    const std::size_t B = windows.size(), N = nets.agents, S = nets.state_dim, F = nets.features;
    pb.batch = B;
    pb.agents = N;
    pb.length = length;
    env::WorldState scratch = env::reset(env_cfg, 0);

    const std::size_t hsize = nets.agent.hidden_rows(N) * nets.agent.hidden_width();
    pb.hidden = Tensor::matrix(B * nets.agent.hidden_rows(N), nets.agent.hidden_width());
    for (std::size_t b = 0; b < B; ++b) {
        const Episode& ep = *windows[b].episode;
        if (ep.agents != N || ep.hidden_size != hsize) throw ContractError("td_loss: episode does not match networks");
        if (windows[b].start % ep.chunk != 0 || windows[b].start >= ep.length())
            throw ContractError("td_loss: window start has no stored hidden state");
        const float* h = ep.hidden_at(windows[b].start);
        std::copy(h, h + hsize, pb.hidden.data() + b * hsize);
    }

    std::vector<Tensor> states;
    for (std::size_t j = 0; j <= length; ++j) {
        Tensor f = Tensor::matrix(B * N, F);
        Tensor s = Tensor::matrix(B, S);
        for (std::size_t b = 0; b < B; ++b) {
            const Episode& ep = *windows[b].episode;
            const Frame& fr = ep.frames[std::min(windows[b].start + j, ep.length())];
            scratch.pursuers = fr.pursuers;
            scratch.evaders = fr.evaders;
            policy::write_team_features(scratch, f.data() + b * N * F);
            const auto gs = env::global_state(scratch);
            std::copy(gs.begin(), gs.end(), s.data() + b * S);
        }
        pb.features.push_back(std::move(f));
        states.push_back(std::move(s));
    }
    pb.state_now = Tensor::matrix(length * B, S);
    pb.state_next = Tensor::matrix(length * B, S);
    for (std::size_t j = 0; j < length; ++j) {
        std::copy_n(states[j].data(), B * S, pb.state_now.data() + j * B * S);
        std::copy_n(states[j + 1].data(), B * S, pb.state_next.data() + j * B * S);
    }

    for (std::size_t j = 0; j < length; ++j) {
        std::vector<std::size_t> acts(B * N, 0);
        for (std::size_t b = 0; b < B; ++b) {
            const Episode& ep = *windows[b].episode;
            const std::size_t t = windows[b].start + j;
            const bool valid = t < ep.length();
            if (valid)
                for (std::size_t k = 0; k < N; ++k) acts[b * N + k] = ep.actions[t * N + k];
            pb.rewards.push_back(valid ? ep.rewards[t] : 0.0);
            pb.terminal.push_back(valid && ep.terminated && t + 1 == ep.length() ? 1.0 : 0.0);
            pb.mask.push_back(valid ? 1.0 : 0.0);
        }
        pb.actions.push_back(std::move(acts));
    }
    return pb;
}

/// Targets y (L*B entries) from the target networks. With double_q the next action
/// is the online argmax (online_q[j] for steps 0..L), else the target argmax.
inline std::vector<double> td_targets(const PreparedBatch& pb, const Networks& nets, double gamma, bool double_q,
                                      const std::vector<Tensor>& online_q) {
    const std::size_t B = pb.batch, N = pb.agents, L = pb.length;
    if (double_q && online_q.size() != L + 1) throw ContractError("td_targets: need online Q for every step");
    Graph g(false);
    Bound p = tensor::bind(g, nets.target);
    Var h = g.constant(pb.hidden);
    Tensor picked = Tensor::matrix(L * B, N);
    for (std::size_t j = 0; j <= L; ++j) {
        auto out = nets.agent.forward(p, g.constant(pb.features[j]), h, N);
        h = out.hidden;
        if (j == 0) continue;
        const Tensor& qt = out.q.value();
        const Tensor& chooser = double_q ? online_q[j] : qt;
        for (std::size_t r = 0; r < B * N; ++r) picked[(j - 1) * B * N + r] = qt(r, greedy_action(chooser, r));
    }
    const Tensor next = nets.mix(p, g.constant(std::move(picked)), g.constant(pb.state_next)).value();
    std::vector<double> y(L * B);
    for (std::size_t i = 0; i < L * B; ++i) y[i] = bootstrap_target(pb.rewards[i], gamma, pb.terminal[i] != 0.0, next[i]);
    return y;
}

struct TdStats {
    double mean_q = 0.0;       // mean online Q_total over valid steps
    double mean_target = 0.0;  // mean y over valid steps
};

/// Masked mean squared TD error on `g`, differentiable in the online parameters `p`.
inline Var td_loss_graph(Graph& g, const Bound& p, const PreparedBatch& pb, const Networks& nets, double gamma,
                         bool double_q, TdStats* stats = nullptr) {
    const std::size_t B = pb.batch, N = pb.agents, L = pb.length;
    Var h = g.constant(pb.hidden);
    std::vector<Var> chosen;
    std::vector<Tensor> online_q;
    const std::size_t steps = double_q ? L + 1 : L;
    for (std::size_t j = 0; j < steps; ++j) {
        auto out = nets.agent.forward(p, g.constant(pb.features[j]), h, N);
        h = out.hidden;
        if (double_q) online_q.push_back(out.q.value());
        if (j < L) chosen.push_back(tensor::reshape(tensor::pick_cols(out.q, pb.actions[j]), B, N));
    }
    Var q_total = nets.mix(p, tensor::concat_rows(chosen), g.constant(pb.state_now));
    const auto y = td_targets(pb, nets, gamma, double_q, online_q);
    if (stats) {
        double n = 0.0, sq = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < L * B; ++i) {
            n += pb.mask[i];
            sq += pb.mask[i] * q_total.value()[i];
            sy += pb.mask[i] * y[i];
        }
        stats->mean_q = n > 0 ? sq / n : 0.0;
        stats->mean_target = n > 0 ? sy / n : 0.0;
    }
    return tensor::mse(q_total, Tensor::matrix(L * B, 1, y), pb.mask);
}

struct LossResult {
    double loss = 0.0;
    tensor::Gradients grads;
    TdStats stats;
};

inline LossResult td_loss(const std::vector<Window>& windows, const Networks& nets, const TrainConfig& cfg) {
    const PreparedBatch pb = prepare_batch(windows, nets, cfg.env, window_length(cfg));
    Graph g;
    Bound p = tensor::bind(g, nets.online);
    LossResult r;
    Var loss = td_loss_graph(g, p, pb, nets, cfg.gamma, cfg.double_q, &r.stats);
    g.backward(loss);
    r.loss = loss.value()[0];
    r.grads = tensor::gradients(g, p);
    return r;
}

}  // namespace omvp::trainer
