#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "omvp/trainer/networks.hpp"

namespace omvp::trainer {

inline double epsilon_at(long step, const TrainConfig& cfg) {
    if (step < 0) throw ContractError("epsilon_at: negative step");
    return std::max(cfg.epsilon_min, 1.0 - cfg.epsilon_decay * static_cast<double>(step));
}

/// Index of the largest entry in row `k`; ties go to the lowest index.
inline std::size_t greedy_action(const Tensor& q, std::size_t k) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < q.cols(); ++a)
        if (q(k, a) > q(k, best)) best = a;
    return best;
}

/// Per agent: a uniform action with probability eps, otherwise the greedy one. The
/// greedy action therefore has probability 1 - eps + eps/|A|.
inline std::vector<env::Action> select_actions(const Tensor& q, double eps, std::mt19937_64& rng) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw ContractError("select_actions: epsilon outside [0, 1]");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> any(0, env::kActionCount - 1);
    std::vector<env::Action> out(q.rows());
    for (std::size_t k = 0; k < q.rows(); ++k) {
        const bool explore = coin(rng) < eps;
        out[k] = static_cast<env::Action>(explore ? any(rng) : static_cast<int>(greedy_action(q, k)));
    }
    return out;
}

struct Frame {
    std::vector<env::VehicleState> pursuers;
    std::vector<env::VehicleState> evaders;

    friend bool operator==(const Frame&, const Frame&) = default;
};

/// One rollout. frames has length()+1 entries; the hidden state fed to the agent
/// network is kept at every `chunk`-th step, which is where replay windows start.
struct Episode {
    std::vector<Frame> frames;
    std::vector<std::uint8_t> actions;  // T x N
    std::vector<double> rewards;        // global, T
    std::vector<double> agent_rewards;  // T x N
    bool terminated = false;            // every evader caught (a horizon cut is not terminal)
    env::StrategyTag strategy = env::StrategyTag::Still;
    std::size_t agents = 0;
    std::size_t chunk = 5;
    std::size_t hidden_size = 0;  // H x width values per stored state
    std::vector<float> hidden;     // float halves replay memory; warm starts tolerate the rounding

    std::size_t length() const { return rewards.size(); }
    double total_reward() const {
        double s = 0.0;
        for (double r : rewards) s += r;
        return s;
    }
    const float* hidden_at(std::size_t t) const { return hidden.data() + (t / chunk) * hidden_size; }

    friend bool operator==(const Episode&, const Episode&) = default;
};

/// Decentralized execution: carries the agent network's hidden state across steps.
class Actor {
public:
    Actor(const Networks& nets, const ParamSet& params) : nets_(&nets), params_(&params) { reset(); }

    void reset() {
        if (nets_->learns())
            hidden_ = Tensor::matrix(nets_->agent.hidden_rows(nets_->agents), nets_->agent.hidden_width(), 0.0);
    }

    const Tensor& hidden() const { return hidden_; }

    /// Q-values (N x 5) for `world`; advances the hidden state.
    Tensor q_values(const env::WorldState& world, std::vector<Tensor>* attention = nullptr) {
        Graph g(false);
        Bound b = tensor::bind(g, *params_);
        auto out = nets_->agent.forward(b, g.constant(policy::team_features(world)), g.constant(hidden_),
                                        nets_->agents, attention != nullptr);
        hidden_ = out.hidden.value();
        if (attention) *attention = std::move(out.attention);
        return out.q.value();
    }

private:
    const Networks* nets_;
    const ParamSet* params_;
    Tensor hidden_;
};

inline Frame snapshot(const env::WorldState& w) { return {w.pursuers, w.evaders}; }

/// Sees every step: the state before it, the joint action and the outcome.
using StepObserver = std::function<void(const env::WorldState&, std::span<const env::Action>, const env::StepOutcome&)>;

/// Rolls one episode. Everything random (spawns, strategy, exploration) derives from `seed`.
inline Episode collect_episode(const env::EnvConfig& env_cfg, const Networks& nets, const ParamSet& params,
                               double eps, std::uint64_t seed, std::size_t chunk = 5,
                               const StepObserver& observer = {}) {
    env::WorldState world = env::reset(env_cfg, derive_seed(seed, 1));
    std::mt19937_64 rng(derive_seed(seed, 2));
    Actor actor(nets, params);

    Episode ep;
    ep.agents = world.pursuers.size();
    ep.strategy = world.strategy;
    ep.chunk = chunk;
    ep.hidden_size = actor.hidden().size();
    ep.frames.push_back(snapshot(world));
    const Tensor uniform = Tensor::matrix(ep.agents, env::kActionCount, 0.0);
    while (!world.done()) {
        if (world.t % static_cast<int>(chunk) == 0)
            for (double h : actor.hidden().values()) ep.hidden.push_back(static_cast<float>(h));
        const Tensor q = nets.learns() ? actor.q_values(world) : uniform;
        const auto actions = select_actions(q, nets.learns() ? eps : 1.0, rng);
        const auto out = env::step(world, actions);
        if (observer) observer(world, actions, out);
        for (auto a : actions) ep.actions.push_back(static_cast<std::uint8_t>(a));
        ep.rewards.push_back(out.global_reward);
        ep.agent_rewards.insert(ep.agent_rewards.end(), out.per_agent_reward.begin(), out.per_agent_reward.end());
        world = out.next;
        ep.frames.push_back(snapshot(world));
    }
    ep.terminated = world.alive_evaders() == 0;
    return ep;
}

struct EvalResult {
    double mean_reward = 0.0;
    double capture_rate = 0.0;        // captured evaders / evaders, pooled over episodes
    double mean_first_capture = 0.0;  // steps until the first capture; the horizon if none
    int episodes = 0;
};

/// Greedy (eps = 0) evaluation over `episodes` seeded episodes; the random algorithm
/// acts uniformly.
inline EvalResult evaluate(const Networks& nets, const ParamSet& params, const env::EnvConfig& scenario,
                           int episodes, std::uint64_t seed) {
    if (episodes < 1) throw ContractError("evaluate: need at least one episode");
    EvalResult r;
    r.episodes = episodes;
    double captured = 0.0, first = 0.0;
    for (int i = 0; i < episodes; ++i) {
        const Episode ep =
            collect_episode(scenario, nets, params, 0.0, derive_seed(seed, 7, static_cast<std::uint64_t>(i)));
        r.mean_reward += ep.total_reward();
        captured += ep.total_reward();
        std::size_t t = 0;
        while (t < ep.length() && ep.rewards[t] == 0.0) ++t;
        first += t < ep.length() ? static_cast<double>(t + 1) : static_cast<double>(scenario.horizon);
    }
    r.mean_reward /= episodes;
    r.capture_rate = captured / (static_cast<double>(episodes) * scenario.evaders);
    r.mean_first_capture = first / episodes;
    return r;
}

}  // namespace omvp::trainer
