#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "omvp/env/world.hpp"
#include "omvp/policy/transformer.hpp"

namespace omvp::trainer {

enum class Algorithm { T3Qmix, T3Vdn, Qmix, Vdn, Random };

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::T3Qmix: return "t3-qmix";
        case Algorithm::T3Vdn: return "t3-vdn";
        case Algorithm::Qmix: return "qmix";
        case Algorithm::Vdn: return "vdn";
        case Algorithm::Random: return "random";
    }
    return "?";
}

inline std::optional<Algorithm> parse_algorithm(const std::string& s) {
    for (auto a : {Algorithm::T3Qmix, Algorithm::T3Vdn, Algorithm::Qmix, Algorithm::Vdn, Algorithm::Random})
        if (to_string(a) == s) return a;
    return std::nullopt;
}

inline bool uses_transformer(Algorithm a) { return a == Algorithm::T3Qmix || a == Algorithm::T3Vdn; }
inline bool uses_qmix(Algorithm a) { return a == Algorithm::T3Qmix || a == Algorithm::Qmix; }

struct ModelConfig {
    std::size_t embed = 250;
    std::size_t heads = 5;
    std::size_t depth = 2;
    bool layer_norm = true;
    policy::HiddenMode hidden_mode = policy::HiddenMode::Team;
    std::size_t rnn_hidden = 128;
    std::size_t mixer_hidden = 128;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
    env::EnvConfig env;
    Algorithm algorithm = Algorithm::T3Qmix;
    ModelConfig model;

    double gamma = 0.95;
    std::size_t batch_size = 32;
    double learning_rate = 0.001;
    double epsilon_decay = 0.0001;
    double epsilon_min = 0.1;
    long total_steps = 2'000'000;
    long target_update = 200;  // train steps between hard copies
    std::size_t replay_capacity = 5000;
    std::size_t bptt_window = 5;
    bool full_unroll = false;
    bool double_q = true;
    double grad_clip = 10.0;  // global norm; 0 disables

    long eval_interval = 20'000;  // env steps
    int eval_episodes = 50;
    long checkpoint_interval = 200'000;
    long max_train_steps = -1;  // negative: unlimited
    std::uint64_t seed = 1;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
    if (!(c.gamma >= 0.0 && c.gamma < 1.0)) throw InvalidConfig("gamma must lie in [0, 1)");
    if (!(c.epsilon_min > 0.0 && c.epsilon_min <= 1.0)) throw InvalidConfig("epsilon_min must lie in (0, 1]");
    if (c.epsilon_decay < 0.0) throw InvalidConfig("epsilon_decay must be non-negative");
    if (c.batch_size == 0) throw InvalidConfig("batch_size must be positive");
    if (c.learning_rate < 0.0) throw InvalidConfig("learning_rate must be non-negative");
    if (c.total_steps < 0) throw InvalidConfig("total_steps must be non-negative");
    if (c.target_update <= 0) throw InvalidConfig("target_update must be positive");
    if (c.replay_capacity < c.batch_size) throw InvalidConfig("replay_capacity must hold at least one batch");
    if (c.bptt_window == 0) throw InvalidConfig("bptt_window must be positive");
    if (c.grad_clip < 0.0) throw InvalidConfig("grad_clip must be non-negative");
    if (c.eval_interval <= 0) throw InvalidConfig("eval_interval must be positive");
    if (c.eval_episodes < 1) throw InvalidConfig("eval_episodes must be at least 1");
    if (c.checkpoint_interval <= 0) throw InvalidConfig("checkpoint_interval must be positive");
    if (uses_transformer(c.algorithm) && (c.model.embed == 0 || c.model.heads == 0 || c.model.embed % c.model.heads))
        throw InvalidConfig("embed_dim must be a positive multiple of heads");
    if (c.model.depth == 0 || c.model.rnn_hidden == 0 || c.model.mixer_hidden == 0)
        throw InvalidConfig("network widths and depth must be positive");
    // constructing a map and a world checks width, capacity and window size
    (void)env::reset(c.env, 0);
}

}  // namespace omvp::trainer
