#pragma once

#include <span>
#include <vector>

#include "omvp/env/world.hpp"
#include "omvp/tensor/tensor.hpp"

namespace omvp::policy {

using tensor::Tensor;

// Per-agent input row: flatten(E) | flatten(B) | position / (W-1) | heading one-hot (N,E,S,W).
inline constexpr std::size_t kPoseFeatures = 6;

inline std::size_t feature_width(int observation_size) {
    const auto m = static_cast<std::size_t>(observation_size);
    return 2 * m * m + kPoseFeatures;
}

inline void write_agent_features(const env::PursuerObservation& obs, const env::VehicleState& pose, int width,
                                 double* out) {
    const std::size_t mm = static_cast<std::size_t>(obs.size) * static_cast<std::size_t>(obs.size);
    if (obs.evaders.size() != mm || obs.obstacles.size() != mm)
        throw ContractError("agent features: observation matrices do not match their size");
    for (std::size_t i = 0; i < mm; ++i) out[i] = obs.evaders[i];
    for (std::size_t i = 0; i < mm; ++i) out[mm + i] = obs.obstacles[i];
    const double scale = 1.0 / static_cast<double>(width - 1);
    out[2 * mm] = pose.position.row * scale;
    out[2 * mm + 1] = pose.position.col * scale;
    for (std::size_t h = 0; h < 4; ++h) out[2 * mm + 2 + h] = 0.0;
    out[2 * mm + 2 + static_cast<std::size_t>(pose.heading)] = 1.0;
}

/// N x F feature matrix, one row per agent. All observations must share one size.
inline Tensor agent_features(std::span<const env::PursuerObservation> obs, std::span<const env::VehicleState> poses,
                             int width) {
    if (obs.empty()) throw ContractError("agent features: no agents");
    if (obs.size() != poses.size()) throw ContractError("agent features: observation and pose counts differ");
    const int m = obs.front().size;
    for (const auto& o : obs)
        if (o.size != m) throw ContractError("agent features: observations have mismatched window sizes");
    const std::size_t f = feature_width(m);
    Tensor out = Tensor::matrix(obs.size(), f);
    for (std::size_t k = 0; k < obs.size(); ++k) write_agent_features(obs[k], poses[k], width, out.data() + k * f);
    return out;
}

/// Writes the features of every pursuer in `world` into `out` (N x F, row-major).
inline void write_team_features(const env::WorldState& world, double* out) {
    const std::size_t f = feature_width(world.observation_size);
    for (std::size_t k = 0; k < world.pursuers.size(); ++k)
        write_agent_features(env::observe(world, static_cast<int>(k)), world.pursuers[k], world.map.width(),
                             out + k * f);
}

inline Tensor team_features(const env::WorldState& world) {
    Tensor out = Tensor::matrix(world.pursuers.size(), feature_width(world.observation_size));
    write_team_features(world, out.data());
    return out;
}

}  // namespace omvp::policy
