#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "omvp/env/grid_map.hpp"
#include "omvp/error.hpp"

namespace omvp::env {

enum class Action : std::uint8_t { Forward = 0, Backward = 1, TurnLeft = 2, TurnRight = 3, Stop = 4 };
inline constexpr int kActionCount = 5;

enum class StrategyTag : std::uint8_t { Still = 0, LatLoop = 1, LongLoop = 2, Circle = 3 };
inline constexpr std::array<StrategyTag, 4> kStrategies = {StrategyTag::Still, StrategyTag::LatLoop,
                                                          StrategyTag::LongLoop, StrategyTag::Circle};

inline std::string to_string(StrategyTag tag) {
    switch (tag) {
        case StrategyTag::Still: return "still";
        case StrategyTag::LatLoop: return "lat";
        case StrategyTag::LongLoop: return "long";
        case StrategyTag::Circle: return "circle";
    }
    return "?";
}

inline std::optional<StrategyTag> parse_strategy(const std::string& s) {
    for (auto tag : kStrategies)
        if (to_string(tag) == s) return tag;
    return std::nullopt;
}

enum class VehicleKind : std::uint8_t { Pursuer, Evader };

struct VehicleState {
    Cell position;
    Heading heading = Heading::North;
    VehicleKind kind = VehicleKind::Pursuer;
    bool alive = true;

    friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

/// Per-evader movement plan. `block` is the building a circling evader orbits;
/// `phase` is its index on that building's 8-cell ring.
struct EvaderStrategy {
    StrategyTag tag = StrategyTag::Still;
    Cell anchor;
    Cell block;
    int phase = 0;

    friend bool operator==(const EvaderStrategy&, const EvaderStrategy&) = default;
};

struct EnvConfig {
    int width = 13;
    int pursuers = 8;
    int evaders = 4;
    int observation_size = 5;
    int horizon = 50;
    std::optional<StrategyTag> pinned_strategy;

    double ratio() const { return static_cast<double>(pursuers) / evaders; }
    friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

struct WorldState {
    GridMap map;
    std::vector<VehicleState> pursuers;
    std::vector<VehicleState> evaders;
    std::vector<EvaderStrategy> plans;
    StrategyTag strategy = StrategyTag::Still;
    int t = 0;
    int horizon = 50;
    int observation_size = 5;

    int alive_evaders() const {
        return static_cast<int>(std::count_if(evaders.begin(), evaders.end(),
                                              [](const VehicleState& v) { return v.alive; }));
    }
    bool done() const { return t >= horizon || alive_evaders() == 0; }

    friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct PursuerObservation {
    int size = 5;
    Cell center;
    std::vector<std::uint8_t> evaders;    // E, row-major size x size, occluded by buildings
    std::vector<std::uint8_t> obstacles;  // B, row-major size x size, not occluded

    std::uint8_t e(int a, int b) const { return evaders[static_cast<std::size_t>(a * size + b)]; }
    std::uint8_t b(int a, int b) const { return obstacles[static_cast<std::size_t>(a * size + b)]; }
};

struct Capture {
    std::vector<int> pursuers;
    int evader = -1;

    friend bool operator==(const Capture&, const Capture&) = default;
};

struct StepOutcome {
    WorldState next;
    std::vector<double> per_agent_reward;
    double global_reward = 0.0;
    std::vector<Capture> captures;
    bool done = false;
};

// ---------------------------------------------------------------------------
// Visibility
// ---------------------------------------------------------------------------

/// Cells a vehicle at `pos` can see inside a size x size window: the full cross at an
/// intersection, the road axis on a straight segment. A sight line ends at the first
/// building or at the grid edge.
inline std::vector<Cell> observable_area(const GridMap& map, Cell pos, int size = 5) {
    if (!map.is_road(pos))
        throw InvalidPosition("observable_area: (" + std::to_string(pos.row) + "," +
                              std::to_string(pos.col) + ") is not a road cell");
    std::vector<Heading> axes;
    if (map.is_intersection(pos))
        axes.assign(kHeadings.begin(), kHeadings.end());
    else if (pos.row % 2 == 0)
        axes = {Heading::East, Heading::West};
    else
        axes = {Heading::North, Heading::South};

    std::vector<Cell> out{pos};
    const int reach = size / 2;
    for (auto h : axes) {
        Cell c = pos;
        for (int k = 1; k <= reach; ++k) {
            c = c + offset(h);
            if (!map.is_road(c)) break;
            out.push_back(c);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline PursuerObservation observe(const WorldState& world, int k) {
    if (k < 0 || k >= static_cast<int>(world.pursuers.size()))
        throw ContractError("observe: pursuer index out of range");
    const int m = world.observation_size;
    const int r = m / 2;
    const Cell center = world.pursuers[static_cast<std::size_t>(k)].position;

    PursuerObservation obs;
    obs.size = m;
    obs.center = center;
    obs.evaders.assign(static_cast<std::size_t>(m * m), 0);
    obs.obstacles.assign(static_cast<std::size_t>(m * m), 0);

    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            if (world.map.is_obstacle({center.row - r + a, center.col - r + b}))
                obs.obstacles[static_cast<std::size_t>(a * m + b)] = 1;

    for (const Cell& c : observable_area(world.map, center, m)) {
        const bool occupied = std::any_of(world.evaders.begin(), world.evaders.end(),
                                          [&](const VehicleState& e) { return e.alive && e.position == c; });
        if (occupied)
            obs.evaders[static_cast<std::size_t>((c.row - center.row + r) * m + (c.col - center.col + r))] = 1;
    }
    return obs;
}

/// Centralized 3 x W x W state: pursuer counts, live-evader counts, obstacle indicator.
inline std::vector<double> global_state(const WorldState& world) {
    const auto w = static_cast<std::size_t>(world.map.width());
    std::vector<double> s(3 * w * w, 0.0);
    for (const auto& p : world.pursuers) s[world.map.index(p.position)] += 1.0;
    for (const auto& e : world.evaders)
        if (e.alive) s[w * w + world.map.index(e.position)] += 1.0;
    for (const Cell& c : world.map.obstacle_cells()) s[2 * w * w + world.map.index(c)] = 1.0;
    return s;
}

// ---------------------------------------------------------------------------
// Movement
// ---------------------------------------------------------------------------

inline bool legal_target(const GridMap& map, Cell c) { return map.is_road(c); }

/// Resolves a pursuer action. Anything illegal (building, off-grid, a turn away from
/// an intersection) collapses to Stop.
inline VehicleState apply_action(const GridMap& map, const VehicleState& v, Action a) {
    VehicleState out = v;
    Heading h = v.heading;
    Cell target = v.position;
    switch (a) {
        case Action::Stop: return out;
        case Action::Forward: target = v.position + offset(h); break;
        case Action::Backward: target = v.position - offset(h); break;
        case Action::TurnLeft:
        case Action::TurnRight:
            if (!map.is_intersection(v.position)) return out;
            h = a == Action::TurnLeft ? turn_left(h) : turn_right(h);
            target = v.position + offset(h);
            break;
    }
    if (!legal_target(map, target)) return out;
    out.position = target;
    out.heading = h;
    return out;
}

/// The 8 road cells around building `block`, clockwise from its north-west corner.
inline std::array<Cell, 8> ring_around(Cell block) {
    return {Cell{block.row - 1, block.col - 1}, Cell{block.row - 1, block.col},
            Cell{block.row - 1, block.col + 1}, Cell{block.row, block.col + 1},
            Cell{block.row + 1, block.col + 1}, Cell{block.row + 1, block.col},
            Cell{block.row + 1, block.col - 1}, Cell{block.row, block.col - 1}};
}

inline Heading direction_between(Cell from, Cell to) {
    const Cell d = to - from;
    if (d.row < 0) return Heading::North;
    if (d.row > 0) return Heading::South;
    if (d.col > 0) return Heading::East;
    return Heading::West;
}

struct EvaderMove {
    Cell to;
    Heading heading = Heading::North;
    int phase = 0;
};

inline EvaderMove evader_action(const EvaderStrategy& plan, const VehicleState& e, const GridMap& map) {
    EvaderMove mv{e.position, e.heading, plan.phase};
    switch (plan.tag) {
        case StrategyTag::Still: return mv;
        case StrategyTag::LatLoop:
        case StrategyTag::LongLoop: {
            const bool lat = plan.tag == StrategyTag::LatLoop;
            Heading h = e.heading;
            if (is_horizontal(h) != lat) h = lat ? Heading::East : Heading::South;
            for (Heading cand : {h, reverse(h)}) {
                const Cell target = e.position + offset(cand);
                if (legal_target(map, target)) {
                    mv.to = target;
                    mv.heading = cand;
                    return mv;
                }
            }
            return mv;
        }
        case StrategyTag::Circle: {
            const auto ring = ring_around(plan.block);
            const int next = (plan.phase + 1) % 8;
            mv.to = ring[static_cast<std::size_t>(next)];
            mv.heading = direction_between(e.position, mv.to);
            mv.phase = next;
            return mv;
        }
    }
    return mv;
}

// ---------------------------------------------------------------------------
// Reset / step
// ---------------------------------------------------------------------------

/// Headings along which a vehicle at `c` can ever move: all four at an intersection,
/// the road axis elsewhere.
inline std::vector<Heading> road_headings(const GridMap& map, Cell c) {
    if (map.is_intersection(c)) return {kHeadings.begin(), kHeadings.end()};
    if (c.row % 2 == 0) return {Heading::East, Heading::West};
    return {Heading::North, Heading::South};
}

inline WorldState reset(const EnvConfig& cfg, std::uint64_t seed) {
    GridMap map(cfg.width);
    if (cfg.pursuers < 1 || cfg.evaders < 1)
        throw InvalidConfig("need at least one pursuer and one evader");
    if (cfg.observation_size < 1 || cfg.observation_size % 2 == 0)
        throw InvalidConfig("observation size must be odd and positive");
    if (cfg.horizon < 1) throw InvalidConfig("horizon must be positive");
    auto roads = map.road_cells();
    if (static_cast<std::size_t>(cfg.pursuers + cfg.evaders) > roads.size())
        throw InvalidConfig(std::to_string(cfg.pursuers + cfg.evaders) + " vehicles do not fit on " +
                            std::to_string(roads.size()) + " road cells");

    std::mt19937_64 rng(seed);
    auto pick = [&rng](std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    };

    // partial Fisher-Yates: first P+E entries become distinct spawn cells
    const auto total = static_cast<std::size_t>(cfg.pursuers + cfg.evaders);
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t j = i + pick(roads.size() - i);
        std::swap(roads[i], roads[j]);
    }

    WorldState w;
    w.map = map;
    w.horizon = cfg.horizon;
    w.observation_size = cfg.observation_size;
    w.strategy = cfg.pinned_strategy ? *cfg.pinned_strategy : kStrategies[pick(kStrategies.size())];

    auto spawn = [&](Cell c, VehicleKind kind) {
        const auto hs = road_headings(map, c);
        return VehicleState{c, hs[pick(hs.size())], kind, true};
    };
    for (int k = 0; k < cfg.pursuers; ++k)
        w.pursuers.push_back(spawn(roads[static_cast<std::size_t>(k)], VehicleKind::Pursuer));
    for (int m = 0; m < cfg.evaders; ++m) {
        VehicleState e = spawn(roads[static_cast<std::size_t>(cfg.pursuers + m)], VehicleKind::Evader);
        EvaderStrategy plan{w.strategy, e.position, {}, 0};
        if (w.strategy == StrategyTag::Circle) {
            std::vector<Cell> blocks;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj)
                    if (map.is_obstacle({e.position.row + di, e.position.col + dj}))
                        blocks.push_back({e.position.row + di, e.position.col + dj});
            plan.block = blocks[pick(blocks.size())];
            const auto ring = ring_around(plan.block);
            plan.phase = static_cast<int>(std::find(ring.begin(), ring.end(), e.position) - ring.begin());
            e.heading = direction_between(e.position, ring[static_cast<std::size_t>((plan.phase + 1) % 8)]);
        }
        w.evaders.push_back(e);
        w.plans.push_back(plan);
    }
    return w;
}

/// Shares of one capture among `n` capturers. Shares live on a 2^-44 grid so that
/// every partial sum of rewards (up to 512) is exact; each share is within n * 2^-45
/// of 1/n and the shares add to exactly 1.
inline std::vector<double> capture_shares(int n) {
    constexpr double kGrid = 17592186044416.0;  // 2^44
    const double share = std::round(kGrid / n) / kGrid;
    std::vector<double> out(static_cast<std::size_t>(n), share);
    out[0] = 1.0 - share * (n - 1);
    return out;
}

inline StepOutcome step(const WorldState& world, std::span<const Action> actions) {
    if (actions.size() != world.pursuers.size())
        throw ContractError("step: expected " + std::to_string(world.pursuers.size()) + " actions, got " +
                            std::to_string(actions.size()));
    if (world.done()) throw ContractError("step: episode already finished");

    StepOutcome out;
    WorldState& next = out.next;
    next = world;

    for (std::size_t m = 0; m < next.evaders.size(); ++m) {
        auto& e = next.evaders[m];
        if (!e.alive) continue;
        const EvaderMove mv = evader_action(next.plans[m], e, next.map);
        e.position = mv.to;
        e.heading = mv.heading;
        next.plans[m].phase = mv.phase;
    }
    for (std::size_t k = 0; k < next.pursuers.size(); ++k)
        next.pursuers[k] = apply_action(next.map, next.pursuers[k], actions[k]);

    out.per_agent_reward.assign(next.pursuers.size(), 0.0);
    for (std::size_t m = 0; m < next.evaders.size(); ++m) {
        auto& e = next.evaders[m];
        if (!e.alive) continue;
        Capture cap;
        cap.evader = static_cast<int>(m);
        for (std::size_t k = 0; k < next.pursuers.size(); ++k)
            if (next.pursuers[k].position == e.position) cap.pursuers.push_back(static_cast<int>(k));
        if (cap.pursuers.empty()) continue;
        e.alive = false;
        const auto shares = capture_shares(static_cast<int>(cap.pursuers.size()));
        for (std::size_t i = 0; i < cap.pursuers.size(); ++i)
            out.per_agent_reward[static_cast<std::size_t>(cap.pursuers[i])] += shares[i];
        out.global_reward += 1.0;
        out.captures.push_back(std::move(cap));
    }
    next.t += 1;
    out.done = next.done();
    return out;
}

inline StepOutcome step(const WorldState& world, std::initializer_list<Action> actions) {
    return step(world, std::span<const Action>(actions.begin(), actions.size()));
}

}  // namespace omvp::env
