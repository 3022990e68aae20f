#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "omvp/env/world.hpp"

namespace omvp::env {

inline char heading_char(Heading h) {
    switch (h) {
        case Heading::North: return 'N';
        case Heading::East: return 'E';
        case Heading::South: return 'S';
        case Heading::West: return 'W';
    }
    return '?';
}

/// One text row per grid row: `#` building, `.` road, a digit for pursuer k (k mod 10),
/// `P` where several pursuers share a cell, `E` for a live evader.
inline std::vector<std::string> render_rows(const WorldState& w) {
    const int n = w.map.width();
    std::vector<std::string> rows(static_cast<std::size_t>(n), std::string(static_cast<std::size_t>(n), '.'));
    auto at = [&](Cell c) -> char& {
        return rows[static_cast<std::size_t>(c.row)][static_cast<std::size_t>(c.col)];
    };
    for (const Cell& c : w.map.obstacle_cells()) at(c) = '#';
    for (const auto& e : w.evaders)
        if (e.alive) at(e.position) = 'E';
    for (std::size_t k = 0; k < w.pursuers.size(); ++k) {
        char& ch = at(w.pursuers[k].position);
        ch = (ch >= '0' && ch <= '9') || ch == 'P' ? 'P' : static_cast<char>('0' + k % 10);
    }
    return rows;
}

inline void render_frame(std::ostream& os, const WorldState& w, double episode_reward) {
    os << "t=" << w.t << " evaders=" << w.alive_evaders() << " reward=" << episode_reward << '\n';
    for (const auto& row : render_rows(w)) os << row << '\n';
    os << '\n';
}

inline const char* action_name(Action a) {
    switch (a) {
        case Action::Forward: return "forward";
        case Action::Backward: return "backward";
        case Action::TurnLeft: return "left";
        case Action::TurnRight: return "right";
        case Action::Stop: return "stop";
    }
    return "?";
}

/// One line-delimited JSON record per step. `t` is the step index the actions were
/// taken at; positions are those after the step.
inline nlohmann::json trace_record(const WorldState& before, std::span<const Action> actions,
                                   const StepOutcome& out) {
    using nlohmann::json;
    json pursuers = json::array();
    for (const auto& p : out.next.pursuers)
        pursuers.push_back({p.position.row, p.position.col, std::string(1, heading_char(p.heading))});
    json evaders = json::array();
    for (const auto& e : out.next.evaders)
        evaders.push_back(e.alive ? json::array({e.position.row, e.position.col}) : json(nullptr));
    json acts = json::array();
    for (auto a : actions) acts.push_back(action_name(a));
    json caps = json::array();
    for (const auto& c : out.captures) caps.push_back({{"pursuers", c.pursuers}, {"evader", c.evader}});
    return json{{"t", before.t},
                {"positions", {{"pursuers", pursuers}, {"evaders", evaders}}},
                {"actions", acts},
                {"rewards", {{"per_agent", out.per_agent_reward}, {"global", out.global_reward}}},
                {"captures", caps}};
}

}  // namespace omvp::env
