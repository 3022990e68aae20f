#pragma once

// Independent reference implementations used only by tests. They are written from the
// rules directly and share no code paths with the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "omvp/env/world.hpp"

namespace oracle {

using omvp::env::Cell;
using omvp::env::GridMap;

inline bool road(const GridMap& map, int i, int j) {
    const int w = map.width();
    return i >= 0 && j >= 0 && i < w && j < w && !(i % 2 == 1 && j % 2 == 1);
}

/// Visible cells: every cell of the window on the centre's row or column whose straight
/// segment back to the centre is all road.
inline std::vector<Cell> visible_cells(const GridMap& map, Cell c, int m) {
    std::vector<Cell> out;
    const int r = m / 2;
    for (int i = c.row - r; i <= c.row + r; ++i)
        for (int j = c.col - r; j <= c.col + r; ++j) {
            if (i != c.row && j != c.col) continue;
            bool clear = true;
            const int steps = std::abs(i - c.row) + std::abs(j - c.col);
            const int di = (i > c.row) - (i < c.row), dj = (j > c.col) - (j < c.col);
            for (int s = 0; s <= steps; ++s)
                if (!road(map, c.row + s * di, c.col + s * dj)) clear = false;
            if (clear) out.push_back({i, j});
        }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<std::uint8_t> evader_matrix(const omvp::env::WorldState& w, int k) {
    const int m = w.observation_size, r = m / 2;
    const Cell c = w.pursuers[static_cast<std::size_t>(k)].position;
    std::vector<std::uint8_t> e(static_cast<std::size_t>(m * m), 0);
    const auto vis = visible_cells(w.map, c, m);
    for (const auto& ev : w.evaders) {
        if (!ev.alive) continue;
        if (std::find(vis.begin(), vis.end(), ev.position) == vis.end()) continue;
        e[static_cast<std::size_t>((ev.position.row - c.row + r) * m + ev.position.col - c.col + r)] = 1;
    }
    return e;
}

/// Move table: headings N,E,S,W; actions forward, backward, left, right, stop.
inline omvp::env::VehicleState move(const GridMap& map, omvp::env::VehicleState v, int action) {
    static const int dr[4] = {-1, 0, 1, 0};
    static const int dc[4] = {0, 1, 0, -1};
    const int h = static_cast<int>(v.heading);
    const int i = v.position.row, j = v.position.col;
    const bool crossing = i % 2 == 0 && j % 2 == 0;
    int nh = h, ni = i, nj = j;
    if (action == 0) {
        ni = i + dr[h];
        nj = j + dc[h];
    } else if (action == 1) {
        ni = i - dr[h];
        nj = j - dc[h];
    } else if (action == 2 || action == 3) {
        if (!crossing) return v;
        nh = action == 2 ? (h + 3) % 4 : (h + 1) % 4;
        ni = i + dr[nh];
        nj = j + dc[nh];
    } else {
        return v;
    }
    if (!road(map, ni, nj)) return v;
    v.position = {ni, nj};
    v.heading = static_cast<omvp::env::Heading>(nh);
    return v;
}


using Rows = std::vector<std::vector<double>>;

/// softmax(Q K^T / sqrt(dk)) V evaluated with plain loops.
inline Rows attention(const Rows& q, const Rows& k, const Rows& v) {
    const std::size_t dk = k[0].size();
    Rows out(q.size(), std::vector<double>(v[0].size(), 0.0));
    for (std::size_t i = 0; i < q.size(); ++i) {
        std::vector<double> logits(k.size());
        double top = -1e300;
        for (std::size_t j = 0; j < k.size(); ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < dk; ++c) dot += q[i][c] * k[j][c];
            logits[j] = dot / std::sqrt(static_cast<double>(dk));
            top = std::max(top, logits[j]);
        }
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - top));
        for (std::size_t j = 0; j < k.size(); ++j)
            for (std::size_t c = 0; c < v[0].size(); ++c) out[i][c] += logits[j] / z * v[j][c];
    }
    return out;
}

}  // namespace oracle
