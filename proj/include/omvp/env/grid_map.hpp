#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "omvp/error.hpp"

namespace omvp::env {

struct Cell {
    int row = 0;
    int col = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

enum class Heading : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

inline constexpr std::array<Heading, 4> kHeadings = {Heading::North, Heading::East, Heading::South,
                                                    Heading::West};

inline constexpr Cell offset(Heading h) {
    switch (h) {
        case Heading::North: return {-1, 0};
        case Heading::East: return {0, 1};
        case Heading::South: return {1, 0};
        case Heading::West: return {0, -1};
    }
    return {0, 0};
}

inline constexpr Heading turn_left(Heading h) {
    return static_cast<Heading>((static_cast<int>(h) + 3) % 4);
}
inline constexpr Heading turn_right(Heading h) {
    return static_cast<Heading>((static_cast<int>(h) + 1) % 4);
}
inline constexpr Heading reverse(Heading h) {
    return static_cast<Heading>((static_cast<int>(h) + 2) % 4);
}
inline constexpr bool is_horizontal(Heading h) { return h == Heading::East || h == Heading::West; }

inline constexpr Cell operator+(Cell a, Cell b) { return {a.row + b.row, a.col + b.col}; }
inline constexpr Cell operator-(Cell a, Cell b) { return {a.row - b.row, a.col - b.col}; }

/// Square urban grid. Buildings sit on cells whose row and column are both odd,
/// which leaves a lattice of roads one cell wide with an intersection at every
/// (even, even) cell.
class GridMap {
public:
    GridMap() = default;

    explicit GridMap(int width) : width_(width) {
        if (width < 5 || width % 2 == 0)
            throw InvalidConfig("grid width must be odd and >= 5, got " + std::to_string(width));
        obstacle_.assign(static_cast<std::size_t>(width * width), 0);
        for (int i = 1; i < width; i += 2)
            for (int j = 1; j < width; j += 2) obstacle_[index({i, j})] = 1;
    }

    int width() const { return width_; }
    int intersection_interval() const { return 1; }

    bool in_bounds(Cell c) const {
        return c.row >= 0 && c.col >= 0 && c.row < width_ && c.col < width_;
    }
    bool is_obstacle(Cell c) const { return in_bounds(c) && obstacle_[index(c)] != 0; }
    bool is_road(Cell c) const { return in_bounds(c) && obstacle_[index(c)] == 0; }
    bool is_intersection(Cell c) const {
        return is_road(c) && c.row % 2 == 0 && c.col % 2 == 0;
    }

    std::size_t index(Cell c) const {
        return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(c.col);
    }

    std::vector<Cell> obstacle_cells() const { return collect(true); }
    std::vector<Cell> road_cells() const { return collect(false); }
    std::size_t obstacle_count() const {
        std::size_t n = 0;
        for (auto v : obstacle_) n += v;
        return n;
    }
    std::size_t road_count() const { return obstacle_.size() - obstacle_count(); }

    friend bool operator==(const GridMap&, const GridMap&) = default;

private:
    std::vector<Cell> collect(bool obstacles) const {
        std::vector<Cell> out;
        for (int i = 0; i < width_; ++i)
            for (int j = 0; j < width_; ++j)
                if ((obstacle_[index({i, j})] != 0) == obstacles) out.push_back({i, j});
        return out;
    }

    int width_ = 0;
    std::vector<std::uint8_t> obstacle_;
};

inline GridMap build_map(int width) { return GridMap(width); }

}  // namespace omvp::env
