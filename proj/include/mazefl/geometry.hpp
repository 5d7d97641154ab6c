#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mazefl/errors.hpp"

namespace mazefl {

// 15 block classes: a grid block is labeled by which of its four sides
// carry walls, seen from the observer. A block walled on all four sides
// cannot be entered, so mask 0b1111 is not a class.
inline constexpr int kNumBlockLabels = 15;
inline constexpr int kFullWallMask = 0b1111;

// Wall-mask bits, observer frame.
inline constexpr int kWallFront = 1;
inline constexpr int kWallRight = 2;
inline constexpr int kWallBack = 4;
inline constexpr int kWallLeft = 8;

// World directions, indexed counterclockwise: 0=+x, 1=+y, 2=-x, 3=-y.
// Headings use the same indices; heading h points along angle h*pi/2.
inline constexpr std::array<int, 4> kDirDx{1, 0, -1, 0};
inline constexpr std::array<int, 4> kDirDy{0, 1, 0, -1};

// Mask bit carrying the wall in world direction `dir` for an observer at
// heading 0 (facing +x): front=+x, right=-y, back=-x, left=+y.
inline constexpr std::array<int, 4> kMaskBitOfDir{0, 3, 2, 1};

inline int opposite_dir(int dir) { return (dir + 2) & 3; }

// label <-> mask: labels are the mask values 0..14.
int label_from_mask(int mask);
int mask_from_label(int label);

// Mask seen after the observer turns `quarter_turns` clockwise
// (negative = counterclockwise). Sides are fixed in the world; only the
// observer frame rotates: new front = old side that was `quarter_turns`
// to the left.
int rotate_mask(int mask, int quarter_turns);

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 v);

struct Pose {
    Pose() = default;
    // heading in radians, counterclockwise from +x; normalized to [0, 2pi).
    Pose(double x, double y, double heading_rad);

    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

double normalize_angle(double radians);  // into [0, 2pi)

struct Segment {
    Vec2 p1;
    Vec2 p2;
};

struct Circle {
    Vec2 center;
    double radius = 0.0;
};

using Obstacle = std::variant<Segment, Circle>;

// Wall slabs are 2 * kWallFaceOffset thick, centered on the grid line;
// each adjacent cell sees a flat face this far inside its boundary.
inline constexpr double kWallFaceOffset = 0.02;

inline constexpr double kDefaultCellSize = 0.6;

enum class WallKind { alpha, beta };

std::string to_string(WallKind kind);
WallKind wall_kind_from_string(const std::string& name);

// Cross-section of every wall in a maze. The two kinds differ in the
// cylinders riding on the wall axis, which is what gives a classifier
// something maze-specific to overfit to.
struct WallProfile {
    WallKind kind = WallKind::alpha;
    double cylinder_radius = 0.0;
    std::vector<double> cylinder_positions;  // fractions along the wall span

    static WallProfile alpha();  // 2 cylinders r=0.05 at 1/3, 2/3
    static WallProfile beta();   // 3 cylinders r=0.035 at 1/4, 1/2, 3/4
    static WallProfile from_kind(WallKind kind);
};

struct Cell {
    int x = 0;
    int y = 0;

    friend bool operator==(Cell, Cell) = default;
};

// Square grid maze. Cell (0,0) is the southwest corner; +x goes east,
// +y north. Wall arrays index the grid lines:
//   h_walls[y][x] : wall on line y*cell_size, spanning x..x+1  (y in 0..size)
//   v_walls[y][x] : wall on line x*cell_size, spanning y..y+1  (x in 0..size)
// so h_walls[y][x] is the south wall of cell (x,y) and v_walls[y][x] its
// west wall. Entries are 0/1.
struct Maze {
    int size = 0;
    double cell_size = kDefaultCellSize;
    WallProfile profile;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::uint8_t>> h_walls;
    std::vector<std::vector<std::uint8_t>> v_walls;

    bool in_bounds(Cell cell) const {
        return cell.x >= 0 && cell.x < size && cell.y >= 0 && cell.y < size;
    }

    // Wall on the `dir` side of `cell`; throws OutOfBounds off the grid.
    bool wall_present(Cell cell, int dir) const;

    // Wall mask of `cell` for an observer at heading 0.
    int cell_mask(Cell cell) const;

    Vec2 cell_center(Cell cell) const;
    Cell cell_of(Vec2 point) const;

    double width() const { return size * cell_size; }

    // Checks every structural invariant: closed boundary, consistent
    // array shapes, no fully-walled cell, all cells reachable, sane
    // profile. Throws InvalidSize or FormatError.
    void validate() const;
};

// Spanning-tree maze (iterative depth-first backtracker) with each
// remaining interior wall then removed independently with probability
// p_open, so discovered maps are not restricted to trees.
Maze generate_maze(std::uint64_t seed, int size, const WallProfile& profile,
                   double p_open = 0.3);

// Obstacles contributed by the walls of one cell: per present wall, the
// face segment offset into this cell plus that wall's cylinders. An open
// side contributes nothing here; whatever is visible through it belongs
// to the cells behind it (see maze_obstacles).
std::vector<Obstacle> cell_obstacles(const Maze& maze, Cell cell);

// Every wall face and cylinder in the maze, cylinders deduplicated.
// Occluded obstacles never win a ray minimum, so casting against this
// set is equivalent to gathering cells recursively through openings.
std::vector<Obstacle> maze_obstacles(const Maze& maze);

// First hit of the ray from `origin` along `angle`, capped at max_range.
double ray_cast(std::span<const Obstacle> obstacles, Vec2 origin, double angle,
                double max_range);

// Distance from a point to an obstacle; 0 inside a circle.
double distance_to_obstacle(const Obstacle& obstacle, Vec2 point);
double min_clearance(std::span<const Obstacle> obstacles, Vec2 point);

bool all_cells_reachable(const Maze& maze);

nlohmann::json maze_to_json(const Maze& maze);
Maze maze_from_json(const nlohmann::json& j);  // validates
void save_maze(const Maze& maze, const std::string& path);
Maze load_maze(const std::string& path);

}  // namespace mazefl
