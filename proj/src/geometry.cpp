#include "mazefl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "mazefl/rng.hpp"

namespace mazefl {

namespace {

constexpr double kRayEpsilon = 1e-9;

void check_mask_range(int mask) {
    if (mask < 0 || mask > kFullWallMask) {
        throw InvalidMask("mask out of range: " + std::to_string(mask));
    }
}

}  // namespace

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

int label_from_mask(int mask) {
    check_mask_range(mask);
    if (mask == kFullWallMask) {
        throw InvalidMask("fully walled block has no class");
    }
    return mask;
}

int mask_from_label(int label) {
    if (label < 0 || label >= kNumBlockLabels) {
        throw InvalidMask("label out of range: " + std::to_string(label));
    }
    return label;
}

int rotate_mask(int mask, int quarter_turns) {
    check_mask_range(mask);
    // Observer bit i ends up holding the side that was i+q counterclockwise
    // of front before a turn of q quarter-turns clockwise.
    int q = ((quarter_turns % 4) + 4) % 4;
    int rotated = 0;
    for (int i = 0; i < 4; ++i) {
        if (mask >> ((i + q) % 4) & 1) {
            rotated |= 1 << i;
        }
    }
    return rotated;
}

double normalize_angle(double radians) {
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    double a = std::fmod(radians, kTwoPi);
    if (a < 0.0) {
        a += kTwoPi;
    }
    if (a >= kTwoPi) {  // fmod/rounding edge, e.g. tiny negative input
        a -= kTwoPi;
    }
    return a;
}

Pose::Pose(double x_, double y_, double heading_rad)
    : x(x_), y(y_), heading(normalize_angle(heading_rad)) {}

std::string to_string(WallKind kind) {
    return kind == WallKind::alpha ? "alpha" : "beta";
}

WallKind wall_kind_from_string(const std::string& name) {
    if (name == "alpha") return WallKind::alpha;
    if (name == "beta") return WallKind::beta;
    throw InvalidArgument("unknown wall profile: " + name);
}

WallProfile WallProfile::alpha() {
    return {WallKind::alpha, 0.05, {1.0 / 3.0, 2.0 / 3.0}};
}

WallProfile WallProfile::beta() {
    return {WallKind::beta, 0.035, {0.25, 0.5, 0.75}};
}

WallProfile WallProfile::from_kind(WallKind kind) {
    return kind == WallKind::alpha ? alpha() : beta();
}

bool Maze::wall_present(Cell cell, int dir) const {
    if (!in_bounds(cell)) {
        throw OutOfBounds("cell (" + std::to_string(cell.x) + "," +
                          std::to_string(cell.y) + ") outside maze");
    }
    switch (dir & 3) {
        case 0: return v_walls[cell.y][cell.x + 1] != 0;  // east
        case 1: return h_walls[cell.y + 1][cell.x] != 0;  // north
        case 2: return v_walls[cell.y][cell.x] != 0;      // west
        default: return h_walls[cell.y][cell.x] != 0;     // south
    }
}

int Maze::cell_mask(Cell cell) const {
    int mask = 0;
    for (int dir = 0; dir < 4; ++dir) {
        if (wall_present(cell, dir)) {
            mask |= 1 << kMaskBitOfDir[dir];
        }
    }
    return mask;
}

Vec2 Maze::cell_center(Cell cell) const {
    return {(cell.x + 0.5) * cell_size, (cell.y + 0.5) * cell_size};
}

Cell Maze::cell_of(Vec2 point) const {
    return {static_cast<int>(std::floor(point.x / cell_size)),
            static_cast<int>(std::floor(point.y / cell_size))};
}

void Maze::validate() const {
    if (size < 2) {
        throw InvalidSize("maze size must be at least 2, got " +
                          std::to_string(size));
    }
    if (!(cell_size > 0.0)) {
        throw FormatError("cell_size must be positive");
    }
    auto expect_dims = [](const auto& rows, std::size_t nrows,
                          std::size_t ncols, const char* what) {
        if (rows.size() != nrows) {
            throw FormatError(std::string(what) + ": wrong row count");
        }
        for (const auto& row : rows) {
            if (row.size() != ncols) {
                throw FormatError(std::string(what) + ": wrong column count");
            }
        }
    };
    auto n = static_cast<std::size_t>(size);
    expect_dims(h_walls, n + 1, n, "h_walls");
    expect_dims(v_walls, n, n + 1, "v_walls");

    for (int x = 0; x < size; ++x) {
        if (!h_walls[0][x] || !h_walls[size][x]) {
            throw FormatError("boundary must be closed");
        }
    }
    for (int y = 0; y < size; ++y) {
        if (!v_walls[y][0] || !v_walls[y][size]) {
            throw FormatError("boundary must be closed");
        }
    }
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            if (cell_mask({x, y}) == kFullWallMask) {
                throw FormatError("cell (" + std::to_string(x) + "," +
                                  std::to_string(y) + ") is fully walled");
            }
        }
    }
    if (profile.cylinder_positions.empty() || profile.cylinder_radius <= 0.0) {
        throw FormatError("wall profile has no cylinders");
    }
    for (double f : profile.cylinder_positions) {
        if (!(f > 0.0 && f < 1.0)) {
            throw FormatError("cylinder position outside wall span");
        }
    }
    if (!all_cells_reachable(*this)) {
        throw FormatError("not all cells reachable from (0,0)");
    }
}

Maze generate_maze(std::uint64_t seed, int size, const WallProfile& profile,
                   double p_open) {
    if (size < 2) {
        throw InvalidSize("maze size must be at least 2, got " +
                          std::to_string(size));
    }
    if (!(p_open >= 0.0 && p_open <= 1.0)) {
        throw InvalidArgument("p_open must be in [0, 1]");
    }

    Maze maze;
    maze.size = size;
    maze.profile = profile;
    maze.seed = seed;
    auto n = static_cast<std::size_t>(size);
    maze.h_walls.assign(n + 1, std::vector<std::uint8_t>(n, 1));
    maze.v_walls.assign(n, std::vector<std::uint8_t>(n + 1, 1));

    auto open_wall = [&](Cell cell, int dir) {
        switch (dir & 3) {
            case 0: maze.v_walls[cell.y][cell.x + 1] = 0; break;
            case 1: maze.h_walls[cell.y + 1][cell.x] = 0; break;
            case 2: maze.v_walls[cell.y][cell.x] = 0; break;
            default: maze.h_walls[cell.y][cell.x] = 0; break;
        }
    };

    Rng rng(seed);

    // Depth-first backtracker: carve a uniform spanning tree walk.
    std::vector<std::uint8_t> visited(n * n, 0);
    auto idx = [size](Cell c) {
        return static_cast<std::size_t>(c.y) * size + c.x;
    };
    std::vector<Cell> stack{{0, 0}};
    visited[0] = 1;
    std::vector<int> dirs{0, 1, 2, 3};
    while (!stack.empty()) {
        Cell cur = stack.back();
        shuffle(dirs, rng);
        bool advanced = false;
        for (int dir : dirs) {
            Cell next{cur.x + kDirDx[dir], cur.y + kDirDy[dir]};
            if (maze.in_bounds(next) && !visited[idx(next)]) {
                open_wall(cur, dir);
                visited[idx(next)] = 1;
                stack.push_back(next);
                advanced = true;
                break;
            }
        }
        if (!advanced) {
            stack.pop_back();
        }
    }

    // Thin the tree: drop each remaining interior wall independently.
    for (int y = 1; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            if (maze.h_walls[y][x] && rng.uniform() < p_open) {
                maze.h_walls[y][x] = 0;
            }
        }
    }
    for (int y = 0; y < size; ++y) {
        for (int x = 1; x < size; ++x) {
            if (maze.v_walls[y][x] && rng.uniform() < p_open) {
                maze.v_walls[y][x] = 0;
            }
        }
    }

    maze.validate();
    return maze;
}

namespace {

// Face segment of the wall on the `dir` side of `cell`, offset into the
// cell, plus that wall's cylinders (centered on the grid line).
void append_wall_obstacles(const Maze& maze, Cell cell, int dir,
                           std::vector<Obstacle>& out, bool with_cylinders) {
    double cs = maze.cell_size;
    double x0 = cell.x * cs, x1 = (cell.x + 1) * cs;
    double y0 = cell.y * cs, y1 = (cell.y + 1) * cs;
    Segment face;
    Vec2 axis_from, axis_to;
    switch (dir & 3) {
        case 0:  // east
            face = {{x1 - kWallFaceOffset, y0}, {x1 - kWallFaceOffset, y1}};
            axis_from = {x1, y0}, axis_to = {x1, y1};
            break;
        case 1:  // north
            face = {{x0, y1 - kWallFaceOffset}, {x1, y1 - kWallFaceOffset}};
            axis_from = {x0, y1}, axis_to = {x1, y1};
            break;
        case 2:  // west
            face = {{x0 + kWallFaceOffset, y0}, {x0 + kWallFaceOffset, y1}};
            axis_from = {x0, y0}, axis_to = {x0, y1};
            break;
        default:  // south
            face = {{x0, y0 + kWallFaceOffset}, {x1, y0 + kWallFaceOffset}};
            axis_from = {x0, y0}, axis_to = {x1, y0};
            break;
    }
    out.emplace_back(face);
    if (with_cylinders) {
        for (double f : maze.profile.cylinder_positions) {
            out.emplace_back(Circle{axis_from + f * (axis_to - axis_from),
                                    maze.profile.cylinder_radius});
        }
    }
}

}  // namespace

std::vector<Obstacle> cell_obstacles(const Maze& maze, Cell cell) {
    std::vector<Obstacle> out;
    for (int dir = 0; dir < 4; ++dir) {
        if (maze.wall_present(cell, dir)) {
            append_wall_obstacles(maze, cell, dir, out, true);
        }
    }
    return out;
}

std::vector<Obstacle> maze_obstacles(const Maze& maze) {
    std::vector<Obstacle> out;
    double cs = maze.cell_size;
    auto add_wall = [&](Vec2 from, Vec2 to, Vec2 offset) {
        out.emplace_back(Segment{from + offset, to + offset});
        out.emplace_back(Segment{from - offset, to - offset});
        for (double f : maze.profile.cylinder_positions) {
            out.emplace_back(
                Circle{from + f * (to - from), maze.profile.cylinder_radius});
        }
    };
    for (int y = 0; y <= maze.size; ++y) {
        for (int x = 0; x < maze.size; ++x) {
            if (maze.h_walls[y][x]) {
                add_wall({x * cs, y * cs}, {(x + 1) * cs, y * cs},
                         {0.0, kWallFaceOffset});
            }
        }
    }
    for (int y = 0; y < maze.size; ++y) {
        for (int x = 0; x <= maze.size; ++x) {
            if (maze.v_walls[y][x]) {
                add_wall({x * cs, y * cs}, {x * cs, (y + 1) * cs},
                         {kWallFaceOffset, 0.0});
            }
        }
    }
    return out;
}

double ray_cast(std::span<const Obstacle> obstacles, Vec2 origin, double angle,
                double max_range) {
    Vec2 d{std::cos(angle), std::sin(angle)};
    double best = max_range;
    for (const Obstacle& ob : obstacles) {
        if (const auto* seg = std::get_if<Segment>(&ob)) {
            // origin + t*d = p1 + s*(p2 - p1), 0 <= s <= 1
            Vec2 e = seg->p2 - seg->p1;
            double denom = cross(d, e);
            if (std::abs(denom) < 1e-15) {
                continue;  // parallel; collinear grazes count as misses
            }
            Vec2 w = seg->p1 - origin;
            double t = cross(w, e) / denom;
            double s = cross(w, d) / denom;
            if (t > kRayEpsilon && s >= 0.0 && s <= 1.0 && t < best) {
                best = t;
            }
        } else {
            const auto& c = std::get<Circle>(ob);
            Vec2 m = c.center - origin;
            double b = dot(m, d);
            double disc = b * b - (dot(m, m) - c.radius * c.radius);
            if (disc < 0.0) {
                continue;
            }
            double sq = std::sqrt(disc);
            double t = b - sq;
            if (t <= kRayEpsilon) {
                t = b + sq;  // origin inside or on the circle
            }
            if (t > kRayEpsilon && t < best) {
                best = t;
            }
        }
    }
    return best;
}

double distance_to_obstacle(const Obstacle& obstacle, Vec2 point) {
    if (const auto* seg = std::get_if<Segment>(&obstacle)) {
        Vec2 e = seg->p2 - seg->p1;
        double len2 = dot(e, e);
        double t = len2 > 0.0 ? std::clamp(dot(point - seg->p1, e) / len2, 0.0, 1.0)
                              : 0.0;
        return norm(point - (seg->p1 + t * e));
    }
    const auto& c = std::get<Circle>(obstacle);
    return std::max(0.0, norm(point - c.center) - c.radius);
}

double min_clearance(std::span<const Obstacle> obstacles, Vec2 point) {
    double best = std::numeric_limits<double>::infinity();
    for (const Obstacle& ob : obstacles) {
        best = std::min(best, distance_to_obstacle(ob, point));
    }
    return best;
}

bool all_cells_reachable(const Maze& maze) {
    auto n = static_cast<std::size_t>(maze.size);
    std::vector<std::uint8_t> seen(n * n, 0);
    std::vector<Cell> queue{{0, 0}};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!queue.empty()) {
        Cell cur = queue.back();
        queue.pop_back();
        for (int dir = 0; dir < 4; ++dir) {
            Cell next{cur.x + kDirDx[dir], cur.y + kDirDy[dir]};
            if (!maze.in_bounds(next) || maze.wall_present(cur, dir)) {
                continue;
            }
            auto i = static_cast<std::size_t>(next.y) * maze.size + next.x;
            if (!seen[i]) {
                seen[i] = 1;
                ++reached;
                queue.push_back(next);
            }
        }
    }
    return reached == n * n;
}

nlohmann::json maze_to_json(const Maze& maze) {
    return {
        {"size", maze.size},
        {"cell_size", maze.cell_size},
        {"profile", to_string(maze.profile.kind)},
        {"seed", maze.seed},
        {"h_walls", maze.h_walls},
        {"v_walls", maze.v_walls},
    };
}

Maze maze_from_json(const nlohmann::json& j) {
    Maze maze;
    try {
        maze.size = j.at("size").get<int>();
        maze.cell_size = j.at("cell_size").get<double>();
        maze.profile =
            WallProfile::from_kind(wall_kind_from_string(j.at("profile")));
        maze.seed = j.at("seed").get<std::uint64_t>();
        maze.h_walls = j.at("h_walls").get<decltype(maze.h_walls)>();
        maze.v_walls = j.at("v_walls").get<decltype(maze.v_walls)>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad maze JSON: ") + e.what());
    } catch (const InvalidArgument& e) {
        // e.g. an unknown profile name: in a file that is a format problem
        throw FormatError(std::string("bad maze JSON: ") + e.what());
    }
    maze.validate();
    return maze;
}

void save_maze(const Maze& maze, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << maze_to_json(maze).dump(2) << '\n';
    if (!out.flush()) {
        throw IoError("write failed: " + path);
    }
}

Maze load_maze(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad maze JSON: ") + e.what());
    }
    return maze_from_json(j);
}

}  // namespace mazefl
