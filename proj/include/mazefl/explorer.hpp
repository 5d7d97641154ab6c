#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mazefl/geometry.hpp"
#include "mazefl/lidar.hpp"
#include "mazefl/mlp.hpp"

namespace mazefl {

// A move: turn relative to the current heading, then advance one cell.
enum class Action { forward, cw90, ccw90, back180 };

std::string to_string(Action action);
Action action_from_string(const std::string& name);

// Clockwise-first preference: straight, right, left, back, as world
// directions for a robot at `heading`.
std::array<int, 4> direction_priority(int heading);
// The action that moves from `heading` into world direction `to_dir`.
Action action_for(int from_heading, int to_dir);
int nearest_cardinal(double heading_rad);

struct TrajectoryStep {
    Cell cell;
    int heading = 0;
    // Action taken from here; empty on the final (halt) entry.
    std::optional<Action> action;
};

struct DiscoveredMap {
    int size = 0;
    // Row-major [y * size + x], world-frame labels; empty = never visited.
    std::vector<std::optional<int>> cells;
    std::vector<TrajectoryStep> trajectory;
    int steps = 0;
    bool stuck = false;

    // Diagnostics, not serialized.
    bool budget_exhausted = false;
    int disagreements = 0;

    std::optional<int> label_at(Cell cell) const {
        return cells[static_cast<std::size_t>(cell.y) * size + cell.x];
    }
};

// Scores one scan: kNumBlockLabels values whose argmax is the
// observer-frame label.
using CellClassifier = std::function<std::vector<double>(const LidarScan&)>;

CellClassifier mlp_classifier(MlpParams params);
// Reads the true label off the maze; scores are one-hot. The discovery
// pipeline run with this classifier is exact by construction, which pins
// every error in an end-to-end run on the model.
CellClassifier ground_truth_classifier(const Maze& maze);

struct Classification {
    int label = 0;     // observer frame
    int world_mask = 0;
};

// Applies the classifier and rotates the resulting mask into the world
// frame using the scan pose snapped to the nearest cardinal heading.
Classification classify_cell(const CellClassifier& classifier,
                             const LidarScan& scan);

struct DiscoverConfig {
    int step_budget = 0;          // <= 0 picks 10 * size^2
    int sweeps_per_classify = 1;  // scores averaged over this many sweeps
    NoiseModel noise;
};

// Autonomous discovery: starting at cell (0,0) heading +x, repeatedly
// sweep, classify, record walls, and move by clockwise-first preference
// into open unvisited cells, depth-first backtracking otherwise.
// Wall beliefs come from classifications (first record wins, later
// conflicts only logged) except that physical evidence — a blocked move,
// or an edge actually traversed — overrides them. Halts one backtrack
// move after no believed-open edge leads anywhere new; `stuck` is set if
// the robot is walled in by beliefs it cannot act against.
DiscoveredMap discover(const Maze& maze, const CellClassifier& classifier,
                       std::uint64_t seed, const DiscoverConfig& config = {});
DiscoveredMap discover(const Maze& maze, const MlpParams& model,
                       std::uint64_t seed, const DiscoverConfig& config = {});

struct MapAccuracy {
    int visited = 0;
    int correct = 0;
    double accuracy = 0.0;  // over visited cells
};

MapAccuracy compare_maps(const Maze& maze, const DiscoveredMap& discovered);

// JSON: {size, cells[y][x] = label|null, trajectory, steps, stuck}.
nlohmann::json discovered_to_json(const DiscoveredMap& map);
DiscoveredMap discovered_from_json(const nlohmann::json& j);
void save_discovered(const DiscoveredMap& map, const std::string& path);
DiscoveredMap load_discovered(const std::string& path);

}  // namespace mazefl
