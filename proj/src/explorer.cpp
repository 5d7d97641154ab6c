#include "mazefl/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "mazefl/rng.hpp"

namespace mazefl {

std::string to_string(Action action) {
    switch (action) {
        case Action::forward: return "forward";
        case Action::cw90: return "cw90";
        case Action::ccw90: return "ccw90";
        default: return "back180";
    }
}

Action action_from_string(const std::string& name) {
    if (name == "forward") return Action::forward;
    if (name == "cw90") return Action::cw90;
    if (name == "ccw90") return Action::ccw90;
    if (name == "back180") return Action::back180;
    throw FormatError("unknown action: " + name);
}

std::array<int, 4> direction_priority(int heading) {
    int h = heading & 3;
    return {h, (h + 3) & 3, (h + 1) & 3, (h + 2) & 3};
}

Action action_for(int from_heading, int to_dir) {
    switch ((to_dir - from_heading) & 3) {
        case 0: return Action::forward;
        case 1: return Action::ccw90;
        case 2: return Action::back180;
        default: return Action::cw90;
    }
}

int nearest_cardinal(double heading_rad) {
    double half_pi = std::numbers::pi / 2.0;
    return static_cast<int>(std::llround(normalize_angle(heading_rad) /
                                         half_pi)) & 3;
}

CellClassifier mlp_classifier(MlpParams params) {
    return [params = std::move(params)](const LidarScan& scan) {
        return forward(params, features(scan));
    };
}

CellClassifier ground_truth_classifier(const Maze& maze) {
    return [maze](const LidarScan& scan) {
        Cell cell = maze.cell_of({scan.pose.x, scan.pose.y});
        int heading = nearest_cardinal(scan.pose.heading);
        int label =
            label_from_mask(rotate_mask(maze.cell_mask(cell), (4 - heading) & 3));
        std::vector<double> scores(kNumBlockLabels, 0.0);
        scores[label] = 1.0;
        return scores;
    };
}

Classification classify_cell(const CellClassifier& classifier,
                             const LidarScan& scan) {
    std::vector<double> scores = classifier(scan);
    int label = static_cast<int>(
        std::max_element(scores.begin(), scores.end()) - scores.begin());
    int heading = nearest_cardinal(scan.pose.heading);
    return {label, rotate_mask(mask_from_label(label), heading)};
}

namespace {

enum : std::uint8_t { kEdgeUnknown = 0, kEdgeOpen = 1, kEdgeWalled = 2 };

struct Edge {
    std::uint8_t state = kEdgeUnknown;
    bool confirmed = false;  // physical evidence: traversal or a block
};

// Believed wall grid, indexed like Maze::h_walls / v_walls. The maze
// boundary starts out known: the robot can rely on the arena extent.
class EdgeBeliefs {
public:
    explicit EdgeBeliefs(int size) : size_(size) {
        h_.assign(static_cast<std::size_t>(size + 1),
                  std::vector<Edge>(size));
        v_.assign(static_cast<std::size_t>(size),
                  std::vector<Edge>(size + 1));
        for (int x = 0; x < size; ++x) {
            h_[0][x] = {kEdgeWalled, true};
            h_[size][x] = {kEdgeWalled, true};
        }
        for (int y = 0; y < size; ++y) {
            v_[y][0] = {kEdgeWalled, true};
            v_[y][size] = {kEdgeWalled, true};
        }
    }

    Edge& at(Cell cell, int dir) {
        switch (dir & 3) {
            case 0: return v_[cell.y][cell.x + 1];
            case 1: return h_[cell.y + 1][cell.x];
            case 2: return v_[cell.y][cell.x];
            default: return h_[cell.y][cell.x];
        }
    }

    // First record wins; a later conflicting claim is only counted.
    // Physical evidence (confirmed) always overwrites beliefs.
    void record(Cell cell, int dir, bool walled, bool confirmed,
                int& disagreements) {
        Edge& e = at(cell, dir);
        std::uint8_t state = walled ? kEdgeWalled : kEdgeOpen;
        if (confirmed) {
            e = {state, true};
            return;
        }
        if (e.state == kEdgeUnknown) {
            e.state = state;
        } else if (e.state != state) {
            ++disagreements;
        }
    }

private:
    int size_;
    std::vector<std::vector<Edge>> h_;
    std::vector<std::vector<Edge>> v_;
};

}  // namespace

DiscoveredMap discover(const Maze& maze, const CellClassifier& classifier,
                       std::uint64_t seed, const DiscoverConfig& config) {
    int sweeps = std::max(1, config.sweeps_per_classify);
    int budget = config.step_budget > 0 ? config.step_budget
                                        : 10 * maze.size * maze.size;

    std::vector<Obstacle> obstacles = maze_obstacles(maze);
    Rng rng(seed);

    DiscoveredMap map;
    map.size = maze.size;
    map.cells.assign(static_cast<std::size_t>(maze.size) * maze.size,
                     std::nullopt);

    EdgeBeliefs beliefs(maze.size);
    std::vector<std::uint8_t> visited(map.cells.size(), 0);
    auto idx = [&](Cell c) {
        return static_cast<std::size_t>(c.y) * maze.size + c.x;
    };

    std::vector<Cell> stack;
    Cell cur{0, 0};
    int heading = 0;

    // Every believed-open edge from a visited cell leads somewhere
    // already visited?
    auto complete = [&] {
        for (int y = 0; y < maze.size; ++y) {
            for (int x = 0; x < maze.size; ++x) {
                Cell c{x, y};
                if (!visited[idx(c)]) {
                    continue;
                }
                for (int dir = 0; dir < 4; ++dir) {
                    Cell next{c.x + kDirDx[dir], c.y + kDirDy[dir]};
                    if (maze.in_bounds(next) && !visited[idx(next)] &&
                        beliefs.at(c, dir).state != kEdgeWalled) {
                        return false;
                    }
                }
            }
        }
        return true;
    };

    auto classify_here = [&] {
        Vec2 center = maze.cell_center(cur);
        Pose pose(center.x, center.y, heading * std::numbers::pi / 2.0);
        std::vector<double> scores(kNumBlockLabels, 0.0);
        for (int s = 0; s < sweeps; ++s) {
            LidarScan scan = sweep_obstacles(obstacles, pose, config.noise, rng);
            std::vector<double> one = classifier(scan);
            for (int i = 0; i < kNumBlockLabels; ++i) {
                scores[i] += one[i];
            }
        }
        int label = static_cast<int>(
            std::max_element(scores.begin(), scores.end()) - scores.begin());
        return rotate_mask(mask_from_label(label), heading);
    };

    auto halt_here = [&] {
        map.trajectory.push_back({cur, heading, std::nullopt});
        return map;
    };

    auto dir_toward = [](Cell from, Cell to) {
        for (int dir = 0; dir < 4; ++dir) {
            if (Cell{from.x + kDirDx[dir], from.y + kDirDy[dir]} == to) {
                return dir;
            }
        }
        throw InvalidArgument("backtrack target not adjacent");
    };

    auto move_to = [&](Cell next) {
        int dir = dir_toward(cur, next);
        map.trajectory.push_back({cur, heading, action_for(heading, dir)});
        heading = dir;
        cur = next;
        ++map.steps;
    };

    // One backtracking move past completion: the run ends beside the
    // last cell it discovered.
    auto finish = [&] {
        if (!stack.empty() && map.steps < budget) {
            Cell back = stack.back();
            stack.pop_back();
            move_to(back);
        }
        return halt_here();
    };

    for (;;) {
        int world_mask = classify_here();
        if (!visited[idx(cur)]) {
            visited[idx(cur)] = 1;
            map.cells[idx(cur)] = label_from_mask(world_mask);
            for (int dir = 0; dir < 4; ++dir) {
                bool walled = world_mask >> kMaskBitOfDir[dir] & 1;
                beliefs.record(cur, dir, walled, false, map.disagreements);
            }
        } else if (map.cells[idx(cur)] != label_from_mask(world_mask)) {
            ++map.disagreements;  // revisit sweep disputes the record
        }

        if (complete()) {
            return finish();
        }

        if (map.steps >= budget) {
            map.budget_exhausted = true;
            return halt_here();
        }

        // Pick a move; physical blocks fix the belief and retry.
        bool moved = false;
        while (!moved) {
            int chosen = -1;
            for (int dir : direction_priority(heading)) {
                Cell next{cur.x + kDirDx[dir], cur.y + kDirDy[dir]};
                if (maze.in_bounds(next) && !visited[idx(next)] &&
                    beliefs.at(cur, dir).state == kEdgeOpen) {
                    chosen = dir;
                    break;
                }
            }
            if (chosen >= 0) {
                Cell next{cur.x + kDirDx[chosen], cur.y + kDirDy[chosen]};
                if (maze.wall_present(cur, chosen)) {
                    // Blocked: the simulated bumper wins over the belief.
                    beliefs.record(cur, chosen, true, true, map.disagreements);
                    if (complete()) {
                        return finish();
                    }
                    continue;
                }
                beliefs.record(cur, chosen, false, true, map.disagreements);
                stack.push_back(cur);
                move_to(next);
                moved = true;
            } else if (!stack.empty()) {
                Cell back = stack.back();
                stack.pop_back();
                move_to(back);
                moved = true;
            } else {
                // Nowhere to move and nowhere to back off to.
                map.stuck = !complete();
                return halt_here();
            }
        }
    }
}

DiscoveredMap discover(const Maze& maze, const MlpParams& model,
                       std::uint64_t seed, const DiscoverConfig& config) {
    return discover(maze, mlp_classifier(model), seed, config);
}

MapAccuracy compare_maps(const Maze& maze, const DiscoveredMap& discovered) {
    if (discovered.size != maze.size) {
        throw ShapeMismatch("map and maze sizes differ");
    }
    MapAccuracy acc;
    for (int y = 0; y < maze.size; ++y) {
        for (int x = 0; x < maze.size; ++x) {
            std::optional<int> got = discovered.label_at({x, y});
            if (!got) {
                continue;
            }
            ++acc.visited;
            if (*got == label_from_mask(maze.cell_mask({x, y}))) {
                ++acc.correct;
            }
        }
    }
    acc.accuracy = acc.visited > 0
                       ? static_cast<double>(acc.correct) / acc.visited
                       : 0.0;
    return acc;
}

nlohmann::json discovered_to_json(const DiscoveredMap& map) {
    nlohmann::json cells = nlohmann::json::array();
    for (int y = 0; y < map.size; ++y) {
        nlohmann::json row = nlohmann::json::array();
        for (int x = 0; x < map.size; ++x) {
            auto label = map.label_at({x, y});
            row.push_back(label ? nlohmann::json(*label) : nlohmann::json());
        }
        cells.push_back(std::move(row));
    }
    nlohmann::json traj = nlohmann::json::array();
    for (const TrajectoryStep& step : map.trajectory) {
        traj.push_back({
            {"cell", {step.cell.x, step.cell.y}},
            {"heading", step.heading},
            {"action", step.action ? nlohmann::json(to_string(*step.action))
                                   : nlohmann::json()},
        });
    }
    return {
        {"size", map.size},
        {"cells", std::move(cells)},
        {"trajectory", std::move(traj)},
        {"steps", map.steps},
        {"stuck", map.stuck},
    };
}

DiscoveredMap discovered_from_json(const nlohmann::json& j) {
    DiscoveredMap map;
    try {
        map.size = j.at("size").get<int>();
        if (map.size < 1) {
            throw FormatError("bad discovered map size");
        }
        const auto& cells = j.at("cells");
        if (cells.size() != static_cast<std::size_t>(map.size)) {
            throw FormatError("bad discovered map rows");
        }
        map.cells.assign(static_cast<std::size_t>(map.size) * map.size,
                         std::nullopt);
        for (int y = 0; y < map.size; ++y) {
            const auto& row = cells[y];
            if (row.size() != static_cast<std::size_t>(map.size)) {
                throw FormatError("bad discovered map columns");
            }
            for (int x = 0; x < map.size; ++x) {
                if (!row[x].is_null()) {
                    int label = row[x].get<int>();
                    if (label < 0 || label >= kNumBlockLabels) {
                        throw FormatError("discovered label out of range");
                    }
                    map.cells[static_cast<std::size_t>(y) * map.size + x] =
                        label;
                }
            }
        }
        for (const auto& step : j.at("trajectory")) {
            TrajectoryStep ts;
            ts.cell = {step.at("cell")[0].get<int>(),
                       step.at("cell")[1].get<int>()};
            ts.heading = step.at("heading").get<int>();
            if (!step.at("action").is_null()) {
                ts.action = action_from_string(step.at("action"));
            }
            map.trajectory.push_back(ts);
        }
        map.steps = j.at("steps").get<int>();
        map.stuck = j.at("stuck").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad discovered-map JSON: ") + e.what());
    }
    return map;
}

void save_discovered(const DiscoveredMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << discovered_to_json(map).dump(2) << '\n';
    if (!out.flush()) {
        throw IoError("write failed: " + path);
    }
}

DiscoveredMap load_discovered(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad discovered-map JSON: ") + e.what());
    }
    return discovered_from_json(j);
}

}  // namespace mazefl
