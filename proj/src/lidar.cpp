#include "mazefl/lidar.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mazefl {

LidarScan sweep_obstacles(std::span<const Obstacle> obstacles,
                          const Pose& pose, const NoiseModel& noise,
                          Rng& rng) {
    Vec2 origin{pose.x, pose.y};
    if (min_clearance(obstacles, origin) < kWallFaceOffset) {
        throw PoseInsideObstacle("pose overlaps an obstacle");
    }

    LidarScan scan;
    scan.pose = pose;
    scan.ranges.resize(kSamplesPerSweep);
    constexpr double kStep = 2.0 * std::numbers::pi / kSamplesPerSweep;
    for (int i = 0; i < kSamplesPerSweep; ++i) {
        double d = ray_cast(obstacles, origin, pose.heading + i * kStep,
                            kLidarMaxRange);
        if (d < kLidarMaxRange && noise.relative_sigma > 0.0) {
            double sigma = noise.relative_sigma * d;
            if (d >= noise.accuracy_range) {
                sigma *= 3.0;
            }
            d = std::clamp(d + rng.gaussian(0.0, sigma), kLidarMinRange,
                           kLidarMaxRange);
        }
        scan.ranges[i] = d;
    }
    return scan;
}

LidarScan sweep(const Maze& maze, const Pose& pose, const NoiseModel& noise,
                Rng& rng) {
    if (!maze.in_bounds(maze.cell_of({pose.x, pose.y}))) {
        throw OutOfBounds("sweep pose outside maze");
    }
    return sweep_obstacles(maze_obstacles(maze), pose, noise, rng);
}

std::vector<float> features(const LidarScan& scan) {
    std::vector<float> out(scan.ranges.size());
    std::transform(scan.ranges.begin(), scan.ranges.end(), out.begin(),
                   [](double r) { return static_cast<float>(feature_from_range(r)); });
    return out;
}

double feature_from_range(double range) { return range / kLidarMaxRange; }

double range_from_feature(double feature) { return feature * kLidarMaxRange; }

}  // namespace mazefl
