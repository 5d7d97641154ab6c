#pragma once

#include <span>
#include <vector>

#include "mazefl/geometry.hpp"
#include "mazefl/rng.hpp"

namespace mazefl {

// One sweep is a full turn of equally spaced rays starting at the pose
// heading and proceeding counterclockwise.
inline constexpr int kSamplesPerSweep = 1147;
inline constexpr double kLidarMinRange = 0.15;
inline constexpr double kLidarMaxRange = 12.0;

// Range noise is zero-mean gaussian with sigma proportional to the true
// distance: relative_sigma * d within accuracy_range, three times that
// beyond it. relative_sigma == 0 disables noise (and draws nothing from
// the rng, so noiseless sweeps are rng-independent).
struct NoiseModel {
    double relative_sigma = 0.01;
    double accuracy_range = 3.0;
};

struct LidarScan {
    Pose pose;
    std::vector<double> ranges;  // kSamplesPerSweep readings, meters
};

// Sweep against an explicit obstacle set. Rays that hit nothing read
// exactly max range (no noise: a missing return is not a measurement);
// hits are noised then clamped to [kLidarMinRange, kLidarMaxRange].
// Throws PoseInsideObstacle if the pose is inside an obstacle or closer
// than kWallFaceOffset to one.
LidarScan sweep_obstacles(std::span<const Obstacle> obstacles,
                          const Pose& pose, const NoiseModel& noise, Rng& rng);

// Sweep inside a maze; the pose must lie within the maze bounds.
LidarScan sweep(const Maze& maze, const Pose& pose, const NoiseModel& noise,
                Rng& rng);

// Model features: ranges scaled by 1/kLidarMaxRange into (0, 1].
std::vector<float> features(const LidarScan& scan);
double feature_from_range(double range);
double range_from_feature(double feature);

}  // namespace mazefl
