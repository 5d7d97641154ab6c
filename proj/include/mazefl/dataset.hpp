#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mazefl/geometry.hpp"
#include "mazefl/lidar.hpp"

namespace mazefl {

// Pose perturbation applied to every collected sweep: position jittered
// by an isotropic gaussian, nominal heading by a gaussian in radians.
struct JitterParams {
    double pos_sigma = 0.02;
    double heading_sigma = 0.05;
};

// Where a dataset came from; stored verbatim in the file trailer.
struct Provenance {
    std::uint64_t maze_seed = 0;
    WallKind profile = WallKind::alpha;
    JitterParams jitter;
    NoiseModel noise;
    int sweeps_per_orientation = 0;
    std::uint64_t collect_seed = 0;
};

// Feature vectors (f32, one sweep each) with block-class labels.
// Storage is flat and row-major, so what save() writes is exactly what
// sits in memory.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::size_t feature_dim) : feature_dim_(feature_dim) {}

    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }
    std::size_t feature_dim() const { return feature_dim_; }

    std::span<const float> features(std::size_t i) const {
        return {data_.data() + i * feature_dim_, feature_dim_};
    }
    std::uint8_t label(std::size_t i) const { return labels_[i]; }

    void append(std::span<const float> features, std::uint8_t label);

    // Label counts over kNumBlockLabels bins.
    std::vector<std::size_t> label_histogram() const;

    Provenance provenance;

private:
    std::size_t feature_dim_ = kSamplesPerSweep;
    std::vector<float> data_;
    std::vector<std::uint8_t> labels_;
};

// Sweeps every cell at all four cardinal orientations,
// sweeps_per_orientation times each, with jittered poses and sensor
// noise. Labels are observer-frame block classes for the nominal
// heading. Deterministic in (maze, jitter, noise, seed): each
// (cell, heading) unit draws from its own derived stream.
Dataset collect(const Maze& maze, int sweeps_per_orientation,
                const JitterParams& jitter, const NoiseModel& noise,
                std::uint64_t seed);

// Stratified (train, test) split: per label, a shuffled test_fraction
// share (rounded to nearest) goes to test. Throws EmptyClass if any
// label present in the dataset has fewer than 2 samples, so both sides
// of every present class are populated when counts allow it.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed);

// Binary dataset file, little-endian:
//   "MZFL" u8 version=1 u32 count u32 dim
//   count * (dim * f32 features, u8 label)
//   u32 provenance_json_len, provenance JSON bytes
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace mazefl
