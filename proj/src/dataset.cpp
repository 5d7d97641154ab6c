#include "mazefl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "mazefl/detail/binary.hpp"
#include "mazefl/rng.hpp"

namespace mazefl {

void Dataset::append(std::span<const float> features, std::uint8_t label) {
    if (features.size() != feature_dim_) {
        throw ShapeMismatch("sample has dim " + std::to_string(features.size()) +
                            ", dataset expects " + std::to_string(feature_dim_));
    }
    if (label >= kNumBlockLabels) {
        throw InvalidMask("label out of range: " + std::to_string(label));
    }
    data_.insert(data_.end(), features.begin(), features.end());
    labels_.push_back(label);
}

std::vector<std::size_t> Dataset::label_histogram() const {
    std::vector<std::size_t> hist(kNumBlockLabels, 0);
    for (std::uint8_t l : labels_) {
        ++hist[l];
    }
    return hist;
}

Dataset collect(const Maze& maze, int sweeps_per_orientation,
                const JitterParams& jitter, const NoiseModel& noise,
                std::uint64_t seed) {
    if (sweeps_per_orientation < 1) {
        throw InvalidArgument("sweeps_per_orientation must be at least 1");
    }

    std::vector<Obstacle> obstacles = maze_obstacles(maze);
    Dataset ds;
    ds.provenance = {maze.seed,  maze.profile.kind,       jitter,
                     noise,      sweeps_per_orientation,  seed};

    for (int y = 0; y < maze.size; ++y) {
        for (int x = 0; x < maze.size; ++x) {
            Cell cell{x, y};
            Vec2 center = maze.cell_center(cell);
            int mask = maze.cell_mask(cell);
            for (int heading = 0; heading < 4; ++heading) {
                int label =
                    label_from_mask(rotate_mask(mask, (4 - heading) & 3));
                double nominal = heading * std::numbers::pi / 2.0;
                std::uint64_t unit =
                    (static_cast<std::uint64_t>(y) * maze.size + x) * 4 +
                    heading;
                Rng rng(derive_seed(seed, unit));
                for (int s = 0; s < sweeps_per_orientation; ++s) {
                    Pose pose(center.x, center.y, nominal);
                    // Jittered pose; fall back to the exact center if a
                    // cramped cell keeps rejecting draws.
                    for (int attempt = 0; attempt < 100; ++attempt) {
                        Pose candidate(
                            center.x + rng.gaussian(0.0, jitter.pos_sigma),
                            center.y + rng.gaussian(0.0, jitter.pos_sigma),
                            nominal + rng.gaussian(0.0, jitter.heading_sigma));
                        if (min_clearance(obstacles,
                                          {candidate.x, candidate.y}) >=
                            kWallFaceOffset) {
                            pose = candidate;
                            break;
                        }
                    }
                    LidarScan scan = sweep_obstacles(obstacles, pose, noise, rng);
                    ds.append(features(scan),
                              static_cast<std::uint8_t>(label));
                }
            }
        }
    }
    return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InvalidArgument("test_fraction must be in (0, 1)");
    }
    if (dataset.empty()) {
        throw EmptyDataset("cannot split an empty dataset");
    }

    std::vector<std::vector<std::size_t>> by_label(kNumBlockLabels);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        by_label[dataset.label(i)].push_back(i);
    }

    std::vector<std::size_t> train_idx, test_idx;
    for (int label = 0; label < kNumBlockLabels; ++label) {
        auto& idx = by_label[label];
        if (idx.empty()) {
            continue;  // class absent from this maze
        }
        if (idx.size() < 2) {
            throw EmptyClass("label " + std::to_string(label) +
                             " has fewer than 2 samples");
        }
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
        shuffle(idx, rng);
        auto k = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(idx.size())));
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + k);
        train_idx.insert(train_idx.end(), idx.begin() + k, idx.end());
    }
    // Original sample order, so the result does not depend on label order.
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    auto build = [&](const std::vector<std::size_t>& idx) {
        Dataset out(dataset.feature_dim());
        out.provenance = dataset.provenance;
        for (std::size_t i : idx) {
            out.append(dataset.features(i), dataset.label(i));
        }
        return out;
    };
    return {build(train_idx), build(test_idx)};
}

namespace {

constexpr char kDatasetMagic[5] = "MZFL";
constexpr std::uint8_t kDatasetVersion = 1;

nlohmann::json provenance_to_json(const Provenance& p) {
    return {
        {"maze_seed", p.maze_seed},
        {"profile", to_string(p.profile)},
        {"jitter_pos_sigma", p.jitter.pos_sigma},
        {"jitter_heading_sigma", p.jitter.heading_sigma},
        {"noise_relative_sigma", p.noise.relative_sigma},
        {"noise_accuracy_range", p.noise.accuracy_range},
        {"sweeps_per_orientation", p.sweeps_per_orientation},
        {"collect_seed", p.collect_seed},
    };
}

Provenance provenance_from_json(const nlohmann::json& j) {
    Provenance p;
    p.maze_seed = j.at("maze_seed").get<std::uint64_t>();
    p.profile = wall_kind_from_string(j.at("profile"));
    p.jitter.pos_sigma = j.at("jitter_pos_sigma").get<double>();
    p.jitter.heading_sigma = j.at("jitter_heading_sigma").get<double>();
    p.noise.relative_sigma = j.at("noise_relative_sigma").get<double>();
    p.noise.accuracy_range = j.at("noise_accuracy_range").get<double>();
    p.sweeps_per_orientation = j.at("sweeps_per_orientation").get<int>();
    p.collect_seed = j.at("collect_seed").get<std::uint64_t>();
    return p;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }

    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), kDatasetMagic, kDatasetMagic + 4);
    detail::put_u8(buf, kDatasetVersion);
    detail::put_u32le(buf, static_cast<std::uint32_t>(dataset.size()));
    detail::put_u32le(buf, static_cast<std::uint32_t>(dataset.feature_dim()));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));

    for (std::size_t i = 0; i < dataset.size(); ++i) {
        buf.clear();
        for (float f : dataset.features(i)) {
            detail::put_f32le(buf, f);
        }
        detail::put_u8(buf, dataset.label(i));
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
    }

    std::string prov = provenance_to_json(dataset.provenance).dump();
    buf.clear();
    detail::put_u32le(buf, static_cast<std::uint32_t>(prov.size()));
    buf.insert(buf.end(), prov.begin(), prov.end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));

    if (!out.flush()) {
        throw IoError("write failed: " + path);
    }
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path);
    }
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read failed: " + path);
    }

    detail::ByteCursor cur(raw);
    cur.expect_magic(kDatasetMagic);
    if (cur.u8() != kDatasetVersion) {
        throw FormatError("unsupported dataset version");
    }
    std::uint32_t count = cur.u32le();
    std::uint32_t dim = cur.u32le();
    if (dim == 0) {
        throw FormatError("dataset dim must be positive");
    }
    std::size_t body = static_cast<std::size_t>(count) * (4u * dim + 1u);
    if (cur.remaining() < body + 4) {
        throw FormatError("dataset truncated");
    }

    Dataset ds(dim);
    std::vector<float> sample(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto bytes = cur.bytes(4u * dim);
        for (std::uint32_t k = 0; k < dim; ++k) {
            sample[k] = detail::load_f32le(bytes.data() + 4u * k);
        }
        std::uint8_t label = cur.u8();
        if (label >= kNumBlockLabels) {
            throw FormatError("label out of range in dataset");
        }
        ds.append(sample, label);
    }

    std::uint32_t prov_len = cur.u32le();
    auto prov_bytes = cur.bytes(prov_len);
    if (!cur.at_end()) {
        throw FormatError("trailing bytes after dataset");
    }
    try {
        ds.provenance = provenance_from_json(nlohmann::json::parse(
            prov_bytes.begin(), prov_bytes.end()));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad provenance JSON: ") + e.what());
    }
    return ds;
}

}  // namespace mazefl
