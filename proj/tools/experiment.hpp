#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "mazefl/dataset.hpp"

namespace mazefl::cli {

// Every random choice in the pipeline gets its own named seed so stages
// can be reproduced in isolation from the same config file.
struct ExperimentSeeds {
    std::uint64_t maze_alpha = 906;
    std::uint64_t maze_beta = 150;
    std::uint64_t collect_alpha = 101;
    std::uint64_t collect_beta = 102;
    std::uint64_t split = 7;
    std::uint64_t train_alpha = 201;
    std::uint64_t train_beta = 202;
    std::uint64_t fl_init = 301;
    std::uint64_t fl_client_alpha = 311;
    std::uint64_t fl_client_beta = 312;
    std::uint64_t discover = 401;
};

struct LocalTrainParams {
    int epochs = 40;
    int batch_size = 16;
    double learning_rate = 0.001;
    double weight_decay = 0.001;
};

struct FlParams {
    int rounds = 15;
    int local_epochs = 2;
    std::string local_unit = "epoch";  // "epoch" or "step"
    int batch_size = 16;
    double learning_rate = 0.001;
    double weight_decay = 0.001;
    double timeout_s = 300.0;
};

struct ExperimentConfig {
    int size = 4;
    double p_open = 0.3;
    int sweeps_per_orientation = 200;
    double test_fraction = 0.2;
    JitterParams jitter;
    NoiseModel noise;
    LocalTrainParams local;
    FlParams fl;
    int sweeps_per_classify = 1;
    bool render = true;
    ExperimentSeeds seeds;
};

// Overlays the fields present in `j` onto the defaults; unknown keys are
// ignored, wrong types throw FormatError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);

// Runs the whole pipeline — two mazes, two datasets, two local models,
// federated training over loopback subprocesses, eight discovery runs —
// writing every artifact plus report.json and timings.json into out_dir,
// and returns the report (insertion-ordered, exactly as written to disk).
// `exe_path` is this binary, re-launched for the fl-server / fl-client
// roles.
nlohmann::ordered_json run_experiment(const ExperimentConfig& config,
                                      const std::string& out_dir,
                                      const std::string& exe_path);

}  // namespace mazefl::cli
