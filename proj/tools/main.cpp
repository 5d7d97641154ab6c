// mazefl — single binary driving the whole pipeline: maze generation,
// LiDAR data collection, local and federated training, evaluation,
// autonomous discovery, rendering, and the end-to-end experiment.
//
// Contract shared by every subcommand: exit 0 on success with a JSON
// result on stdout; nonzero with a one-line {"error", "message"} JSON on
// stderr otherwise. All randomness hangs off explicit --seed flags.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "experiment.hpp"
#include "mazefl/explorer.hpp"
#include "mazefl/fedavg.hpp"
#include "mazefl/geometry.hpp"
#include "mazefl/mlp.hpp"
#include "mazefl/render.hpp"
#include "mazefl/rng.hpp"

namespace {

using nlohmann::json;
using namespace mazefl;

void print_json(const json& j) {
    std::printf("%s\n", j.dump().c_str());
    std::fflush(stdout);
}

void print_error(const std::string& code, const std::string& message) {
    json err = {{"error", code}, {"message", message}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& s) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == s.size()) {
        throw InvalidArgument("expected host:port, got \"" + s + "\"");
    }
    std::string host = s.substr(0, colon);
    const std::string digits = s.substr(colon + 1);
    char* end = nullptr;
    unsigned long port = std::strtoul(digits.c_str(), &end, 10);
    if (*end != '\0' || port > 65535) {
        throw InvalidArgument("bad port in \"" + s + "\"");
    }
    return {host, static_cast<std::uint16_t>(port)};
}

std::string self_exe_path(const char* argv0) {
    std::error_code ec;
    auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
    return ec ? std::string(argv0) : p.string();
}

// ---------------------------------------------------------------------
// Subcommand state. CLI11 callbacks fire inside parse(), so each struct
// just holds options and a run() that does the work.

struct GenMazeCmd {
    std::uint64_t seed = 0;
    int size = 4;
    std::string profile;
    double p_open = 0.3;
    std::string out;

    void run() const {
        Maze maze = generate_maze(seed, size,
                                  WallProfile::from_kind(
                                      wall_kind_from_string(profile)),
                                  p_open);
        save_maze(maze, out);
        print_json({{"size", maze.size},
                    {"profile", to_string(maze.profile.kind)},
                    {"seed", maze.seed},
                    {"out", out}});
    }
};

struct CollectCmd {
    std::string maze_path;
    int sweeps = 200;
    JitterParams jitter;
    NoiseModel noise;
    std::uint64_t seed = 0;
    std::string out;

    void run() const {
        Maze maze = load_maze(maze_path);
        Dataset data = collect(maze, sweeps, jitter, noise, seed);
        save_dataset(data, out);
        print_json({{"samples", data.size()},
                    {"feature_dim", data.feature_dim()},
                    {"out", out}});
    }
};

struct SplitCmd {
    std::string in;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    std::string out_train;
    std::string out_test;

    void run() const {
        Dataset data = load_dataset(in);
        auto [train_set, test_set] = split(data, test_fraction, seed);
        save_dataset(train_set, out_train);
        save_dataset(test_set, out_test);
        print_json({{"train", train_set.size()}, {"test", test_set.size()}});
    }
};

struct TrainLocalCmd {
    std::string train_path;
    std::string test_path;
    TrainConfig config;
    std::uint64_t seed = 0;
    std::string out;

    void run() const {
        Dataset train_set = load_dataset(train_path);
        Dataset test_set = load_dataset(test_path);
        TrainConfig tc = config;
        tc.shuffle_seed = derive_seed(seed, 2);
        MlpParams model =
            train(init_params(derive_seed(seed, 1)), train_set, tc);
        save_params(model, out);
        Evaluation eval = evaluate(model, test_set);
        print_json({{"accuracy", eval.accuracy},
                    {"train_samples", train_set.size()},
                    {"test_samples", test_set.size()},
                    {"out", out}});
    }
};

struct FlServerCmd {
    std::string listen = "127.0.0.1:0";
    FedConfig config;
    std::uint64_t seed = 0;
    std::string out;
    std::string eval_alpha_path;
    std::string eval_beta_path;

    void run() const {
        FedConfig fc = config;
        auto [host, port] = split_host_port(listen);
        fc.host = host;
        fc.port = port;

        std::optional<Dataset> eval_alpha;
        std::optional<Dataset> eval_beta;
        if (!eval_alpha_path.empty()) eval_alpha = load_dataset(eval_alpha_path);
        if (!eval_beta_path.empty()) eval_beta = load_dataset(eval_beta_path);

        ServerHooks hooks;
        hooks.on_listening = [](const std::string& host, std::uint16_t port) {
            print_json({{"event", "listening"}, {"host", host}, {"port", port}});
        };
        hooks.on_round_complete = [&](int round, const MlpParams& global) {
            json line = {{"event", "round"}, {"round", round}};
            if (eval_alpha) {
                line["accuracy_alpha"] = evaluate(global, *eval_alpha).accuracy;
            }
            if (eval_beta) {
                line["accuracy_beta"] = evaluate(global, *eval_beta).accuracy;
            }
            std::fprintf(stderr, "%s\n", line.dump().c_str());
        };

        MlpParams global = run_server(fc, init_params(seed), hooks);
        save_params(global, out);
        print_json({{"event", "done"}, {"rounds", fc.rounds}, {"out", out}});
    }
};

struct FlClientCmd {
    std::string server;
    std::string train_path;
    FedConfig config;
    std::string local_unit = "epoch";
    std::uint32_t client_id = 0;
    std::uint64_t seed = 0;

    void run() const {
        FedConfig fc = config;
        fc.train_seed = seed;
        if (local_unit == "epoch") {
            fc.local_unit = LocalUnit::epoch;
        } else if (local_unit == "step") {
            fc.local_unit = LocalUnit::step;
        } else {
            throw InvalidArgument("--local-unit must be epoch or step");
        }
        auto [host, port] = split_host_port(server);
        Dataset data = load_dataset(train_path);
        run_client(fc, data, host, port, client_id);
        print_json({{"event", "done"},
                    {"client_id", client_id},
                    {"samples", data.size()}});
    }
};

struct EvalCmd {
    std::string model_path;
    std::string data_path;

    void run() const {
        MlpParams model = load_params(model_path);
        Dataset data = load_dataset(data_path);
        Evaluation eval = evaluate(model, data);
        print_json({{"accuracy", eval.accuracy},
                    {"samples", data.size()},
                    {"confusion", eval.confusion}});
    }
};

struct DiscoverCmd {
    std::string maze_path;
    std::string model_path;
    std::uint64_t seed = 0;
    DiscoverConfig config;
    std::string out;

    void run() const {
        Maze maze = load_maze(maze_path);
        MlpParams model = load_params(model_path);
        DiscoveredMap found = discover(maze, model, seed, config);
        save_discovered(found, out);
        MapAccuracy acc = compare_maps(maze, found);
        print_json({{"visited", acc.visited},
                    {"correct", acc.correct},
                    {"accuracy", acc.accuracy},
                    {"steps", found.steps},
                    {"stuck", found.stuck},
                    {"out", out}});
    }
};

struct RenderCmd {
    std::string maze_path;
    std::string discovered_path;
    std::string format = "svg";
    std::string out;

    void run() const {
        Maze maze = load_maze(maze_path);
        std::optional<DiscoveredMap> discovered;
        if (!discovered_path.empty()) {
            discovered = load_discovered(discovered_path);
            if (discovered->size != maze.size) {
                throw ShapeMismatch("discovered map is " +
                                    std::to_string(discovered->size) +
                                    "x, maze is " + std::to_string(maze.size));
            }
        }
        const DiscoveredMap* ptr = discovered ? &*discovered : nullptr;
        std::string content;
        if (format == "svg") {
            content = render_svg(maze, ptr);
        } else if (format == "ascii") {
            content = render_ascii(maze, ptr);
        } else {
            throw InvalidArgument("--format must be svg or ascii");
        }
        save_text(content, out);
        print_json({{"out", out}, {"bytes", content.size()}});
    }
};

struct ExperimentCmd {
    std::string config_path;
    std::string out_dir = "experiment_out";
    std::string exe_path;

    void run() const {
        cli::ExperimentConfig config;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                throw IoError("cannot open config " + config_path);
            }
            json j;
            try {
                in >> j;
            } catch (const json::exception& e) {
                throw FormatError(std::string("bad config JSON: ") + e.what());
            }
            config = cli::config_from_json(j);
        }
        nlohmann::ordered_json report =
            cli::run_experiment(config, out_dir, exe_path);
        std::printf("%s\n", report.dump(2).c_str());
        std::fflush(stdout);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated maze discovery pipeline"};
    app.require_subcommand(1);

    GenMazeCmd gen_maze;
    {
        CLI::App* c = app.add_subcommand("gen-maze", "Generate a maze");
        c->add_option("--seed", gen_maze.seed, "Generator seed")->required();
        c->add_option("--size", gen_maze.size, "Grid side length")->capture_default_str();
        c->add_option("--profile", gen_maze.profile, "Wall profile, alpha or beta")
            ->required();
        c->add_option("--p-open", gen_maze.p_open,
                      "Interior wall removal probability")->capture_default_str();
        c->add_option("--out", gen_maze.out, "Output maze JSON")->required();
        c->callback([&] { gen_maze.run(); });
    }

    CollectCmd collect_cmd;
    {
        CLI::App* c = app.add_subcommand("collect", "Collect a labelled sweep dataset");
        c->add_option("--maze", collect_cmd.maze_path, "Maze JSON")->required();
        c->add_option("--sweeps", collect_cmd.sweeps,
                      "Sweeps per cell orientation")->capture_default_str();
        c->add_option("--jitter-pos", collect_cmd.jitter.pos_sigma,
                      "Pose position sigma, meters")->capture_default_str();
        c->add_option("--jitter-heading", collect_cmd.jitter.heading_sigma,
                      "Pose heading sigma, radians")->capture_default_str();
        c->add_option("--noise-sigma", collect_cmd.noise.relative_sigma,
                      "Relative range noise sigma")->capture_default_str();
        c->add_option("--noise-accuracy-range", collect_cmd.noise.accuracy_range,
                      "Range where noise triples, meters")->capture_default_str();
        c->add_option("--seed", collect_cmd.seed, "Collection seed")->required();
        c->add_option("--out", collect_cmd.out, "Output dataset")->required();
        c->callback([&] { collect_cmd.run(); });
    }

    SplitCmd split_cmd;
    {
        CLI::App* c = app.add_subcommand("split", "Stratified train/test split");
        c->add_option("--in", split_cmd.in, "Input dataset")->required();
        c->add_option("--test-fraction", split_cmd.test_fraction,
                      "Share of each class sent to test")->capture_default_str();
        c->add_option("--seed", split_cmd.seed, "Shuffle seed")->required();
        c->add_option("--out-train", split_cmd.out_train, "Train output")
            ->required();
        c->add_option("--out-test", split_cmd.out_test, "Test output")
            ->required();
        c->callback([&] { split_cmd.run(); });
    }

    TrainLocalCmd train_cmd;
    {
        CLI::App* c = app.add_subcommand("train-local", "Train a classifier on one dataset");
        c->add_option("--train", train_cmd.train_path, "Training dataset")
            ->required();
        c->add_option("--test", train_cmd.test_path, "Test dataset")->required();
        c->add_option("--epochs", train_cmd.config.epochs, "Training epochs")->capture_default_str();
        c->add_option("--batch", train_cmd.config.batch_size, "Minibatch size")->capture_default_str();
        c->add_option("--lr", train_cmd.config.learning_rate, "Learning rate")->capture_default_str();
        c->add_option("--weight-decay", train_cmd.config.weight_decay,
                      "Coupled L2 weight decay")->capture_default_str();
        c->add_option("--seed", train_cmd.seed,
                      "Seed for init and shuffling")->required();
        c->add_option("--out", train_cmd.out, "Output checkpoint")->required();
        c->callback([&] { train_cmd.run(); });
    }

    FlServerCmd server_cmd;
    {
        CLI::App* c = app.add_subcommand("fl-server", "FedAvg parameter server");
        c->add_option("--listen", server_cmd.listen, "host:port, port 0 = any")->capture_default_str();
        c->add_option("--rounds", server_cmd.config.rounds, "Federated rounds")->capture_default_str();
        c->add_option("--clients", server_cmd.config.expected_clients,
                      "Clients to wait for")->capture_default_str();
        c->add_option("--timeout", server_cmd.config.timeout_s,
                      "Per-operation timeout, seconds")->capture_default_str();
        c->add_option("--seed", server_cmd.seed, "Global model init seed")
            ->required();
        c->add_option("--out", server_cmd.out, "Final global checkpoint")
            ->required();
        c->add_option("--eval-alpha", server_cmd.eval_alpha_path,
                      "Dataset for per-round logging");
        c->add_option("--eval-beta", server_cmd.eval_beta_path,
                      "Dataset for per-round logging");
        c->callback([&] { server_cmd.run(); });
    }

    FlClientCmd client_cmd;
    {
        CLI::App* c = app.add_subcommand("fl-client", "FedAvg training client");
        c->add_option("--server", client_cmd.server, "Server host:port")
            ->required();
        c->add_option("--train", client_cmd.train_path, "Local training data")
            ->required();
        c->add_option("--local-epochs", client_cmd.config.local_epochs,
                      "Local work per round")->capture_default_str();
        c->add_option("--local-unit", client_cmd.local_unit,
                      "Unit of local work, epoch or step")->capture_default_str();
        c->add_option("--lr", client_cmd.config.learning_rate, "Learning rate")->capture_default_str();
        c->add_option("--weight-decay", client_cmd.config.weight_decay,
                      "Coupled L2 weight decay")->capture_default_str();
        c->add_option("--batch", client_cmd.config.batch_size, "Minibatch size")->capture_default_str();
        c->add_option("--timeout", client_cmd.config.timeout_s,
                      "Per-operation timeout, seconds")->capture_default_str();
        c->add_option("--client-id", client_cmd.client_id, "Unique client id")
            ->required();
        c->add_option("--seed", client_cmd.seed, "Per-round shuffle seed base")
            ->required();
        c->callback([&] { client_cmd.run(); });
    }

    EvalCmd eval_cmd;
    {
        CLI::App* c = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
        c->add_option("--model", eval_cmd.model_path, "Checkpoint")->required();
        c->add_option("--data", eval_cmd.data_path, "Dataset")->required();
        c->callback([&] { eval_cmd.run(); });
    }

    DiscoverCmd discover_cmd;
    {
        CLI::App* c = app.add_subcommand("discover", "Autonomous maze discovery");
        c->add_option("--maze", discover_cmd.maze_path, "Maze JSON")->required();
        c->add_option("--model", discover_cmd.model_path, "Classifier checkpoint")
            ->required();
        c->add_option("--seed", discover_cmd.seed, "Sweep noise seed")
            ->required();
        c->add_option("--sweeps-per-classify",
                      discover_cmd.config.sweeps_per_classify,
                      "Scans averaged per classification")->capture_default_str();
        c->add_option("--step-budget", discover_cmd.config.step_budget,
                      "Move budget, <=0 = 10*size^2")->capture_default_str();
        c->add_option("--noise-sigma", discover_cmd.config.noise.relative_sigma,
                      "Relative range noise sigma")->capture_default_str();
        c->add_option("--noise-accuracy-range",
                      discover_cmd.config.noise.accuracy_range,
                      "Range where noise triples, meters")->capture_default_str();
        c->add_option("--out", discover_cmd.out, "Output discovered map JSON")
            ->required();
        c->callback([&] { discover_cmd.run(); });
    }

    RenderCmd render_cmd;
    {
        CLI::App* c = app.add_subcommand("render", "Render a maze to SVG or ASCII");
        c->add_option("--maze", render_cmd.maze_path, "Maze JSON")->required();
        c->add_option("--discovered", render_cmd.discovered_path,
                      "Discovered map JSON to overlay");
        c->add_option("--format", render_cmd.format, "svg or ascii")->capture_default_str();
        c->add_option("--out", render_cmd.out, "Output file")->required();
        c->callback([&] { render_cmd.run(); });
    }

    ExperimentCmd experiment_cmd;
    experiment_cmd.exe_path = self_exe_path(argv[0]);
    {
        CLI::App* c = app.add_subcommand("experiment", "Run the full pipeline");
        c->add_option("--config", experiment_cmd.config_path,
                      "JSON config; omitted keys keep defaults");
        c->add_option("--out-dir", experiment_cmd.out_dir,
                      "Artifact directory")->capture_default_str();
        c->callback([&] { experiment_cmd.run(); });
    }

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("UsageError", e.what());
        return 2;
    } catch (const Error& e) {
        print_error(e.code(), e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("InternalError", e.what());
        return 1;
    }
}
