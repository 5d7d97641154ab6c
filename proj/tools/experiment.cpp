#include "experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <utility>
#include <vector>

#include "mazefl/explorer.hpp"
#include "mazefl/fedavg.hpp"
#include "mazefl/geometry.hpp"
#include "mazefl/mlp.hpp"
#include "mazefl/render.hpp"
#include "mazefl/rng.hpp"
#include "subprocess.hpp"

namespace mazefl::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Report numerics carry six significant digits.
double round6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::strtod(buf, nullptr);
}

double round_ms(double seconds) {
    return std::round(seconds * 1000.0) / 1000.0;
}

// Shortest exact decimal form, for handing doubles to child argv.
std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

class Timer {
public:
    double elapsed_s() const {
        return std::chrono::duration<double>(Clock::now() - start_).count();
    }

private:
    using Clock = std::chrono::steady_clock;
    Clock::time_point start_ = Clock::now();
};

void log_line(const std::string& message) {
    std::fprintf(stderr, "experiment: %s\n", message.c_str());
    std::fflush(stderr);
}

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    try {
        c.size = j.value("size", c.size);
        c.p_open = j.value("p_open", c.p_open);
        c.sweeps_per_orientation =
            j.value("sweeps_per_orientation", c.sweeps_per_orientation);
        c.test_fraction = j.value("test_fraction", c.test_fraction);
        if (j.contains("jitter")) {
            const json& s = j.at("jitter");
            c.jitter.pos_sigma = s.value("pos_sigma", c.jitter.pos_sigma);
            c.jitter.heading_sigma =
                s.value("heading_sigma", c.jitter.heading_sigma);
        }
        if (j.contains("noise")) {
            const json& s = j.at("noise");
            c.noise.relative_sigma =
                s.value("relative_sigma", c.noise.relative_sigma);
            c.noise.accuracy_range =
                s.value("accuracy_range", c.noise.accuracy_range);
        }
        if (j.contains("local")) {
            const json& s = j.at("local");
            c.local.epochs = s.value("epochs", c.local.epochs);
            c.local.batch_size = s.value("batch_size", c.local.batch_size);
            c.local.learning_rate =
                s.value("learning_rate", c.local.learning_rate);
            c.local.weight_decay =
                s.value("weight_decay", c.local.weight_decay);
        }
        if (j.contains("fl")) {
            const json& s = j.at("fl");
            c.fl.rounds = s.value("rounds", c.fl.rounds);
            c.fl.local_epochs = s.value("local_epochs", c.fl.local_epochs);
            c.fl.local_unit = s.value("local_unit", c.fl.local_unit);
            c.fl.batch_size = s.value("batch_size", c.fl.batch_size);
            c.fl.learning_rate = s.value("learning_rate", c.fl.learning_rate);
            c.fl.weight_decay = s.value("weight_decay", c.fl.weight_decay);
            c.fl.timeout_s = s.value("timeout_s", c.fl.timeout_s);
        }
        c.sweeps_per_classify =
            j.value("sweeps_per_classify", c.sweeps_per_classify);
        c.render = j.value("render", c.render);
        if (j.contains("seeds")) {
            const json& s = j.at("seeds");
            ExperimentSeeds& d = c.seeds;
            d.maze_alpha = s.value("maze_alpha", d.maze_alpha);
            d.maze_beta = s.value("maze_beta", d.maze_beta);
            d.collect_alpha = s.value("collect_alpha", d.collect_alpha);
            d.collect_beta = s.value("collect_beta", d.collect_beta);
            d.split = s.value("split", d.split);
            d.train_alpha = s.value("train_alpha", d.train_alpha);
            d.train_beta = s.value("train_beta", d.train_beta);
            d.fl_init = s.value("fl_init", d.fl_init);
            d.fl_client_alpha = s.value("fl_client_alpha", d.fl_client_alpha);
            d.fl_client_beta = s.value("fl_client_beta", d.fl_client_beta);
            d.discover = s.value("discover", d.discover);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad experiment config: ") + e.what());
    }
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    return json{
        {"size", c.size},
        {"p_open", c.p_open},
        {"sweeps_per_orientation", c.sweeps_per_orientation},
        {"test_fraction", c.test_fraction},
        {"jitter",
         {{"pos_sigma", c.jitter.pos_sigma},
          {"heading_sigma", c.jitter.heading_sigma}}},
        {"noise",
         {{"relative_sigma", c.noise.relative_sigma},
          {"accuracy_range", c.noise.accuracy_range}}},
        {"local",
         {{"epochs", c.local.epochs},
          {"batch_size", c.local.batch_size},
          {"learning_rate", c.local.learning_rate},
          {"weight_decay", c.local.weight_decay}}},
        {"fl",
         {{"rounds", c.fl.rounds},
          {"local_epochs", c.fl.local_epochs},
          {"local_unit", c.fl.local_unit},
          {"batch_size", c.fl.batch_size},
          {"learning_rate", c.fl.learning_rate},
          {"weight_decay", c.fl.weight_decay},
          {"timeout_s", c.fl.timeout_s}}},
        {"sweeps_per_classify", c.sweeps_per_classify},
        {"render", c.render},
        {"seeds",
         {{"maze_alpha", c.seeds.maze_alpha},
          {"maze_beta", c.seeds.maze_beta},
          {"collect_alpha", c.seeds.collect_alpha},
          {"collect_beta", c.seeds.collect_beta},
          {"split", c.seeds.split},
          {"train_alpha", c.seeds.train_alpha},
          {"train_beta", c.seeds.train_beta},
          {"fl_init", c.seeds.fl_init},
          {"fl_client_alpha", c.seeds.fl_client_alpha},
          {"fl_client_beta", c.seeds.fl_client_beta},
          {"discover", c.seeds.discover}}},
    };
}

namespace {

// Launches fl-server and two fl-clients from this same binary, waits for
// all three, and leaves the aggregated model at global_path.
void run_federated(const ExperimentConfig& cfg, const std::string& exe,
                   const std::string& train_alpha_path,
                   const std::string& train_beta_path,
                   const std::string& global_path) {
    Child server = spawn(
        {exe, "fl-server", "--listen", "127.0.0.1:0",  //
         "--rounds", std::to_string(cfg.fl.rounds), "--clients", "2",
         "--seed", std::to_string(cfg.seeds.fl_init),  //
         "--timeout", fmt_double(cfg.fl.timeout_s), "--out", global_path},
        /*pipe_stdout=*/true);

    std::string line = read_line_fd(server.out_fd, cfg.fl.timeout_s);
    std::uint16_t port = 0;
    try {
        json hello = json::parse(line);
        if (hello.at("event") != "listening") {
            throw SubprocessError("unexpected fl-server event: " + line);
        }
        port = hello.at("port").get<std::uint16_t>();
    } catch (const json::exception&) {
        throw SubprocessError("unparsable fl-server output: " + line);
    }
    log_line(fmt("federated: %d rounds, 2 clients on 127.0.0.1:%u",
                 cfg.fl.rounds, unsigned{port}));

    auto client_args = [&](const std::string& train_path, int id,
                           std::uint64_t seed) {
        return std::vector<std::string>{
            exe, "fl-client", "--server", "127.0.0.1:" + std::to_string(port),
            "--train", train_path,                       //
            "--client-id", std::to_string(id),           //
            "--seed", std::to_string(seed),              //
            "--local-epochs", std::to_string(cfg.fl.local_epochs),
            "--local-unit", cfg.fl.local_unit,           //
            "--lr", fmt_double(cfg.fl.learning_rate),    //
            "--weight-decay", fmt_double(cfg.fl.weight_decay),
            "--batch", std::to_string(cfg.fl.batch_size),
            "--timeout", fmt_double(cfg.fl.timeout_s)};
    };
    Child client_alpha = spawn(
        client_args(train_alpha_path, 1, cfg.seeds.fl_client_alpha), true);
    Child client_beta = spawn(
        client_args(train_beta_path, 2, cfg.seeds.fl_client_beta), true);

    // Stdout pipes are drained to EOF (= child exit) before reaping, so a
    // late write can never hit a closed pipe.
    double budget = cfg.fl.timeout_s * std::max(1, cfg.fl.rounds);
    drain_fd(client_alpha.out_fd, budget);
    int exit_alpha = wait_child(client_alpha);
    drain_fd(client_beta.out_fd, budget);
    int exit_beta = wait_child(client_beta);
    drain_fd(server.out_fd, budget);
    int exit_server = wait_child(server);
    if (exit_alpha != 0 || exit_beta != 0 || exit_server != 0) {
        throw SubprocessError(fmt(
            "federated run failed (server exit %d, client exits %d and %d)",
            exit_server, exit_alpha, exit_beta));
    }
}

}  // namespace

ordered_json run_experiment(const ExperimentConfig& cfg,
                            const std::string& out_dir,
                            const std::string& exe_path) {
    if (cfg.fl.local_unit != "epoch" && cfg.fl.local_unit != "step") {
        throw InvalidArgument("fl.local_unit must be \"epoch\" or \"step\"");
    }
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto path = [&](const std::string& name) {
        return (fs::path(out_dir) / name).string();
    };

    Timer total;
    ordered_json timings;
    save_text(config_to_json(cfg).dump(2) + "\n", path("config.json"));

    Maze maze_alpha = generate_maze(cfg.seeds.maze_alpha, cfg.size,
                                    WallProfile::alpha(), cfg.p_open);
    Maze maze_beta = generate_maze(cfg.seeds.maze_beta, cfg.size,
                                   WallProfile::beta(), cfg.p_open);
    save_maze(maze_alpha, path("maze_alpha.json"));
    save_maze(maze_beta, path("maze_beta.json"));
    if (cfg.render) {
        save_text(render_svg(maze_alpha), path("maze_alpha.svg"));
        save_text(render_ascii(maze_alpha), path("maze_alpha.txt"));
        save_text(render_svg(maze_beta), path("maze_beta.svg"));
        save_text(render_ascii(maze_beta), path("maze_beta.txt"));
    }

    auto make_data = [&](const Maze& maze, std::uint64_t collect_seed,
                         const std::string& tag) {
        Timer t;
        Dataset all = collect(maze, cfg.sweeps_per_orientation, cfg.jitter,
                              cfg.noise, collect_seed);
        save_dataset(all, path("data_" + tag + ".mzfl"));
        auto [train_set, test_set] =
            split(all, cfg.test_fraction, cfg.seeds.split);
        save_dataset(train_set, path("train_" + tag + ".mzfl"));
        save_dataset(test_set, path("test_" + tag + ".mzfl"));
        timings["collect_" + tag + "_s"] = round_ms(t.elapsed_s());
        log_line(fmt("collected %s: %zu sweeps in %.1f s (train %zu, test %zu)",
                     tag.c_str(), all.size(), t.elapsed_s(), train_set.size(),
                     test_set.size()));
        return std::pair{std::move(train_set), std::move(test_set)};
    };
    auto [train_alpha, test_alpha] =
        make_data(maze_alpha, cfg.seeds.collect_alpha, "alpha");
    auto [train_beta, test_beta] =
        make_data(maze_beta, cfg.seeds.collect_beta, "beta");

    auto train_local = [&](const Dataset& data, std::uint64_t seed,
                           const std::string& tag) {
        Timer t;
        TrainConfig tc;
        tc.learning_rate = cfg.local.learning_rate;
        tc.weight_decay = cfg.local.weight_decay;
        tc.batch_size = cfg.local.batch_size;
        tc.epochs = cfg.local.epochs;
        tc.shuffle_seed = derive_seed(seed, 2);
        MlpParams model = train(init_params(derive_seed(seed, 1)), data, tc);
        save_params(model, path("model_" + tag + ".mznn"));
        timings["train_" + tag + "_s"] = round_ms(t.elapsed_s());
        log_line(fmt("trained local %s: %d epochs in %.1f s", tag.c_str(),
                     cfg.local.epochs, t.elapsed_s()));
        return model;
    };
    MlpParams model_alpha = train_local(train_alpha, cfg.seeds.train_alpha, "alpha");
    MlpParams model_beta = train_local(train_beta, cfg.seeds.train_beta, "beta");

    double local_aa = evaluate(model_alpha, test_alpha).accuracy;
    double local_ab = evaluate(model_alpha, test_beta).accuracy;
    double local_ba = evaluate(model_beta, test_alpha).accuracy;
    double local_bb = evaluate(model_beta, test_beta).accuracy;
    log_line(fmt("local accuracy: alpha %.4f own / %.4f cross, beta %.4f own / %.4f cross",
                 local_aa, local_ab, local_bb, local_ba));

    Timer fl_timer;
    run_federated(cfg, exe_path, path("train_alpha.mzfl"),
                  path("train_beta.mzfl"), path("global.mznn"));
    MlpParams global = load_params(path("global.mznn"));
    timings["fl_s"] = round_ms(fl_timer.elapsed_s());
    log_line(fmt("federated training finished in %.1f s", fl_timer.elapsed_s()));

    double fl_on_alpha = evaluate(global, test_alpha).accuracy;
    double fl_on_beta = evaluate(global, test_beta).accuracy;
    log_line(fmt("global accuracy: %.4f on alpha, %.4f on beta", fl_on_alpha,
                 fl_on_beta));

    // Eight discovery runs: each local model explores both mazes, then both
    // agents deploy the shared global model (separate exploration seeds).
    Timer disc_timer;
    DiscoverConfig dc;
    dc.sweeps_per_classify = cfg.sweeps_per_classify;
    dc.noise = cfg.noise;
    int disc_index = 0;
    auto run_discovery = [&](const MlpParams& model, const Maze& maze,
                             const std::string& name) {
        DiscoveredMap found = discover(
            maze, model, derive_seed(cfg.seeds.discover, disc_index++), dc);
        save_discovered(found, path("discovered_" + name + ".json"));
        if (cfg.render) {
            save_text(render_svg(maze, &found),
                      path("discovered_" + name + ".svg"));
            save_text(render_ascii(maze, &found),
                      path("discovered_" + name + ".txt"));
        }
        MapAccuracy acc = compare_maps(maze, found);
        log_line(fmt("discovery %s: %d/%d cells correct%s", name.c_str(),
                     acc.correct, acc.visited, found.stuck ? " (stuck)" : ""));
        return acc.accuracy;
    };
    double disc_local_aa = run_discovery(model_alpha, maze_alpha, "local_alpha_on_alpha");
    double disc_local_ab = run_discovery(model_alpha, maze_beta, "local_alpha_on_beta");
    double disc_local_ba = run_discovery(model_beta, maze_alpha, "local_beta_on_alpha");
    double disc_local_bb = run_discovery(model_beta, maze_beta, "local_beta_on_beta");
    double disc_fl_aa = run_discovery(global, maze_alpha, "fl_alpha_on_alpha");
    double disc_fl_ab = run_discovery(global, maze_beta, "fl_alpha_on_beta");
    double disc_fl_ba = run_discovery(global, maze_alpha, "fl_beta_on_alpha");
    double disc_fl_bb = run_discovery(global, maze_beta, "fl_beta_on_beta");
    timings["discovery_s"] = round_ms(disc_timer.elapsed_s());

    ordered_json report = {
        {"local",
         {{"alpha_on_alpha", round6(local_aa)},
          {"alpha_on_beta", round6(local_ab)},
          {"beta_on_alpha", round6(local_ba)},
          {"beta_on_beta", round6(local_bb)}}},
        {"fl",
         {{"global_on_alpha", round6(fl_on_alpha)},
          {"global_on_beta", round6(fl_on_beta)}}},
        {"discovery",
         {{"local",
           {{"alpha_on_alpha", round6(disc_local_aa)},
            {"alpha_on_beta", round6(disc_local_ab)},
            {"beta_on_alpha", round6(disc_local_ba)},
            {"beta_on_beta", round6(disc_local_bb)}}},
          {"fl",
           {{"alpha_on_alpha", round6(disc_fl_aa)},
            {"alpha_on_beta", round6(disc_fl_ab)},
            {"beta_on_alpha", round6(disc_fl_ba)},
            {"beta_on_beta", round6(disc_fl_bb)}}}}},
    };
    save_text(report.dump(2) + "\n", path("report.json"));

    timings["total_s"] = round_ms(total.elapsed_s());
    save_text(timings.dump(2) + "\n", path("timings.json"));
    return report;
}

}  // namespace mazefl::cli
