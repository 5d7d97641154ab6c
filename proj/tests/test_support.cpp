#include "test_support.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mazefl/rng.hpp"

namespace mazefl::test {

namespace fs = std::filesystem;

namespace {

std::string g_argv0;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::string shell_quote(const std::string& s) {
    std::string quoted = "'";
    for (char c : s) {
        if (c == '\'') {
            quoted += "'\\''";
        } else {
            quoted += c;
        }
    }
    quoted += "'";
    return quoted;
}

}  // namespace

void set_argv0(const char* argv0) { g_argv0 = argv0; }

std::string cli_path() {
    if (const char* env = std::getenv("MAZEFL_CLI")) {
        return env;
    }
    fs::path sibling = fs::path(g_argv0).parent_path() / "mazefl";
    if (!fs::exists(sibling)) {
        throw std::runtime_error("mazefl binary not found at " +
                                 sibling.string() +
                                 "; set MAZEFL_CLI to override");
    }
    return sibling.string();
}

TempDir::TempDir() {
    std::string tmpl =
        (fs::temp_directory_path() / "mazefl_test_XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) {
        throw std::runtime_error("mkdtemp failed for " + tmpl);
    }
    dir_ = tmpl;
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
}

std::string TempDir::path(const std::string& name) const {
    return name.empty() ? dir_ : (fs::path(dir_) / name).string();
}

CliResult run_cli(const std::vector<std::string>& args) {
    TempDir capture;
    std::string cmd = shell_quote(cli_path());
    for (const std::string& a : args) {
        cmd += " " + shell_quote(a);
    }
    cmd += " > " + shell_quote(capture.path("out"));
    cmd += " 2> " + shell_quote(capture.path("err"));

    int rc = std::system(cmd.c_str());
    CliResult result;
    if (rc == -1) {
        result.exit_code = -1;
    } else if (WIFEXITED(rc)) {
        result.exit_code = WEXITSTATUS(rc);
    } else if (WIFSIGNALED(rc)) {
        result.exit_code = 128 + WTERMSIG(rc);
    }
    result.out = read_file(capture.path("out"));
    result.err = read_file(capture.path("err"));
    return result;
}

// ---------------------------------------------------------------------

namespace {

constexpr double kGrazeTol = 1e-4;

double cross2(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double dot2(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

}  // namespace

RayOracle::RayOracle(std::span<const Obstacle> obstacles, double spacing)
    : obstacles_(obstacles.begin(), obstacles.end()) {
    for (const Obstacle& obstacle : obstacles_) {
        std::vector<Vec2> line;
        if (const auto* seg = std::get_if<Segment>(&obstacle)) {
            Vec2 d{seg->p2.x - seg->p1.x, seg->p2.y - seg->p1.y};
            auto n = static_cast<std::size_t>(
                std::max(1.0, std::ceil(norm(d) / spacing)));
            line.reserve(n + 1);
            for (std::size_t k = 0; k <= n; ++k) {
                double u = static_cast<double>(k) / static_cast<double>(n);
                line.push_back({seg->p1.x + u * d.x, seg->p1.y + u * d.y});
            }
        } else {
            const auto& circle = std::get<Circle>(obstacle);
            auto n = static_cast<std::size_t>(std::max(
                16.0, std::ceil(2.0 * std::numbers::pi * circle.radius / spacing)));
            line.reserve(n + 1);
            for (std::size_t k = 0; k < n; ++k) {
                double a = 2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(n);
                line.push_back({circle.center.x + circle.radius * std::cos(a),
                                circle.center.y + circle.radius * std::sin(a)});
            }
            line.push_back(line.front());  // close the loop exactly
        }
        polylines_.push_back(std::move(line));
    }
}

std::optional<double> RayOracle::cast(Vec2 origin, double angle,
                                      double max_range) const {
    Vec2 d{std::cos(angle), std::sin(angle)};

    // Reject knife-edge configurations where hit/miss is decided at a
    // scale below the comparison tolerance.
    for (const Obstacle& obstacle : obstacles_) {
        if (const auto* circle = std::get_if<Circle>(&obstacle)) {
            Vec2 u{circle->center.x - origin.x, circle->center.y - origin.y};
            double along = dot2(u, d);
            double perp = std::abs(cross2(d, u));
            if (along > -kGrazeTol &&
                std::abs(perp - circle->radius) < kGrazeTol) {
                return std::nullopt;  // near-tangent
            }
            if (std::abs(norm(u) - circle->radius) < kGrazeTol) {
                return std::nullopt;  // origin on the ring
            }
        } else {
            const auto& seg = std::get<Segment>(obstacle);
            Vec2 e{seg.p2.x - seg.p1.x, seg.p2.y - seg.p1.y};
            if (std::abs(cross2(d, e)) / norm(e) < 1e-6) {
                Vec2 u{seg.p1.x - origin.x, seg.p1.y - origin.y};
                if (std::abs(cross2(d, u)) < kGrazeTol) {
                    return std::nullopt;  // near-parallel and nearly colinear
                }
            }
            for (Vec2 endpoint : {seg.p1, seg.p2}) {
                Vec2 u{endpoint.x - origin.x, endpoint.y - origin.y};
                if (dot2(u, d) > -kGrazeTol &&
                    std::abs(cross2(d, u)) < kGrazeTol) {
                    return std::nullopt;  // endpoint graze
                }
            }
        }
    }

    // Chord-by-chord Cramer solve of origin + t*d = p + s*(q - p).
    long double best = std::numeric_limits<long double>::infinity();
    for (const auto& line : polylines_) {
        for (std::size_t i = 0; i + 1 < line.size(); ++i) {
            long double ex = line[i + 1].x - line[i].x;
            long double ey = line[i + 1].y - line[i].y;
            long double rx = line[i].x - origin.x;
            long double ry = line[i].y - origin.y;
            long double det = static_cast<long double>(d.x) * (-ey) +
                              ex * static_cast<long double>(d.y);
            if (std::abs(static_cast<double>(det)) < 1e-18) {
                continue;
            }
            long double t = (rx * (-ey) + ex * ry) / det;
            long double s =
                (static_cast<long double>(d.x) * ry -
                 static_cast<long double>(d.y) * rx) /
                det;
            if (t >= 0 && s >= 0 && s <= 1 && t < best) {
                best = t;
            }
        }
    }

    if (std::isinf(static_cast<double>(best))) {
        return max_range;
    }
    if (std::abs(static_cast<double>(best) - max_range) < 1e-3) {
        return std::nullopt;  // resolves at the range cap
    }
    return std::min(static_cast<double>(best), max_range);
}

// ---------------------------------------------------------------------

FdReport fd_check(const MlpParams& params, const Dataset& data,
                  std::span<const std::size_t> batch, double weight_decay,
                  double h, int components, std::uint64_t pick_seed) {
    MlpParams grad =
        MlpParams::zeros(params.in_dim, params.hidden_dim, params.out_dim);
    loss_and_grad(params, data, batch, weight_decay, grad);

    std::vector<double> MlpParams::* blocks[] = {
        &MlpParams::w1, &MlpParams::b1, &MlpParams::w2, &MlpParams::b2};

    std::size_t total = 0;
    for (auto block : blocks) {
        total += (params.*block).size();
    }

    // Hidden pre-activations over the batch, for the kink test below.
    const std::size_t in_dim = static_cast<std::size_t>(params.in_dim);
    const std::size_t hidden = static_cast<std::size_t>(params.hidden_dim);
    std::vector<std::vector<double>> z1(batch.size(),
                                        std::vector<double>(hidden));
    for (std::size_t s = 0; s < batch.size(); ++s) {
        auto x = data.features(batch[s]);
        for (std::size_t j = 0; j < hidden; ++j) {
            double z = params.b1[j];
            for (std::size_t i = 0; i < in_dim; ++i) {
                z += params.w1[j * in_dim + i] * static_cast<double>(x[i]);
            }
            z1[s][j] = z;
        }
    }

    // A +-h perturbation of a first-layer parameter moves unit j's
    // pre-activation by exactly h (bias) or h * x[i] (weight). If that
    // interval can cross relu's kink for some sample, the central
    // difference spans two linear pieces and is not a derivative
    // estimate, so the component is not comparable — skipped on a full
    // sweep, redrawn in sampled mode, like the ray oracle's knife-edge
    // rays. Second-layer parameters never move the activations.
    auto straddles_kink = [&](std::size_t flat) {
        if (flat < params.w1.size()) {
            std::size_t j = flat / in_dim;
            std::size_t i = flat % in_dim;
            for (std::size_t s = 0; s < batch.size(); ++s) {
                double reach =
                    2.0 * h *
                    std::abs(static_cast<double>(data.features(batch[s])[i]));
                if (std::abs(z1[s][j]) <= reach + 1e-12) return true;
            }
            return false;
        }
        std::size_t offset = flat - params.w1.size();
        if (offset < params.b1.size()) {
            for (std::size_t s = 0; s < batch.size(); ++s) {
                if (std::abs(z1[s][offset]) <= 2.0 * h + 1e-12) return true;
            }
            return false;
        }
        return false;
    };

    FdReport report;
    std::vector<std::size_t> picks;
    if (components <= 0 || static_cast<std::size_t>(components) >= total) {
        picks.reserve(total);
        for (std::size_t i = 0; i < total; ++i) {
            if (straddles_kink(i)) {
                ++report.skipped;
            } else {
                picks.push_back(i);
            }
        }
    } else {
        Rng rng(pick_seed);
        picks.reserve(static_cast<std::size_t>(components));
        long attempts_left = 1000L * components;
        while (picks.size() < static_cast<std::size_t>(components) &&
               attempts_left-- > 0) {
            std::size_t flat = rng.uniform_int(total);
            if (straddles_kink(flat)) {
                ++report.skipped;
            } else {
                picks.push_back(flat);
            }
        }
    }

    MlpParams probe = params;
    MlpParams scratch =
        MlpParams::zeros(params.in_dim, params.hidden_dim, params.out_dim);
    for (std::size_t flat : picks) {
        // Map the flat index onto its block.
        std::size_t offset = flat;
        std::vector<double> MlpParams::* block = blocks[0];
        for (auto candidate : blocks) {
            if (offset < (params.*candidate).size()) {
                block = candidate;
                break;
            }
            offset -= (params.*candidate).size();
        }

        double saved = (probe.*block)[offset];
        (probe.*block)[offset] = saved + h;
        double up = loss_and_grad(probe, data, batch, weight_decay, scratch);
        (probe.*block)[offset] = saved - h;
        double down = loss_and_grad(probe, data, batch, weight_decay, scratch);
        (probe.*block)[offset] = saved;

        double fd = (up - down) / (2.0 * h);
        double analytic = (grad.*block)[offset];
        double denom =
            std::max({std::abs(fd), std::abs(analytic), 1e-3});
        double rel = std::abs(fd - analytic) / denom;
        report.max_rel_err = std::max(report.max_rel_err, rel);
        ++report.checked;
    }
    return report;
}

MlpParams weighted_mean_oracle(const std::vector<ClientUpdate>& updates) {
    const MlpParams& first = updates.front().params;
    MlpParams mean =
        MlpParams::zeros(first.in_dim, first.hidden_dim, first.out_dim);

    long double total = 0;
    for (const ClientUpdate& u : updates) {
        total += u.num_samples;
    }

    std::vector<double> MlpParams::* blocks[] = {
        &MlpParams::w1, &MlpParams::b1, &MlpParams::w2, &MlpParams::b2};
    for (auto block : blocks) {
        std::vector<double>& out = mean.*block;
        for (std::size_t i = 0; i < out.size(); ++i) {
            long double sum = 0;
            // Reverse order on purpose: a different accumulation order
            // than the implementation under test.
            for (auto it = updates.rbegin(); it != updates.rend(); ++it) {
                sum += static_cast<long double>(it->num_samples) *
                       static_cast<long double>((it->params.*block)[i]);
            }
            out[i] = static_cast<double>(sum / total);
        }
    }
    return mean;
}

Dataset random_dataset(std::size_t feature_dim,
                       const std::vector<int>& label_counts,
                       std::uint64_t seed) {
    Dataset data(feature_dim);
    Rng rng(seed);
    std::vector<float> features(feature_dim);
    for (std::size_t label = 0; label < label_counts.size(); ++label) {
        for (int k = 0; k < label_counts[label]; ++k) {
            for (float& f : features) {
                f = static_cast<float>(rng.uniform());
            }
            data.append(features, static_cast<std::uint8_t>(label));
        }
    }
    return data;
}

Maze rotate_maze_ccw(const Maze& maze) {
    const int S = maze.size;
    Maze rotated = maze;
    rotated.h_walls.assign(S + 1, std::vector<std::uint8_t>(S, 0));
    rotated.v_walls.assign(S, std::vector<std::uint8_t>(S + 1, 0));
    // A vertical wall x=k spanning y in [j, j+1] lands on y'=k spanning
    // x' in [S-1-j, S-j]; a horizontal wall y=j spanning x in [k, k+1]
    // lands on x'=S-j spanning y' in [k, k+1].
    for (int y = 0; y <= S; ++y) {
        for (int x = 0; x < S; ++x) {
            rotated.h_walls[y][x] = maze.v_walls[S - 1 - x][y];
        }
    }
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x <= S; ++x) {
            rotated.v_walls[y][x] = maze.h_walls[S - x][y];
        }
    }
    rotated.validate();
    return rotated;
}

}  // namespace mazefl::test
