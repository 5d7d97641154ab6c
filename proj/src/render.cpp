#include "mazefl/render.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mazefl {

namespace {

constexpr double kPxPerMeter = 200.0;
constexpr double kMargin = 30.0;

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

char label_char(int label) {
    return label < 10 ? static_cast<char>('0' + label)
                      : static_cast<char>('A' + label - 10);
}

struct SvgCanvas {
    explicit SvgCanvas(const Maze& maze)
        : world(maze.width()), w(2.0 * kMargin + world * kPxPerMeter) {}

    double px(double wx) const { return kMargin + wx * kPxPerMeter; }
    double py(double wy) const { return kMargin + (world - wy) * kPxPerMeter; }

    double world;
    double w;  // canvas is square
};

void svg_walls(std::ostream& out, const SvgCanvas& cv, const Maze& maze) {
    // Wall slabs as rectangles spanning both faces of the grid line.
    auto slab = [&](double x0, double y0, double x1, double y1) {
        out << "<rect x=\"" << fmt2(cv.px(x0)) << "\" y=\"" << fmt2(cv.py(y1))
            << "\" width=\"" << fmt2((x1 - x0) * kPxPerMeter) << "\" height=\""
            << fmt2((y1 - y0) * kPxPerMeter) << "\" fill=\"#37415b\"/>\n";
    };
    double cs = maze.cell_size;
    for (int y = 0; y <= maze.size; ++y) {
        for (int x = 0; x < maze.size; ++x) {
            if (maze.h_walls[y][x]) {
                slab(x * cs, y * cs - kWallFaceOffset, (x + 1) * cs,
                     y * cs + kWallFaceOffset);
            }
        }
    }
    for (int y = 0; y < maze.size; ++y) {
        for (int x = 0; x <= maze.size; ++x) {
            if (maze.v_walls[y][x]) {
                slab(x * cs - kWallFaceOffset, y * cs, x * cs + kWallFaceOffset,
                     (y + 1) * cs);
            }
        }
    }
    // Cylinders, deduplicated per wall like the ray-cast gather.
    auto cylinders = [&](Vec2 from, Vec2 to) {
        for (double f : maze.profile.cylinder_positions) {
            Vec2 c = from + f * (to - from);
            out << "<circle cx=\"" << fmt2(cv.px(c.x)) << "\" cy=\""
                << fmt2(cv.py(c.y)) << "\" r=\""
                << fmt2(maze.profile.cylinder_radius * kPxPerMeter)
                << "\" fill=\"#5b6b91\"/>\n";
        }
    };
    for (int y = 0; y <= maze.size; ++y) {
        for (int x = 0; x < maze.size; ++x) {
            if (maze.h_walls[y][x]) {
                cylinders({x * cs, y * cs}, {(x + 1) * cs, y * cs});
            }
        }
    }
    for (int y = 0; y < maze.size; ++y) {
        for (int x = 0; x <= maze.size; ++x) {
            if (maze.v_walls[y][x]) {
                cylinders({x * cs, y * cs}, {x * cs, (y + 1) * cs});
            }
        }
    }
}

}  // namespace

std::string render_svg(const Maze& maze, const DiscoveredMap* discovered) {
    SvgCanvas cv(maze);
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt2(cv.w)
        << "\" height=\"" << fmt2(cv.w) << "\" viewBox=\"0 0 " << fmt2(cv.w)
        << " " << fmt2(cv.w) << "\">\n";
    out << "<defs><marker id=\"arrow\" viewBox=\"0 0 6 6\" refX=\"5\" "
           "refY=\"3\" markerWidth=\"5\" markerHeight=\"5\" "
           "orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" "
           "fill=\"#2a9d6f\"/></marker></defs>\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

    // Faint cell grid.
    double cs = maze.cell_size;
    for (int i = 0; i <= maze.size; ++i) {
        out << "<line x1=\"" << fmt2(cv.px(i * cs)) << "\" y1=\""
            << fmt2(cv.py(0)) << "\" x2=\"" << fmt2(cv.px(i * cs))
            << "\" y2=\"" << fmt2(cv.py(cv.world))
            << "\" stroke=\"#e3e6ee\" stroke-width=\"1\"/>\n";
        out << "<line x1=\"" << fmt2(cv.px(0)) << "\" y1=\""
            << fmt2(cv.py(i * cs)) << "\" x2=\"" << fmt2(cv.px(cv.world))
            << "\" y2=\"" << fmt2(cv.py(i * cs))
            << "\" stroke=\"#e3e6ee\" stroke-width=\"1\"/>\n";
    }

    svg_walls(out, cv, maze);

    // Cell labels; with a discovered map, the discovered value and a
    // marker for mismatches.
    for (int y = 0; y < maze.size; ++y) {
        for (int x = 0; x < maze.size; ++x) {
            Cell cell{x, y};
            Vec2 c = maze.cell_center(cell);
            int truth = label_from_mask(maze.cell_mask(cell));
            std::string text(1, label_char(truth));
            std::string color = "#6b7280";
            if (discovered) {
                auto got = discovered->label_at(cell);
                if (!got) {
                    text = "\xc2\xb7";  // middle dot: unvisited
                    color = "#9ca3af";
                } else if (*got != truth) {
                    text = std::string(1, label_char(*got));
                    color = "#c81e36";
                    double inset = 0.06 * cs;
                    out << "<rect x=\"" << fmt2(cv.px(x * cs + inset))
                        << "\" y=\"" << fmt2(cv.py((y + 1) * cs - inset))
                        << "\" width=\""
                        << fmt2((cs - 2 * inset) * kPxPerMeter)
                        << "\" height=\""
                        << fmt2((cs - 2 * inset) * kPxPerMeter)
                        << "\" fill=\"none\" stroke=\"#c81e36\" "
                           "stroke-width=\"2\"/>\n";
                } else {
                    text = std::string(1, label_char(*got));
                    color = "#1f2937";
                }
            }
            out << "<text x=\"" << fmt2(cv.px(c.x)) << "\" y=\""
                << fmt2(cv.py(c.y) + 8.0)
                << "\" font-family=\"monospace\" font-size=\"24\" "
                   "text-anchor=\"middle\" fill=\""
                << color << "\">" << text << "</text>\n";
        }
    }

    if (discovered && discovered->trajectory.size() > 1) {
        const auto& traj = discovered->trajectory;
        Vec2 start = maze.cell_center(traj.front().cell);
        out << "<circle cx=\"" << fmt2(cv.px(start.x)) << "\" cy=\""
            << fmt2(cv.py(start.y))
            << "\" r=\"5\" fill=\"#2a9d6f\"/>\n";
        for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
            Vec2 a = maze.cell_center(traj[i].cell);
            Vec2 b = maze.cell_center(traj[i + 1].cell);
            out << "<line x1=\"" << fmt2(cv.px(a.x)) << "\" y1=\""
                << fmt2(cv.py(a.y)) << "\" x2=\"" << fmt2(cv.px(b.x))
                << "\" y2=\"" << fmt2(cv.py(b.y))
                << "\" stroke=\"#2a9d6f\" stroke-width=\"2\" "
                   "stroke-opacity=\"0.7\" marker-end=\"url(#arrow)\"/>\n";
        }
    }

    out << "</svg>\n";
    return out.str();
}

std::string render_ascii(const Maze& maze, const DiscoveredMap* discovered) {
    // Junction glyph by which of the four neighboring wall segments are
    // present, bits: 1=up, 2=right, 4=down, 8=left.
    static const char* kJunction[16] = {
        " ",      "╵", "╶", "└", "╷", "│",
        "┌", "├", "╴", "┘", "─", "┴",
        "┐", "┤", "┬", "┼"};

    auto h_at = [&](int y, int x) {
        return x >= 0 && x < maze.size && maze.h_walls[y][x] != 0;
    };
    auto v_at = [&](int y, int x) {
        return y >= 0 && y < maze.size && maze.v_walls[y][x] != 0;
    };

    std::ostringstream out;
    for (int y = maze.size; y >= 0; --y) {
        // Junction-and-horizontal-wall line.
        for (int x = 0; x <= maze.size; ++x) {
            int bits = (v_at(y, x) ? 1 : 0) | (h_at(y, x) ? 2 : 0) |
                       (v_at(y - 1, x) ? 4 : 0) | (h_at(y, x - 1) ? 8 : 0);
            out << kJunction[bits];
            if (x < maze.size) {
                const char* fill = h_at(y, x) ? "─" : " ";
                out << fill << fill << fill;
            }
        }
        out << '\n';
        if (y == 0) {
            break;
        }
        // Cell line for row y-1.
        int cy = y - 1;
        for (int x = 0; x <= maze.size; ++x) {
            out << (v_at(cy, x) ? "│" : " ");
            if (x < maze.size) {
                Cell cell{x, cy};
                int truth = label_from_mask(maze.cell_mask(cell));
                char mark = ' ';
                char c = label_char(truth);
                if (discovered) {
                    auto got = discovered->label_at(cell);
                    if (!got) {
                        c = '.';
                    } else {
                        c = label_char(*got);
                        if (*got != truth) {
                            mark = '!';
                        }
                    }
                }
                out << mark << c << ' ';
            }
        }
        out << '\n';
    }
    return out.str();
}

void save_text(const std::string& content, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << content;
    if (!out.flush()) {
        throw IoError("write failed: " + path);
    }
}

}  // namespace mazefl
