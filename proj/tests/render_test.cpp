// Render tests: byte-stable output, SVG element counts derived from the
// maze structure, ASCII floor-plan layout, and overlay markers.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest/doctest.h"
#include "mazefl/errors.hpp"
#include "mazefl/explorer.hpp"
#include "mazefl/geometry.hpp"
#include "mazefl/render.hpp"
#include "test_support.hpp"

using namespace mazefl;

namespace {

std::size_t count_occurrences(const std::string& hay, const std::string& pin) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(pin); pos != std::string::npos;
         pos = hay.find(pin, pos + pin.size())) {
        ++n;
    }
    return n;
}

int count_walls(const Maze& maze) {
    int walls = 0;
    for (const auto& row : maze.h_walls) {
        for (auto w : row) walls += w ? 1 : 0;
    }
    for (const auto& row : maze.v_walls) {
        for (auto w : row) walls += w ? 1 : 0;
    }
    return walls;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    return lines;
}

// Collapse each multi-byte UTF-8 glyph to '#' so columns line up with
// display positions.
std::string display_columns(const std::string& line) {
    std::string out;
    for (std::size_t i = 0; i < line.size();) {
        unsigned char c = static_cast<unsigned char>(line[i]);
        if (c < 0x80) {
            out += line[i];
            ++i;
        } else {
            out += '#';
            i += (c >= 0xF0) ? 4 : (c >= 0xE0) ? 3 : 2;
        }
    }
    return out;
}

char label_hex(int label) {
    return label < 10 ? static_cast<char>('0' + label)
                      : static_cast<char>('A' + label - 10);
}

}  // namespace

TEST_CASE("renders are byte-stable for equal inputs") {
    Maze maze = generate_maze(8, 4, WallProfile::alpha());
    CHECK(render_svg(maze) == render_svg(maze));
    CHECK(render_ascii(maze) == render_ascii(maze));

    DiscoveredMap map = discover(maze, ground_truth_classifier(maze), 3);
    CHECK(render_svg(maze, &map) == render_svg(maze, &map));
    CHECK(render_ascii(maze, &map) == render_ascii(maze, &map));
}

TEST_CASE("svg element counts follow the maze structure") {
    for (std::uint64_t seed : {4u, 9u}) {
        for (const WallProfile& profile :
             {WallProfile::alpha(), WallProfile::beta()}) {
            Maze maze = generate_maze(seed, 4, profile);
            std::string svg = render_svg(maze);
            CHECK(svg.rfind("<svg ", 0) == 0);
            CHECK(svg.find("</svg>") != std::string::npos);

            int walls = count_walls(maze);
            // One background rect plus one slab per wall.
            CHECK(count_occurrences(svg, "<rect ") ==
                  static_cast<std::size_t>(1 + walls));
            // Every wall carries the profile's cylinders.
            CHECK(count_occurrences(svg, "<circle ") ==
                  static_cast<std::size_t>(walls) *
                      profile.cylinder_positions.size());
            // One label per cell.
            CHECK(count_occurrences(svg, "<text ") == 16);
            // Grid lines only (no trajectory overlay).
            CHECK(count_occurrences(svg, "<line ") ==
                  static_cast<std::size_t>(2 * (maze.size + 1)));
        }
    }
}

TEST_CASE("svg cell labels spell the true block labels") {
    Maze maze = generate_maze(17, 4, WallProfile::beta());
    std::string svg = render_svg(maze);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            int label = label_from_mask(maze.cell_mask({x, y}));
            std::string needle = std::string(">") + label_hex(label) +
                                 "</text>";
            CHECK(svg.find(needle) != std::string::npos);
        }
    }
}

TEST_CASE("svg overlay adds trajectory, start dot, and mismatch boxes") {
    Maze maze = generate_maze(12, 4, WallProfile::alpha());
    DiscoveredMap map = discover(maze, ground_truth_classifier(maze), 5);
    REQUIRE(map.trajectory.size() > 1);

    std::string plain = render_svg(maze);
    std::string overlaid = render_svg(maze, &map);
    CHECK(overlaid != plain);
    int walls = count_walls(maze);
    // Start dot joins the wall cylinders.
    CHECK(count_occurrences(overlaid, "<circle ") ==
          static_cast<std::size_t>(walls) *
                  maze.profile.cylinder_positions.size() +
              1);
    // One arrowed line per trajectory leg on top of the grid.
    CHECK(count_occurrences(overlaid, "marker-end=\"url(#arrow)\"") ==
          map.trajectory.size() - 1);
    // Perfect map: no mismatch boxes, so rects stay background + walls.
    CHECK(count_occurrences(overlaid, "<rect ") ==
          static_cast<std::size_t>(1 + walls));

    // Now poison one visited cell: a red outline box appears.
    DiscoveredMap wrong = map;
    for (std::size_t i = 0; i < wrong.cells.size(); ++i) {
        if (wrong.cells[i]) {
            wrong.cells[i] = (*wrong.cells[i] + 1) % kNumBlockLabels;
            break;
        }
    }
    std::string marked = render_svg(maze, &wrong);
    CHECK(count_occurrences(marked, "<rect ") ==
          static_cast<std::size_t>(1 + walls) + 1);
    CHECK(marked.find("#c81e36") != std::string::npos);

    // An unvisited cell renders as a middle dot.
    DiscoveredMap partial = map;
    partial.cells[3] = std::nullopt;
    std::string with_hole = render_svg(maze, &partial);
    CHECK(with_hole.find("\xc2\xb7") != std::string::npos);
}

TEST_CASE("ascii floor plan has the right shape and labels") {
    Maze maze = generate_maze(21, 4, WallProfile::alpha());
    std::string text = render_ascii(maze);
    auto lines = split_lines(text);
    REQUIRE(lines.size() == 2u * 4 + 1);
    CHECK(lines.front().find("┌") == 0);
    CHECK(lines.back().rfind("┘") != std::string::npos);

    // Cell (x, y) sits on text line 2*(size-1-y)+1. Each cell spans 4
    // display columns (separator, mark, label, space); the label lands
    // at display column 4x+2.
    for (int y = 0; y < 4; ++y) {
        std::string cols = display_columns(
            lines[static_cast<std::size_t>(2 * (4 - 1 - y) + 1)]);
        REQUIRE(cols.size() == 4u * 4 + 1);
        for (int x = 0; x < 4; ++x) {
            int label = label_from_mask(maze.cell_mask({x, y}));
            CHECK(cols[static_cast<std::size_t>(4 * x) + 2] ==
                  label_hex(label));
            CHECK(cols[static_cast<std::size_t>(4 * x) + 1] == ' ');
        }
        // Outer border on both ends.
        CHECK(cols.front() == '#');
        CHECK(cols.back() == '#');
    }
}

TEST_CASE("ascii overlay marks mistakes and unvisited cells") {
    Maze maze = generate_maze(25, 4, WallProfile::beta());
    DiscoveredMap map = discover(maze, ground_truth_classifier(maze), 2);
    std::string perfect = render_ascii(maze, &map);
    CHECK(perfect.find('!') == std::string::npos);
    CHECK(perfect.find('.') == std::string::npos);

    DiscoveredMap partial = map;
    partial.cells[0] = std::nullopt;  // cell (0,0): bottom-left
    partial.cells[5] = (*partial.cells[5] + 1) % kNumBlockLabels;
    std::string text = render_ascii(maze, &partial);
    CHECK(count_occurrences(text, ".") == 1);
    CHECK(count_occurrences(text, "!") == 1);

    // The dot lands in the bottom row.
    auto lines = split_lines(text);
    CHECK(lines[lines.size() - 2].find('.') != std::string::npos);
}

TEST_CASE("ascii junctions draw box characters, not gaps") {
    // The outer boundary must be fully drawn on any maze.
    Maze maze = generate_maze(33, 3, WallProfile::alpha());
    std::string text = render_ascii(maze);
    auto lines = split_lines(text);
    CHECK(lines.front().find(' ') == std::string::npos);
    CHECK(lines.back().find(' ') == std::string::npos);
}

TEST_CASE("save_text writes exact bytes and reports failures") {
    mazefl::test::TempDir tmp;
    const std::string path = tmp.path("plan.txt");
    const std::string content = "line1\nline2\n";
    save_text(content, path);
    std::ifstream in(path, std::ios::binary);
    std::string back((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    CHECK(back == content);
    CHECK_THROWS_AS(save_text("x", tmp.path("no/such/dir/f.txt")), IoError);
}
