#pragma once

#include <string>

#include "mazefl/explorer.hpp"
#include "mazefl/geometry.hpp"

namespace mazefl {

// SVG picture of the maze: wall slabs, cylinders, and cell labels. With
// a discovered map, cells show the discovered label instead (unvisited
// cells get a dot), misclassified cells are outlined, and the trajectory
// is drawn center to center with arrowheads. Output is byte-stable for
// equal inputs.
std::string render_svg(const Maze& maze,
                       const DiscoveredMap* discovered = nullptr);

// Box-drawing-character floor plan with one label character per cell
// (hex digit; '.' unvisited, '!' prefix on misclassified cells). Row
// order puts cell (0,0) bottom-left, matching world coordinates.
std::string render_ascii(const Maze& maze,
                         const DiscoveredMap* discovered = nullptr);

void save_text(const std::string& content, const std::string& path);

}  // namespace mazefl
