#pragma once

#include <vector>

#include <json.hpp>

namespace polarbg::geom {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Closed ring; the closing edge from back() to front() is implicit.
using Polygon = std::vector<Point2>;

/// Even-odd crossing test.
bool point_in_polygon(Point2 p, const Polygon& poly);

/// At least three vertices and no two non-adjacent edges touch.
bool is_simple(const Polygon& poly);

/// Throws InvalidPolygon unless is_simple(poly).
void validate_polygon(const Polygon& poly);

/// Parses `[[x, y], ...]`; a repeated closing vertex is dropped.
Polygon polygon_from_json(const nlohmann::json& j);
nlohmann::json polygon_to_json(const Polygon& poly);

}  // namespace polarbg::geom
