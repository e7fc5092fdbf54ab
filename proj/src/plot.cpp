#include "streamcast/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>

#include "streamcast/common.hpp"

namespace streamcast {
namespace {

struct Bounds {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  void cover(const Vec2& p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }

  void cover(const std::vector<Vec2>& points) {
    for (const Vec2& p : points) cover(p);
  }
};

// World coordinates to SVG user units: uniform scale, y axis flipped so
// north stays up in the picture.
struct Frame {
  Bounds b;
  double scale = 1.0;

  double x(double wx) const { return (wx - b.min_x) * scale; }
  double y(double wy) const { return (b.max_y - wy) * scale; }
};

void append_points(std::string& out, const Frame& f, const std::vector<Vec2>& points) {
  char buf[64];
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.3f,%.3f", i == 0 ? "" : " ", f.x(points[i].x),
                  f.y(points[i].y));
    out += buf;
  }
}

void append_polyline(std::string& out, const Frame& f, const char* cls,
                     const std::vector<Vec2>& points) {
  out += "  <polyline class=\"";
  out += cls;
  out += "\" points=\"";
  append_points(out, f, points);
  out += "\"/>\n";
}

}  // namespace

std::string render_anchor_svg(const PlotInput& input) {
  if (input.episode == nullptr) throw DataError("plot input has no episode");
  const Episode& ep = *input.episode;
  if (input.single.episode_id != ep.id || input.ensembled.episode_id != ep.id) {
    throw DataError("plot traces describe a different episode");
  }
  if (input.single.t0 != input.ensembled.t0) {
    throw DataError("plot traces describe different anchors");
  }

  std::vector<Vec2> track;
  track.reserve(ep.agents[0].states.size());
  for (const AgentState& s : ep.agents[0].states) track.push_back(s.p);

  Bounds b;
  for (const MapPolyline& line : ep.map) b.cover(line.points);
  b.cover(track);
  for (const Candidate& c : input.ensembled.pool) b.cover(c.trajectory);
  for (const auto& mode : input.single.output) b.cover(mode);
  for (const auto& mode : input.ensembled.output) b.cover(mode);
  if (!(b.min_x <= b.max_x)) throw DataError("plot input covers no points");

  // Fixed 1000-unit width, 5% margin, square units.
  const double span_x = std::max(b.max_x - b.min_x, 1e-9);
  const double span_y = std::max(b.max_y - b.min_y, 1e-9);
  const double margin = 0.05 * std::max(span_x, span_y);
  b.min_x -= margin;
  b.max_x += margin;
  b.min_y -= margin;
  b.max_y += margin;
  Frame f;
  f.b = b;
  f.scale = 1000.0 / (b.max_x - b.min_x);
  const double height = (b.max_y - b.min_y) * f.scale;

  std::string svg;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 %.3f\">\n", height);
  svg += buf;
  svg += "  <title>";
  for (char ch : input.title) {
    switch (ch) {
      case '<': svg += "&lt;"; break;
      case '>': svg += "&gt;"; break;
      case '&': svg += "&amp;"; break;
      default: svg += ch;
    }
  }
  svg += "</title>\n";
  svg +=
      "  <style>\n"
      "    polyline { fill: none; }\n"
      "    .map { stroke: #c8c8c8; stroke-width: 1.5; }\n"
      "    .gt { stroke: #1a1a1a; stroke-width: 4; }\n"
      "    .cloud { stroke: #9aa7b8; stroke-width: 1; opacity: 0.45; }\n"
      "    .single { stroke: #2f6fd0; stroke-width: 2; stroke-dasharray: 8 5; }\n"
      "    .ensemble { stroke: #e07b28; stroke-width: 3; }\n"
      "    .anchor { fill: #d03030; }\n"
      "  </style>\n";

  for (const MapPolyline& line : ep.map) append_polyline(svg, f, "map", line.points);
  append_polyline(svg, f, "gt", track);
  for (const Candidate& c : input.ensembled.pool) append_polyline(svg, f, "cloud", c.trajectory);
  for (const auto& mode : input.single.output) append_polyline(svg, f, "single", mode);
  for (const auto& mode : input.ensembled.output) append_polyline(svg, f, "ensemble", mode);

  const Vec2 anchor =
      ep.agents[0].states[static_cast<std::size_t>(input.ensembled.t0 - ep.frame_start)].p;
  std::snprintf(buf, sizeof(buf), "  <circle class=\"anchor\" cx=\"%.3f\" cy=\"%.3f\" r=\"6\"/>\n",
                f.x(anchor.x), f.y(anchor.y));
  svg += buf;
  svg += "</svg>\n";
  return svg;
}

void write_anchor_svg(const std::string& path, const PlotInput& input) {
  const std::string svg = render_anchor_svg(input);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write plot to " + path);
  out << svg;
  if (!out) throw DataError("failed while writing plot to " + path);
}

}  // namespace streamcast
