#pragma once

#include <string>

#include "streamcast/scenario.hpp"
#include "streamcast/streaming.hpp"

namespace streamcast {

// Ingredients of one anchor's picture: the scene map, the target's full
// ground-truth track, the no-harness baseline modes, the aggregated modes,
// and the pooled candidate cloud feeding the aggregator. `single` and
// `ensembled` must describe the same episode and anchor; the cloud is read
// from `ensembled.pool`.
struct PlotInput {
  const Episode* episode = nullptr;
  AnchorTrace single;
  AnchorTrace ensembled;
  std::string title;
};

// A static, self-contained SVG. Every layer carries a class so the picture
// can be inspected as well as viewed: "map", "gt", "cloud", "single",
// "ensemble", plus an "anchor" marker at the target's pose at t0.
std::string render_anchor_svg(const PlotInput& input);
void write_anchor_svg(const std::string& path, const PlotInput& input);

}  // namespace streamcast
