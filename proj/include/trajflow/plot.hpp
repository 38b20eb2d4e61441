#pragma once

#include <string>

#include "trajflow/scene.hpp"
#include "trajflow/selection.hpp"

namespace trajflow {

struct PlotOptions {
  int width = 900;
  int height = 640;
  double margin = 8.0;  // scene units around the trajectories
};

/// Static SVG of one scene: map lines, neighbor boxes, ground truth with an
/// end flag, the K predictions with numbered endpoints (most confident in
/// blue) and a bar chart of confidences normalized to sum to one.
std::string render_svg(const Scene& scene, const PredictionSet& preds, const PlotOptions& opt = {});

}  // namespace trajflow
