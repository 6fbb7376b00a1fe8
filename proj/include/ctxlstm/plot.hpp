#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ctxlstm/geometry.hpp"
#include "ctxlstm/pipeline.hpp"

namespace ctxlstm {

struct PlotTrack {
  std::string label;
  std::string color;
  std::vector<Point> points;
  bool dashed = false;
};

struct PlotPanel {
  std::string title;
  std::vector<Point> static_points;
  std::vector<PlotTrack> tracks;
};

/// Standalone SVG document with one polyline per track.
std::string render_svg(const PlotPanel& panel, int width = 640, int height = 640);

/// One panel per (scene, fold, window) found in `rows`: ground truth plus each variant.
std::vector<PlotPanel> panels_from_results(const std::vector<ResultRow>& rows,
                                           const std::vector<Point>& static_points);

/// Writes one SVG per panel into `dir` and returns the paths.
std::vector<std::filesystem::path> write_panels(const std::filesystem::path& dir,
                                                const std::vector<PlotPanel>& panels);

}  // namespace ctxlstm
