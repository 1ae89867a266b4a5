#pragma once

#include <string>
#include <vector>

#include "zoneprobe/model.hpp"
#include "zoneprobe/probe.hpp"

namespace zoneprobe {

// Colors are "#rrggbb". With clamp <= 0 the scale is symmetric around zero at
// the largest |cell|; zero-valued cells always render in exactly `neutral`.
struct HeatmapStyle {
  std::string negative = "#2166ac";
  std::string neutral = "#f7f7f7";
  std::string positive = "#b2182b";
  double clamp = 0.0;
  int cell_size = 54;
};

// Deterministic bytes: same matrix and style, same SVG.
std::string render_heatmap_svg(const DeltaMatrix& matrix, const HeatmapStyle& style = {});

struct LineDiagramOptions {
  int layer = 0;
  double threshold = 0.05;  // drop edges whose attention weight falls below
  bool filter_special = true;
  bool operator==(const LineDiagramOptions&) const = default;
};

// Two token columns (queries left, keys right) joined by per-head colored
// lines; line opacity follows the post-softmax attention weight.
std::string render_attention_lines_svg(const Model& model, const Vocabulary& vocab,
                                       const Example& example,
                                       const LineDiagramOptions& options = {});

struct HeadBoxOptions {
  int layer = 0;
  int focus = 0;         // token index within the used window
  bool incoming = false;  // false: weights the focus row emits; true: receives
  bool operator==(const HeadBoxOptions&) const = default;
};

// One box per head, every token shaded by its attention weight relative to
// the focus token.
std::string render_head_boxes_svg(const Model& model, const Vocabulary& vocab,
                                  const Example& example, const HeadBoxOptions& options = {});

}  // namespace zoneprobe
