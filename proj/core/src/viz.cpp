#include "zoneprobe/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace zoneprobe {

namespace {

// Fixed-precision formatting keeps the emitted bytes reproducible.
std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  // Normalize "-0.00" to "0.00" so equal values share one spelling.
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.find('-') == 0) s.erase(0, 1);
  return s;
}

std::string escape_xml(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

struct Rgb {
  int r = 0, g = 0, b = 0;
};

Rgb parse_color(const std::string& hex) {
  if (hex.size() != 7 || hex[0] != '#')
    throw std::invalid_argument("color: expected #rrggbb, got \"" + hex + "\"");
  const auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("color: bad hex digit in \"" + hex + "\"");
  };
  const auto byte = [&](int i) { return nibble(hex[static_cast<std::size_t>(i)]) * 16 +
                                        nibble(hex[static_cast<std::size_t>(i + 1)]); };
  return {byte(1), byte(3), byte(5)};
}

std::string color_string(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  const auto ch = [&](int x, int y) {
    return static_cast<int>(std::lround(static_cast<double>(x) + (static_cast<double>(y) - static_cast<double>(x)) * t));
  };
  return {ch(a.r, b.r), ch(a.g, b.g), ch(a.b, b.b)};
}

// Two-sided scale: negative -> neutral -> positive, t = value / limit in [-1, 1].
Rgb scale_color(double value, double limit, const Rgb& neg, const Rgb& mid, const Rgb& pos) {
  if (limit <= 0.0) return mid;
  double t = value / limit;
  t = std::clamp(t, -1.0, 1.0);
  if (t < 0.0) return lerp(mid, neg, -t);
  if (t > 0.0) return lerp(mid, pos, t);
  return mid;
}

// Perceived luminance, for picking a readable text color on a cell.
int luminance(const Rgb& c) {
  return static_cast<int>(std::lround(0.299 * c.r + 0.587 * c.g + 0.114 * c.b));
}

constexpr const char* kHeadPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                        "#66a61e", "#e6ab02", "#a6761d", "#666666"};
constexpr int kHeadPaletteSize = 8;

struct DiagramInput {
  EncodedExample encoded;
  AttentionRecord record;
  std::vector<std::string> labels;  // one per used position
};

DiagramInput prepare_diagram(const Model& model, const Vocabulary& vocab, const Example& example) {
  const EncodedDataset dataset = encode_dataset({example}, vocab, model.config().max_len);
  if (dataset.encoded.empty())
    throw std::invalid_argument("diagram: example \"" + example.id + "\" cannot be encoded");
  DiagramInput input;
  input.encoded = dataset.encoded.front();
  ForwardOptions options;
  options.record = &input.record;
  forward(model, input.encoded, options);

  const InputLayout& layout = input.encoded.layout;
  const std::vector<TokenSpan> q_tokens = tokenize(example.question, example.mode);
  input.labels.assign(static_cast<std::size_t>(layout.used), "");
  input.labels[static_cast<std::size_t>(layout.cls)] = "[CLS]";
  input.labels[static_cast<std::size_t>(layout.mid_sep)] = "[SEP]";
  input.labels[static_cast<std::size_t>(layout.end_sep)] = "[SEP]";
  for (int i = 0; i < layout.question_len(); ++i)
    input.labels[static_cast<std::size_t>(layout.q_begin + i)] = q_tokens[static_cast<std::size_t>(i)].text;
  for (int i = 0; i < layout.passage_len(); ++i)
    input.labels[static_cast<std::size_t>(layout.p_begin + i)] =
        input.encoded.passage_tokens[static_cast<std::size_t>(i)].text;
  return input;
}

void check_layer(int layer, const ModelConfig& config) {
  if (layer < 0 || layer >= config.n_layers)
    throw std::invalid_argument("diagram: layer " + std::to_string(layer) + " outside [0, " +
                                std::to_string(config.n_layers) + ")");
}

}  // namespace

std::string render_heatmap_svg(const DeltaMatrix& matrix, const HeatmapStyle& style) {
  if (matrix.rows() == 0 || matrix.cols() == 0)
    throw std::invalid_argument("heatmap: matrix has no cells");
  const Rgb neg = parse_color(style.negative);
  const Rgb mid = parse_color(style.neutral);
  const Rgb pos = parse_color(style.positive);
  if (style.cell_size < 8) throw std::invalid_argument("heatmap: cell_size too small");

  double limit = style.clamp;
  if (limit <= 0.0) {
    for (double v : matrix.cells) limit = std::max(limit, std::fabs(v));
  }

  const int cell = style.cell_size;
  const int left = 96;
  const int top = 40;
  const int legend_h = 58;
  const int width = left + matrix.cols() * cell + 24;
  const int height = top + matrix.rows() * cell + legend_h + 16;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" fill=\"#ffffff\"/>\n";
  svg += "<g font-family=\"monospace\" font-size=\"12\">\n";

  for (int c = 0; c < matrix.cols(); ++c) {
    const int x = left + c * cell + cell / 2;
    svg += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(top - 10) +
           "\" text-anchor=\"middle\" fill=\"#111111\">" +
           escape_xml(matrix.col_labels[static_cast<std::size_t>(c)]) + "</text>\n";
  }
  for (int r = 0; r < matrix.rows(); ++r) {
    const int y = top + r * cell + cell / 2 + 4;
    svg += "<text x=\"" + std::to_string(left - 8) + "\" y=\"" + std::to_string(y) +
           "\" text-anchor=\"end\" fill=\"#111111\">" +
           escape_xml(matrix.row_labels[static_cast<std::size_t>(r)]) + "</text>\n";
  }

  for (int r = 0; r < matrix.rows(); ++r) {
    for (int c = 0; c < matrix.cols(); ++c) {
      const double v = matrix.at(r, c);
      const Rgb fill = scale_color(v, limit, neg, mid, pos);
      const int x = left + c * cell;
      const int y = top + r * cell;
      svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" +
             color_string(fill) + "\" stroke=\"#d0d0d0\"/>\n";
      const std::string text_fill = luminance(fill) < 140 ? "#f5f5f5" : "#111111";
      svg += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
             std::to_string(y + cell / 2 + 4) + "\" text-anchor=\"middle\" fill=\"" + text_fill +
             "\">" + fmt(v, 1) + "</text>\n";
    }
  }

  // Legend: a discrete gradient strip from -limit to +limit.
  const int legend_y = top + matrix.rows() * cell + 22;
  const int legend_w = std::max(cell * matrix.cols(), 120);
  const int steps = 48;
  for (int s = 0; s < steps; ++s) {
    const double t = (static_cast<double>(s) + 0.5) / static_cast<double>(steps) * 2.0 - 1.0;
    const Rgb fill = scale_color(t * (limit > 0.0 ? limit : 1.0), limit > 0.0 ? limit : 1.0, neg, mid, pos);
    const int x = left + s * legend_w / steps;
    const int w = left + (s + 1) * legend_w / steps - x;
    svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(legend_y) + "\" width=\"" +
           std::to_string(w) + "\" height=\"12\" fill=\"" + color_string(fill) + "\"/>\n";
  }
  svg += "<text x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(legend_y + 28) +
         "\" text-anchor=\"start\" fill=\"#111111\">" + fmt(-limit, 1) + "</text>\n";
  svg += "<text x=\"" + std::to_string(left + legend_w / 2) + "\" y=\"" +
         std::to_string(legend_y + 28) + "\" text-anchor=\"middle\" fill=\"#111111\">0</text>\n";
  svg += "<text x=\"" + std::to_string(left + legend_w) + "\" y=\"" + std::to_string(legend_y + 28) +
         "\" text-anchor=\"end\" fill=\"#111111\">" + fmt(limit, 1) + "</text>\n";
  svg += "</g>\n</svg>\n";
  return svg;
}

std::string render_attention_lines_svg(const Model& model, const Vocabulary& vocab,
                                       const Example& example,
                                       const LineDiagramOptions& options) {
  check_layer(options.layer, model.config());
  if (options.threshold < 0.0 || options.threshold > 1.0)
    throw std::invalid_argument("diagram: threshold must sit in [0, 1]");
  const DiagramInput input = prepare_diagram(model, vocab, example);
  const InputLayout& layout = input.encoded.layout;
  const int n_heads = model.config().n_heads;

  std::vector<int> shown;  // used positions that survive the special filter
  for (int i = 0; i < layout.used; ++i)
    if (!options.filter_special || !layout.is_special(i)) shown.push_back(i);
  std::vector<int> slot(static_cast<std::size_t>(layout.used), -1);
  for (std::size_t s = 0; s < shown.size(); ++s) slot[static_cast<std::size_t>(shown[s])] = static_cast<int>(s);

  const int row_h = 26;
  const int top = 56;
  const int left_x = 170;
  const int right_x = 430;
  const int width = right_x + 180;
  const int height = top + static_cast<int>(shown.size()) * row_h + 40 + ((n_heads + 3) / 4) * 20;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" fill=\"#ffffff\"/>\n";
  svg += "<g font-family=\"monospace\" font-size=\"13\">\n";
  svg += "<text x=\"" + std::to_string(left_x) + "\" y=\"28\" text-anchor=\"end\" fill=\"#111111\">from</text>\n";
  svg += "<text x=\"" + std::to_string(right_x) + "\" y=\"28\" text-anchor=\"start\" fill=\"#111111\">to (layer " +
         std::to_string(options.layer) + ")</text>\n";

  const auto row_y = [&](int s) { return top + s * row_h; };
  for (std::size_t s = 0; s < shown.size(); ++s) {
    const std::string label = escape_xml(input.labels[static_cast<std::size_t>(shown[s])]);
    const int y = row_y(static_cast<int>(s)) + 4;
    svg += "<text x=\"" + std::to_string(left_x) + "\" y=\"" + std::to_string(y) +
           "\" text-anchor=\"end\" fill=\"#111111\">" + label + "</text>\n";
    svg += "<text x=\"" + std::to_string(right_x) + "\" y=\"" + std::to_string(y) +
           "\" text-anchor=\"start\" fill=\"#111111\">" + label + "</text>\n";
  }

  for (int h = 0; h < n_heads; ++h) {
    const Tensor& post = input.record.post_at(options.layer, h);
    const std::string color = kHeadPalette[h % kHeadPaletteSize];
    for (int i = 0; i < layout.used; ++i) {
      if (slot[static_cast<std::size_t>(i)] < 0) continue;
      for (int j = 0; j < layout.used; ++j) {
        if (slot[static_cast<std::size_t>(j)] < 0) continue;
        const double w = post.at(i, j);
        if (w < options.threshold) continue;
        const int y1 = row_y(slot[static_cast<std::size_t>(i)]);
        const int y2 = row_y(slot[static_cast<std::size_t>(j)]);
        svg += "<line x1=\"" + std::to_string(left_x + 10) + "\" y1=\"" + std::to_string(y1) +
               "\" x2=\"" + std::to_string(right_x - 10) + "\" y2=\"" + std::to_string(y2) +
               "\" stroke=\"" + color + "\" stroke-width=\"1.5\" stroke-opacity=\"" + fmt(w, 4) +
               "\"/>\n";
      }
    }
  }

  const int legend_y = top + static_cast<int>(shown.size()) * row_h + 24;
  for (int h = 0; h < n_heads; ++h) {
    const int x = 40 + (h % 4) * 140;
    const int y = legend_y + (h / 4) * 20;
    svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y - 10) +
           "\" width=\"12\" height=\"12\" fill=\"" + std::string(kHeadPalette[h % kHeadPaletteSize]) +
           "\"/>\n";
    svg += "<text x=\"" + std::to_string(x + 18) + "\" y=\"" + std::to_string(y) +
           "\" text-anchor=\"start\" fill=\"#111111\">head " + std::to_string(h) + "</text>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

std::string render_head_boxes_svg(const Model& model, const Vocabulary& vocab,
                                  const Example& example, const HeadBoxOptions& options) {
  check_layer(options.layer, model.config());
  const DiagramInput input = prepare_diagram(model, vocab, example);
  const InputLayout& layout = input.encoded.layout;
  if (options.focus < 0 || options.focus >= layout.used)
    throw std::invalid_argument("diagram: focus token " + std::to_string(options.focus) +
                                " outside the used window [0, " + std::to_string(layout.used) + ")");
  const int n_heads = model.config().n_heads;

  const int row_h = 20;
  const int box_w = 190;
  const int box_gap = 18;
  const int top = 64;
  const int per_row = std::max(1, std::min(n_heads, 4));
  const int box_h = 28 + layout.used * row_h;
  const int width = 24 + per_row * (box_w + box_gap);
  const int height = top + ((n_heads + per_row - 1) / per_row) * (box_h + box_gap) + 12;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" fill=\"#ffffff\"/>\n";
  svg += "<g font-family=\"monospace\" font-size=\"12\">\n";
  const std::string direction = options.incoming ? "attention into" : "attention from";
  svg += "<text x=\"24\" y=\"30\" text-anchor=\"start\" fill=\"#111111\">" + direction + " \"" +
         escape_xml(input.labels[static_cast<std::size_t>(options.focus)]) + "\" (layer " +
         std::to_string(options.layer) + ")</text>\n";

  for (int h = 0; h < n_heads; ++h) {
    const Tensor& post = input.record.post_at(options.layer, h);
    const int bx = 24 + (h % per_row) * (box_w + box_gap);
    const int by = top + (h / per_row) * (box_h + box_gap);
    const Rgb tint = parse_color(kHeadPalette[h % kHeadPaletteSize]);
    const Rgb white{255, 255, 255};

    double max_w = 0.0;
    for (int t = 0; t < layout.used; ++t)
      max_w = std::max(max_w, options.incoming ? post.at(t, options.focus) : post.at(options.focus, t));

    svg += "<text x=\"" + std::to_string(bx) + "\" y=\"" + std::to_string(by - 6) +
           "\" text-anchor=\"start\" fill=\"#111111\">head " + std::to_string(h) + "</text>\n";
    svg += "<rect x=\"" + std::to_string(bx) + "\" y=\"" + std::to_string(by) + "\" width=\"" +
           std::to_string(box_w) + "\" height=\"" + std::to_string(box_h) +
           "\" fill=\"none\" stroke=\"#888888\"/>\n";
    for (int t = 0; t < layout.used; ++t) {
      const double w = options.incoming ? post.at(t, options.focus) : post.at(options.focus, t);
      const double norm = max_w > 0.0 ? w / max_w : 0.0;
      const Rgb fill = lerp(white, tint, norm);
      const int y = by + 14 + t * row_h;
      svg += "<rect x=\"" + std::to_string(bx + 6) + "\" y=\"" + std::to_string(y - 12) +
             "\" width=\"" + std::to_string(box_w - 12) + "\" height=\"" + std::to_string(row_h - 2) +
             "\" fill=\"" + color_string(fill) + "\"/>\n";
      const std::string text_fill = luminance(fill) < 140 ? "#f5f5f5" : "#111111";
      svg += "<text x=\"" + std::to_string(bx + 10) + "\" y=\"" + std::to_string(y + 2) +
             "\" text-anchor=\"start\" fill=\"" + text_fill + "\">" +
             escape_xml(input.labels[static_cast<std::size_t>(t)]) + " " + fmt(w, 3) + "</text>\n";
    }
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace zoneprobe
