#include "zoneprobe/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace zoneprobe {

using nlohmann::json;

std::string normalize_answer(const std::string& text, TokenMode mode) {
  std::string stripped;
  stripped.reserve(text.size());
  for (char ch : text) {
    const unsigned char b = static_cast<unsigned char>(ch);
    if (b < 0x80 && std::ispunct(b)) continue;
    if (mode == TokenMode::Char && b < 0x80 && std::isspace(b)) continue;
    stripped.push_back(mode == TokenMode::Word ? static_cast<char>(std::tolower(b)) : ch);
  }
  if (mode == TokenMode::Char) return stripped;
  std::istringstream words(stripped);
  std::string word, out;
  while (words >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

int exact_match(const std::string& prediction, const std::vector<std::string>& golds,
                TokenMode mode) {
  const std::string p = normalize_answer(prediction, mode);
  for (const std::string& g : golds)
    if (p == normalize_answer(g, mode)) return 1;
  return 0;
}

namespace {

std::vector<std::string> bag_units(const std::string& normalized, TokenMode mode) {
  std::vector<std::string> units;
  if (mode == TokenMode::Word) {
    std::istringstream words(normalized);
    std::string word;
    while (words >> word) units.push_back(word);
    return units;
  }
  std::size_t i = 0;
  while (i < normalized.size()) {
    const unsigned char b = static_cast<unsigned char>(normalized[i]);
    std::size_t len = 1;
    if ((b & 0xE0) == 0xC0) len = 2;
    else if ((b & 0xF0) == 0xE0) len = 3;
    else if ((b & 0xF8) == 0xF0) len = 4;
    len = std::min(len, normalized.size() - i);
    units.push_back(normalized.substr(i, len));
    i += len;
  }
  return units;
}

double f1_single(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const std::string& u : gold) ++counts[u];
  int overlap = 0;
  for (const std::string& u : pred) {
    const auto it = counts.find(u);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double f1_score(const std::string& prediction, const std::vector<std::string>& golds,
                TokenMode mode) {
  const std::vector<std::string> pred = bag_units(normalize_answer(prediction, mode), mode);
  double best = 0.0;
  bool first = true;
  for (const std::string& g : golds) {
    const double v = f1_single(pred, bag_units(normalize_answer(g, mode), mode));
    if (first || v > best) best = v;
    first = false;
  }
  return golds.empty() ? 0.0 : best;
}

PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: needs at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  PearsonResult out;
  if (sxx == 0.0) {
    out.reason = "zero variance in x";
    return out;
  }
  if (syy == 0.0) {
    out.reason = "zero variance in y";
    return out;
  }
  out.defined = true;
  out.r = sxy / std::sqrt(sxx * syy);
  out.r = std::clamp(out.r, -1.0, 1.0);
  return out;
}

std::string metric_report_to_json(const MetricReport& report, bool include_examples) {
  json j;
  j["em"] = report.em;
  j["f1"] = report.f1;
  j["total"] = report.total;
  j["evaluated"] = report.evaluated;
  j["dropped"] = report.dropped;
  j["seed"] = report.seed;
  j["probe"] = report.probe_json.empty() ? json() : json::parse(report.probe_json);
  if (include_examples) {
    json examples = json::array();
    for (const ExampleScore& e : report.examples)
      examples.push_back({{"id", e.id}, {"prediction", e.prediction}, {"em", e.em}, {"f1", e.f1}});
    j["examples"] = examples;
  }
  return j.dump(1);
}

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

std::string metric_report_to_csv(const MetricReport& report) {
  std::string out = "id,prediction,em,f1\n";
  for (const ExampleScore& e : report.examples)
    out += csv_quote(e.id) + "," + csv_quote(e.prediction) + "," + std::to_string(e.em) + "," +
           format_double(e.f1) + "\n";
  return out;
}

MetricReport evaluate(const Model& model, const std::vector<Example>& examples,
                      const EncodedDataset& dataset, const EvalOptions& options) {
  MetricReport report;
  report.seed = options.seed;
  ForwardOptions fwd;
  if (options.probe != nullptr) {
    validate_probe(*options.probe, model.config());
    for (const MaskSpec& m : options.probe->masks) {
      if (m.phase == MaskPhase::Decode || options.include_train_phase_masks) fwd.masks.push_back(m);
    }
    report.probe_json = probe_spec_to_json(*options.probe);
  }
  double em_sum = 0.0, f1_sum = 0.0;
  for (const EncodedExample& enc : dataset.encoded) {
    const Example& ex = examples.at(static_cast<std::size_t>(enc.example_index));
    const SpanLogits logits = forward(model, enc, fwd);
    const auto [s, e] = decode_span(logits, enc.layout, options.max_answer_length);
    const std::string prediction =
        span_text(ex.passage, enc.passage_tokens, s - enc.layout.p_begin, e - enc.layout.p_begin);
    std::vector<std::string> golds;
    for (const GoldAnswer& g : ex.golds) golds.push_back(g.text);
    ExampleScore score;
    score.id = enc.id;
    score.prediction = prediction;
    score.em = exact_match(prediction, golds, ex.mode);
    score.f1 = f1_score(prediction, golds, ex.mode);
    em_sum += score.em;
    f1_sum += score.f1;
    report.examples.push_back(std::move(score));
  }
  for (const std::string& id : dataset.dropped) {
    report.examples.push_back(ExampleScore{id, "", 0, 0.0});
    report.dropped.push_back(id);
  }
  report.evaluated = static_cast<int>(dataset.encoded.size());
  report.total = report.evaluated + static_cast<int>(dataset.dropped.size());
  if (report.total > 0) {
    report.em = 100.0 * em_sum / static_cast<double>(report.total);
    report.f1 = 100.0 * f1_sum / static_cast<double>(report.total);
  }
  return report;
}

}  // namespace zoneprobe
