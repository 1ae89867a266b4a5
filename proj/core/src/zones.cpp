#include "zoneprobe/zones.hpp"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"

namespace zoneprobe {

using nlohmann::json;

InputLayout compute_layout(int question_tokens, int passage_tokens, int max_length) {
  if (question_tokens < 1) throw std::invalid_argument("compute_layout: question needs at least one token");
  if (passage_tokens < 1) throw std::invalid_argument("compute_layout: passage needs at least one token");
  if (max_length < 1) throw std::invalid_argument("compute_layout: max_length must be positive");
  const int room = max_length - 3 - question_tokens;
  if (room < 1)
    throw std::invalid_argument("compute_layout: question of " + std::to_string(question_tokens) +
                                " tokens leaves no passage room at max_length " + std::to_string(max_length));
  const int p = std::min(passage_tokens, room);
  InputLayout layout;
  layout.total = max_length;
  layout.used = 3 + question_tokens + p;
  layout.cls = 0;
  layout.q_begin = 1;
  layout.q_end = question_tokens;
  layout.mid_sep = question_tokens + 1;
  layout.p_begin = question_tokens + 2;
  layout.p_end = question_tokens + 1 + p;
  layout.end_sep = layout.used - 1;
  return layout;
}

std::string zone_name(Zone z) {
  switch (z) {
    case Zone::Q2: return "Q2";
    case Zone::Q2P: return "Q2P";
    case Zone::P2Q: return "P2Q";
    case Zone::P2: return "P2";
    case Zone::ALL: return "ALL";
  }
  throw std::logic_error("zone_name: unknown zone");
}

std::string zone_label(Zone z) {
  switch (z) {
    case Zone::Q2: return "Q²";
    case Zone::Q2P: return "Q2P";
    case Zone::P2Q: return "P2Q";
    case Zone::P2: return "P²";
    case Zone::ALL: return "All";
  }
  throw std::logic_error("zone_label: unknown zone");
}

Zone zone_from_name(const std::string& name) {
  if (name == "Q2") return Zone::Q2;
  if (name == "Q2P") return Zone::Q2P;
  if (name == "P2Q") return Zone::P2Q;
  if (name == "P2") return Zone::P2;
  if (name == "ALL") return Zone::ALL;
  throw std::invalid_argument("zone: expected one of Q2|Q2P|P2Q|P2|ALL, got \"" + name + "\"");
}

bool zone_contains(const InputLayout& layout, Zone z, int row, int col) {
  const bool rq = layout.in_question(row), rp = layout.in_passage(row);
  const bool cq = layout.in_question(col), cp = layout.in_passage(col);
  switch (z) {
    case Zone::Q2: return rq && cq;
    case Zone::Q2P: return rq && cp;
    case Zone::P2Q: return rp && cq;
    case Zone::P2: return rp && cp;
    case Zone::ALL: return (rq || rp) && (cq || cp);
  }
  return false;
}

IndexSelector IndexSelector::only(std::vector<int> idx) {
  IndexSelector s;
  s.all = false;
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  s.indices = std::move(idx);
  return s;
}

bool IndexSelector::matches(int index) const {
  if (all) return true;
  return std::binary_search(indices.begin(), indices.end(), index);
}

namespace {

json selector_to_json(const IndexSelector& s) {
  if (s.all) return json("all");
  return json(s.indices);
}

IndexSelector selector_from_json(const json& j, const char* field) {
  if (j.is_string()) {
    if (j.get<std::string>() == "all") return IndexSelector::every();
    throw std::invalid_argument(std::string(field) + ": expected \"all\" or an index array");
  }
  if (!j.is_array()) throw std::invalid_argument(std::string(field) + ": expected \"all\" or an index array");
  std::vector<int> idx;
  for (const json& e : j) {
    if (!e.is_number_integer() || e.get<int>() < 0)
      throw std::invalid_argument(std::string(field) + ": indices must be non-negative integers");
    idx.push_back(e.get<int>());
  }
  if (idx.empty()) throw std::invalid_argument(std::string(field) + ": index array may not be empty");
  return IndexSelector::only(std::move(idx));
}

const char* kind_name(MaskKind k) {
  switch (k) {
    case MaskKind::Zone: return "zone";
    case MaskKind::SpecialToken: return "special-token";
    case MaskKind::Diagonal: return "diagonal";
    case MaskKind::TopK: return "topk";
    case MaskKind::Full: return "full";
  }
  throw std::logic_error("kind_name: unknown kind");
}

const char* special_name(SpecialToken t) {
  switch (t) {
    case SpecialToken::Cls: return "cls";
    case SpecialToken::MidSep: return "mid-sep";
    case SpecialToken::EndSep: return "end-sep";
    case SpecialToken::AllSpecial: return "all-special";
  }
  throw std::logic_error("special_name: unknown token");
}

}  // namespace

std::string mask_spec_to_json(const MaskSpec& spec) {
  json j;
  j["kind"] = kind_name(spec.kind);
  if (spec.kind == MaskKind::Zone || spec.kind == MaskKind::TopK) j["zone"] = zone_name(spec.zone);
  if (spec.kind == MaskKind::SpecialToken) j["special"] = special_name(spec.special);
  if (spec.kind == MaskKind::TopK) {
    j["k"] = spec.k;
    j["mode"] = spec.mode == TopKMode::Cumulative ? "cumulative" : "kth-only";
    j["granularity"] = spec.granularity == TopKGranularity::PerRow ? "per-row" : "per-zone";
  }
  j["layers"] = selector_to_json(spec.layers);
  j["heads"] = selector_to_json(spec.heads);
  j["phase"] = spec.phase == MaskPhase::Train ? "train-time" : "decode-time";
  return j.dump(2);
}

MaskSpec mask_spec_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("mask spec: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("mask spec: expected a JSON object");
  MaskSpec spec;
  const std::string kind = j.value("kind", "");
  if (kind == "zone") spec.kind = MaskKind::Zone;
  else if (kind == "special-token") spec.kind = MaskKind::SpecialToken;
  else if (kind == "diagonal") spec.kind = MaskKind::Diagonal;
  else if (kind == "topk") spec.kind = MaskKind::TopK;
  else if (kind == "full") spec.kind = MaskKind::Full;
  else throw std::invalid_argument("kind: expected zone|special-token|diagonal|topk|full, got \"" + kind + "\"");

  if (spec.kind == MaskKind::Zone || spec.kind == MaskKind::TopK) {
    if (!j.contains("zone") || !j["zone"].is_string())
      throw std::invalid_argument("zone: required for kind \"" + kind + "\"");
    spec.zone = zone_from_name(j["zone"].get<std::string>());
  }
  if (spec.kind == MaskKind::SpecialToken) {
    const std::string s = j.value("special", "");
    if (s == "cls") spec.special = SpecialToken::Cls;
    else if (s == "mid-sep") spec.special = SpecialToken::MidSep;
    else if (s == "end-sep") spec.special = SpecialToken::EndSep;
    else if (s == "all-special") spec.special = SpecialToken::AllSpecial;
    else throw std::invalid_argument("special: expected cls|mid-sep|end-sep|all-special, got \"" + s + "\"");
  }
  if (spec.kind == MaskKind::TopK) {
    if (!j.contains("k") || !j["k"].is_number_integer() || j["k"].get<int>() < 1)
      throw std::invalid_argument("k: required integer >= 1 for kind \"topk\"");
    spec.k = j["k"].get<int>();
    const std::string mode = j.value("mode", "cumulative");
    if (mode == "cumulative") spec.mode = TopKMode::Cumulative;
    else if (mode == "kth-only") spec.mode = TopKMode::KthOnly;
    else throw std::invalid_argument("mode: expected cumulative|kth-only, got \"" + mode + "\"");
    const std::string gran = j.value("granularity", "per-row");
    if (gran == "per-row") spec.granularity = TopKGranularity::PerRow;
    else if (gran == "per-zone") spec.granularity = TopKGranularity::PerZone;
    else throw std::invalid_argument("granularity: expected per-row|per-zone, got \"" + gran + "\"");
  }
  if (j.contains("layers")) spec.layers = selector_from_json(j["layers"], "layers");
  if (j.contains("heads")) spec.heads = selector_from_json(j["heads"], "heads");
  const std::string phase = j.value("phase", "decode-time");
  if (phase == "train-time") spec.phase = MaskPhase::Train;
  else if (phase == "decode-time") spec.phase = MaskPhase::Decode;
  else throw std::invalid_argument("phase: expected train-time|decode-time, got \"" + phase + "\"");
  return spec;
}

BoolMatrix static_mask(const InputLayout& layout, const MaskSpec& spec) {
  if (spec.kind == MaskKind::TopK)
    throw std::invalid_argument("static_mask: topk masks are dynamic; use dynamic_topk_mask");
  BoolMatrix m(layout.total, layout.total);
  const int used = layout.used;
  switch (spec.kind) {
    case MaskKind::Zone:
      for (int r = 0; r < used; ++r)
        for (int c = 0; c < used; ++c)
          if (zone_contains(layout, spec.zone, r, c)) m.set(r, c);
      break;
    case MaskKind::SpecialToken: {
      std::vector<int> tokens;
      if (spec.special == SpecialToken::Cls || spec.special == SpecialToken::AllSpecial)
        tokens.push_back(layout.cls);
      if (spec.special == SpecialToken::MidSep || spec.special == SpecialToken::AllSpecial)
        tokens.push_back(layout.mid_sep);
      if (spec.special == SpecialToken::EndSep || spec.special == SpecialToken::AllSpecial)
        tokens.push_back(layout.end_sep);
      for (int t : tokens)
        for (int i = 0; i < used; ++i) {
          m.set(t, i);
          m.set(i, t);
        }
      break;
    }
    case MaskKind::Diagonal:
      for (int i = 0; i < used; ++i) m.set(i, i);
      break;
    case MaskKind::Full:
      for (int r = 0; r < used; ++r)
        for (int c = 0; c < used; ++c) m.set(r, c);
      break;
    case MaskKind::TopK:
      break;  // unreachable
  }
  return m;
}

namespace {

struct RankedCell {
  double value;
  int row;
  int col;
};

// Larger values first; ties toward the lowest column, then the lowest row.
bool rank_before(const RankedCell& a, const RankedCell& b) {
  if (a.value != b.value) return a.value > b.value;
  if (a.col != b.col) return a.col < b.col;
  return a.row < b.row;
}

}  // namespace

BoolMatrix dynamic_topk_mask(const Tensor& scores, const InputLayout& layout, Zone zone, int k,
                             TopKMode mode, TopKGranularity granularity) {
  if (zone == Zone::ALL)
    throw std::invalid_argument("dynamic_topk_mask: ranking runs inside one of Q2|Q2P|P2Q|P2");
  if (k < 1) throw std::invalid_argument("dynamic_topk_mask: k must be >= 1");
  const int n = scores.rows();
  if (scores.cols() != n) throw std::invalid_argument("dynamic_topk_mask: score map must be square");
  if (n < layout.used)
    throw std::invalid_argument("dynamic_topk_mask: score map smaller than the used length");

  // Row and column index sets of the zone.
  const bool row_is_q = (zone == Zone::Q2 || zone == Zone::Q2P);
  const bool col_is_q = (zone == Zone::Q2 || zone == Zone::P2Q);
  const int r_begin = row_is_q ? layout.q_begin : layout.p_begin;
  const int r_end = row_is_q ? layout.q_end : layout.p_end;
  const int c_begin = col_is_q ? layout.q_begin : layout.p_begin;
  const int c_end = col_is_q ? layout.q_end : layout.p_end;

  BoolMatrix m(n, n);
  auto mark_unit = [&](std::vector<RankedCell>& unit) {
    std::sort(unit.begin(), unit.end(), rank_before);
    const int k_eff = std::min<int>(k, static_cast<int>(unit.size()));
    if (mode == TopKMode::Cumulative) {
      for (int i = 0; i < k_eff; ++i) m.set(unit[static_cast<std::size_t>(i)].row, unit[static_cast<std::size_t>(i)].col);
    } else {
      m.set(unit[static_cast<std::size_t>(k_eff - 1)].row, unit[static_cast<std::size_t>(k_eff - 1)].col);
    }
  };

  if (granularity == TopKGranularity::PerRow) {
    std::vector<RankedCell> unit;
    for (int r = r_begin; r <= r_end; ++r) {
      unit.clear();
      for (int c = c_begin; c <= c_end; ++c) unit.push_back(RankedCell{scores.at(r, c), r, c});
      mark_unit(unit);
    }
  } else {
    std::vector<RankedCell> unit;
    for (int r = r_begin; r <= r_end; ++r)
      for (int c = c_begin; c <= c_end; ++c) unit.push_back(RankedCell{scores.at(r, c), r, c});
    mark_unit(unit);
  }
  return m;
}

Tensor apply_mask(const Tensor& scores, const BoolMatrix& mask) {
  if (scores.rows() != mask.rows || scores.cols() != mask.cols)
    throw std::invalid_argument("apply_mask: shapes disagree");
  Tensor out = scores.clone();
  double* p = out.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask.cells[i]) p[i] = kMaskFill;
  return out;
}

PartitionReport validate_partition(const InputLayout& layout) {
  PartitionReport report;
  report.used = layout.used;
  const int used = layout.used;
  for (int r = 0; r < used; ++r) {
    for (int c = 0; c < used; ++c) {
      int membership = 0;
      for (int zi = 0; zi < 4; ++zi) {
        if (zone_contains(layout, kBaseZones[zi], r, c)) {
          ++membership;
          ++report.zone_cells[zi];
        }
      }
      const bool special = layout.is_special(r) || layout.is_special(c);
      if (special) ++report.special_cells;
      if (membership > 1) {
        report.message = "zones overlap at (" + std::to_string(r) + "," + std::to_string(c) + ")";
        return report;
      }
      if (membership == 1 && special) {
        report.message = "zone touches special row/column at (" + std::to_string(r) + "," + std::to_string(c) + ")";
        return report;
      }
      if (membership == 0 && !special) {
        report.message = "cell (" + std::to_string(r) + "," + std::to_string(c) + ") is uncovered";
        return report;
      }
    }
  }
  const int zone_total = report.zone_cells[0] + report.zone_cells[1] + report.zone_cells[2] + report.zone_cells[3];
  if (zone_total + report.special_cells != used * used) {
    report.message = "cover count mismatch";
    return report;
  }
  report.ok = true;
  return report;
}

}  // namespace zoneprobe
