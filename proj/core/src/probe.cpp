#include "zoneprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace zoneprobe {

using nlohmann::json;

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

double evaluate_em(const Model& model, const std::vector<Example>& examples,
                   const EncodedDataset& dataset, const ProbeSpec& probe, int max_answer_length) {
  EvalOptions options;
  options.probe = &probe;
  options.max_answer_length = max_answer_length;
  return evaluate(model, examples, dataset, options).em;
}

MaskSpec zone_mask_spec(Zone zone, IndexSelector layers, IndexSelector heads) {
  MaskSpec m;
  m.kind = MaskKind::Zone;
  m.zone = zone;
  m.layers = std::move(layers);
  m.heads = std::move(heads);
  m.phase = MaskPhase::Decode;
  return m;
}

constexpr Zone kSweepZones[5] = {Zone::Q2, Zone::Q2P, Zone::P2Q, Zone::P2, Zone::ALL};

DeltaMatrix run_sweep(const EvalContext& ctx, bool by_layer, const SweepOptions& options) {
  const ModelConfig& config = ctx.model.config();
  const int n_cols = by_layer ? config.n_layers : config.n_heads;
  DeltaMatrix m;
  for (Zone z : kSweepZones) m.row_labels.push_back(zone_name(z));
  for (int c = 0; c < n_cols; ++c)
    m.col_labels.push_back((by_layer ? "layer" : "head") + std::to_string(c));
  m.cells.assign(static_cast<std::size_t>(m.rows()) * static_cast<std::size_t>(n_cols), 0.0);

  const EncodedDataset dataset = encode_dataset(ctx.examples, ctx.vocab, config.max_len);
  const ProbeSpec empty;
  m.baseline_em = evaluate_em(ctx.model, ctx.examples, dataset, empty, ctx.max_answer_length);
  // Integrity cell: an empty mask list must reproduce the baseline exactly.
  m.control_delta = evaluate_em(ctx.model, ctx.examples, dataset, empty, ctx.max_answer_length) -
                    m.baseline_em;

  const int total = m.rows() * n_cols;
  std::vector<double> results(static_cast<std::size_t>(total), 0.0);
  const auto run_cell = [&](int cell) {
    const int row = cell / n_cols;
    const int col = cell % n_cols;
    ProbeSpec probe;
    probe.masks.push_back(zone_mask_spec(
        kSweepZones[row], by_layer ? IndexSelector::only({col}) : IndexSelector::every(),
        by_layer ? IndexSelector::every() : IndexSelector::only({col})));
    results[static_cast<std::size_t>(cell)] =
        evaluate_em(ctx.model, ctx.examples, dataset, probe, ctx.max_answer_length) - m.baseline_em;
  };

  if (options.jobs > 1) {
    const int jobs = std::min(options.jobs, total);
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w)
      workers.emplace_back([&, w] {
        for (int cell = w; cell < total; cell += jobs) run_cell(cell);
      });
    for (std::thread& t : workers) t.join();
  } else if (!options.cell_order.empty()) {
    if (static_cast<int>(options.cell_order.size()) != total)
      throw std::invalid_argument("sweep: cell_order must list every cell exactly once");
    for (int cell : options.cell_order) {
      if (cell < 0 || cell >= total) throw std::invalid_argument("sweep: cell_order index out of range");
      run_cell(cell);
    }
  } else {
    for (int cell = 0; cell < total; ++cell) run_cell(cell);
  }
  m.cells = std::move(results);
  return m;
}

}  // namespace

std::string delta_matrix_to_json(const DeltaMatrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m.at(r, c));
    rows.push_back(row);
  }
  json j = {{"row_labels", m.row_labels}, {"col_labels", m.col_labels},
            {"cells", rows},              {"baseline_em", m.baseline_em},
            {"control_delta", m.control_delta}, {"seeds", m.seeds}};
  return j.dump(1);
}

DeltaMatrix delta_matrix_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("delta matrix: invalid JSON: ") + e.what());
  }
  DeltaMatrix m;
  if (!j.is_object() || !j.contains("row_labels") || !j.contains("col_labels") || !j.contains("cells"))
    throw std::invalid_argument("delta matrix: expected row_labels, col_labels, cells");
  m.row_labels = j["row_labels"].get<std::vector<std::string>>();
  m.col_labels = j["col_labels"].get<std::vector<std::string>>();
  m.baseline_em = j.value("baseline_em", 0.0);
  m.control_delta = j.value("control_delta", 0.0);
  if (j.contains("seeds")) m.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  const json& cells = j["cells"];
  if (!cells.is_array() || cells.size() != m.row_labels.size())
    throw std::invalid_argument("delta matrix: cells row count disagrees with row_labels");
  for (const json& row : cells) {
    if (!row.is_array() || row.size() != m.col_labels.size())
      throw std::invalid_argument("delta matrix: cells column count disagrees with col_labels");
    for (const json& v : row) m.cells.push_back(v.get<double>());
  }
  return m;
}

std::string delta_matrix_to_csv(const DeltaMatrix& m) {
  std::string out = "zone";
  for (const std::string& c : m.col_labels) out += "," + c;
  out += "\n";
  for (int r = 0; r < m.rows(); ++r) {
    out += m.row_labels[static_cast<std::size_t>(r)];
    for (int c = 0; c < m.cols(); ++c) out += "," + format_double(m.at(r, c));
    out += "\n";
  }
  return out;
}

DeltaMatrix layer_sweep(const EvalContext& ctx, const SweepOptions& options) {
  return run_sweep(ctx, true, options);
}

DeltaMatrix head_sweep(const EvalContext& ctx, const SweepOptions& options) {
  return run_sweep(ctx, false, options);
}

std::string ablation_table_to_json(const AblationTable& t) {
  json rows = json::array();
  for (const AblationRow& r : t.rows)
    rows.push_back({{"name", r.name},
                    {"em_mean", r.em_mean},
                    {"em_std", r.em_std},
                    {"f1_mean", r.f1_mean},
                    {"f1_std", r.f1_std},
                    {"per_seed_em", r.per_seed_em},
                    {"per_seed_f1", r.per_seed_f1}});
  return json{{"rows", rows}, {"seeds", t.seeds}}.dump(1);
}

std::string ablation_table_to_csv(const AblationTable& t) {
  std::string out = "name,em_mean,em_std,f1_mean,f1_std\n";
  for (const AblationRow& r : t.rows)
    out += r.name + "," + format_double(r.em_mean) + "," + format_double(r.em_std) + "," +
           format_double(r.f1_mean) + "," + format_double(r.f1_std) + "\n";
  return out;
}

AblationTable train_time_zone_ablation(const ModelConfig& model_config,
                                       const EncodedDataset& train_data,
                                       const std::vector<Example>& dev_examples,
                                       const EncodedDataset& dev_data, const TrainConfig& config,
                                       const std::vector<std::uint64_t>& seeds) {
  struct RowSpec {
    std::string name;
    ProbeSpec probe;
  };
  const auto special_spec = [](SpecialToken token) {
    MaskSpec m;
    m.kind = MaskKind::SpecialToken;
    m.special = token;
    m.phase = MaskPhase::Train;
    return m;
  };
  const auto train_zone_spec = [](Zone z) {
    MaskSpec m;
    m.kind = MaskKind::Zone;
    m.zone = z;
    m.phase = MaskPhase::Train;
    return m;
  };
  MaskSpec diagonal;
  diagonal.kind = MaskKind::Diagonal;
  diagonal.phase = MaskPhase::Train;

  std::vector<RowSpec> rows;
  rows.push_back({"baseline", {}});
  rows.push_back({"no-CLS", {{special_spec(SpecialToken::Cls)}}});
  rows.push_back({"no-mid-SEP", {{special_spec(SpecialToken::MidSep)}}});
  rows.push_back({"no-end-SEP", {{special_spec(SpecialToken::EndSep)}}});
  rows.push_back({"no-all-special", {{special_spec(SpecialToken::AllSpecial)}}});
  rows.push_back({"no-diagonal", {{diagonal}}});
  rows.push_back({"no-Q2", {{train_zone_spec(Zone::Q2)}}});
  rows.push_back({"no-Q2P", {{train_zone_spec(Zone::Q2P)}}});
  rows.push_back({"no-P2Q", {{train_zone_spec(Zone::P2Q)}}});
  rows.push_back({"no-P2", {{train_zone_spec(Zone::P2)}}});

  AblationTable table;
  table.seeds = seeds;
  for (const RowSpec& row : rows) {
    TrainConfig per_row = config;
    per_row.probe = row.probe;
    const MultiSeedResult result =
        multi_seed_run(model_config, train_data, dev_examples, dev_data, per_row, seeds);
    AblationRow out;
    out.name = row.name;
    out.em_mean = result.em_mean;
    out.em_std = result.em_std;
    out.f1_mean = result.f1_mean;
    out.f1_std = result.f1_std;
    for (const MetricReport& r : result.reports) {
      out.per_seed_em.push_back(r.em);
      out.per_seed_f1.push_back(r.f1);
    }
    table.rows.push_back(std::move(out));
  }
  return table;
}

std::string removal_table_to_json(const RemovalTable& t) {
  json rows = json::array();
  for (const RemovalRow& r : t.rows)
    rows.push_back({{"zone", r.zone},
                    {"em_all_mean", r.em_all_mean},
                    {"em_all_std", r.em_all_std},
                    {"em_topk_mean", r.em_topk_mean},
                    {"em_topk_std", r.em_topk_std},
                    {"per_seed_em_all", r.per_seed_em_all},
                    {"per_seed_em_topk", r.per_seed_em_topk}});
  return json{{"k", t.k},
              {"baseline_em_mean", t.baseline_em_mean},
              {"per_seed_baseline_em", t.per_seed_baseline_em},
              {"rows", rows},
              {"seeds", t.seeds}}
      .dump(1);
}

std::string removal_table_to_csv(const RemovalTable& t) {
  std::string out = "zone,em_all_mean,em_all_std,em_topk_mean,em_topk_std\n";
  for (const RemovalRow& r : t.rows)
    out += r.zone + "," + format_double(r.em_all_mean) + "," + format_double(r.em_all_std) + "," +
           format_double(r.em_topk_mean) + "," + format_double(r.em_topk_std) + "\n";
  return out;
}

RemovalTable decode_time_removal(const std::vector<const Model*>& models, const Vocabulary& vocab,
                                 const std::vector<Example>& examples, int k,
                                 const std::vector<std::uint64_t>& seeds,
                                 int max_answer_length) {
  if (models.empty()) throw std::invalid_argument("decode_time_removal: at least one model required");
  if (k < 1) throw std::invalid_argument("decode_time_removal: k must be >= 1");
  RemovalTable table;
  table.k = k;
  table.seeds = seeds;
  constexpr Zone kRows[5] = {Zone::ALL, Zone::Q2, Zone::Q2P, Zone::P2Q, Zone::P2};
  table.rows.resize(5);
  for (int i = 0; i < 5; ++i) table.rows[static_cast<std::size_t>(i)].zone = zone_name(kRows[i]);

  const auto topk_spec = [&](Zone z) {
    MaskSpec m;
    m.kind = MaskKind::TopK;
    m.zone = z;
    m.k = k;
    m.mode = TopKMode::Cumulative;
    m.granularity = TopKGranularity::PerRow;
    m.phase = MaskPhase::Decode;
    return m;
  };

  for (const Model* model : models) {
    const EncodedDataset dataset = encode_dataset(examples, vocab, model->config().max_len);
    const ProbeSpec empty;
    table.per_seed_baseline_em.push_back(
        evaluate_em(*model, examples, dataset, empty, max_answer_length));
    for (int i = 0; i < 5; ++i) {
      RemovalRow& row = table.rows[static_cast<std::size_t>(i)];
      ProbeSpec whole;
      whole.masks.push_back(zone_mask_spec(kRows[i], IndexSelector::every(), IndexSelector::every()));
      row.per_seed_em_all.push_back(evaluate_em(*model, examples, dataset, whole, max_answer_length));
      ProbeSpec topk;
      if (kRows[i] == Zone::ALL) {
        for (Zone z : kBaseZones) topk.masks.push_back(topk_spec(z));
      } else {
        topk.masks.push_back(topk_spec(kRows[i]));
      }
      row.per_seed_em_topk.push_back(evaluate_em(*model, examples, dataset, topk, max_answer_length));
    }
  }
  table.baseline_em_mean = mean_and_sample_std(table.per_seed_baseline_em).first;
  for (RemovalRow& row : table.rows) {
    std::tie(row.em_all_mean, row.em_all_std) = mean_and_sample_std(row.per_seed_em_all);
    std::tie(row.em_topk_mean, row.em_topk_std) = mean_and_sample_std(row.per_seed_em_topk);
  }
  return table;
}

std::string rank_correlation_to_json(const RankCorrelationResult& r) {
  json zones = json::array();
  for (const RankCorrelationZone& z : r.zones) {
    json per_seed_r = json::array();
    for (double v : z.per_seed_r) per_seed_r.push_back(std::isnan(v) ? json() : json(v));
    zones.push_back({{"zone", z.zone},
                     {"per_seed_r", per_seed_r},
                     {"undefined_reasons", z.undefined_reasons},
                     {"r_mean", z.r_mean},
                     {"r_std", z.r_std},
                     {"defined_count", z.defined_count},
                     {"per_seed_em", z.per_seed_em}});
  }
  return json{{"k_max", r.k_max}, {"zones", zones}, {"seeds", r.seeds}}.dump(1);
}

std::string rank_correlation_to_csv(const RankCorrelationResult& r) {
  std::string out = "zone,r_mean,r_std,defined_count\n";
  for (const RankCorrelationZone& z : r.zones)
    out += z.zone + "," + format_double(z.r_mean) + "," + format_double(z.r_std) + "," +
           std::to_string(z.defined_count) + "\n";
  return out;
}

RankCorrelationResult rank_correlation(const std::vector<const Model*>& models,
                                       const Vocabulary& vocab,
                                       const std::vector<Example>& examples, int k_max,
                                       const std::vector<std::uint64_t>& seeds,
                                       int max_answer_length) {
  if (models.empty()) throw std::invalid_argument("rank_correlation: at least one model required");
  if (k_max < 2) throw std::invalid_argument("rank_correlation: k_max must be >= 2");
  RankCorrelationResult result;
  result.k_max = k_max;
  result.seeds = seeds;
  std::vector<double> ks;
  for (int k = 1; k <= k_max; ++k) ks.push_back(static_cast<double>(k));

  for (Zone z : kBaseZones) {
    RankCorrelationZone zone_result;
    zone_result.zone = zone_name(z);
    for (const Model* model : models) {
      const EncodedDataset dataset = encode_dataset(examples, vocab, model->config().max_len);
      std::vector<double> ems;
      for (int k = 1; k <= k_max; ++k) {
        MaskSpec m;
        m.kind = MaskKind::TopK;
        m.zone = z;
        m.k = k;
        m.mode = TopKMode::KthOnly;
        // One cell per zone per map: the suite probes the zone's k-th ranked
        // score overall, not the k-th score of every row at once.
        m.granularity = TopKGranularity::PerZone;
        m.phase = MaskPhase::Decode;
        ProbeSpec probe;
        probe.masks.push_back(m);
        ems.push_back(evaluate_em(*model, examples, dataset, probe, max_answer_length));
      }
      const PearsonResult p = pearson(ks, ems);
      zone_result.per_seed_em.push_back(std::move(ems));
      if (p.defined) {
        zone_result.per_seed_r.push_back(p.r);
        zone_result.undefined_reasons.emplace_back();
      } else {
        zone_result.per_seed_r.push_back(std::nan(""));
        zone_result.undefined_reasons.push_back(p.reason);
      }
    }
    std::vector<double> defined;
    for (double v : zone_result.per_seed_r)
      if (!std::isnan(v)) defined.push_back(v);
    zone_result.defined_count = static_cast<int>(defined.size());
    std::tie(zone_result.r_mean, zone_result.r_std) = mean_and_sample_std(defined);
    result.zones.push_back(std::move(zone_result));
  }
  return result;
}

std::string qtype_analysis_to_json(const QTypeAnalysis& a) {
  json entries = json::array();
  for (const QTypeEntry& e : a.entries)
    entries.push_back({{"qtype", e.qtype},
                       {"count", e.count},
                       {"low_confidence", e.low_confidence},
                       {"mean_abs_delta", e.mean_abs_delta},
                       {"sweep", json::parse(delta_matrix_to_json(e.sweep))}});
  return json{{"entries", entries}, {"low_confidence_threshold", a.low_confidence_threshold}}.dump(1);
}

std::string qtype_analysis_to_csv(const QTypeAnalysis& a) {
  std::string out = "qtype,count,low_confidence,mean_abs_delta\n";
  for (const QTypeEntry& e : a.entries)
    out += e.qtype + "," + std::to_string(e.count) + "," + (e.low_confidence ? "1" : "0") + "," +
           format_double(e.mean_abs_delta) + "\n";
  return out;
}

QTypeAnalysis qtype_analysis(const EvalContext& ctx, const SweepOptions& options) {
  std::map<std::string, std::vector<Example>> by_type;
  for (const Example& ex : ctx.examples) by_type[classify_question_type(ex.question)].push_back(ex);
  QTypeAnalysis analysis;
  for (const auto& [qtype, subset] : by_type) {
    QTypeEntry entry;
    entry.qtype = qtype;
    entry.count = static_cast<int>(subset.size());
    entry.low_confidence = entry.count < analysis.low_confidence_threshold;
    EvalContext sub_ctx{ctx.model, ctx.vocab, subset, ctx.max_answer_length};
    entry.sweep = layer_sweep(sub_ctx, options);
    double total = 0.0;
    for (double v : entry.sweep.cells) total += std::fabs(v);
    entry.mean_abs_delta = entry.sweep.cells.empty() ? 0.0 : total / static_cast<double>(entry.sweep.cells.size());
    analysis.entries.push_back(std::move(entry));
  }
  return analysis;
}

std::string subset_comparison_to_json(const SubsetComparison& c) {
  return json{{"tag_a", c.tag_a},
              {"tag_b", c.tag_b},
              {"count_a", c.count_a},
              {"count_b", c.count_b},
              {"sweep_a", json::parse(delta_matrix_to_json(c.sweep_a))},
              {"sweep_b", json::parse(delta_matrix_to_json(c.sweep_b))}}
      .dump(1);
}

std::string subset_comparison_to_csv(const SubsetComparison& c) {
  std::string out = "subset,zone";
  for (const std::string& col : c.sweep_a.col_labels) out += "," + col;
  out += "\n";
  const auto rows = [&](const std::string& tag, const DeltaMatrix& m) {
    std::string s;
    for (int r = 0; r < m.rows(); ++r) {
      s += tag + "," + m.row_labels[static_cast<std::size_t>(r)];
      for (int col = 0; col < m.cols(); ++col) s += "," + format_double(m.at(r, col));
      s += "\n";
    }
    return s;
  };
  out += rows(c.tag_a, c.sweep_a);
  out += rows(c.tag_b, c.sweep_b);
  return out;
}

SubsetComparison subset_comparison(const EvalContext& ctx, const std::string& tag_a,
                                   const std::string& tag_b, const SweepOptions& options) {
  std::vector<Example> subset_a, subset_b;
  for (const Example& ex : ctx.examples) {
    if (ex.subset == tag_a) subset_a.push_back(ex);
    if (ex.subset == tag_b) subset_b.push_back(ex);
  }
  if (subset_a.empty()) throw std::invalid_argument("subset_comparison: no examples tagged \"" + tag_a + "\"");
  if (subset_b.empty()) throw std::invalid_argument("subset_comparison: no examples tagged \"" + tag_b + "\"");
  SubsetComparison out;
  out.tag_a = tag_a;
  out.tag_b = tag_b;
  out.count_a = static_cast<int>(subset_a.size());
  out.count_b = static_cast<int>(subset_b.size());
  EvalContext ctx_a{ctx.model, ctx.vocab, subset_a, ctx.max_answer_length};
  EvalContext ctx_b{ctx.model, ctx.vocab, subset_b, ctx.max_answer_length};
  out.sweep_a = layer_sweep(ctx_a, options);
  out.sweep_b = layer_sweep(ctx_b, options);
  return out;
}

}  // namespace zoneprobe
