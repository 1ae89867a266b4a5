#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zoneprobe/eval.hpp"
#include "zoneprobe/model.hpp"
#include "zoneprobe/train.hpp"

namespace zoneprobe {

// EM(masked) − EM(baseline) over zones × (layers | heads).
struct DeltaMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<double> cells;  // row-major
  double baseline_em = 0.0;
  double control_delta = 0.0;  // empty-mask integrity cell; must be exactly 0
  std::vector<std::uint64_t> seeds;

  double at(int r, int c) const { return cells[static_cast<std::size_t>(r) * col_labels.size() + static_cast<std::size_t>(c)]; }
  void set(int r, int c, double v) { cells[static_cast<std::size_t>(r) * col_labels.size() + static_cast<std::size_t>(c)] = v; }
  int rows() const { return static_cast<int>(row_labels.size()); }
  int cols() const { return static_cast<int>(col_labels.size()); }
};

std::string delta_matrix_to_json(const DeltaMatrix& m);
DeltaMatrix delta_matrix_from_json(const std::string& json_text);
std::string delta_matrix_to_csv(const DeltaMatrix& m);

// Everything a decode-time experiment needs: a frozen model, the vocabulary
// it was trained with, and the evaluation examples.
struct EvalContext {
  const Model& model;
  const Vocabulary& vocab;
  const std::vector<Example>& examples;
  int max_answer_length = kDefaultMaxAnswerLength;
};

struct SweepOptions {
  int jobs = 1;
  // Test hook: evaluation order of flat cell indices; identity when empty.
  // The assembled matrix is order-independent.
  std::vector<int> cell_order;
};

// Decode-time mask of one zone on all heads of one layer, per (zone, layer).
DeltaMatrix layer_sweep(const EvalContext& ctx, const SweepOptions& options = {});
// Same, masking one head index across all layers.
DeltaMatrix head_sweep(const EvalContext& ctx, const SweepOptions& options = {});

struct AblationRow {
  std::string name;  // baseline, no-CLS, ..., no-P2
  double em_mean = 0.0, em_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
  std::vector<double> per_seed_em;
  std::vector<double> per_seed_f1;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<std::uint64_t> seeds;
};

std::string ablation_table_to_json(const AblationTable& t);
std::string ablation_table_to_csv(const AblationTable& t);

// Retrains per mask with the mask active in both phases (train-consistent
// evaluation); row order: baseline, special tokens, diagonal, the four zones.
AblationTable train_time_zone_ablation(const ModelConfig& model_config,
                                       const EncodedDataset& train_data,
                                       const std::vector<Example>& dev_examples,
                                       const EncodedDataset& dev_data, const TrainConfig& config,
                                       const std::vector<std::uint64_t>& seeds);

struct RemovalRow {
  std::string zone;  // ALL, Q2, Q2P, P2Q, P2
  double em_all_mean = 0.0, em_all_std = 0.0;
  double em_topk_mean = 0.0, em_topk_std = 0.0;
  std::vector<double> per_seed_em_all;
  std::vector<double> per_seed_em_topk;
};

struct RemovalTable {
  int k = 1;
  double baseline_em_mean = 0.0;
  std::vector<double> per_seed_baseline_em;
  std::vector<RemovalRow> rows;
  std::vector<std::uint64_t> seeds;
};

std::string removal_table_to_json(const RemovalTable& t);
std::string removal_table_to_csv(const RemovalTable& t);

// Decode-time removal of whole zones and of their cumulative top-k cells on
// every layer and head, per seed model.
RemovalTable decode_time_removal(const std::vector<const Model*>& models, const Vocabulary& vocab,
                                 const std::vector<Example>& examples, int k,
                                 const std::vector<std::uint64_t>& seeds,
                                 int max_answer_length = kDefaultMaxAnswerLength);

struct RankCorrelationZone {
  std::string zone;
  std::vector<double> per_seed_r;      // NaN where undefined
  std::vector<std::string> undefined_reasons;  // empty string where defined
  double r_mean = 0.0;  // over defined seeds
  double r_std = 0.0;
  int defined_count = 0;
  std::vector<std::vector<double>> per_seed_em;  // [seed][k-1]
};

struct RankCorrelationResult {
  int k_max = 10;
  std::vector<RankCorrelationZone> zones;
  std::vector<std::uint64_t> seeds;
};

std::string rank_correlation_to_json(const RankCorrelationResult& r);
std::string rank_correlation_to_csv(const RankCorrelationResult& r);

// Masks only the k-th ranked cell per row (kth-only) for k = 1..k_max in each
// zone, evaluates EM, and correlates EM with k per seed.
RankCorrelationResult rank_correlation(const std::vector<const Model*>& models,
                                       const Vocabulary& vocab,
                                       const std::vector<Example>& examples, int k_max,
                                       const std::vector<std::uint64_t>& seeds,
                                       int max_answer_length = kDefaultMaxAnswerLength);

struct QTypeEntry {
  std::string qtype;
  int count = 0;
  bool low_confidence = false;  // fewer than 20 examples
  DeltaMatrix sweep;
  double mean_abs_delta = 0.0;
};

struct QTypeAnalysis {
  std::vector<QTypeEntry> entries;  // sorted by qtype
  int low_confidence_threshold = 20;
};

std::string qtype_analysis_to_json(const QTypeAnalysis& a);
std::string qtype_analysis_to_csv(const QTypeAnalysis& a);

// Layer sweep restricted to each question type's subset.
QTypeAnalysis qtype_analysis(const EvalContext& ctx, const SweepOptions& options = {});

struct SubsetComparison {
  std::string tag_a, tag_b;
  DeltaMatrix sweep_a, sweep_b;
  int count_a = 0, count_b = 0;
};

std::string subset_comparison_to_json(const SubsetComparison& c);
std::string subset_comparison_to_csv(const SubsetComparison& c);

// Side-by-side layer sweeps over two subset tags. Throws when a tag is absent.
SubsetComparison subset_comparison(const EvalContext& ctx, const std::string& tag_a,
                                   const std::string& tag_b, const SweepOptions& options = {});

}  // namespace zoneprobe
