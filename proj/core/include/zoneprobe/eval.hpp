#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zoneprobe/data.hpp"
#include "zoneprobe/model.hpp"

namespace zoneprobe {

// Word mode: lowercase, delete punctuation, drop article tokens (a/an/the),
// collapse whitespace. Char mode: delete whitespace and ASCII punctuation.
std::string normalize_answer(const std::string& text, TokenMode mode);

// 1 iff the normalized prediction equals any normalized gold.
int exact_match(const std::string& prediction, const std::vector<std::string>& golds,
                TokenMode mode);

// Bag-overlap F1 in [0,1] over normalized tokens (word mode) or codepoints
// (char mode); maximum over golds. Empty vs empty is 1, empty vs non-empty 0.
double f1_score(const std::string& prediction, const std::vector<std::string>& golds,
                TokenMode mode);

struct PearsonResult {
  bool defined = false;
  double r = 0.0;
  std::string reason;  // set when undefined
};

// Sample Pearson correlation; undefined (with reason) on zero variance.
// Throws when lengths differ or are below 2.
PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y);

struct ExampleScore {
  std::string id;
  std::string prediction;
  int em = 0;
  double f1 = 0.0;
};

struct MetricReport {
  double em = 0.0;  // percentages over all examples, dropped ones scored 0
  double f1 = 0.0;
  int total = 0;
  int evaluated = 0;
  std::vector<std::string> dropped;
  std::vector<ExampleScore> examples;
  std::string probe_json;  // empty when no probe
  std::uint64_t seed = 0;
};

std::string metric_report_to_json(const MetricReport& report, bool include_examples = true);
std::string metric_report_to_csv(const MetricReport& report);

struct EvalOptions {
  const ProbeSpec* probe = nullptr;
  // Keep train-phase masks active when evaluating (train-consistent); decode
  // -phase masks always apply.
  bool include_train_phase_masks = true;
  int max_answer_length = kDefaultMaxAnswerLength;
  std::uint64_t seed = 0;  // recorded in the report only
};

// Deterministic batch evaluation; dropout stays off. `examples` is the source
// vector the dataset was encoded from.
MetricReport evaluate(const Model& model, const std::vector<Example>& examples,
                      const EncodedDataset& dataset, const EvalOptions& options = {});

}  // namespace zoneprobe
