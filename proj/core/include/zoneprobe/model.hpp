#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zoneprobe/data.hpp"
#include "zoneprobe/rng.hpp"
#include "zoneprobe/tensor.hpp"
#include "zoneprobe/zones.hpp"

namespace zoneprobe {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int vocab_size = 0;  // filled from the vocabulary before init
  int max_len = 64;
  int n_segments = 2;
  double dropout = 0.0;

  int d_head() const { return d_model / n_heads; }
  void validate() const;  // sizes >= 1, d_model divisible by n_heads
  bool operator==(const ModelConfig&) const = default;
};

std::string model_config_to_json(const ModelConfig& config);
// Missing fields keep defaults; unknown fields rejected.
ModelConfig model_config_from_json(const std::string& json_text);

// Named parameter tensors in a stable registration order (the order of
// seeded initialization and of checkpoint serialization).
class Model {
 public:
  explicit Model(ModelConfig config);  // zero-valued parameters
  static Model init(ModelConfig config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

 private:
  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

// Per-(layer, head) attention maps over the used length: `pre` is the scaled
// score map before any mask overlay, `post` the row-softmax after overlays.
struct AttentionRecord {
  int n_layers = 0;
  int n_heads = 0;
  int length = 0;
  std::vector<Tensor> pre;
  std::vector<Tensor> post;

  const Tensor& pre_at(int layer, int head) const;
  const Tensor& post_at(int layer, int head) const;
};

// A list of masks driving one experiment.
struct ProbeSpec {
  std::vector<MaskSpec> masks;
  bool operator==(const ProbeSpec&) const = default;
};

std::string probe_spec_to_json(const ProbeSpec& spec);
ProbeSpec probe_spec_from_json(const std::string& json_text);

// Throws when any selector index or top-k parameter falls outside the config.
void validate_probe(const ProbeSpec& spec, const ModelConfig& config);

struct SpanLogits {
  std::vector<double> start;  // length = layout.used
  std::vector<double> end;
};

struct ForwardOptions {
  std::vector<MaskSpec> masks;       // already filtered to the active phase(s)
  double dropout = 0.0;              // 0 disables; requires rng when > 0
  Rng* rng = nullptr;
  AttentionRecord* record = nullptr;
};

// Start/end column vectors [used×1] on the tape.
struct SpanGraph {
  Value start;
  Value end;
  int used = 0;
};

std::unordered_map<std::string, Value> bind_trainable(Tape& tape, Model& model);
std::unordered_map<std::string, Value> bind_frozen(Tape& tape, const Model& model);

// Builds one example's computation on `tape`; shared by training and
// evaluation. Dynamic top-k masks rank the example's own pre-overlay score
// map recorded in the same pass.
SpanGraph build_span_graph(Tape& tape, const std::unordered_map<std::string, Value>& bound,
                           const ModelConfig& config, const EncodedExample& example,
                           const ForwardOptions& options);

// Single-example evaluation forward (no gradients, dropout off by default).
SpanLogits forward(const Model& model, const EncodedExample& example,
                   const ForwardOptions& options = {});

// Mean of the start and end cross-entropies.
Value span_loss(Tape& tape, const SpanGraph& graph, int gold_start, int gold_end);

inline constexpr int kDefaultMaxAnswerLength = 30;

// Best (start, end) pair inside the passage with end − start < max_answer_length,
// scored by start-logit + end-logit; ties go to the earliest start, then the
// shortest span.
std::pair<int, int> decode_span(const SpanLogits& logits, const InputLayout& layout,
                                int max_answer_length = kDefaultMaxAnswerLength);

struct Checkpoint {
  Model model;
  Vocabulary vocab;
};

// Binary container: magic "ZPCK", version, config, embedded vocabulary,
// named little-endian f64 tensors. See README for the exact field order.
void save_checkpoint(const std::string& path, const Model& model, const Vocabulary& vocab);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace zoneprobe
