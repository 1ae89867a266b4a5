#include "zoneprobe/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace zoneprobe {

using nlohmann::json;

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || max_len < 5 || n_segments < 1)
    throw std::invalid_argument("model config: all sizes must be >= 1 (max_len >= 5)");
  if (vocab_size < 4) throw std::invalid_argument("model config: vocab_size must cover the special tokens");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("model config: d_model (" + std::to_string(d_model) +
                                ") not divisible by n_heads (" + std::to_string(n_heads) + ")");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model config: dropout must be in [0, 1)");
}

std::string model_config_to_json(const ModelConfig& c) {
  json j = {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},     {"d_model", c.d_model},
            {"d_ff", c.d_ff},         {"vocab_size", c.vocab_size}, {"max_len", c.max_len},
            {"n_segments", c.n_segments}, {"dropout", c.dropout}};
  return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("model config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("model config: expected a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "n_layers") c.n_layers = value.get<int>();
    else if (key == "n_heads") c.n_heads = value.get<int>();
    else if (key == "d_model") c.d_model = value.get<int>();
    else if (key == "d_ff") c.d_ff = value.get<int>();
    else if (key == "vocab_size") c.vocab_size = value.get<int>();
    else if (key == "max_len") c.max_len = value.get<int>();
    else if (key == "n_segments") c.n_segments = value.get<int>();
    else if (key == "dropout") c.dropout = value.get<double>();
    else throw std::invalid_argument("model config: unknown field \"" + key + "\"");
  }
  return c;
}

Model::Model(ModelConfig config) : config_(config) {
  config_.validate();
  const int d = config_.d_model;
  const auto add = [&](const std::string& name, std::vector<int> shape) {
    params_.emplace_back(name, Tensor(std::move(shape)));
  };
  add("embed.token", {config_.vocab_size, d});
  add("embed.position", {config_.max_len, d});
  add("embed.segment", {config_.n_segments, d});
  add("embed.norm.gain", {d});
  add("embed.norm.bias", {d});
  for (int i = 0; i < config_.n_layers; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    add(p + "attn.wq", {d, d});
    add(p + "attn.bq", {d});
    add(p + "attn.wk", {d, d});
    add(p + "attn.bk", {d});
    add(p + "attn.wv", {d, d});
    add(p + "attn.bv", {d});
    add(p + "attn.wo", {d, d});
    add(p + "attn.bo", {d});
    add(p + "attn.norm.gain", {d});
    add(p + "attn.norm.bias", {d});
    add(p + "ff.w1", {d, config_.d_ff});
    add(p + "ff.b1", {config_.d_ff});
    add(p + "ff.w2", {config_.d_ff, d});
    add(p + "ff.b2", {d});
    add(p + "ff.norm.gain", {d});
    add(p + "ff.norm.bias", {d});
  }
  add("span.w", {d, 2});
  add("span.b", {2});
}

Model Model::init(ModelConfig config, Rng& rng) {
  Model m(std::move(config));
  constexpr double kInitStd = 0.1;
  for (auto& [name, tensor] : m.params_) {
    const bool is_gain = name.size() >= 4 && name.compare(name.size() - 4, 4, "gain") == 0;
    const bool is_bias = !is_gain && (name.find(".b") != std::string::npos ||
                                      name.compare(name.size() - 4, 4, "bias") == 0);
    double* p = tensor.data();
    if (is_gain) {
      for (std::size_t i = 0; i < tensor.size(); ++i) p[i] = 1.0;
    } else if (is_bias) {
      // zeros already
    } else {
      for (std::size_t i = 0; i < tensor.size(); ++i) p[i] = rng.normal(0.0, kInitStd);
    }
  }
  // Disentangle the three embedding tables into coordinate bands at init:
  // token identity owns the first half of the model width, position the next
  // quarter, segment the last quarter. Layer norm rescales vectors but never
  // mixes coordinates, so the bands survive into the first attention. With
  // the identity query/key start below, whose heads read disjoint coordinate
  // blocks, the heads open with distinct roles — token-match heads at full
  // signal-to-noise, a position head, a segment head — and training is free
  // to remix them from there.
  {
    const int d = m.config_.d_model;
    const int pos_begin = d / 2;
    const int seg_begin = pos_begin + d / 4;
    const auto keep_band = [&](const char* name, int begin, int end) {
      Tensor& t = m.param(name);
      const int rows = static_cast<int>(t.size()) / d;
      for (int r = 0; r < rows; ++r)
        for (int col = 0; col < d; ++col)
          if (col < begin || col >= end) t.data()[static_cast<std::size_t>(r) * d + col] = 0.0;
    };
    keep_band("embed.token", 0, pos_begin);
    keep_band("embed.position", pos_begin, seg_begin);
    keep_band("embed.segment", seg_begin, d);
  }
  // Start every query and key projection as the same scaled identity:
  // attention then opens as a similarity kernel in embedding space, so cells
  // whose query and key hold the same token score visibly higher before any
  // training. Because each head reads a disjoint coordinate block of the
  // projection, the four heads carry independent estimates of that match.
  // Without this prior the content-matching direction is noise-level at the
  // softmax and the short training budget settles on position-only heads.
  constexpr double kQkInitScale = 1.0;
  for (int layer = 0; layer < m.config_.n_layers; ++layer) {
    const std::string p = "layer" + std::to_string(layer) + ".";
    Tensor& wq = m.param(p + "attn.wq");
    Tensor& wk = m.param(p + "attn.wk");
    const int d = m.config_.d_model;
    for (int r = 0; r < d; ++r)
      for (int col = 0; col < d; ++col) {
        const double v = r == col ? kQkInitScale : 0.0;
        wq.data()[static_cast<std::size_t>(r) * d + col] = v;
        wk.data()[static_cast<std::size_t>(r) * d + col] = v;
      }
  }
  return m;
}

Tensor& Model::param(const std::string& name) {
  for (auto& [n, t] : params_)
    if (n == name) return t;
  throw std::invalid_argument("model: no parameter \"" + name + "\"");
}

const Tensor& Model::param(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw std::invalid_argument("model: no parameter \"" + name + "\"");
}

const Tensor& AttentionRecord::pre_at(int layer, int head) const {
  return pre.at(static_cast<std::size_t>(layer) * n_heads + static_cast<std::size_t>(head));
}

const Tensor& AttentionRecord::post_at(int layer, int head) const {
  return post.at(static_cast<std::size_t>(layer) * n_heads + static_cast<std::size_t>(head));
}

std::string probe_spec_to_json(const ProbeSpec& spec) {
  json masks = json::array();
  for (const MaskSpec& m : spec.masks) masks.push_back(json::parse(mask_spec_to_json(m)));
  return json{{"masks", masks}}.dump(2);
}

ProbeSpec probe_spec_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("probe spec: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("masks") || !j["masks"].is_array())
    throw std::invalid_argument("probe spec: expected an object with a \"masks\" array");
  ProbeSpec spec;
  for (const json& m : j["masks"]) spec.masks.push_back(mask_spec_from_json(m.dump()));
  return spec;
}

void validate_probe(const ProbeSpec& spec, const ModelConfig& config) {
  for (const MaskSpec& m : spec.masks) {
    if (!m.layers.all)
      for (int i : m.layers.indices)
        if (i < 0 || i >= config.n_layers)
          throw std::invalid_argument("probe spec: layer index " + std::to_string(i) +
                                      " outside 0.." + std::to_string(config.n_layers - 1));
    if (!m.heads.all)
      for (int i : m.heads.indices)
        if (i < 0 || i >= config.n_heads)
          throw std::invalid_argument("probe spec: head index " + std::to_string(i) + " outside 0.." +
                                      std::to_string(config.n_heads - 1));
    if (m.kind == MaskKind::TopK && m.k < 1)
      throw std::invalid_argument("probe spec: top-k masks need k >= 1");
  }
}

std::unordered_map<std::string, Value> bind_trainable(Tape& tape, Model& model) {
  std::unordered_map<std::string, Value> bound;
  for (auto& [name, tensor] : model.params()) bound.emplace(name, tape.watch(tensor));
  return bound;
}

std::unordered_map<std::string, Value> bind_frozen(Tape& tape, const Model& model) {
  std::unordered_map<std::string, Value> bound;
  for (const auto& [name, tensor] : model.params()) bound.emplace(name, tape.constant(tensor));
  return bound;
}

namespace {

// Static overlays merged per (layer, head) over the used square, plus the
// dynamic specs that apply there.
struct ResolvedMasks {
  std::vector<BoolMatrix> overlay;                     // n_layers*n_heads; empty when untouched
  std::vector<std::vector<const MaskSpec*>> dynamic;   // same indexing
  bool any = false;
};

ResolvedMasks resolve_masks(const std::vector<MaskSpec>& masks, const ModelConfig& config,
                            const InputLayout& layout) {
  ResolvedMasks r;
  const std::size_t slots = static_cast<std::size_t>(config.n_layers) * config.n_heads;
  r.overlay.resize(slots);
  r.dynamic.resize(slots);
  for (const MaskSpec& m : masks) {
    BoolMatrix cropped;
    if (!m.is_dynamic()) cropped = static_mask(layout, m).top_left(layout.used);
    for (int layer = 0; layer < config.n_layers; ++layer) {
      if (!m.layers.matches(layer)) continue;
      for (int head = 0; head < config.n_heads; ++head) {
        if (!m.heads.matches(head)) continue;
        const std::size_t slot = static_cast<std::size_t>(layer) * config.n_heads + head;
        if (m.is_dynamic()) {
          r.dynamic[slot].push_back(&m);
        } else {
          if (r.overlay[slot].empty()) r.overlay[slot] = cropped;
          else r.overlay[slot].merge(cropped);
        }
        r.any = true;
      }
    }
  }
  return r;
}

Value bound_value(const std::unordered_map<std::string, Value>& bound, const std::string& name) {
  const auto it = bound.find(name);
  if (it == bound.end()) throw std::invalid_argument("forward: unbound parameter \"" + name + "\"");
  return it->second;
}

}  // namespace

SpanGraph build_span_graph(Tape& tape, const std::unordered_map<std::string, Value>& bound,
                           const ModelConfig& config, const EncodedExample& example,
                           const ForwardOptions& options) {
  if (options.dropout > 0.0 && options.rng == nullptr)
    throw std::invalid_argument("forward: dropout requires an rng");
  if (static_cast<int>(example.ids.size()) != example.layout.total ||
      example.layout.total > config.max_len)
    throw std::invalid_argument("forward: example length disagrees with the model config");
  const int used = example.layout.used;
  const int dh = config.d_head();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const ResolvedMasks masks = resolve_masks(options.masks, config, example.layout);

  if (options.record != nullptr) {
    options.record->n_layers = config.n_layers;
    options.record->n_heads = config.n_heads;
    options.record->length = used;
    options.record->pre.clear();
    options.record->post.clear();
  }

  std::vector<int> ids(example.ids.begin(), example.ids.begin() + used);
  std::vector<int> segments(example.segments.begin(), example.segments.begin() + used);
  std::vector<int> positions(static_cast<std::size_t>(used));
  for (int i = 0; i < used; ++i) positions[static_cast<std::size_t>(i)] = i;

  const auto drop = [&](Value v) {
    return options.dropout > 0.0 ? tape.dropout(v, options.dropout, *options.rng) : v;
  };

  Value x = tape.add(tape.add(tape.embedding(bound_value(bound, "embed.token"), ids),
                              tape.embedding(bound_value(bound, "embed.position"), positions)),
                     tape.embedding(bound_value(bound, "embed.segment"), segments));
  x = tape.layer_norm(x, bound_value(bound, "embed.norm.gain"), bound_value(bound, "embed.norm.bias"));
  x = drop(x);

  for (int layer = 0; layer < config.n_layers; ++layer) {
    const std::string p = "layer" + std::to_string(layer) + ".";
    const Value xn = tape.layer_norm(x, bound_value(bound, p + "attn.norm.gain"),
                                     bound_value(bound, p + "attn.norm.bias"));
    const Value q = tape.add_bias(tape.matmul(xn, bound_value(bound, p + "attn.wq")),
                                  bound_value(bound, p + "attn.bq"));
    const Value k = tape.add_bias(tape.matmul(xn, bound_value(bound, p + "attn.wk")),
                                  bound_value(bound, p + "attn.bk"));
    const Value v = tape.add_bias(tape.matmul(xn, bound_value(bound, p + "attn.wv")),
                                  bound_value(bound, p + "attn.bv"));
    std::vector<Value> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(config.n_heads));
    for (int head = 0; head < config.n_heads; ++head) {
      const std::size_t slot = static_cast<std::size_t>(layer) * config.n_heads + head;
      const Value qh = tape.slice_cols(q, head * dh, dh);
      const Value kh = tape.slice_cols(k, head * dh, dh);
      const Value vh = tape.slice_cols(v, head * dh, dh);
      Value scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dh);
      if (options.record != nullptr) options.record->pre.push_back(tape.value(scores).clone());
      BoolMatrix overlay = masks.overlay[slot];
      for (const MaskSpec* spec : masks.dynamic[slot]) {
        BoolMatrix dyn = dynamic_topk_mask(tape.value(scores), example.layout, spec->zone, spec->k,
                                           spec->mode, spec->granularity);
        if (overlay.empty()) overlay = std::move(dyn);
        else overlay.merge(dyn);
      }
      if (!overlay.empty() && overlay.any()) scores = tape.masked_fill(scores, overlay, kMaskFill);
      Value attn = tape.row_softmax(scores);
      if (options.record != nullptr) options.record->post.push_back(tape.value(attn).clone());
      attn = drop(attn);
      head_outputs.push_back(tape.matmul(attn, vh));
    }
    Value attn_out = tape.concat_cols(head_outputs);
    attn_out = tape.add_bias(tape.matmul(attn_out, bound_value(bound, p + "attn.wo")),
                             bound_value(bound, p + "attn.bo"));
    attn_out = drop(attn_out);
    x = tape.add(x, attn_out);
    Value ff = tape.layer_norm(x, bound_value(bound, p + "ff.norm.gain"),
                               bound_value(bound, p + "ff.norm.bias"));
    ff = tape.add_bias(tape.matmul(ff, bound_value(bound, p + "ff.w1")),
                       bound_value(bound, p + "ff.b1"));
    ff = tape.gelu(ff);
    ff = tape.add_bias(tape.matmul(ff, bound_value(bound, p + "ff.w2")),
                       bound_value(bound, p + "ff.b2"));
    ff = drop(ff);
    x = tape.add(x, ff);
  }

  const Value span = tape.add_bias(tape.matmul(x, bound_value(bound, "span.w")),
                                   bound_value(bound, "span.b"));
  SpanGraph graph;
  graph.start = tape.slice_cols(span, 0, 1);
  graph.end = tape.slice_cols(span, 1, 1);
  graph.used = used;
  return graph;
}

SpanLogits forward(const Model& model, const EncodedExample& example,
                   const ForwardOptions& options) {
  Tape tape;
  const auto bound = bind_frozen(tape, model);
  const SpanGraph graph = build_span_graph(tape, bound, model.config(), example, options);
  SpanLogits logits;
  const Tensor& s = tape.value(graph.start);
  const Tensor& e = tape.value(graph.end);
  logits.start.assign(s.data(), s.data() + s.size());
  logits.end.assign(e.data(), e.data() + e.size());
  return logits;
}

Value span_loss(Tape& tape, const SpanGraph& graph, int gold_start, int gold_end) {
  if (gold_start < 0 || gold_start >= graph.used || gold_end < 0 || gold_end >= graph.used)
    throw std::invalid_argument("span_loss: gold indices outside the used length");
  const Value s = tape.cross_entropy(graph.start, gold_start);
  const Value e = tape.cross_entropy(graph.end, gold_end);
  return tape.scale(tape.add(s, e), 0.5);
}

std::pair<int, int> decode_span(const SpanLogits& logits, const InputLayout& layout,
                                int max_answer_length) {
  if (max_answer_length < 1) throw std::invalid_argument("decode_span: max_answer_length must be >= 1");
  if (static_cast<int>(logits.start.size()) < layout.used ||
      static_cast<int>(logits.end.size()) < layout.used)
    throw std::invalid_argument("decode_span: logits shorter than the used length");
  int best_s = layout.p_begin, best_e = layout.p_begin;
  double best = -std::numeric_limits<double>::infinity();
  for (int s = layout.p_begin; s <= layout.p_end; ++s) {
    const int e_max = std::min(layout.p_end, s + max_answer_length - 1);
    for (int e = s; e <= e_max; ++e) {
      const double score = logits.start[static_cast<std::size_t>(s)] + logits.end[static_cast<std::size_t>(e)];
      if (score > best) {
        best = score;
        best_s = s;
        best_e = e;
      }
    }
  }
  return {best_s, best_e};
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr char kMagic[4] = {'Z', 'P', 'C', 'K'};
constexpr std::uint32_t kVersionTag = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_i32(std::ostream& out, std::int32_t v) { write_u32(out, static_cast<std::uint32_t>(v)); }

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::int32_t read_i32(std::istream& in) { return static_cast<std::int32_t>(read_u32(in)); }

double read_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string read_string(std::istream& in) {
  const std::uint32_t len = read_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const Vocabulary& vocab) {
  if (vocab.size() != model.config().vocab_size)
    throw std::invalid_argument("checkpoint: vocabulary size disagrees with the model config");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write \"" + path + "\"");
  out.write(kMagic, 4);
  write_u32(out, kVersionTag);
  const ModelConfig& c = model.config();
  write_i32(out, c.n_layers);
  write_i32(out, c.n_heads);
  write_i32(out, c.d_model);
  write_i32(out, c.d_ff);
  write_i32(out, c.vocab_size);
  write_i32(out, c.max_len);
  write_i32(out, c.n_segments);
  write_f64(out, c.dropout);
  write_u32(out, static_cast<std::uint32_t>(vocab.tokens().size()));
  for (const std::string& t : vocab.tokens()) write_string(out, t);
  write_u32(out, static_cast<std::uint32_t>(vocab.frequency_floor()));
  write_u32(out, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& [name, tensor] : model.params()) {
    write_string(out, name);
    write_u32(out, static_cast<std::uint32_t>(tensor.ndim()));
    for (int dim : tensor.shape()) write_i32(out, dim);
    for (std::size_t i = 0; i < tensor.size(); ++i) write_f64(out, tensor.data()[i]);
  }
  if (!out) throw std::runtime_error("checkpoint: write to \"" + path + "\" failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open \"" + path + "\"");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: \"" + path + "\" is not a ZPCK container");
  const std::uint32_t version = read_u32(in);
  if (version != kVersionTag)
    throw std::runtime_error("checkpoint: unsupported container version " + std::to_string(version));
  ModelConfig c;
  c.n_layers = read_i32(in);
  c.n_heads = read_i32(in);
  c.d_model = read_i32(in);
  c.d_ff = read_i32(in);
  c.vocab_size = read_i32(in);
  c.max_len = read_i32(in);
  c.n_segments = read_i32(in);
  c.dropout = read_f64(in);
  const std::uint32_t token_count = read_u32(in);
  std::vector<std::string> tokens;
  tokens.reserve(token_count);
  for (std::uint32_t i = 0; i < token_count; ++i) tokens.push_back(read_string(in));
  const int floor = static_cast<int>(read_u32(in));
  Checkpoint ck{Model(c), Vocabulary::from_tokens(std::move(tokens), floor)};
  const std::uint32_t param_count = read_u32(in);
  if (param_count != ck.model.params().size())
    throw std::runtime_error("checkpoint: parameter count disagrees with the config");
  for (std::uint32_t i = 0; i < param_count; ++i) {
    const std::string name = read_string(in);
    Tensor& tensor = ck.model.param(name);
    const std::uint32_t ndim = read_u32(in);
    if (static_cast<int>(ndim) != tensor.ndim())
      throw std::runtime_error("checkpoint: parameter \"" + name + "\" has unexpected rank");
    for (int d = 0; d < static_cast<int>(ndim); ++d)
      if (read_i32(in) != tensor.shape()[static_cast<std::size_t>(d)])
        throw std::runtime_error("checkpoint: parameter \"" + name + "\" has unexpected shape");
    for (std::size_t j = 0; j < tensor.size(); ++j) tensor.data()[j] = read_f64(in);
  }
  return ck;
}

}  // namespace zoneprobe
