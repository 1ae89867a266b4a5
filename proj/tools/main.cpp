// zoneprobe: command-line driver for dataset generation, training, probing,
// and SVG rendering. Every command stages its outputs in a temporary
// directory, writes a run manifest, and renames the directory into place, so
// a failed run never leaves partial results behind.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zoneprobe/data.hpp"
#include "zoneprobe/eval.hpp"
#include "zoneprobe/manifest.hpp"
#include "zoneprobe/model.hpp"
#include "zoneprobe/probe.hpp"
#include "zoneprobe/train.hpp"
#include "zoneprobe/version.hpp"
#include "zoneprobe/viz.hpp"
#include "zoneprobe/zones.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace zoneprobe;

namespace {

int run_cli(const std::vector<std::string>& args);  // re-entered by `replay`

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read \"" + path + "\"");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Relative output paths land under ZONEPROBE_OUT_ROOT when it is set.
std::string resolve_out(const std::string& out) {
  if (out.empty()) throw std::invalid_argument("--out must name a directory");
  const char* root = std::getenv("ZONEPROBE_OUT_ROOT");
  if (root != nullptr && *root != '\0' && fs::path(out).is_relative())
    return (fs::path(root) / out).string();
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    std::uint64_t value = 0;
    try {
      value = std::stoull(item, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("--seeds: \"" + item + "\" is not an unsigned integer");
    }
    if (used != item.size())
      throw std::invalid_argument("--seeds: \"" + item + "\" is not an unsigned integer");
    seeds.push_back(value);
  }
  if (seeds.empty()) throw std::invalid_argument("--seeds: at least one seed required");
  return seeds;
}

// Applies one `--set key=value` override onto a config JSON object. The value
// is parsed as JSON when possible and kept as a string otherwise.
void apply_set(json& config, const std::string& assignment, const std::string& required_prefix) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("--set expects key=value, got \"" + assignment + "\"");
  std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  if (!required_prefix.empty()) {
    const std::string prefix = required_prefix + ".";
    if (key.rfind(prefix, 0) != 0)
      throw std::invalid_argument("--set key \"" + key + "\" must start with \"" + prefix + "\"");
    key = key.substr(prefix.size());
  }
  std::string pointer = "/";
  for (char c : key) pointer += (c == '.') ? '/' : c;
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  config[json::json_pointer(pointer)] = parsed;
}

json config_with_sets(const std::string& path, const std::vector<std::string>& sets,
                      const std::string& prefix) {
  json config = path.empty() ? json::object() : json::parse(read_file(path));
  for (const std::string& assignment : sets) {
    const std::size_t eq = assignment.find('=');
    const std::string key = eq == std::string::npos ? assignment : assignment.substr(0, eq);
    if (!prefix.empty() && key.rfind(prefix + ".", 0) != 0) continue;
    apply_set(config, assignment, prefix);
  }
  return config;
}

void reject_unclaimed_sets(const std::vector<std::string>& sets,
                           const std::vector<std::string>& prefixes) {
  for (const std::string& assignment : sets) {
    const std::size_t eq = assignment.find('=');
    const std::string key = eq == std::string::npos ? assignment : assignment.substr(0, eq);
    bool claimed = false;
    for (const std::string& prefix : prefixes)
      if (key.rfind(prefix + ".", 0) == 0) claimed = true;
    if (!claimed) {
      std::string expected;
      for (std::size_t i = 0; i < prefixes.size(); ++i)
        expected += (i ? " or " : "") + ("\"" + prefixes[i] + ".\"");
      throw std::invalid_argument("--set key \"" + key + "\" must start with " + expected);
    }
  }
}

struct ManifestBuilder {
  RunManifest manifest;

  explicit ManifestBuilder(const std::vector<std::string>& args) {
    manifest.argv = args;
    manifest.command = "zoneprobe";
    for (const std::string& a : args) manifest.command += " " + a;
    manifest.version = kVersion;
    manifest.started_at = iso8601_utc_now();
  }

  void input(const std::string& path) {
    if (!path.empty()) manifest.inputs[path] = file_checksum_hex(path);
  }
  void finish(OutputStager& stager) {
    manifest.finished_at = iso8601_utc_now();
    stager.write_file("manifest.json", run_manifest_to_json(manifest));
    stager.commit();
    std::cout << "wrote " << stager.target_dir() << "\n";
  }
};

Checkpoint load_checkpoint_checked(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint \"" + path + "\" does not exist");
  return load_checkpoint(path);
}

std::vector<Example> load_dataset_checked(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("dataset \"" + path + "\" does not exist");
  return load_dataset(path);
}

ProbeSpec load_probe(const std::string& path, const ModelConfig& config) {
  ProbeSpec probe = probe_spec_from_json(read_file(path));
  validate_probe(probe, config);
  return probe;
}

HeatmapStyle style_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  if (!j.is_object()) throw std::invalid_argument("style: expected a JSON object");
  HeatmapStyle style;
  for (const auto& [key, value] : j.items()) {
    if (key == "negative") style.negative = value.get<std::string>();
    else if (key == "neutral") style.neutral = value.get<std::string>();
    else if (key == "positive") style.positive = value.get<std::string>();
    else if (key == "clamp") style.clamp = value.get<double>();
    else if (key == "cell_size") style.cell_size = value.get<int>();
    else throw std::invalid_argument("style: unknown field \"" + key + "\"");
  }
  return style;
}

// ---------------------------------------------------------------------------
// Subcommand option bags.

struct GenDataArgs {
  std::string config_path;
  std::uint64_t seed = kDefaultSeeds[0];
  std::string out;
  std::vector<std::string> sets;
};

void run_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  const json config_json = config_with_sets(a.config_path, a.sets, "");
  const GeneratorConfig config = generator_config_from_json(config_json.dump());
  const SyntheticDataset dataset = generate_synthetic(config, a.seed);

  OutputStager stager(resolve_out(a.out));
  stager.write_file("train.json", dataset_to_json(dataset.train));
  stager.write_file("dev.json", dataset_to_json(dataset.dev));
  if (!dataset.challenge.empty())
    stager.write_file("challenge.json", dataset_to_json(dataset.challenge));
  const std::string resolved = generator_config_to_json(config);
  stager.write_file("generator-config.json", resolved);

  mb.input(a.config_path);
  mb.manifest.config_json = resolved;
  mb.manifest.seeds = {a.seed};
  mb.finish(stager);
}

struct TrainArgs {
  std::string model_config_path;
  std::string train_config_path;
  std::string data_path;
  std::string dev_path;
  std::string probe_path;
  std::string seeds_csv;
  std::string out;
  std::vector<std::string> sets;
};

void run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  reject_unclaimed_sets(a.sets, {"model", "train"});
  ModelConfig model_config =
      model_config_from_json(config_with_sets(a.model_config_path, a.sets, "model").dump());
  TrainConfig train_config =
      train_config_from_json(config_with_sets(a.train_config_path, a.sets, "train").dump());
  const std::vector<std::uint64_t> seeds = a.seeds_csv.empty()
                                               ? std::vector<std::uint64_t>(std::begin(kDefaultSeeds),
                                                                            std::end(kDefaultSeeds))
                                               : parse_seeds(a.seeds_csv);

  const std::vector<Example> train_examples = load_dataset_checked(a.data_path);
  const Vocabulary vocab = Vocabulary::build(train_examples);
  model_config.vocab_size = vocab.size();
  model_config.validate();
  if (!a.probe_path.empty()) train_config.probe = load_probe(a.probe_path, model_config);
  train_config.validate();
  validate_probe(train_config.probe, model_config);

  const EncodedDataset train_encoded = encode_dataset(train_examples, vocab, model_config.max_len);
  std::vector<Example> dev_examples;
  EncodedDataset dev_encoded;
  if (!a.dev_path.empty()) {
    dev_examples = load_dataset_checked(a.dev_path);
    dev_encoded = encode_dataset(dev_examples, vocab, model_config.max_len);
  }

  OutputStager stager(resolve_out(a.out));
  std::vector<double> ems, f1s;
  for (std::uint64_t seed : seeds) {
    TrainConfig per_seed = train_config;
    per_seed.seed = seed;
    const TrainResult result = train(model_config, train_encoded, per_seed);
    const std::string tag = "seed" + std::to_string(seed);
    save_checkpoint(stager.path("checkpoint-" + tag + ".zpck"), result.model, vocab);

    std::string curve;
    for (const TrainStep& s : result.curve) {
      curve += json{{"step", s.step}, {"loss", s.loss}, {"lr", s.lr}}.dump();
      curve += '\n';
    }
    stager.write_file("curve-" + tag + ".jsonl", curve);

    if (!a.dev_path.empty()) {
      EvalOptions options;
      options.probe = &per_seed.probe;
      options.seed = seed;
      MetricReport report = evaluate(result.model, dev_examples, dev_encoded, options);
      stager.write_file("report-" + tag + ".json", metric_report_to_json(report));
      stager.write_file("report-" + tag + ".csv", metric_report_to_csv(report));
      ems.push_back(report.em);
      f1s.push_back(report.f1);
    }
  }

  json summary = {{"seeds", seeds}};
  if (!ems.empty()) {
    const auto [em_mean, em_std] = mean_and_sample_std(ems);
    const auto [f1_mean, f1_std] = mean_and_sample_std(f1s);
    summary["per_seed_em"] = ems;
    summary["per_seed_f1"] = f1s;
    summary["em_mean"] = em_mean;
    summary["em_std"] = em_std;
    summary["f1_mean"] = f1_mean;
    summary["f1_std"] = f1_std;
  }
  stager.write_file("summary.json", summary.dump(1));
  const std::string resolved_model = model_config_to_json(model_config);
  const std::string resolved_train = train_config_to_json(train_config);
  stager.write_file("model-config.json", resolved_model);
  stager.write_file("train-config.json", resolved_train);

  mb.input(a.model_config_path);
  mb.input(a.train_config_path);
  mb.input(a.data_path);
  mb.input(a.dev_path);
  mb.input(a.probe_path);
  mb.manifest.config_json =
      json{{"model", json::parse(resolved_model)}, {"train", json::parse(resolved_train)}}.dump(1);
  mb.manifest.seeds = seeds;
  mb.finish(stager);
}

struct EvalArgs {
  std::string checkpoint;
  std::string data_path;
  std::string probe_path;
  int max_answer_length = kDefaultMaxAnswerLength;
  bool drop_train_masks = false;
  std::string out;
};

void run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  const Checkpoint ckpt = load_checkpoint_checked(a.checkpoint);
  const std::vector<Example> examples = load_dataset_checked(a.data_path);
  const EncodedDataset encoded = encode_dataset(examples, ckpt.vocab, ckpt.model.config().max_len);

  ProbeSpec probe;
  if (!a.probe_path.empty()) probe = load_probe(a.probe_path, ckpt.model.config());
  EvalOptions options;
  options.probe = a.probe_path.empty() ? nullptr : &probe;
  options.include_train_phase_masks = !a.drop_train_masks;
  options.max_answer_length = a.max_answer_length;
  const MetricReport report = evaluate(ckpt.model, examples, encoded, options);

  OutputStager stager(resolve_out(a.out));
  stager.write_file("report.json", metric_report_to_json(report));
  stager.write_file("report.csv", metric_report_to_csv(report));
  mb.input(a.checkpoint);
  mb.input(a.data_path);
  mb.input(a.probe_path);
  mb.manifest.config_json = report.probe_json;
  mb.finish(stager);
}

struct AblateTrainArgs {
  std::string model_config_path;
  std::string train_config_path;
  std::string data_path;
  std::string dev_path;
  std::string seeds_csv;
  std::string out;
  std::vector<std::string> sets;
};

void run_ablate_train(const AblateTrainArgs& a, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  reject_unclaimed_sets(a.sets, {"model", "train"});
  ModelConfig model_config =
      model_config_from_json(config_with_sets(a.model_config_path, a.sets, "model").dump());
  const TrainConfig train_config =
      train_config_from_json(config_with_sets(a.train_config_path, a.sets, "train").dump());
  const std::vector<std::uint64_t> seeds = a.seeds_csv.empty()
                                               ? std::vector<std::uint64_t>(std::begin(kDefaultSeeds),
                                                                            std::end(kDefaultSeeds))
                                               : parse_seeds(a.seeds_csv);

  const std::vector<Example> train_examples = load_dataset_checked(a.data_path);
  const std::vector<Example> dev_examples = load_dataset_checked(a.dev_path);
  const Vocabulary vocab = Vocabulary::build(train_examples);
  model_config.vocab_size = vocab.size();
  model_config.validate();
  train_config.validate();
  const EncodedDataset train_encoded = encode_dataset(train_examples, vocab, model_config.max_len);
  const EncodedDataset dev_encoded = encode_dataset(dev_examples, vocab, model_config.max_len);

  const AblationTable table = train_time_zone_ablation(model_config, train_encoded, dev_examples,
                                                       dev_encoded, train_config, seeds);

  OutputStager stager(resolve_out(a.out));
  stager.write_file("ablation.json", ablation_table_to_json(table));
  stager.write_file("ablation.csv", ablation_table_to_csv(table));
  mb.input(a.model_config_path);
  mb.input(a.train_config_path);
  mb.input(a.data_path);
  mb.input(a.dev_path);
  mb.manifest.config_json = json{{"model", json::parse(model_config_to_json(model_config))},
                                 {"train", json::parse(train_config_to_json(train_config))}}
                                .dump(1);
  mb.manifest.seeds = seeds;
  mb.finish(stager);
}

struct SweepArgs {
  std::string checkpoint;
  std::string data_path;
  std::string axis = "layer";
  int jobs = 1;
  int max_answer_length = kDefaultMaxAnswerLength;
  std::string style_path;
  std::string out;
};

void run_sweep(const SweepArgs& a, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  if (a.axis != "layer" && a.axis != "head")
    throw std::invalid_argument("--axis: expected layer|head, got \"" + a.axis + "\"");
  if (a.jobs < 1) throw std::invalid_argument("--jobs must be >= 1");
  const Checkpoint ckpt = load_checkpoint_checked(a.checkpoint);
  const std::vector<Example> examples = load_dataset_checked(a.data_path);
  const EvalContext ctx{ckpt.model, ckpt.vocab, examples, a.max_answer_length};
  SweepOptions options;
  options.jobs = a.jobs;
  const DeltaMatrix matrix = a.axis == "layer" ? layer_sweep(ctx, options) : head_sweep(ctx, options);
  const HeatmapStyle style =
      a.style_path.empty() ? HeatmapStyle{} : style_from_json(read_file(a.style_path));

  OutputStager stager(resolve_out(a.out));
  stager.write_file("sweep.json", delta_matrix_to_json(matrix));
  stager.write_file("sweep.csv", delta_matrix_to_csv(matrix));
  stager.write_file("sweep.svg", render_heatmap_svg(matrix, style));
  mb.input(a.checkpoint);
  mb.input(a.data_path);
  mb.input(a.style_path);
  mb.manifest.config_json = json{{"axis", a.axis}, {"jobs", a.jobs}}.dump(1);
  mb.finish(stager);
}

struct MultiCheckpointArgs {
  std::vector<std::string> checkpoints;
  std::string data_path;
  std::string seeds_csv;
  int max_answer_length = kDefaultMaxAnswerLength;
  std::string out;
};

// Loads every checkpoint and enforces one shared vocabulary.
std::vector<Checkpoint> load_checkpoint_set(const std::vector<std::string>& paths) {
  if (paths.empty()) throw std::invalid_argument("at least one --checkpoint required");
  std::vector<Checkpoint> set;
  set.reserve(paths.size());
  for (const std::string& path : paths) set.push_back(load_checkpoint_checked(path));
  for (std::size_t i = 1; i < set.size(); ++i)
    if (!(set[i].vocab == set[0].vocab))
      throw std::invalid_argument("checkpoint \"" + paths[i] +
                                  "\" carries a different vocabulary than \"" + paths[0] + "\"");
  return set;
}

std::vector<std::uint64_t> seed_labels(const std::string& csv, std::size_t count) {
  if (csv.empty()) {
    std::vector<std::uint64_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = i;
    return labels;
  }
  std::vector<std::uint64_t> labels = parse_seeds(csv);
  if (labels.size() != count)
    throw std::invalid_argument("--seeds lists " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(count) + " checkpoints");
  return labels;
}

void run_topk(const MultiCheckpointArgs& a, int k, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  const std::vector<Checkpoint> set = load_checkpoint_set(a.checkpoints);
  const std::vector<Example> examples = load_dataset_checked(a.data_path);
  std::vector<const Model*> models;
  for (const Checkpoint& c : set) models.push_back(&c.model);
  const std::vector<std::uint64_t> seeds = seed_labels(a.seeds_csv, set.size());
  const RemovalTable table =
      decode_time_removal(models, set[0].vocab, examples, k, seeds, a.max_answer_length);

  OutputStager stager(resolve_out(a.out));
  stager.write_file("topk.json", removal_table_to_json(table));
  stager.write_file("topk.csv", removal_table_to_csv(table));
  for (const std::string& path : a.checkpoints) mb.input(path);
  mb.input(a.data_path);
  mb.manifest.config_json = json{{"k", k}}.dump(1);
  mb.manifest.seeds = seeds;
  mb.finish(stager);
}

void run_rankcorr(const MultiCheckpointArgs& a, int k_max, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  const std::vector<Checkpoint> set = load_checkpoint_set(a.checkpoints);
  const std::vector<Example> examples = load_dataset_checked(a.data_path);
  std::vector<const Model*> models;
  for (const Checkpoint& c : set) models.push_back(&c.model);
  const std::vector<std::uint64_t> seeds = seed_labels(a.seeds_csv, set.size());
  const RankCorrelationResult result =
      rank_correlation(models, set[0].vocab, examples, k_max, seeds, a.max_answer_length);

  OutputStager stager(resolve_out(a.out));
  stager.write_file("rankcorr.json", rank_correlation_to_json(result));
  stager.write_file("rankcorr.csv", rank_correlation_to_csv(result));
  for (const std::string& path : a.checkpoints) mb.input(path);
  mb.input(a.data_path);
  mb.manifest.config_json = json{{"k_max", k_max}}.dump(1);
  mb.manifest.seeds = seeds;
  mb.finish(stager);
}

struct QTypeArgs {
  std::string checkpoint;
  std::string data_path;
  int jobs = 1;
  int max_answer_length = kDefaultMaxAnswerLength;
  std::string out;
};

void run_qtype(const QTypeArgs& a, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  const Checkpoint ckpt = load_checkpoint_checked(a.checkpoint);
  const std::vector<Example> examples = load_dataset_checked(a.data_path);
  const EvalContext ctx{ckpt.model, ckpt.vocab, examples, a.max_answer_length};
  SweepOptions options;
  options.jobs = a.jobs;
  const QTypeAnalysis analysis = qtype_analysis(ctx, options);

  OutputStager stager(resolve_out(a.out));
  stager.write_file("qtype.json", qtype_analysis_to_json(analysis));
  stager.write_file("qtype.csv", qtype_analysis_to_csv(analysis));
  for (const QTypeEntry& e : analysis.entries)
    stager.write_file("sweep-" + e.qtype + ".json", delta_matrix_to_json(e.sweep));
  mb.input(a.checkpoint);
  mb.input(a.data_path);
  mb.finish(stager);
}

struct CompareArgs {
  std::string checkpoint;
  std::vector<std::string> data_paths;
  std::string tag_a = "dev";
  std::string tag_b = "challenge";
  int jobs = 1;
  int max_answer_length = kDefaultMaxAnswerLength;
  std::string out;
};

void run_compare(const CompareArgs& a, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  const Checkpoint ckpt = load_checkpoint_checked(a.checkpoint);
  std::vector<Example> examples;
  for (const std::string& path : a.data_paths) {
    const std::vector<Example> part = load_dataset_checked(path);
    examples.insert(examples.end(), part.begin(), part.end());
  }
  const EvalContext ctx{ckpt.model, ckpt.vocab, examples, a.max_answer_length};
  SweepOptions options;
  options.jobs = a.jobs;
  const SubsetComparison comparison = subset_comparison(ctx, a.tag_a, a.tag_b, options);

  OutputStager stager(resolve_out(a.out));
  stager.write_file("compare.json", subset_comparison_to_json(comparison));
  stager.write_file("compare.csv", subset_comparison_to_csv(comparison));
  stager.write_file("sweep-" + a.tag_a + ".json", delta_matrix_to_json(comparison.sweep_a));
  stager.write_file("sweep-" + a.tag_b + ".json", delta_matrix_to_json(comparison.sweep_b));
  mb.input(a.checkpoint);
  for (const std::string& path : a.data_paths) mb.input(path);
  mb.manifest.config_json = json{{"tag_a", a.tag_a}, {"tag_b", a.tag_b}}.dump(1);
  mb.finish(stager);
}

struct VizArgs {
  std::string kind;
  std::string result_path;   // heatmap input
  std::string checkpoint;    // lines/boxes input
  std::string data_path;
  std::string example_id;
  std::string style_path;
  int layer = 0;
  double threshold = 0.05;
  bool keep_special = false;
  int focus = 0;
  bool incoming = false;
  std::string out;
};

Example pick_example(const VizArgs& a) {
  if (a.data_path.empty()) return discussion_example();
  const std::vector<Example> examples = load_dataset_checked(a.data_path);
  if (a.example_id.empty()) {
    if (examples.empty()) throw std::runtime_error("dataset \"" + a.data_path + "\" is empty");
    return examples.front();
  }
  for (const Example& ex : examples)
    if (ex.id == a.example_id) return ex;
  throw std::runtime_error("example \"" + a.example_id + "\" not found in \"" + a.data_path + "\"");
}

void run_viz(const VizArgs& a, const std::vector<std::string>& argv) {
  ManifestBuilder mb(argv);
  std::string svg;
  if (a.kind == "heatmap") {
    if (a.result_path.empty()) throw std::invalid_argument("viz heatmap needs --result");
    const DeltaMatrix matrix = delta_matrix_from_json(read_file(a.result_path));
    const HeatmapStyle style =
        a.style_path.empty() ? HeatmapStyle{} : style_from_json(read_file(a.style_path));
    svg = render_heatmap_svg(matrix, style);
  } else if (a.kind == "lines" || a.kind == "boxes") {
    if (a.checkpoint.empty()) throw std::invalid_argument("viz " + a.kind + " needs --checkpoint");
    const Checkpoint ckpt = load_checkpoint_checked(a.checkpoint);
    const Example example = pick_example(a);
    if (a.kind == "lines") {
      LineDiagramOptions options;
      options.layer = a.layer;
      options.threshold = a.threshold;
      options.filter_special = !a.keep_special;
      svg = render_attention_lines_svg(ckpt.model, ckpt.vocab, example, options);
    } else {
      HeadBoxOptions options;
      options.layer = a.layer;
      options.focus = a.focus;
      options.incoming = a.incoming;
      svg = render_head_boxes_svg(ckpt.model, ckpt.vocab, example, options);
    }
  } else {
    throw std::invalid_argument("viz kind: expected heatmap|lines|boxes, got \"" + a.kind + "\"");
  }

  OutputStager stager(resolve_out(a.out));
  stager.write_file(a.kind + ".svg", svg);
  mb.input(a.result_path);
  mb.input(a.checkpoint);
  mb.input(a.data_path);
  mb.input(a.style_path);
  mb.manifest.config_json = json{{"kind", a.kind}}.dump(1);
  mb.finish(stager);
}

struct ReplayArgs {
  std::string manifest_path;
  std::string out;
};

int run_replay(const ReplayArgs& a) {
  const RunManifest manifest = run_manifest_from_json(read_file(a.manifest_path));
  if (manifest.argv.empty())
    throw std::runtime_error("manifest \"" + a.manifest_path + "\" records no argv to replay");
  if (manifest.argv[0] == "replay")
    throw std::runtime_error("manifest \"" + a.manifest_path + "\" records a replay; nothing to re-run");
  std::vector<std::string> args = manifest.argv;
  bool replaced = false;
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--out" || args[i] == "-o") {
      args[i + 1] = a.out;
      replaced = true;
    }
  }
  if (!replaced) {
    args.push_back("--out");
    args.push_back(a.out);
  }
  return run_cli(args);
}

// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"attention-zone probing toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic QA corpus");
  gen_cmd->add_option("--config", gen.config_path, "generator config JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--set", gen.sets, "override a config field (key=value)");
  gen_cmd->add_option("--out,-o", gen.out, "output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train span models over the seed list");
  train_cmd->add_option("--model-config", tr.model_config_path, "model config JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--train-config", tr.train_config_path, "trainer config JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data_path, "training dataset JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", tr.dev_path, "dev dataset JSON for per-seed reports")->check(CLI::ExistingFile);
  train_cmd->add_option("--probe", tr.probe_path, "mask list JSON applied while training")->check(CLI::ExistingFile);
  train_cmd->add_option("--seeds", tr.seeds_csv, "comma-separated seed list (default 11,22,33,44,55)");
  train_cmd->add_option("--set", tr.sets, "override a config field (model.* or train.*)");
  train_cmd->add_option("--out,-o", tr.out, "output directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data_path, "dataset JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--probe", ev.probe_path, "mask list JSON")->check(CLI::ExistingFile);
  eval_cmd->add_option("--max-answer-length", ev.max_answer_length, "decode span cap");
  eval_cmd->add_flag("--no-train-masks", ev.drop_train_masks, "ignore train-phase masks in the probe");
  eval_cmd->add_option("--out,-o", ev.out, "output directory")->required();

  AblateTrainArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate-train", "train-time zone/special ablation table");
  ablate_cmd->add_option("--model-config", ab.model_config_path, "model config JSON")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--train-config", ab.train_config_path, "trainer config JSON")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--data", ab.data_path, "training dataset JSON")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--dev", ab.dev_path, "dev dataset JSON")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--seeds", ab.seeds_csv, "comma-separated seed list");
  ablate_cmd->add_option("--set", ab.sets, "override a config field (model.* or train.*)");
  ablate_cmd->add_option("--out,-o", ab.out, "output directory")->required();

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "zone × layer (or head) decode-time masking grid");
  sweep_cmd->add_option("--checkpoint", sw.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--data", sw.data_path, "dataset JSON")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--axis", sw.axis, "layer|head (default layer)");
  sweep_cmd->add_option("--jobs", sw.jobs, "parallel sweep cells");
  sweep_cmd->add_option("--max-answer-length", sw.max_answer_length, "decode span cap");
  sweep_cmd->add_option("--style", sw.style_path, "heatmap style JSON")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out,-o", sw.out, "output directory")->required();

  MultiCheckpointArgs tk;
  int topk_k = 3;
  auto* topk_cmd = app.add_subcommand("topk", "whole-zone vs top-k decode-time removal table");
  topk_cmd->add_option("--checkpoint", tk.checkpoints, "model checkpoint (repeat per seed)")
      ->required()
      ->check(CLI::ExistingFile);
  topk_cmd->add_option("--data", tk.data_path, "dataset JSON")->required()->check(CLI::ExistingFile);
  topk_cmd->add_option("--k", topk_k, "links removed per row (default 3)");
  topk_cmd->add_option("--seeds", tk.seeds_csv, "seed labels matching the checkpoints");
  topk_cmd->add_option("--max-answer-length", tk.max_answer_length, "decode span cap");
  topk_cmd->add_option("--out,-o", tk.out, "output directory")->required();

  MultiCheckpointArgs rc;
  int rank_kmax = 10;
  auto* rank_cmd = app.add_subcommand("rankcorr", "rank-vs-impact correlation per zone");
  rank_cmd->add_option("--checkpoint", rc.checkpoints, "model checkpoint (repeat per seed)")
      ->required()
      ->check(CLI::ExistingFile);
  rank_cmd->add_option("--data", rc.data_path, "dataset JSON")->required()->check(CLI::ExistingFile);
  rank_cmd->add_option("--kmax", rank_kmax, "largest attention rank probed (default 10)");
  rank_cmd->add_option("--seeds", rc.seeds_csv, "seed labels matching the checkpoints");
  rank_cmd->add_option("--max-answer-length", rc.max_answer_length, "decode span cap");
  rank_cmd->add_option("--out,-o", rc.out, "output directory")->required();

  QTypeArgs qt;
  auto* qtype_cmd = app.add_subcommand("qtype", "per-question-type layer sweeps");
  qtype_cmd->add_option("--checkpoint", qt.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  qtype_cmd->add_option("--data", qt.data_path, "dataset JSON")->required()->check(CLI::ExistingFile);
  qtype_cmd->add_option("--jobs", qt.jobs, "parallel sweep cells");
  qtype_cmd->add_option("--max-answer-length", qt.max_answer_length, "decode span cap");
  qtype_cmd->add_option("--out,-o", qt.out, "output directory")->required();

  CompareArgs cp;
  auto* compare_cmd = app.add_subcommand("compare", "side-by-side sweeps for two subset tags");
  compare_cmd->add_option("--checkpoint", cp.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--data", cp.data_paths, "dataset JSON (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  compare_cmd->add_option("--tag-a", cp.tag_a, "first subset tag (default dev)");
  compare_cmd->add_option("--tag-b", cp.tag_b, "second subset tag (default challenge)");
  compare_cmd->add_option("--jobs", cp.jobs, "parallel sweep cells");
  compare_cmd->add_option("--max-answer-length", cp.max_answer_length, "decode span cap");
  compare_cmd->add_option("--out,-o", cp.out, "output directory")->required();

  VizArgs vz;
  auto* viz_cmd = app.add_subcommand("viz", "render an SVG (heatmap, lines, boxes)");
  viz_cmd->add_option("kind", vz.kind, "heatmap|lines|boxes")->required();
  viz_cmd->add_option("--result", vz.result_path, "delta-matrix JSON (heatmap)")->check(CLI::ExistingFile);
  viz_cmd->add_option("--checkpoint", vz.checkpoint, "model checkpoint (lines/boxes)")->check(CLI::ExistingFile);
  viz_cmd->add_option("--data", vz.data_path, "dataset JSON; defaults to the built-in example")->check(CLI::ExistingFile);
  viz_cmd->add_option("--example", vz.example_id, "example id within --data");
  viz_cmd->add_option("--style", vz.style_path, "heatmap style JSON")->check(CLI::ExistingFile);
  viz_cmd->add_option("--layer", vz.layer, "attention layer (lines/boxes)");
  viz_cmd->add_option("--threshold", vz.threshold, "hide lines below this weight");
  viz_cmd->add_flag("--keep-special", vz.keep_special, "keep [CLS]/[SEP] rows in the line diagram");
  viz_cmd->add_option("--focus", vz.focus, "focus token index (boxes)");
  viz_cmd->add_flag("--incoming", vz.incoming, "shade attention received instead of emitted");
  viz_cmd->add_option("--out,-o", vz.out, "output directory")->required();

  ReplayArgs rp;
  auto* replay_cmd = app.add_subcommand("replay", "re-execute the command a manifest records");
  replay_cmd->add_option("--manifest", rp.manifest_path, "manifest.json from a previous run")
      ->required()
      ->check(CLI::ExistingFile);
  replay_cmd->add_option("--out,-o", rp.out, "output directory for the re-run")->required();

  std::vector<std::string> argv_full = {"zoneprobe"};
  argv_full.insert(argv_full.end(), args.begin(), args.end());
  std::vector<char*> argv_c;
  argv_c.reserve(argv_full.size());
  for (std::string& s : argv_full) argv_c.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv_c.size()), argv_c.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen_cmd->parsed()) run_gen_data(gen, args);
    else if (train_cmd->parsed()) run_train(tr, args);
    else if (eval_cmd->parsed()) run_eval(ev, args);
    else if (ablate_cmd->parsed()) run_ablate_train(ab, args);
    else if (sweep_cmd->parsed()) run_sweep(sw, args);
    else if (topk_cmd->parsed()) run_topk(tk, topk_k, args);
    else if (rank_cmd->parsed()) run_rankcorr(rc, rank_kmax, args);
    else if (qtype_cmd->parsed()) run_qtype(qt, args);
    else if (compare_cmd->parsed()) run_compare(cp, args);
    else if (viz_cmd->parsed()) run_viz(vz, args);
    else if (replay_cmd->parsed()) return run_replay(rp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}
