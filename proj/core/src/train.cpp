#include "zoneprobe/train.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace zoneprobe {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("train config: betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("train config: epsilon must be > 0");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
    throw std::invalid_argument("train config: warmup_fraction must lie in [0, 1]");
  if (clip_norm < 0.0) throw std::invalid_argument("train config: clip_norm must be >= 0");
}

std::string train_config_to_json(const TrainConfig& c) {
  json j = {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"warmup_fraction", c.warmup_fraction},
            {"clip_norm", c.clip_norm},
            {"seed", c.seed}};
  if (!c.probe.masks.empty()) j["probe"] = json::parse(probe_spec_to_json(c.probe));
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("train config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("train config: expected a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "beta1") c.beta1 = value.get<double>();
    else if (key == "beta2") c.beta2 = value.get<double>();
    else if (key == "epsilon") c.epsilon = value.get<double>();
    else if (key == "warmup_fraction") c.warmup_fraction = value.get<double>();
    else if (key == "clip_norm") c.clip_norm = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "probe") c.probe = probe_spec_from_json(value.dump());
    else throw std::invalid_argument("train config: unknown field \"" + key + "\"");
  }
  c.validate();
  return c;
}

double lr_at_step(double base, int step, int total_steps, double warmup_fraction) {
  if (total_steps < 1) throw std::invalid_argument("lr_at_step: total_steps must be >= 1");
  if (step < 0 || step >= total_steps) throw std::invalid_argument("lr_at_step: step outside [0, total)");
  const int warmup = std::max(1, static_cast<int>(static_cast<double>(total_steps) * warmup_fraction));
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total_steps <= warmup) return base;
  return base * static_cast<double>(total_steps - 1 - step) / static_cast<double>(total_steps - warmup);
}

TrainResult train(const ModelConfig& model_config, const EncodedDataset& train_data,
                  const TrainConfig& config) {
  model_config.validate();
  config.validate();
  validate_probe(config.probe, model_config);
  if (train_data.encoded.empty()) throw std::invalid_argument("train: dataset has no encoded examples");

  Rng root(config.seed);
  Rng init_rng = root.fork(0);
  Rng shuffle_rng = root.fork(1);
  Rng dropout_rng = root.fork(2);

  TrainResult result{Model::init(model_config, init_rng), {}};
  Model& model = result.model;

  std::vector<MaskSpec> train_masks;
  for (const MaskSpec& m : config.probe.masks)
    if (m.phase == MaskPhase::Train) train_masks.push_back(m);

  const int n = static_cast<int>(train_data.encoded.size());
  const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = config.epochs * steps_per_epoch;

  // Adam moments, aligned with the parameter registry.
  std::vector<std::vector<double>> m1, m2;
  for (const auto& [name, tensor] : model.params()) {
    m1.emplace_back(tensor.size(), 0.0);
    m2.emplace_back(tensor.size(), 0.0);
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int begin = 0; begin < n; begin += config.batch_size, ++step) {
      const int batch = std::min(config.batch_size, n - begin);
      for (auto& [name, tensor] : model.params()) {
        tensor.ensure_grad();
        tensor.zero_grad();
      }
      Tape tape;
      const auto bound = bind_trainable(tape, model);
      ForwardOptions fwd;
      fwd.masks = train_masks;
      fwd.dropout = model_config.dropout;
      fwd.rng = &dropout_rng;
      Value total{};
      for (int i = 0; i < batch; ++i) {
        const EncodedExample& ex = train_data.encoded[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + i)])];
        const SpanGraph graph = build_span_graph(tape, bound, model_config, ex, fwd);
        const Value loss = span_loss(tape, graph, ex.gold_start, ex.gold_end);
        total = total.valid() ? tape.add(total, loss) : loss;
      }
      const Value batch_loss = tape.scale(total, 1.0 / static_cast<double>(batch));
      const double loss_value = tape.value(batch_loss).at(static_cast<std::size_t>(0));
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train: loss diverged (not finite) at step " + std::to_string(step));
      tape.backward(batch_loss);

      if (config.clip_norm > 0.0) {
        double sq = 0.0;
        for (auto& [name, tensor] : model.params()) {
          const double* g = tensor.grad();
          for (std::size_t i = 0; i < tensor.size(); ++i) sq += g[i] * g[i];
        }
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm) {
          const double scale = config.clip_norm / norm;
          for (auto& [name, tensor] : model.params()) {
            double* g = tensor.grad();
            for (std::size_t i = 0; i < tensor.size(); ++i) g[i] *= scale;
          }
        }
      }

      const double lr = lr_at_step(config.learning_rate, step, total_steps, config.warmup_fraction);
      const double t = static_cast<double>(step + 1);
      const double bias1 = 1.0 - std::pow(config.beta1, t);
      const double bias2 = 1.0 - std::pow(config.beta2, t);
      std::size_t pi = 0;
      for (auto& [name, tensor] : model.params()) {
        double* w = tensor.data();
        const double* g = tensor.grad();
        std::vector<double>& mm = m1[pi];
        std::vector<double>& vv = m2[pi];
        for (std::size_t i = 0; i < tensor.size(); ++i) {
          mm[i] = config.beta1 * mm[i] + (1.0 - config.beta1) * g[i];
          vv[i] = config.beta2 * vv[i] + (1.0 - config.beta2) * g[i] * g[i];
          const double mhat = mm[i] / bias1;
          const double vhat = vv[i] / bias2;
          w[i] -= lr * mhat / (std::sqrt(vhat) + config.epsilon);
        }
        ++pi;
      }
      result.curve.push_back(TrainStep{step, loss_value, lr});
    }
  }
  return result;
}

std::pair<double, double> mean_and_sample_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size() - 1))};
}

MultiSeedResult multi_seed_run(const ModelConfig& model_config, const EncodedDataset& train_data,
                               const std::vector<Example>& dev_examples,
                               const EncodedDataset& dev_data, const TrainConfig& config,
                               const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("multi_seed_run: at least one seed required");
  MultiSeedResult out;
  out.seeds = seeds;
  std::vector<double> ems, f1s;
  for (std::uint64_t seed : seeds) {
    TrainConfig per_seed = config;
    per_seed.seed = seed;
    out.runs.push_back(train(model_config, train_data, per_seed));
    EvalOptions eval_options;
    eval_options.probe = &per_seed.probe;
    eval_options.seed = seed;
    MetricReport report = evaluate(out.runs.back().model, dev_examples, dev_data, eval_options);
    ems.push_back(report.em);
    f1s.push_back(report.f1);
    out.reports.push_back(std::move(report));
  }
  std::tie(out.em_mean, out.em_std) = mean_and_sample_std(ems);
  std::tie(out.f1_mean, out.f1_std) = mean_and_sample_std(f1s);
  return out;
}

}  // namespace zoneprobe
