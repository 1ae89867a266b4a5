#include "zoneprobe/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "doctest.h"
#include "grad_check.hpp"
#include "zoneprobe/data.hpp"
#include "zoneprobe/tensor.hpp"
#include "zoneprobe/zones.hpp"

using namespace zoneprobe;
using zoneprobe::testutil::max_rel_grad_error;

namespace {

// One deterministic example small enough for finite differences: the
// encoded layout comes out to 12 positions (4 question + 5 passage + 3).
EncodedExample tiny_example(Vocabulary* vocab_out = nullptr) {
  Example ex;
  ex.id = "tiny";
  ex.passage = "the pen sits on desk";
  ex.question = "where is the pen";
  ex.golds.push_back({"on desk", 13});
  const Vocabulary vocab = Vocabulary::build({ex});
  if (vocab_out != nullptr) *vocab_out = vocab;
  const EncodedDataset ds = encode_dataset({ex}, vocab, 16);
  REQUIRE(ds.encoded.size() == 1);
  return ds.encoded[0];
}

ModelConfig tiny_config(const Vocabulary& vocab) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.vocab_size = static_cast<int>(vocab.size());
  c.max_len = 16;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST_CASE("full model gradient check against finite differences") {
  Vocabulary vocab;
  const EncodedExample enc = tiny_example(&vocab);
  CHECK(enc.layout.used == 12);

  Rng rng(31);
  Model model = Model::init(tiny_config(vocab), rng);
  std::vector<Tensor*> params;
  for (auto& [name, tensor] : model.params()) params.push_back(&tensor);

  const auto run = [&](bool backward) {
    Tape tape;
    const auto bound = bind_trainable(tape, model);
    const SpanGraph graph = build_span_graph(tape, bound, model.config(), enc, {});
    const Value loss = span_loss(tape, graph, enc.gold_start, enc.gold_end);
    if (backward) tape.backward(loss);
    return tape.value(loss).data()[0];
  };
  CHECK(max_rel_grad_error(params, run) < 1e-3);
}

TEST_CASE("forward is deterministic and attention rows are stochastic") {
  Vocabulary vocab;
  const EncodedExample enc = tiny_example(&vocab);
  Rng rng(5);
  const Model model = Model::init(tiny_config(vocab), rng);

  AttentionRecord rec;
  ForwardOptions options;
  options.record = &rec;
  const SpanLogits a = forward(model, enc, options);
  const SpanLogits b = forward(model, enc);
  CHECK(a.start == b.start);
  CHECK(a.end == b.end);
  CHECK(static_cast<int>(a.start.size()) == enc.layout.used);

  REQUIRE(rec.pre.size() == 4);   // 2 layers x 2 heads
  REQUIRE(rec.post.size() == 4);
  for (const Tensor& post : rec.post) {
    REQUIRE(post.rows() == enc.layout.used);
    for (int r = 0; r < post.rows(); ++r) {
      double sum = 0.0;
      for (int c = 0; c < post.cols(); ++c) sum += post.data()[static_cast<std::size_t>(r * post.cols() + c)];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("masking one head leaves other heads and earlier layers untouched") {
  Vocabulary vocab;
  const EncodedExample enc = tiny_example(&vocab);
  Rng rng(6);
  const Model model = Model::init(tiny_config(vocab), rng);

  AttentionRecord base;
  ForwardOptions plain;
  plain.record = &base;
  forward(model, enc, plain);

  MaskSpec spec;
  spec.kind = MaskKind::Zone;
  spec.zone = Zone::P2Q;
  spec.layers = IndexSelector::only({1});
  spec.heads = IndexSelector::only({1});
  spec.phase = MaskPhase::Decode;
  AttentionRecord masked;
  ForwardOptions probed;
  probed.masks = {spec};
  probed.record = &masked;
  forward(model, enc, probed);

  // Pre-softmax maps of layer 0 (both heads) and layer 1 head 0 match the
  // baseline bitwise; the targeted head's post map loses all P2Q mass.
  for (int slot = 0; slot < 3; ++slot) {
    const Tensor& a = base.pre[static_cast<std::size_t>(slot)];
    const Tensor& b = masked.pre[static_cast<std::size_t>(slot)];
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }
  const Tensor& post = masked.post[3];
  const BoolMatrix zone = static_mask(enc.layout, spec).top_left(post.rows());
  double mass = 0.0;
  for (int r = 0; r < post.rows(); ++r)
    for (int c = 0; c < post.cols(); ++c)
      if (zone.at(r, c)) mass += post.data()[static_cast<std::size_t>(r * post.cols() + c)];
  CHECK(mass < 1e-10);
}

TEST_CASE("decode_span matches brute force and respects its constraints") {
  Vocabulary vocab;
  const EncodedExample enc = tiny_example(&vocab);
  const InputLayout& layout = enc.layout;

  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    SpanLogits logits;
    logits.start.resize(static_cast<std::size_t>(layout.used));
    logits.end.resize(static_cast<std::size_t>(layout.used));
    for (double& v : logits.start) v = rng.normal(0.0, 2.0);
    for (double& v : logits.end) v = rng.normal(0.0, 2.0);
    const int max_len = 1 + static_cast<int>(rng.below(6));

    double best = -std::numeric_limits<double>::infinity();
    std::pair<int, int> want{layout.p_begin, layout.p_begin};
    bool found = false;
    for (int s = layout.p_begin; s <= layout.p_end; ++s)
      for (int e = s; e <= layout.p_end && e - s < max_len; ++e) {
        const double score = logits.start[static_cast<std::size_t>(s)] + logits.end[static_cast<std::size_t>(e)];
        if (!found || score > best) {
          best = score;
          want = {s, e};
          found = true;
        }
      }
    const auto got = decode_span(logits, layout, max_len);
    CHECK(got == want);
    CHECK(got.first >= layout.p_begin);
    CHECK(got.second <= layout.p_end);
    CHECK(got.first <= got.second);
  }
}

TEST_CASE("decode_span breaks ties by earliest start then shortest span") {
  Vocabulary vocab;
  const EncodedExample enc = tiny_example(&vocab);
  SpanLogits logits;
  logits.start.assign(static_cast<std::size_t>(enc.layout.used), 0.0);
  logits.end.assign(static_cast<std::size_t>(enc.layout.used), 0.0);
  const auto got = decode_span(logits, enc.layout, 5);
  CHECK(got.first == enc.layout.p_begin);
  CHECK(got.second == enc.layout.p_begin);
}

TEST_CASE("checkpoint round-trips bitwise") {
  Vocabulary vocab;
  const EncodedExample enc = tiny_example(&vocab);
  Rng rng(23);
  Model model = Model::init(tiny_config(vocab), rng);

  const std::string path = "model_test_checkpoint.zpck";
  save_checkpoint(path, model, vocab);
  const Checkpoint back = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(back.model.config() == model.config());
  CHECK(back.vocab == vocab);
  REQUIRE(back.model.params().size() == model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    CHECK(back.model.params()[i].first == model.params()[i].first);
    const Tensor& a = model.params()[i].second;
    const Tensor& b = back.model.params()[i].second;
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a.data()[j] == b.data()[j]);
  }

  const SpanLogits x = forward(model, enc);
  const SpanLogits y = forward(back.model, enc);
  CHECK(x.start == y.start);
  CHECK(x.end == y.end);

  CHECK_THROWS(load_checkpoint("no_such_file.zpck"));
}

TEST_CASE("probe validation rejects out-of-range selectors") {
  Vocabulary vocab;
  tiny_example(&vocab);
  const ModelConfig config = tiny_config(vocab);

  ProbeSpec ok;
  MaskSpec m;
  m.kind = MaskKind::Zone;
  m.zone = Zone::Q2P;
  m.layers = IndexSelector::only({0, 1});
  m.heads = IndexSelector::only({0});
  ok.masks = {m};
  CHECK_NOTHROW(validate_probe(ok, config));

  ProbeSpec bad_layer = ok;
  bad_layer.masks[0].layers = IndexSelector::only({2});
  CHECK_THROWS(validate_probe(bad_layer, config));

  ProbeSpec bad_head = ok;
  bad_head.masks[0].heads = IndexSelector::only({5});
  CHECK_THROWS(validate_probe(bad_head, config));

  ProbeSpec bad_k = ok;
  bad_k.masks[0].kind = MaskKind::TopK;
  bad_k.masks[0].k = 0;
  CHECK_THROWS(validate_probe(bad_k, config));
}

TEST_CASE("model config validates and round-trips through JSON") {
  ModelConfig c;
  c.vocab_size = 12;
  CHECK_NOTHROW(c.validate());

  const ModelConfig back = model_config_from_json(model_config_to_json(c));
  CHECK(back == c);

  ModelConfig odd = c;
  odd.d_model = 10;  // not divisible by n_heads=4
  CHECK_THROWS(odd.validate());
  CHECK_THROWS(model_config_from_json("{\"bogus\": 1}"));
  CHECK_THROWS(model_config_from_json("not json"));
}
