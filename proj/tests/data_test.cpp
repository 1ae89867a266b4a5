#include "zoneprobe/data.hpp"

#include <set>
#include <string>

#include "doctest.h"

using namespace zoneprobe;

TEST_CASE("word tokenization lowercases and keeps byte offsets") {
  const auto tokens = tokenize("Where is the Pen?", TokenMode::Word);
  REQUIRE(tokens.size() == 5);
  CHECK(tokens[0].text == "where");
  CHECK(tokens[3].text == "pen");
  CHECK(tokens[4].text == "?");
  CHECK(tokens[3].begin == 13);
  CHECK(tokens[3].end == 16);
  // Offsets index the original string, so the raw surface form comes back.
  CHECK(span_text("Where is the Pen?", tokens, 3, 3) == "Pen");
  CHECK(span_text("Where is the Pen?", tokens, 0, 3) == "Where is the Pen");
}

TEST_CASE("char tokenization walks codepoints without case folding") {
  const auto tokens = tokenize("Ab ñ!", TokenMode::Char);
  REQUIRE(tokens.size() == 4);  // space skipped
  CHECK(tokens[0].text == "A");
  CHECK(tokens[1].text == "b");
  CHECK(tokens[2].text == "ñ");  // two bytes, one token
  CHECK(tokens[2].end - tokens[2].begin == 2);
  CHECK(tokens[3].text == "!");
  CHECK(span_text("Ab ñ!", tokens, 2, 3) == "ñ!");
}

TEST_CASE("span_text validates its indices") {
  const auto tokens = tokenize("a b", TokenMode::Word);
  CHECK_THROWS(span_text("a b", tokens, 1, 0));
  CHECK_THROWS(span_text("a b", tokens, 0, 2));
  CHECK_THROWS(span_text("a b", tokens, -1, 0));
}

TEST_CASE("dataset JSON round-trips and errors cite the offending qa id") {
  Example ex;
  ex.id = "case-1";
  ex.passage = "The red pen sits on the desk.";
  ex.question = "Where is the pen?";
  ex.golds.push_back({"on the desk", 17});
  ex.subset = "dev";
  const std::string json_text = dataset_to_json({ex});
  const std::vector<Example> back = parse_dataset(json_text, "dev");
  REQUIRE(back.size() == 1);
  CHECK(back[0].id == "case-1");
  CHECK(back[0].passage == ex.passage);
  CHECK(back[0].golds[0].text == "on the desk");
  CHECK(back[0].golds[0].answer_start == 17);

  // A gold that does not match the context verbatim at its offset must fail
  // loudly, naming the qa.
  const std::string bad = R"({"version":"v1","data":[{"paragraphs":[{"context":"abc def",
    "qas":[{"id":"broken-qa","question":"what?","answers":[{"text":"zzz","answer_start":0}]}]}]}]})";
  CHECK_THROWS_WITH_AS(parse_dataset(bad, "dev"), doctest::Contains("broken-qa"),
                       std::invalid_argument);
  CHECK_THROWS(parse_dataset("not json", "dev"));
}

TEST_CASE("vocabulary orders by count then token and maps unknowns to [UNK]") {
  Example ex;
  ex.passage = "b b b a a c";
  ex.question = "a";
  const Vocabulary v = Vocabulary::build({ex});
  CHECK(v.size() == 4 + 3);
  // "a" and "b" tie at count 3 (question tokens count too); ties break
  // by token order, so "a" lands first.
  CHECK(v.id_of("a") == 4);
  CHECK(v.id_of("b") == 5);
  CHECK(v.id_of("c") == 6);
  CHECK(v.id_of("zz") == Vocabulary::kUnk);
  CHECK(v.token_of(Vocabulary::kCls) == "[CLS]");

  const Vocabulary floored = Vocabulary::build({ex}, 3);
  CHECK(floored.size() == 4 + 2);  // "c" drops below the floor
  CHECK(floored.id_of("c") == Vocabulary::kUnk);

  const Vocabulary copy = Vocabulary::from_tokens(v.tokens(), v.frequency_floor());
  CHECK(copy == v);
}

TEST_CASE("align_answer maps byte offsets to covering token range") {
  const std::string passage = "The red pen sits on the desk.";
  const auto tokens = tokenize(passage, TokenMode::Word);
  const auto [first, last] = align_answer(tokens, {"on the desk", 17});
  CHECK(span_text(passage, tokens, first, last) == "on the desk");
  // Mid-token offsets still land on the covering tokens.
  const auto [f2, l2] = align_answer(tokens, {"ed pen", 5});
  CHECK(tokens[static_cast<std::size_t>(f2)].text == "red");
  CHECK(tokens[static_cast<std::size_t>(l2)].text == "pen");
  CHECK_THROWS(align_answer(tokens, {"pen", 400}));
}

TEST_CASE("question types come from the first interrogative word") {
  CHECK(classify_question_type("Where is the pen?") == "where");
  CHECK(classify_question_type("And how many coins?") == "how");
  CHECK(classify_question_type("Name the object.") == "other");
}

TEST_CASE("encode_dataset lays out ids, segments, and gold span") {
  Example ex;
  ex.id = "enc-1";
  ex.passage = "The red pen sits on the desk.";
  ex.question = "Where is the pen?";
  ex.golds.push_back({"on the desk", 17});
  const Vocabulary vocab = Vocabulary::build({ex});
  const EncodedDataset ds = encode_dataset({ex}, vocab, 32);
  REQUIRE(ds.encoded.size() == 1);
  CHECK(ds.dropped.empty());
  const EncodedExample& enc = ds.encoded[0];
  CHECK(enc.layout.question_len() == 5);
  CHECK(enc.layout.passage_len() == 8);
  CHECK(enc.ids[0] == Vocabulary::kCls);
  CHECK(enc.ids[static_cast<std::size_t>(enc.layout.mid_sep)] == Vocabulary::kSep);
  CHECK(enc.ids[static_cast<std::size_t>(enc.layout.end_sep)] == Vocabulary::kSep);
  CHECK(enc.segments[1] == 0);
  CHECK(enc.segments[static_cast<std::size_t>(enc.layout.p_begin)] == 1);
  CHECK(enc.qtype == "where");
  // Gold span in padded coordinates: "on the desk" are passage tokens 4..6.
  CHECK(enc.gold_start == enc.layout.p_begin + 4);
  CHECK(enc.gold_end == enc.layout.p_begin + 6);
  CHECK(span_text(ex.passage, enc.passage_tokens, 4, 6) == "on the desk");

  // Truncation that removes the gold answer drops the example.
  const EncodedDataset tight = encode_dataset({ex}, vocab, 12);
  CHECK(tight.encoded.empty());
  REQUIRE(tight.dropped.size() == 1);
  CHECK(tight.dropped[0] == "enc-1");
}

TEST_CASE("generator is deterministic and seed-sensitive") {
  GeneratorConfig config = default_generator_config();
  config.train_count = 30;
  config.dev_count = 10;
  config.challenge_count = 5;
  const SyntheticDataset a = generate_synthetic(config, 7);
  const SyntheticDataset b = generate_synthetic(config, 7);
  const SyntheticDataset c = generate_synthetic(config, 8);
  CHECK(a.train == b.train);
  CHECK(a.dev == b.dev);
  CHECK(a.challenge == b.challenge);
  CHECK(a.train != c.train);
}

TEST_CASE("generated answers are verbatim substrings at their offsets") {
  GeneratorConfig config = default_generator_config();
  config.train_count = 50;
  config.dev_count = 20;
  config.challenge_count = 10;
  const SyntheticDataset ds = generate_synthetic(config, 11);
  const auto check_split = [](const std::vector<Example>& split, const std::string& tag) {
    for (const Example& ex : split) {
      CHECK(ex.subset == tag);
      REQUIRE(!ex.golds.empty());
      const GoldAnswer& gold = ex.golds[0];
      REQUIRE(gold.answer_start >= 0);
      REQUIRE(gold.answer_start + gold.text.size() <= ex.passage.size());
      CHECK(ex.passage.substr(static_cast<std::size_t>(gold.answer_start), gold.text.size()) ==
            gold.text);
    }
  };
  check_split(ds.train, "train");
  check_split(ds.dev, "dev");
  check_split(ds.challenge, "challenge");
}

TEST_CASE("splits are disjoint by surface form and sized as configured") {
  GeneratorConfig config = default_generator_config();
  config.train_count = 40;
  config.dev_count = 15;
  config.challenge_count = 8;
  const SyntheticDataset ds = generate_synthetic(config, 3);
  CHECK(ds.train.size() == 40);
  CHECK(ds.dev.size() == 15);
  CHECK(ds.challenge.size() == 8);
  std::set<std::string> seen;
  const auto scan = [&](const std::vector<Example>& split) {
    for (const Example& ex : split) {
      const std::string key = ex.passage + "\x1f" + ex.question;
      CHECK(seen.insert(key).second);
    }
  };
  scan(ds.train);
  scan(ds.dev);
  scan(ds.challenge);
}

TEST_CASE("every generated passage carries a same-kind distractor") {
  GeneratorConfig config = default_generator_config();
  config.train_count = 60;
  config.dev_count = 0;
  config.challenge_count = 0;
  const SyntheticDataset ds = generate_synthetic(config, 5);
  for (const Example& ex : ds.train) {
    // The answer string must occur exactly once; a same-kind distractor with
    // different slot values can never duplicate it.
    const std::string& text = ex.golds[0].text;
    std::size_t hits = 0;
    for (std::size_t at = ex.passage.find(text); at != std::string::npos;
         at = ex.passage.find(text, at + 1))
      ++hits;
    CHECK(hits == 1);
    // At least two sentences share the fact kind: the target's sentence plus
    // the distractor's. Count sentence separators as a cheap proxy.
    CHECK(std::count(ex.passage.begin(), ex.passage.end(), '.') >= 2);
  }
}

TEST_CASE("challenge questions hop through a person") {
  GeneratorConfig config = default_generator_config();
  config.train_count = 0;
  config.dev_count = 0;
  config.challenge_count = 12;
  const SyntheticDataset ds = generate_synthetic(config, 9);
  CHECK(ds.challenge.size() == 12);
  for (const Example& ex : ds.challenge) {
    CHECK(ex.question.rfind("Where is the", 0) == 0);
    CHECK(ex.golds[0].text.rfind("in the", 0) == 0);
  }
}

TEST_CASE("generator validates its configuration") {
  GeneratorConfig config = default_generator_config();
  config.types = {"maybe"};
  CHECK_THROWS(generate_synthetic(config, 1));
  config = default_generator_config();
  config.min_facts = 1;
  CHECK_THROWS(generate_synthetic(config, 1));
  config = default_generator_config();
  config.objects = {"pen"};  // too small for max_facts distinct draws
  CHECK_THROWS(generate_synthetic(config, 1));
}

TEST_CASE("generator config JSON round-trips") {
  GeneratorConfig config = default_generator_config();
  config.train_count = 123;
  config.types = {"where", "why"};
  const GeneratorConfig back = generator_config_from_json(generator_config_to_json(config));
  CHECK(back.train_count == 123);
  CHECK(back.types == config.types);
  CHECK(back.objects == config.objects);
  CHECK_THROWS(generator_config_from_json("{\"bogus_field\": 1}"));
}

TEST_CASE("the discussion example reads as advertised") {
  const Example ex = discussion_example();
  CHECK(ex.passage == "There is a red book on the desk and a green pen on the chair.");
  CHECK(ex.question == "Where is the pen?");
  REQUIRE(ex.golds.size() == 1);
  CHECK(ex.golds[0].text == "on the chair");
  CHECK(ex.passage.substr(static_cast<std::size_t>(ex.golds[0].answer_start), 12) == "on the chair");
}
