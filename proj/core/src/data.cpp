#include "zoneprobe/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "zoneprobe/rng.hpp"

namespace zoneprobe {

using nlohmann::json;

std::string token_mode_name(TokenMode mode) { return mode == TokenMode::Word ? "word" : "char"; }

TokenMode token_mode_from_name(const std::string& name) {
  if (name == "word") return TokenMode::Word;
  if (name == "char") return TokenMode::Char;
  throw std::invalid_argument("mode: expected word|char, got \"" + name + "\"");
}

namespace {

bool is_space_byte(unsigned char b) { return std::isspace(b) != 0; }
bool is_punct_byte(unsigned char b) { return b < 0x80 && std::ispunct(b) != 0; }

std::string lowercase_ascii(std::string s) {
  for (char& c : s)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

int utf8_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead & 0xE0) == 0xC0) return 2;
  if ((lead & 0xF0) == 0xE0) return 3;
  if ((lead & 0xF8) == 0xF0) return 4;
  return 1;  // invalid byte: advance one to stay total
}

}  // namespace

std::vector<TokenSpan> tokenize(const std::string& text, TokenMode mode) {
  std::vector<TokenSpan> tokens;
  const int n = static_cast<int>(text.size());
  if (mode == TokenMode::Char) {
    int i = 0;
    while (i < n) {
      const int len = std::min(utf8_len(static_cast<unsigned char>(text[static_cast<std::size_t>(i)])), n - i);
      const unsigned char b = static_cast<unsigned char>(text[static_cast<std::size_t>(i)]);
      if (!(b < 0x80 && is_space_byte(b)))
        tokens.push_back(TokenSpan{text.substr(static_cast<std::size_t>(i), static_cast<std::size_t>(len)), i, i + len});
      i += len;
    }
    return tokens;
  }
  int i = 0;
  while (i < n) {
    const unsigned char b = static_cast<unsigned char>(text[static_cast<std::size_t>(i)]);
    if (b < 0x80 && is_space_byte(b)) {
      ++i;
      continue;
    }
    if (is_punct_byte(b)) {
      tokens.push_back(TokenSpan{std::string(1, static_cast<char>(b)), i, i + 1});
      ++i;
      continue;
    }
    const int begin = i;
    while (i < n) {
      const unsigned char c = static_cast<unsigned char>(text[static_cast<std::size_t>(i)]);
      if (c < 0x80 && (is_space_byte(c) || is_punct_byte(c))) break;
      i += std::min(utf8_len(c), n - i);
    }
    tokens.push_back(TokenSpan{lowercase_ascii(text.substr(static_cast<std::size_t>(begin), static_cast<std::size_t>(i - begin))),
                               begin, i});
  }
  return tokens;
}

std::string span_text(const std::string& source, const std::vector<TokenSpan>& tokens, int first,
                      int last) {
  if (first < 0 || last < first || last >= static_cast<int>(tokens.size()))
    throw std::invalid_argument("span_text: token range out of bounds");
  const int begin = tokens[static_cast<std::size_t>(first)].begin;
  const int end = tokens[static_cast<std::size_t>(last)].end;
  return source.substr(static_cast<std::size_t>(begin), static_cast<std::size_t>(end - begin));
}

namespace {

TokenMode mode_from_dataset_json(const json& j) {
  if (j.contains("mode")) return token_mode_from_name(j["mode"].get<std::string>());
  return TokenMode::Word;
}

}  // namespace

std::vector<Example> parse_dataset(const std::string& json_text, const std::string& default_subset) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("dataset: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("data") || !j["data"].is_array())
    throw std::invalid_argument("dataset: expected an object with a \"data\" array");
  const TokenMode mode = mode_from_dataset_json(j);
  std::vector<Example> examples;
  for (const json& entry : j["data"]) {
    if (!entry.contains("paragraphs") || !entry["paragraphs"].is_array())
      throw std::invalid_argument("dataset: data entry lacks a \"paragraphs\" array");
    for (const json& para : entry["paragraphs"]) {
      if (!para.contains("context") || !para["context"].is_string())
        throw std::invalid_argument("dataset: paragraph lacks a string \"context\"");
      const std::string context = para["context"].get<std::string>();
      if (!para.contains("qas") || !para["qas"].is_array())
        throw std::invalid_argument("dataset: paragraph lacks a \"qas\" array");
      for (const json& qa : para["qas"]) {
        const std::string id = qa.value("id", "");
        if (id.empty()) throw std::invalid_argument("dataset: qa without an \"id\"");
        if (!qa.contains("question") || !qa["question"].is_string())
          throw std::invalid_argument("dataset: qa \"" + id + "\" lacks a string \"question\"");
        if (!qa.contains("answers") || !qa["answers"].is_array() || qa["answers"].empty())
          throw std::invalid_argument("dataset: qa \"" + id + "\" lacks a non-empty \"answers\" array");
        Example ex;
        ex.id = id;
        ex.passage = context;
        ex.question = qa["question"].get<std::string>();
        ex.subset = qa.value("subset", default_subset);
        ex.mode = mode;
        for (const json& ans : qa["answers"]) {
          if (!ans.contains("text") || !ans["text"].is_string() || !ans.contains("answer_start") ||
              !ans["answer_start"].is_number_integer())
            throw std::invalid_argument("dataset: qa \"" + id + "\" has an answer without text/answer_start");
          GoldAnswer gold{ans["text"].get<std::string>(), ans["answer_start"].get<int>()};
          if (gold.answer_start < 0 ||
              static_cast<std::size_t>(gold.answer_start) + gold.text.size() > context.size() ||
              context.compare(static_cast<std::size_t>(gold.answer_start), gold.text.size(), gold.text) != 0)
            throw std::invalid_argument("dataset: qa \"" + id + "\" answer_start does not point at the answer text");
          ex.golds.push_back(std::move(gold));
        }
        examples.push_back(std::move(ex));
      }
    }
  }
  return examples;
}

std::string dataset_to_json(const std::vector<Example>& examples) {
  json paragraphs = json::array();
  for (const Example& ex : examples) {
    json answers = json::array();
    for (const GoldAnswer& g : ex.golds) answers.push_back({{"text", g.text}, {"answer_start", g.answer_start}});
    json qa = {{"id", ex.id}, {"question", ex.question}, {"answers", answers}, {"subset", ex.subset}};
    paragraphs.push_back({{"context", ex.passage}, {"qas", json::array({qa})}});
  }
  json j = {{"version", "1.1"},
            {"mode", examples.empty() ? "word" : token_mode_name(examples.front().mode)},
            {"data", json::array({{{"title", "dataset"}, {"paragraphs", paragraphs}}})}};
  return j.dump(1);
}

namespace {

std::string subset_from_filename(const std::string& path) {
  std::string stem = path;
  const auto slash = stem.find_last_of('/');
  if (slash != std::string::npos) stem = stem.substr(slash + 1);
  if (stem.find("challenge") != std::string::npos) return "challenge";
  if (stem.find("dev") != std::string::npos) return "dev";
  return "train";
}

}  // namespace

std::vector<Example> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), subset_from_filename(path));
}

void save_dataset(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot write \"" + path + "\"");
  out << dataset_to_json(examples) << '\n';
  if (!out) throw std::runtime_error("dataset: write to \"" + path + "\" failed");
}

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  return specials;
}

}  // namespace

Vocabulary::Vocabulary() : tokens_(special_tokens()) {
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) ids_[tokens_[static_cast<std::size_t>(i)]] = i;
}

Vocabulary Vocabulary::build(const std::vector<Example>& examples, int frequency_floor) {
  if (frequency_floor < 1) throw std::invalid_argument("vocabulary: frequency floor must be >= 1");
  std::unordered_map<std::string, int> counts;
  for (const Example& ex : examples) {
    for (const TokenSpan& t : tokenize(ex.question, ex.mode)) ++counts[t.text];
    for (const TokenSpan& t : tokenize(ex.passage, ex.mode)) ++counts[t.text];
  }
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [token, count] : counts)
    if (count >= frequency_floor) kept.emplace_back(token, count);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  v.floor_ = frequency_floor;
  for (auto& [token, count] : kept) {
    v.ids_[token] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(token);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> ordered, int frequency_floor) {
  if (ordered.size() < special_tokens().size() ||
      !std::equal(special_tokens().begin(), special_tokens().end(), ordered.begin()))
    throw std::invalid_argument("vocabulary: token list must start with [PAD] [UNK] [CLS] [SEP]");
  Vocabulary v;
  v.floor_ = frequency_floor;
  v.tokens_ = std::move(ordered);
  v.ids_.clear();
  for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) {
    if (v.ids_.count(v.tokens_[static_cast<std::size_t>(i)]))
      throw std::invalid_argument("vocabulary: duplicate token \"" + v.tokens_[static_cast<std::size_t>(i)] + "\"");
    v.ids_[v.tokens_[static_cast<std::size_t>(i)]] = i;
  }
  return v;
}

int Vocabulary::id_of(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) throw std::invalid_argument("vocabulary: id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::pair<int, int> align_answer(const std::vector<TokenSpan>& passage_tokens,
                                 const GoldAnswer& gold) {
  const int gs = gold.answer_start;
  const int ge = gs + static_cast<int>(gold.text.size());
  int first = -1, last = -1;
  for (int i = 0; i < static_cast<int>(passage_tokens.size()); ++i) {
    const TokenSpan& t = passage_tokens[static_cast<std::size_t>(i)];
    if (first < 0 && t.end > gs) first = i;
    if (t.begin < ge) last = i;
  }
  if (first < 0 || last < first || passage_tokens[static_cast<std::size_t>(first)].begin >= ge)
    throw std::runtime_error("align_answer: gold \"" + gold.text + "\" lies outside the tokenized passage");
  return {first, last};
}

std::string classify_question_type(const std::string& question) {
  static const std::unordered_set<std::string> kinds = {"what", "how", "who", "when",
                                                        "which", "where", "why"};
  for (const TokenSpan& t : tokenize(question, TokenMode::Word))
    if (kinds.count(t.text)) return t.text;
  return "other";
}

EncodedDataset encode_dataset(const std::vector<Example>& examples, const Vocabulary& vocab,
                              int max_length) {
  if (max_length < 5) throw std::invalid_argument("encode_dataset: max_length must be >= 5");
  EncodedDataset out;
  out.max_length = max_length;
  for (int idx = 0; idx < static_cast<int>(examples.size()); ++idx) {
    const Example& ex = examples[static_cast<std::size_t>(idx)];
    const std::vector<TokenSpan> q_tokens = tokenize(ex.question, ex.mode);
    const std::vector<TokenSpan> p_all = tokenize(ex.passage, ex.mode);
    if (q_tokens.empty() || p_all.empty()) {
      out.dropped.push_back(ex.id);
      continue;
    }
    InputLayout layout;
    try {
      layout = compute_layout(static_cast<int>(q_tokens.size()), static_cast<int>(p_all.size()), max_length);
    } catch (const std::invalid_argument&) {
      out.dropped.push_back(ex.id);
      continue;
    }
    std::vector<TokenSpan> p_tokens(p_all.begin(), p_all.begin() + layout.passage_len());
    int gold_start = -1, gold_end = -1;
    for (const GoldAnswer& gold : ex.golds) {
      try {
        const auto [s, e] = align_answer(p_tokens, gold);
        gold_start = layout.p_begin + s;
        gold_end = layout.p_begin + e;
        break;
      } catch (const std::runtime_error&) {
        continue;
      }
    }
    if (gold_start < 0) {
      out.dropped.push_back(ex.id);
      continue;
    }
    EncodedExample enc;
    enc.example_index = idx;
    enc.id = ex.id;
    enc.layout = layout;
    enc.gold_start = gold_start;
    enc.gold_end = gold_end;
    enc.qtype = classify_question_type(ex.question);
    enc.passage_tokens = std::move(p_tokens);
    enc.ids.assign(static_cast<std::size_t>(layout.total), Vocabulary::kPad);
    enc.segments.assign(static_cast<std::size_t>(layout.total), 0);
    enc.ids[static_cast<std::size_t>(layout.cls)] = Vocabulary::kCls;
    for (int i = 0; i < layout.question_len(); ++i)
      enc.ids[static_cast<std::size_t>(layout.q_begin + i)] = vocab.id_of(q_tokens[static_cast<std::size_t>(i)].text);
    enc.ids[static_cast<std::size_t>(layout.mid_sep)] = Vocabulary::kSep;
    for (int i = 0; i < layout.passage_len(); ++i) {
      enc.ids[static_cast<std::size_t>(layout.p_begin + i)] =
          vocab.id_of(enc.passage_tokens[static_cast<std::size_t>(i)].text);
      enc.segments[static_cast<std::size_t>(layout.p_begin + i)] = 1;
    }
    enc.ids[static_cast<std::size_t>(layout.end_sep)] = Vocabulary::kSep;
    enc.segments[static_cast<std::size_t>(layout.end_sep)] = 1;
    out.encoded.push_back(std::move(enc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation

namespace {

enum class FactKind { Location, Ownership, Purchase, Arrival, Count, Reason, PersonAt, ObjectWith };

struct Fact {
  FactKind kind{};
  int color = -1, object = -1, location = -1, person = -1, time = -1, number = -1, reason = -1;
  bool target = false;
};

// Draws distinct indices within one passage.
struct SlotPool {
  std::vector<int> order;
  std::size_t next = 0;

  SlotPool(int size, Rng& rng) {
    order.resize(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
  }
  int draw() {
    if (next >= order.size()) throw std::runtime_error("generator: lexicon exhausted within a passage");
    return order[next++];
  }
};

struct Pools {
  SlotPool colors, objects, locations, persons, times, numbers, reasons;
  Pools(const GeneratorConfig& c, Rng& rng)
      : colors(static_cast<int>(c.colors.size()), rng),
        objects(static_cast<int>(c.objects.size()), rng),
        locations(static_cast<int>(c.locations.size()), rng),
        persons(static_cast<int>(c.persons.size()), rng),
        times(static_cast<int>(c.times.size()), rng),
        numbers(static_cast<int>(c.numbers.size()), rng),
        reasons(static_cast<int>(c.reasons.size()), rng) {}
};

FactKind fact_kind_for_type(const std::string& type) {
  if (type == "where" || type == "which") return FactKind::Location;
  if (type == "who") return FactKind::Ownership;
  if (type == "what") return FactKind::Purchase;
  if (type == "when") return FactKind::Arrival;
  if (type == "how") return FactKind::Count;
  if (type == "why") return FactKind::Reason;
  throw std::invalid_argument("generator: unsupported question type \"" + type + "\"");
}

Fact make_fact(FactKind kind, Pools& pools) {
  Fact f;
  f.kind = kind;
  switch (kind) {
    case FactKind::Location:
      f.color = pools.colors.draw();
      f.object = pools.objects.draw();
      f.location = pools.locations.draw();
      break;
    case FactKind::Ownership:
      f.person = pools.persons.draw();
      f.color = pools.colors.draw();
      f.object = pools.objects.draw();
      break;
    case FactKind::Purchase:
      f.person = pools.persons.draw();
      f.color = pools.colors.draw();
      f.object = pools.objects.draw();
      break;
    case FactKind::Arrival:
      f.person = pools.persons.draw();
      f.location = pools.locations.draw();
      f.time = pools.times.draw();
      break;
    case FactKind::Count:
      f.number = pools.numbers.draw();
      f.object = pools.objects.draw();
      f.location = pools.locations.draw();
      break;
    case FactKind::Reason:
      f.person = pools.persons.draw();
      f.location = pools.locations.draw();
      f.reason = pools.reasons.draw();
      break;
    case FactKind::PersonAt:
      f.person = pools.persons.draw();
      f.location = pools.locations.draw();
      break;
    case FactKind::ObjectWith:
      f.color = pools.colors.draw();
      f.object = pools.objects.draw();
      break;  // person assigned by the caller
  }
  return f;
}

std::string render_fact(const Fact& f, const GeneratorConfig& c) {
  const auto color = [&] { return c.colors[static_cast<std::size_t>(f.color)]; };
  const auto object = [&] { return c.objects[static_cast<std::size_t>(f.object)]; };
  const auto location = [&] { return c.locations[static_cast<std::size_t>(f.location)]; };
  const auto person = [&] { return c.persons[static_cast<std::size_t>(f.person)]; };
  switch (f.kind) {
    case FactKind::Location:
      return "The " + color() + " " + object() + " is on the " + location() + ".";
    case FactKind::Ownership:
      return "The " + color() + " " + object() + " belongs to " + person() + ".";
    case FactKind::Purchase:
      return person() + " bought a " + color() + " " + object() + ".";
    case FactKind::Arrival:
      return person() + " arrived at the " + location() + " in the " +
             c.times[static_cast<std::size_t>(f.time)] + ".";
    case FactKind::Count:
      return "There are " + c.numbers[static_cast<std::size_t>(f.number)] + " " + object() +
             "s in the " + location() + ".";
    case FactKind::Reason:
      return person() + " stayed at the " + location() + " because of the " +
             c.reasons[static_cast<std::size_t>(f.reason)] + ".";
    case FactKind::PersonAt:
      return person() + " is in the " + location() + ".";
    case FactKind::ObjectWith:
      return "The " + color() + " " + object() + " is with " + person() + ".";
  }
  throw std::logic_error("render_fact: unknown kind");
}

struct QA {
  std::string question;
  std::string answer;
};

QA question_for(const std::string& type, const Fact& f, const GeneratorConfig& c) {
  const std::string color = f.color >= 0 ? c.colors[static_cast<std::size_t>(f.color)] : "";
  const std::string object = f.object >= 0 ? c.objects[static_cast<std::size_t>(f.object)] : "";
  const std::string location = f.location >= 0 ? c.locations[static_cast<std::size_t>(f.location)] : "";
  const std::string person = f.person >= 0 ? c.persons[static_cast<std::size_t>(f.person)] : "";
  if (type == "where") return {"Where is the " + color + " " + object + "?", "on the " + location};
  if (type == "who") return {"Who does the " + color + " " + object + " belong to?", person};
  if (type == "what") return {"What has " + person + " bought?", "a " + color + " " + object};
  if (type == "when")
    return {"When did " + person + " arrive?", "in the " + c.times[static_cast<std::size_t>(f.time)]};
  if (type == "which") return {"Which object is on the " + location + "?", color + " " + object};
  if (type == "how")
    return {"How many " + object + "s are in the " + location + "?",
            c.numbers[static_cast<std::size_t>(f.number)]};
  if (type == "why")
    return {"Why did " + person + " stay at the " + location + "?",
            "because of the " + c.reasons[static_cast<std::size_t>(f.reason)]};
  throw std::invalid_argument("generator: unsupported question type \"" + type + "\"");
}

Example assemble(const std::vector<Fact>& facts, const QA& qa, const GeneratorConfig& c) {
  Example ex;
  std::string passage;
  int answer_start = -1;
  for (const Fact& f : facts) {
    if (!passage.empty()) passage += ' ';
    const int sentence_begin = static_cast<int>(passage.size());
    const std::string sentence = render_fact(f, c);
    if (f.target) {
      const auto pos = sentence.find(qa.answer);
      if (pos == std::string::npos)
        throw std::logic_error("generator: answer \"" + qa.answer + "\" missing from its own sentence");
      answer_start = sentence_begin + static_cast<int>(pos);
    }
    passage += sentence;
  }
  ex.passage = std::move(passage);
  ex.question = qa.question;
  ex.golds.push_back(GoldAnswer{qa.answer, answer_start});
  return ex;
}

Example make_plain_example(const std::string& type, const GeneratorConfig& c, Rng& rng) {
  // Fact counts follow a halving distribution over [min_facts, max_facts]:
  // weight 2^-(k - min_facts), renormalised. Short passages dominate, which
  // is what lets span-to-question matching bootstrap within a small step
  // budget, while longer passages keep exercising the same circuit at full
  // distractor load.
  const int span = c.max_facts - c.min_facts + 1;
  int n_facts = c.max_facts;
  {
    const std::uint64_t total = (1ull << span) - 1;  // sum of 2^i, i < span
    std::uint64_t r = rng.below(total);
    std::uint64_t acc = 0;
    for (int k = 0; k < span; ++k) {
      acc += 1ull << (span - 1 - k);  // weight for count (min_facts + k)
      if (r < acc) {
        n_facts = c.min_facts + k;
        break;
      }
    }
  }
  Pools pools(c, rng);
  const FactKind kind = fact_kind_for_type(type);
  std::vector<Fact> facts;
  facts.push_back(make_fact(kind, pools));
  facts.front().target = true;
  facts.push_back(make_fact(kind, pools));  // same-kind distractor
  // Remaining facts come from the other kinds: the question then narrows the
  // candidates to the two same-kind sentences by answer type alone, and
  // telling those two apart requires matching the question's cue tokens.
  // Drawing fillers from foreign domains (arrivals, counts, reasons) keeps
  // their vocabulary disjoint from the candidates', so the narrowing stays
  // learnable and the distractor load falls on the matching step.
  constexpr FactKind kPlainKinds[] = {FactKind::Location, FactKind::Ownership,
                                      FactKind::Purchase, FactKind::Arrival,
                                      FactKind::Count,    FactKind::Reason};
  for (int i = 2; i < n_facts; ++i) {
    FactKind filler = kind;
    while (filler == kind)
      filler = kPlainKinds[rng.below(std::size(kPlainKinds))];
    facts.push_back(make_fact(filler, pools));
  }
  rng.shuffle(facts);
  const Fact* target = nullptr;
  for (const Fact& f : facts)
    if (f.target) target = &f;
  return assemble(facts, question_for(type, *target, c), c);
}

Example make_challenge_example(const GeneratorConfig& c, Rng& rng) {
  Pools pools(c, rng);
  Fact at_a = make_fact(FactKind::PersonAt, pools);
  Fact at_b = make_fact(FactKind::PersonAt, pools);
  Fact with_a = make_fact(FactKind::ObjectWith, pools);
  Fact with_b = make_fact(FactKind::ObjectWith, pools);
  with_a.person = at_a.person;
  with_b.person = at_b.person;
  at_a.target = true;  // the answer sentence: "{person} is in the {location}."
  std::vector<Fact> facts = {at_a, with_a, at_b, with_b};
  rng.shuffle(facts);
  QA qa{"Where is the " + c.colors[static_cast<std::size_t>(with_a.color)] + " " +
            c.objects[static_cast<std::size_t>(with_a.object)] + "?",
        "in the " + c.locations[static_cast<std::size_t>(at_a.location)]};
  return assemble(facts, qa, c);
}

void validate_generator_config(const GeneratorConfig& c) {
  if (c.types.empty()) throw std::invalid_argument("types: at least one question type required");
  for (const std::string& t : c.types) fact_kind_for_type(t);
  if (c.min_facts < 2) throw std::invalid_argument("min_facts: must be >= 2 (target plus distractor)");
  if (c.max_facts < c.min_facts) throw std::invalid_argument("max_facts: must be >= min_facts");
  if (c.train_count < 0 || c.dev_count < 0 || c.challenge_count < 0)
    throw std::invalid_argument("counts: must be non-negative");
  const auto check = [&](const char* name, const std::vector<std::string>& lex) {
    if (static_cast<int>(lex.size()) < c.max_facts)
      throw std::invalid_argument(std::string(name) + ": lexicon smaller than max_facts");
  };
  check("objects", c.objects);
  check("colors", c.colors);
  check("locations", c.locations);
  check("persons", c.persons);
  check("times", c.times);
  check("reasons", c.reasons);
  check("numbers", c.numbers);
}

std::string zero_padded(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

GeneratorConfig default_generator_config() {
  GeneratorConfig c;
  c.objects = {"pen", "book", "cup", "lamp", "coin", "key", "fork", "plate", "ball", "clock"};
  c.colors = {"red", "green", "blue", "yellow", "black", "white", "purple", "brown"};
  c.locations = {"desk", "chair", "table", "shelf", "bed", "sofa", "bench", "counter"};
  c.persons = {"John", "Mary", "Alice", "Robert", "Susan", "David", "Linda", "James", "Karen", "Peter"};
  c.times = {"morning", "afternoon", "evening", "night", "spring", "summer", "autumn", "winter"};
  c.reasons = {"rain", "storm", "heat", "noise", "traffic", "snow", "wind", "fog"};
  c.numbers = {"two", "three", "four", "five", "six", "seven", "eight", "nine"};
  return c;
}

std::string generator_config_to_json(const GeneratorConfig& c) {
  json j;
  j["types"] = c.types;
  j["train_count"] = c.train_count;
  j["dev_count"] = c.dev_count;
  j["challenge_count"] = c.challenge_count;
  j["min_facts"] = c.min_facts;
  j["max_facts"] = c.max_facts;
  j["lexicons"] = {{"objects", c.objects},   {"colors", c.colors}, {"locations", c.locations},
                   {"persons", c.persons},   {"times", c.times},   {"reasons", c.reasons},
                   {"numbers", c.numbers}};
  return j.dump(2);
}

GeneratorConfig generator_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("generator config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("generator config: expected a JSON object");
  static const std::set<std::string> kKnown = {"types",     "train_count", "dev_count", "challenge_count",
                                               "min_facts", "max_facts",   "lexicons"};
  static const std::set<std::string> kKnownLex = {"objects", "colors", "locations", "persons",
                                                  "times",   "reasons", "numbers"};
  for (const auto& [key, value] : j.items())
    if (!kKnown.count(key)) throw std::invalid_argument("generator config: unknown field \"" + key + "\"");
  GeneratorConfig c = default_generator_config();
  const auto read_int = [&](const char* field, int& into) {
    if (!j.contains(field)) return;
    if (!j[field].is_number_integer()) throw std::invalid_argument(std::string(field) + ": expected an integer");
    into = j[field].get<int>();
  };
  if (j.contains("types")) {
    if (!j["types"].is_array()) throw std::invalid_argument("types: expected an array of strings");
    c.types = j["types"].get<std::vector<std::string>>();
  }
  read_int("train_count", c.train_count);
  read_int("dev_count", c.dev_count);
  read_int("challenge_count", c.challenge_count);
  read_int("min_facts", c.min_facts);
  read_int("max_facts", c.max_facts);
  if (j.contains("lexicons")) {
    const json& lex = j["lexicons"];
    if (!lex.is_object()) throw std::invalid_argument("lexicons: expected an object");
    for (const auto& [key, value] : lex.items())
      if (!kKnownLex.count(key)) throw std::invalid_argument("lexicons: unknown field \"" + key + "\"");
    const auto read_lex = [&](const char* field, std::vector<std::string>& into) {
      if (!lex.contains(field)) return;
      if (!lex[field].is_array()) throw std::invalid_argument(std::string("lexicons.") + field + ": expected an array");
      into = lex[field].get<std::vector<std::string>>();
    };
    read_lex("objects", c.objects);
    read_lex("colors", c.colors);
    read_lex("locations", c.locations);
    read_lex("persons", c.persons);
    read_lex("times", c.times);
    read_lex("reasons", c.reasons);
    read_lex("numbers", c.numbers);
  }
  validate_generator_config(c);
  return c;
}

SyntheticDataset generate_synthetic(const GeneratorConfig& config, std::uint64_t seed) {
  validate_generator_config(config);
  constexpr int kMaxRetries = 500;
  SyntheticDataset out;
  std::unordered_set<std::string> seen;
  Rng root(seed);

  const auto emit = [&](std::vector<Example>& sink, const std::string& subset, int count, Rng& rng,
                        bool challenge) {
    for (int i = 0; i < count; ++i) {
      Example ex;
      int attempt = 0;
      for (;; ++attempt) {
        if (attempt >= kMaxRetries)
          throw std::runtime_error("generator: lexicons too small for a disjoint " + subset + " split");
        ex = challenge ? make_challenge_example(config, rng)
                       : make_plain_example(config.types[static_cast<std::size_t>(i) % config.types.size()],
                                            config, rng);
        if (seen.insert(ex.passage + '\x1f' + ex.question).second) break;
      }
      ex.id = "syn-" + subset + "-" + zero_padded(i, 5);
      ex.subset = subset;
      ex.mode = TokenMode::Word;
      sink.push_back(std::move(ex));
    }
  };

  Rng train_rng = root.fork(0);
  Rng dev_rng = root.fork(1);
  Rng challenge_rng = root.fork(2);
  emit(out.train, "train", config.train_count, train_rng, false);
  emit(out.dev, "dev", config.dev_count, dev_rng, false);
  emit(out.challenge, "challenge", config.challenge_count, challenge_rng, true);
  return out;
}

Example discussion_example() {
  Example ex;
  ex.id = "discussion-0";
  ex.passage = "There is a red book on the desk and a green pen on the chair.";
  ex.question = "Where is the pen?";
  const std::string answer = "on the chair";
  ex.golds.push_back(GoldAnswer{answer, static_cast<int>(ex.passage.find(answer))});
  ex.subset = "dev";
  ex.mode = TokenMode::Word;
  return ex;
}

}  // namespace zoneprobe
