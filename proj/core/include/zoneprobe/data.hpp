#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zoneprobe/zones.hpp"

namespace zoneprobe {

enum class TokenMode { Word, Char };

std::string token_mode_name(TokenMode mode);
TokenMode token_mode_from_name(const std::string& name);

// One surface token with its [begin,end) byte range in the source text.
struct TokenSpan {
  std::string text;
  int begin = 0;
  int end = 0;
  bool operator==(const TokenSpan&) const = default;
};

// Word mode splits on whitespace and ASCII punctuation (punctuation kept as
// single-character tokens) and lowercases; char mode emits one token per
// UTF-8 codepoint, skipping whitespace, without case folding.
std::vector<TokenSpan> tokenize(const std::string& text, TokenMode mode);

// Substring of `source` covered by tokens [first..last] inclusive.
std::string span_text(const std::string& source, const std::vector<TokenSpan>& tokens, int first,
                      int last);

struct GoldAnswer {
  std::string text;
  int answer_start = 0;  // byte offset into the passage
  bool operator==(const GoldAnswer&) const = default;
};

struct Example {
  std::string id;
  std::string passage;
  std::string question;
  std::vector<GoldAnswer> golds;
  std::string subset;  // train | dev | challenge | ...
  TokenMode mode = TokenMode::Word;
  bool operator==(const Example&) const = default;
};

// SQuAD v1.1 schema (data → paragraphs → qas → answers with answer_start),
// plus an optional top-level "mode" and per-qa "subset". Errors cite the qa id.
std::vector<Example> parse_dataset(const std::string& json_text, const std::string& default_subset);
std::string dataset_to_json(const std::vector<Example>& examples);
std::vector<Example> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<Example>& examples);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  Vocabulary();  // specials only

  // Frequency-sorted (then lexicographic) tokens at or above the floor.
  static Vocabulary build(const std::vector<Example>& examples, int frequency_floor = 1);
  // Rebuild from an id-ordered token list whose first four entries are the specials.
  static Vocabulary from_tokens(std::vector<std::string> ordered, int frequency_floor = 1);

  int id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  int frequency_floor() const { return floor_; }
  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int floor_ = 1;
};

// Smallest passage-token span covering the gold's byte range; expands over
// partially covered tokens. Throws when the range lies outside the tokens.
std::pair<int, int> align_answer(const std::vector<TokenSpan>& passage_tokens,
                                 const GoldAnswer& gold);

// First of {what, how, who, when, which, where, why} scanning lowercased
// tokens left to right; "other" when none occurs.
std::string classify_question_type(const std::string& question);

struct EncodedExample {
  int example_index = -1;  // into the source example vector
  std::string id;
  std::vector<int> ids;       // length layout.total
  std::vector<int> segments;  // 0 up to mid-sep, 1 through end-sep, 0 on padding
  InputLayout layout;
  int gold_start = -1;  // padded token coordinates, inside the passage range
  int gold_end = -1;
  std::string qtype;
  std::vector<TokenSpan> passage_tokens;  // post-truncation, for span-to-text mapping
};

struct EncodedDataset {
  std::vector<EncodedExample> encoded;
  std::vector<std::string> dropped;  // example ids excluded from training, scored 0 in evaluation
  int max_length = 0;
};

// Drops examples whose (first aligned) gold answer does not survive
// truncation, recording their ids.
EncodedDataset encode_dataset(const std::vector<Example>& examples, const Vocabulary& vocab,
                              int max_length);

struct GeneratorConfig {
  std::vector<std::string> types = {"where", "who", "what"};
  int train_count = 2000;
  int dev_count = 500;
  int challenge_count = 100;
  int min_facts = 2;
  int max_facts = 5;
  std::vector<std::string> objects;
  std::vector<std::string> colors;
  std::vector<std::string> locations;
  std::vector<std::string> persons;
  std::vector<std::string> times;
  std::vector<std::string> reasons;
  std::vector<std::string> numbers;
};

GeneratorConfig default_generator_config();
std::string generator_config_to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const std::string& json_text);

struct SyntheticDataset {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> challenge;  // two-fact questions; answers need a person hop
};

// Deterministic given (config, seed); train/dev/challenge are pairwise
// disjoint by (passage, question) surface form. Every question type gets a
// same-kind distractor fact so the answer is never positionally trivial.
SyntheticDataset generate_synthetic(const GeneratorConfig& config, std::uint64_t seed);

// The running example used by the attention-line diagram.
Example discussion_example();

}  // namespace zoneprobe
