#pragma once

#include <string>
#include <vector>

#include "zoneprobe/mask.hpp"
#include "zoneprobe/tensor.hpp"

namespace zoneprobe {

// Pre-softmax score written into every disabled attention cell.
inline constexpr double kMaskFill = -10000.0;

// Token index geometry of one encoded example: [CLS] question [SEP] passage [SEP] pad*.
// All ranges are inclusive token indices into the padded sequence.
struct InputLayout {
  int total = 0;  // padded length
  int used = 0;   // 3 + question_len + passage_len
  int cls = 0;
  int q_begin = 0, q_end = 0;
  int mid_sep = 0;
  int p_begin = 0, p_end = 0;
  int end_sep = 0;

  int question_len() const { return q_end - q_begin + 1; }
  int passage_len() const { return p_end - p_begin + 1; }
  int pad_len() const { return total - used; }
  bool in_question(int i) const { return i >= q_begin && i <= q_end; }
  bool in_passage(int i) const { return i >= p_begin && i <= p_end; }
  bool is_special(int i) const { return i == cls || i == mid_sep || i == end_sep; }

  bool operator==(const InputLayout&) const = default;
};

// Builds the layout, truncating the passage (never the question) to fit
// max_length. Throws if the question leaves no room for a single passage token.
InputLayout compute_layout(int question_tokens, int passage_tokens, int max_length);

enum class Zone { Q2, Q2P, P2Q, P2, ALL };

inline constexpr Zone kBaseZones[4] = {Zone::Q2, Zone::Q2P, Zone::P2Q, Zone::P2};

// Identifier used in JSON/CSV ("Q2", "Q2P", "P2Q", "P2", "ALL").
std::string zone_name(Zone z);
// Display label for figures ("Q²", "Q2P", "P2Q", "P²", "All").
std::string zone_label(Zone z);
Zone zone_from_name(const std::string& name);

bool zone_contains(const InputLayout& layout, Zone z, int row, int col);

enum class MaskKind { Zone, SpecialToken, Diagonal, TopK, Full };
enum class SpecialToken { Cls, MidSep, EndSep, AllSpecial };
enum class TopKMode { Cumulative, KthOnly };
enum class TopKGranularity { PerRow, PerZone };
enum class MaskPhase { Train, Decode };

// Matches every index when `all`, otherwise only the listed ones.
struct IndexSelector {
  bool all = true;
  std::vector<int> indices;

  static IndexSelector every() { return IndexSelector{}; }
  static IndexSelector only(std::vector<int> idx);
  bool matches(int index) const;
  bool operator==(const IndexSelector&) const = default;
};

// One mask experiment: what to disable, where, and in which phase.
struct MaskSpec {
  MaskKind kind = MaskKind::Zone;
  Zone zone = Zone::ALL;                // Zone and TopK kinds
  SpecialToken special = SpecialToken::Cls;  // SpecialToken kind
  int k = 1;                            // TopK kind
  TopKMode mode = TopKMode::Cumulative;
  TopKGranularity granularity = TopKGranularity::PerRow;
  IndexSelector layers;
  IndexSelector heads;
  MaskPhase phase = MaskPhase::Decode;

  bool is_dynamic() const { return kind == MaskKind::TopK; }
  bool operator==(const MaskSpec&) const = default;
};

std::string mask_spec_to_json(const MaskSpec& spec);
MaskSpec mask_spec_from_json(const std::string& json_text);

// Mask matrices are [layout.total × layout.total]; padding cells stay false
// (padding never reaches the softmax).

// Materializes zone, special-token, diagonal, and full masks. Special-token
// masks disable the token's whole row and column within the used square;
// zone masks never touch special rows/columns.
BoolMatrix static_mask(const InputLayout& layout, const MaskSpec& spec);

// Ranks pre-softmax scores inside a zone and marks the top-k (cumulative) or
// exactly the k-th (kth-only) per row or per zone. Ties break toward the
// lowest column, then the lowest row; k clamps to the unit size. `scores`
// may be the used-length crop or the full padded square.
BoolMatrix dynamic_topk_mask(const Tensor& scores, const InputLayout& layout, Zone zone, int k,
                             TopKMode mode, TopKGranularity granularity);

// Returns a copy with masked cells set to exactly kMaskFill. Idempotent.
Tensor apply_mask(const Tensor& scores, const BoolMatrix& mask);

struct PartitionReport {
  bool ok = false;
  int used = 0;
  int zone_cells[4] = {0, 0, 0, 0};  // Q2, Q2P, P2Q, P2
  int special_cells = 0;
  std::string message;  // empty when ok
};

// Checks that the four zones plus special-token rows/columns tile the used
// square exactly, with pairwise-disjoint zones.
PartitionReport validate_partition(const InputLayout& layout);

}  // namespace zoneprobe
