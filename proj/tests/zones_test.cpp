#include "zoneprobe/zones.hpp"

#include <algorithm>

#include "doctest.h"
#include "zoneprobe/tensor.hpp"

using namespace zoneprobe;

TEST_CASE("compute_layout places specials and windows") {
  // [CLS] q q q [SEP] p p p p p [SEP] + 5 padding slots
  const InputLayout l = compute_layout(3, 5, 16);
  CHECK(l.total == 16);
  CHECK(l.used == 11);
  CHECK(l.cls == 0);
  CHECK(l.q_begin == 1);
  CHECK(l.q_end == 3);   // inclusive last question index
  CHECK(l.mid_sep == 4);
  CHECK(l.p_begin == 5);
  CHECK(l.p_end == 9);   // inclusive last passage index
  CHECK(l.end_sep == 10);
  CHECK(l.question_len() == 3);
  CHECK(l.passage_len() == 5);
  CHECK(l.pad_len() == 5);
  CHECK(l.in_question(1));
  CHECK(!l.in_question(4));
  CHECK(l.in_passage(5));
  CHECK(!l.in_passage(10));
  CHECK(l.is_special(0));
  CHECK(l.is_special(4));
  CHECK(l.is_special(10));
  CHECK(!l.is_special(7));
}

TEST_CASE("compute_layout truncates the passage to fit") {
  const InputLayout l = compute_layout(10, 40, 32);
  CHECK(l.used == 32);
  CHECK(l.passage_len() == 32 - 3 - 10);  // 19 tokens survive
  CHECK_THROWS(compute_layout(30, 5, 32));  // no room for any passage token
  CHECK_THROWS(compute_layout(0, 5, 32));
  CHECK_THROWS(compute_layout(5, 0, 32));
}

TEST_CASE("zone names round-trip") {
  for (Zone z : kBaseZones) CHECK(zone_from_name(zone_name(z)) == z);
  CHECK(zone_from_name("ALL") == Zone::ALL);
  CHECK(zone_label(Zone::Q2) == "Q²");
  CHECK(zone_label(Zone::P2) == "P²");
  CHECK_THROWS(zone_from_name("XYZ"));
}

TEST_CASE("zone membership matches the quadrant geometry") {
  const InputLayout l = compute_layout(3, 5, 16);
  // Q² : question rows × question columns
  CHECK(zone_contains(l, Zone::Q2, 1, 3));
  CHECK(!zone_contains(l, Zone::Q2, 1, 5));
  // Q2P: question rows attend passage columns
  CHECK(zone_contains(l, Zone::Q2P, 1, 5));
  CHECK(!zone_contains(l, Zone::Q2P, 5, 1));
  // P2Q: passage rows attend question columns
  CHECK(zone_contains(l, Zone::P2Q, 5, 1));
  CHECK(!zone_contains(l, Zone::P2Q, 1, 5));
  // P² : passage rows × passage columns
  CHECK(zone_contains(l, Zone::P2, 9, 5));
  // Specials belong to no zone.
  CHECK(!zone_contains(l, Zone::Q2, 0, 1));
  CHECK(!zone_contains(l, Zone::P2, 5, 10));
  CHECK(!zone_contains(l, Zone::ALL, 4, 4));
  CHECK(zone_contains(l, Zone::ALL, 5, 1));
}

TEST_CASE("static zone masks tile the expected cell counts") {
  const InputLayout l = compute_layout(4, 8, 20);
  MaskSpec spec;
  spec.kind = MaskKind::Zone;

  spec.zone = Zone::Q2;
  CHECK(static_mask(l, spec).count() == 16);  // 4×4
  spec.zone = Zone::Q2P;
  CHECK(static_mask(l, spec).count() == 32);  // 4×8
  spec.zone = Zone::P2Q;
  CHECK(static_mask(l, spec).count() == 32);  // 8×4
  spec.zone = Zone::P2;
  CHECK(static_mask(l, spec).count() == 64);  // 8×8
  spec.zone = Zone::ALL;
  CHECK(static_mask(l, spec).count() == 144);  // (4+8)²
}

TEST_CASE("special-token masks cover full rows and columns in the used square") {
  const InputLayout l = compute_layout(3, 5, 16);
  MaskSpec spec;
  spec.kind = MaskKind::SpecialToken;
  spec.special = SpecialToken::Cls;
  const BoolMatrix cls = static_mask(l, spec);
  int count = 0;
  for (int i = 0; i < l.total; ++i)
    for (int j = 0; j < l.total; ++j) count += cls.at(i, j) ? 1 : 0;
  CHECK(count == 2 * l.used - 1);  // row 0 plus column 0, overlap once
  CHECK(cls.at(0, 7));
  CHECK(cls.at(7, 0));
  CHECK(!cls.at(0, 12));  // padding cells stay out

  spec.special = SpecialToken::AllSpecial;
  const BoolMatrix all = static_mask(l, spec);
  CHECK(all.at(4, 8));
  CHECK(all.at(8, 10));
  CHECK(!all.at(1, 5));
}

TEST_CASE("diagonal mask marks self-links over the used range") {
  const InputLayout l = compute_layout(3, 5, 16);
  MaskSpec spec;
  spec.kind = MaskKind::Diagonal;
  const BoolMatrix diag = static_mask(l, spec);
  CHECK(diag.count() == static_cast<std::size_t>(l.used));
  CHECK(diag.at(5, 5));
  CHECK(!diag.at(12, 12));
}

TEST_CASE("validate_partition holds exhaustively for small grids") {
  for (int q = 1; q <= 12; ++q)
    for (int p = 1; p <= 12; ++p) {
      const PartitionReport r = validate_partition(compute_layout(q, p, q + p + 3));
      CHECK(r.ok);
      CHECK(r.message.empty());
      CHECK(r.zone_cells[0] == q * q);
      CHECK(r.zone_cells[1] == q * p);
      CHECK(r.zone_cells[2] == p * q);
      CHECK(r.zone_cells[3] == p * p);
      CHECK(r.zone_cells[0] + r.zone_cells[1] + r.zone_cells[2] + r.zone_cells[3] +
                r.special_cells ==
            r.used * r.used);
    }
}

TEST_CASE("dynamic top-k ranks by score with column-then-row tie-breaks") {
  const InputLayout l = compute_layout(2, 3, 8);  // used = 8, p rows 4..6, q cols 1..2
  Tensor scores({8, 8});
  // Row 4 question columns: col1=0.9, col2=0.1 → top-1 marks (4,1).
  scores.at(4, 1) = 0.9;
  scores.at(4, 2) = 0.1;
  // Row 5 ties across both question columns → column order breaks the tie.
  scores.at(5, 1) = 0.5;
  scores.at(5, 2) = 0.5;

  const BoolMatrix top1 = dynamic_topk_mask(scores, l, Zone::P2Q, 1, TopKMode::Cumulative,
                                            TopKGranularity::PerRow);
  CHECK(top1.at(4, 1));
  CHECK(!top1.at(4, 2));
  CHECK(top1.at(5, 1));  // tie broken toward the lower column
  CHECK(!top1.at(5, 2));
  CHECK(top1.at(6, 1));  // all-zero row still has a deterministic winner
  CHECK(top1.count() == 3);

  const BoolMatrix kth2 = dynamic_topk_mask(scores, l, Zone::P2Q, 2, TopKMode::KthOnly,
                                            TopKGranularity::PerRow);
  CHECK(!kth2.at(4, 1));
  CHECK(kth2.at(4, 2));  // rank 2 alone
  CHECK(kth2.count() == 3);
}

TEST_CASE("saturated cumulative top-k equals the static zone mask") {
  const InputLayout l = compute_layout(3, 4, 12);
  Tensor scores({l.used, l.used});
  Rng rng(42);
  for (std::size_t i = 0; i < scores.size(); ++i) scores.at(i) = rng.normal();
  for (Zone z : kBaseZones) {
    MaskSpec spec;
    spec.kind = MaskKind::Zone;
    spec.zone = z;
    const BoolMatrix stat = static_mask(l, spec).top_left(l.used);
    const BoolMatrix dyn = dynamic_topk_mask(scores, l, z, 50, TopKMode::Cumulative,
                                             TopKGranularity::PerRow);
    CHECK(dyn == stat);
  }
}

TEST_CASE("per-zone top-k marks k cells across the whole zone") {
  const InputLayout l = compute_layout(2, 3, 8);
  Tensor scores({8, 8});
  scores.at(4, 1) = 0.9;
  scores.at(5, 2) = 0.8;
  scores.at(6, 1) = 0.7;
  const BoolMatrix top2 = dynamic_topk_mask(scores, l, Zone::P2Q, 2, TopKMode::Cumulative,
                                            TopKGranularity::PerZone);
  CHECK(top2.count() == 2);
  CHECK(top2.at(4, 1));
  CHECK(top2.at(5, 2));
}

TEST_CASE("apply_mask assigns the fill and is idempotent bitwise") {
  const InputLayout l = compute_layout(2, 3, 8);
  Tensor scores({8, 8});
  Rng rng(7);
  for (std::size_t i = 0; i < scores.size(); ++i) scores.at(i) = rng.normal();
  MaskSpec spec;
  spec.kind = MaskKind::Zone;
  spec.zone = Zone::P2Q;
  const BoolMatrix mask = static_mask(l, spec).top_left(l.used);

  const Tensor once = apply_mask(scores, mask);
  CHECK(once.at(4, 1) == kMaskFill);
  CHECK(once.at(1, 1) == scores.at(1, 1));

  const Tensor twice = apply_mask(once, mask);
  for (std::size_t i = 0; i < twice.size(); ++i) CHECK(twice.at(i) == once.at(i));
}

TEST_CASE("mask spec JSON round-trips and rejects malformed fields") {
  MaskSpec spec;
  spec.kind = MaskKind::TopK;
  spec.zone = Zone::P2Q;
  spec.k = 3;
  spec.mode = TopKMode::KthOnly;
  spec.granularity = TopKGranularity::PerRow;
  spec.layers = IndexSelector::only({0, 2});
  spec.heads = IndexSelector::every();
  spec.phase = MaskPhase::Decode;
  const MaskSpec back = mask_spec_from_json(mask_spec_to_json(spec));
  CHECK(back == spec);

  CHECK_THROWS_WITH_AS(mask_spec_from_json("{\"kind\": \"bogus\"}"), doctest::Contains("kind"),
                       std::invalid_argument);
  CHECK_THROWS(mask_spec_from_json("{"));
}

TEST_CASE("masks outside the zone never pick cells from another zone") {
  const InputLayout l = compute_layout(3, 5, 16);
  Tensor scores({l.used, l.used});
  Rng rng(9);
  for (std::size_t i = 0; i < scores.size(); ++i) scores.at(i) = rng.normal();
  const BoolMatrix picked = dynamic_topk_mask(scores, l, Zone::Q2, 2, TopKMode::Cumulative,
                                              TopKGranularity::PerRow);
  for (int i = 0; i < l.used; ++i)
    for (int j = 0; j < l.used; ++j)
      if (picked.at(i, j)) CHECK(zone_contains(l, Zone::Q2, i, j));
}
