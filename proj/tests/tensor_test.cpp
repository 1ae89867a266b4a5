#include "zoneprobe/tensor.hpp"

#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"
#include "zoneprobe/mask.hpp"
#include "zoneprobe/rng.hpp"

using namespace zoneprobe;
using testutil::fill_normal;
using testutil::max_rel_grad_error;

namespace {

constexpr double kTol = 1e-4;

// Reduces an arbitrary output to a scalar with fixed mixing weights so every
// output coordinate contributes its own direction to the loss.
Value weighted_sum(Tape& tape, Value out, const Tensor& weights) {
  return tape.sum(tape.mul(out, tape.constant(weights)));
}

Tensor mixing_weights(const std::vector<int>& shape, std::uint64_t seed) {
  Tensor w(shape);
  Rng rng(seed);
  fill_normal(w, rng, 1.0);
  return w;
}

}  // namespace

TEST_CASE("tensor shape and storage basics") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  t.at(1, 2) = 5.0;
  Tensor shallow = t;          // shares storage
  Tensor deep = t.clone();     // fresh storage
  shallow.at(1, 2) = 7.0;
  CHECK(t.at(1, 2) == 7.0);
  CHECK(deep.at(1, 2) == 5.0);
  CHECK_THROWS(Tensor({1}).rows());
  CHECK_THROWS(Tensor({2, 0}));
}

TEST_CASE("row_softmax rows sum to one and shift-invariance holds") {
  Tensor m({2, 3}, {1.0, 2.0, 3.0, 1001.0, 1002.0, 1003.0});
  const Tensor s = row_softmax_values(m);
  for (int r = 0; r < 2; ++r) {
    double total = 0.0;
    for (int c = 0; c < 3; ++c) total += s.at(r, c);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Row 1 equals row 0 shifted by 1000, so the softmaxes must agree.
  for (int c = 0; c < 3; ++c) CHECK(s.at(0, c) == doctest::Approx(s.at(1, c)).epsilon(1e-12));
}

TEST_CASE("add gradients") {
  Rng rng(1);
  Tensor a({3, 4}), b({3, 4});
  fill_normal(a, rng);
  fill_normal(b, rng);
  const Tensor w = mixing_weights({3, 4}, 100);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.add(tape.watch(a), tape.watch(b));
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a, &b}, run) < kTol);
}

TEST_CASE("mul gradients") {
  Rng rng(2);
  Tensor a({2, 5}), b({2, 5});
  fill_normal(a, rng);
  fill_normal(b, rng);
  const Tensor w = mixing_weights({2, 5}, 101);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.mul(tape.watch(a), tape.watch(b));
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a, &b}, run) < kTol);
}

TEST_CASE("scale gradients") {
  Rng rng(3);
  Tensor a({4, 2});
  fill_normal(a, rng);
  const Tensor w = mixing_weights({4, 2}, 102);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.scale(tape.watch(a), -1.7);
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a}, run) < kTol);
}

TEST_CASE("add_bias gradients broadcast over rows") {
  Rng rng(4);
  Tensor a({3, 4}), bias({4});
  fill_normal(a, rng);
  fill_normal(bias, rng);
  const Tensor w = mixing_weights({3, 4}, 103);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.add_bias(tape.watch(a), tape.watch(bias));
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a, &bias}, run) < kTol);
}

TEST_CASE("matmul gradients") {
  Rng rng(5);
  Tensor a({3, 4}), b({4, 2});
  fill_normal(a, rng);
  fill_normal(b, rng);
  const Tensor w = mixing_weights({3, 2}, 104);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.matmul(tape.watch(a), tape.watch(b));
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a, &b}, run) < kTol);
}

TEST_CASE("matmul_nt gradients") {
  Rng rng(6);
  Tensor a({3, 4}), b({5, 4});
  fill_normal(a, rng);
  fill_normal(b, rng);
  const Tensor w = mixing_weights({3, 5}, 105);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.matmul_nt(tape.watch(a), tape.watch(b));
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a, &b}, run) < kTol);
}

TEST_CASE("slice_cols gradients hit only the window") {
  Rng rng(7);
  Tensor a({3, 6});
  fill_normal(a, rng);
  const Tensor w = mixing_weights({3, 2}, 106);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.slice_cols(tape.watch(a), 2, 2);
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a}, run) < kTol);
}

TEST_CASE("concat_cols gradients split back to the parts") {
  Rng rng(8);
  Tensor a({3, 2}), b({3, 3}), c({3, 1});
  fill_normal(a, rng);
  fill_normal(b, rng);
  fill_normal(c, rng);
  const Tensor w = mixing_weights({3, 6}, 107);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.concat_cols({tape.watch(a), tape.watch(b), tape.watch(c)});
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a, &b, &c}, run) < kTol);
}

TEST_CASE("gelu gradients") {
  Rng rng(9);
  Tensor a({4, 3});
  fill_normal(a, rng, 1.5);
  const Tensor w = mixing_weights({4, 3}, 108);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.gelu(tape.watch(a));
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a}, run) < kTol);
}

TEST_CASE("gelu fixes zero and splits x at scale") {
  Tensor a({1, 3}, {0.0, 10.0, -10.0});
  Tape tape;
  const Tensor out = tape.value(tape.gelu(tape.constant(a)));
  CHECK(out.at(0, 0) == 0.0);
  CHECK(out.at(0, 1) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(std::fabs(out.at(0, 2)) < 1e-8);
}

TEST_CASE("layer_norm gradients for input, gain, and bias") {
  Rng rng(10);
  Tensor a({3, 8}), gain({8}), bias({8});
  fill_normal(a, rng);
  for (std::size_t i = 0; i < gain.size(); ++i) gain.at(i) = 1.0 + 0.1 * static_cast<double>(i);
  fill_normal(bias, rng);
  const Tensor w = mixing_weights({3, 8}, 109);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.layer_norm(tape.watch(a), tape.watch(gain), tape.watch(bias));
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a, &gain, &bias}, run) < kTol);
}

TEST_CASE("embedding gradients scatter-add over repeated ids") {
  Rng rng(11);
  Tensor table({6, 4});
  fill_normal(table, rng);
  const std::vector<int> ids = {1, 3, 1, 5};  // repeated row must accumulate
  const Tensor w = mixing_weights({4, 4}, 110);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.embedding(tape.watch(table), ids);
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&table}, run) < kTol);
}

TEST_CASE("row_softmax gradients") {
  Rng rng(12);
  Tensor a({3, 5});
  fill_normal(a, rng, 2.0);
  const Tensor w = mixing_weights({3, 5}, 111);
  auto run = [&](bool back) {
    Tape tape;
    Value out = tape.row_softmax(tape.watch(a));
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a}, run) < kTol);
}

TEST_CASE("masked_fill writes the fill value and blocks its gradients") {
  Rng rng(13);
  Tensor a({3, 3});
  fill_normal(a, rng);
  BoolMatrix mask(3, 3);
  mask.set(0, 1, true);
  mask.set(2, 2, true);

  Tape tape;
  Value va = tape.watch(a);
  Value out = tape.masked_fill(va, mask, -10000.0);
  CHECK(tape.value(out).at(0, 1) == -10000.0);
  CHECK(tape.value(out).at(2, 2) == -10000.0);
  CHECK(tape.value(out).at(1, 1) == a.at(1, 1));

  const Tensor w = mixing_weights({3, 3}, 112);
  auto run = [&](bool back) {
    Tape t2;
    Value o = t2.masked_fill(t2.watch(a), mask, -10000.0);
    Value loss = weighted_sum(t2, o, w);
    if (back) t2.backward(loss);
    return t2.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a}, run) < kTol);
  // Masked coordinates must get exactly zero gradient.
  CHECK(a.grad()[1] == 0.0);
  CHECK(a.grad()[8] == 0.0);
}

TEST_CASE("dropout gradients with a replayed mask") {
  Rng data_rng(14);
  Tensor a({4, 4});
  fill_normal(a, data_rng);
  const Tensor w = mixing_weights({4, 4}, 113);
  auto run = [&](bool back) {
    Tape tape;
    Rng rng(99);  // same seed every call keeps the mask frozen
    Value out = tape.dropout(tape.watch(a), 0.3, rng);
    Value loss = weighted_sum(tape, out, w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a}, run) < kTol);
}

TEST_CASE("dropout at rate zero is the identity") {
  Rng rng(15);
  Tensor a({2, 3});
  fill_normal(a, rng);
  Tape tape;
  Rng unused(1);
  const Tensor out = tape.value(tape.dropout(tape.watch(a), 0.0, unused));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(out.at(i) == a.at(i));
}

TEST_CASE("cross_entropy matches -log softmax and its gradients check out") {
  Tensor logits({4, 1}, {0.1, 1.2, -0.4, 0.9});
  Tape probe;
  const double ce = probe.value(probe.cross_entropy(probe.constant(logits), 1)).at(0);
  double lse = 0.0;
  for (std::size_t i = 0; i < 4; ++i) lse += std::exp(logits.at(i) - 1.2);
  CHECK(ce == doctest::Approx(std::log(lse)).epsilon(1e-12));

  Rng rng(16);
  Tensor a({6, 1});
  fill_normal(a, rng, 2.0);
  auto run = [&](bool back) {
    Tape tape;
    Value loss = tape.cross_entropy(tape.watch(a), 4);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a}, run) < kTol);
}

TEST_CASE("sum gradients are all ones") {
  Rng rng(17);
  Tensor a({3, 3});
  fill_normal(a, rng);
  auto run = [&](bool back) {
    Tape tape;
    Value loss = tape.sum(tape.watch(a));
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&a}, run) < kTol);
}

TEST_CASE("a chained expression differentiates end to end") {
  Rng rng(18);
  Tensor x({2, 6}), wq({6, 6}), bias({6}), gain({6}), shift({6});
  fill_normal(x, rng);
  fill_normal(wq, rng, 0.3);
  fill_normal(bias, rng, 0.1);
  for (std::size_t i = 0; i < gain.size(); ++i) gain.at(i) = 1.0;
  fill_normal(shift, rng, 0.1);
  const Tensor w = mixing_weights({2, 6}, 114);
  auto run = [&](bool back) {
    Tape tape;
    Value h = tape.add_bias(tape.matmul(tape.watch(x), tape.watch(wq)), tape.watch(bias));
    h = tape.gelu(h);
    h = tape.layer_norm(h, tape.watch(gain), tape.watch(shift));
    Value loss = weighted_sum(tape, tape.row_softmax(h), w);
    if (back) tape.backward(loss);
    return tape.value(loss).at(0);
  };
  CHECK(max_rel_grad_error({&x, &wq, &bias, &gain, &shift}, run) < kTol);
}

TEST_CASE("backward rejects non-scalar losses and double invocation") {
  Tensor a({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tape tape;
  Value v = tape.watch(a);
  CHECK_THROWS(tape.backward(v));
  Value s = tape.sum(v);
  tape.backward(s);
  CHECK_THROWS(tape.backward(s));
}
