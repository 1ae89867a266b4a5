#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "zoneprobe/mask.hpp"
#include "zoneprobe/rng.hpp"

namespace zoneprobe {

// Dense row-major tensor of 64-bit floats. Copies share storage, so a Tensor
// behaves like a cheap handle; parameters keep a persistent gradient buffer
// that optimizer steps read and clear.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool defined() const { return data_ != nullptr; }
  bool is_scalar() const { return size() == 1; }

  // 2-D accessors; throw unless ndim() == 2.
  int rows() const;
  int cols() const;

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  double& at(std::size_t i) { return (*data_)[i]; }
  double at(std::size_t i) const { return (*data_)[i]; }
  double& at(int r, int c);
  double at(int r, int c) const;

  bool has_grad() const { return grad_ != nullptr; }
  void ensure_grad();
  void zero_grad();
  double* grad() { return grad_->data(); }
  const double* grad() const { return grad_->data(); }

  // Deep copy with fresh storage (no gradient buffer).
  Tensor clone() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  friend class Tape;
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
};

// Handle to a node in a Tape.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode differentiation record. Operations append nodes in topological
// order; backward() replays their local rules in reverse. All reductions run
// in a fixed sequential order, so identical inputs give bitwise-identical
// values and gradients.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient accumulates into `parameter` (allocating its buffer
  // on first use).
  Value watch(Tensor& parameter);
  // Leaf without a gradient.
  Value constant(Tensor t);

  Value add(Value a, Value b);
  Value mul(Value a, Value b);
  Value scale(Value a, double c);
  Value add_bias(Value m, Value bias);
  Value matmul(Value a, Value b);     // [m×k]·[k×n]
  Value matmul_nt(Value a, Value b);  // [m×k]·[n×k]ᵀ
  Value slice_cols(Value a, int start, int len);
  Value concat_cols(const std::vector<Value>& parts);
  Value gelu(Value a);
  Value layer_norm(Value a, Value gain, Value bias);
  Value embedding(Value table, std::vector<int> ids);
  Value row_softmax(Value a);
  Value masked_fill(Value a, const BoolMatrix& mask, double fill);
  Value dropout(Value a, double rate, Rng& rng);
  Value cross_entropy(Value logits, int target);
  Value sum(Value a);

  const Tensor& value(Value v) const;
  bool needs_grad(Value v) const;

  // Seeds d(loss)/d(loss) = 1 and walks the record backwards. `loss` must be
  // scalar. May run once per tape.
  void backward(Value loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor tensor;
    bool needs_grad = false;
  };

  int push(Tensor t, bool needs_grad);
  void record(std::function<void()> backward_rule);
  const Node& node(Value v) const;

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> ops_;
  bool backward_done_ = false;
};

// Numerically stabilized row-wise softmax of a [r×c] tensor (pure helper;
// the Tape op shares this kernel).
Tensor row_softmax_values(const Tensor& m);

inline constexpr double kLayerNormEpsilon = 1e-5;

}  // namespace zoneprobe
