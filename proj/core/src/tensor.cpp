#include "zoneprobe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace zoneprobe {

namespace {

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: dimension sizes must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

// Accumulating matrix kernels; c must be sized by the caller. Loop orders keep
// the innermost stride contiguous.

// a[m×k], b[k×n], c[m×n] += a·b
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// a[m×k], b[n×k], c[m×n] += a·bᵀ
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// a[k×m], b[k×n], c[m×n] += aᵀ·b
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<std::size_t>(p) * m;
    const double* brow = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(shape_product(shape_), 0.0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_product(shape_) != values.size())
    throw std::invalid_argument("tensor: value count does not match shape");
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), value);
  return t;
}

int Tensor::rows() const {
  if (ndim() != 2) throw std::invalid_argument("tensor: rows() requires a 2-D tensor");
  return shape_[0];
}

int Tensor::cols() const {
  if (ndim() != 2) throw std::invalid_argument("tensor: cols() requires a 2-D tensor");
  return shape_[1];
}

double& Tensor::at(int r, int c) {
  return (*data_)[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)];
}

double Tensor::at(int r, int c) const {
  return (*data_)[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)];
}

void Tensor::ensure_grad() {
  if (!grad_) grad_ = std::make_shared<std::vector<double>>(size(), 0.0);
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

Tensor row_softmax_values(const Tensor& m) {
  const int r = m.rows();
  const int c = m.cols();
  Tensor out({r, c});
  const double* in = m.data();
  double* dst = out.data();
  for (int i = 0; i < r; ++i) {
    const double* row = in + static_cast<std::size_t>(i) * c;
    double* orow = dst + static_cast<std::size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      total += orow[j];
    }
    const double inv = 1.0 / total;
    for (int j = 0; j < c; ++j) orow[j] *= inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tape

int Tape::push(Tensor t, bool needs_grad) {
  if (backward_done_) throw std::logic_error("tape: cannot extend a tape after backward()");
  if (needs_grad) t.ensure_grad();
  nodes_.push_back(Node{std::move(t), needs_grad});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::record(std::function<void()> backward_rule) {
  ops_.push_back(std::move(backward_rule));
}

const Tape::Node& Tape::node(Value v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("tape: value does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Value v) const { return node(v).tensor; }

bool Tape::needs_grad(Value v) const { return node(v).needs_grad; }

Value Tape::watch(Tensor& parameter) {
  if (!parameter.defined()) throw std::invalid_argument("tape: cannot watch an empty tensor");
  parameter.ensure_grad();
  return Value{push(parameter, true)};
}

Value Tape::constant(Tensor t) {
  if (!t.defined()) throw std::invalid_argument("tape: cannot record an empty tensor");
  return Value{push(std::move(t), false)};
}

Value Tape::add(Value a, Value b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("add: shapes disagree");
  Tensor out(ta.shape());
  const std::size_t n = ta.size();
  const double* pa = ta.data();
  const double* pb = tb.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto ga = needs_grad(a) ? nodes_[a.id].tensor.grad_ : nullptr;
    auto gb = needs_grad(b) ? nodes_[b.id].tensor.grad_ : nullptr;
    record([go, ga, gb, n] {
      if (ga)
        for (std::size_t i = 0; i < n; ++i) (*ga)[i] += (*go)[i];
      if (gb)
        for (std::size_t i = 0; i < n; ++i) (*gb)[i] += (*go)[i];
    });
  }
  return v;
}

Value Tape::mul(Value a, Value b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shapes disagree");
  Tensor out(ta.shape());
  const std::size_t n = ta.size();
  const double* pa = ta.data();
  const double* pb = tb.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto da = nodes_[a.id].tensor.data_;
    auto db = nodes_[b.id].tensor.data_;
    auto ga = needs_grad(a) ? nodes_[a.id].tensor.grad_ : nullptr;
    auto gb = needs_grad(b) ? nodes_[b.id].tensor.grad_ : nullptr;
    record([go, da, db, ga, gb, n] {
      if (ga)
        for (std::size_t i = 0; i < n; ++i) (*ga)[i] += (*go)[i] * (*db)[i];
      if (gb)
        for (std::size_t i = 0; i < n; ++i) (*gb)[i] += (*go)[i] * (*da)[i];
    });
  }
  return v;
}

Value Tape::scale(Value a, double c) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  const std::size_t n = ta.size();
  const double* pa = ta.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  const bool ng = needs_grad(a);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto ga = nodes_[a.id].tensor.grad_;
    record([go, ga, c, n] {
      for (std::size_t i = 0; i < n; ++i) (*ga)[i] += (*go)[i] * c;
    });
  }
  return v;
}

Value Tape::add_bias(Value m, Value bias) {
  const Tensor& tm = value(m);
  const Tensor& tb = value(bias);
  const int r = tm.rows();
  const int c = tm.cols();
  if (tb.ndim() != 1 || tb.shape()[0] != c)
    throw std::invalid_argument("add_bias: bias must be a length-" + std::to_string(c) + " vector");
  Tensor out({r, c});
  const double* pm = tm.data();
  const double* pb = tb.data();
  double* po = out.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) po[static_cast<std::size_t>(i) * c + j] = pm[static_cast<std::size_t>(i) * c + j] + pb[j];
  const bool ng = needs_grad(m) || needs_grad(bias);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto gm = needs_grad(m) ? nodes_[m.id].tensor.grad_ : nullptr;
    auto gb = needs_grad(bias) ? nodes_[bias.id].tensor.grad_ : nullptr;
    record([go, gm, gb, r, c] {
      if (gm)
        for (std::size_t i = 0; i < static_cast<std::size_t>(r) * c; ++i) (*gm)[i] += (*go)[i];
      if (gb)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) (*gb)[j] += (*go)[static_cast<std::size_t>(i) * c + j];
    });
  }
  return v;
}

Value Tape::matmul(Value a, Value b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  const int m = ta.rows(), k = ta.cols();
  if (tb.rows() != k)
    throw std::invalid_argument("matmul: inner dimensions disagree (" + std::to_string(k) + " vs " +
                                std::to_string(tb.rows()) + ")");
  const int n = tb.cols();
  Tensor out({m, n});
  mm_nn(ta.data(), tb.data(), out.data(), m, k, n);
  const bool ng = needs_grad(a) || needs_grad(b);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto da = nodes_[a.id].tensor.data_;
    auto db = nodes_[b.id].tensor.data_;
    auto ga = needs_grad(a) ? nodes_[a.id].tensor.grad_ : nullptr;
    auto gb = needs_grad(b) ? nodes_[b.id].tensor.grad_ : nullptr;
    record([go, da, db, ga, gb, m, k, n] {
      if (ga) mm_nt(go->data(), db->data(), ga->data(), m, n, k);
      if (gb) mm_tn(da->data(), go->data(), gb->data(), k, m, n);
    });
  }
  return v;
}

Value Tape::matmul_nt(Value a, Value b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  const int m = ta.rows(), k = ta.cols();
  if (tb.cols() != k)
    throw std::invalid_argument("matmul_nt: inner dimensions disagree (" + std::to_string(k) + " vs " +
                                std::to_string(tb.cols()) + ")");
  const int n = tb.rows();
  Tensor out({m, n});
  mm_nt(ta.data(), tb.data(), out.data(), m, k, n);
  const bool ng = needs_grad(a) || needs_grad(b);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto da = nodes_[a.id].tensor.data_;
    auto db = nodes_[b.id].tensor.data_;
    auto ga = needs_grad(a) ? nodes_[a.id].tensor.grad_ : nullptr;
    auto gb = needs_grad(b) ? nodes_[b.id].tensor.grad_ : nullptr;
    record([go, da, db, ga, gb, m, k, n] {
      if (ga) mm_nn(go->data(), db->data(), ga->data(), m, n, k);
      if (gb) mm_tn(go->data(), da->data(), gb->data(), n, m, k);
    });
  }
  return v;
}

Value Tape::slice_cols(Value a, int start, int len) {
  const Tensor& ta = value(a);
  const int r = ta.rows(), c = ta.cols();
  if (start < 0 || len < 1 || start + len > c) throw std::invalid_argument("slice_cols: range out of bounds");
  Tensor out({r, len});
  const double* pa = ta.data();
  double* po = out.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < len; ++j)
      po[static_cast<std::size_t>(i) * len + j] = pa[static_cast<std::size_t>(i) * c + start + j];
  const bool ng = needs_grad(a);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto ga = nodes_[a.id].tensor.grad_;
    record([go, ga, r, c, start, len] {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < len; ++j)
          (*ga)[static_cast<std::size_t>(i) * c + start + j] += (*go)[static_cast<std::size_t>(i) * len + j];
    });
  }
  return v;
}

Value Tape::concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int r = value(parts[0]).rows();
  int total = 0;
  bool ng = false;
  for (Value p : parts) {
    const Tensor& t = value(p);
    if (t.rows() != r) throw std::invalid_argument("concat_cols: row counts disagree");
    total += t.cols();
    ng = ng || needs_grad(p);
  }
  Tensor out({r, total});
  double* po = out.data();
  int offset = 0;
  for (Value p : parts) {
    const Tensor& t = value(p);
    const int c = t.cols();
    const double* pt = t.data();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        po[static_cast<std::size_t>(i) * total + offset + j] = pt[static_cast<std::size_t>(i) * c + j];
    offset += c;
  }
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    struct Piece {
      std::shared_ptr<std::vector<double>> grad;
      int cols;
      int offset;
    };
    std::vector<Piece> pieces;
    int off = 0;
    for (Value p : parts) {
      const int c = value(p).cols();
      pieces.push_back(Piece{needs_grad(p) ? nodes_[p.id].tensor.grad_ : nullptr, c, off});
      off += c;
    }
    record([go, pieces, r, total] {
      for (const Piece& piece : pieces) {
        if (!piece.grad) continue;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < piece.cols; ++j)
            (*piece.grad)[static_cast<std::size_t>(i) * piece.cols + j] +=
                (*go)[static_cast<std::size_t>(i) * total + piece.offset + j];
      }
    });
  }
  return v;
}

Value Tape::gelu(Value a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  const std::size_t n = ta.size();
  const double* pa = ta.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pa[i];
    po[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  const bool ng = needs_grad(a);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto da = nodes_[a.id].tensor.data_;
    auto ga = nodes_[a.id].tensor.grad_;
    record([go, da, ga, n] {
      for (std::size_t i = 0; i < n; ++i) {
        const double x = (*da)[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        (*ga)[i] += (*go)[i] * (cdf + x * pdf);
      }
    });
  }
  return v;
}

Value Tape::layer_norm(Value a, Value gain, Value bias) {
  const Tensor& ta = value(a);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  const int r = ta.rows(), c = ta.cols();
  if (tg.ndim() != 1 || tg.shape()[0] != c || tb.ndim() != 1 || tb.shape()[0] != c)
    throw std::invalid_argument("layer_norm: gain/bias must be length-" + std::to_string(c) + " vectors");
  Tensor out({r, c});
  auto normalized = std::make_shared<std::vector<double>>(static_cast<std::size_t>(r) * c);
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(r));
  const double* pa = ta.data();
  const double* pg = tg.data();
  const double* pb = tb.data();
  double* po = out.data();
  for (int i = 0; i < r; ++i) {
    const double* row = pa + static_cast<std::size_t>(i) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= c;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    (*inv_std)[static_cast<std::size_t>(i)] = inv;
    for (int j = 0; j < c; ++j) {
      const double xn = (row[j] - mean) * inv;
      (*normalized)[static_cast<std::size_t>(i) * c + j] = xn;
      po[static_cast<std::size_t>(i) * c + j] = xn * pg[j] + pb[j];
    }
  }
  const bool ng = needs_grad(a) || needs_grad(gain) || needs_grad(bias);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto dg = nodes_[gain.id].tensor.data_;
    auto ga = needs_grad(a) ? nodes_[a.id].tensor.grad_ : nullptr;
    auto gg = needs_grad(gain) ? nodes_[gain.id].tensor.grad_ : nullptr;
    auto gb = needs_grad(bias) ? nodes_[bias.id].tensor.grad_ : nullptr;
    record([go, dg, ga, gg, gb, normalized, inv_std, r, c] {
      for (int i = 0; i < r; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * c;
        if (gg)
          for (int j = 0; j < c; ++j) (*gg)[j] += (*go)[base + j] * (*normalized)[base + j];
        if (gb)
          for (int j = 0; j < c; ++j) (*gb)[j] += (*go)[base + j];
        if (ga) {
          // dx = inv_std/c · (c·dxn − Σdxn − xn·Σ(dxn·xn)) with dxn = go·gain
          double sum_dxn = 0.0;
          double sum_dxn_xn = 0.0;
          for (int j = 0; j < c; ++j) {
            const double dxn = (*go)[base + j] * (*dg)[j];
            sum_dxn += dxn;
            sum_dxn_xn += dxn * (*normalized)[base + j];
          }
          const double inv = (*inv_std)[static_cast<std::size_t>(i)];
          for (int j = 0; j < c; ++j) {
            const double dxn = (*go)[base + j] * (*dg)[j];
            (*ga)[base + j] +=
                inv / c * (c * dxn - sum_dxn - (*normalized)[base + j] * sum_dxn_xn);
          }
        }
      }
    });
  }
  return v;
}

Value Tape::embedding(Value table, std::vector<int> ids) {
  const Tensor& tt = value(table);
  const int v_count = tt.rows();
  const int d = tt.cols();
  for (int id : ids)
    if (id < 0 || id >= v_count) throw std::invalid_argument("embedding: id out of range");
  const int len = static_cast<int>(ids.size());
  Tensor out({len, d});
  const double* pt = tt.data();
  double* po = out.data();
  for (int i = 0; i < len; ++i) {
    const double* src = pt + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d;
    double* dst = po + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) dst[j] = src[j];
  }
  const bool ng = needs_grad(table);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto gt = nodes_[table.id].tensor.grad_;
    record([go, gt, ids = std::move(ids), d] {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = gt->data() + static_cast<std::size_t>(ids[i]) * d;
        const double* src = go->data() + i * static_cast<std::size_t>(d);
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return v;
}

Value Tape::row_softmax(Value a) {
  Tensor out = row_softmax_values(value(a));
  const int r = out.rows(), c = out.cols();
  const bool ng = needs_grad(a);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto dv = nodes_[v.id].tensor.data_;
    auto ga = nodes_[a.id].tensor.grad_;
    record([go, dv, ga, r, c] {
      for (int i = 0; i < r; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += (*go)[base + j] * (*dv)[base + j];
        for (int j = 0; j < c; ++j) (*ga)[base + j] += (*dv)[base + j] * ((*go)[base + j] - dot);
      }
    });
  }
  return v;
}

Value Tape::masked_fill(Value a, const BoolMatrix& mask, double fill) {
  const Tensor& ta = value(a);
  if (ta.rows() != mask.rows || ta.cols() != mask.cols)
    throw std::invalid_argument("masked_fill: mask shape disagrees with tensor");
  Tensor out = ta.clone();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask.cells[i]) po[i] = fill;
  const bool ng = needs_grad(a);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto ga = nodes_[a.id].tensor.grad_;
    auto keep = std::make_shared<std::vector<std::uint8_t>>(mask.cells);
    record([go, ga, keep] {
      for (std::size_t i = 0; i < keep->size(); ++i)
        if (!(*keep)[i]) (*ga)[i] += (*go)[i];
    });
  }
  return v;
}

Value Tape::dropout(Value a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be below 1");
  const Tensor& ta = value(a);
  const std::size_t n = ta.size();
  auto keep = std::make_shared<std::vector<double>>(n);
  const double inv_keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) (*keep)[i] = rng.uniform() >= rate ? inv_keep : 0.0;
  Tensor out(ta.shape());
  const double* pa = ta.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * (*keep)[i];
  const bool ng = needs_grad(a);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto ga = nodes_[a.id].tensor.grad_;
    record([go, ga, keep, n] {
      for (std::size_t i = 0; i < n; ++i) (*ga)[i] += (*go)[i] * (*keep)[i];
    });
  }
  return v;
}

Value Tape::cross_entropy(Value logits, int target) {
  const Tensor& tl = value(logits);
  const std::size_t n = tl.size();
  if (target < 0 || static_cast<std::size_t>(target) >= n)
    throw std::invalid_argument("cross_entropy: target index out of range");
  const double* pl = tl.data();
  double mx = pl[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, pl[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(pl[i] - mx);
  const double log_sum = mx + std::log(total);
  Tensor out = Tensor::scalar(log_sum - pl[static_cast<std::size_t>(target)]);
  const bool ng = needs_grad(logits);
  Value v{push(std::move(out), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto dl = nodes_[logits.id].tensor.data_;
    auto gl = nodes_[logits.id].tensor.grad_;
    record([go, dl, gl, target, n, mx, total] {
      const double g = (*go)[0];
      for (std::size_t i = 0; i < n; ++i) {
        const double p = std::exp((*dl)[i] - mx) / total;
        (*gl)[i] += g * (p - (i == static_cast<std::size_t>(target) ? 1.0 : 0.0));
      }
    });
  }
  return v;
}

Value Tape::sum(Value a) {
  const Tensor& ta = value(a);
  const std::size_t n = ta.size();
  const double* pa = ta.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += pa[i];
  const bool ng = needs_grad(a);
  Value v{push(Tensor::scalar(acc), ng)};
  if (ng) {
    auto go = nodes_[v.id].tensor.grad_;
    auto ga = nodes_[a.id].tensor.grad_;
    record([go, ga, n] {
      const double g = (*go)[0];
      for (std::size_t i = 0; i < n; ++i) (*ga)[i] += g;
    });
  }
  return v;
}

void Tape::backward(Value loss) {
  const Node& ln = node(loss);
  if (!ln.tensor.is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
  if (backward_done_) throw std::logic_error("backward: tape already replayed");
  backward_done_ = true;
  if (ln.needs_grad) (*nodes_[loss.id].tensor.grad_)[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

}  // namespace zoneprobe
