#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace zoneprobe {

// Dense row-major boolean matrix. A set cell marks an attention entry to
// disable.
struct BoolMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> cells;

  BoolMatrix() = default;
  BoolMatrix(int r, int c)
      : rows(r), cols(c), cells(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0) {}

  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c);
  }
  bool at(int r, int c) const { return cells[index(r, c)] != 0; }
  void set(int r, int c, bool v = true) { cells[index(r, c)] = v ? 1 : 0; }

  std::size_t count() const {
    std::size_t n = 0;
    for (std::uint8_t v : cells) n += v != 0;
    return n;
  }
  bool any() const {
    for (std::uint8_t v : cells)
      if (v != 0) return true;
    return false;
  }
  bool empty() const { return cells.empty(); }

  // Cellwise union; shapes must already agree.
  BoolMatrix& merge(const BoolMatrix& other) {
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = cells[i] | other.cells[i];
    return *this;
  }

  // Top-left n×n block.
  BoolMatrix top_left(int n) const {
    BoolMatrix out(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) out.cells[out.index(r, c)] = cells[index(r, c)];
    return out;
  }

  bool operator==(const BoolMatrix&) const = default;
};

}  // namespace zoneprobe
