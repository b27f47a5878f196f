#pragma once

#include <cstddef>
#include <vector>

#include "satfuse/dataset.hpp"
#include "satfuse/error.hpp"

namespace satfuse {

/// Single-channel H x W grid, row-major.
template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
  Grid(int h, int w, std::vector<T> values) : height(h), width(w), data(std::move(values)) {
    require(data.size() == static_cast<std::size_t>(h) * w, ErrorKind::Argument, "grid data size mismatch");
  }

  T& operator()(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Grid& o) const { return height == o.height && width == o.width; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using Plane = Grid<double>;
using LevelGrid = Grid<int>;

/// One channel of a patch, scaled to [0,1].
inline Plane unit_plane(PatchView patch, int channel) {
  Plane p(patch.height, patch.width);
  for (int y = 0; y < patch.height; ++y)
    for (int x = 0; x < patch.width; ++x) p(y, x) = patch.at(y, x, channel) / 255.0;
  return p;
}

}  // namespace satfuse
