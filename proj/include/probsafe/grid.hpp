#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace probsafe {

/// Uniform axis with `nodes` points from min to max inclusive.
struct Axis {
  double min = 0.0;
  double max = 1.0;
  std::size_t nodes = 3;

  double spacing() const { return (max - min) / static_cast<double>(nodes - 1); }
  double coord(std::size_t i) const { return min + spacing() * static_cast<double>(i); }

  friend bool operator==(const Axis&, const Axis&) = default;
};

/// Grid over (T, x_1..x_n, [L]). Values are stored row-major in that axis
/// order, so each T slice is one contiguous block.
struct GridSpec {
  Axis T{0.0, 10.0, 101};
  std::vector<Axis> x;
  std::optional<Axis> L;

  /// Throws std::invalid_argument unless every axis has >= 3 nodes and
  /// positive spacing, T starts at 0 and there is at least one x axis.
  void validate() const;

  std::size_t dims() const { return 1 + x.size() + (L ? 1 : 0); }
  const Axis& axis(std::size_t d) const;
  std::vector<std::size_t> shape() const;
  /// Row-major strides matching shape().
  std::vector<std::size_t> strides() const;
  std::size_t size() const;
  /// Nodes per T slice.
  std::size_t slice_size() const { return size() / T.nodes; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

}  // namespace probsafe
