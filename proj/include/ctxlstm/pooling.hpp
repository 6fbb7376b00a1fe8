#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ctxlstm/geometry.hpp"
#include "ctxlstm/tape.hpp"

namespace ctxlstm {

/// Square neighborhood centred on an agent, split into cells_per_side² cells.
/// `neighborhood_side` is in whatever units the positions use.
struct GridSpec {
  double neighborhood_side = 32.0;
  int cells_per_side = 8;

  double cell_size() const { return neighborhood_side / cells_per_side; }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(cells_per_side) * static_cast<std::size_t>(cells_per_side);
  }
  /// Throws ConfigError naming the offending field.
  void validate() const;
  GridSpec scaled(double factor) const { return {neighborhood_side * factor, cells_per_side}; }
};

struct CellIndex {
  int m = 0;
  int n = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Cell of `other` in the grid around `self`. The offset is self − other;
/// cells are half-open, so an offset on the upper boundary falls outside.
std::optional<CellIndex> cell_index(Point self, Point other, const GridSpec& spec);

/// Counts per cell, row-major over (m, n).
struct OccupancyGrid {
  int cells_per_side = 0;
  std::vector<double> values;

  double at(int m, int n) const { return values[static_cast<std::size_t>(m * cells_per_side + n)]; }
  double total() const;
};

/// Summed neighbor hidden states per cell; flattened as ((m·cells + n)·D + d).
struct SocialTensor {
  int cells_per_side = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> slice(int m, int n) const {
    return {values.data() + static_cast<std::size_t>(m * cells_per_side + n) * dim, dim};
  }
};

/// Distance to each static point, in scene order.
struct ContextVector {
  std::vector<double> values;
};

struct AgentPosition {
  int id = 0;
  Point pos;
};

OccupancyGrid occupancy_grid(int agent, std::span<const AgentPosition> frame, const GridSpec& spec);

SocialTensor social_tensor(int agent, std::span<const AgentPosition> frame,
                           const std::map<int, std::vector<double>>& hidden, const GridSpec& spec);

OccupancyGrid static_grid(Point position, std::span<const Point> static_points,
                          const GridSpec& spec);

/// Throws ConfigError when the scene has no static points.
ContextVector context_distances(Point position, std::span<const Point> static_points);

// Batched forms used by the model: one row per agent slot, absent slots
// (present[r] == 0) neither receive nor contribute anything. Rows are
// independent and are filled in parallel.

/// Neighbor links (self, other, cell) for every ordered pair of present agents.
std::vector<NeighborLink> neighbor_links(std::span<const Point> positions,
                                         std::span<const std::uint8_t> present,
                                         const GridSpec& spec);
/// A × cells² occupancy counts.
Matrix occupancy_rows(std::span<const Point> positions, std::span<const std::uint8_t> present,
                      const GridSpec& spec);
/// A × cells² static-point counts.
Matrix static_grid_rows(std::span<const Point> positions, std::span<const std::uint8_t> present,
                        std::span<const Point> static_points, const GridSpec& spec);
/// A × K distances.
Matrix context_rows(std::span<const Point> positions, std::span<const std::uint8_t> present,
                    std::span<const Point> static_points);

}  // namespace ctxlstm
