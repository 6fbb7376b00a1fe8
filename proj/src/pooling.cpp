#include "ctxlstm/pooling.hpp"

#include <cmath>
#include <string>

#include "ctxlstm/errors.hpp"

namespace ctxlstm {

void GridSpec::validate() const {
  if (!(neighborhood_side > 0.0) || !std::isfinite(neighborhood_side)) {
    throw ConfigError("grid.neighborhood_side must be positive, got " +
                      std::to_string(neighborhood_side));
  }
  if (cells_per_side <= 0) {
    throw ConfigError("grid.cells_per_side must be positive, got " +
                      std::to_string(cells_per_side));
  }
}

std::optional<CellIndex> cell_index(Point self, Point other, const GridSpec& spec) {
  const double half = spec.neighborhood_side / 2.0;
  const double cell = spec.cell_size();
  const double mx = std::floor((self.x - other.x + half) / cell);
  const double ny = std::floor((self.y - other.y + half) / cell);
  if (!(mx >= 0.0 && mx < spec.cells_per_side && ny >= 0.0 && ny < spec.cells_per_side)) {
    return std::nullopt;
  }
  return CellIndex{static_cast<int>(mx), static_cast<int>(ny)};
}

double OccupancyGrid::total() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

namespace {

const AgentPosition& find_agent(int agent, std::span<const AgentPosition> frame) {
  for (const auto& a : frame) {
    if (a.id == agent) return a;
  }
  throw UsageError("pooling: agent " + std::to_string(agent) + " is not present in the frame");
}

std::size_t flat(CellIndex c, const GridSpec& spec) {
  return static_cast<std::size_t>(c.m * spec.cells_per_side + c.n);
}

}  // namespace

OccupancyGrid occupancy_grid(int agent, std::span<const AgentPosition> frame,
                             const GridSpec& spec) {
  const Point self = find_agent(agent, frame).pos;
  OccupancyGrid grid{spec.cells_per_side, std::vector<double>(spec.cell_count(), 0.0)};
  for (const auto& other : frame) {
    if (other.id == agent) continue;
    if (auto c = cell_index(self, other.pos, spec)) grid.values[flat(*c, spec)] += 1.0;
  }
  return grid;
}

SocialTensor social_tensor(int agent, std::span<const AgentPosition> frame,
                           const std::map<int, std::vector<double>>& hidden,
                           const GridSpec& spec) {
  const Point self = find_agent(agent, frame).pos;
  std::size_t dim = 0;
  for (const auto& a : frame) {
    auto it = hidden.find(a.id);
    if (it == hidden.end()) {
      throw UsageError("social_tensor: no hidden state for agent " + std::to_string(a.id));
    }
    if (dim == 0) dim = it->second.size();
    if (it->second.size() != dim) {
      throw UsageError("social_tensor: hidden state of agent " + std::to_string(a.id) +
                       " has dimension " + std::to_string(it->second.size()) + ", expected " +
                       std::to_string(dim));
    }
  }
  SocialTensor t{spec.cells_per_side, dim, std::vector<double>(spec.cell_count() * dim, 0.0)};
  for (const auto& other : frame) {
    if (other.id == agent) continue;
    auto c = cell_index(self, other.pos, spec);
    if (!c) continue;
    const auto& h = hidden.at(other.id);
    double* dst = t.values.data() + flat(*c, spec) * dim;
    for (std::size_t d = 0; d < dim; ++d) dst[d] += h[d];
  }
  return t;
}

OccupancyGrid static_grid(Point position, std::span<const Point> static_points,
                          const GridSpec& spec) {
  OccupancyGrid grid{spec.cells_per_side, std::vector<double>(spec.cell_count(), 0.0)};
  for (const Point& p : static_points) {
    if (auto c = cell_index(position, p, spec)) grid.values[flat(*c, spec)] += 1.0;
  }
  return grid;
}

ContextVector context_distances(Point position, std::span<const Point> static_points) {
  if (static_points.empty()) {
    throw ConfigError("context_distances: scene has no static points (K = 0)");
  }
  ContextVector v;
  v.values.reserve(static_points.size());
  for (const Point& p : static_points) v.values.push_back(distance(position, p));
  return v;
}

namespace {

void check_batch(std::span<const Point> positions, std::span<const std::uint8_t> present) {
  if (positions.size() != present.size()) {
    throw UsageError("pooling: positions and presence mask differ in length");
  }
}

}  // namespace

std::vector<NeighborLink> neighbor_links(std::span<const Point> positions,
                                         std::span<const std::uint8_t> present,
                                         const GridSpec& spec) {
  check_batch(positions, present);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(positions.size());
  std::vector<std::vector<NeighborLink>> per_row(positions.size());
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!present[i]) continue;
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      if (j == i || !present[j]) continue;
      if (auto c = cell_index(positions[i], positions[j], spec)) {
        per_row[i].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                              static_cast<std::uint32_t>(flat(*c, spec))});
      }
    }
  }
  std::vector<NeighborLink> links;
  for (auto& r : per_row) links.insert(links.end(), r.begin(), r.end());
  return links;
}

Matrix occupancy_rows(std::span<const Point> positions, std::span<const std::uint8_t> present,
                      const GridSpec& spec) {
  Matrix out(positions.size(), spec.cell_count());
  for (const auto& l : neighbor_links(positions, present, spec)) out(l.self, l.cell) += 1.0;
  return out;
}

Matrix static_grid_rows(std::span<const Point> positions, std::span<const std::uint8_t> present,
                        std::span<const Point> static_points, const GridSpec& spec) {
  check_batch(positions, present);
  Matrix out(positions.size(), spec.cell_count());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(positions.size());
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!present[i]) continue;
    for (const Point& p : static_points) {
      if (auto c = cell_index(positions[i], p, spec)) out(i, flat(*c, spec)) += 1.0;
    }
  }
  return out;
}

Matrix context_rows(std::span<const Point> positions, std::span<const std::uint8_t> present,
                    std::span<const Point> static_points) {
  check_batch(positions, present);
  if (static_points.empty()) {
    throw ConfigError("context_distances: scene has no static points (K = 0)");
  }
  Matrix out(positions.size(), static_points.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(positions.size());
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!present[i]) continue;
    for (std::size_t k = 0; k < static_points.size(); ++k) {
      out(i, k) = distance(positions[i], static_points[k]);
    }
  }
  return out;
}

}  // namespace ctxlstm
