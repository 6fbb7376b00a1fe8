#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctxlstm/geometry.hpp"

namespace ctxlstm {

struct Observation {
  int frame = 0;
  int agent = 0;
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Per-scene trajectories, sorted by (frame, agent), one record per pair.
struct TrajectoryDataset {
  std::string scene_id;
  std::vector<Observation> records;

  /// Distinct frame indices in increasing order.
  std::vector<int> frames() const;
  /// Distinct agent ids in increasing order.
  std::vector<int> agents() const;
  bool empty() const { return records.empty(); }
};

struct StaticPoint {
  std::string label;
  Point pos;
};

/// Static scene elements; their order defines the context vector index.
struct Scene {
  std::string scene_id;
  std::vector<StaticPoint> static_points;

  std::size_t size() const { return static_points.size(); }
  std::vector<Point> points() const;
};

/// Sorts and validates records: finite coordinates, unique (frame, agent).
TrajectoryDataset make_dataset(std::string scene_id, std::vector<Observation> records);

/// `frame<TAB>agent_id<TAB>x<TAB>y`, optional header line.
TrajectoryDataset parse_trajectories(std::istream& in, std::string scene_id);
TrajectoryDataset load_trajectories(const std::filesystem::path& path);
TrajectoryDataset load_trajectories(const std::filesystem::path& path, std::string scene_id);
void write_trajectories(std::ostream& out, const TrajectoryDataset& ds);
void save_trajectories(const std::filesystem::path& path, const TrajectoryDataset& ds);

/// `label<TAB>x<TAB>y`, optional header line.
Scene parse_scene(std::istream& in, std::string scene_id);
Scene load_scene(const std::filesystem::path& path, std::string scene_id);
void write_scene(std::ostream& out, const Scene& scene);
void save_scene(const std::filesystem::path& path, const Scene& scene);

/// Keeps every `stride`-th native frame counted from the first frame and
/// re-indexes the kept frames 0, 1, 2, ... The native frame spacing is the
/// smallest gap between consecutive distinct frames.
TrajectoryDataset subsample(const TrajectoryDataset& ds, int stride = 10);

struct WindowAgent {
  int id = 0;
  /// Present at every step of the window; only these are scored or predicted.
  bool full = false;
  std::vector<Point> pos;
  std::vector<std::uint8_t> present;
};

/// t_obs + t_pred consecutive sampled frames of one scene.
struct SceneWindow {
  std::string scene_id;
  int start = 0;
  int t_obs = 8;
  int t_pred = 12;
  std::vector<WindowAgent> agents;

  int length() const { return t_obs + t_pred; }
  std::size_t full_count() const;
};

struct WindowSpec {
  int t_obs = 8;
  int t_pred = 12;
  int stride = 1;
};

/// Sliding windows over a subsampled dataset (frames 0..F−1). Windows with
/// no full-span agent are skipped.
std::vector<SceneWindow> make_windows(const TrajectoryDataset& ds, const WindowSpec& spec);

struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Leave-one-group-out: scenes are split in listed order into k contiguous
/// groups and fold g tests group g.
std::vector<Fold> make_folds(const std::vector<std::string>& scenes, int k);

/// Isotropic similarity p ↦ (p − center)·scale.
struct Transform {
  Point center;
  double scale = 1.0;

  Point apply(Point p) const { return {(p.x - center.x) * scale, (p.y - center.y) * scale}; }
  Point invert(Point p) const { return {p.x / scale + center.x, p.y / scale + center.y}; }
};

struct NormalizedScene {
  TrajectoryDataset dataset;
  Scene scene;
  Transform transform;
};

/// Fits the joint bounding box of trajectories and static points into [−1, 1]².
NormalizedScene normalize(const TrajectoryDataset& ds, const Scene& scene);
TrajectoryDataset apply_transform(const TrajectoryDataset& ds, const Transform& t);
Scene apply_transform(const Scene& scene, const Transform& t);

}  // namespace ctxlstm
