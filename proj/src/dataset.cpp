#include "ctxlstm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "ctxlstm/errors.hpp"
#include "ctxlstm/log.hpp"

namespace ctxlstm {

std::vector<int> TrajectoryDataset::frames() const {
  std::vector<int> out;
  for (const auto& r : records) {
    if (out.empty() || out.back() != r.frame) out.push_back(r.frame);
  }
  return out;
}

std::vector<int> TrajectoryDataset::agents() const {
  std::set<int> ids;
  for (const auto& r : records) ids.insert(r.agent);
  return {ids.begin(), ids.end()};
}

std::vector<Point> Scene::points() const {
  std::vector<Point> out;
  out.reserve(static_points.size());
  for (const auto& p : static_points) out.push_back(p.pos);
  return out;
}

TrajectoryDataset make_dataset(std::string scene_id, std::vector<Observation> records) {
  for (const auto& r : records) {
    if (!std::isfinite(r.x) || !std::isfinite(r.y)) {
      throw FormatError("trajectories: non-finite coordinate for agent " +
                        std::to_string(r.agent) + " at frame " + std::to_string(r.frame));
    }
  }
  std::sort(records.begin(), records.end(), [](const Observation& a, const Observation& b) {
    return std::tie(a.frame, a.agent) < std::tie(b.frame, b.agent);
  });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].frame == records[i - 1].frame && records[i].agent == records[i - 1].agent) {
      throw FormatError("trajectories: duplicate record for agent " +
                        std::to_string(records[i].agent) + " at frame " +
                        std::to_string(records[i].frame));
    }
  }
  return {std::move(scene_id), std::move(records)};
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  if (line.find('\t') != std::string_view::npos) {
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find('\t', start);
      out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
  } else {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ') ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
    }
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ')) f.remove_suffix(1);
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  auto d = parse_double(s);
  if (!d || std::floor(*d) != *d || std::abs(*d) > std::numeric_limits<int>::max()) {
    return std::nullopt;
  }
  return static_cast<int>(*d);
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (number == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(std::string_view(line), number);
  }
}

std::string location(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace

TrajectoryDataset parse_trajectories(std::istream& in, std::string scene_id) {
  std::vector<Observation> records;
  std::map<std::pair<int, int>, std::size_t> seen;
  bool first = true;
  for_each_line(in, [&](std::string_view line, std::size_t number) {
    const auto fields = split_fields(line);
    const bool header = first && !fields.empty() && !parse_double(fields[0]).has_value();
    first = false;
    if (header) return;
    if (fields.size() != 4) {
      throw FormatError(location(number) + "expected 4 fields (frame, agent_id, x, y), got " +
                            std::to_string(fields.size()),
                        number);
    }
    const auto frame = parse_int(fields[0]);
    const auto agent = parse_int(fields[1]);
    const auto x = parse_double(fields[2]);
    const auto y = parse_double(fields[3]);
    if (!frame || !agent || !x || !y) {
      throw FormatError(location(number) + "non-numeric field in '" + std::string(line) + "'",
                        number);
    }
    if (!std::isfinite(*x) || !std::isfinite(*y)) {
      throw FormatError(location(number) + "non-finite coordinate", number);
    }
    auto [it, inserted] = seen.emplace(std::make_pair(*frame, *agent), number);
    if (!inserted) {
      throw FormatError(location(number) + "duplicate (frame " + std::to_string(*frame) +
                            ", agent " + std::to_string(*agent) + "), first seen on line " +
                            std::to_string(it->second),
                        number);
    }
    records.push_back({*frame, *agent, *x, *y});
  });
  return make_dataset(std::move(scene_id), std::move(records));
}

TrajectoryDataset load_trajectories(const std::filesystem::path& path) {
  return load_trajectories(path, path.stem().string());
}

TrajectoryDataset load_trajectories(const std::filesystem::path& path, std::string scene_id) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trajectories file " + path.string());
  try {
    return parse_trajectories(in, std::move(scene_id));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.line());
  }
}

void write_trajectories(std::ostream& out, const TrajectoryDataset& ds) {
  out << "frame\tagent_id\tx\ty\n";
  out << std::setprecision(17);
  for (const auto& r : ds.records) {
    out << r.frame << '\t' << r.agent << '\t' << r.x << '\t' << r.y << '\n';
  }
}

void save_trajectories(const std::filesystem::path& path, const TrajectoryDataset& ds) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_trajectories(out, ds);
}

Scene parse_scene(std::istream& in, std::string scene_id) {
  Scene scene{std::move(scene_id), {}};
  std::set<std::string> labels;
  bool first = true;
  for_each_line(in, [&](std::string_view line, std::size_t number) {
    const auto fields = split_fields(line);
    if (fields.size() != 3) {
      throw FormatError(location(number) + "expected 3 fields (label, x, y), got " +
                            std::to_string(fields.size()),
                        number);
    }
    const auto x = parse_double(fields[1]);
    const auto y = parse_double(fields[2]);
    const bool header = first && (!x || !y);
    first = false;
    if (header) return;
    if (!x || !y || !std::isfinite(*x) || !std::isfinite(*y)) {
      throw FormatError(location(number) + "non-numeric coordinate in '" + std::string(line) + "'",
                        number);
    }
    std::string label(fields[0]);
    if (!labels.insert(label).second) {
      throw FormatError(location(number) + "duplicate static point label '" + label + "'",
                        number);
    }
    scene.static_points.push_back({std::move(label), {*x, *y}});
  });
  return scene;
}

Scene load_scene(const std::filesystem::path& path, std::string scene_id) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open scene file " + path.string());
  try {
    return parse_scene(in, std::move(scene_id));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.line());
  }
}

void write_scene(std::ostream& out, const Scene& scene) {
  out << "label\tx\ty\n";
  out << std::setprecision(17);
  for (const auto& p : scene.static_points) {
    out << p.label << '\t' << p.pos.x << '\t' << p.pos.y << '\n';
  }
}

void save_scene(const std::filesystem::path& path, const Scene& scene) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_scene(out, scene);
}

TrajectoryDataset subsample(const TrajectoryDataset& ds, int stride) {
  if (stride < 1) throw ConfigError("subsample: stride must be >= 1, got " + std::to_string(stride));
  const auto frames = ds.frames();
  if (frames.empty()) return ds;
  int base = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const int gap = frames[i] - frames[i - 1];
    if (base == 0 || gap < base) base = gap;
  }
  if (base == 0) base = 1;
  const long step = static_cast<long>(stride) * base;
  const int first = frames.front();
  std::vector<Observation> kept;
  for (const auto& r : ds.records) {
    const long offset = static_cast<long>(r.frame) - first;
    if (offset % step == 0) kept.push_back({static_cast<int>(offset / step), r.agent, r.x, r.y});
  }
  return make_dataset(ds.scene_id, std::move(kept));
}

std::size_t SceneWindow::full_count() const {
  return static_cast<std::size_t>(
      std::count_if(agents.begin(), agents.end(), [](const WindowAgent& a) { return a.full; }));
}

std::vector<SceneWindow> make_windows(const TrajectoryDataset& ds, const WindowSpec& spec) {
  if (spec.t_obs < 2) throw ConfigError("window: t_obs must be >= 2, got " + std::to_string(spec.t_obs));
  if (spec.t_pred < 1) {
    throw ConfigError("window: t_pred must be >= 1, got " + std::to_string(spec.t_pred));
  }
  if (spec.stride < 1) {
    throw ConfigError("window: stride must be >= 1, got " + std::to_string(spec.stride));
  }
  std::vector<SceneWindow> out;
  if (ds.empty()) return out;
  const int length = spec.t_obs + spec.t_pred;
  const int first = ds.records.front().frame;
  const int last = ds.records.back().frame;
  const int span = last - first + 1;
  if (span < length) {
    log::warn("scene " + ds.scene_id + ": " + std::to_string(span) +
              " sampled frames, shorter than one window of " + std::to_string(length) +
              "; no windows");
    return out;
  }

  std::map<int, std::vector<std::pair<int, Point>>> tracks;
  for (const auto& r : ds.records) tracks[r.agent].push_back({r.frame, {r.x, r.y}});

  for (int s = first; s + length - 1 <= last; s += spec.stride) {
    SceneWindow w;
    w.scene_id = ds.scene_id;
    w.start = s;
    w.t_obs = spec.t_obs;
    w.t_pred = spec.t_pred;
    for (const auto& [id, track] : tracks) {
      auto lo = std::lower_bound(track.begin(), track.end(), s,
                                 [](const auto& e, int f) { return e.first < f; });
      if (lo == track.end() || lo->first >= s + length) continue;
      WindowAgent a;
      a.id = id;
      a.pos.assign(static_cast<std::size_t>(length), Point{});
      a.present.assign(static_cast<std::size_t>(length), 0);
      int count = 0;
      for (auto it = lo; it != track.end() && it->first < s + length; ++it) {
        const auto t = static_cast<std::size_t>(it->first - s);
        a.pos[t] = it->second;
        a.present[t] = 1;
        ++count;
      }
      a.full = count == length;
      w.agents.push_back(std::move(a));
    }
    if (w.full_count() > 0) out.push_back(std::move(w));
  }
  if (out.empty()) {
    log::warn("scene " + ds.scene_id + ": no window with an agent spanning all " +
              std::to_string(length) + " frames");
  }
  return out;
}

std::vector<Fold> make_folds(const std::vector<std::string>& scenes, int k) {
  const int n = static_cast<int>(scenes.size());
  if (k < 2 || k > n) {
    throw ConfigError("folds: k = " + std::to_string(k) + " requires 2 <= k <= number of scenes (" +
                      std::to_string(n) + ")");
  }
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (int g = 0; g < k; ++g) {
    const int lo = g * n / k;
    const int hi = (g + 1) * n / k;
    for (int i = 0; i < n; ++i) {
      auto& dst = (i >= lo && i < hi) ? folds[g].test : folds[g].train;
      dst.push_back(scenes[static_cast<std::size_t>(i)]);
    }
  }
  return folds;
}

TrajectoryDataset apply_transform(const TrajectoryDataset& ds, const Transform& t) {
  TrajectoryDataset out = ds;
  for (auto& r : out.records) {
    const Point p = t.apply({r.x, r.y});
    r.x = p.x;
    r.y = p.y;
  }
  return out;
}

Scene apply_transform(const Scene& scene, const Transform& t) {
  Scene out = scene;
  for (auto& p : out.static_points) p.pos = t.apply(p.pos);
  return out;
}

NormalizedScene normalize(const TrajectoryDataset& ds, const Scene& scene) {
  if (ds.empty()) throw UsageError("normalize: dataset " + ds.scene_id + " is empty");
  double xmin = ds.records.front().x, xmax = xmin;
  double ymin = ds.records.front().y, ymax = ymin;
  auto extend = [&](double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  };
  for (const auto& r : ds.records) extend(r.x, r.y);
  for (const auto& p : scene.static_points) extend(p.pos.x, p.pos.y);
  const double extent = std::max(xmax - xmin, ymax - ymin);
  Transform t;
  t.center = {(xmin + xmax) / 2.0, (ymin + ymax) / 2.0};
  t.scale = extent > 0.0 ? 2.0 / extent : 1.0;
  return {apply_transform(ds, t), apply_transform(scene, t), t};
}

}  // namespace ctxlstm
