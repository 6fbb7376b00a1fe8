#include "ctxlstm/synth.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>

#include "ctxlstm/errors.hpp"
#include "ctxlstm/rng.hpp"

namespace ctxlstm {

void SynthConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("synth." + field + " " + why);
  };
  if (plans.empty() && agents < 0) fail("agents", "must be >= 0");
  if (!(arena_width > 0.0)) fail("arena_width", "must be > 0");
  if (!(arena_height > 0.0)) fail("arena_height", "must be > 0");
  if (attractor_count < 0) fail("attractor_count", "must be >= 0");
  if (visits_per_agent < 0) fail("visits_per_agent", "must be >= 0");
  if (!(preferred_speed > 0.0)) fail("preferred_speed", "must be > 0");
  if (repulsion_strength < 0.0) fail("repulsion_strength", "must be >= 0");
  if (!(repulsion_radius > 0.0)) fail("repulsion_radius", "must be > 0");
  if (dwell_steps < 0) fail("dwell_steps", "must be >= 0");
  if (visit_spread < 0.0) fail("visit_spread", "must be >= 0");
  if (!(arrival_radius > 0.0)) fail("arrival_radius", "must be > 0");
  if (noise < 0.0) fail("noise", "must be >= 0");
  if (spawn_interval < 0) fail("spawn_interval", "must be >= 0");
  if (total_steps < 1) fail("total_steps", "must be >= 1");
  if (attractor_margin < 0.0 || 2.0 * attractor_margin >= std::min(arena_width, arena_height)) {
    fail("attractor_margin", "must leave room inside the arena");
  }
}

namespace {

Point json_point(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("synth." + field + " must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json point_json(Point p) { return nlohmann::json::array({p.x, p.y}); }

}  // namespace

SynthConfig synth_config_from_json(const nlohmann::json& doc) {
  static const std::set<std::string> known = {
      "agents",           "arena_width",        "arena_height",     "attractor_count",
      "attractors",       "attractor_margin",   "attractor_separation", "visits_per_agent",
      "preferred_speed",  "repulsion_strength", "repulsion_radius", "dwell_steps",
      "visit_spread",     "arrival_radius",     "noise",            "spawn_interval",
      "total_steps",      "seed",               "plans"};
  if (!doc.is_object()) throw ConfigError("synth config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ConfigError("synth config: unknown field '" + key + "'");
  }
  SynthConfig c;
  std::string field;
  try {
    auto get = [&](const char* name, auto& dst) {
      field = name;
      if (doc.contains(name)) dst = doc.at(name).get<std::decay_t<decltype(dst)>>();
    };
    get("agents", c.agents);
    get("arena_width", c.arena_width);
    get("arena_height", c.arena_height);
    get("attractor_count", c.attractor_count);
    get("attractor_margin", c.attractor_margin);
    get("attractor_separation", c.attractor_separation);
    get("visits_per_agent", c.visits_per_agent);
    get("preferred_speed", c.preferred_speed);
    get("repulsion_strength", c.repulsion_strength);
    get("repulsion_radius", c.repulsion_radius);
    get("dwell_steps", c.dwell_steps);
    get("visit_spread", c.visit_spread);
    get("arrival_radius", c.arrival_radius);
    get("noise", c.noise);
    get("spawn_interval", c.spawn_interval);
    get("total_steps", c.total_steps);
    get("seed", c.seed);
    field = "attractors";
    if (doc.contains("attractors")) {
      for (const auto& p : doc.at("attractors")) c.attractors.push_back(json_point(p, field));
    }
    field = "plans";
    if (doc.contains("plans")) {
      for (const auto& p : doc.at("plans")) {
        AgentPlan plan;
        plan.spawn_step = p.value("spawn_step", 0);
        plan.start = json_point(p.at("start"), "plans.start");
        plan.exit = json_point(p.at("exit"), "plans.exit");
        if (p.contains("visits")) {
          for (const auto& v : p.at("visits")) plan.visits.push_back(json_point(v, "plans.visits"));
        }
        c.plans.push_back(std::move(plan));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("synth." + field + ": " + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json synth_config_to_json(const SynthConfig& c) {
  nlohmann::json attractors = nlohmann::json::array();
  for (const auto& p : c.attractors) attractors.push_back(point_json(p));
  nlohmann::json plans = nlohmann::json::array();
  for (const auto& p : c.plans) {
    nlohmann::json visits = nlohmann::json::array();
    for (const auto& v : p.visits) visits.push_back(point_json(v));
    plans.push_back({{"spawn_step", p.spawn_step},
                     {"start", point_json(p.start)},
                     {"visits", visits},
                     {"exit", point_json(p.exit)}});
  }
  return {{"agents", c.agents},
          {"arena_width", c.arena_width},
          {"arena_height", c.arena_height},
          {"attractor_count", c.attractor_count},
          {"attractors", attractors},
          {"attractor_margin", c.attractor_margin},
          {"attractor_separation", c.attractor_separation},
          {"visits_per_agent", c.visits_per_agent},
          {"preferred_speed", c.preferred_speed},
          {"repulsion_strength", c.repulsion_strength},
          {"repulsion_radius", c.repulsion_radius},
          {"dwell_steps", c.dwell_steps},
          {"visit_spread", c.visit_spread},
          {"arrival_radius", c.arrival_radius},
          {"noise", c.noise},
          {"spawn_interval", c.spawn_interval},
          {"total_steps", c.total_steps},
          {"seed", c.seed},
          {"plans", plans}};
}

namespace {

struct Walker {
  int id = 0;
  int spawn_step = 0;
  Point pos;
  std::vector<Point> targets;  // visits then exit
  std::size_t next = 0;
  int dwell_left = -1;         // -1: walking; >= 0: dwelling
  bool active = false;
  bool done = false;

  bool at_exit() const { return next + 1 == targets.size(); }
};

Point boundary_point(Rng& rng, double w, double h) {
  const auto side = rng.below(4);
  const double u = rng.uniform();
  switch (side) {
    case 0: return {u * w, 0.0};
    case 1: return {w, u * h};
    case 2: return {u * w, h};
    default: return {0.0, u * h};
  }
}

std::vector<Point> place_attractors(const SynthConfig& c, Rng& rng) {
  if (!c.attractors.empty()) return c.attractors;
  std::vector<Point> out;
  for (int k = 0; k < c.attractor_count; ++k) {
    Point best;
    double best_gap = -1.0;
    // Rejection sampling; fall back to the most separated candidate.
    for (int attempt = 0; attempt < 200; ++attempt) {
      const Point p{rng.uniform(c.attractor_margin, c.arena_width - c.attractor_margin),
                    rng.uniform(c.attractor_margin, c.arena_height - c.attractor_margin)};
      double gap = std::numeric_limits<double>::infinity();
      for (const auto& q : out) gap = std::min(gap, distance(p, q));
      if (gap > best_gap) {
        best = p;
        best_gap = gap;
      }
      if (gap >= c.attractor_separation) break;
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace

SynthOutput generate(const SynthConfig& config, const std::string& scene_id) {
  config.validate();
  Rng rng(config.seed);
  const auto attractors = place_attractors(config, rng);

  std::vector<Walker> walkers;
  if (!config.plans.empty()) {
    for (std::size_t i = 0; i < config.plans.size(); ++i) {
      const auto& p = config.plans[i];
      Walker w;
      w.id = static_cast<int>(i);
      w.spawn_step = p.spawn_step;
      w.pos = p.start;
      w.targets = p.visits;
      w.targets.push_back(p.exit);
      walkers.push_back(std::move(w));
    }
  } else {
    const int visits = std::min<int>(config.visits_per_agent, static_cast<int>(attractors.size()));
    for (int i = 0; i < config.agents; ++i) {
      Walker w;
      w.id = i;
      w.spawn_step = i * config.spawn_interval;
      w.pos = boundary_point(rng, config.arena_width, config.arena_height);
      std::vector<std::size_t> order(attractors.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      rng.shuffle(order.begin(), order.end());
      for (int v = 0; v < visits; ++v) {
        const double r = config.visit_spread * std::sqrt(rng.uniform());
        const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
        w.targets.push_back(attractors[order[static_cast<std::size_t>(v)]] +
                            Point{r * std::cos(th), r * std::sin(th)});
      }
      Point exit = boundary_point(rng, config.arena_width, config.arena_height);
      w.targets.push_back(exit);
      walkers.push_back(std::move(w));
    }
  }

  std::vector<Observation> records;
  std::vector<Point> velocity(walkers.size());
  for (int step = 0; step < config.total_steps; ++step) {
    for (auto& w : walkers) {
      if (!w.active && !w.done && w.spawn_step == step) w.active = true;
    }
    for (const auto& w : walkers) {
      if (w.active) records.push_back({step, w.id, w.pos.x, w.pos.y});
    }
    for (std::size_t i = 0; i < walkers.size(); ++i) {
      const Walker& w = walkers[i];
      if (!w.active) continue;
      const Point target = w.targets[w.next];
      const Point to = target - w.pos;
      const double dist = norm(to);
      // Dwelling agents only hold their spot, at half the walking speed.
      const double speed = w.dwell_left > 0 ? 0.5 * config.preferred_speed : config.preferred_speed;
      Point v = dist <= speed ? to : (speed / dist) * to;
      if (config.repulsion_strength > 0.0) {
        for (std::size_t j = 0; j < walkers.size(); ++j) {
          if (j == i || !walkers[j].active) continue;
          const Point away = w.pos - walkers[j].pos;
          const double d = norm(away);
          if (d < 1e-12) continue;
          const double mag = config.repulsion_strength * std::exp(-d / config.repulsion_radius);
          v = v + (mag / d) * away;
        }
      }
      if (config.noise > 0.0) v = v + Point{config.noise * rng.normal(), config.noise * rng.normal()};
      velocity[i] = v;
    }
    for (std::size_t i = 0; i < walkers.size(); ++i) {
      Walker& w = walkers[i];
      if (!w.active) continue;
      w.pos = w.pos + velocity[i];
      if (w.dwell_left > 0) {
        --w.dwell_left;
        if (w.dwell_left == 0) {
          w.dwell_left = -1;
          ++w.next;
        }
        continue;
      }
      if (distance(w.pos, w.targets[w.next]) <= config.arrival_radius) {
        if (w.at_exit()) {
          w.active = false;
          w.done = true;
        } else if (config.dwell_steps > 0) {
          w.dwell_left = config.dwell_steps;
        } else {
          ++w.next;
        }
      }
    }
  }

  SynthOutput out;
  out.dataset = make_dataset(scene_id, std::move(records));
  out.scene.scene_id = scene_id;
  for (std::size_t k = 0; k < attractors.size(); ++k) {
    out.scene.static_points.push_back({"attractor_" + std::to_string(k), attractors[k]});
  }
  return out;
}

}  // namespace ctxlstm
