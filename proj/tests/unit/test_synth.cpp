#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "ctxlstm/errors.hpp"
#include "ctxlstm/synth.hpp"

using namespace ctxlstm;

namespace {

std::map<int, std::vector<Point>> tracks(const TrajectoryDataset& ds) {
  std::map<int, std::vector<Point>> out;
  for (const auto& r : ds.records) out[r.agent].push_back({r.x, r.y});
  return out;
}

SynthConfig quiet() {
  SynthConfig c;
  c.noise = 0.0;
  c.dwell_steps = 0;
  c.total_steps = 600;
  return c;
}

std::string config_error(const nlohmann::json& doc) {
  try {
    synth_config_from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("a lone agent walks straight at the preferred speed") {
  SynthConfig c = quiet();
  c.plans = {AgentPlan{0, {1.0, 5.0}, {}, {9.0, 5.0}}};
  const auto out = generate(c, "line");
  const auto tr = tracks(out.dataset)[0];
  REQUIRE(tr.size() > 100);
  for (std::size_t i = 1; i < tr.size(); ++i) {
    CHECK(tr[i].y == 5.0);
    CHECK(tr[i].x - tr[i - 1].x == doctest::Approx(0.05).epsilon(1e-9));
  }
  CHECK(std::abs(tr.back().x - 9.0) <= c.arrival_radius + c.preferred_speed);
  CHECK(out.dataset.scene_id == "line");
}

TEST_CASE("head-on agents keep their distance") {
  SynthConfig c = quiet();
  c.repulsion_radius = 0.5;
  c.repulsion_strength = 0.1;
  c.plans = {AgentPlan{0, {1.0, 5.0}, {}, {9.0, 5.02}}, AgentPlan{0, {9.0, 5.0}, {}, {1.0, 4.98}}};
  auto tr = tracks(generate(c).dataset);
  double closest = std::numeric_limits<double>::infinity();
  const std::size_t n = std::min(tr[0].size(), tr[1].size());
  REQUIRE(n > 50);
  for (std::size_t i = 0; i < n; ++i) closest = std::min(closest, distance(tr[0][i], tr[1][i]));
  CHECK(closest > 0.5 * c.repulsion_radius);
}

TEST_CASE("agents dwell at their visits") {
  SynthConfig c = quiet();
  c.dwell_steps = 60;
  c.repulsion_strength = 0.0;
  const Point visit{5.0, 5.0};
  c.plans = {AgentPlan{0, {1.0, 5.0}, {visit}, {9.0, 9.0}}};
  const auto tr = tracks(generate(c).dataset)[0];
  int run = 0, longest = 0;
  for (const auto& p : tr) {
    run = distance(p, visit) <= c.arrival_radius ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  CHECK(longest >= c.dwell_steps);
  CHECK(distance(tr.back(), {9.0, 9.0}) <= c.arrival_radius + c.preferred_speed);
}

TEST_CASE("dwell of 10 steps shows as slow motion near the attractor") {
  SynthConfig c = quiet();
  c.dwell_steps = 10;
  c.attractors = {{8.0, 8.0}};
  c.plans = {AgentPlan{0, {1.0, 8.0}, {{8.0, 8.0}}, {15.0, 8.0}}};
  const auto tr = tracks(generate(c).dataset)[0];
  int run = 0, longest = 0;
  for (std::size_t i = 1; i < tr.size(); ++i) {
    const bool slow = distance(tr[i], tr[i - 1]) < 0.05;
    const bool near = distance(tr[i], {8.0, 8.0}) <= 2.0 * c.arrival_radius;
    run = slow && near ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  CHECK(longest >= 10);
}

TEST_CASE("random scenes are seeded and respect the layout") {
  SynthConfig c;
  c.agents = 12;
  c.total_steps = 400;
  c.seed = 21;
  const auto a = generate(c);
  const auto b = generate(c);
  CHECK(a.dataset.records == b.dataset.records);
  c.seed = 22;
  CHECK_FALSE(generate(c).dataset.records == a.dataset.records);

  REQUIRE(a.scene.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const Point p = a.scene.static_points[i].pos;
    CHECK(p.x >= c.attractor_margin);
    CHECK(p.x <= c.arena_width - c.attractor_margin);
    for (std::size_t j = 0; j < i; ++j) {
      CHECK(distance(p, a.scene.static_points[j].pos) >= c.attractor_separation);
    }
  }
  // Spawns are staggered by the spawn interval.
  std::map<int, int> first;
  for (const auto& r : a.dataset.records) first.try_emplace(r.agent, r.frame);
  for (const auto& [id, f] : first) CHECK(f == id * c.spawn_interval);

  c.attractors = {{4, 4}, {12, 12}};
  const auto fixed = generate(c);
  REQUIRE(fixed.scene.size() == 2);
  CHECK(fixed.scene.static_points[1].pos == Point{12, 12});
}

TEST_CASE("config JSON") {
  SynthConfig c;
  c.agents = 7;
  c.seed = 99;
  c.attractors = {{1, 2}};
  c.plans = {AgentPlan{3, {0, 0}, {{1, 1}}, {2, 2}}};
  const auto back = synth_config_from_json(synth_config_to_json(c));
  CHECK(synth_config_to_json(back) == synth_config_to_json(c));
  CHECK(back.plans[0].visits[0] == Point{1, 1});

  CHECK(synth_config_from_json(nlohmann::json::object()).agents == SynthConfig{}.agents);
  CHECK(config_error({{"agnets", 3}}).find("agnets") != std::string::npos);
  CHECK(config_error({{"preferred_speed", -1.0}}).find("preferred_speed") != std::string::npos);
  CHECK(config_error({{"noise", "loud"}}).find("noise") != std::string::npos);
  CHECK(config_error({{"attractors", {{1, 2, 3}}}}).find("attractors") != std::string::npos);
  CHECK_FALSE(config_error(nlohmann::json::array()).empty());

  SynthConfig bad;
  bad.total_steps = 0;
  CHECK_THROWS_AS(generate(bad), ConfigError);
}
