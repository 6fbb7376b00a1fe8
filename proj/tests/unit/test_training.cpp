#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "ctxlstm/errors.hpp"
#include "ctxlstm/training.hpp"

using namespace ctxlstm;

namespace {

SceneWindow walking_window(int start, double heading, int agents = 2) {
  SceneWindow w;
  w.scene_id = "walk";
  w.start = start;
  w.t_obs = 3;
  w.t_pred = 3;
  for (int a = 0; a < agents; ++a) {
    WindowAgent ag;
    ag.id = a;
    ag.full = true;
    for (int t = 0; t < w.length(); ++t) {
      const double s = 0.05 * (start + t);
      ag.pos.push_back({-0.5 + s * std::cos(heading) + 0.3 * a, 0.2 * a + s * std::sin(heading)});
      ag.present.push_back(1);
    }
    w.agents.push_back(ag);
  }
  return w;
}

HyperParams tiny_hyper() {
  HyperParams hp;
  hp.embed_dim = 4;
  hp.hidden_dim = 6;
  hp.grid = GridSpec{1.0, 4};
  return hp;
}

Weights filled(const Weights& shapes, double v) {
  Weights w = zeros_like(shapes);
  w.for_each([v](std::string_view, Matrix& m) { m.fill(v); });
  return w;
}

}  // namespace

TEST_CASE("rmsprop examples") {
  TrainConfig cfg;
  cfg.learning_rate = 0.005;
  cfg.rmsprop_decay = 0.95;
  cfg.epsilon = 1e-8;

  Matrix p(1, 1, 0.0), g(1, 1, 1.0), v(1, 1, 0.0);
  rmsprop_update(p, g, v, cfg);
  CHECK(v(0, 0) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(-p(0, 0) == doctest::Approx(0.005 / (std::sqrt(0.05) + 1e-8)).epsilon(1e-15));
  CHECK(-p(0, 0) == doctest::Approx(0.022360).epsilon(1e-4));

  Matrix p2(1, 1, 3.0), g0(1, 1, 0.0), v2(1, 1, 0.4);
  rmsprop_update(p2, g0, v2, cfg);
  CHECK(p2(0, 0) == 3.0);
  CHECK(v2(0, 0) == doctest::Approx(0.38).epsilon(1e-15));

  Matrix p3(1, 1, 0.0), g3(1, 1, 2.5), v3(1, 1, 0.0);
  double prev = 0.0;
  for (int i = 0; i < 2000; ++i) {
    prev = p3(0, 0);
    rmsprop_update(p3, g3, v3, cfg);
  }
  CHECK(prev - p3(0, 0) == doctest::Approx(cfg.learning_rate).epsilon(1e-6));

  Matrix wrong(2, 1);
  CHECK_THROWS_AS(rmsprop_update(p, wrong, v, cfg), ConfigError);
}

TEST_CASE("rmsprop over a Weights structure touches every matrix") {
  const auto params = Parameters::initialize(ModelVariant::parse("ca-s-lstm"), [] {
    auto hp = tiny_hyper();
    hp.static_points = 2;
    return hp;
  }(), 3);
  Weights w = params.weights;
  const Weights g = filled(w, 1.0);
  OptimizerState st = OptimizerState::for_weights(w);
  TrainConfig cfg;
  rmsprop_update(w, g, st, cfg);
  params.weights.for_each([&](std::string_view name, const Matrix& before) {
    const Matrix& after = *find_matrix(w, name);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] < before[i]);
  });
}

TEST_CASE("gradient clipping examples") {
  const auto params = Parameters::initialize({}, tiny_hyper(), 1);
  Weights g = zeros_like(params.weights);
  g.head(0, 0) = 12.0;
  g.head(1, 0) = 16.0;  // norm 20
  CHECK(clip_gradients(g, 10.0) == doctest::Approx(20.0));
  CHECK(g.head(0, 0) == doctest::Approx(6.0));
  CHECK(g.head(1, 0) == doctest::Approx(8.0));
  CHECK(global_norm(g) == doctest::Approx(10.0));

  Weights h = zeros_like(params.weights);
  h.gates(0, 0) = 3.0;
  h.head_bias(0, 0) = 4.0;  // norm 5
  const Weights copy = h;
  CHECK(clip_gradients(h, 10.0) == doctest::Approx(5.0));
  h.for_each([&](std::string_view name, const Matrix& m) {
    CHECK(m == *find_matrix(const_cast<Weights&>(copy), name));
  });

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Weights r = zeros_like(params.weights);
    const double scale = std::exp(rng.uniform(-5.0, 8.0));
    r.for_each([&](std::string_view, Matrix& m) {
      for (auto& x : m.values()) x = scale * rng.normal();
    });
    const double clip = rng.uniform(0.1, 50.0);
    clip_gradients(r, clip);
    CHECK(global_norm(r) <= clip + 1e-12 * std::max(1.0, clip));
  }
  CHECK_THROWS_AS(clip_gradients(h, 0.0), ConfigError);
}

TEST_CASE("config validation names the field") {
  TrainConfig cfg;
  cfg.rmsprop_decay = 1.0;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("rmsprop_decay") != std::string::npos);
  }
  TrainConfig neg;
  neg.epochs = -1;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  TrainConfig lr;
  lr.learning_rate = 0.0;
  CHECK_THROWS_AS(lr.validate(), ConfigError);
}

TEST_CASE("zero epochs returns the seeded initialization") {
  const auto w = walking_window(0, 0.3);
  SceneContext ctx{{}, GridSpec{1.0, 4}};
  const std::vector<TrainingExample> ex{{&w, &ctx}};
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 11;
  const auto r = train(ex, {}, tiny_hyper(), cfg);
  CHECK(r.history.empty());
  CHECK(r.checkpoint.params.weights == Parameters::initialize({}, tiny_hyper(), 11).weights);
}

TEST_CASE("training is deterministic and lowers the loss") {
  std::vector<SceneWindow> windows;
  for (int s = 0; s < 6; ++s) windows.push_back(walking_window(s, 0.2 + 0.1 * s, 3));
  SceneContext ctx{{{0.0, 0.0}, {0.5, 0.5}}, GridSpec{1.0, 4}};
  std::vector<TrainingExample> ex;
  for (const auto& w : windows) ex.push_back({&w, &ctx});

  auto hp = tiny_hyper();
  hp.static_points = 2;
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.learning_rate = 0.01;
  cfg.seed = 4;
  const auto variant = ModelVariant::parse("ca-o-lstm");

  int calls = 0;
  const auto a = train(ex, variant, hp, cfg, [&](int epoch, const Parameters&) {
    ++calls;
    CHECK(epoch == calls);
  });
  const auto b = train(ex, variant, hp, cfg);
  CHECK(calls == 40);
  REQUIRE(a.history.size() == 40);
  CHECK(a.checkpoint.params.weights == b.checkpoint.params.weights);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].mean_nll == b.history[i].mean_nll);
  }
  CHECK(a.history.back().mean_nll < a.history.front().mean_nll - 0.5);

  cfg.seed = 5;
  const auto c = train(ex, variant, hp, cfg);
  CHECK_FALSE(c.checkpoint.params.weights == a.checkpoint.params.weights);

  std::ostringstream os;
  write_loss_history(os, a.history);
  CHECK(os.str().rfind("epoch,mean_nll\n1,", 0) == 0);
}

TEST_CASE("training failures") {
  SceneContext ctx{{}, GridSpec{1.0, 4}};
  auto bad = walking_window(0, 0.0);
  bad.agents[0].pos[4].x = std::numeric_limits<double>::quiet_NaN();
  const std::vector<TrainingExample> ex{{&bad, &ctx}};
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(ex, {}, tiny_hyper(), cfg), TrainingError);

  auto partial = walking_window(0, 0.0, 1);
  partial.agents[0].full = false;
  partial.agents[0].present[0] = 0;
  const std::vector<TrainingExample> none{{&partial, &ctx}};
  CHECK_THROWS_AS(train(none, {}, tiny_hyper(), cfg), ConfigError);
}
