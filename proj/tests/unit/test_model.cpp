#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "ctxlstm/checkpoint.hpp"
#include "ctxlstm/diagnostics.hpp"
#include "ctxlstm/errors.hpp"
#include "ctxlstm/gaussian.hpp"
#include "ctxlstm/model.hpp"
#include "ctxlstm/rng.hpp"

using namespace ctxlstm;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

HyperParams small_hyper(std::size_t k = 3) {
  HyperParams hp;
  hp.embed_dim = 6;
  hp.hidden_dim = 5;
  hp.grid = GridSpec{4.0, 4};
  hp.static_points = k;
  return hp;
}

void zero_all(Parameters& p) {
  p.weights.for_each([](std::string_view, Matrix& m) { m.fill(0.0); });
}

}  // namespace

TEST_CASE("variant names and parsing") {
  const std::vector<std::string> names{"lstm",      "o-lstm",      "s-lstm",
                                       "ca-lstm",   "ca-o-lstm",   "ca-s-lstm",
                                       "ca-lstm-o", "ca-o-lstm-o", "ca-s-lstm-o"};
  const auto all = ModelVariant::all();
  REQUIRE(all.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(all[i].name() == names[i]);
    CHECK(ModelVariant::parse(names[i]) == all[i]);
  }
  CHECK(ModelVariant::parse("ca-o-lstm") ==
        ModelVariant{HumanPooling::occupancy, ContextPooling::distance});
  CHECK(ModelVariant::parse("ca-s-lstm-o") ==
        ModelVariant{HumanPooling::social, ContextPooling::static_grid});
  CHECK_THROWS_AS(ModelVariant::parse("gru"), ConfigError);
}

TEST_CASE("embed_input examples") {
  HyperParams hp = small_hyper(2);
  hp.embed_dim = 64;
  auto p = Parameters::initialize({HumanPooling::social, ContextPooling::distance}, hp, 1);
  CHECK(hp.input_dim(p.variant) == 192);

  SocialTensor social{4, 5, std::vector<double>(16 * 5, 0.5)};
  ContextVector ctx{{1.0, 2.0}};
  PoolingInputs in;
  in.social = &social;
  in.context = &ctx;
  const auto x = embed_input({0.3, -0.2}, in, p);
  CHECK(x.size() == 192);

  zero_all(p);
  const auto z = embed_input({0.3, -0.2}, in, p);
  CHECK(std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }));

  auto plain = Parameters::initialize({}, hp, 1);
  PoolingInputs none;
  const auto y = embed_input({0.3, -0.2}, none, plain);
  CHECK(y.size() == 64);
  for (std::size_t r = 0; r < 64; ++r) {
    const double pre = plain.weights.position_embed(r, 0) * 0.3 +
                       plain.weights.position_embed(r, 1) * -0.2;
    CHECK(y[r] == doctest::Approx(std::max(0.0, pre)).epsilon(1e-15));
  }

  CHECK_THROWS_AS(embed_input({0, 0}, none, p), ConfigError);       // missing inputs
  CHECK_THROWS_AS(embed_input({0, 0}, in, plain), ConfigError);     // superfluous inputs
}

TEST_CASE("lstm_step examples") {
  HyperParams hp = small_hyper();
  auto p = Parameters::initialize({}, hp, 3);
  zero_all(p);
  const std::vector<double> x(hp.input_dim(p.variant), 0.7);

  const auto s0 = lstm_step(AgentState::zeros(5), x, p);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(s0.h[k] == 0.0);
    CHECK(s0.c[k] == 0.0);
  }
  AgentState ones{std::vector<double>(5, 0.0), std::vector<double>(5, 1.0)};
  const auto s1 = lstm_step(ones, x, p);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(s1.c[k] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s1.h[k] == doctest::Approx(0.231059).epsilon(1e-6));
    CHECK(s1.h[k] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(lstm_step(AgentState::zeros(4), x, p), ConfigError);
}

TEST_CASE("lstm_step gradients match finite differences") {
  // Output coordinate k of h as a function of the gate weights.
  HyperParams hp = small_hyper();
  auto p = Parameters::initialize({}, hp, 4);
  Rng rng(4);
  for (auto& v : p.weights.gates_bias.values()) v = rng.uniform(-0.5, 0.5);
  std::vector<double> x(hp.input_dim(p.variant));
  for (auto& v : x) v = rng.uniform(0.0, 1.0);
  AgentState s{{0.1, -0.2, 0.3, 0.0, 0.05}, {0.5, -0.5, 0.2, 0.1, 0.0}};

  for (std::size_t k = 0; k < 5; ++k) {
    Tape tape;
    Var w = tape.parameter(p.weights.gates);
    Var b = tape.parameter(p.weights.gates_bias);
    Matrix hx(1, 5 + x.size());
    for (std::size_t i = 0; i < 5; ++i) hx[i] = s.h[i];
    for (std::size_t i = 0; i < x.size(); ++i) hx[5 + i] = x[i];
    Var z = tape.affine(tape.leaf(hx), w, b);
    Var ig = tape.activate(tape.slice_cols(z, 0, 5), Activation::sigmoid);
    Var fg = tape.activate(tape.slice_cols(z, 5, 5), Activation::sigmoid);
    Var og = tape.activate(tape.slice_cols(z, 10, 5), Activation::sigmoid);
    Var cc = tape.activate(tape.slice_cols(z, 15, 5), Activation::tanh);
    Var c = tape.add(tape.mul(fg, tape.leaf(Matrix::row_vector(s.c))), tape.mul(ig, cc));
    Var h = tape.mul(og, tape.activate(c, Activation::tanh));
    Var out = tape.sum(tape.slice_cols(h, k, 1));
    CHECK(tape.scalar(out) == doctest::Approx(lstm_step(s, x, p).h[k]).epsilon(1e-14));
    tape.backward(out);
    const Matrix gw = tape.grad(w), gb = tape.grad(b);
    auto f = [&] { return lstm_step(s, x, p).h[k]; };
    const auto report = finite_diff_check(
        f, {{"gates", &p.weights.gates, &gw}, {"gates_bias", &p.weights.gates_bias, &gb}},
        FiniteDiffOptions{1e-2, 0, 8});
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("output head examples") {
  HyperParams hp = small_hyper();
  auto p = Parameters::initialize({}, hp, 5);
  zero_all(p);
  const std::vector<double> h{0.3, -0.1, 0.9, 0.0, 0.2};
  auto g = output_head(h, p);
  CHECK(g.mu == Point{0, 0});
  CHECK(g.sigma_x == 1.0);
  CHECK(g.sigma_y == 1.0);
  CHECK(g.rho == 0.0);

  p.weights.head_bias = Matrix::row_vector({1, 2, 0, 0, 0});
  g = output_head(h, p);
  CHECK(g.mu == Point{1, 2});
  CHECK(g.sigma_x == 1.0);

  const double raw[5] = {0, 0, 0, 0, 100.0};
  const auto sat = gaussian_from_raw(std::span<const double, 5>(raw));
  CHECK(sat.rho < 1.0);
  CHECK(1.0 - sat.rho * sat.rho > 0.0);
  const double raw_neg[5] = {0, 0, -800, 800, -100.0};
  const auto ext = gaussian_from_raw(std::span<const double, 5>(raw_neg));
  CHECK(ext.rho > -1.0);
  CHECK(ext.sigma_x >= 0.0);
}

TEST_CASE("output head always yields a valid covariance") {
  Rng rng(12);
  HyperParams hp = small_hyper();
  for (int trial = 0; trial < 200; ++trial) {
    auto p = Parameters::initialize({}, hp, static_cast<std::uint64_t>(trial));
    for (auto& v : p.weights.head.values()) v = rng.uniform(-30, 30);
    std::vector<double> h(5);
    for (auto& v : h) v = rng.uniform(-1, 1);
    const auto g = output_head(h, p);
    CHECK(g.sigma_x > 0.0);
    CHECK(g.sigma_y > 0.0);
    CHECK(std::abs(g.rho) < 1.0);
    CHECK(std::isfinite(gaussian_nll(g.mu, g)));
  }
}

TEST_CASE("nll closed forms") {
  const GaussianParams unit{{0.4, -1.3}, 1.0, 1.0, 0.0};
  CHECK(std::abs(nll(unit.mu, unit) - kLog2Pi) < 1e-9);
  CHECK(kLog2Pi == doctest::Approx(1.837877).epsilon(1e-6));
  CHECK(std::abs(nll(unit.mu + Point{1, 0}, unit) - (kLog2Pi + 0.5)) < 1e-9);
  const GaussianParams corr{{0.4, -1.3}, 1.0, 1.0, 0.9};
  CHECK(std::abs(nll(corr.mu, corr) - (kLog2Pi + 0.5 * std::log(0.19))) < 1e-9);
}

TEST_CASE("nll gradient with respect to raw outputs") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    double raw[5];
    for (double& r : raw) r = rng.uniform(-1.5, 1.5);
    const Point target{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    double grad[5];
    const double v = gaussian_nll_raw(std::span<const double, 5>(raw), target, grad);
    CHECK(v == doctest::Approx(gaussian_nll(target, gaussian_from_raw(std::span<const double, 5>(raw)))).epsilon(1e-12));
    Matrix m = Matrix::row_vector({raw[0], raw[1], raw[2], raw[3], raw[4]});
    const Matrix g = Matrix::row_vector({grad[0], grad[1], grad[2], grad[3], grad[4]});
    const auto report = finite_diff_check(
        [&] { return gaussian_nll_raw(std::span<const double, 5>(m.data(), 5), target, nullptr); },
        {{"raw", &m, &g}});
    CHECK(report.max_rel_error < 1e-6);
  }
}

TEST_CASE("sampling") {
  SUBCASE("degenerate sigma returns the mean") {
    Rng rng(1);
    const GaussianParams g{{3.5, -2.0}, 1e-300, 1e-300, 0.3};
    const Point p = sample_position(g, rng);
    CHECK(std::abs(p.x - 3.5) < 1e-290);
    CHECK(std::abs(p.y + 2.0) < 1e-290);
  }
  SUBCASE("fixed seed reproduces the draw") {
    const GaussianParams g{{0, 0}, 1.0, 2.0, -0.4};
    Rng a(99), b(99);
    for (int i = 0; i < 10; ++i) CHECK(sample_position(g, a) == sample_position(g, b));
  }
  SUBCASE("monte carlo moments") {
    const GaussianParams g{{1.0, -2.0}, 0.5, 2.0, 0.7};
    Rng rng(2);
    const int n = 100000;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
      const Point p = sample_position(g, rng);
      sx += p.x;
      sy += p.y;
      sxx += p.x * p.x;
      syy += p.y * p.y;
      sxy += p.x * p.y;
    }
    const double mx = sx / n, my = sy / n;
    CHECK(std::abs(mx - 1.0) < 4 * 0.5 / std::sqrt(n));
    CHECK(std::abs(my + 2.0) < 4 * 2.0 / std::sqrt(n));
    const double vx = sxx / n - mx * mx, vy = syy / n - my * my;
    const double corr = (sxy / n - mx * my) / std::sqrt(vx * vy);
    CHECK(std::abs(corr - 0.7) < 0.02);
  }
}

TEST_CASE("initialization") {
  HyperParams hp = small_hyper();
  for (const auto& v : ModelVariant::all()) {
    const auto p = Parameters::initialize(v, hp, 8);
    CHECK_NOTHROW(p.validate());
    const std::size_t d = hp.hidden_dim;
    for (std::size_t k = 0; k < d; ++k) {
      CHECK(p.weights.gates_bias[d + k] == 1.0);  // forget gate
      CHECK(p.weights.gates_bias[k] == 0.0);
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.weights.gates.cols()));
    for (double w : p.weights.gates.values()) CHECK(std::abs(w) <= bound);
    CHECK(p.weights.occupancy_embed.empty() == (v.human != HumanPooling::occupancy));
    CHECK(p.weights.social_embed.empty() == (v.human != HumanPooling::social));
    CHECK(p.weights.context_embed.empty() == (v.context == ContextPooling::none));
  }
  const auto a = Parameters::initialize({}, hp, 8), b = Parameters::initialize({}, hp, 8);
  CHECK(a.weights.gates == b.weights.gates);
  CHECK_THROWS_AS(Parameters::initialize({HumanPooling::none, ContextPooling::distance},
                                         small_hyper(0), 1),
                  ConfigError);
  HyperParams bad = small_hyper();
  bad.embed_dim = 0;
  CHECK_THROWS_AS(Parameters::initialize({}, bad, 1), ConfigError);
}

TEST_CASE("batched joint step equals the single-agent path") {
  Rng rng(21);
  const std::vector<Point> statics{{-0.8, 0.5}, {0.7, -0.4}, {0.1, 0.9}};
  for (const auto& variant : ModelVariant::all()) {
    HyperParams hp = small_hyper(statics.size());
    hp.grid = GridSpec{1.2, 4};
    auto params = Parameters::initialize(variant, hp, 17);
    for (auto& v : params.weights.gates_bias.values()) v = rng.uniform(-0.5, 0.5);
    SceneContext ctx{statics, hp.grid};

    const std::size_t n = 4;
    const int steps = 5;
    std::vector<std::vector<Point>> pos(n);
    std::vector<std::vector<std::uint8_t>> present(n);
    for (std::size_t a = 0; a < n; ++a) {
      Point at{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
      for (int t = 0; t < steps; ++t) {
        pos[a].push_back(at);
        at = at + Point{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
        present[a].push_back(a == 3 && t < 2 ? 0 : 1);  // agent 3 enters late
      }
    }

    Tape tape;
    JointStep joint(tape, params, ctx, n);
    std::vector<AgentState> states(n, AgentState::zeros(hp.hidden_dim));
    for (int t = 0; t < steps; ++t) {
      std::vector<Point> p(n);
      std::vector<std::uint8_t> pr(n);
      std::vector<AgentPosition> frame;
      std::map<int, std::vector<double>> hidden;
      for (std::size_t a = 0; a < n; ++a) {
        p[a] = pos[a][static_cast<std::size_t>(t)];
        pr[a] = present[a][static_cast<std::size_t>(t)];
        if (pr[a]) {
          frame.push_back({static_cast<int>(a), p[a]});
          hidden[static_cast<int>(a)] = states[a].h;
        }
      }
      const Matrix raw = tape.value(joint.step(p, pr));
      std::vector<AgentState> next = states;
      for (std::size_t a = 0; a < n; ++a) {
        if (!pr[a]) {
          next[a] = AgentState::zeros(hp.hidden_dim);
          continue;
        }
        OccupancyGrid occ, sg;
        SocialTensor soc;
        ContextVector cv;
        PoolingInputs in;
        if (variant.human == HumanPooling::occupancy) {
          occ = occupancy_grid(static_cast<int>(a), frame, hp.grid);
          in.occupancy = &occ;
        } else if (variant.human == HumanPooling::social) {
          soc = social_tensor(static_cast<int>(a), frame, hidden, hp.grid);
          in.social = &soc;
        }
        if (variant.context == ContextPooling::distance) {
          cv = context_distances(p[a], statics);
          in.context = &cv;
        } else if (variant.context == ContextPooling::static_grid) {
          sg = static_grid(p[a], statics, hp.grid);
          in.static_grid = &sg;
        }
        const auto x = embed_input(p[a], in, params);
        next[a] = lstm_step(states[a], x, params);
        const auto g = output_head(next[a].h, params);
        const auto b = gaussian_from_raw(std::span<const double, 5>(raw.row(a).data(), 5));
        INFO(variant.name(), " t=", t, " a=", a);
        CHECK(b.mu.x == doctest::Approx(g.mu.x).epsilon(1e-12));
        CHECK(b.mu.y == doctest::Approx(g.mu.y).epsilon(1e-12));
        CHECK(b.sigma_x == doctest::Approx(g.sigma_x).epsilon(1e-12));
        CHECK(b.rho == doctest::Approx(g.rho).epsilon(1e-12));
      }
      states = next;
    }
  }
}

TEST_CASE("sequence loss examples") {
  HyperParams hp = small_hyper(1);
  auto params = Parameters::initialize({}, hp, 2);
  zero_all(params);
  const Point at{0.25, -0.5};
  params.weights.head_bias = Matrix::row_vector({at.x, at.y, 0, 0, 0});
  SceneWindow w;
  w.t_obs = 3;
  w.t_pred = 4;
  WindowAgent a;
  a.id = 1;
  a.full = true;
  a.pos.assign(7, at);
  a.present.assign(7, 1);
  w.agents.push_back(a);
  SceneContext ctx{{{0, 0}}, hp.grid};
  const auto r = sequence_loss(w, ctx, params);
  CHECK(std::abs(r.loss - kLog2Pi) < 1e-12);
  CHECK(r.terms == 4);
  CHECK(sequence_loss(w, ctx, params, {true, true}).terms == 6);

  w.t_obs = 7;
  w.t_pred = 0;
  CHECK_THROWS_AS(sequence_loss(w, ctx, params), ConfigError);
}

TEST_CASE("sequence loss scores only full-span agents") {
  auto tp = tiny_problem({HumanPooling::occupancy, ContextPooling::none}, 3);
  const double base = sequence_loss(tp.window, tp.context, tp.params).loss;
  WindowAgent partial;
  partial.id = 99;
  partial.full = false;
  for (int t = 0; t < tp.window.length(); ++t) {
    partial.pos.push_back({5.0, 5.0});  // outside everyone's neighborhood
    partial.present.push_back(t >= 2 ? 1 : 0);
  }
  tp.window.agents.push_back(partial);
  const auto r = sequence_loss(tp.window, tp.context, tp.params);
  CHECK(r.agents == 2);
  CHECK(r.loss == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("sequence loss gradients pass the finite-difference check for every variant") {
  for (const auto& v : ModelVariant::all()) {
    const auto report = tiny_gradcheck(v);
    INFO(v.name(), ": ", report.summary());
    CHECK(report.passed(1e-4));
  }
}

TEST_CASE("closed-loop loss treats fed-back means as constants") {
  auto tp = tiny_problem({HumanPooling::none, ContextPooling::none}, 5);
  LossOptions closed{false, false};
  Weights grads = zeros_like(tp.params.weights);
  const double a = sequence_loss(tp.window, tp.context, tp.params, closed, &grads).loss;
  CHECK(std::isfinite(a));
  CHECK(a != sequence_loss(tp.window, tp.context, tp.params).loss);
  bool nonzero = false;
  grads.for_each([&](std::string_view, const Matrix& m) {
    CHECK(m.all_finite());
    for (double v : m.values()) nonzero = nonzero || v != 0.0;
  });
  CHECK(nonzero);
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (const auto& v : ModelVariant::all()) {
    Checkpoint c{Parameters::initialize(v, small_hyper(), 42), 42};
    c.params.weights.head[0] = 0.1 + 0.2;  // not representable in short decimal form
    std::stringstream ss;
    ss << checkpoint_to_json(c).dump();
    const auto back = checkpoint_from_json(nlohmann::json::parse(ss.str()));
    CHECK(back.seed == 42);
    CHECK(back.params.variant == v);
    CHECK(back.params.hyper.embed_dim == c.params.hyper.embed_dim);
    CHECK(back.params.hyper.grid.neighborhood_side == c.params.hyper.grid.neighborhood_side);
    back.params.weights.for_each([&](std::string_view name, const Matrix& m) {
      CHECK(m == *find_matrix(c.params.weights, name));
    });
  }
}

TEST_CASE("checkpoint validation") {
  Checkpoint c{Parameters::initialize({}, small_hyper(), 1), 1};
  auto doc = checkpoint_to_json(c);
  SUBCASE("wrong format tag") {
    doc["format"] = "something-else";
    CHECK_THROWS_AS(checkpoint_from_json(doc), FormatError);
  }
  SUBCASE("wrong version") {
    doc["version"] = 99;
    CHECK_THROWS_AS(checkpoint_from_json(doc), FormatError);
  }
  SUBCASE("bad shape") {
    doc["matrices"][0]["rows"] = 1;
    CHECK_THROWS_AS(checkpoint_from_json(doc), FormatError);
  }
  SUBCASE("missing field") {
    doc.erase("hyper");
    CHECK_THROWS_AS(checkpoint_from_json(doc), FormatError);
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), FormatError);
}
