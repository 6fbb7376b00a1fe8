#include "ctxlstm/diagnostics.hpp"

#include "ctxlstm/rng.hpp"

namespace ctxlstm {

TinyProblem tiny_problem(const ModelVariant& variant, std::uint64_t seed,
                         const GradCheckSize& size) {
  Rng rng(seed);
  TinyProblem p;
  p.window.scene_id = "tiny";
  p.window.t_obs = 3;
  p.window.t_pred = 3;
  for (int a = 0; a < 2; ++a) {
    WindowAgent agent;
    agent.id = a + 1;
    agent.full = true;
    Point at{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
    const Point heading{rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08)};
    for (int t = 0; t < p.window.length(); ++t) {
      agent.pos.push_back(at);
      agent.present.push_back(1);
      at = at + heading + Point{0.01 * rng.normal(), 0.01 * rng.normal()};
    }
    p.window.agents.push_back(std::move(agent));
  }
  p.context.static_points = {{-0.7, 0.4}, {0.6, -0.5}};
  p.context.grid = GridSpec{2.0, 4};

  HyperParams hp;
  hp.embed_dim = size.embed_dim;
  hp.hidden_dim = size.hidden_dim;
  hp.grid = p.context.grid;
  hp.static_points = p.context.static_points.size();
  p.params = Parameters::initialize(variant, hp, seed);
  // Zero biases with an all-off embedding give exactly zero hidden units whose
  // successors sit on a ReLU kink; random biases move the check off it.
  for (Matrix* b : {&p.params.weights.gates_bias, &p.params.weights.head_bias}) {
    for (std::size_t i = 0; i < b->size(); ++i) (*b)[i] = rng.uniform(-0.5, 0.5);
  }
  return p;
}

GradCheckReport tiny_gradcheck(const ModelVariant& variant, std::uint64_t seed,
                               const GradCheckSize& size) {
  TinyProblem p = tiny_problem(variant, seed, size);
  LossOptions opts;
  opts.full_range = true;
  Weights grads = zeros_like(p.params.weights);
  sequence_loss(p.window, p.context, p.params, opts, &grads);

  std::vector<GradCheckTarget> targets;
  p.params.weights.for_each([&](std::string_view name, Matrix& m) {
    targets.push_back({std::string(name), &m, find_matrix(grads, name)});
  });
  return finite_diff_check(
      [&] { return sequence_loss(p.window, p.context, p.params, opts).loss; }, targets, FiniteDiffOptions{size.step, size.max_coords, size.levels});
}

}  // namespace ctxlstm
