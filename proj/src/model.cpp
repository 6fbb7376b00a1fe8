#include "ctxlstm/model.hpp"

#include <cmath>
#include <string>

#include "ctxlstm/errors.hpp"
#include "ctxlstm/log.hpp"

namespace ctxlstm {

// ---------------------------------------------------------------------------
// Variants

std::string ModelVariant::name() const {
  std::string core;
  switch (human) {
    case HumanPooling::none: core = "lstm"; break;
    case HumanPooling::occupancy: core = "o-lstm"; break;
    case HumanPooling::social: core = "s-lstm"; break;
  }
  switch (context) {
    case ContextPooling::none: return core;
    case ContextPooling::distance: return "ca-" + core;
    case ContextPooling::static_grid: return "ca-" + core + "-o";
  }
  return core;
}

ModelVariant ModelVariant::parse(std::string_view name) {
  for (const auto& v : all()) {
    if (v.name() == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected one of lstm, o-lstm, s-lstm, ca-lstm, ca-o-lstm, ca-s-lstm, "
                    "ca-lstm-o, ca-o-lstm-o, ca-s-lstm-o)");
}

std::vector<ModelVariant> ModelVariant::all() {
  std::vector<ModelVariant> out;
  for (auto c : {ContextPooling::none, ContextPooling::distance, ContextPooling::static_grid}) {
    for (auto h : {HumanPooling::none, HumanPooling::occupancy, HumanPooling::social}) {
      out.push_back({h, c});
    }
  }
  return out;
}

std::size_t HyperParams::input_dim(const ModelVariant& v) const {
  std::size_t parts = 1;
  if (v.human != HumanPooling::none) ++parts;
  if (v.context != ContextPooling::none) ++parts;
  return embed_dim * parts;
}

void HyperParams::validate(const ModelVariant& v) const {
  if (embed_dim < 1) throw ConfigError("hyper.embed_dim must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hyper.hidden_dim must be >= 1");
  grid.validate();
  if (v.context == ContextPooling::distance && static_points < 1) {
    throw ConfigError("variant " + v.name() + " needs static points, scene has K = 0");
  }
}

// ---------------------------------------------------------------------------
// Parameters

Weights zeros_like(const Weights& w) {
  Weights out;
  out.position_embed = Matrix(w.position_embed.rows(), w.position_embed.cols());
  out.occupancy_embed = Matrix(w.occupancy_embed.rows(), w.occupancy_embed.cols());
  out.social_embed = Matrix(w.social_embed.rows(), w.social_embed.cols());
  out.context_embed = Matrix(w.context_embed.rows(), w.context_embed.cols());
  out.gates = Matrix(w.gates.rows(), w.gates.cols());
  out.gates_bias = Matrix(w.gates_bias.rows(), w.gates_bias.cols());
  out.head = Matrix(w.head.rows(), w.head.cols());
  out.head_bias = Matrix(w.head_bias.rows(), w.head_bias.cols());
  return out;
}

Matrix* find_matrix(Weights& w, std::string_view name) {
  if (name == "position_embed") return &w.position_embed;
  if (name == "occupancy_embed") return &w.occupancy_embed;
  if (name == "social_embed") return &w.social_embed;
  if (name == "context_embed") return &w.context_embed;
  if (name == "gates") return &w.gates;
  if (name == "gates_bias") return &w.gates_bias;
  if (name == "head") return &w.head;
  if (name == "head_bias") return &w.head_bias;
  return nullptr;
}

namespace {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct WeightShapes {
  Shape position_embed, occupancy_embed, social_embed, context_embed;
  Shape gates, gates_bias, head, head_bias;
};

WeightShapes expected_shapes(const ModelVariant& v, const HyperParams& hp) {
  const std::size_t e = hp.embed_dim;
  const std::size_t d = hp.hidden_dim;
  const std::size_t cells = hp.grid.cell_count();
  WeightShapes s;
  s.position_embed = {e, 2};
  if (v.human == HumanPooling::occupancy) s.occupancy_embed = {e, cells};
  if (v.human == HumanPooling::social) s.social_embed = {e, cells * d};
  if (v.context == ContextPooling::distance) s.context_embed = {e, hp.static_points};
  if (v.context == ContextPooling::static_grid) s.context_embed = {e, cells};
  s.gates = {4 * d, d + hp.input_dim(v)};
  s.gates_bias = {1, 4 * d};
  s.head = {5, d};
  s.head_bias = {1, 5};
  return s;
}

void check_shape(const Matrix& m, Shape s, const char* name) {
  if (m.rows() != s.rows || m.cols() != s.cols) {
    throw ConfigError(std::string("parameter ") + name + " has shape " + m.shape_str() +
                      ", expected " + std::to_string(s.rows) + "x" + std::to_string(s.cols));
  }
}

void init_uniform(Matrix& m, Shape s, Rng& rng) {
  m = Matrix(s.rows, s.cols);
  if (s.cols == 0) return;
  const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
}

}  // namespace

Parameters Parameters::initialize(const ModelVariant& variant, const HyperParams& hyper,
                                  std::uint64_t seed) {
  hyper.validate(variant);
  const auto s = expected_shapes(variant, hyper);
  Rng rng(seed);
  Parameters p{variant, hyper, {}};
  Weights& w = p.weights;
  init_uniform(w.position_embed, s.position_embed, rng);
  if (s.occupancy_embed.rows) init_uniform(w.occupancy_embed, s.occupancy_embed, rng);
  if (s.social_embed.rows) init_uniform(w.social_embed, s.social_embed, rng);
  if (s.context_embed.rows) init_uniform(w.context_embed, s.context_embed, rng);
  init_uniform(w.gates, s.gates, rng);
  w.gates_bias = Matrix(1, 4 * hyper.hidden_dim);
  for (std::size_t k = hyper.hidden_dim; k < 2 * hyper.hidden_dim; ++k) w.gates_bias[k] = 1.0;
  init_uniform(w.head, s.head, rng);
  w.head_bias = Matrix(1, 5);
  return p;
}

void Parameters::validate() const {
  hyper.validate(variant);
  const auto s = expected_shapes(variant, hyper);
  check_shape(weights.position_embed, s.position_embed, "position_embed");
  check_shape(weights.occupancy_embed, s.occupancy_embed, "occupancy_embed");
  check_shape(weights.social_embed, s.social_embed, "social_embed");
  check_shape(weights.context_embed, s.context_embed, "context_embed");
  check_shape(weights.gates, s.gates, "gates");
  check_shape(weights.gates_bias, s.gates_bias, "gates_bias");
  check_shape(weights.head, s.head, "head");
  check_shape(weights.head_bias, s.head_bias, "head_bias");
  weights.for_each([](std::string_view name, const Matrix& m) {
    if (!m.all_finite()) throw ConfigError("parameter " + std::string(name) + " is not finite");
  });
}

// ---------------------------------------------------------------------------
// Single-agent value path

namespace {

void relu_embed(const Matrix& w, std::span<const double> in, std::vector<double>& out) {
  if (w.cols() != in.size()) {
    throw ConfigError("embedding weights " + w.shape_str() + " vs input of length " +
                      std::to_string(in.size()));
  }
  for (std::size_t e = 0; e < w.rows(); ++e) {
    double acc = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) acc += w(e, k) * in[k];
    out.push_back(relu(acc));
  }
}

void require(bool wanted, const void* given, const char* what, const ModelVariant& v) {
  if (wanted && given == nullptr) {
    throw ConfigError("variant " + v.name() + " requires a " + what + " input");
  }
  if (!wanted && given != nullptr) {
    throw ConfigError("variant " + v.name() + " does not take a " + what + " input");
  }
}

}  // namespace

std::vector<double> embed_input(Point position, const PoolingInputs& pooled,
                                const Parameters& params) {
  const auto& v = params.variant;
  const auto& w = params.weights;
  require(v.human == HumanPooling::occupancy, pooled.occupancy, "occupancy grid", v);
  require(v.human == HumanPooling::social, pooled.social, "social tensor", v);
  require(v.context == ContextPooling::static_grid, pooled.static_grid, "static grid", v);
  require(v.context == ContextPooling::distance, pooled.context, "context vector", v);

  std::vector<double> x;
  x.reserve(params.hyper.input_dim(v));
  const double pos[2] = {position.x, position.y};
  relu_embed(w.position_embed, pos, x);
  if (pooled.context) relu_embed(w.context_embed, pooled.context->values, x);
  if (pooled.static_grid) relu_embed(w.context_embed, pooled.static_grid->values, x);
  if (pooled.occupancy) relu_embed(w.occupancy_embed, pooled.occupancy->values, x);
  if (pooled.social) relu_embed(w.social_embed, pooled.social->values, x);
  return x;
}

AgentState lstm_step(const AgentState& state, std::span<const double> x, const Parameters& params) {
  const std::size_t d = params.hyper.hidden_dim;
  const Matrix& w = params.weights.gates;
  const Matrix& b = params.weights.gates_bias;
  if (state.h.size() != d || state.c.size() != d || w.cols() != d + x.size()) {
    throw ConfigError("lstm_step: state " + std::to_string(state.h.size()) + "/" +
                      std::to_string(state.c.size()) + ", input " + std::to_string(x.size()) +
                      " incompatible with gates " + w.shape_str());
  }
  std::vector<double> z(4 * d);
  for (std::size_t r = 0; r < 4 * d; ++r) {
    double acc = b[r];
    for (std::size_t k = 0; k < d; ++k) acc += w(r, k) * state.h[k];
    for (std::size_t k = 0; k < x.size(); ++k) acc += w(r, d + k) * x[k];
    z[r] = acc;
  }
  AgentState next = AgentState::zeros(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double i = sigmoid(z[k]);
    const double f = sigmoid(z[d + k]);
    const double o = sigmoid(z[2 * d + k]);
    const double g = std::tanh(z[3 * d + k]);
    next.c[k] = f * state.c[k] + i * g;
    next.h[k] = o * std::tanh(next.c[k]);
  }
  return next;
}

GaussianParams output_head(std::span<const double> h, const Parameters& params) {
  const Matrix& w = params.weights.head;
  const Matrix& b = params.weights.head_bias;
  if (w.cols() != h.size()) {
    throw ConfigError("output_head: hidden of length " + std::to_string(h.size()) +
                      " vs head " + w.shape_str());
  }
  std::array<double, 5> raw{};
  for (std::size_t r = 0; r < 5; ++r) {
    double acc = b[r];
    for (std::size_t k = 0; k < h.size(); ++k) acc += w(r, k) * h[k];
    raw[r] = acc;
  }
  return gaussian_from_raw(raw);
}

Point sample_position(const GaussianParams& g, Rng& rng) {
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  return {g.mu.x + g.sigma_x * z1,
          g.mu.y + g.sigma_y * (g.rho * z1 + std::sqrt(1.0 - g.rho * g.rho) * z2)};
}

// ---------------------------------------------------------------------------
// Batched path

WeightVars bind_weights(Tape& tape, const Weights& w) {
  auto bind = [&](const Matrix& m) { return m.empty() ? Var{} : tape.parameter(m); };
  return {bind(w.position_embed), bind(w.occupancy_embed), bind(w.social_embed),
          bind(w.context_embed),  bind(w.gates),           bind(w.gates_bias),
          bind(w.head),           bind(w.head_bias)};
}

Weights collect_gradients(const Tape& tape, const WeightVars& vars, const Weights& shapes) {
  Weights g = zeros_like(shapes);
  auto take = [&](Var v, Matrix& dst) {
    if (v.valid()) dst = tape.grad(v);
  };
  take(vars.position_embed, g.position_embed);
  take(vars.occupancy_embed, g.occupancy_embed);
  take(vars.social_embed, g.social_embed);
  take(vars.context_embed, g.context_embed);
  take(vars.gates, g.gates);
  take(vars.gates_bias, g.gates_bias);
  take(vars.head, g.head);
  take(vars.head_bias, g.head_bias);
  return g;
}

JointStep::JointStep(Tape& tape, const Parameters& params, const SceneContext& context,
                     std::size_t agents)
    : tape_(tape), params_(params), context_(context), agents_(agents) {
  params.hyper.validate(params.variant);
  if (params.variant.context == ContextPooling::distance && context.static_points.empty()) {
    throw ConfigError("variant " + params.variant.name() + " needs static points, scene has K = 0");
  }
  if (params.variant.context == ContextPooling::distance &&
      context.static_points.size() != params.hyper.static_points) {
    throw ConfigError("variant " + params.variant.name() + " was built for K = " +
                      std::to_string(params.hyper.static_points) + " static points, scene has " +
                      std::to_string(context.static_points.size()));
  }
  context.grid.validate();
  if (context.grid.cells_per_side != params.hyper.grid.cells_per_side) {
    throw ConfigError("scene grid has " + std::to_string(context.grid.cells_per_side) +
                      " cells per side, model expects " +
                      std::to_string(params.hyper.grid.cells_per_side));
  }
  w_ = bind_weights(tape, params.weights);
  const std::size_t d = params.hyper.hidden_dim;
  h_ = tape.leaf(Matrix(agents, d));
  c_ = tape.leaf(Matrix(agents, d));
}

Var JointStep::step(std::span<const Point> positions, std::span<const std::uint8_t> present) {
  if (positions.size() != agents_ || present.size() != agents_) {
    throw UsageError("joint step: expected " + std::to_string(agents_) + " agent slots");
  }
  const auto& v = params_.variant;
  const std::size_t d = params_.hyper.hidden_dim;

  Matrix pos(agents_, 2);
  std::vector<double> mask(agents_, 0.0);
  bool all_present = true;
  for (std::size_t a = 0; a < agents_; ++a) {
    if (present[a]) {
      pos(a, 0) = positions[a].x;
      pos(a, 1) = positions[a].y;
      mask[a] = 1.0;
    } else {
      all_present = false;
    }
  }

  std::vector<Var> parts;
  parts.push_back(
      tape_.activate(tape_.affine(tape_.leaf(std::move(pos)), w_.position_embed), Activation::relu));
  if (v.context == ContextPooling::distance) {
    Var c = tape_.leaf(context_rows(positions, present, context_.static_points));
    parts.push_back(tape_.activate(tape_.affine(c, w_.context_embed), Activation::relu));
  } else if (v.context == ContextPooling::static_grid) {
    Var s = tape_.leaf(static_grid_rows(positions, present, context_.static_points, context_.grid));
    parts.push_back(tape_.activate(tape_.affine(s, w_.context_embed), Activation::relu));
  }
  if (v.human == HumanPooling::occupancy) {
    Var o = tape_.leaf(occupancy_rows(positions, present, context_.grid));
    parts.push_back(tape_.activate(tape_.affine(o, w_.occupancy_embed), Activation::relu));
  } else if (v.human == HumanPooling::social) {
    const auto links = neighbor_links(positions, present, context_.grid);
    parts.push_back(
        tape_.activate(tape_.pooled_embed(w_.social_embed, h_, links), Activation::relu));
  }
  Var x = tape_.concat_cols(parts);

  const Var hx[2] = {h_, x};
  Var z = tape_.affine(tape_.concat_cols(hx), w_.gates, w_.gates_bias);
  Var in_gate = tape_.activate(tape_.slice_cols(z, 0, d), Activation::sigmoid);
  Var forget = tape_.activate(tape_.slice_cols(z, d, d), Activation::sigmoid);
  Var out_gate = tape_.activate(tape_.slice_cols(z, 2 * d, d), Activation::sigmoid);
  Var candidate = tape_.activate(tape_.slice_cols(z, 3 * d, d), Activation::tanh);
  Var c = tape_.add(tape_.mul(forget, c_), tape_.mul(in_gate, candidate));
  Var h = tape_.mul(out_gate, tape_.activate(c, Activation::tanh));
  if (!all_present) {
    c = tape_.mask_rows(c, mask);
    h = tape_.mask_rows(h, mask);
  }
  h_ = h;
  c_ = c;
  return tape_.affine(h_, w_.head, w_.head_bias);
}

LossResult sequence_loss(const SceneWindow& window, const SceneContext& context,
                         const Parameters& params, const LossOptions& options, Weights* grads) {
  if (window.t_pred < 1) throw ConfigError("sequence_loss: empty prediction segment");
  const std::size_t n = window.agents.size();
  const int length = window.length();
  for (const auto& a : window.agents) {
    if (a.pos.size() != static_cast<std::size_t>(length) || a.present.size() != a.pos.size()) {
      throw UsageError("sequence_loss: agent " + std::to_string(a.id) +
                       " track does not match the window length");
    }
  }

  LossResult result;
  result.agents = window.full_count();
  const int first_scored = options.full_range ? 1 : window.t_obs;
  const std::size_t per_agent = static_cast<std::size_t>(length - first_scored);
  result.terms = result.agents * per_agent;
  if (result.agents == 0) {
    log::debug("window " + window.scene_id + "@" + std::to_string(window.start) +
               ": no full-span agent, excluded");
    if (grads) *grads = zeros_like(params.weights);
    return result;
  }

  const double weight = 1.0 / static_cast<double>(result.terms);
  std::vector<double> weights(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    if (window.agents[a].full) weights[a] = weight;
  }

  Tape tape;
  JointStep joint(tape, params, context, n);
  std::vector<Point> positions(n);
  std::vector<std::uint8_t> present(n);
  std::vector<Point> fed_back(n);
  Var total;
  for (int t = 0; t + 1 < length; ++t) {
    const bool closed_loop = !options.teacher_forcing && t >= window.t_obs;
    for (std::size_t a = 0; a < n; ++a) {
      const auto& ag = window.agents[a];
      if (closed_loop) {
        present[a] = ag.full ? 1 : 0;
        positions[a] = fed_back[a];
      } else {
        present[a] = ag.present[static_cast<std::size_t>(t)];
        positions[a] = ag.pos[static_cast<std::size_t>(t)];
      }
    }
    Var raw = joint.step(positions, present);
    if (!options.teacher_forcing) {
      const Matrix& rv = tape.value(raw);
      for (std::size_t a = 0; a < n; ++a) fed_back[a] = {rv(a, 0), rv(a, 1)};
    }
    if (t + 1 < first_scored) continue;
    Matrix targets(n, 2);
    for (std::size_t a = 0; a < n; ++a) {
      const Point p = window.agents[a].pos[static_cast<std::size_t>(t + 1)];
      targets(a, 0) = p.x;
      targets(a, 1) = p.y;
    }
    Var term = tape.gaussian_nll(raw, targets, weights);
    total = total.valid() ? tape.add(total, term) : term;
  }
  result.loss = tape.scalar(total);
  if (grads) {
    tape.backward(total);
    *grads = collect_gradients(tape, joint.weights(), params.weights);
  }
  return result;
}

}  // namespace ctxlstm
