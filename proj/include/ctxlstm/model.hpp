#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxlstm/dataset.hpp"
#include "ctxlstm/gaussian.hpp"
#include "ctxlstm/matrix.hpp"
#include "ctxlstm/pooling.hpp"
#include "ctxlstm/rng.hpp"
#include "ctxlstm/tape.hpp"

namespace ctxlstm {

enum class HumanPooling { none, occupancy, social };
enum class ContextPooling { none, distance, static_grid };

/// One of the nine (human pooling × context pooling) model configurations.
struct ModelVariant {
  HumanPooling human = HumanPooling::none;
  ContextPooling context = ContextPooling::none;

  /// lstm, o-lstm, s-lstm, ca-lstm, ca-o-lstm, ca-s-lstm, ca-lstm-o, ca-o-lstm-o, ca-s-lstm-o
  std::string name() const;
  static ModelVariant parse(std::string_view name);
  static std::vector<ModelVariant> all();

  bool uses_static_points() const { return context != ContextPooling::none; }
  friend bool operator==(const ModelVariant&, const ModelVariant&) = default;
};

struct HyperParams {
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  /// Neighborhood in dataset units (meters for the canonical format).
  GridSpec grid;
  /// K, taken from the scene.
  std::size_t static_points = 0;

  /// n = embed_dim × number of fused inputs.
  std::size_t input_dim(const ModelVariant& v) const;
  void validate(const ModelVariant& v) const;
};

/// Learned matrices. Matrices a variant does not use stay empty.
struct Weights {
  Matrix position_embed;   // embed × 2
  Matrix occupancy_embed;  // embed × cells²
  Matrix social_embed;     // embed × cells²·D
  Matrix context_embed;    // embed × K (distance) or embed × cells² (static grid)
  Matrix gates;            // 4D × (D + n), input order (h, x), gate order (i, f, o, c̃)
  Matrix gates_bias;       // 1 × 4D
  Matrix head;             // 5 × D
  Matrix head_bias;        // 1 × 5

  friend bool operator==(const Weights&, const Weights&) = default;

  /// Calls fn(name, matrix) for every non-empty matrix in a fixed order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    auto call = [&](std::string_view name, auto& m) {
      if (!m.empty()) fn(name, m);
    };
    call("position_embed", self.position_embed);
    call("occupancy_embed", self.occupancy_embed);
    call("social_embed", self.social_embed);
    call("context_embed", self.context_embed);
    call("gates", self.gates);
    call("gates_bias", self.gates_bias);
    call("head", self.head);
    call("head_bias", self.head_bias);
  }
};

/// Same shapes, all zero.
Weights zeros_like(const Weights& w);
Matrix* find_matrix(Weights& w, std::string_view name);

struct Parameters {
  ModelVariant variant;
  HyperParams hyper;
  Weights weights;

  /// Uniform(±1/√fan_in) weights, zero biases, forget-gate bias 1.
  static Parameters initialize(const ModelVariant& variant, const HyperParams& hyper,
                               std::uint64_t seed);
  /// Throws ConfigError when a matrix shape disagrees with variant/hyper.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Single-agent value path. Plain loops, no tape; the batched path below must
// agree with it.

struct PoolingInputs {
  const OccupancyGrid* occupancy = nullptr;
  const SocialTensor* social = nullptr;
  const OccupancyGrid* static_grid = nullptr;
  const ContextVector* context = nullptr;
};

/// [φ(position) φ(context) φ(human)] with φ = ReLU of a bias-free linear map.
/// Throws ConfigError when inputs missing or superfluous for the variant.
std::vector<double> embed_input(Point position, const PoolingInputs& pooled,
                                const Parameters& params);

struct AgentState {
  std::vector<double> h;
  std::vector<double> c;
  static AgentState zeros(std::size_t dim) { return {std::vector<double>(dim), std::vector<double>(dim)}; }
};

AgentState lstm_step(const AgentState& state, std::span<const double> x, const Parameters& params);
GaussianParams output_head(std::span<const double> h, const Parameters& params);

/// −log density of the bivariate normal at `point`.
inline double nll(Point point, const GaussianParams& g) { return gaussian_nll(point, g); }

/// x = μx + σx z1, y = μy + σy (ρ z1 + √(1−ρ²) z2).
Point sample_position(const GaussianParams& g, Rng& rng);

// ---------------------------------------------------------------------------
// Batched path on a tape: one row per agent slot of a window.

/// Static points and grid in the same (working) units as the positions.
struct SceneContext {
  std::vector<Point> static_points;
  GridSpec grid;
};

struct WeightVars {
  Var position_embed, occupancy_embed, social_embed, context_embed;
  Var gates, gates_bias, head, head_bias;
};

WeightVars bind_weights(Tape& tape, const Weights& w);
/// Copies the tape gradients of `vars` into a Weights-shaped structure.
Weights collect_gradients(const Tape& tape, const WeightVars& vars, const Weights& shapes);

/// Runs every agent's LSTM jointly, one frame per call. Pooling at each step
/// uses the current positions and the previous hidden states; absent rows
/// are held at zero state and excluded from everyone's pooling.
class JointStep {
 public:
  JointStep(Tape& tape, const Parameters& params, const SceneContext& context,
            std::size_t agents);

  /// Records one frame and returns the raw head output (A × 5).
  Var step(std::span<const Point> positions, std::span<const std::uint8_t> present);

  Var hidden() const { return h_; }
  Var cell() const { return c_; }
  const WeightVars& weights() const { return w_; }

 private:
  Tape& tape_;
  const Parameters& params_;
  const SceneContext& context_;
  std::size_t agents_;
  WeightVars w_;
  Var h_, c_;
};

struct LossOptions {
  /// Feed ground truth at every step; otherwise predicted means are fed back
  /// (detached) over the prediction segment.
  bool teacher_forcing = true;
  /// Score every step of the window instead of only the prediction segment.
  bool full_range = false;
};

struct LossResult {
  double loss = 0.0;
  std::size_t agents = 0;
  std::size_t terms = 0;
};

/// Mean NLL over full-span agents and scored steps of one window. When
/// `grads` is non-null it is overwritten with ∂loss/∂weights.
LossResult sequence_loss(const SceneWindow& window, const SceneContext& context,
                         const Parameters& params, const LossOptions& options = {},
                         Weights* grads = nullptr);

}  // namespace ctxlstm
