#include "ctxlstm/inference.hpp"

#include <string>

#include "ctxlstm/errors.hpp"

namespace ctxlstm {

LstmPredictor::LstmPredictor(const Parameters& params, const SceneContext& context)
    : params_(params), context_(context) {}

LstmPredictor::~LstmPredictor() = default;

void LstmPredictor::reset(std::size_t agents) {
  joint_.reset();
  tape_.clear();
  joint_ = std::make_unique<JointStep>(tape_, params_, context_, agents);
}

std::vector<GaussianParams> LstmPredictor::step(std::span<const Point> positions,
                                                std::span<const std::uint8_t> present) {
  if (!joint_) throw UsageError("LstmPredictor: step before reset");
  const Matrix& raw = tape_.value(joint_->step(positions, present));
  std::vector<GaussianParams> out;
  out.reserve(raw.rows());
  for (std::size_t a = 0; a < raw.rows(); ++a) {
    out.push_back(gaussian_from_raw(std::span<const double, 5>(raw.data() + a * 5, 5)));
  }
  return out;
}

PredictionResult rollout_with(StepPredictor& predictor, const SceneWindow& window,
                              RolloutMode mode, std::uint64_t seed) {
  if (window.t_obs < 1 || window.t_pred < 1) {
    throw ConfigError("rollout: window needs observed and predicted frames");
  }
  const std::size_t n = window.agents.size();
  predictor.reset(n);
  Rng rng(seed);

  std::vector<Point> positions(n);
  std::vector<std::uint8_t> present(n);
  std::vector<GaussianParams> out;
  for (int t = 0; t < window.t_obs; ++t) {
    for (std::size_t a = 0; a < n; ++a) {
      positions[a] = window.agents[a].pos[static_cast<std::size_t>(t)];
      present[a] = window.agents[a].present[static_cast<std::size_t>(t)];
    }
    out = predictor.step(positions, present);
  }

  PredictionResult result;
  std::vector<std::size_t> slots;
  for (std::size_t a = 0; a < n; ++a) {
    if (!window.agents[a].full) continue;
    slots.push_back(a);
    result.agents.push_back({window.agents[a].id, {}, {}});
  }
  for (std::size_t a = 0; a < n; ++a) present[a] = window.agents[a].full ? 1 : 0;

  for (int k = 0; k < window.t_pred; ++k) {
    if (k > 0) out = predictor.step(positions, present);
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const GaussianParams& g = out[slots[s]];
      const Point next = mode == RolloutMode::mean ? g.mu : sample_position(g, rng);
      result.agents[s].positions.push_back(next);
      result.agents[s].dists.push_back(g);
      positions[slots[s]] = next;
    }
  }
  return result;
}

PredictionResult rollout(const SceneWindow& window, const SceneContext& context,
                         const Parameters& params, RolloutMode mode, std::uint64_t seed) {
  LstmPredictor predictor(params, context);
  return rollout_with(predictor, window, mode, seed);
}

std::vector<std::vector<Point>> future_truth(const SceneWindow& window) {
  std::vector<std::vector<Point>> out;
  for (const auto& a : window.agents) {
    if (!a.full) continue;
    out.emplace_back(a.pos.begin() + window.t_obs, a.pos.end());
  }
  return out;
}

std::vector<std::vector<Point>> predicted_tracks(const PredictionResult& result) {
  std::vector<std::vector<Point>> out;
  out.reserve(result.agents.size());
  for (const auto& a : result.agents) out.push_back(a.positions);
  return out;
}

double ade(std::span<const std::vector<Point>> predictions,
           std::span<const std::vector<Point>> truth) {
  if (predictions.size() != truth.size()) {
    throw UsageError("ade: " + std::to_string(predictions.size()) + " predicted tracks vs " +
                     std::to_string(truth.size()) + " ground-truth tracks");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predictions[i].size() != truth[i].size()) {
      throw UsageError("ade: track " + std::to_string(i) + " has " +
                       std::to_string(predictions[i].size()) + " predicted vs " +
                       std::to_string(truth[i].size()) + " true steps");
    }
    for (std::size_t t = 0; t < truth[i].size(); ++t) {
      sum += distance(predictions[i][t], truth[i][t]);
      ++count;
    }
  }
  if (count == 0) throw UsageError("ade: nothing to evaluate");
  return sum / static_cast<double>(count);
}

double ade(const PredictionResult& result, const SceneWindow& window) {
  const auto pred = predicted_tracks(result);
  const auto truth = future_truth(window);
  return ade(pred, truth);
}

PredictionResult constant_velocity_baseline(const SceneWindow& window) {
  if (window.t_obs < 2) throw ConfigError("constant velocity baseline needs 2 observed frames");
  PredictionResult result;
  const auto last = static_cast<std::size_t>(window.t_obs - 1);
  for (const auto& a : window.agents) {
    if (!a.full) continue;
    AgentPrediction p{a.id, {}, {}};
    const Point v = a.pos[last] - a.pos[last - 1];
    Point cur = a.pos[last];
    for (int k = 0; k < window.t_pred; ++k) {
      cur = cur + v;
      p.positions.push_back(cur);
      p.dists.push_back({cur, 1.0, 1.0, 0.0});
    }
    result.agents.push_back(std::move(p));
  }
  return result;
}

}  // namespace ctxlstm
