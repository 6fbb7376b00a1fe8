#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ctxlstm/dataset.hpp"
#include "ctxlstm/gaussian.hpp"
#include "ctxlstm/model.hpp"

namespace ctxlstm {

enum class RolloutMode { mean, sample };

struct AgentPrediction {
  int agent = 0;
  std::vector<Point> positions;        // t_pred steps after the observed segment
  std::vector<GaussianParams> dists;   // distribution each position was taken from
};

/// One entry per full-span agent of the window, in window order.
struct PredictionResult {
  std::vector<AgentPrediction> agents;
};

/// A model that advances all agents of a window by one frame at a time.
class StepPredictor {
 public:
  virtual ~StepPredictor() = default;
  virtual void reset(std::size_t agents) = 0;
  /// Distribution of every slot's next position given the current positions.
  virtual std::vector<GaussianParams> step(std::span<const Point> positions,
                                           std::span<const std::uint8_t> present) = 0;
};

class LstmPredictor final : public StepPredictor {
 public:
  LstmPredictor(const Parameters& params, const SceneContext& context);
  ~LstmPredictor() override;
  void reset(std::size_t agents) override;
  std::vector<GaussianParams> step(std::span<const Point> positions,
                                   std::span<const std::uint8_t> present) override;

 private:
  const Parameters& params_;
  const SceneContext& context_;
  Tape tape_;
  std::unique_ptr<JointStep> joint_;
};

/// Warm-up on the observed frames (every agent present at the time), then
/// closed-loop prediction of the full-span agents: each predicted position is
/// fed back and pooling is recomputed from all predicted positions jointly.
PredictionResult rollout_with(StepPredictor& predictor, const SceneWindow& window,
                              RolloutMode mode = RolloutMode::mean, std::uint64_t seed = 0);

PredictionResult rollout(const SceneWindow& window, const SceneContext& context,
                         const Parameters& params, RolloutMode mode = RolloutMode::mean,
                         std::uint64_t seed = 0);

/// Future positions of the full-span agents, aligned with PredictionResult.
std::vector<std::vector<Point>> future_truth(const SceneWindow& window);
std::vector<std::vector<Point>> predicted_tracks(const PredictionResult& result);

/// Mean Euclidean distance over all agents and steps.
double ade(std::span<const std::vector<Point>> predictions,
           std::span<const std::vector<Point>> truth);
double ade(const PredictionResult& result, const SceneWindow& window);

/// Extrapolates each agent's last observed velocity.
PredictionResult constant_velocity_baseline(const SceneWindow& window);

}  // namespace ctxlstm
