#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "ctxlstm/checkpoint.hpp"
#include "ctxlstm/model.hpp"

namespace ctxlstm {

struct TrainConfig {
  double learning_rate = 0.005;
  double rmsprop_decay = 0.95;
  int epochs = 1600;
  double clip_norm = 10.0;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  LossOptions loss;

  void validate() const;
};

/// Running mean of squared gradients, one matrix per weight.
struct OptimizerState {
  Weights mean_square;
  static OptimizerState for_weights(const Weights& w) { return {zeros_like(w)}; }
};

/// v ← ρv + (1−ρ)g²;  p ← p − lr·g / (√v + ε)
void rmsprop_update(Matrix& param, const Matrix& grad, Matrix& mean_square,
                    const TrainConfig& config);
void rmsprop_update(Weights& params, const Weights& grads, OptimizerState& state,
                    const TrainConfig& config);

double global_norm(const Weights& grads);
/// Rescales all gradients by clip_norm / norm when the global L2 norm exceeds
/// clip_norm. Returns the norm before clipping.
double clip_gradients(Weights& grads, double clip_norm);

/// One optimization unit: a window and the scene it belongs to.
struct TrainingExample {
  const SceneWindow* window = nullptr;
  const SceneContext* context = nullptr;
};

struct EpochRecord {
  int epoch = 0;
  double mean_nll = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
};

/// Called after every epoch with the current parameters.
using EpochCallback = std::function<void(int epoch, const Parameters& params)>;

/// Seeded RMSProp training, one update per window, windows reshuffled every
/// epoch. Throws TrainingError on a non-finite loss or gradient.
TrainResult train(std::span<const TrainingExample> examples, const ModelVariant& variant,
                  const HyperParams& hyper, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// `epoch,mean_nll`
void write_loss_history(std::ostream& out, std::span<const EpochRecord> history);
void save_loss_history(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace ctxlstm
