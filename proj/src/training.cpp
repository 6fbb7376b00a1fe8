#include "ctxlstm/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ctxlstm/errors.hpp"
#include "ctxlstm/log.hpp"

namespace ctxlstm {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(rmsprop_decay > 0.0 && rmsprop_decay < 1.0)) {
    throw ConfigError("train.rmsprop_decay must lie in (0, 1)");
  }
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be > 0");
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
}

void rmsprop_update(Matrix& param, const Matrix& grad, Matrix& mean_square,
                    const TrainConfig& config) {
  if (!param.same_shape(grad) || !param.same_shape(mean_square)) {
    throw ConfigError("rmsprop: shape mismatch " + param.shape_str() + ", " + grad.shape_str() +
                      ", " + mean_square.shape_str());
  }
  const double rho = config.rmsprop_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    mean_square[i] = rho * mean_square[i] + (1.0 - rho) * g * g;
    param[i] -= config.learning_rate * g / (std::sqrt(mean_square[i]) + config.epsilon);
  }
}

void rmsprop_update(Weights& params, const Weights& grads, OptimizerState& state,
                    const TrainConfig& config) {
  auto apply = [&](Matrix& p, const Matrix& g, Matrix& v) {
    if (!p.empty()) rmsprop_update(p, g, v, config);
  };
  apply(params.position_embed, grads.position_embed, state.mean_square.position_embed);
  apply(params.occupancy_embed, grads.occupancy_embed, state.mean_square.occupancy_embed);
  apply(params.social_embed, grads.social_embed, state.mean_square.social_embed);
  apply(params.context_embed, grads.context_embed, state.mean_square.context_embed);
  apply(params.gates, grads.gates, state.mean_square.gates);
  apply(params.gates_bias, grads.gates_bias, state.mean_square.gates_bias);
  apply(params.head, grads.head, state.mean_square.head);
  apply(params.head_bias, grads.head_bias, state.mean_square.head_bias);
}

double global_norm(const Weights& grads) {
  double sq = 0.0;
  grads.for_each([&](std::string_view, const Matrix& m) {
    for (double v : m.values()) sq += v * v;
  });
  return std::sqrt(sq);
}

double clip_gradients(Weights& grads, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > clip_norm) {
    const double factor = clip_norm / norm;
    grads.for_each([&](std::string_view, Matrix& m) {
      for (double& v : m.values()) v *= factor;
    });
  }
  return norm;
}

TrainResult train(std::span<const TrainingExample> examples, const ModelVariant& variant,
                  const HyperParams& hyper, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  TrainResult result;
  result.checkpoint.seed = config.seed;
  result.checkpoint.params = Parameters::initialize(variant, hyper, config.seed);
  if (config.epochs == 0) return result;

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].window->full_count() > 0) order.push_back(i);
  }
  if (order.empty()) throw ConfigError("train: no training window with a full-span agent");

  Parameters& params = result.checkpoint.params;
  OptimizerState state = OptimizerState::for_weights(params.weights);
  // Separate stream from initialization so changing the window count does not
  // change the initial weights.
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double sum = 0.0;
    for (std::size_t idx : order) {
      const auto& ex = examples[idx];
      Weights grads;
      const LossResult loss = sequence_loss(*ex.window, *ex.context, params, config.loss, &grads);
      const double norm = clip_gradients(grads, config.clip_norm);
      if (!std::isfinite(loss.loss) || !std::isfinite(norm)) {
        std::ostringstream os;
        os << "non-finite " << (std::isfinite(loss.loss) ? "gradient" : "loss") << " at epoch "
           << epoch << ", window " << ex.window->scene_id << "@" << ex.window->start;
        throw TrainingError(os.str());
      }
      rmsprop_update(params.weights, grads, state, config);
      sum += loss.loss;
    }
    const double mean = sum / static_cast<double>(order.size());
    result.history.push_back({epoch, mean});
    if (log::level() <= log::Level::debug) {
      std::ostringstream os;
      os << variant.name() << " epoch " << epoch << " mean nll " << mean;
      log::debug(os.str());
    }
    if (on_epoch) on_epoch(epoch, params);
  }
  return result;
}

void write_loss_history(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,mean_nll\n" << std::setprecision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.mean_nll << '\n';
}

void save_loss_history(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_loss_history(out, history);
}

}  // namespace ctxlstm
