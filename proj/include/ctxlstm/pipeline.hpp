#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctxlstm/dataset.hpp"
#include "ctxlstm/inference.hpp"
#include "ctxlstm/model.hpp"
#include "ctxlstm/training.hpp"
#include "json.hpp"

namespace ctxlstm {

struct PrepOptions {
  int subsample_stride = 10;
  WindowSpec train{8, 12, 1};
  WindowSpec eval{8, 12, 20};
};

struct SceneSource {
  std::string id;
  std::filesystem::path data;
  std::filesystem::path scene;
};

/// Scene list, preprocessing options and the fold split, as written by `prepare`.
struct FoldsManifest {
  PrepOptions prep;
  std::vector<SceneSource> scenes;
  std::vector<Fold> folds;
};

nlohmann::json folds_to_json(const FoldsManifest& m);
/// Relative paths resolve against `base_dir`.
FoldsManifest folds_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
void save_folds(const std::filesystem::path& path, const FoldsManifest& m);
FoldsManifest load_folds(const std::filesystem::path& path);

/// A scene after subsampling and normalization, with its windows and the
/// pooling context in normalized units.
struct PreparedScene {
  std::string id;
  NormalizedScene normalized;
  SceneContext context;
  std::vector<SceneWindow> train_windows;
  std::vector<SceneWindow> eval_windows;
};

/// `grid` is in dataset units and is rescaled with the scene.
PreparedScene prepare_scene(const TrajectoryDataset& raw, const Scene& scene,
                            const PrepOptions& options, const GridSpec& grid);

/// Static point count shared by all scenes; throws ConfigError when they differ.
std::size_t common_static_points(const std::vector<const PreparedScene*>& scenes);

std::vector<TrainingExample> training_examples(const std::vector<const PreparedScene*>& scenes);

struct WindowEvaluation {
  std::size_t index = 0;  // position in PreparedScene::eval_windows
  PredictionResult prediction;                // meters
  std::vector<std::vector<Point>> truth;      // meters
  double ade_m = 0.0;
};

struct SceneEvaluation {
  std::string scene;
  double ade_m = 0.0;
  std::size_t tracks = 0;
  std::vector<WindowEvaluation> windows;
};

/// Rollouts of every evaluation window, run in parallel; errors in meters.
SceneEvaluation evaluate_scene(const PreparedScene& scene, const Parameters& params,
                               RolloutMode mode = RolloutMode::mean, std::uint64_t seed = 0);
/// Same protocol for the constant-velocity baseline.
SceneEvaluation evaluate_baseline(const PreparedScene& scene);

struct FoldOutcome {
  int fold = 0;
  TrainResult training;
  std::vector<SceneEvaluation> tests;
  double ade_m = 0.0;  // pooled over all test tracks
};

/// Trains on the fold's training scenes and evaluates its test scenes.
FoldOutcome run_fold(const std::vector<PreparedScene>& scenes, const Fold& fold, int fold_index,
                     const ModelVariant& variant, const HyperParams& hyper,
                     const TrainConfig& config, RolloutMode mode = RolloutMode::mean);

/// Pooled ADE of already trained parameters on the fold's test scenes.
FoldOutcome evaluate_fold(const std::vector<PreparedScene>& scenes, const Fold& fold,
                          int fold_index, const Parameters& params,
                          RolloutMode mode = RolloutMode::mean, std::uint64_t seed = 0);

const PreparedScene& find_scene(const std::vector<PreparedScene>& scenes, const std::string& id);

// Result files ---------------------------------------------------------------

struct ResultRow {
  std::string scene;
  int fold = 0;
  std::string variant;
  std::size_t window = 0;
  int agent = 0;
  int step = 0;
  Point pred;
  Point truth;
};

/// scene,fold,variant,window,agent,step,pred_x,pred_y,true_x,true_y
void write_results_header(std::ostream& out);
void write_results(std::ostream& out, const SceneEvaluation& eval, int fold,
                   const std::string& variant);
std::vector<ResultRow> read_results(std::istream& in);

struct SummaryRow {
  std::string variant;
  int fold = 0;
  std::string sequence;
  double ade_m = 0.0;
};

/// Long form: one row per fold plus `avg` per variant.
void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows);
/// Wide form: variant × sequence, last column the average over folds.
void write_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows);

}  // namespace ctxlstm
