#include "ctxlstm/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ctxlstm/errors.hpp"
#include "ctxlstm/log.hpp"

namespace ctxlstm {

namespace {

nlohmann::json window_json(const WindowSpec& w) {
  return {{"t_obs", w.t_obs}, {"t_pred", w.t_pred}, {"stride", w.stride}};
}

WindowSpec window_from(const nlohmann::json& j, WindowSpec dflt) {
  dflt.t_obs = j.value("t_obs", dflt.t_obs);
  dflt.t_pred = j.value("t_pred", dflt.t_pred);
  dflt.stride = j.value("stride", dflt.stride);
  return dflt;
}

}  // namespace

nlohmann::json folds_to_json(const FoldsManifest& m) {
  nlohmann::json scenes = nlohmann::json::array();
  for (const auto& s : m.scenes) {
    scenes.push_back({{"id", s.id}, {"data", s.data.string()}, {"scene", s.scene.string()}});
  }
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t i = 0; i < m.folds.size(); ++i) {
    folds.push_back({{"fold", i}, {"train", m.folds[i].train}, {"test", m.folds[i].test}});
  }
  return {{"prep",
           {{"subsample_stride", m.prep.subsample_stride},
            {"train_window", window_json(m.prep.train)},
            {"eval_window", window_json(m.prep.eval)}}},
          {"scenes", scenes},
          {"folds", folds}};
}

FoldsManifest folds_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  try {
    FoldsManifest m;
    if (doc.contains("prep")) {
      const auto& p = doc.at("prep");
      m.prep.subsample_stride = p.value("subsample_stride", m.prep.subsample_stride);
      if (p.contains("train_window")) m.prep.train = window_from(p.at("train_window"), m.prep.train);
      if (p.contains("eval_window")) m.prep.eval = window_from(p.at("eval_window"), m.prep.eval);
    }
    auto resolve = [&](const std::string& s) {
      std::filesystem::path p(s);
      return p.is_relative() ? base_dir / p : p;
    };
    for (const auto& s : doc.at("scenes")) {
      m.scenes.push_back({s.at("id").get<std::string>(), resolve(s.at("data").get<std::string>()),
                          resolve(s.at("scene").get<std::string>())});
    }
    for (const auto& f : doc.at("folds")) {
      m.folds.push_back({f.at("train").get<std::vector<std::string>>(),
                         f.at("test").get<std::vector<std::string>>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("folds manifest: ") + e.what());
  }
}

void save_folds(const std::filesystem::path& path, const FoldsManifest& m) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << folds_to_json(m).dump(2) << '\n';
}

FoldsManifest load_folds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open folds manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return folds_from_json(doc, path.parent_path());
}

PreparedScene prepare_scene(const TrajectoryDataset& raw, const Scene& scene,
                            const PrepOptions& options, const GridSpec& grid) {
  grid.validate();
  PreparedScene p;
  p.id = raw.scene_id;
  const TrajectoryDataset sampled = subsample(raw, options.subsample_stride);
  p.normalized = normalize(sampled, scene);
  p.context.static_points = p.normalized.scene.points();
  p.context.grid = grid.scaled(p.normalized.transform.scale);
  p.train_windows = make_windows(p.normalized.dataset, options.train);
  p.eval_windows = make_windows(p.normalized.dataset, options.eval);
  return p;
}

std::size_t common_static_points(const std::vector<const PreparedScene*>& scenes) {
  std::size_t k = 0;
  bool first = true;
  for (const auto* s : scenes) {
    const std::size_t n = s->context.static_points.size();
    if (!first && n != k) {
      throw ConfigError("scenes disagree on the number of static points (" + std::to_string(k) +
                        " vs " + std::to_string(n) + " in " + s->id + ")");
    }
    k = n;
    first = false;
  }
  return k;
}

std::vector<TrainingExample> training_examples(const std::vector<const PreparedScene*>& scenes) {
  std::vector<TrainingExample> out;
  for (const auto* s : scenes) {
    for (const auto& w : s->train_windows) out.push_back({&w, &s->context});
  }
  return out;
}

namespace {

SceneEvaluation evaluate_with(const PreparedScene& scene,
                              const std::function<PredictionResult(const SceneWindow&)>& predict) {
  SceneEvaluation eval;
  eval.scene = scene.id;
  const auto& windows = scene.eval_windows;
  eval.windows.resize(windows.size());
  const Transform& tf = scene.normalized.transform;
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(windows.size());
  std::vector<std::string> errors(windows.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const auto& w = windows[static_cast<std::size_t>(i)];
      WindowEvaluation we;
      we.index = static_cast<std::size_t>(i);
      we.prediction = predict(w);
      for (auto& a : we.prediction.agents) {
        for (auto& p : a.positions) p = tf.invert(p);
        for (auto& g : a.dists) {
          g.mu = tf.invert(g.mu);
          g.sigma_x /= tf.scale;
          g.sigma_y /= tf.scale;
        }
      }
      we.truth = future_truth(w);
      for (auto& track : we.truth) {
        for (auto& p : track) p = tf.invert(p);
      }
      const auto pred = predicted_tracks(we.prediction);
      we.ade_m = ade(pred, we.truth);
      eval.windows[static_cast<std::size_t>(i)] = std::move(we);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error("evaluation of " + scene.id + " failed: " + e);
  }
  double sum = 0.0;
  std::size_t steps = 0;
  for (const auto& we : eval.windows) {
    for (std::size_t a = 0; a < we.truth.size(); ++a) {
      for (std::size_t t = 0; t < we.truth[a].size(); ++t) {
        sum += distance(we.prediction.agents[a].positions[t], we.truth[a][t]);
        ++steps;
      }
    }
    eval.tracks += we.truth.size();
  }
  eval.ade_m = steps > 0 ? sum / static_cast<double>(steps) : 0.0;
  return eval;
}

}  // namespace

SceneEvaluation evaluate_scene(const PreparedScene& scene, const Parameters& params,
                               RolloutMode mode, std::uint64_t seed) {
  if (params.variant.context == ContextPooling::distance &&
      scene.context.static_points.size() != params.hyper.static_points) {
    throw ConfigError("checkpoint expects K = " + std::to_string(params.hyper.static_points) +
                      " static points, scene " + scene.id + " has " +
                      std::to_string(scene.context.static_points.size()));
  }
  return evaluate_with(scene, [&](const SceneWindow& w) {
    // Per-window seed keeps sample mode independent of thread scheduling.
    return rollout(w, scene.context, params, mode, seed + static_cast<std::uint64_t>(w.start));
  });
}

SceneEvaluation evaluate_baseline(const PreparedScene& scene) {
  return evaluate_with(scene, [](const SceneWindow& w) { return constant_velocity_baseline(w); });
}

const PreparedScene& find_scene(const std::vector<PreparedScene>& scenes, const std::string& id) {
  for (const auto& s : scenes) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown scene '" + id + "'");
}

namespace {

double pooled_ade(const std::vector<SceneEvaluation>& tests) {
  double sum = 0.0;
  std::size_t steps = 0;
  for (const auto& t : tests) {
    std::size_t n = 0;
    for (const auto& w : t.windows) {
      for (const auto& track : w.truth) n += track.size();
    }
    sum += t.ade_m * static_cast<double>(n);
    steps += n;
  }
  return steps > 0 ? sum / static_cast<double>(steps) : 0.0;
}

}  // namespace

FoldOutcome evaluate_fold(const std::vector<PreparedScene>& scenes, const Fold& fold,
                          int fold_index, const Parameters& params, RolloutMode mode,
                          std::uint64_t seed) {
  FoldOutcome out;
  out.fold = fold_index;
  for (const auto& id : fold.test) {
    out.tests.push_back(evaluate_scene(find_scene(scenes, id), params, mode, seed));
  }
  out.ade_m = pooled_ade(out.tests);
  return out;
}

FoldOutcome run_fold(const std::vector<PreparedScene>& scenes, const Fold& fold, int fold_index,
                     const ModelVariant& variant, const HyperParams& hyper,
                     const TrainConfig& config, RolloutMode mode) {
  std::vector<const PreparedScene*> train_scenes;
  for (const auto& id : fold.train) train_scenes.push_back(&find_scene(scenes, id));
  std::vector<const PreparedScene*> all = train_scenes;
  for (const auto& id : fold.test) all.push_back(&find_scene(scenes, id));

  HyperParams hp = hyper;
  hp.static_points = common_static_points(all);
  const auto examples = training_examples(train_scenes);
  TrainResult trained = train(examples, variant, hp, config);
  FoldOutcome out = evaluate_fold(scenes, fold, fold_index, trained.checkpoint.params, mode,
                                  config.seed);
  out.training = std::move(trained);
  return out;
}

void write_results_header(std::ostream& out) {
  out << "scene,fold,variant,window,agent,step,pred_x,pred_y,true_x,true_y\n";
}

void write_results(std::ostream& out, const SceneEvaluation& eval, int fold,
                   const std::string& variant) {
  out << std::setprecision(10);
  for (const auto& w : eval.windows) {
    for (std::size_t a = 0; a < w.prediction.agents.size(); ++a) {
      const auto& pa = w.prediction.agents[a];
      for (std::size_t t = 0; t < pa.positions.size(); ++t) {
        out << eval.scene << ',' << fold << ',' << variant << ',' << w.index << ',' << pa.agent
            << ',' << t << ',' << pa.positions[t].x << ',' << pa.positions[t].y << ','
            << w.truth[a][t].x << ',' << w.truth[a][t].y << '\n';
      }
    }
  }
}

std::vector<ResultRow> read_results(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (number == 1 && line.rfind("scene,", 0) == 0)) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) {
      throw FormatError("results line " + std::to_string(number) + ": expected 10 fields", number);
    }
    try {
      ResultRow r;
      r.scene = f[0];
      r.fold = std::stoi(f[1]);
      r.variant = f[2];
      r.window = std::stoul(f[3]);
      r.agent = std::stoi(f[4]);
      r.step = std::stoi(f[5]);
      r.pred = {std::stod(f[6]), std::stod(f[7])};
      r.truth = {std::stod(f[8]), std::stod(f[9])};
      rows.push_back(std::move(r));
    } catch (const std::exception&) {
      throw FormatError("results line " + std::to_string(number) + ": non-numeric field", number);
    }
  }
  return rows;
}

void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "variant,fold,sequence,ade_m\n" << std::setprecision(10);
  std::map<std::string, std::pair<double, int>> avg;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    out << r.variant << ',' << r.fold << ',' << r.sequence << ',' << r.ade_m << '\n';
    auto [it, inserted] = avg.try_emplace(r.variant, 0.0, 0);
    if (inserted) order.push_back(r.variant);
    it->second.first += r.ade_m;
    it->second.second += 1;
  }
  for (const auto& v : order) {
    const auto& [sum, n] = avg.at(v);
    out << v << ",avg,all," << sum / n << '\n';
  }
}

void write_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows) {
  std::vector<std::string> sequences;
  std::vector<std::string> variants;
  std::map<std::pair<std::string, std::string>, double> cell;
  for (const auto& r : rows) {
    if (std::find(sequences.begin(), sequences.end(), r.sequence) == sequences.end()) {
      sequences.push_back(r.sequence);
    }
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) {
      variants.push_back(r.variant);
    }
    cell[{r.variant, r.sequence}] = r.ade_m;
  }
  out << "variant";
  for (const auto& s : sequences) out << ',' << s;
  out << ",avg\n" << std::fixed << std::setprecision(3);
  for (const auto& v : variants) {
    out << v;
    double sum = 0.0;
    int n = 0;
    for (const auto& s : sequences) {
      auto it = cell.find({v, s});
      out << ',';
      if (it != cell.end()) {
        out << it->second;
        sum += it->second;
        ++n;
      }
    }
    out << ',';
    if (n > 0) out << sum / n;
    out << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace ctxlstm
