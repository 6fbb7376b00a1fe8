#include <CLI11.hpp>

#include <cstdio>
#include <algorithm>
#include <filesystem>
#include <map>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ctxlstm/checkpoint.hpp"
#include "ctxlstm/diagnostics.hpp"
#include "ctxlstm/errors.hpp"
#include "ctxlstm/log.hpp"
#include "ctxlstm/manifest.hpp"
#include "ctxlstm/pipeline.hpp"
#include "ctxlstm/plot.hpp"
#include "ctxlstm/synth.hpp"

namespace fs = std::filesystem;
using namespace ctxlstm;

namespace {

struct ModelFlags {
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  double grid_side = 32.0;
  int grid_cells = 8;

  HyperParams hyper() const {
    HyperParams hp;
    hp.embed_dim = embed_dim;
    hp.hidden_dim = hidden_dim;
    hp.grid = GridSpec{grid_side, grid_cells};
    return hp;
  }
  nlohmann::json json() const {
    return {{"embed_dim", embed_dim}, {"hidden_dim", hidden_dim},
            {"grid_side", grid_side}, {"grid_cells", grid_cells}};
  }
};

struct TrainFlags {
  TrainConfig config;
  bool full_range = false;
  bool closed_loop = false;

  TrainConfig resolved() const {
    TrainConfig c = config;
    c.loss.full_range = full_range;
    c.loss.teacher_forcing = !closed_loop;
    return c;
  }
  nlohmann::json json() const {
    return {{"lr", config.learning_rate}, {"decay", config.rmsprop_decay},
            {"epochs", config.epochs},    {"clip_norm", config.clip_norm},
            {"seed", config.seed},        {"full_range", full_range},
            {"closed_loop", closed_loop}};
  }
};

struct PrepFlags {
  PrepOptions prep;
  nlohmann::json json() const {
    return {{"subsample", prep.subsample_stride}, {"t_obs", prep.train.t_obs},
            {"t_pred", prep.train.t_pred},        {"train_stride", prep.train.stride},
            {"eval_stride", prep.eval.stride}};
  }
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--embed-dim", m.embed_dim, "Embedding width")->capture_default_str();
  cmd->add_option("--hidden-dim", m.hidden_dim, "LSTM hidden width")->capture_default_str();
  cmd->add_option("--grid-side", m.grid_side, "Pooling neighborhood side, dataset units")
      ->capture_default_str();
  cmd->add_option("--grid-cells", m.grid_cells, "Pooling cells per side")->capture_default_str();
}

void add_train_flags(CLI::App* cmd, TrainFlags& t) {
  cmd->add_option("--epochs", t.config.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--lr", t.config.learning_rate, "RMSProp learning rate")->capture_default_str();
  cmd->add_option("--decay", t.config.rmsprop_decay, "RMSProp decay")->capture_default_str();
  cmd->add_option("--clip", t.config.clip_norm, "Global gradient-norm clip")->capture_default_str();
  cmd->add_option("--seed", t.config.seed, "Initialization and shuffling seed")
      ->capture_default_str();
  cmd->add_flag("--full-range", t.full_range, "Score every step of a window, not only predictions");
  cmd->add_flag("--closed-loop", t.closed_loop,
                "Feed predicted means back over the prediction segment while training");
}

void add_prep_flags(CLI::App* cmd, PrepFlags& p) {
  auto& o = p.prep;
  cmd->add_option("--subsample", o.subsample_stride, "Keep every n-th native frame")
      ->capture_default_str();
  cmd->add_option("--t-obs", o.train.t_obs, "Observed steps per window")->capture_default_str();
  cmd->add_option("--t-pred", o.train.t_pred, "Predicted steps per window")->capture_default_str();
  cmd->add_option("--train-stride", o.train.stride, "Training window stride")
      ->capture_default_str();
  cmd->add_option("--eval-stride", o.eval.stride, "Evaluation window stride")
      ->capture_default_str();
}

PrepOptions sync_prep(PrepOptions p) {
  p.eval.t_obs = p.train.t_obs;
  p.eval.t_pred = p.train.t_pred;
  return p;
}

std::vector<std::string> argv_vector(int argc, char** argv) {
  return {argv, argv + argc};
}

fs::path manifest_path_for(const fs::path& out) {
  return fs::is_directory(out) ? out / "manifest.json"
                               : fs::path(out.string() + ".manifest.json");
}

std::vector<PreparedScene> prepare_all(const FoldsManifest& m, const GridSpec& grid) {
  std::vector<PreparedScene> scenes;
  for (const auto& s : m.scenes) {
    const auto raw = load_trajectories(s.data, s.id);
    const auto scene = load_scene(s.scene, s.id);
    scenes.push_back(prepare_scene(raw, scene, m.prep, grid));
    log::info("scene " + s.id + ": " + std::to_string(scenes.back().train_windows.size()) +
              " training windows, " + std::to_string(scenes.back().eval_windows.size()) +
              " evaluation windows");
  }
  return scenes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware LSTM trajectory prediction"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with attractors");
  std::string synth_config;
  std::string synth_id = "synth";
  std::uint64_t synth_seed = 1;
  int synth_agents = -1;
  fs::path synth_out;
  synth->add_option("--config", synth_config, "JSON simulation parameters")
      ->check(CLI::ExistingFile);
  synth->add_option("--id", synth_id, "Scene id and file stem")->capture_default_str();
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "Simulation seed");
  synth->add_option("--agents", synth_agents, "Number of agents");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Check scenes and write a folds manifest");
  std::vector<fs::path> prep_data, prep_scenes;
  int prep_k = 2;
  PrepFlags prep_flags;
  fs::path prep_out;
  prepare->add_option("--data", prep_data, "Trajectory TSV, one per scene")->required()
      ->check(CLI::ExistingFile);
  prepare->add_option("--scene", prep_scenes, "Static point TSV, paired with --data")->required()
      ->check(CLI::ExistingFile);
  prepare->add_option("--k", prep_k, "Number of folds")->capture_default_str();
  add_prep_flags(prepare, prep_flags);
  prepare->add_option("--out", prep_out, "Folds manifest path")->required();

  // train
  auto* trainc = app.add_subcommand("train", "Train one variant");
  std::string train_variant = "lstm";
  fs::path train_folds, train_data, train_scene, train_out;
  int train_fold = -1;
  ModelFlags train_model;
  TrainFlags train_flags;
  PrepFlags train_prep;
  trainc->add_option("--variant", train_variant, "Model variant")->capture_default_str();
  trainc->add_option("--folds", train_folds, "Folds manifest")->check(CLI::ExistingFile);
  trainc->add_option("--fold", train_fold, "Train on this fold's training scenes");
  trainc->add_option("--data", train_data, "Trajectory TSV (instead of --folds)")
      ->check(CLI::ExistingFile);
  trainc->add_option("--scene", train_scene, "Static point TSV (with --data)")
      ->check(CLI::ExistingFile);
  add_model_flags(trainc, train_model);
  add_train_flags(trainc, train_flags);
  add_prep_flags(trainc, train_prep);
  trainc->add_option("--out", train_out, "Output directory")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validated training and ADE evaluation");
  std::vector<std::string> eval_variants;
  fs::path eval_folds, eval_out, eval_checkpoint, eval_data, eval_scene;
  std::string eval_mode = "mean";
  bool eval_baseline = false;
  ModelFlags eval_model;
  TrainFlags eval_flags;
  PrepFlags eval_prep;
  evaluate->add_option("--variant", eval_variants, "Model variants (repeatable)");
  evaluate->add_option("--folds", eval_folds, "Folds manifest")->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", eval_checkpoint, "Evaluate a trained checkpoint instead")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--data", eval_data, "Trajectory TSV for --checkpoint")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--scene", eval_scene, "Static point TSV for --checkpoint")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--mode", eval_mode, "Rollout mode")
      ->check(CLI::IsMember({"mean", "sample"}))
      ->capture_default_str();
  evaluate->add_flag("--baseline", eval_baseline, "Also report constant velocity");
  add_model_flags(evaluate, eval_model);
  add_train_flags(evaluate, eval_flags);
  add_prep_flags(evaluate, eval_prep);
  evaluate->add_option("--out", eval_out, "Output directory")->required();

  // plot
  auto* plot = app.add_subcommand("plot", "SVG overlays of predictions against ground truth");
  fs::path plot_results, plot_scene, plot_out;
  std::size_t plot_max = 20;
  plot->add_option("--results", plot_results, "results.csv from evaluate")->required()
      ->check(CLI::ExistingFile);
  plot->add_option("--scene", plot_scene, "Static point TSV to mark")->check(CLI::ExistingFile);
  plot->add_option("--max-windows", plot_max, "Upper bound on emitted figures (0 = all)")
      ->capture_default_str();
  plot->add_option("--out", plot_out, "Output directory")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  bool gc_tiny = false;
  std::vector<std::string> gc_variants;
  std::uint64_t gc_seed = 7;
  double gc_tol = 1e-4;
  gradcheck->add_flag("--tiny", gc_tiny, "Embed 4, hidden 8, every coordinate");
  gradcheck->add_option("--variant", gc_variants, "Variants to check (default: all nine)");
  gradcheck->add_option("--seed", gc_seed, "Problem seed")->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tol, "Relative error bound")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  static const std::map<std::string, log::Level> levels{{"debug", log::Level::debug},
                                                        {"info", log::Level::info},
                                                        {"warn", log::Level::warn},
                                                        {"error", log::Level::error},
                                                        {"off", log::Level::off}};
  log::set_level(levels.at(log_level));

  try {
    if (synth->parsed()) {
      SynthConfig cfg;
      if (!synth_config.empty()) {
        std::ifstream in(synth_config);
        nlohmann::json doc;
        try {
          doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(synth_config + ": " + e.what());
        }
        cfg = synth_config_from_json(doc);
      }
      if (*synth_seed_opt) cfg.seed = synth_seed;
      if (synth_agents >= 0) cfg.agents = synth_agents;
      cfg.validate();
      RunManifest manifest("synth", argv_vector(argc, argv));
      manifest.set_config(synth_config_to_json(cfg));
      manifest.set_seed(cfg.seed);
      if (!synth_config.empty()) manifest.add_input(synth_config);
      const SynthOutput out = generate(cfg, synth_id);
      fs::create_directories(synth_out);
      const auto data_path = synth_out / (synth_id + ".tsv");
      const auto scene_path = synth_out / (synth_id + ".scene.tsv");
      save_trajectories(data_path, out.dataset);
      save_scene(scene_path, out.scene);
      manifest.add_output(data_path);
      manifest.add_output(scene_path);
      manifest.save(synth_out / "manifest.json");
      std::cout << out.dataset.agents().size() << " agents, " << out.dataset.frames().size()
                << " frames -> " << data_path.string() << '\n';
      return 0;
    }

    if (prepare->parsed()) {
      if (prep_data.size() != prep_scenes.size()) {
        throw ConfigError("--data and --scene must be given the same number of times");
      }
      FoldsManifest m;
      m.prep = sync_prep(prep_flags.prep);
      RunManifest manifest("prepare", argv_vector(argc, argv));
      manifest.set_config(prep_flags.json());
      std::vector<std::string> ids;
      const fs::path base = fs::absolute(prep_out).parent_path();
      for (std::size_t i = 0; i < prep_data.size(); ++i) {
        const std::string id = prep_data[i].stem().string();
        if (std::find(ids.begin(), ids.end(), id) != ids.end()) {
          throw ConfigError("duplicate scene id '" + id + "' (file stems must differ)");
        }
        ids.push_back(id);
        m.scenes.push_back({id, fs::relative(fs::absolute(prep_data[i]), base),
                            fs::relative(fs::absolute(prep_scenes[i]), base)});
        manifest.add_input(prep_data[i]);
        manifest.add_input(prep_scenes[i]);
      }
      m.folds = make_folds(ids, prep_k);
      // Validates every scene end to end before committing the manifest.
      for (const auto& s : m.scenes) {
        const auto p = prepare_scene(load_trajectories(base / s.data, s.id),
                                     load_scene(base / s.scene, s.id), m.prep, GridSpec{});
        std::cout << s.id << ": " << p.normalized.dataset.agents().size() << " agents, "
                  << p.train_windows.size() << " training windows, " << p.eval_windows.size()
                  << " evaluation windows\n";
      }
      save_folds(prep_out, m);
      manifest.add_output(prep_out);
      manifest.save(manifest_path_for(prep_out));
      return 0;
    }

    if (trainc->parsed()) {
      const ModelVariant variant = ModelVariant::parse(train_variant);
      const HyperParams hyper = train_model.hyper();
      const TrainConfig config = train_flags.resolved();
      config.validate();
      RunManifest manifest("train", argv_vector(argc, argv));
      manifest.set_seed(config.seed);
      nlohmann::json snapshot = {{"variant", variant.name()},
                                 {"model", train_model.json()},
                                 {"training", train_flags.json()}};

      FoldsManifest m;
      std::vector<std::string> train_ids;
      if (!train_folds.empty()) {
        m = load_folds(train_folds);
        manifest.add_input(train_folds);
        if (train_fold >= 0) {
          if (static_cast<std::size_t>(train_fold) >= m.folds.size()) {
            throw ConfigError("--fold " + std::to_string(train_fold) + " out of range (" +
                              std::to_string(m.folds.size()) + " folds)");
          }
          train_ids = m.folds[static_cast<std::size_t>(train_fold)].train;
        } else {
          for (const auto& s : m.scenes) train_ids.push_back(s.id);
        }
        snapshot["fold"] = train_fold;
      } else {
        if (train_data.empty() || train_scene.empty()) {
          throw ConfigError("train needs --folds or both --data and --scene");
        }
        m.prep = sync_prep(train_prep.prep);
        m.scenes.push_back({train_data.stem().string(), train_data, train_scene});
        train_ids.push_back(m.scenes.back().id);
        snapshot["prep"] = train_prep.json();
      }
      for (const auto& s : m.scenes) {
        if (std::find(train_ids.begin(), train_ids.end(), s.id) == train_ids.end()) continue;
        manifest.add_input(s.data);
        manifest.add_input(s.scene);
      }
      manifest.set_config(snapshot);

      const auto scenes = prepare_all(m, hyper.grid);
      std::vector<const PreparedScene*> used;
      for (const auto& id : train_ids) used.push_back(&find_scene(scenes, id));
      HyperParams hp = hyper;
      hp.static_points = common_static_points(used);
      const auto examples = training_examples(used);
      const TrainResult result = train(examples, variant, hp, config);

      fs::create_directories(train_out);
      save_checkpoint(train_out / "checkpoint.json", result.checkpoint);
      save_loss_history(train_out / "loss.csv", result.history);
      manifest.add_output(train_out / "checkpoint.json");
      manifest.add_output(train_out / "loss.csv");
      manifest.save(train_out / "manifest.json");
      if (!result.history.empty()) {
        std::cout << "final mean NLL " << result.history.back().mean_nll << '\n';
      }
      return 0;
    }

    if (evaluate->parsed()) {
      const RolloutMode mode = eval_mode == "sample" ? RolloutMode::sample : RolloutMode::mean;
      RunManifest manifest("evaluate", argv_vector(argc, argv));
      fs::create_directories(eval_out);
      const fs::path results_path = eval_out / "results.csv";
      std::ofstream results(results_path);
      write_results_header(results);
      std::vector<SummaryRow> summary;

      if (!eval_checkpoint.empty()) {
        if (eval_data.empty() || eval_scene.empty()) {
          throw ConfigError("evaluate --checkpoint needs --data and --scene");
        }
        const Checkpoint ckpt = load_checkpoint(eval_checkpoint);
        const PrepOptions prep = sync_prep(eval_prep.prep);
        const auto scene = prepare_scene(load_trajectories(eval_data), load_scene(eval_scene,
                                         eval_data.stem().string()), prep,
                                         ckpt.params.hyper.grid);
        manifest.add_input(eval_checkpoint);
        manifest.add_input(eval_data);
        manifest.add_input(eval_scene);
        manifest.set_config({{"mode", eval_mode}, {"prep", eval_prep.json()}});
        manifest.set_seed(eval_flags.config.seed);
        const auto ev = evaluate_scene(scene, ckpt.params, mode, eval_flags.config.seed);
        write_results(results, ev, 0, ckpt.params.variant.name());
        summary.push_back({ckpt.params.variant.name(), 0, scene.id, ev.ade_m});
      } else {
        if (eval_folds.empty()) throw ConfigError("evaluate needs --folds or --checkpoint");
        if (eval_variants.empty() && !eval_baseline) {
          throw ConfigError("evaluate needs at least one --variant (or --baseline)");
        }
        const FoldsManifest m = load_folds(eval_folds);
        const HyperParams hyper = eval_model.hyper();
        const TrainConfig config = eval_flags.resolved();
        config.validate();
        std::vector<ModelVariant> variants;
        for (const auto& v : eval_variants) variants.push_back(ModelVariant::parse(v));
        manifest.add_input(eval_folds);
        for (const auto& s : m.scenes) {
          manifest.add_input(s.data);
          manifest.add_input(s.scene);
        }
        manifest.set_seed(config.seed);
        manifest.set_config({{"variants", eval_variants},
                             {"baseline", eval_baseline},
                             {"mode", eval_mode},
                             {"model", eval_model.json()},
                             {"training", eval_flags.json()}});
        const auto scenes = prepare_all(m, hyper.grid);
        auto sequence_name = [](const Fold& f) {
          std::string s;
          for (const auto& id : f.test) s += (s.empty() ? "" : "+") + id;
          return s;
        };
        if (eval_baseline) {
          for (std::size_t f = 0; f < m.folds.size(); ++f) {
            double sum = 0.0;
            std::size_t steps = 0;
            for (const auto& id : m.folds[f].test) {
              const auto ev = evaluate_baseline(find_scene(scenes, id));
              write_results(results, ev, static_cast<int>(f), "cv");
              std::size_t n = 0;
              for (const auto& w : ev.windows) {
                for (const auto& t : w.truth) n += t.size();
              }
              sum += ev.ade_m * static_cast<double>(n);
              steps += n;
            }
            summary.push_back({"cv", static_cast<int>(f), sequence_name(m.folds[f]),
                               steps ? sum / static_cast<double>(steps) : 0.0});
          }
        }
        for (const auto& variant : variants) {
          for (std::size_t f = 0; f < m.folds.size(); ++f) {
            log::info(variant.name() + " fold " + std::to_string(f));
            const FoldOutcome out = run_fold(scenes, m.folds[f], static_cast<int>(f), variant,
                                             hyper, config, mode);
            const fs::path dir = eval_out / variant.name() / ("fold" + std::to_string(f));
            fs::create_directories(dir);
            save_checkpoint(dir / "checkpoint.json", out.training.checkpoint);
            save_loss_history(dir / "loss.csv", out.training.history);
            manifest.add_output(dir / "checkpoint.json");
            manifest.add_output(dir / "loss.csv");
            for (const auto& ev : out.tests) {
              write_results(results, ev, static_cast<int>(f), variant.name());
            }
            summary.push_back({variant.name(), static_cast<int>(f), sequence_name(m.folds[f]),
                               out.ade_m});
          }
        }
      }
      results.close();
      {
        std::ofstream s(eval_out / "summary.csv");
        write_summary(s, summary);
        std::ofstream t(eval_out / "table.csv");
        write_summary_table(t, summary);
      }
      manifest.add_output(results_path);
      manifest.add_output(eval_out / "summary.csv");
      manifest.add_output(eval_out / "table.csv");
      manifest.save(eval_out / "manifest.json");
      write_summary_table(std::cout, summary);
      return 0;
    }

    if (plot->parsed()) {
      std::ifstream in(plot_results);
      const auto rows = read_results(in);
      std::vector<Point> statics;
      RunManifest manifest("plot", argv_vector(argc, argv));
      manifest.add_input(plot_results);
      if (!plot_scene.empty()) {
        statics = load_scene(plot_scene, plot_scene.stem().string()).points();
        manifest.add_input(plot_scene);
      }
      auto panels = panels_from_results(rows, statics);
      if (plot_max > 0 && panels.size() > plot_max) panels.resize(plot_max);
      manifest.set_config({{"max_windows", plot_max}});
      for (const auto& p : write_panels(plot_out, panels)) manifest.add_output(p);
      manifest.save(plot_out / "manifest.json");
      std::cout << panels.size() << " figures -> " << plot_out.string() << '\n';
      return 0;
    }

    if (gradcheck->parsed()) {
      std::vector<ModelVariant> variants;
      if (gc_variants.empty()) {
        variants = ModelVariant::all();
      } else {
        for (const auto& v : gc_variants) variants.push_back(ModelVariant::parse(v));
      }
      GradCheckSize size;
      if (!gc_tiny) size = {16, 32, 40, 1e-2, 10};
      bool ok = true;
      double worst = 0.0;
      for (const auto& v : variants) {
        const GradCheckReport r = tiny_gradcheck(v, gc_seed, size);
        const bool pass = r.passed(gc_tol);
        ok = ok && pass;
        worst = std::max(worst, r.max_rel_error);
        std::cout << (pass ? "PASS " : "FAIL ") << v.name() << ": " << r.summary() << '\n';
      }
      std::printf("max rel err %.3e (tolerance %.1e)\n", worst, gc_tol);
      return ok ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
