// Command-line front end: synth, make-targets, train, generate, eval.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spg/spg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

spg::RunConfig read_config(const std::string& path, const std::vector<std::string>& ablations) {
  spg::RunConfig cfg = path.empty() ? spg::RunConfig{} : spg::load_config(path);
  cfg.apply_ablations(ablations);
  cfg.validate();
  return cfg;
}

std::vector<spg::Scene> read_scenes(const std::string& where) {
  const auto paths = spg::io::list_scenes(where);
  std::vector<spg::Scene> scenes(paths.size());
  spg::parallel_for(paths.size(), spg::worker_count(), [&](std::size_t i) { scenes[i] = spg::io::load_scene(paths[i]); });
  return scenes;
}

spg::SpgModel<float> model_for(const spg::RunConfig& cfg, std::size_t prop_count, const std::string& checkpoint) {
  if (checkpoint.empty()) {
    return spg::SpgModel<float>(cfg.network, static_cast<std::size_t>(cfg.grid.nz()), prop_count, cfg.optimizer.seed);
  }
  return spg::load_model<float>(cfg, prop_count, spg::io::load_checkpoint(checkpoint));
}

std::size_t prop_count_of(const std::vector<spg::Scene>& scenes) {
  if (scenes.empty()) throw spg::DataError("no scenes found");
  const std::size_t F = scenes.front().cloud.prop_count();
  for (const auto& s : scenes) {
    if (s.cloud.prop_count() != F) throw spg::DataError("scenes disagree on property count");
  }
  return F;
}

void write_json(const std::string& path, const json& j) {
  auto os = spg::io::detail::open_out(path);
  os << j.dump(2) << '\n';
  if (!os) throw spg::DataError("failed writing " + path);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(prec) << v;
  return ss.str();
}

// Left column left-aligned, the rest right-aligned.
void print_table(std::ostream& os, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) os << "  ";
      os << (c == 0 ? std::left : std::right) << std::setw(static_cast<int>(width[c])) << r[c];
    }
    os << '\n';
  }
}

// --- subcommands -----------------------------------------------------------

struct SynthArgs {
  std::string config, out_dir, profile = "dry";
  std::size_t count = 0;
};

int run_synth(const SynthArgs& a) {
  const auto cfg = read_config(a.config, {});
  if (a.profile != "dry" && a.profile != "rainy") throw spg::UsageError("--profile must be dry or rainy");
  if (a.count == 0) return 0;
  fs::create_directories(a.out_dir);
  spg::parallel_for(a.count, spg::worker_count(), [&](std::size_t i) {
    auto scene = spg::make_scene(cfg.recipe, i);
    if (a.profile == "rainy") scene = spg::degrade(scene, cfg.rainy.for_scene(i));
    char name[32];
    std::snprintf(name, sizeof name, "scene_%06zu.json", i);
    spg::io::save_scene(fs::path(a.out_dir) / name, scene);
  });
  std::cout << "wrote " << a.count << " " << a.profile << " scenes to " << a.out_dir << '\n';
  return 0;
}

struct TargetsArgs {
  std::string config, scenes, out;
};

int run_make_targets(const TargetsArgs& a) {
  const auto cfg = read_config(a.config, {});
  const auto paths = spg::io::list_scenes(a.scenes);
  fs::create_directories(a.out);
  std::vector<std::size_t> hidden(paths.size()), fg(paths.size());
  spg::parallel_for(paths.size(), spg::worker_count(), [&](std::size_t i) {
    const auto scene = spg::io::load_scene(paths[i]);
    const auto seed = spg::Rng(cfg.optimizer.seed).split({spg::streams::kHide, i}).next_u64();
    const auto t = spg::build_targets(scene, cfg.grid, cfg.target_options(seed));
    spg::io::save_targets(fs::path(a.out) / (paths[i].stem().string() + ".spgt"), t);
    hidden[i] = t.hidden.size();
    for (const auto& v : t.voxels) fg[i] += v.y_f;
  });
  std::vector<std::vector<std::string>> rows{{"scene", "hidden", "foreground"}};
  for (std::size_t i = 0; i < paths.size(); ++i) {
    rows.push_back({paths[i].stem().string(), std::to_string(hidden[i]), std::to_string(fg[i])});
  }
  print_table(std::cout, rows);
  return 0;
}

struct TrainArgs {
  std::string config, scenes, checkpoint_out, log, resume;
  std::vector<std::string> ablate;
  std::optional<std::size_t> steps;
};

int run_train(const TrainArgs& a) {
  auto cfg = read_config(a.config, a.ablate);
  if (a.steps) cfg.optimizer.steps = *a.steps;
  spg::Trainer<float> trainer(cfg, read_scenes(a.scenes));
  if (!a.resume.empty()) {
    const auto c = spg::io::load_checkpoint(a.resume);
    trainer.restore(c);
    if (trainer.step_index() > cfg.optimizer.steps) {
      throw spg::UsageError("checkpoint is at step " + std::to_string(c.step) + ", beyond the requested " +
                            std::to_string(cfg.optimizer.steps) + " steps");
    }
  }
  std::ofstream log;
  if (!a.log.empty()) {
    log = spg::io::detail::open_out(a.log);
  }
  trainer.run(cfg.optimizer.steps, [&](const spg::StepRecord& r) {
    if (log.is_open()) {
      log << json{{"step", r.step}, {"loss", r.loss}, {"cls", r.cls}, {"reg", r.reg}}.dump() << '\n';
    }
  });
  if (log.is_open() && !log) throw spg::DataError("failed writing " + a.log);
  spg::io::save_checkpoint(a.checkpoint_out, trainer.checkpoint());
  std::cout << "trained to step " << trainer.step_index() << ", checkpoint " << a.checkpoint_out << '\n';
  return 0;
}

struct GenerateArgs {
  std::string config, checkpoint, scene, out, ply;
  std::vector<std::string> ablate;
};

int run_generate(const GenerateArgs& a) {
  const auto cfg = read_config(a.config, a.ablate);
  const auto scene = spg::io::load_scene(a.scene);
  const auto model = model_for(cfg, scene.cloud.prop_count(), a.checkpoint);
  const auto preds = spg::predict(model, scene.cloud, cfg.grid, cfg.generation_radius(), cfg.area_mode);
  const auto sem = spg::select_points(preds, cfg.generation);
  const auto aug = spg::augment(scene.cloud, sem, cfg.generation);
  spg::io::save_cloud(a.out, spg::io::CloudFile::augmented(aug));
  if (!a.ply.empty()) spg::io::save_ply(a.ply, aug);
  std::cout << "original " << aug.semantic_begin() << ", semantic " << aug.semantic_count() << " (of "
            << preds.size() << " candidate voxels)\n";
  return 0;
}

struct EvalArgs {
  std::string config, checkpoint, scenes, report;
  std::vector<std::string> ablate;
  std::vector<double> range_bins{0, 5, 10, 15, 20, 25, 30};
};

int run_eval(const EvalArgs& a) {
  const auto cfg = read_config(a.config, a.ablate);
  const auto scenes = read_scenes(a.scenes);
  const auto model = model_for(cfg, prop_count_of(scenes), a.checkpoint);
  const int radius = cfg.generation_radius();

  std::vector<std::vector<spg::ScoredLabel>> per_scene(scenes.size());
  spg::parallel_for(scenes.size(), spg::worker_count(), [&](std::size_t i) {
    per_scene[i] = spg::score_voxels(model, std::span(scenes).subspan(i, 1), cfg.grid, radius, cfg.area_mode);
  });
  std::vector<spg::ScoredLabel> pairs;
  for (auto& p : per_scene) pairs.insert(pairs.end(), p.begin(), p.end());
  const auto r = spg::classifier_metrics(pairs);
  const auto bins = spg::points_per_object_by_range(scenes, a.range_bins);

  json jbins = json::array();
  for (const auto& b : bins) {
    jbins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"boxes", b.boxes}, {"mean_points", b.mean_points}, {"empty", b.empty}});
  }
  const json report{
      {"scenes", scenes.size()},
      {"area_radius", radius},
      {"ablations", a.ablate},
      {"checkpoint", a.checkpoint},
      {"classifier",
       {{"count", r.count},
        {"true_pos", r.true_pos},
        {"false_pos", r.false_pos},
        {"true_neg", r.true_neg},
        {"false_neg", r.false_neg},
        {"accuracy", r.accuracy},
        {"precision", r.precision},
        {"recall", r.recall},
        {"ap", r.ap},
        {"recall_thresholds", r.recall_thresholds},
        {"no_positive_predictions", r.no_positive_predictions},
        {"no_positive_labels", r.no_positive_labels}}},
      {"points_per_object_by_range", jbins},
  };
  if (!a.report.empty()) write_json(a.report, report);

  print_table(std::cout, {{"metric", "value"},
                          {"voxels", std::to_string(r.count)},
                          {"accuracy", fmt(r.accuracy)},
                          {"precision", fmt(r.precision) + (r.no_positive_predictions ? " *" : "")},
                          {"recall", fmt(r.recall)},
                          {"AP@" + std::to_string(r.recall_thresholds), fmt(r.ap)}});
  if (r.no_positive_predictions) std::cout << "* no positive predictions\n";
  std::cout << '\n';
  std::vector<std::vector<std::string>> rows{{"range [m]", "boxes", "mean points", "log10"}};
  for (const auto& b : bins) {
    rows.push_back({fmt(b.lo, 0) + "-" + fmt(b.hi, 0), std::to_string(b.boxes), b.empty ? "-" : fmt(b.mean_points, 1),
                    b.empty || b.mean_points <= 0 ? "-" : fmt(std::log10(b.mean_points), 2)});
  }
  print_table(std::cout, rows);
  return 0;
}

std::vector<std::string> split_flags(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& s : raw) {
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');) {
      if (!tok.empty()) out.push_back(tok);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic point generation toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write synthetic scenes");
  c_synth->add_option("--config", synth.config, "Run config JSON (defaults if omitted)");
  c_synth->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  c_synth->add_option("--count", synth.count, "Number of scenes")->required();
  c_synth->add_option("--profile", synth.profile, "dry or rainy")->check(CLI::IsMember({"dry", "rainy"}));

  TargetsArgs targets;
  auto* c_targets = app.add_subcommand("make-targets", "Build supervision targets for scenes");
  c_targets->add_option("--config", targets.config, "Run config JSON");
  c_targets->add_option("--scenes", targets.scenes, "Scene JSON file or directory")->required();
  c_targets->add_option("--out", targets.out, "Output directory for .spgt files")->required();

  TrainArgs train;
  std::vector<std::string> train_ablate;
  std::size_t train_steps = 0;
  auto* c_train = app.add_subcommand("train", "Train the foreground/regression network");
  c_train->add_option("--config", train.config, "Run config JSON");
  c_train->add_option("--scenes", train.scenes, "Scene JSON file or directory")->required();
  c_train->add_option("--checkpoint-out", train.checkpoint_out, "Checkpoint to write")->required();
  c_train->add_option("--log", train.log, "NDJSON loss log");
  c_train->add_option("--resume", train.resume, "Checkpoint to continue from");
  auto* o_steps = c_train->add_option("--steps", train_steps, "Total step count (overrides the config)");
  c_train->add_option("--ablate", train_ablate, "no-expansion, no-hide, no-confidence");

  GenerateArgs gen;
  std::vector<std::string> gen_ablate;
  auto* c_gen = app.add_subcommand("generate", "Augment a scene with semantic points");
  c_gen->add_option("--config", gen.config, "Run config JSON");
  c_gen->add_option("--checkpoint", gen.checkpoint, "Trained checkpoint (untrained model if omitted)");
  c_gen->add_option("--scene", gen.scene, "Scene JSON")->required();
  c_gen->add_option("--out", gen.out, "Augmented cloud file")->required();
  c_gen->add_option("--export-ply", gen.ply, "Also write a PLY coloured by confidence");
  c_gen->add_option("--ablate", gen_ablate, "no-expansion, no-hide, no-confidence");

  EvalArgs eval;
  std::vector<std::string> eval_ablate;
  auto* c_eval = app.add_subcommand("eval", "Evaluate the foreground classifier");
  c_eval->add_option("--config", eval.config, "Run config JSON");
  c_eval->add_option("--checkpoint", eval.checkpoint, "Trained checkpoint (untrained model if omitted)");
  c_eval->add_option("--scenes", eval.scenes, "Scene JSON file or directory")->required();
  c_eval->add_option("--report", eval.report, "Report JSON to write");
  c_eval->add_option("--ablate", eval_ablate, "no-expansion, no-hide, no-confidence");
  c_eval->add_option("--range-bins", eval.range_bins, "Range bin edges in meters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_targets) return run_make_targets(targets);
    if (*c_train) {
      train.ablate = split_flags(train_ablate);
      if (*o_steps) train.steps = train_steps;
      return run_train(train);
    }
    if (*c_gen) {
      gen.ablate = split_flags(gen_ablate);
      return run_generate(gen);
    }
    if (*c_eval) {
      eval.ablate = split_flags(eval_ablate);
      return run_eval(eval);
    }
  } catch (const spg::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const spg::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
