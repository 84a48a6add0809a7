#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "granet/checkpoint.hpp"
#include "granet/config.hpp"
#include "granet/io.hpp"
#include "granet/train.hpp"
#include "granet/viz.hpp"

namespace granet {
namespace cli {

struct Args {
  std::string config_path;
  std::string profile;
  std::string seeds;  // gen-scenes range "A..B"
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::string scenes_dir;
  std::string checkpoint;
  std::string out;
  std::string mode;
};

/// Flags override the config file, which overrides the profile defaults.
inline RunConfig effective_config(const Args& a) {
  RunConfig cfg = a.config_path.empty() ? config_for_profile(a.profile.empty() ? "paper"
                                                                               : a.profile)
                                        : load_config(a.config_path, a.profile);
  if (a.has_seed) cfg.seed = a.seed;
  if (!a.scenes_dir.empty()) cfg.scenes_dir = a.scenes_dir;
  if (!a.checkpoint.empty()) cfg.checkpoint = a.checkpoint;
  if (!a.out.empty()) cfg.out = a.out;
  if (!a.mode.empty()) cfg.mode = a.mode;
  validate_config(cfg);
  log_info("effective config:\n" + format_config(cfg));
  return cfg;
}

inline std::string scene_path(const std::string& dir, std::uint64_t seed) {
  return dir + "/scene_" + std::to_string(seed) + ".txt";
}
inline std::string annotation_path(const std::string& dir, std::uint64_t seed) {
  return dir + "/ann_" + std::to_string(seed) + ".txt";
}

inline std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& s) {
  const std::size_t dots = s.find("..");
  const auto num = [&](const std::string& part) { return detail::config_u64(part, "seeds"); };
  if (dots == std::string::npos) {
    const std::uint64_t v = num(s);
    return {v, v};
  }
  const std::uint64_t lo = num(s.substr(0, dots));
  const std::uint64_t hi = num(s.substr(dots + 2));
  if (hi < lo) throw std::runtime_error("seeds: range end before start: '" + s + "'");
  return {lo, hi};
}

/// Seeds present in a scenes directory (by file name), ascending.
inline std::vector<std::uint64_t> list_scene_seeds(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::vector<std::uint64_t> seeds;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("scene_", 0) != 0 || name.size() <= 10 ||
        name.compare(name.size() - 4, 4, ".txt") != 0)
      continue;
    const std::string digits = name.substr(6, name.size() - 10);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
    seeds.push_back(detail::config_u64(digits, "scene file name"));
  }
  std::sort(seeds.begin(), seeds.end());
  if (seeds.empty()) throw std::runtime_error("no scene files found under " + dir);
  return seeds;
}

inline int cmd_gen_scenes(const Args& a) {
  RunConfig cfg = effective_config(a);
  if (cfg.scenes_dir.empty()) throw std::runtime_error("gen-scenes requires --scenes DIR");
  if (a.seeds.empty()) throw std::runtime_error("gen-scenes requires --seeds A..B");
  std::filesystem::create_directories(cfg.scenes_dir);
  const auto [lo, hi] = parse_seed_range(a.seeds);
  const ModelConfig model = cfg.model();
  const ViewLattice lattice = fibonacci_viewpoints(model.gpg.views);
  const GripperModel grip = cfg.gripper();
  const AnnotateConfig acfg;
  for (std::uint64_t s = lo; s <= hi; ++s) {
    const SyntheticScene scene = generate_scene(s, cfg.scene_profile());
    const GraspAnnotationSet ann = annotate_grasps(scene, lattice, model.gpg, grip, acfg);
    write_scene(scene, scene_path(cfg.scenes_dir, s));
    write_annotations(ann, annotation_path(cfg.scenes_dir, s));
    log_info("scene " + std::to_string(s) + ": " + std::to_string(scene.cloud.size()) +
             " points, " + std::to_string(ann.total()) + " grasp annotations");
    if (s == hi) break;  // avoid wrap at UINT64_MAX
  }
  return 0;
}

inline std::string epoch_metrics_json(const EpochMetrics& m) {
  std::ostringstream o;
  o << "{\"epoch\": " << m.epoch << ", \"lr\": " << fmt9(m.lr) << ", \"loss\": " << fmt9(m.loss)
    << ", \"selection\": " << fmt9(m.selection) << ", \"view\": " << fmt9(m.view)
    << ", \"cell\": " << fmt9(m.cell) << ", \"score\": " << fmt9(m.score)
    << ", \"width\": " << fmt9(m.width) << ", \"ops_accuracy\": " << fmt9(m.ops_accuracy)
    << ", \"vps_within_one\": " << fmt9(m.vps_within_one)
    << ", \"matched\": " << fmt9(m.matched) << ", \"steps\": " << m.steps << "}";
  return o.str();
}

inline int cmd_train(const Args& a) {
  RunConfig cfg = effective_config(a);
  if (cfg.scenes_dir.empty()) throw std::runtime_error("train requires --scenes DIR");
  if (cfg.checkpoint.empty()) throw std::runtime_error("train requires --checkpoint PATH");
  const ModelConfig model = cfg.model();
  const ViewLattice lattice = fibonacci_viewpoints(model.gpg.views);
  Trainer trainer(model, cfg.train(), lattice);
  for (std::uint64_t s : list_scene_seeds(cfg.scenes_dir)) {
    TrainScene ts;
    ts.name = std::to_string(s);
    SyntheticScene scene = read_scene(scene_path(cfg.scenes_dir, s));
    ts.cloud = std::move(scene.cloud);
    ts.annotations = read_annotations(annotation_path(cfg.scenes_dir, s));
    trainer.add_scene(std::move(ts));
  }
  ParameterStore store;
  Rng rng(mix_seed(cfg.seed, 0x1217));
  model_init(store, model, rng);
  std::ofstream metrics;
  if (!cfg.out.empty()) {
    metrics.open(cfg.out, std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot open for writing: " + cfg.out);
  }
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const EpochMetrics m = trainer.run_epoch(store, epoch);
    const std::string line = epoch_metrics_json(m);
    log_info("epoch " + std::to_string(epoch) + ": " + line);
    if (metrics.is_open()) metrics << line << "\n";
    ckpt::save(store, cfg.checkpoint);
  }
  return 0;
}

inline int cmd_eval(const Args& a) {
  RunConfig cfg = effective_config(a);
  if (cfg.scenes_dir.empty()) throw std::runtime_error("eval requires --scenes DIR");
  if (cfg.checkpoint.empty()) throw std::runtime_error("eval requires --checkpoint PATH");
  const ModelConfig model = cfg.model();
  const ViewLattice lattice = fibonacci_viewpoints(model.gpg.views);
  const ParameterStore store = ckpt::load(cfg.checkpoint);
  std::vector<EvalReport> reports;
  for (std::uint64_t s : list_scene_seeds(cfg.scenes_dir)) {
    const SyntheticScene scene = read_scene(scene_path(cfg.scenes_dir, s));
    const std::vector<GraspPose> grasps =
        infer_grasps(store, scene.cloud, model, lattice);
    reports.push_back(evaluate_ap(scene, grasps, cfg.gripper(), cfg.eval()));
    log_info("scene " + std::to_string(s) + ": mean AP " + fmt9(reports.back().mean_ap));
  }
  const EvalReport merged = merge_eval_reports(reports);
  log_info("mean AP over " + std::to_string(reports.size()) + " scenes: " +
           fmt9(merged.mean_ap));
  if (!cfg.out.empty()) write_eval_report(merged, cfg.out);
  return 0;
}

inline int cmd_infer(const Args& a) {
  RunConfig cfg = effective_config(a);
  if (cfg.scenes_dir.empty()) throw std::runtime_error("infer requires --scenes DIR");
  if (cfg.checkpoint.empty()) throw std::runtime_error("infer requires --checkpoint PATH");
  if (cfg.out.empty()) throw std::runtime_error("infer requires --out PATH");
  if (!a.has_seed) throw std::runtime_error("infer requires --seed (selects the scene file)");
  const ModelConfig model = cfg.model();
  const ViewLattice lattice = fibonacci_viewpoints(model.gpg.views);
  const ParameterStore store = ckpt::load(cfg.checkpoint);
  const SyntheticScene scene = read_scene(scene_path(cfg.scenes_dir, cfg.seed));
  const std::vector<GraspPose> grasps = infer_grasps(store, scene.cloud, model, lattice);
  write_grasp_list(grasps, cfg.out);
  log_info("wrote " + std::to_string(grasps.size()) + " grasps to " + cfg.out);
  return 0;
}

inline int cmd_ablate(const Args& a) {
  RunConfig cfg = effective_config(a);
  if (cfg.scenes_dir.empty()) throw std::runtime_error("ablate requires --scenes DIR");
  if (cfg.checkpoint.empty()) throw std::runtime_error("ablate requires --checkpoint PATH");
  const ModelConfig model = cfg.model();
  const ViewLattice lattice = fibonacci_viewpoints(model.gpg.views);
  const ParameterStore store = ckpt::load(cfg.checkpoint);
  std::vector<SyntheticScene> scenes;
  for (std::uint64_t s : list_scene_seeds(cfg.scenes_dir))
    scenes.push_back(read_scene(scene_path(cfg.scenes_dir, s)));
  const AblationReport rep =
      run_ablation(store, scenes, model, lattice, cfg.gripper(), cfg.eval());
  std::ostringstream o;
  o << "granet-ablate 1\n";
  o << "scenes " << scenes.size() << "\n";
  for (std::size_t i = 0; i < scenes.size(); ++i)
    o << "scene " << scenes[i].seed << " learned " << fmt9(rep.learned_per_scene[i])
      << " baseline " << fmt9(rep.baseline_per_scene[i]) << "\n";
  o << "learned_ap " << fmt9(rep.learned_ap) << "\n";
  o << "baseline_ap " << fmt9(rep.baseline_ap) << "\n";
  o << "delta " << fmt9(rep.delta()) << "\n";
  log_info("learned AP " + fmt9(rep.learned_ap) + " vs baseline AP " + fmt9(rep.baseline_ap));
  if (!cfg.out.empty()) {
    std::ofstream f = detail::open_out(cfg.out);
    f << o.str();
    if (!f) throw std::runtime_error("write failed: " + cfg.out);
  } else {
    std::cout << o.str();
  }
  return 0;
}

inline int cmd_export_ply(const Args& a) {
  RunConfig cfg = effective_config(a);
  if (cfg.scenes_dir.empty()) throw std::runtime_error("export-ply requires --scenes DIR");
  if (cfg.checkpoint.empty()) throw std::runtime_error("export-ply requires --checkpoint PATH");
  if (cfg.out.empty()) throw std::runtime_error("export-ply requires --out PREFIX");
  if (!a.has_seed) throw std::runtime_error("export-ply requires --seed (selects the scene file)");
  const ModelConfig model = cfg.model();
  const ViewLattice lattice = fibonacci_viewpoints(model.gpg.views);
  const ParameterStore store = ckpt::load(cfg.checkpoint);
  const SyntheticScene scene = read_scene(scene_path(cfg.scenes_dir, cfg.seed));

  Tape tape;
  ParamBinder binder(tape, store);
  GraphArena arena;
  ForwardResult fwd = granet_forward(tape, binder, store, scene.cloud, model, lattice, arena);
  const std::vector<GraspPose> grasps = decode_result(tape, fwd, lattice, model.gpg);
  if (!fwd.sel.learned_selection) {
    write_ply_grasps(cfg.out + "_grasps.ply", grasps);
    log_info("fps-baseline mode: wrote " + cfg.out + "_grasps.ply only");
    return 0;
  }

  // predicted object mask over the resampled points
  const Tensor ops_logits = tape.val(fwd.sel.ops.logits);
  std::vector<Vec3> resampled;
  std::vector<Rgb> mask_colors;
  for (std::size_t i = 0; i < fwd.sel.embed.indices.size(); ++i) {
    resampled.push_back(scene.cloud.points[fwd.sel.embed.indices[i]]);
    const bool object = ops_logits.values[2 * i + 1] > ops_logits.values[2 * i];
    mask_colors.push_back(object ? kObjectColor : kBackgroundColor);
  }
  write_ply_points(cfg.out + "_mask.ply", resampled, mask_colors);

  // predicted graspability level over the object selection
  const Tensor vps_logits = tape.val(fwd.sel.vps.logits);
  const std::size_t levels = model.dov_levels;
  std::vector<Vec3> object_points;
  std::vector<Rgb> heat;
  std::vector<double> level_value;
  for (std::size_t i = 0; i < fwd.sel.ops.selected.size(); ++i) {
    object_points.push_back(scene.cloud.points[fwd.sel.ops.selected[i]]);
    std::size_t best = 0;
    for (std::size_t l = 1; l < levels; ++l)
      if (vps_logits.values[i * levels + l] > vps_logits.values[i * levels + best]) best = l;
    heat.push_back(heat_color(static_cast<double>(best) / static_cast<double>(levels - 1)));
    level_value.push_back(static_cast<double>(best));
  }
  write_ply_points(cfg.out + "_dov.ply", object_points, heat, "level", level_value);

  write_ply_grasps(cfg.out + "_grasps.ply", grasps);
  log_info("wrote " + cfg.out + "_{mask,dov,grasps}.ply");
  return 0;
}

inline int run_command(int argc, char** argv) {
  CLI::App app{"graph-based 6-DoF grasp generation on synthetic scenes"};
  app.require_subcommand(1);
  Args a;

  const auto add_common = [&a](CLI::App* cmd) {
    cmd->add_option("--config", a.config_path, "key = value config file");
    cmd->add_option("--profile", a.profile, "paper or desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--seed", a.seed, "run seed")->each([&a](const std::string&) {
      a.has_seed = true;
    });
    cmd->add_option("--scenes", a.scenes_dir, "scene directory");
    cmd->add_option("--checkpoint", a.checkpoint, "checkpoint path");
    cmd->add_option("--out", a.out, "output path or prefix");
    cmd->add_option("--mode", a.mode, "granet or fps-baseline")
        ->check(CLI::IsMember({"granet", "fps-baseline"}));
    return cmd;
  };

  CLI::App* gen = add_common(app.add_subcommand("gen-scenes", "generate + annotate scenes"));
  gen->add_option("--seeds", a.seeds, "seed range A..B (inclusive)");
  CLI::App* train = add_common(app.add_subcommand("train", "train over a scenes directory"));
  CLI::App* eval = add_common(app.add_subcommand("eval", "AP evaluation of a checkpoint"));
  CLI::App* infer = add_common(app.add_subcommand("infer", "write a grasp list for one scene"));
  CLI::App* ablate =
      add_common(app.add_subcommand("ablate", "learned selection vs FPS baseline"));
  CLI::App* exp = add_common(app.add_subcommand("export-ply", "write PLY visualizations"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen_scenes(a);
    if (train->parsed()) return cmd_train(a);
    if (eval->parsed()) return cmd_eval(a);
    if (infer->parsed()) return cmd_infer(a);
    if (ablate->parsed()) return cmd_ablate(a);
    if (exp->parsed()) return cmd_export_ply(a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}

}  // namespace cli
}  // namespace granet
