// morphloss command-line harness.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "morphloss/errors.hpp"
#include "morphloss/experiments.hpp"

namespace fs = std::filesystem;
using namespace morphloss;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitCheck = 4;

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out = "out";
  std::vector<std::string> overrides;
  bool quiet = false;
};

// Command options that become config keys.
struct Options {
  std::string loss;
  std::size_t epochs = 0;
  std::string shapes_dir;
  std::size_t components = 0;
  std::string checkpoint;
  std::string split = "test";
  std::string views;
  std::string losses;
  std::size_t trials = 0;
};

KeyValueConfig load_config(const Globals& g, const CLI::App& app) {
  KeyValueConfig kv;
  if (!g.config_path.empty()) kv = KeyValueConfig::load(g.config_path);
  for (const auto& o : g.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::ConfigInvalid, "--set expects key=value, got '" + o + "'");
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (app.count("--seed")) kv.set("seed", std::to_string(g.seed));
  return kv;
}

Logger make_logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << "\n"; };
}

std::vector<LossKind> parse_losses(const std::string& list) {
  KeyValueConfig kv;
  kv.set("losses", list);
  std::vector<LossKind> out;
  for (const auto& name : kv.get_list("losses", {})) out.push_back(loss_from_string(name));
  if (out.empty()) throw Error(ErrorCode::ConfigInvalid, "empty loss list");
  return out;
}

Shape read_xyz(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  if (!in.eof()) throw Error(ErrorCode::Io, "non-numeric content in " + path.string());
  if (v.empty() || v.size() % 3 != 0) throw Error(ErrorCode::Io, path.string() + ": expected rows of x y z");
  Points3 p(3, static_cast<Eigen::Index>(v.size() / 3));
  for (Eigen::Index i = 0; i < p.cols(); ++i) p.col(i) = Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  return Shape(std::move(p));
}

MorphableModel model_from_shapes(const fs::path& dir, std::size_t components) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::ConfigInvalid, "shapes directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".xyz") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::ConfigInvalid, "no .xyz shapes in " + dir.string());
  std::vector<Shape> shapes;
  for (const auto& f : files) shapes.push_back(read_xyz(f));
  for (const auto& s : shapes) {
    if (s.size() != shapes.front().size()) throw Error(ErrorCode::ConfigInvalid, "shapes differ in point count");
  }
  return build_model(procrustes_align(shapes), components);
}

int cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out, const Logger& log) {
  const MorphableModel model = load_or_build_model(cfg);
  const auto scenes = generate_dataset(model, cfg.data, cfg.seed);
  save_dataset(out / "dataset.jsonl", scenes, model, cfg.data);
  save_model(out / "model.json", model);
  write_manifest(out, "gen-data", cfg.to_json(), {cfg.seed, cfg.model_seed});
  if (log) log("wrote " + std::to_string(scenes.size()) + " scenes to " + (out / "dataset.jsonl").string());
  return kExitOk;
}

int cmd_build_model(const ExperimentConfig& cfg, const Options& o, const fs::path& out, const Logger& log) {
  const MorphableModel model = o.shapes_dir.empty() ? load_or_build_model(cfg)
                                                    : model_from_shapes(o.shapes_dir, cfg.model_components);
  save_model(out / "model.json", model);
  Json summary{{"n_points", model.n_points()},
               {"n_components", model.n_components()},
               {"eigenvalues", std::vector<double>(model.eigenvalues.data(),
                                                   model.eigenvalues.data() + model.eigenvalues.size())},
               {"model_hash", model_hash(model)}};
  write_text(out / "model_summary.json", summary.dump(2) + "\n");
  write_manifest(out, "build-model", cfg.to_json(), {cfg.model_seed});
  if (log) log("model with " + std::to_string(model.n_components()) + " components written to " + out.string());
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, const fs::path& out, const Logger& log) {
  const Workspace ws = make_workspace(cfg);
  const TrainConfig tc = cfg.train_config(cfg.train.loss, cfg.training_seed());
  auto on_epoch = [&](const EpochRecord& r, const Regressor&) {
    if (log) {
      std::string msg = "epoch " + std::to_string(r.epoch) + "/" + std::to_string(tc.epochs) +
                        " train " + format_number(r.train_loss) + " val " + format_number(r.val_loss);
      if (r.clipped_batches) msg += " clipped " + std::to_string(r.clipped_batches);
      log(msg);
    }
    return true;
  };
  const TrainResult result = train(ws.model, ws.K, ws.scenes, tc, on_epoch);
  const MetricReport val = evaluate(result.net, ws.model, ws.K, ws.scenes, Split::Val);
  save_checkpoint(out / "checkpoint.bin", result.net, cfg.to_json(), result.history.epochs.size(), metric_summary(val));
  write_text(out / "history.json", history_to_json(result.history, cfg.timing).dump(2) + "\n");
  write_text(out / "val_metrics.json", metric_summary(val).dump(2) + "\n");
  write_manifest(out, "train", cfg.to_json(), {cfg.seed, cfg.model_seed, tc.seed});
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& cfg, const Options& o, const fs::path& out, const Logger& log) {
  if (o.checkpoint.empty()) throw Error(ErrorCode::ConfigInvalid, "eval needs --checkpoint");
  const Workspace ws = make_workspace(cfg);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const MetricReport report = evaluate(ck.net, ws.model, ws.K, ws.scenes, split_from_string(o.split));
  Json summary = metric_summary(report);
  Json bins = Json::array();
  for (const auto& b : per_angle_bins(report.rows, 15.0)) {
    bins.push_back({{"axis", std::string(to_string(b.axis))},
                    {"lower_deg", b.lower_deg},
                    {"upper_deg", b.upper_deg},
                    {"count", b.count},
                    {"shape3d_mm", b.mean_shape3d_mm},
                    {"reprojection_px", b.mean_reprojection_px}});
  }
  summary["angle_bins"] = bins;
  write_text(out / "metrics.csv", metric_csv(report));
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_manifest(out, "eval", cfg.to_json(), {cfg.seed, cfg.model_seed});
  if (log) {
    log(o.split + ": reprojection " + format_number(report.reprojection_px) + " px, shape3d " +
        format_number(report.shape3d_mm) + " mm");
  }
  return kExitOk;
}

void write_trial_logs(const CompareResult& r, const fs::path& out, bool timing) {
  for (const auto& [loss, search] : r.searches) {
    write_text(out / ("trials_" + std::string(to_string(loss)) + ".jsonl"),
               trial_log_jsonl(loss, r.spaces.at(loss), search, timing));
  }
}

int cmd_compare(const ExperimentConfig& cfg, const fs::path& out, const Logger& log) {
  const Workspace ws = make_workspace(cfg);
  const CompareResult r = run_compare(ws, cfg, log);
  write_text(out / "compare.csv", compare_csv(r, cfg.timing));
  write_text(out / "compare.json", compare_json(r, cfg.timing).dump(2) + "\n");
  write_trial_logs(r, out, cfg.timing);
  write_manifest(out, "compare", cfg.to_json(), {cfg.seed, cfg.model_seed, cfg.training_seed()});
  const bool all_ok = std::all_of(r.rows.begin(), r.rows.end(), [](const CompareRow& row) { return row.ok; });
  return all_ok ? kExitOk : kExitRuntime;
}

int cmd_search(ExperimentConfig cfg, const fs::path& out, const Logger& log) {
  if (!is_multiterm(cfg.train.loss)) {
    throw Error(ErrorCode::ConfigInvalid, "search-hparams needs a multiterm loss (coarse or xqt)");
  }
  cfg.losses = {cfg.train.loss};
  const Workspace ws = make_workspace(cfg);
  const CompareResult r = run_compare(ws, cfg, log);
  write_trial_logs(r, out, cfg.timing);
  write_text(out / "search.json", compare_json(r, cfg.timing).dump(2) + "\n");
  write_manifest(out, "search-hparams", cfg.to_json(), {cfg.seed, cfg.model_seed, cfg.training_seed()});
  return r.rows.front().ok ? kExitOk : kExitRuntime;
}

int cmd_sweep(const ExperimentConfig& cfg, const fs::path& out, const Logger& log) {
  const Workspace ws = make_workspace(cfg);
  const SweepResult r = run_sweep_views(ws, cfg, log);
  write_text(out / "sweep.csv", sweep_csv(r, cfg.timing));
  write_text(out / "sweep.json", sweep_json(r, cfg.timing).dump(2) + "\n");
  write_manifest(out, "sweep-views", cfg.to_json(), {cfg.seed, cfg.model_seed, cfg.training_seed()});
  if (log) {
    log(std::string("shape3d spread ") + format_number(r.spread_mm) + " mm (limit " +
        format_number(r.spread_limit_mm) + "), time increasing: " + (r.time_increasing ? "yes" : "no"));
  }
  return r.ok() ? kExitOk : kExitCheck;
}

int cmd_flattening(const ExperimentConfig& cfg, const fs::path& out, const Logger& log) {
  const Workspace ws = make_workspace(cfg);
  const FlatteningResult r = run_flattening_demo(ws, cfg, log);
  write_text(out / "flattening.json", flattening_json(r, cfg.timing).dump(2) + "\n");
  write_manifest(out, "flattening-demo", cfg.to_json(), {cfg.seed, cfg.model_seed, cfg.training_seed()});
  if (log) {
    for (const auto& [name, ok] : r.checks) log(std::string(ok ? "PASS " : "FAIL ") + name);
  }
  return r.ok() ? kExitOk : kExitCheck;
}

int cmd_grad_check(const ExperimentConfig& cfg, const Options& o, const fs::path& out, const Logger& log) {
  const MorphableModel model = load_or_build_model(cfg);
  GradCheckOptions opt;
  opt.trials = cfg.grad_trials;
  opt.seed = cfg.seed;
  const std::vector<LossKind> losses =
      o.losses.empty() ? std::vector<LossKind>(std::begin(kAllLosses), std::end(kAllLosses)) : parse_losses(o.losses);
  const auto results = run_grad_check(model, cfg.data.K, losses, opt);
  const Json report = grad_check_json(results);
  write_text(out / "gradcheck.json", report.dump(2) + "\n");
  write_manifest(out, "grad-check", cfg.to_json(), {cfg.seed, cfg.model_seed});
  if (log) {
    for (const auto& r : results) {
      std::string msg = std::string(r.ok() ? "PASS " : "FAIL ") + std::string(to_string(r.loss)) + " " +
                        std::to_string(r.passed) + "/" + std::to_string(r.trials) + " (redrawn " +
                        std::to_string(r.redrawn) + ")";
      if (!r.failures.empty()) msg += " first failure in block " + r.failures.front().block;
      log(msg);
    }
  }
  return report.at("pass").get<bool>() ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"morphloss: hyperparameter-free losses for morphable-model regression"};
  app.require_subcommand(1);
  Globals g;
  Options o;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--set", g.overrides, "Override a config key (key=value), repeatable");
  app.add_flag("-q,--quiet", g.quiet, "No progress output");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset (JSON lines)");
  auto* build = app.add_subcommand("build-model", "Build a morphable model");
  build->add_option("--shapes", o.shapes_dir, "Directory of registered .xyz shapes (default: synthetic faces)");
  build->add_option("-B,--components", o.components, "Number of components");
  auto* trn = app.add_subcommand("train", "Train the regressor with one loss");
  trn->add_option("--loss", o.loss, "gal, srl, mrl, coarse or xqt");
  trn->add_option("--epochs", o.epochs, "Epoch count");
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  ev->add_option("--split", o.split, "train, val or test")->capture_default_str();
  auto* cmp = app.add_subcommand("compare", "Train and compare the configured losses");
  cmp->add_option("--losses", o.losses, "Comma-separated loss list");
  auto* sweep = app.add_subcommand("sweep-views", "MRL across view counts");
  sweep->add_option("--views", o.views, "Comma-separated view counts");
  auto* flat = app.add_subcommand("flattening-demo", "SRL vs MRL flattening on profile views");
  auto* search = app.add_subcommand("search-hparams", "Random search for a multiterm loss");
  search->add_option("--loss", o.loss, "coarse or xqt")->required();
  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient check");
  grad->add_option("--losses", o.losses, "Comma-separated loss list (default: all)");
  grad->add_option("--trials", o.trials, "Instances per loss");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    KeyValueConfig kv = load_config(g, app);
    if (!o.loss.empty()) kv.set("train.loss", o.loss);
    if (o.epochs) kv.set("train.epochs", std::to_string(o.epochs));
    if (o.components) kv.set("model.components", std::to_string(o.components));
    if (!o.views.empty()) kv.set("sweep.views", o.views);
    if (cmp->parsed() && !o.losses.empty()) kv.set("compare.losses", o.losses);
    if (grad->parsed() && grad->count("--trials")) kv.set("gradcheck.trials", std::to_string(o.trials));
    const ExperimentConfig cfg = ExperimentConfig::from(kv);
    const fs::path out = g.out;
    const Logger log = make_logger(g);

    if (gen->parsed()) return cmd_gen_data(cfg, out, log);
    if (build->parsed()) return cmd_build_model(cfg, o, out, log);
    if (trn->parsed()) return cmd_train(cfg, out, log);
    if (ev->parsed()) return cmd_eval(cfg, o, out, log);
    if (cmp->parsed()) return cmd_compare(cfg, out, log);
    if (sweep->parsed()) return cmd_sweep(cfg, out, log);
    if (flat->parsed()) return cmd_flattening(cfg, out, log);
    if (search->parsed()) return cmd_search(cfg, out, log);
    if (grad->parsed()) return cmd_grad_check(cfg, o, out, log);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigInvalid ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
