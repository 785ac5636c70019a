#include "morphloss/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "morphloss/errors.hpp"

namespace morphloss {

namespace {

constexpr std::uint64_t kTrainStream = 0x7A41;
constexpr std::uint64_t kSearchStream = 0x5EA4C;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double timed(bool timing, double v) { return timing ? v : 0.0; }

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
  ExperimentConfig c;
  c.seed = kv.get_u64("seed", c.seed);

  c.model_path = kv.get_string("model.path", c.model_path);
  c.model_points = kv.get_size("model.points", c.model_points);
  c.model_components = kv.get_size("model.components", c.model_components);
  c.model_subjects = kv.get_size("model.subjects", c.model_subjects);
  c.model_seed = kv.get_u64("model.seed", c.model_seed);

  DatasetConfig& d = c.data;
  c.data_path = kv.get_string("data.path", c.data_path);
  d.n_train = kv.get_size("data.train", d.n_train);
  d.n_val = kv.get_size("data.val", d.n_val);
  d.n_test = kv.get_size("data.test", d.n_test);
  if (kv.has("data.subjects")) {
    const DatasetConfig split = DatasetConfig::from_total(kv.get_size("data.subjects", 0));
    d.n_train = split.n_train;
    d.n_val = split.n_val;
    d.n_test = split.n_test;
  }
  d.mean_views = kv.get_double("data.mean_views", d.mean_views);
  d.n_landmarks = kv.get_size("data.landmarks", d.n_landmarks);
  d.noise_px = kv.get_double("data.noise_px", d.noise_px);
  d.min_depth = kv.get_double("data.min_depth", d.min_depth);
  d.poses.yaw_range = kv.get_double("data.yaw_range", d.poses.yaw_range);
  d.poses.pitch_range = kv.get_double("data.pitch_range", d.poses.pitch_range);
  d.poses.roll_range = kv.get_double("data.roll_range", d.poses.roll_range);
  d.poses.t_mean.z() = -kv.get_double("data.distance", -d.poses.t_mean.z());

  d.K.fx = kv.get_double("camera.fx", d.K.fx);
  d.K.fy = kv.get_double("camera.fy", d.K.fy);
  d.K.cx = kv.get_double("camera.cx", d.K.cx);
  d.K.cy = kv.get_double("camera.cy", d.K.cy);
  d.K.width = static_cast<decltype(d.K.width)>(kv.get_double("camera.width", d.K.width));
  d.K.height = static_cast<decltype(d.K.height)>(kv.get_double("camera.height", d.K.height));

  TrainConfig& t = c.train;
  t.loss = loss_from_string(kv.get_string("train.loss", std::string(to_string(t.loss))));
  c.epochs = kv.get_size("train.epochs", c.epochs);
  c.epoch_scale = kv.get_double("train.epoch_scale", c.epoch_scale);
  t.batch_size = kv.get_size("train.batch_size", t.batch_size);
  t.lr = kv.get_double("train.lr", t.lr);
  t.clip_norm = kv.get_double("train.clip_norm", t.clip_norm);
  t.views = kv.get_size("train.views", t.views);
  t.weights.alpha_w = kv.get_double("train.alpha_w", t.weights.alpha_w);
  t.weights.beta_w = kv.get_double("train.beta_w", t.weights.beta_w);
  t.weights.gamma_w = kv.get_double("train.gamma_w", t.weights.gamma_w);
  t.network.encoder_width = kv.get_size("train.encoder_width", t.network.encoder_width);
  t.network.encoder_depth = kv.get_size("train.encoder_depth", t.network.encoder_depth);
  t.network.head_hidden = kv.get_size("train.head_hidden", t.network.head_hidden);

  ViewSamplingConfig& v = t.view_sampling;
  v.yaw_range = kv.get_double("views.yaw_range", v.yaw_range);
  v.pitch_range = kv.get_double("views.pitch_range", v.pitch_range);
  v.roll_range = kv.get_double("views.roll_range", v.roll_range);
  v.t_mean.z() = -kv.get_double("views.distance", -v.t_mean.z());
  if (kv.has("views.sigma")) {
    const auto sigma = kv.get_list("views.sigma", {});
    if (sigma.size() != 3) throw Error(ErrorCode::ConfigInvalid, "views.sigma needs three entries");
    for (int k = 0; k < 3; ++k) {
      KeyValueConfig one;
      one.set("views.sigma", sigma[static_cast<std::size_t>(k)]);
      v.t_sigma[k] = one.get_double("views.sigma", 0.0);
    }
  }

  if (kv.has("compare.losses")) {
    c.losses.clear();
    for (const auto& name : kv.get_list("compare.losses", {})) c.losses.push_back(loss_from_string(name));
  }
  c.budget = kv.get_size("search.budget", c.budget);
  c.workers = kv.get_size("search.workers", c.workers);

  c.sweep_views = kv.get_size_list("sweep.views", c.sweep_views);
  c.sweep_max_spread = kv.get_double("sweep.max_spread", c.sweep_max_spread);

  c.grad_trials = kv.get_size("gradcheck.trials", c.grad_trials);

  c.profile_min_yaw = kv.get_double("flattening.min_yaw", c.profile_min_yaw);
  c.srl_max_ratio = kv.get_double("flattening.srl_max_ratio", c.srl_max_ratio);
  c.mrl_min_ratio = kv.get_double("flattening.mrl_min_ratio", c.mrl_min_ratio);
  c.mrl_max_ratio = kv.get_double("flattening.mrl_max_ratio", c.mrl_max_ratio);
  c.shape_factor = kv.get_double("flattening.shape_factor", c.shape_factor);

  c.timing = kv.get_bool("output.timing", c.timing);

  kv.require_all_used();
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  data.validate();
  train.validate();
  if (model_points < 2 || model_points % 2 != 0) throw Error(ErrorCode::ConfigInvalid, "model.points must be even");
  if (model_components < 1) throw Error(ErrorCode::ConfigInvalid, "model.components must be >= 1");
  if (!(epoch_scale > 0)) throw Error(ErrorCode::ConfigInvalid, "train.epoch_scale must be positive");
  if (losses.empty()) throw Error(ErrorCode::ConfigInvalid, "compare.losses is empty");
  if (budget < 1) throw Error(ErrorCode::ConfigInvalid, "search.budget must be >= 1");
  if (workers < 1) throw Error(ErrorCode::ConfigInvalid, "search.workers must be >= 1");
  if (sweep_views.empty()) throw Error(ErrorCode::ConfigInvalid, "sweep.views is empty");
  for (std::size_t i = 0; i < sweep_views.size(); ++i) {
    if (sweep_views[i] < 1 || (i > 0 && sweep_views[i] <= sweep_views[i - 1])) {
      throw Error(ErrorCode::ConfigInvalid, "sweep.views must be strictly increasing and >= 1");
    }
  }
  if (!(sweep_max_spread >= 0)) throw Error(ErrorCode::ConfigInvalid, "sweep.max_spread must be >= 0");
  if (grad_trials < 1) throw Error(ErrorCode::ConfigInvalid, "gradcheck.trials must be >= 1");
}

std::size_t ExperimentConfig::epochs_for(LossKind loss) const {
  if (epochs > 0) return epochs;
  const double scaled = std::ceil(static_cast<double>(TrainConfig::default_epochs(loss)) * epoch_scale);
  return static_cast<std::size_t>(std::max(1.0, scaled));
}

TrainConfig ExperimentConfig::train_config(LossKind loss, std::uint64_t run_seed) const {
  TrainConfig t = train;
  t.loss = loss;
  t.epochs = epochs_for(loss);
  t.seed = run_seed;
  return t;
}

std::uint64_t ExperimentConfig::training_seed() const { return derive_seed(seed, kTrainStream); }

Json ExperimentConfig::to_json() const {
  Json losses_json = Json::array();
  for (LossKind k : losses) losses_json.push_back(std::string(to_string(k)));
  return {{"seed", seed},
          {"model",
           {{"path", model_path},
            {"points", model_points},
            {"components", model_components},
            {"subjects", model_subjects},
            {"seed", model_seed}}},
          {"data", {{"path", data_path}, {"config", morphloss::to_json(data)}}},
          {"train", morphloss::to_json(train)},
          {"epochs", epochs},
          {"epoch_scale", epoch_scale},
          {"losses", losses_json},
          {"budget", budget},
          {"workers", workers},
          {"sweep", {{"views", sweep_views}, {"max_spread", sweep_max_spread}}},
          {"gradcheck_trials", grad_trials},
          {"flattening",
           {{"min_yaw", profile_min_yaw},
            {"srl_max_ratio", srl_max_ratio},
            {"mrl_min_ratio", mrl_min_ratio},
            {"mrl_max_ratio", mrl_max_ratio},
            {"shape_factor", shape_factor}}},
          {"timing", timing}};
}

MorphableModel load_or_build_model(const ExperimentConfig& config) {
  if (!config.model_path.empty()) return load_model(config.model_path);
  return build_synthetic_model(config.model_points, config.model_components, config.model_seed,
                               config.model_subjects);
}

Workspace make_workspace(const ExperimentConfig& config) {
  Workspace ws;
  ws.model = load_or_build_model(config);
  ws.K = config.data.K;
  if (config.data_path.empty()) {
    ws.scenes = generate_dataset(ws.model, config.data, config.seed);
  } else {
    Dataset d = load_dataset(config.data_path, &ws.model);
    ws.K = calibration_from_json(d.header.at("config").at("calibration"));
    ws.scenes = std::move(d.scenes);
  }
  return ws;
}

const CompareRow* CompareResult::row(LossKind loss) const {
  for (const auto& r : rows) {
    if (r.loss == loss) return &r;
  }
  return nullptr;
}

namespace {

void fill_metrics(CompareRow& row, const MetricReport& test) {
  row.reprojection_px = test.reprojection_px;
  row.shape3d_mm = test.shape3d_mm;
  row.translation_cm = test.translation_cm;
  row.rotation_deg = test.rotation_deg;
}

Json params_json(const HyperParams& params) {
  Json j = Json::object();
  for (const auto& [k, v] : params) j[k] = v;
  return j;
}

MultitermWeights weights_from(const HyperParams& params, MultitermWeights base) {
  if (auto it = params.find("alpha_w"); it != params.end()) base.alpha_w = it->second;
  if (auto it = params.find("beta_w"); it != params.end()) base.beta_w = it->second;
  if (auto it = params.find("gamma_w"); it != params.end()) base.gamma_w = it->second;
  return base;
}

}  // namespace

CompareResult run_compare(const Workspace& ws, const ExperimentConfig& config, const Logger& log) {
  CompareResult out;
  const std::uint64_t train_seed = config.training_seed();
  if (samples_of(ws.scenes, Split::Test).empty()) throw Error(ErrorCode::ConfigInvalid, "compare needs a test split");

  for (LossKind loss : config.losses) {
    CompareRow row;
    row.loss = loss;
    row.epochs = config.epochs_for(loss);
    const std::string name(to_string(loss));
    try {
      std::size_t epochs_run = 0;
      if (is_multiterm(loss)) {
        if (samples_of(ws.scenes, Split::Val).empty()) {
          throw Error(ErrorCode::ConfigInvalid, "hyperparameter search needs a validation split");
        }
        const TermScales scales = estimate_scales(ws.model, scenes_of(ws.scenes, Split::Train));
        const SearchSpace space = multiterm_space(loss, scales, config.budget);
        std::vector<std::optional<Regressor>> nets(space.budget);
        std::vector<double> times(space.budget, 0.0);
        std::vector<std::size_t> epochs(space.budget, 0);
        auto trial_fn = [&](const HyperParams& params, std::size_t trial) {
          TrainConfig tc = config.train_config(loss, derive_seed(train_seed, trial + 1));
          tc.lr = params.at("lr");
          tc.weights = weights_from(params, tc.weights);
          TrainResult r = train(ws.model, ws.K, ws.scenes, tc);
          times[trial] = r.history.total_time_s;
          epochs[trial] = r.history.epochs.size();
          const MetricReport val = evaluate(r.net, ws.model, ws.K, ws.scenes, Split::Val);
          nets[trial] = std::move(r.net);
          return TrialMetrics{val.shape3d_mm, val.reprojection_px};
        };
        auto on_trial = [&](const Trial& t) {
          if (!log) return;
          std::string msg = "[" + name + "] trial " + std::to_string(t.index + 1) + "/" + std::to_string(space.budget);
          for (const auto& [k, v] : t.params) msg += " " + k + "=" + format_number(v);
          msg += t.ok() ? " val shape3d " + format_number(t.metrics->shape3d_mm) + " mm, reprojection " +
                              format_number(t.metrics->reprojection_px) + " px"
                        : " failed: " + t.error;
          log(msg);
        };
        SearchResult search = random_search(space, trial_fn,
                                            derive_seed(config.seed, kSearchStream + static_cast<std::uint64_t>(loss)),
                                            config.workers, on_trial);
        const Trial& best = search.best_trial();
        fill_metrics(row, evaluate(*nets[best.index], ws.model, ws.K, ws.scenes, Split::Test));
        row.trainings = search.trials.size();
        for (std::size_t k = 0; k < space.budget; ++k) {
          row.total_time_s += times[k];
          epochs_run += epochs[k];
        }
        row.detail = {{"scales", {{"alpha", scales.alpha}, {"beta", scales.beta}, {"gamma", scales.gamma}}},
                      {"best_trial", best.index},
                      {"best_params", params_json(best.params)},
                      {"best_composite", best.composite},
                      {"successful_trials", search.successes()}};
        out.searches.emplace(loss, std::move(search));
        out.spaces.emplace(loss, space);
      } else {
        const TrainConfig tc = config.train_config(loss, train_seed);
        if (log) log("[" + name + "] training " + std::to_string(tc.epochs) + " epochs");
        const TrainResult r = train(ws.model, ws.K, ws.scenes, tc);
        fill_metrics(row, evaluate(r.net, ws.model, ws.K, ws.scenes, Split::Test));
        row.trainings = 1;
        row.total_time_s = r.history.total_time_s;
        epochs_run = r.history.epochs.size();
        row.detail = {{"lr", tc.lr}};
        if (loss == LossKind::Mrl) row.detail["views"] = tc.views;
      }
      row.time_per_epoch_s = epochs_run ? row.total_time_s / static_cast<double>(epochs_run) : 0.0;
      row.ok = true;
      if (log) {
        log("[" + name + "] test reprojection " + format_number(row.reprojection_px) + " px, shape3d " +
            format_number(row.shape3d_mm) + " mm");
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      row.reprojection_px = row.shape3d_mm = row.translation_cm = row.rotation_deg = kNaN;
      if (log) log("[" + name + "] failed: " + row.error);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string compare_csv(const CompareResult& result, bool timing) {
  std::string out =
      "loss,reprojection_px,shape3d_mm,translation_cm,rotation_deg,time_per_epoch_s,epochs,trainings,total_time_s,status\n";
  for (const auto& r : result.rows) {
    out += std::string(to_string(r.loss)) + "," + format_number(r.reprojection_px) + "," +
           format_number(r.shape3d_mm) + "," + format_number(r.translation_cm) + "," + format_number(r.rotation_deg) +
           "," + format_number(timed(timing, r.time_per_epoch_s)) + "," + std::to_string(r.epochs) + "," +
           std::to_string(r.trainings) + "," + format_number(timed(timing, r.total_time_s)) + "," +
           csv_field(r.ok ? "ok" : "failed: " + r.error) + "\n";
  }
  return out;
}

Json compare_json(const CompareResult& result, bool timing) {
  Json rows = Json::array();
  for (const auto& r : result.rows) {
    Json j{{"loss", std::string(to_string(r.loss))},
           {"reprojection_px", number_or_null(r.reprojection_px)},
           {"shape3d_mm", number_or_null(r.shape3d_mm)},
           {"translation_cm", number_or_null(r.translation_cm)},
           {"rotation_deg", number_or_null(r.rotation_deg)},
           {"time_per_epoch_s", timed(timing, r.time_per_epoch_s)},
           {"epochs", r.epochs},
           {"trainings", r.trainings},
           {"total_time_s", timed(timing, r.total_time_s)},
           {"status", r.ok ? "ok" : "failed"}};
    if (!r.ok) j["error"] = r.error;
    if (!r.detail.is_null()) j["detail"] = r.detail;
    rows.push_back(std::move(j));
  }
  return {{"columns",
           {"loss", "reprojection_px", "shape3d_mm", "translation_cm", "rotation_deg", "time_per_epoch_s", "epochs",
            "trainings", "total_time_s"}},
          {"rows", rows}};
}

std::string trial_log_jsonl(LossKind loss, const SearchSpace& space, const SearchResult& search, bool timing) {
  Json bounds = Json::object();
  for (const auto& [name, b] : space.params) bounds[name] = {b.lower, b.upper};
  Json header{{"loss", std::string(to_string(loss))},
              {"sampler", "random, log-uniform per bound"},
              {"budget", space.budget},
              {"bounds", bounds},
              {"selection", "minimize shape3d_mm / mean + reprojection_px / mean, means over successful trials"},
              {"best_trial", search.best}};
  std::string out = header.dump() + "\n";
  for (const auto& t : search.trials) {
    HyperParams weights = t.params;
    const auto lr = weights.find("lr");
    Json line{{"trial", t.index}};
    double lr_value = kNaN;
    if (lr != weights.end()) {
      lr_value = lr->second;
      weights.erase(lr);
    }
    line["params"] = params_json(weights);
    line["lr"] = number_or_null(lr_value);
    if (t.ok()) {
      line["metrics"] = {{"shape3d_mm", t.metrics->shape3d_mm},
                         {"reprojection_px", t.metrics->reprojection_px},
                         {"composite", t.composite}};
    } else {
      line["metrics"] = nullptr;
    }
    line["wall_time"] = timed(timing, t.wall_time_s);
    line["status"] = t.ok() ? "ok" : "failed";
    if (!t.ok()) line["error"] = t.error;
    out += line.dump() + "\n";
  }
  return out;
}

SweepResult run_sweep_views(const Workspace& ws, const ExperimentConfig& config, const Logger& log) {
  SweepResult out;
  const std::uint64_t train_seed = config.training_seed();
  for (std::size_t v : config.sweep_views) {
    TrainConfig tc = config.train_config(LossKind::Mrl, train_seed);
    tc.views = v;
    if (log) log("[mrl] V=" + std::to_string(v) + ", " + std::to_string(tc.epochs) + " epochs");
    const TrainResult r = train(ws.model, ws.K, ws.scenes, tc);
    const MetricReport test = evaluate(r.net, ws.model, ws.K, ws.scenes, Split::Test);
    SweepRow row{v, test.shape3d_mm, test.reprojection_px, r.history.time_per_epoch_s(), r.history.total_time_s,
                 r.history.epochs.size()};
    if (log) {
      log("[mrl] V=" + std::to_string(v) + " shape3d " + format_number(row.shape3d_mm) + " mm, " +
          format_number(row.time_per_epoch_s) + " s/epoch");
    }
    out.rows.push_back(row);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : out.rows) {
    lo = std::min(lo, r.shape3d_mm);
    hi = std::max(hi, r.shape3d_mm);
  }
  out.spread_mm = hi - lo;
  out.spread_limit_mm = config.sweep_max_spread * out.rows.front().shape3d_mm;
  out.time_increasing = true;
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    if (!(out.rows[i].time_per_epoch_s > out.rows[i - 1].time_per_epoch_s)) out.time_increasing = false;
  }
  return out;
}

std::string sweep_csv(const SweepResult& result, bool timing) {
  std::string out = "views,shape3d_mm,reprojection_px,time_per_epoch_s,epochs,total_time_s\n";
  for (const auto& r : result.rows) {
    out += std::to_string(r.views) + "," + format_number(r.shape3d_mm) + "," + format_number(r.reprojection_px) + "," +
           format_number(timed(timing, r.time_per_epoch_s)) + "," + std::to_string(r.epochs) + "," +
           format_number(timed(timing, r.total_time_s)) + "\n";
  }
  return out;
}

Json sweep_json(const SweepResult& result, bool timing) {
  Json rows = Json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"views", r.views},
                    {"shape3d_mm", r.shape3d_mm},
                    {"reprojection_px", r.reprojection_px},
                    {"time_per_epoch_s", timed(timing, r.time_per_epoch_s)},
                    {"epochs", r.epochs},
                    {"total_time_s", timed(timing, r.total_time_s)}});
  }
  return {{"rows", rows},
          {"shape3d_spread_mm", result.spread_mm},
          {"shape3d_spread_limit_mm", result.spread_limit_mm},
          {"shape_stable", result.shape_stable()},
          {"time_increasing", timing ? Json(result.time_increasing) : Json(nullptr)}};
}

bool FlatteningResult::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.second; });
}

FlatteningResult run_flattening_demo(const Workspace& ws, const ExperimentConfig& config, const Logger& log) {
  FlatteningResult out;
  const std::uint64_t train_seed = config.training_seed();
  auto run = [&](LossKind loss, FlatteningSide& side) {
    const TrainConfig tc = config.train_config(loss, train_seed);
    if (log) log("[" + std::string(to_string(loss)) + "] training " + std::to_string(tc.epochs) + " epochs");
    const TrainResult r = train(ws.model, ws.K, ws.scenes, tc);
    side.test = evaluate(r.net, ws.model, ws.K, ws.scenes, Split::Test);
    side.total_time_s = r.history.total_time_s;
    side.profile_ratio = profile_depth_ratio(side.test, config.profile_min_yaw).value_or(kNaN);
    side.profile_samples = static_cast<std::size_t>(std::count_if(
        side.test.rows.begin(), side.test.rows.end(),
        [&](const SampleMetrics& m) { return std::abs(m.gt_angles.yaw) > config.profile_min_yaw; }));
    if (log) {
      log("[" + std::string(to_string(loss)) + "] reprojection " + format_number(side.test.reprojection_px) +
          " px, shape3d " + format_number(side.test.shape3d_mm) + " mm, profile depth ratio " +
          format_number(side.profile_ratio));
    }
  };
  run(LossKind::Srl, out.srl);
  run(LossKind::Mrl, out.mrl);

  const auto& s = out.srl;
  const auto& m = out.mrl;
  out.checks = {
      {"profile samples present", s.profile_samples > 0 && m.profile_samples > 0},
      {"mrl profile depth ratio in [" + format_number(config.mrl_min_ratio) + ", " +
           format_number(config.mrl_max_ratio) + "]",
       m.profile_ratio >= config.mrl_min_ratio && m.profile_ratio <= config.mrl_max_ratio},
      {"srl profile depth ratio < " + format_number(config.srl_max_ratio), s.profile_ratio < config.srl_max_ratio},
      {"reprojection finite", std::isfinite(s.test.reprojection_px) && std::isfinite(m.test.reprojection_px)},
      {"srl reprojection <= mrl reprojection", s.test.reprojection_px <= m.test.reprojection_px},
      {"srl shape3d >= " + format_number(config.shape_factor) + " x mrl shape3d",
       s.test.shape3d_mm >= config.shape_factor * m.test.shape3d_mm},
  };
  return out;
}

Json flattening_json(const FlatteningResult& result, bool timing) {
  auto side = [&](const FlatteningSide& s) {
    return Json{{"reprojection_px", s.test.reprojection_px},
                {"shape3d_mm", s.test.shape3d_mm},
                {"translation_cm", s.test.translation_cm},
                {"rotation_deg", s.test.rotation_deg},
                {"profile_depth_ratio", number_or_null(s.profile_ratio)},
                {"profile_samples", s.profile_samples},
                {"total_time_s", timed(timing, s.total_time_s)}};
  };
  Json checks = Json::array();
  for (const auto& [name, ok] : result.checks) checks.push_back({{"check", name}, {"pass", ok}});
  return {{"srl", side(result.srl)}, {"mrl", side(result.mrl)}, {"checks", checks}, {"pass", result.ok()}};
}

namespace {

struct Instance {
  Prediction pred;
  Shape shape;
  CameraPose pose;
  ViewSet views;
  MultitermWeights weights;
};

Eigen::VectorXd pack(const Prediction& p) {
  Eigen::VectorXd theta(p.alpha.size() + 7);
  theta << p.alpha, p.q_raw, p.t;
  return theta;
}

Prediction unpack(const Eigen::VectorXd& theta, Eigen::Index b) {
  Prediction p;
  p.alpha = theta.head(b);
  p.q_raw = theta.segment<4>(b);
  p.t = theta.tail<3>();
  return p;
}

Eigen::VectorXd pack(const LossReport& r) {
  Eigen::VectorXd g(r.grad_alpha.size() + 7);
  g << r.grad_alpha, r.grad_qraw, r.grad_t;
  return g;
}

std::string block_of(Eigen::Index i, Eigen::Index b) {
  if (i < b) return "alpha";
  if (i < b + 4) return "q_raw";
  return "t";
}

Instance draw_instance(const MorphableModel& model, std::size_t views, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ViewSamplingConfig poses;
  const ShapeParams gt = sample_params(model, rng);
  const CameraPose pose = sample_view_pose(poses, rng);
  Prediction pred;
  pred.alpha = gt.alpha;
  for (Eigen::Index i = 0; i < pred.alpha.size(); ++i) pred.alpha[i] += 0.5 * std::sqrt(model.eigenvalues[i]) * normal(rng);
  const double scale = 0.5 + 1.5 * unit(rng);
  pred.q_raw = pose.q().vec();
  for (int k = 0; k < 4; ++k) pred.q_raw[k] += 0.1 * normal(rng);
  pred.q_raw *= scale;
  pred.t = pose.t();
  for (int k = 0; k < 3; ++k) pred.t[k] += 2.0 * normal(rng);
  auto log_uniform = [&] { return std::exp(std::log(0.1) + unit(rng) * (std::log(10.0) - std::log(0.1))); };
  const MultitermWeights weights{log_uniform(), log_uniform(), log_uniform()};
  return {pred, synthesize(model, gt), pose, sample_views(poses, views, rng), weights};
}

bool same_signs(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if ((a[i] > 0) != (b[i] > 0)) return false;
  }
  return true;
}

}  // namespace

std::vector<GradCheckLossResult> run_grad_check(const MorphableModel& model, const Calibration& K,
                                                const std::vector<LossKind>& losses, const GradCheckOptions& options) {
  if (options.trials == 0) throw Error(ErrorCode::ConfigInvalid, "gradient check needs at least one trial");
  if (!(options.step > 0)) throw Error(ErrorCode::ConfigInvalid, "finite-difference step must be positive");
  std::vector<GradCheckLossResult> out;
  const auto b = static_cast<Eigen::Index>(model.n_components());
  for (LossKind loss : losses) {
    GradCheckLossResult res;
    res.loss = loss;
    res.trials = options.trials;
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(loss)));
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
      for (;;) {
        if (res.redrawn > options.max_redraws) {
          throw Error(ErrorCode::ConfigInvalid, "gradient check could not find kink-free instances");
        }
        const Instance inst = draw_instance(model, options.views, rng);
        const GroundTruth gt{inst.shape, inst.pose};
        const LossInputs in{&model, K, inst.weights};
        const bool l1 = !is_multiterm(loss);
        auto value = [&](const Eigen::VectorXd& theta) {
          return evaluate_loss(loss, in, unpack(theta, b), gt, inst.views).value;
        };
        auto residuals = [&](const Eigen::VectorXd& theta) {
          return l1_residuals(loss, in, unpack(theta, b), gt, inst.views);
        };
        try {
          const Eigen::VectorXd theta = pack(inst.pred);
          if (!l1) {
            const Quaternion qn = quat_normalize(inst.pred.q_raw).q;
            if (std::abs(qn.dot(inst.pose.q())) < 1e-3) throw Error(ErrorCode::DegenerateQuaternion, "sign kink");
          }
          Eigen::VectorXd base_r;
          if (l1) {
            base_r = residuals(theta);
            if (base_r.cwiseAbs().minCoeff() < options.kink_margin) throw Error(ErrorCode::DegenerateGeometry, "kink");
          }
          LossReport analytic_report = evaluate_loss(loss, in, inst.pred, gt, inst.views);
          if (options.corrupt) options.corrupt(loss, analytic_report);
          const Eigen::VectorXd analytic = pack(analytic_report);
          std::optional<GradCheckFailure> failure;
          double worst = 0.0;
          for (Eigen::Index i = 0; i < theta.size(); ++i) {
            Eigen::VectorXd plus = theta, minus = theta;
            plus[i] += options.step;
            minus[i] -= options.step;
            if (l1 && (!same_signs(base_r, residuals(plus)) || !same_signs(base_r, residuals(minus)))) {
              throw Error(ErrorCode::DegenerateGeometry, "kink crossed");
            }
            const double numeric = (value(plus) - value(minus)) / (2.0 * options.step);
            const double a = analytic[i];
            const double allowed = std::max(options.abs_tol, options.rel_tol * std::max(std::abs(a), std::abs(numeric)));
            const double ratio = std::abs(a - numeric) / allowed;
            worst = std::max(worst, ratio);
            if (!(ratio <= 1.0) && !failure) {
              failure = GradCheckFailure{trial, block_of(i, b), static_cast<std::size_t>(i < b ? i : (i < b + 4 ? i - b : i - b - 4)),
                                         a, numeric};
            }
          }
          res.worst_ratio = std::max(res.worst_ratio, worst);
          if (failure) {
            res.failures.push_back(*failure);
          } else {
            ++res.passed;
          }
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DegenerateGeometry && e.code() != ErrorCode::DegenerateQuaternion &&
              e.code() != ErrorCode::BehindImagePlane) {
            throw;
          }
          ++res.redrawn;
        }
      }
    }
    out.push_back(std::move(res));
  }
  return out;
}

Json grad_check_json(const std::vector<GradCheckLossResult>& results) {
  Json rows = Json::array();
  bool all = true;
  for (const auto& r : results) {
    Json failures = Json::array();
    for (const auto& f : r.failures) {
      failures.push_back({{"trial", f.trial},
                          {"block", f.block},
                          {"index", f.index},
                          {"analytic", f.analytic},
                          {"numeric", f.numeric}});
    }
    rows.push_back({{"loss", std::string(to_string(r.loss))},
                    {"trials", r.trials},
                    {"passed", r.passed},
                    {"redrawn", r.redrawn},
                    {"worst_error_ratio", r.worst_ratio},
                    {"failures", failures},
                    {"pass", r.ok()}});
    all = all && r.ok();
  }
  return {{"losses", rows}, {"pass", all}};
}

}  // namespace morphloss
