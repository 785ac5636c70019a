#include "morphloss/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "morphloss/errors.hpp"

namespace morphloss {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

std::string hash_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

namespace {

template <typename Derived>
Json vec_json(const Eigen::DenseBase<Derived>& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v.derived().data()[i]);
  return out;
}

Eigen::VectorXd json_vec(const Json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::Io, std::string(what) + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Vec3 json_vec3(const Json& j, const char* what) {
  const Eigen::VectorXd v = json_vec(j, what);
  if (v.size() != 3) throw Error(ErrorCode::Io, std::string(what) + " must have 3 entries");
  return v;
}

// Wraps json access errors as Io errors.
template <typename F>
auto parse(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Io, "malformed " + what + ": " + e.what());
  }
}

}  // namespace

Json model_to_json(const MorphableModel& model) {
  Json j;
  j["n_points"] = model.n_points();
  j["n_components"] = model.n_components();
  j["mean"] = vec_json(model.mean.points());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = model.basis;
  j["basis"] = vec_json(row_major);
  j["eigenvalues"] = vec_json(model.eigenvalues);
  Json pairs = Json::array();
  for (const auto& [a, b] : model.symmetry_pairs) pairs.push_back({a, b});
  j["symmetry_pairs"] = pairs;
  return j;
}

MorphableModel model_from_json(const Json& j) {
  return parse("model", [&] {
    const auto n = j.at("n_points").get<std::size_t>();
    const auto b = j.at("n_components").get<std::size_t>();
    const Eigen::VectorXd mean = json_vec(j.at("mean"), "mean");
    const Eigen::VectorXd basis = json_vec(j.at("basis"), "basis");
    if (static_cast<std::size_t>(mean.size()) != 3 * n || static_cast<std::size_t>(basis.size()) != 3 * n * b) {
      throw Error(ErrorCode::Io, "model arrays do not match n_points / n_components");
    }
    MorphableModel model;
    model.mean = Shape::from_flat(mean);
    model.basis = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        basis.data(), static_cast<Eigen::Index>(3 * n), static_cast<Eigen::Index>(b));
    model.eigenvalues = json_vec(j.at("eigenvalues"), "eigenvalues");
    for (const auto& p : j.at("symmetry_pairs")) model.symmetry_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    model.validate();
    return model;
  });
}

void save_model(const fs::path& path, const MorphableModel& model) { write_text(path, model_to_json(model).dump() + "\n"); }

MorphableModel load_model(const fs::path& path) {
  return model_from_json(parse("model file " + path.string(), [&] { return Json::parse(read_text(path)); }));
}

Json to_json(const Calibration& K) {
  return {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy}, {"width", K.width}, {"height", K.height}};
}

Calibration calibration_from_json(const Json& j) {
  return parse("calibration", [&] {
    Calibration K;
    K.fx = j.at("fx").get<double>();
    K.fy = j.at("fy").get<double>();
    K.cx = j.at("cx").get<double>();
    K.cy = j.at("cy").get<double>();
    K.width = j.at("width").get<decltype(K.width)>();
    K.height = j.at("height").get<decltype(K.height)>();
    return K;
  });
}

Json to_json(const ViewSamplingConfig& c) {
  return {{"yaw_range", c.yaw_range},
          {"pitch_range", c.pitch_range},
          {"roll_range", c.roll_range},
          {"t_mean", vec_json(c.t_mean)},
          {"t_sigma", vec_json(c.t_sigma)}};
}

ViewSamplingConfig view_sampling_from_json(const Json& j) {
  return parse("view sampling", [&] {
    ViewSamplingConfig c;
    c.yaw_range = j.at("yaw_range").get<double>();
    c.pitch_range = j.at("pitch_range").get<double>();
    c.roll_range = j.at("roll_range").get<double>();
    c.t_mean = json_vec3(j.at("t_mean"), "t_mean");
    c.t_sigma = json_vec3(j.at("t_sigma"), "t_sigma");
    return c;
  });
}

Json to_json(const DatasetConfig& c) {
  return {{"n_train", c.n_train},       {"n_val", c.n_val},
          {"n_test", c.n_test},         {"mean_views", c.mean_views},
          {"poses", to_json(c.poses)},  {"n_landmarks", c.n_landmarks},
          {"noise_px", c.noise_px},     {"calibration", to_json(c.K)},
          {"min_depth", c.min_depth}};
}

DatasetConfig dataset_config_from_json(const Json& j) {
  return parse("dataset config", [&] {
    DatasetConfig c;
    c.n_train = j.at("n_train").get<std::size_t>();
    c.n_val = j.at("n_val").get<std::size_t>();
    c.n_test = j.at("n_test").get<std::size_t>();
    c.mean_views = j.at("mean_views").get<double>();
    c.poses = view_sampling_from_json(j.at("poses"));
    c.n_landmarks = j.at("n_landmarks").get<std::size_t>();
    c.noise_px = j.at("noise_px").get<double>();
    c.K = calibration_from_json(j.at("calibration"));
    c.min_depth = j.at("min_depth").get<double>();
    return c;
  });
}

Json to_json(const TrainConfig& c) {
  return {{"loss", std::string(to_string(c.loss))},
          {"alpha_w", c.weights.alpha_w},
          {"beta_w", c.weights.beta_w},
          {"gamma_w", c.weights.gamma_w},
          {"views", c.views},
          {"view_sampling", to_json(c.view_sampling)},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"seed", c.seed},
          {"clip_norm", c.clip_norm},
          {"encoder_width", c.network.encoder_width},
          {"encoder_depth", c.network.encoder_depth},
          {"head_hidden", c.network.head_hidden}};
}

TrainConfig train_config_from_json(const Json& j) {
  return parse("train config", [&] {
    TrainConfig c;
    c.loss = loss_from_string(j.at("loss").get<std::string>());
    c.weights = {j.at("alpha_w").get<double>(), j.at("beta_w").get<double>(), j.at("gamma_w").get<double>()};
    c.views = j.at("views").get<std::size_t>();
    c.view_sampling = view_sampling_from_json(j.at("view_sampling"));
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.network = {j.at("encoder_width").get<std::size_t>(), j.at("encoder_depth").get<std::size_t>(),
                 j.at("head_hidden").get<std::size_t>()};
    return c;
  });
}

Json to_json(const CameraPose& pose) {
  const Quaternion& q = pose.q();
  return {{"q", {q.w, q.x, q.y, q.z}}, {"t", vec_json(pose.t())}};
}

CameraPose pose_from_json(const Json& j) {
  return parse("pose", [&] {
    const Eigen::VectorXd q = json_vec(j.at("q"), "q");
    if (q.size() != 4) throw Error(ErrorCode::Io, "q must have 4 entries");
    return CameraPose(Quaternion{q[0], q[1], q[2], q[3]}, json_vec3(j.at("t"), "t"));
  });
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json scene_to_json(const Scene& s) {
  Json views = Json::array();
  for (const auto& v : s.views) {
    Json jv = to_json(v.pose);
    jv["observation"] = vec_json(v.observation);
    views.push_back(std::move(jv));
  }
  return {{"subject_id", s.subject_id},
          {"split", std::string(to_string(s.split))},
          {"gt_params", vec_json(s.gt_params.alpha)},
          {"gt_shape", vec_json(s.gt_shape.points())},
          {"views", std::move(views)}};
}

Scene scene_from_json(const Json& j) {
  Scene s;
  s.subject_id = j.at("subject_id").get<int>();
  s.split = split_from_string(j.at("split").get<std::string>());
  s.gt_params.alpha = json_vec(j.at("gt_params"), "gt_params");
  s.gt_shape = Shape::from_flat(json_vec(j.at("gt_shape"), "gt_shape"));
  for (const auto& jv : j.at("views")) {
    s.views.push_back({pose_from_json(jv), json_vec(jv.at("observation"), "observation")});
  }
  return s;
}

}  // namespace

std::string dataset_to_jsonl(const std::vector<Scene>& scenes, const MorphableModel& model,
                             const DatasetConfig& config) {
  Json header{{"format", kDatasetFormat},
              {"version", kDatasetVersion},
              {"model_hash", hex64(model_hash(model))},
              {"config", to_json(config)}};
  std::string out = header.dump() + "\n";
  for (const auto& s : scenes) out += scene_to_json(s).dump() + "\n";
  return out;
}

void save_dataset(const fs::path& path, const std::vector<Scene>& scenes, const MorphableModel& model,
                  const DatasetConfig& config) {
  write_text(path, dataset_to_jsonl(scenes, model, config));
}

Dataset load_dataset(const fs::path& path, const MorphableModel* model) {
  std::istringstream in(read_text(path));
  std::string line;
  Dataset out;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, path.string() + " is empty");
  out.header = parse("dataset header", [&] { return Json::parse(line); });
  parse("dataset header", [&] {
    if (out.header.at("format").get<std::string>() != kDatasetFormat) {
      throw Error(ErrorCode::Io, path.string() + " is not a morphloss scene file");
    }
    if (out.header.at("version").get<int>() != kDatasetVersion) {
      throw Error(ErrorCode::Io, "unsupported dataset version in " + path.string());
    }
    return 0;
  });
  if (model && out.header.at("model_hash").get<std::string>() != hex64(model_hash(*model))) {
    throw Error(ErrorCode::ConfigInvalid, path.string() + " was generated from a different model");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.scenes.push_back(parse("scene on line " + std::to_string(line_no),
                               [&] { return scene_from_json(Json::parse(line)); }));
  }
  return out;
}

void save_checkpoint(const fs::path& path, const Regressor& net, const Json& config, std::size_t epoch,
                     const Json& metrics) {
  Json blocks = Json::array();
  for (const auto& b : net.blocks()) {
    blocks.push_back({{"name", b.name}, {"offset", b.offset}, {"rows", b.rows}, {"cols", b.cols}});
  }
  const FrozenMaps& f = net.frozen();
  Json header{{"format", "morphloss-checkpoint"},
              {"version", 1},
              {"config", config},
              {"epoch", epoch},
              {"metrics", metrics},
              {"network",
               {{"encoder_width", net.config().encoder_width},
                {"encoder_depth", net.config().encoder_depth},
                {"head_hidden", net.config().head_hidden},
                {"n_inputs", net.n_inputs()},
                {"n_components", net.n_components()}}},
              {"frozen",
               {{"input_center", vec_json(f.input_center)},
                {"input_scale", f.input_scale},
                {"alpha_scale", vec_json(f.alpha_scale)},
                {"t_scale", f.t_scale}}},
              {"blocks", blocks},
              {"param_count", net.params().size()},
              {"dtype", "float64-le"}};
  std::string bytes = header.dump() + "\n";
  const auto payload = static_cast<std::size_t>(net.params().size()) * sizeof(double);
  const std::size_t start = bytes.size();
  bytes.resize(start + payload);
  std::memcpy(bytes.data() + start, net.params().data(), payload);
  write_text(path, bytes);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string bytes = read_text(path);
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw Error(ErrorCode::Io, path.string() + " has no checkpoint header");
  Checkpoint out;
  out.header = parse("checkpoint header", [&] { return Json::parse(bytes.substr(0, newline)); });
  return parse("checkpoint header", [&] {
    const Json& n = out.header.at("network");
    const Json& f = out.header.at("frozen");
    FrozenMaps frozen;
    frozen.input_center = json_vec(f.at("input_center"), "input_center");
    frozen.input_scale = f.at("input_scale").get<double>();
    frozen.alpha_scale = json_vec(f.at("alpha_scale"), "alpha_scale");
    frozen.t_scale = f.at("t_scale").get<double>();
    out.net = Regressor({n.at("encoder_width").get<std::size_t>(), n.at("encoder_depth").get<std::size_t>(),
                         n.at("head_hidden").get<std::size_t>()},
                        n.at("n_inputs").get<std::size_t>(), n.at("n_components").get<std::size_t>(), frozen);
    const auto count = out.header.at("param_count").get<std::size_t>();
    if (count != static_cast<std::size_t>(out.net.params().size()) ||
        bytes.size() - newline - 1 != count * sizeof(double)) {
      throw Error(ErrorCode::Io, path.string() + ": parameter payload does not match the network layout");
    }
    std::memcpy(out.net.params().data(), bytes.data() + newline + 1, count * sizeof(double));
    return std::move(out);
  });
}

std::string metric_csv(const MetricReport& report) {
  std::string out = "subject_id,view,yaw_deg,pitch_deg,roll_deg,reprojection_px,shape3d_mm,translation_cm,rotation_deg\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.subject_id) + "," + std::to_string(r.view) + "," + format_number(r.gt_angles.yaw) + "," +
           format_number(r.gt_angles.pitch) + "," + format_number(r.gt_angles.roll) + "," +
           format_number(r.reprojection_px) + "," + format_number(r.shape3d_mm) + "," +
           format_number(r.translation_cm) + "," + format_number(r.rotation_deg) + "\n";
  }
  return out;
}

Json metric_summary(const MetricReport& report) {
  Json j{{"samples", report.rows.size()},
         {"reprojection_px", report.reprojection_px},
         {"shape3d_mm", report.shape3d_mm},
         {"translation_cm", report.translation_cm},
         {"rotation_deg", report.rotation_deg},
         {"angle_convention", "yaw about y, pitch about x, roll about z of the camera frame; R = Rz(roll) Rx(pitch) Ry(yaw)"}};
  if (const auto d = profile_depth_ratio(report)) j["profile_depth_ratio"] = *d;
  return j;
}

Json history_to_json(const TrainingHistory& history, bool timing) {
  Json epochs = Json::array();
  for (const auto& e : history.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"wall_time_s", timing ? e.wall_time_s : 0.0},
                      {"clipped_batches", e.clipped_batches}});
  }
  return {{"epochs", epochs},
          {"total_time_s", timing ? history.total_time_s : 0.0},
          {"time_per_epoch_s", timing ? history.time_per_epoch_s() : 0.0}};
}

void write_manifest(const fs::path& dir, const std::string& command, const Json& config,
                    const std::vector<std::uint64_t>& seeds) {
  Json j{{"command", command},
         {"config_hash", hash_hex(config.dump())},
         {"seeds", seeds},
         {"library", "morphloss"},
         {"library_version", kLibraryVersion},
         {"config", config}};
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

}  // namespace morphloss
