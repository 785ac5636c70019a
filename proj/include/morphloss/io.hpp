#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "morphloss/evaluation.hpp"
#include "morphloss/morphable.hpp"
#include "morphloss/network.hpp"
#include "morphloss/synthdata.hpp"
#include "morphloss/training.hpp"

namespace morphloss {

using Json = nlohmann::ordered_json;

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr const char* kDatasetFormat = "morphloss-scenes";
inline constexpr int kDatasetVersion = 1;

std::string read_text(const std::filesystem::path& path);
/// Creates parent directories. Throws Io.
void write_text(const std::filesystem::path& path, const std::string& text);

/// FNV-1a of the bytes, as 16 hex digits.
std::string hash_hex(const std::string& bytes);

// Model: {n_points, n_components, mean, basis (row-major 3N x B), eigenvalues, symmetry_pairs}.
Json model_to_json(const MorphableModel& model);
MorphableModel model_from_json(const Json& j);
void save_model(const std::filesystem::path& path, const MorphableModel& model);
MorphableModel load_model(const std::filesystem::path& path);

Json to_json(const Calibration& K);
Calibration calibration_from_json(const Json& j);
Json to_json(const ViewSamplingConfig& c);
ViewSamplingConfig view_sampling_from_json(const Json& j);
Json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const Json& j);
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);
Json to_json(const CameraPose& pose);
CameraPose pose_from_json(const Json& j);

struct Dataset {
  Json header;
  std::vector<Scene> scenes;
};

/// JSON lines: a header {format, version, model_hash, config} then one scene per line.
std::string dataset_to_jsonl(const std::vector<Scene>& scenes, const MorphableModel& model,
                             const DatasetConfig& config);
void save_dataset(const std::filesystem::path& path, const std::vector<Scene>& scenes, const MorphableModel& model,
                  const DatasetConfig& config);
/// Throws Io on a malformed file and ConfigInvalid when `model` is given and
/// its hash differs from the header.
Dataset load_dataset(const std::filesystem::path& path, const MorphableModel* model = nullptr);

/// One JSON header line (config, epoch, metrics, network layout, block
/// manifest) followed by the flat parameters as little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const Regressor& net, const Json& config, std::size_t epoch,
                     const Json& metrics);
struct Checkpoint {
  Json header;
  Regressor net;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// One row per sample: subject, view, yaw, pitch, roll and the four metrics.
std::string metric_csv(const MetricReport& report);
Json metric_summary(const MetricReport& report);

Json history_to_json(const TrainingHistory& history, bool timing = true);

/// Writes manifest.json: command, config hash, seeds and library version.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const Json& config,
                    const std::vector<std::uint64_t>& seeds);

/// Fixed-precision number formatting shared by the CSV writers.
std::string format_number(double v);

}  // namespace morphloss
