#pragma once

// Files written by the command-line tool: checkpoints, predictions, metrics,
// training logs and run manifests.  Everything is JSON or JSON Lines.

#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <string>
#include <vector>

#include "secla/dataset.hpp"
#include "secla/eval.hpp"
#include "secla/model.hpp"
#include "secla/training.hpp"

namespace secla {

using Json = nlohmann::ordered_json;

struct Checkpoint {
  ProjectorStack stack;
  Json config;  // echo of the training configuration, may be null
};

Json checkpoint_to_json(const ProjectorStack& stack, const Json& config);
// Throws ValidationError on malformed documents or inconsistent shapes.
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const ProjectorStack& stack, const Json& config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// One {pair_id, links} object per line.
void write_predictions(std::ostream& out, const std::vector<LinkSet>& predictions);
void save_predictions(const std::filesystem::path& path, const std::vector<LinkSet>& predictions);
std::vector<LinkSet> load_predictions(const std::filesystem::path& path);

Json metrics_to_json(const MetricsReport& report, const Json& config);

Json train_config_to_json(const TrainConfig& config);
// One object per epoch.
void save_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

struct RunManifest {
  std::string command;
  Json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::string> argv;
  double duration_seconds = 0.0;
};

Json manifest_to_json(const RunManifest& manifest);
void save_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// Writes `text` to `path` in binary mode.  Throws ValidationError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace secla
