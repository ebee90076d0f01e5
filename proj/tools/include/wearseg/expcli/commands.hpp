#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wearseg/grid.hpp"

namespace wearseg::expcli {

/// Everything needed to rerun a command; written next to its outputs.
struct RunManifest {
  std::string command;
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::string selector;
  std::uint64_t seed = 0;
  bool desk_scale = false;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

struct SynthOptions {
  std::filesystem::path out;
  int count = 24;
  int height = 1200;
  int width = 4700;
  int channels = 3;
  std::uint64_t seed = 0;
};

struct PrepareOptions {
  std::filesystem::path corpus;  // manifest.jsonl
  std::filesystem::path out;
  int n_test = 4;
  std::uint64_t seed = 0;
  bool desk_scale = false;
  bool force = false;
};

/// Axis restrictions; unset axes keep every value.
struct AxisFilter {
  std::optional<Mode> mode;
  std::optional<int> tile_edge;
  std::optional<AugmentationLevel> aug;
  std::optional<LossKind> loss;
  std::optional<bool> batch_norm;
};

struct ProtocolOverrides {
  std::optional<int> max_epochs;
  std::optional<int> max_retries;
};

struct TrainOptions {
  std::filesystem::path tiles;  // prepared directory
  std::filesystem::path out;
  std::optional<std::filesystem::path> config_file;
  AxisFilter axes;
  std::optional<int> batch_size;
  std::optional<int> base_filters;
  std::optional<std::uint64_t> seed;  // overrides the config file
  bool desk_scale = false;
  ProtocolOverrides protocol;
};

struct GridCommandOptions {
  std::filesystem::path tiles;
  std::filesystem::path out;
  AxisFilter axes;
  std::optional<int> batch_size;
  std::optional<int> base_filters;
  int folds = 5;
  std::uint64_t seed = 0;
  bool desk_scale = false;
  bool resume = false;
  ProtocolOverrides protocol;
};

struct PredictOptions {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> corpus;  // with `id`
  std::optional<std::string> id;
  std::optional<std::filesystem::path> image;   // or an explicit image (and optional mask)
  std::optional<std::filesystem::path> mask;
  std::filesystem::path out;
};

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path tiles;
};

struct ReportOptions {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> out;  // default <run_dir>/report
};

int cmd_synth(const SynthOptions& options, std::ostream& log);
int cmd_prepare(const PrepareOptions& options, std::ostream& log);
int cmd_train(const TrainOptions& options, std::ostream& log);
int cmd_grid(const GridCommandOptions& options, std::ostream& log);
int cmd_predict(const PredictOptions& options, std::ostream& log);
int cmd_evaluate(const EvaluateOptions& options, std::ostream& log);
int cmd_report(const ReportOptions& options, std::ostream& log);

GridSelector grid_selector(const AxisFilter& axes, bool desk_scale, std::optional<int> base_filters,
                           std::optional<int> batch_size, std::uint64_t seed);
ExperimentConfig single_config(const TrainOptions& options);

/// Parses argv and dispatches; errors are printed to `err` and give exit code 1.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wearseg::expcli
