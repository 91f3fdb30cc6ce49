#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emoprobe/corpus.hpp"
#include "emoprobe/evaluation.hpp"
#include "emoprobe/geometry.hpp"
#include "emoprobe/manifest.hpp"
#include "emoprobe/persistence.hpp"
#include "emoprobe/probe.hpp"
#include "emoprobe/trainer.hpp"

namespace emoprobe {

// round(fraction * num_layers), half away from zero. Layer 0 is the input
// embedding and layer num_layers the output of the last block.
std::uint16_t map_depth_to_layer(double fraction, std::uint32_t num_layers);

struct ExperimentConfig {
  CheckpointTag variant = CheckpointTag::kSftTemplate;
  std::uint32_t num_layers = 0;
  std::vector<double> depth_fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<std::filesystem::path> stores;  // pooled stores, layers read from their headers
  std::optional<std::filesystem::path> per_token_store;
  std::optional<std::uint16_t> per_token_layer;
  TrainConfig train;
  std::optional<TrainConfig> offset_train;  // defaults to `train`
  std::uint64_t split_seed = 1;
  std::uint64_t balance_seed = 2;
  std::size_t geometry_grid = kDefaultGridSize;
  std::vector<double> geometry_levels = {0.25, 0.50};
  std::uint32_t smoothing_window = kDefaultSmoothingWindow;
  std::uint32_t max_offset = kDefaultMaxOffset;
  std::filesystem::path output_dir = "run";

  // Exact bytes the config was parsed from, echoed into every output.
  std::string source_text;
  // Command-line overrides applied on top of the file (dotted key -> value text).
  std::map<std::string, std::string> overrides;

  // Throws ContractError on invalid values.
  void validate() const;
};

// Relative paths are resolved against base_dir. Overrides use dotted keys
// ("train.seed", "persistence.window") and win over the file's values; the
// echoed source text stays the file's exact bytes.
ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir = {},
                                         const std::map<std::string, std::string>& overrides = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::map<std::string, std::string>& overrides = {});

// The pooled train/test selection shared by every depth.
struct BalancedSplit {
  SplitPlan plan;
  std::vector<std::uint64_t> train_ids;  // balanced multiset
  std::vector<std::uint64_t> test_ids;   // balanced set
};

struct DepthRun {
  double fraction = 0.0;
  std::uint16_t layer = 0;
  std::filesystem::path store;
  ProbeParams probe;
  RunRecord run;
  EvalReport eval;
  SlicePredictions predictions;
};

struct DepthSweep {
  BalancedSplit split;
  std::vector<DepthRun> runs;
};

// layer -> store path for every layer the config needs. Throws DataError
// listing every missing layer before anything is trained.
std::map<std::uint16_t, std::filesystem::path> resolve_layer_stores(const ExperimentConfig& config);

DepthSweep run_depth_sweep(const ExperimentConfig& config);

std::string render_depth_table(const DepthSweep& sweep);
std::string depth_sweep_to_json(const DepthSweep& sweep, const ExperimentConfig& config);

struct PipelineResult {
  std::filesystem::path run_dir;
  DepthSweep sweep;
  std::optional<GeometryReport> geometry;
  std::optional<DecaySweep> persistence;
};

// Runs the depth sweep, geometry on the deepest mapped layer and, when a
// per-token store is configured, the persistence analysis; writes every
// artifact into config.output_dir. Inputs are validated before anything is
// written. A failure after that leaves STATUS = INCOMPLETE and throws
// IncompleteRunError. Timings go to timings.json only, so every other file is
// identical across reruns of the same config.
PipelineResult run_full_pipeline(const ExperimentConfig& config);

}  // namespace emoprobe
