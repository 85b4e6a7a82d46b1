#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "eyeadapt/config.hpp"

namespace eyeadapt {

enum class Stage { kGenerate, kTrainTranslate, kTranslate, kTrainSiamese, kFilter, kTrainSeg, kEvaluate, kReport };

/// Stages in pipeline order.
const std::vector<Stage>& stage_order();
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view text);

/// Git blob object id: SHA-1 over "blob <size>\0" followed by the bytes.
std::string git_blob_sha1(const std::string& bytes);
std::string git_blob_sha1_file(const std::filesystem::path& path);

struct StageOutcome {
  Stage stage = Stage::kGenerate;
  std::vector<std::filesystem::path> outputs;  // relative to the output root
  std::vector<std::string> warnings;
  std::filesystem::path manifest;
};

/// Runs one stage and writes `<root>/runs/<stage>.json` (config echo, seed,
/// content hashes of inputs and outputs, wall time). Refuses to run again
/// unless `force` is set, in which case the stage's previous outputs are
/// removed first. Missing inputs raise a DataError naming the stage that
/// produces them.
StageOutcome run_stage(Stage stage, const PipelineConfig& cfg, bool force = false);

/// Runs stages from..to inclusive in order, stopping at the first failure.
std::vector<StageOutcome> run_pipeline(const PipelineConfig& cfg, Stage from, Stage to, bool force = false);

/// Manifest for a command run outside the managed layout. Paths in the
/// manifest are relative to `base`.
void write_run_manifest(const std::filesystem::path& manifest, std::string_view name, const PipelineConfig& cfg,
                        const std::filesystem::path& base, const std::vector<std::filesystem::path>& inputs,
                        const std::vector<std::filesystem::path>& outputs, double wall_seconds,
                        const std::vector<std::string>& warnings = {});

/// Directory names used under the output root.
std::filesystem::path dataset_dir(const PipelineConfig& cfg, const std::string& name);
std::filesystem::path segment_dir(const PipelineConfig& cfg, SegMode mode, const std::string& dataset, int n_real);

}  // namespace eyeadapt
