// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phantomdiff/guidance.hpp"
#include "phantomdiff/net.hpp"
#include "phantomdiff/phantom.hpp"
#include "phantomdiff/schedule.hpp"
#include "phantomdiff/train.hpp"

namespace phantomdiff {

/// One experiment definition. Every field has a documented default; strict
/// parsing rejects unknown keys and reports every violation at once.
struct ExperimentConfig {
  ScheduleKind schedule_kind = ScheduleKind::Cosine;
  int schedule_steps = 200;

  NetDescriptor model;

  TrainConfig train;

  std::string dataset_manifest;   // data.dataset_manifest, may be empty
  std::string guidance_manifest;  // guidance.manifest, may be empty

  std::uint64_t seed_master = 1;
  std::uint64_t seed_train = 2;
  std::uint64_t seed_sample = 3;

  std::string output_dir = "out";
  std::vector<WindowPreset> windows;  // resolved presets incl. overrides

  // Provenance, filled by the loader.
  std::filesystem::path source_path;
  std::string config_hash;

  VarianceSchedule make_schedule() const {
    return VarianceSchedule::build(schedule_kind, schedule_steps);
  }
  /// Paths in the config resolve relative to the config file's directory.
  std::filesystem::path resolve(const std::string& rel) const;
};

/// Parses and validates a config file. `required` lists dotted key paths
/// (e.g. "data.dataset_manifest") that must be present and nonempty.
/// Throws ConfigError carrying every violation found.
ExperimentConfig validate_config(const std::filesystem::path& path,
                                 const std::vector<std::string>& required = {});

/// Serialization for round-trips; emits every field explicitly.
std::string config_to_json(const ExperimentConfig& cfg);

/// Guidance manifest: {"conditions": [{"image", "n", "a", "label"}...]}.
/// Images load relative to the manifest; HU images are normalized to model
/// space. Throws ConfigError / IoError on malformed input.
GuidanceSet load_guidance_manifest(const std::filesystem::path& path);

struct RunRecord {
  std::string command;
  std::string config_hash;
  std::vector<std::string> artifacts;
  double wall_ms = 0.0;
  std::string metrics_json;  // summary blob, may be empty
};

void write_run_record(const std::filesystem::path& path, const RunRecord& record);

struct EvalPairEntry {
  std::string generated;
  std::string best_reference;
  double ssim = 0.0;
};

struct EvalReport {
  double set_ssim = 0.0;
  double frechet = 0.0;
  std::uint64_t extractor_seed = 0;
  bool generated_regularized = false;
  bool reference_regularized = false;
  std::vector<EvalPairEntry> pairs;
};

void write_eval_report_json(const std::filesystem::path& path, const EvalReport& report);
void write_eval_report_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace phantomdiff
