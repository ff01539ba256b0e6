// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phantomdiff/image.hpp"

namespace phantomdiff {

struct DatasetEntry {
  int index = 0;
  std::uint64_t anatomy_seed = 0;
  std::uint64_t texture_seed = 0;
  std::string image_path;  // relative to the manifest directory
  std::string map_path;
  std::string anatomy_hash;  // FNV-1a of the map bytes
};

struct DatasetManifest {
  std::uint64_t master_seed = 0;
  int width = 0;
  int height = 0;
  std::vector<DatasetEntry> entries;
};

/// Generates `count` phantom samples into out_dir (imgs/ maps/ manifest.json).
/// Per-sample seeds derive from the master seed, so the corpus is fully
/// reproducible. Returns the manifest that was written.
DatasetManifest build_dataset(int count, int width, int height, std::uint64_t master_seed,
                              const std::filesystem::path& out_dir);

DatasetManifest read_dataset_manifest(const std::filesystem::path& manifest_path);
void write_dataset_manifest(const std::filesystem::path& manifest_path,
                            const DatasetManifest& manifest);

/// Loads every HU image named by the manifest, normalized to model space.
std::vector<ImageGrid> load_training_images(const std::filesystem::path& manifest_path);
/// Loads (image, map) pairs in HU / label space.
std::vector<std::pair<ImageGrid, ImageGrid>> load_dataset_pairs(
    const std::filesystem::path& manifest_path);

}  // namespace phantomdiff
