// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cinttypes>
#include <cstdio>

#include "phantomdiff/errors.hpp"
#include "phantomdiff/io_formats.hpp"
#include "phantomdiff/phantom.hpp"
#include "phantomdiff/rng.hpp"

namespace phantomdiff {

using nlohmann::json;

DatasetManifest build_dataset(int count, int width, int height, std::uint64_t master_seed,
                              const std::filesystem::path& out_dir) {
  if (count < 1) throw std::invalid_argument("build_dataset: count must be >= 1");

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "imgs", ec);
  std::filesystem::create_directories(out_dir / "maps", ec);
  if (ec) throw IoError("cannot create dataset directories under " + out_dir.string());

  DatasetManifest manifest;
  manifest.master_seed = master_seed;
  manifest.width = width;
  manifest.height = height;
  manifest.entries.reserve(static_cast<std::size_t>(count));

  for (int i = 0; i < count; ++i) {
    DatasetEntry entry;
    entry.index = i;
    entry.anatomy_seed = derive_seed(master_seed, static_cast<std::uint64_t>(2 * i));
    entry.texture_seed = derive_seed(master_seed, static_cast<std::uint64_t>(2 * i + 1));

    AnatomyResult anatomy = gen_anatomy(entry.anatomy_seed, width, height);
    ImageGrid image = render_phantom(anatomy.map, entry.texture_seed);

    // Every sample is checked, not a sampled subset.
    auto violations = check_anatomy(anatomy.map);
    for (std::size_t px = 0; px < image.size(); ++px) {
      const HuBand band = label_band(static_cast<int>(anatomy.map[px]));
      if (image[px] < band.lo || image[px] > band.hi) {
        violations.push_back("pixel outside its label band");
        break;
      }
    }
    if (!violations.empty()) {
      throw std::runtime_error("dataset sample " + std::to_string(i) +
                               " violates phantom invariants: " + violations.front());
    }

    char name[64];
    std::snprintf(name, sizeof name, "phantom_%05d.imgf", i);
    entry.image_path = std::string("imgs/") + name;
    std::snprintf(name, sizeof name, "map_%05d.imgf", i);
    entry.map_path = std::string("maps/") + name;

    try {
      write_imgf(out_dir / entry.image_path, image);
      write_imgf(out_dir / entry.map_path, anatomy.map);
    } catch (const IoError& e) {
      throw IoError("dataset sample " + std::to_string(i) + ": " + e.what());
    }
    entry.anatomy_hash = hash_file(out_dir / entry.map_path);
    manifest.entries.push_back(std::move(entry));
  }
  write_dataset_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

void write_dataset_manifest(const std::filesystem::path& manifest_path,
                            const DatasetManifest& manifest) {
  json j;
  j["master_seed"] = manifest.master_seed;
  j["width"] = manifest.width;
  j["height"] = manifest.height;
  j["entries"] = json::array();
  for (const auto& e : manifest.entries) {
    j["entries"].push_back({{"index", e.index},
                            {"anatomy_seed", e.anatomy_seed},
                            {"texture_seed", e.texture_seed},
                            {"image", e.image_path},
                            {"map", e.map_path},
                            {"anatomy_hash", e.anatomy_hash}});
  }
  atomic_write_file(manifest_path, j.dump(2) + "\n");
}

DatasetManifest read_dataset_manifest(const std::filesystem::path& manifest_path) {
  json j;
  try {
    j = json::parse(read_file_bytes(manifest_path));
  } catch (const json::parse_error& e) {
    throw IoError("cannot parse dataset manifest " + manifest_path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    for (const auto& je : j.at("entries")) {
      DatasetEntry e;
      e.index = je.at("index").get<int>();
      e.anatomy_seed = je.at("anatomy_seed").get<std::uint64_t>();
      e.texture_seed = je.at("texture_seed").get<std::uint64_t>();
      e.image_path = je.at("image").get<std::string>();
      e.map_path = je.at("map").get<std::string>();
      e.anatomy_hash = je.at("anatomy_hash").get<std::string>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed dataset manifest " + manifest_path.string() + ": " + e.what());
  }
  return m;
}

std::vector<ImageGrid> load_training_images(const std::filesystem::path& manifest_path) {
  DatasetManifest m = read_dataset_manifest(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  std::vector<ImageGrid> images;
  images.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    ImageGrid hu = read_imgf(base / e.image_path);
    images.push_back(normalize_for_model(hu).image);
  }
  return images;
}

std::vector<std::pair<ImageGrid, ImageGrid>> load_dataset_pairs(
    const std::filesystem::path& manifest_path) {
  DatasetManifest m = read_dataset_manifest(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  std::vector<std::pair<ImageGrid, ImageGrid>> pairs;
  pairs.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    pairs.emplace_back(read_imgf(base / e.image_path), read_imgf(base / e.map_path));
  }
  return pairs;
}

}  // namespace phantomdiff
