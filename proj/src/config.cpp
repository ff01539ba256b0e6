// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/config.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "phantomdiff/errors.hpp"
#include "phantomdiff/io_formats.hpp"

namespace phantomdiff {

using nlohmann::json;

namespace {

struct Validator {
  std::vector<std::string> violations;

  void fail(const std::string& msg) { violations.push_back(msg); }

  void check_keys(const json& obj, const std::string& prefix,
                  const std::vector<std::string>& allowed) {
    if (!obj.is_object()) {
      fail(prefix.empty() ? "config root must be an object" : prefix + " must be an object");
      return;
    }
    for (const auto& [key, _] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        fail("unknown key: " + (prefix.empty() ? key : prefix + "." + key));
      }
    }
  }

  template <typename T>
  T get_or(const json& obj, const std::string& prefix, const std::string& key, T fallback) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception&) {
      fail("wrong type for " + (prefix.empty() ? key : prefix + "." + key));
      return fallback;
    }
  }
};

}  // namespace

std::filesystem::path ExperimentConfig::resolve(const std::string& rel) const {
  std::filesystem::path p(rel);
  if (p.is_absolute() || source_path.empty()) return p;
  return source_path.parent_path() / p;
}

ExperimentConfig validate_config(const std::filesystem::path& path,
                                 const std::vector<std::string>& required) {
  std::string bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("config unreadable: ") + e.what());
  }
  json root;
  try {
    root = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid structured text: ") + e.what());
  }

  Validator v;
  ExperimentConfig cfg;
  cfg.source_path = path;
  cfg.config_hash = fnv1a_hex(bytes.data(), bytes.size());
  cfg.windows = standard_windows();

  v.check_keys(root, "", {"schedule", "model", "train", "data", "guidance", "seeds",
                          "output_dir", "windows"});

  if (root.contains("schedule")) {
    const json& s = root["schedule"];
    v.check_keys(s, "schedule", {"kind", "T"});
    std::string kind = v.get_or<std::string>(s, "schedule", "kind", "cosine");
    try {
      cfg.schedule_kind = schedule_kind_from_string(kind);
    } catch (const std::invalid_argument&) {
      v.fail("schedule.kind must be \"linear\" or \"cosine\"");
    }
    cfg.schedule_steps = v.get_or<int>(s, "schedule", "T", cfg.schedule_steps);
    if (cfg.schedule_steps < 2) v.fail("schedule.T must be >= 2");
  }

  cfg.model.base_channels = 14;
  cfg.model.hidden_widths = {128, 128};
  if (root.contains("model")) {
    const json& m = root["model"];
    v.check_keys(m, "model",
                 {"kind", "base_channels", "temb_dim", "activation", "width", "height",
                  "hidden_widths"});
    std::string kind = v.get_or<std::string>(m, "model", "kind", "unet");
    if (kind == "unet") {
      cfg.model.kind = NetDescriptor::Kind::Unet;
    } else if (kind == "mlp") {
      cfg.model.kind = NetDescriptor::Kind::Mlp;
    } else {
      v.fail("model.kind must be \"unet\" or \"mlp\"");
    }
    cfg.model.base_channels = v.get_or<int>(m, "model", "base_channels", cfg.model.base_channels);
    cfg.model.temb_dim = v.get_or<int>(m, "model", "temb_dim", cfg.model.temb_dim);
    cfg.model.width = v.get_or<int>(m, "model", "width", cfg.model.width);
    cfg.model.height = v.get_or<int>(m, "model", "height", cfg.model.height);
    cfg.model.hidden_widths =
        v.get_or<std::vector<int>>(m, "model", "hidden_widths", cfg.model.hidden_widths);
    std::string act = v.get_or<std::string>(m, "model", "activation", "silu");
    try {
      cfg.model.activation = activation_from_string(act);
    } catch (const std::invalid_argument&) {
      v.fail("model.activation must be one of silu, relu, tanh");
    }
    if (cfg.model.base_channels < 1) v.fail("model.base_channels must be >= 1");
    if (cfg.model.temb_dim < 2 || cfg.model.temb_dim % 2 != 0) {
      v.fail("model.temb_dim must be an even integer >= 2");
    }
    if (cfg.model.width < 1 || cfg.model.height < 1) v.fail("model dimensions must be positive");
    if (cfg.model.kind == NetDescriptor::Kind::Unet &&
        (cfg.model.width % 4 != 0 || cfg.model.height % 4 != 0)) {
      v.fail("model.width and model.height must be divisible by 4 for the unet");
    }
    for (int w : cfg.model.hidden_widths) {
      if (w < 1) v.fail("model.hidden_widths entries must be positive");
    }
  }

  if (root.contains("train")) {
    const json& t = root["train"];
    v.check_keys(t, "train",
                 {"batch_size", "steps", "learning_rate", "beta1", "beta2", "epsilon",
                  "checkpoint_interval"});
    cfg.train.batch_size = v.get_or<int>(t, "train", "batch_size", cfg.train.batch_size);
    cfg.train.steps = v.get_or<int>(t, "train", "steps", cfg.train.steps);
    cfg.train.learning_rate =
        v.get_or<double>(t, "train", "learning_rate", cfg.train.learning_rate);
    cfg.train.beta1 = v.get_or<double>(t, "train", "beta1", cfg.train.beta1);
    cfg.train.beta2 = v.get_or<double>(t, "train", "beta2", cfg.train.beta2);
    cfg.train.epsilon = v.get_or<double>(t, "train", "epsilon", cfg.train.epsilon);
    cfg.train.checkpoint_interval =
        v.get_or<int>(t, "train", "checkpoint_interval", cfg.train.checkpoint_interval);
    if (cfg.train.batch_size < 1) v.fail("train.batch_size must be >= 1");
    if (cfg.train.steps < 1) v.fail("train.steps must be >= 1");
    if (!(cfg.train.learning_rate >= 0.0)) v.fail("train.learning_rate must be >= 0");
    if (!(cfg.train.beta1 > 0.0 && cfg.train.beta1 < 1.0)) v.fail("train.beta1 must be in (0,1)");
    if (!(cfg.train.beta2 > 0.0 && cfg.train.beta2 < 1.0)) v.fail("train.beta2 must be in (0,1)");
    if (!(cfg.train.epsilon > 0.0)) v.fail("train.epsilon must be > 0");
    if (cfg.train.checkpoint_interval < 1) v.fail("train.checkpoint_interval must be >= 1");
  }

  if (root.contains("data")) {
    v.check_keys(root["data"], "data", {"dataset_manifest"});
    cfg.dataset_manifest =
        v.get_or<std::string>(root["data"], "data", "dataset_manifest", "");
  }
  if (root.contains("guidance")) {
    v.check_keys(root["guidance"], "guidance", {"manifest"});
    cfg.guidance_manifest = v.get_or<std::string>(root["guidance"], "guidance", "manifest", "");
  }
  if (root.contains("seeds")) {
    const json& s = root["seeds"];
    v.check_keys(s, "seeds", {"master", "train", "sample"});
    cfg.seed_master = v.get_or<std::uint64_t>(s, "seeds", "master", cfg.seed_master);
    cfg.seed_train = v.get_or<std::uint64_t>(s, "seeds", "train", cfg.seed_train);
    cfg.seed_sample = v.get_or<std::uint64_t>(s, "seeds", "sample", cfg.seed_sample);
  }
  cfg.train.seed = cfg.seed_train;
  cfg.output_dir = v.get_or<std::string>(root, "", "output_dir", cfg.output_dir);

  if (root.contains("windows")) {
    const json& w = root["windows"];
    v.check_keys(w, "windows", {"full", "lung", "bone", "soft-tissue"});
    if (w.is_object()) {
      for (auto& [name, spec] : w.items()) {
        v.check_keys(spec, "windows." + name, {"center", "width"});
        for (auto& preset : cfg.windows) {
          if (preset.name == name) {
            preset.center = v.get_or<double>(spec, "windows." + name, "center", preset.center);
            preset.width = v.get_or<double>(spec, "windows." + name, "width", preset.width);
            if (!(preset.width > 0.0)) v.fail("windows." + name + ".width must be > 0");
          }
        }
      }
    }
  }

  for (const auto& key : required) {
    bool present = false;
    if (key == "data.dataset_manifest") present = !cfg.dataset_manifest.empty();
    else if (key == "guidance.manifest") present = !cfg.guidance_manifest.empty();
    else if (key == "output_dir") present = !cfg.output_dir.empty();
    else {
      const json* node = &root;
      present = true;
      std::istringstream parts(key);
      std::string part;
      while (std::getline(parts, part, '.')) {
        if (!node->is_object() || !node->contains(part)) {
          present = false;
          break;
        }
        node = &(*node)[part];
      }
    }
    if (!present) v.fail("missing required key: " + key);
  }

  // Referenced paths must exist when set.
  if (!cfg.dataset_manifest.empty() &&
      !std::filesystem::exists(cfg.resolve(cfg.dataset_manifest))) {
    v.fail("data.dataset_manifest path does not exist: " + cfg.dataset_manifest);
  }
  if (!cfg.guidance_manifest.empty() &&
      !std::filesystem::exists(cfg.resolve(cfg.guidance_manifest))) {
    v.fail("guidance.manifest path does not exist: " + cfg.guidance_manifest);
  }

  if (!v.violations.empty()) {
    std::string msg = "config validation failed with " +
                      std::to_string(v.violations.size()) + " violation(s)";
    for (const auto& viol : v.violations) msg += "\n  - " + viol;
    throw ConfigError(msg, v.violations);
  }
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["schedule"] = {{"kind", to_string(cfg.schedule_kind)}, {"T", cfg.schedule_steps}};
  j["model"] = {{"kind", cfg.model.kind == NetDescriptor::Kind::Unet ? "unet" : "mlp"},
                {"base_channels", cfg.model.base_channels},
                {"temb_dim", cfg.model.temb_dim},
                {"activation", to_string(cfg.model.activation)},
                {"width", cfg.model.width},
                {"height", cfg.model.height},
                {"hidden_widths", cfg.model.hidden_widths}};
  j["train"] = {{"batch_size", cfg.train.batch_size},
                {"steps", cfg.train.steps},
                {"learning_rate", cfg.train.learning_rate},
                {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"epsilon", cfg.train.epsilon},
                {"checkpoint_interval", cfg.train.checkpoint_interval}};
  j["data"] = {{"dataset_manifest", cfg.dataset_manifest}};
  j["guidance"] = {{"manifest", cfg.guidance_manifest}};
  j["seeds"] = {{"master", cfg.seed_master}, {"train", cfg.seed_train},
                {"sample", cfg.seed_sample}};
  j["output_dir"] = cfg.output_dir;
  json w;
  for (const auto& p : cfg.windows) w[p.name] = {{"center", p.center}, {"width", p.width}};
  j["windows"] = w;
  return j.dump(2) + "\n";
}

GuidanceSet load_guidance_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError("guidance manifest unreadable: " + std::string(e.what()));
  } catch (const json::parse_error& e) {
    throw ConfigError("guidance manifest is not valid structured text: " + std::string(e.what()));
  }
  std::vector<std::string> violations;
  GuidanceSet set;
  if (!j.is_object() || !j.contains("conditions") || !j["conditions"].is_array()) {
    throw ConfigError("guidance manifest must hold a \"conditions\" array");
  }
  if (j.contains("allow_many")) set.allow_many = j["allow_many"].get<bool>();
  for (const auto& [key, _] : j.items()) {
    if (key != "conditions" && key != "allow_many") {
      violations.push_back("unknown key: " + key);
    }
  }
  int index = 0;
  for (const auto& jc : j["conditions"]) {
    ++index;
    const std::string where = "conditions[" + std::to_string(index) + "]";
    for (const auto& [key, _] : jc.items()) {
      if (key != "image" && key != "n" && key != "a" && key != "label") {
        violations.push_back("unknown key: " + where + "." + key);
      }
    }
    GuidanceSpec spec;
    try {
      std::filesystem::path img = jc.at("image").get<std::string>();
      if (img.is_relative()) img = path.parent_path() / img;
      ImageGrid y = read_imgf(img);
      if (y.range() == ValueRange::Hu) y = normalize_for_model(y).image;
      spec.y = std::move(y);
      spec.n = jc.at("n").get<int>();
      spec.a = jc.at("a").get<int>();
      spec.label = jc.value("label", std::string{});
    } catch (const json::exception& e) {
      violations.push_back(where + ": " + e.what());
      continue;
    }
    if (spec.n < 1) violations.push_back(where + ".n must be >= 1");
    if (spec.a < 1) violations.push_back(where + ".a must be >= 1");
    set.specs.push_back(std::move(spec));
  }
  if (!violations.empty()) {
    throw ConfigError("guidance manifest validation failed", violations);
  }
  return set;
}

void write_run_record(const std::filesystem::path& path, const RunRecord& record) {
  json j;
  j["command"] = record.command;
  j["config_hash"] = record.config_hash;
  j["artifacts"] = record.artifacts;
  j["wall_ms"] = record.wall_ms;
  if (!record.metrics_json.empty()) {
    j["metrics"] = json::parse(record.metrics_json);
  }
  atomic_write_file(path, j.dump(2) + "\n");
}

void write_eval_report_json(const std::filesystem::path& path, const EvalReport& report) {
  json j;
  j["set_ssim"] = report.set_ssim;
  j["frechet"] = report.frechet;
  j["extractor_seed"] = report.extractor_seed;
  j["generated_regularized"] = report.generated_regularized;
  j["reference_regularized"] = report.reference_regularized;
  j["pairs"] = json::array();
  for (const auto& p : report.pairs) {
    j["pairs"].push_back(
        {{"generated", p.generated}, {"best_reference", p.best_reference}, {"ssim", p.ssim}});
  }
  atomic_write_file(path, j.dump(2) + "\n");
}

void write_eval_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ostringstream out;
  out << "generated,best_reference,ssim\n";
  out.precision(17);
  for (const auto& p : report.pairs) {
    out << p.generated << "," << p.best_reference << "," << p.ssim << "\n";
  }
  out << "SET_SSIM,," << report.set_ssim << "\n";
  out << "FRECHET,," << report.frechet << "\n";
  out << "EXTRACTOR_SEED,," << report.extractor_seed << "\n";
  atomic_write_file(path, out.str());
}

}  // namespace phantomdiff
