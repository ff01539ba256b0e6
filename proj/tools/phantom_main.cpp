// SPDX-License-Identifier: Apache-2.0
//
// Operator entry point: dataset generation, training, sampling (guided and
// unguided), evaluation, and window exports. Every result-affecting knob is
// a flag or a config field; commands print human logs to stderr and one
// machine-readable summary line to stdout.
// Exit codes: 0 success, 2 config error, 3 numeric failure, 4 I/O failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include "phantomdiff/config.hpp"
#include "phantomdiff/dataset.hpp"
#include "phantomdiff/diffusion.hpp"
#include "phantomdiff/errors.hpp"
#include "phantomdiff/guidance.hpp"
#include "phantomdiff/io_formats.hpp"
#include "phantomdiff/metrics.hpp"
#include "phantomdiff/phantom.hpp"
#include "phantomdiff/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace phantomdiff;

namespace {

void log_line(const std::string& msg) { std::cerr << "[phantom] " << msg << "\n"; }

void emit_summary(const std::string& command, const std::vector<std::string>& artifacts) {
  json j;
  j["command"] = command;
  j["ok"] = true;
  j["artifacts"] = artifacts;
  std::cout << j.dump() << "\n";
}

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

void require_artifacts(const std::vector<std::string>& artifacts) {
  for (const auto& a : artifacts) {
    if (!fs::exists(a)) throw IoError("expected artifact missing: " + a);
  }
}

/// [0,1] view of an image for SSIM, regardless of stored range.
ImageGrid display_view(const ImageGrid& img) {
  if (img.range() == ValueRange::Hu) return to_window(img, window_preset("full"));
  ImageGrid out(img.width(), img.height(), ValueRange::Normalized);
  for (std::size_t i = 0; i < img.size(); ++i) {
    out[i] = std::clamp((img[i] + 1.0) / 2.0, 0.0, 1.0);
  }
  return out;
}

std::vector<fs::path> list_imgf(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".imgf") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .imgf files under " + dir.string());
  return files;
}

int run_gen(int count, int size, std::uint64_t seed, const std::string& out_dir) {
  auto start = std::chrono::steady_clock::now();
  DatasetManifest manifest = build_dataset(count, size, size, seed, out_dir);
  std::vector<std::string> artifacts{(fs::path(out_dir) / "manifest.json").string()};
  for (const auto& e : manifest.entries) {
    artifacts.push_back((fs::path(out_dir) / e.image_path).string());
    artifacts.push_back((fs::path(out_dir) / e.map_path).string());
  }
  require_artifacts(artifacts);
  log_line("generated " + std::to_string(count) + " phantom samples in " + out_dir + " (" +
           std::to_string(ms_since(start) / 1000.0) + " s)");
  emit_summary("gen", {(fs::path(out_dir) / "manifest.json").string()});
  return 0;
}

int run_train(const std::string& config_path) {
  auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = validate_config(config_path, {"data.dataset_manifest"});
  VarianceSchedule sched = cfg.make_schedule();
  std::vector<ImageGrid> dataset = load_training_images(cfg.resolve(cfg.dataset_manifest));
  log_line("loaded " + std::to_string(dataset.size()) + " training images");

  NetDescriptor desc = cfg.model;
  SmallDenoiserNet net = SmallDenoiserNet::create(desc, derive_seed(cfg.seed_train, 0));
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed_train, 1);
  log_line("training " + std::to_string(net.parameter_count()) + " parameters for " +
           std::to_string(tc.steps) + " steps");
  TrainResult result = train(net, dataset, tc, sched);

  fs::path out_dir = cfg.resolve(cfg.output_dir);
  fs::create_directories(out_dir);
  fs::path ckpt = out_dir / "checkpoint.dnsr";
  fs::path loss_csv = out_dir / "loss.csv";
  write_dnsr(ckpt, net);
  std::ostringstream csv;
  csv.precision(17);
  csv << "step,loss\n";
  for (const auto& [step, loss] : result.loss_trace) csv << step << "," << loss << "\n";
  atomic_write_file(loss_csv, csv.str());

  RunRecord record;
  record.command = "train";
  record.config_hash = cfg.config_hash;
  record.artifacts = {ckpt.string(), loss_csv.string()};
  record.wall_ms = ms_since(start);
  record.metrics_json =
      json{{"final_loss", result.step_losses.back()}, {"steps", cfg.train.steps}}.dump();
  write_run_record(out_dir / "run_record.json", record);
  require_artifacts(record.artifacts);
  log_line("final loss " + std::to_string(result.step_losses.back()));
  emit_summary("train", record.artifacts);
  return 0;
}

int run_sample(const std::string& config_path, const std::string& guidance_path, int count,
               std::int64_t seed_flag, const std::string& out_flag,
               const std::string& checkpoint_flag, int threads) {
  auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = validate_config(config_path);
  VarianceSchedule sched = cfg.make_schedule();

  fs::path out_dir = out_flag.empty() ? cfg.resolve(cfg.output_dir) : fs::path(out_flag);
  fs::path ckpt = checkpoint_flag.empty() ? cfg.resolve(cfg.output_dir) / "checkpoint.dnsr"
                                          : fs::path(checkpoint_flag);
  SmallDenoiserNet net = read_dnsr(ckpt);

  std::string manifest_path = !guidance_path.empty() ? guidance_path
                              : !cfg.guidance_manifest.empty()
                                  ? cfg.resolve(cfg.guidance_manifest).string()
                                  : std::string{};
  GuidanceSet guidance;
  std::string guidance_hash = "none";
  if (!manifest_path.empty()) {
    guidance = load_guidance_manifest(manifest_path);
    guidance_hash = hash_file(manifest_path);
    log_line("guidance: " + std::to_string(guidance.size()) + " condition(s) from " +
             manifest_path);
  }
  guidance.validate(net.input_width(), net.input_height(), sched.steps());

  const std::uint64_t sample_seed =
      seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : cfg.seed_sample;
  fs::path samples_dir = out_dir / "samples";
  fs::create_directories(samples_dir);

  std::vector<ImageGrid> results(static_cast<std::size_t>(count));
  auto run_chain = [&](int i) {
    const std::uint64_t chain_seed = derive_seed(sample_seed, static_cast<std::uint64_t>(i));
    GuidedSampleResult r = sample_guided(net, sched, guidance, net.input_width(),
                                         net.input_height(), chain_seed);
    results[static_cast<std::size_t>(i)] = denormalize_from_model(r.x0);
  };
  const unsigned hw = threads > 0 ? static_cast<unsigned>(threads)
                                  : std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(count));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) run_chain(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int i = static_cast<int>(w); i < count; i += static_cast<int>(workers)) run_chain(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<std::string> artifacts;
  for (int i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "sample_%04d", i);
    fs::path img_path = samples_dir / (std::string(name) + ".imgf");
    write_imgf(img_path, results[static_cast<std::size_t>(i)]);
    json prov;
    prov["chain_seed"] = derive_seed(sample_seed, static_cast<std::uint64_t>(i));
    prov["guidance_manifest_hash"] = guidance_hash;
    prov["config_hash"] = cfg.config_hash;
    fs::path prov_path = samples_dir / (std::string(name) + ".json");
    atomic_write_file(prov_path, prov.dump(2) + "\n");
    artifacts.push_back(img_path.string());
    artifacts.push_back(prov_path.string());
  }

  RunRecord record;
  record.command = "sample";
  record.config_hash = cfg.config_hash;
  record.artifacts = artifacts;
  record.wall_ms = ms_since(start);
  record.metrics_json = json{{"count", count}, {"guided", !guidance.empty()}}.dump();
  write_run_record(out_dir / "sample_run_record.json", record);
  require_artifacts(artifacts);
  log_line("wrote " + std::to_string(count) + " samples to " + samples_dir.string());
  emit_summary("sample", artifacts);
  return 0;
}

int run_eval(const std::string& generated_dir, const std::string& reference_dir,
             const std::string& report_path, std::uint64_t extractor_seed) {
  std::vector<fs::path> gen_files = list_imgf(generated_dir);
  std::vector<fs::path> ref_files = list_imgf(reference_dir);

  std::vector<ImageGrid> gen_raw, ref_raw, gen01, ref01;
  for (const auto& p : gen_files) {
    gen_raw.push_back(read_imgf(p));
    gen01.push_back(display_view(gen_raw.back()));
  }
  for (const auto& p : ref_files) {
    ref_raw.push_back(read_imgf(p));
    ref01.push_back(display_view(ref_raw.back()));
  }

  EvalReport report;
  report.extractor_seed = extractor_seed;
  double total = 0.0;
  for (std::size_t g = 0; g < gen01.size(); ++g) {
    double best = -1.0;
    std::size_t best_r = 0;
    for (std::size_t r = 0; r < ref01.size(); ++r) {
      double v = ssim(gen01[g], ref01[r]);
      if (v > best) {
        best = v;
        best_r = r;
      }
    }
    total += best;
    report.pairs.push_back({gen_files[g].string(), ref_files[best_r].string(), best});
  }
  report.set_ssim = total / static_cast<double>(gen01.size());

  FeatureExtractor extractor(extractor_seed);
  GaussianStats gen_stats = extract_stats(gen_raw, extractor);
  GaussianStats ref_stats = extract_stats(ref_raw, extractor);
  report.frechet = frechet_distance(gen_stats, ref_stats);
  report.generated_regularized = gen_stats.regularized;
  report.reference_regularized = ref_stats.regularized;

  fs::path json_path(report_path);
  fs::path csv_path = json_path;
  csv_path.replace_extension(".csv");
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  write_eval_report_json(json_path, report);
  write_eval_report_csv(csv_path, report);
  require_artifacts({json_path.string(), csv_path.string()});
  log_line("set_ssim=" + std::to_string(report.set_ssim) +
           " frechet=" + std::to_string(report.frechet));
  emit_summary("eval", {json_path.string(), csv_path.string()});
  return 0;
}

int run_export(const std::string& image_path, const std::string& windows_csv,
               const std::string& out_dir) {
  ImageGrid img = read_imgf(image_path);
  if (img.range() == ValueRange::Normalized) img = denormalize_from_model(img);
  if (img.range() != ValueRange::Hu) {
    throw ConfigError("export: image must carry HU or normalized model values");
  }
  fs::create_directories(out_dir);
  const std::string stem = fs::path(image_path).stem().string();
  std::vector<std::string> artifacts;
  std::stringstream names(windows_csv);
  std::string name;
  while (std::getline(names, name, ',')) {
    WindowPreset preset = window_preset(name);
    fs::path out = fs::path(out_dir) / (stem + "_" + name + ".pgm");
    write_pgm(out, to_window(img, preset));
    artifacts.push_back(out.string());
  }
  if (artifacts.empty()) throw ConfigError("export: no windows requested");
  require_artifacts(artifacts);
  emit_summary("export", artifacts);
  return 0;
}

int run_schedule(const std::string& kind, int T, const std::string& out_path,
                 const std::string& inspect_path) {
  if (!inspect_path.empty()) {
    VarianceSchedule s = read_vsch(inspect_path);
    json j;
    j["kind"] = to_string(s.kind());
    j["T"] = s.steps();
    j["beta_first"] = s.beta(1);
    j["beta_last"] = s.beta(s.steps());
    j["alpha_bar_last"] = s.alpha_bar(s.steps());
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  if (out_path.empty()) throw ConfigError("schedule: either --out or --inspect is required");
  VarianceSchedule s = VarianceSchedule::build(schedule_kind_from_string(kind), T);
  write_vsch(out_path, s);
  require_artifacts({out_path});
  emit_summary("schedule", {out_path});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DDPM phantom-image pipeline: generate, train, sample, evaluate, export", "phantom"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a procedural phantom dataset");
  int gen_count = 1, gen_size = 64;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "dataset";
  gen->add_option("--count", gen_count, "Number of samples")->required();
  gen->add_option("--size", gen_size, "Square image size in pixels");
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train the denoiser from a config");
  std::string train_config;
  train_cmd->add_option("--config", train_config, "Experiment config path")->required();

  auto* sample_cmd = app.add_subcommand("sample", "Sample images from a trained model");
  std::string sample_config, sample_guidance, sample_out, sample_ckpt;
  int sample_count = 1, sample_threads = 0;
  std::int64_t sample_seed = -1;
  sample_cmd->add_option("--config", sample_config, "Experiment config path")->required();
  sample_cmd->add_option("--guidance", sample_guidance, "Guidance manifest path");
  sample_cmd->add_option("--count", sample_count, "Number of images")->required();
  sample_cmd->add_option("--seed", sample_seed, "Sampling seed (defaults to config seeds.sample)");
  sample_cmd->add_option("--out", sample_out, "Output directory (defaults to config output_dir)");
  sample_cmd->add_option("--checkpoint", sample_ckpt, "Checkpoint path override");
  sample_cmd->add_option("--threads", sample_threads, "Worker threads (0 = auto)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a generated set against a reference set");
  std::string eval_gen, eval_ref, eval_out;
  std::uint64_t eval_seed = 17;
  eval_cmd->add_option("--generated", eval_gen, "Directory of generated .imgf images")->required();
  eval_cmd->add_option("--reference", eval_ref, "Directory of reference .imgf images")->required();
  eval_cmd->add_option("--out", eval_out, "Report path (.json; .csv written alongside)")
      ->required();
  eval_cmd->add_option("--extractor-seed", eval_seed, "Feature extractor seed");

  auto* export_cmd = app.add_subcommand("export", "Export an image through HU windows as PGM");
  std::string export_image, export_windows = "full,lung,bone,soft-tissue", export_out = ".";
  export_cmd->add_option("--image", export_image, "Input .imgf image")->required();
  export_cmd->add_option("--windows", export_windows, "Comma-separated preset names");
  export_cmd->add_option("--out", export_out, "Output directory");

  auto* sched_cmd = app.add_subcommand("schedule", "Dump or inspect a variance schedule");
  std::string sched_kind = "cosine", sched_out, sched_inspect;
  int sched_T = 200;
  sched_cmd->add_option("--kind", sched_kind, "linear or cosine");
  sched_cmd->add_option("--T", sched_T, "Step count");
  sched_cmd->add_option("--out", sched_out, "Write schedule to this path");
  sched_cmd->add_option("--inspect", sched_inspect, "Print a summary of an existing schedule");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen(gen_count, gen_size, gen_seed, gen_out);
    if (train_cmd->parsed()) return run_train(train_config);
    if (sample_cmd->parsed()) {
      return run_sample(sample_config, sample_guidance, sample_count, sample_seed, sample_out,
                        sample_ckpt, sample_threads);
    }
    if (eval_cmd->parsed()) return run_eval(eval_gen, eval_ref, eval_out, eval_seed);
    if (export_cmd->parsed()) return run_export(export_image, export_windows, export_out);
    if (sched_cmd->parsed()) return run_schedule(sched_kind, sched_T, sched_out, sched_inspect);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "[phantom] config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "[phantom] config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "[phantom] io error: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "[phantom] numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const ScheduleError& e) {
    std::cerr << "[phantom] numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "[phantom] failure: " << e.what() << "\n";
    return 3;
  }
}
