// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "phantomdiff/config.hpp"
#include "phantomdiff/errors.hpp"
#include "phantomdiff/io_formats.hpp"
#include "support/test_util.hpp"

using namespace phantomdiff;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("phantomdiff_io_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) { atomic_write_file(p, text); }

ImageGrid random_f32_grid(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(1, 24);
  std::uniform_real_distribution<double> val(-1000.0, 1000.0);
  std::uniform_int_distribution<int> tag(0, 3);
  ImageGrid g(dim(rng), dim(rng), static_cast<ValueRange>(tag(rng)));
  for (auto& v : g.values()) v = static_cast<double>(static_cast<float>(val(rng)));
  return g;
}

}  // namespace

TEST_CASE("imgf round-trip is bit-exact for f32 payloads") {
  std::mt19937_64 rng(404);
  for (int i = 0; i < 500; ++i) {
    ImageGrid img = random_f32_grid(rng);
    std::stringstream buf;
    write_imgf(buf, img);
    ImageGrid back = read_imgf(buf);
    REQUIRE(back.same_shape(img));
    CHECK(back.range() == img.range());
    CHECK(bitwise_equal(back, img));
  }
}

TEST_CASE("imgf detects corruption") {
  ImageGrid img = random_grid(6, 4, 1);
  std::stringstream buf;
  write_imgf(buf, img);
  std::string bytes = buf.str();

  // Bad magic.
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream in1(bad);
  CHECK_THROWS_WITH_AS(read_imgf(in1), doctest::Contains("bad magic"), IoError);

  // Truncation.
  std::stringstream in2(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_WITH_AS(read_imgf(in2), doctest::Contains("truncated"), IoError);

  // Newer version.
  std::string newer = bytes;
  newer[4] = 9;
  std::stringstream in3(newer);
  CHECK_THROWS_WITH_AS(read_imgf(in3), doctest::Contains("newer"), IoError);

  // Shape overflow.
  std::string huge = bytes;
  huge[8] = huge[9] = huge[10] = huge[11] = static_cast<char>(0xFF);
  std::stringstream in4(huge);
  CHECK_THROWS_AS(read_imgf(in4), IoError);
}

TEST_CASE("vsch corruption cases") {
  auto sched = VarianceSchedule::build(ScheduleKind::Cosine, 16);
  std::stringstream buf;
  write_vsch(buf, sched);
  std::string bytes = buf.str();
  std::string bad = bytes;
  bad[1] = 'Q';
  std::stringstream in1(bad);
  CHECK_THROWS_WITH_AS(read_vsch(in1), doctest::Contains("bad magic"), IoError);
  std::stringstream in2(bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_WITH_AS(read_vsch(in2), doctest::Contains("truncated"), IoError);
}

TEST_CASE("dnsr round-trip preserves descriptor and f32 parameters") {
  NetDescriptor d;
  d.kind = NetDescriptor::Kind::Mlp;
  d.width = 4;
  d.height = 2;
  d.hidden_widths = {10, 6};
  d.temb_dim = 8;
  d.activation = Activation::Tanh;
  SmallDenoiserNet net = SmallDenoiserNet::create(d, 77);
  std::stringstream buf;
  write_dnsr(buf, net);
  SmallDenoiserNet back = read_dnsr(buf);
  CHECK(back.descriptor() == d);
  REQUIRE(back.parameter_count() == net.parameter_count());
  for (std::size_t i = 0; i < net.parameter_count(); ++i) {
    CHECK(back.parameters()[i] == static_cast<double>(static_cast<float>(net.parameters()[i])));
  }
  // Second trip is bitwise stable (already f32-quantized).
  std::stringstream buf2, buf3;
  write_dnsr(buf2, back);
  SmallDenoiserNet back2 = read_dnsr(buf2);
  CHECK(back2.parameters() == back.parameters());

  std::string bytes;
  {
    std::stringstream b;
    write_dnsr(b, net);
    bytes = b.str();
  }
  std::string bad = bytes;
  bad[2] = 'z';
  std::stringstream in1(bad);
  CHECK_THROWS_WITH_AS(read_dnsr(in1), doctest::Contains("bad magic"), IoError);
  // Corrupt the parameter count field.
  std::string mism = bytes;
  mism[bytes.size() - net.parameter_count() * 4 - 1] ^= 0x1;
  std::stringstream in2(mism);
  CHECK_THROWS_AS(read_dnsr(in2), IoError);
}

TEST_CASE("pgm export carries the expected header and payload") {
  ImageGrid img(2, 2, ValueRange::Normalized, {0.0, 0.5, 1.0, 2.0});
  std::string bytes = pgm_bytes(img);
  const std::string header = "P5\n2 2\n255\n";
  CHECK(bytes.rfind(header, 0) == 0);
  REQUIRE(bytes.size() == header.size() + 4);
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
  CHECK(px[0] == 0);
  CHECK(px[1] == 128);  // round(0.5 * 255)
  CHECK(px[2] == 255);
  CHECK(px[3] == 255);  // clamped
}

TEST_CASE("file helpers: atomic write, hash, missing files") {
  fs::path dir = temp_dir("files");
  fs::path f = dir / "x.bin";
  atomic_write_file(f, "hello");
  CHECK(read_file_bytes(f) == "hello");
  CHECK(hash_file(f) == fnv1a_hex("hello", 5));
  CHECK(!fs::exists(dir / "x.bin.tmp"));
  CHECK_THROWS_AS(read_file_bytes(dir / "missing.bin"), IoError);
  CHECK_THROWS_AS(read_imgf(dir / "missing.imgf"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("minimal config parses with documented defaults") {
  fs::path dir = temp_dir("cfg_min");
  write_text(dir / "min.json", "{}\n");
  ExperimentConfig cfg = validate_config(dir / "min.json");
  CHECK(cfg.schedule_kind == ScheduleKind::Cosine);
  CHECK(cfg.schedule_steps == 200);
  CHECK(cfg.model.kind == NetDescriptor::Kind::Unet);
  CHECK(cfg.model.base_channels == 14);
  CHECK(cfg.train.batch_size == 4);
  CHECK(cfg.seed_master == 1);
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.windows.size() == 4);
  fs::remove_all(dir);
}

TEST_CASE("config violations are all reported with key paths") {
  fs::path dir = temp_dir("cfg_bad");
  write_text(dir / "bad.json", R"({
    "schedule": {"kind": "cosine", "T": 0},
    "train": {"batch_size": 0},
    "mystery": 1
  })");
  try {
    validate_config(dir / "bad.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(e.violations().size() == 3);
    bool saw_T = false, saw_batch = false, saw_unknown = false;
    for (const auto& v : e.violations()) {
      if (v.find("schedule.T") != std::string::npos) saw_T = true;
      if (v.find("train.batch_size") != std::string::npos) saw_batch = true;
      if (v.find("unknown key: mystery") != std::string::npos) saw_unknown = true;
    }
    CHECK(saw_T);
    CHECK(saw_batch);
    CHECK(saw_unknown);
  }
  fs::remove_all(dir);
}

TEST_CASE("missing required keys are named") {
  fs::path dir = temp_dir("cfg_req");
  write_text(dir / "c.json", "{}\n");
  try {
    validate_config(dir / "c.json", {"data.dataset_manifest"});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(e.violations().size() == 1);
    CHECK(e.violations()[0] == "missing required key: data.dataset_manifest");
  }
  fs::remove_all(dir);
}

TEST_CASE("referenced paths must exist at validation time") {
  fs::path dir = temp_dir("cfg_paths");
  write_text(dir / "c.json", R"({"data": {"dataset_manifest": "nope/manifest.json"}})");
  CHECK_THROWS_AS(validate_config(dir / "c.json"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("golden config round-trips through serialization") {
  const fs::path golden = fs::path(PHANTOMDIFF_TEST_DATA_DIR) / "golden_config.json";
  ExperimentConfig cfg = validate_config(golden);
  fs::path dir = temp_dir("cfg_rt");
  write_text(dir / "rt.json", config_to_json(cfg));
  ExperimentConfig cfg2 = validate_config(dir / "rt.json");
  CHECK(cfg2.schedule_kind == cfg.schedule_kind);
  CHECK(cfg2.schedule_steps == cfg.schedule_steps);
  CHECK(cfg2.model == cfg.model);
  CHECK(cfg2.train.batch_size == cfg.train.batch_size);
  CHECK(cfg2.train.steps == cfg.train.steps);
  CHECK(cfg2.train.learning_rate == cfg.train.learning_rate);
  CHECK(cfg2.seed_master == cfg.seed_master);
  CHECK(cfg2.seed_train == cfg.seed_train);
  CHECK(cfg2.seed_sample == cfg.seed_sample);
  CHECK(cfg2.output_dir == cfg.output_dir);
  REQUIRE(cfg2.windows.size() == cfg.windows.size());
  for (std::size_t i = 0; i < cfg.windows.size(); ++i) {
    CHECK(cfg2.windows[i].name == cfg.windows[i].name);
    CHECK(cfg2.windows[i].center == cfg.windows[i].center);
    CHECK(cfg2.windows[i].width == cfg.windows[i].width);
  }
  // Byte-level fixpoint: serializing the reparse reproduces the same text.
  CHECK(config_to_json(cfg2) == config_to_json(cfg));
  fs::remove_all(dir);
}

TEST_CASE("guidance manifest loads, validates, and reports unknown keys") {
  fs::path dir = temp_dir("gm");
  ImageGrid y = random_grid(8, 8, 5);
  write_imgf(dir / "ref.imgf", y);
  write_text(dir / "g.json", R"({"conditions": [{"image": "ref.imgf", "n": 2, "a": 3,
    "label": "anatomy-map"}]})");
  GuidanceSet set = load_guidance_manifest(dir / "g.json");
  REQUIRE(set.size() == 1);
  CHECK(set.specs[0].n == 2);
  CHECK(set.specs[0].a == 3);
  CHECK(set.specs[0].label == "anatomy-map");

  write_text(dir / "bad.json", R"({"conditions": [{"image": "ref.imgf", "n": 2, "a": 3,
    "typo": true}]})");
  CHECK_THROWS_AS(load_guidance_manifest(dir / "bad.json"), ConfigError);
  write_text(dir / "empty.json", R"({"conditions": []})");
  CHECK(load_guidance_manifest(dir / "empty.json").empty());
  fs::remove_all(dir);
}
