// SPDX-License-Identifier: Apache-2.0
#include "phantomdiff/io_formats.hpp"

#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "phantomdiff/errors.hpp"

namespace phantomdiff {

namespace {

// Dimension cap: rejects corrupt headers before huge allocations.
constexpr std::uint32_t kMaxDim = 1u << 20;
constexpr std::uint64_t kMaxPixels = 1ull << 26;

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed");
}

void get_bytes(std::istream& in, void* p, std::size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError(std::string("truncated file while reading ") + what);
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  put_bytes(out, b, 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  get_bytes(in, b, 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t get_u64(std::istream& in, const char* what) {
  std::uint64_t lo = get_u32(in, what);
  std::uint64_t hi = get_u32(in, what);
  return lo | (hi << 32);
}

void put_u8(std::ostream& out, std::uint8_t v) { put_bytes(out, &v, 1); }

std::uint8_t get_u8(std::istream& in, const char* what) {
  std::uint8_t v;
  get_bytes(in, &v, 1, what);
  return v;
}

void put_f32(std::ostream& out, float v) {
  static_assert(sizeof(float) == 4);
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(out, u);
}

float get_f32(std::istream& in, const char* what) {
  std::uint32_t u = get_u32(in, what);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(out, u);
}

double get_f64(std::istream& in, const char* what) {
  std::uint64_t u = get_u64(in, what);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void check_magic(std::istream& in, const char magic[4], const char* format) {
  char got[4];
  get_bytes(in, got, 4, "magic");
  if (std::memcmp(got, magic, 4) != 0) {
    throw IoError(std::string("bad magic for ") + format + " file");
  }
}

void check_version(std::uint32_t got, std::uint32_t supported, const char* format) {
  if (got > supported) {
    throw IoError(std::string(format) + " version " + std::to_string(got) +
                  " is newer than supported version " + std::to_string(supported));
  }
  if (got == 0) throw IoError(std::string(format) + " version 0 is invalid");
}

template <typename Fn>
auto with_input_file(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return fn(in);
}

}  // namespace

void write_imgf(std::ostream& out, const ImageGrid& img) {
  put_bytes(out, "IMGF", 4);
  put_u32(out, kImgfVersion);
  put_u32(out, static_cast<std::uint32_t>(img.width()));
  put_u32(out, static_cast<std::uint32_t>(img.height()));
  put_u8(out, static_cast<std::uint8_t>(img.range()));
  for (double v : img.values()) put_f32(out, static_cast<float>(v));
}

ImageGrid read_imgf(std::istream& in) {
  check_magic(in, "IMGF", "IMGF");
  check_version(get_u32(in, "version"), kImgfVersion, "IMGF");
  const std::uint32_t w = get_u32(in, "width");
  const std::uint32_t h = get_u32(in, "height");
  if (w == 0 || h == 0 || w > kMaxDim || h > kMaxDim ||
      static_cast<std::uint64_t>(w) * h > kMaxPixels) {
    throw IoError("IMGF shape " + std::to_string(w) + "x" + std::to_string(h) +
                  " outside supported bounds");
  }
  const std::uint8_t tag = get_u8(in, "value-range tag");
  if (tag > static_cast<std::uint8_t>(ValueRange::Labels)) {
    throw IoError("IMGF unknown value-range tag " + std::to_string(tag));
  }
  ImageGrid img(static_cast<int>(w), static_cast<int>(h), static_cast<ValueRange>(tag));
  for (auto& v : img.values()) v = get_f32(in, "pixels");
  return img;
}

void write_vsch(std::ostream& out, const VarianceSchedule& sched) {
  put_bytes(out, "VSCH", 4);
  put_u32(out, kVschVersion);
  put_u32(out, static_cast<std::uint32_t>(sched.steps()));
  put_u8(out, static_cast<std::uint8_t>(sched.kind()));
  for (double b : sched.betas()) put_f64(out, b);
}

VarianceSchedule read_vsch(std::istream& in) {
  check_magic(in, "VSCH", "VSCH");
  check_version(get_u32(in, "version"), kVschVersion, "VSCH");
  const std::uint32_t T = get_u32(in, "T");
  if (T == 0 || T > 1000000) throw IoError("VSCH step count " + std::to_string(T) + " invalid");
  const std::uint8_t kind = get_u8(in, "kind");
  if (kind > 1) throw IoError("VSCH unknown schedule kind " + std::to_string(kind));
  std::vector<double> betas(T);
  for (auto& b : betas) b = get_f64(in, "betas");
  return VarianceSchedule::from_betas(static_cast<ScheduleKind>(kind), std::move(betas));
}

void write_dnsr(std::ostream& out, const SmallDenoiserNet& net) {
  const NetDescriptor& d = net.descriptor();
  put_bytes(out, "DNSR", 4);
  put_u32(out, kDnsrVersion);
  put_u8(out, static_cast<std::uint8_t>(d.kind));
  put_u8(out, static_cast<std::uint8_t>(d.activation));
  put_u32(out, static_cast<std::uint32_t>(d.width));
  put_u32(out, static_cast<std::uint32_t>(d.height));
  put_u32(out, static_cast<std::uint32_t>(d.temb_dim));
  put_u32(out, static_cast<std::uint32_t>(d.base_channels));
  put_u32(out, static_cast<std::uint32_t>(d.hidden_widths.size()));
  for (int w : d.hidden_widths) put_u32(out, static_cast<std::uint32_t>(w));
  put_u64(out, net.parameter_count());
  for (double p : net.parameters()) put_f32(out, static_cast<float>(p));
}

SmallDenoiserNet read_dnsr(std::istream& in) {
  check_magic(in, "DNSR", "DNSR");
  check_version(get_u32(in, "version"), kDnsrVersion, "DNSR");
  NetDescriptor d;
  const std::uint8_t kind = get_u8(in, "kind");
  if (kind > 1) throw IoError("DNSR unknown model kind " + std::to_string(kind));
  d.kind = static_cast<NetDescriptor::Kind>(kind);
  const std::uint8_t act = get_u8(in, "activation");
  if (act > 2) throw IoError("DNSR unknown activation " + std::to_string(act));
  d.activation = static_cast<Activation>(act);
  d.width = static_cast<int>(get_u32(in, "width"));
  d.height = static_cast<int>(get_u32(in, "height"));
  if (d.width <= 0 || d.height <= 0 || static_cast<std::uint64_t>(d.width) * d.height > kMaxPixels) {
    throw IoError("DNSR shape outside supported bounds");
  }
  d.temb_dim = static_cast<int>(get_u32(in, "temb_dim"));
  d.base_channels = static_cast<int>(get_u32(in, "base_channels"));
  const std::uint32_t nw = get_u32(in, "hidden width count");
  if (nw > 64) throw IoError("DNSR hidden width count outside supported bounds");
  d.hidden_widths.resize(nw);
  for (auto& w : d.hidden_widths) w = static_cast<int>(get_u32(in, "hidden widths"));
  const std::uint64_t n = get_u64(in, "parameter count");
  if (n != SmallDenoiserNet::expected_parameter_count(d)) {
    throw IoError("DNSR parameter count does not match the architecture descriptor");
  }
  std::vector<double> params(n);
  for (auto& p : params) p = get_f32(in, "parameters");
  return SmallDenoiserNet::from_parameters(std::move(d), std::move(params));
}

namespace {

template <typename T, typename WriteFn>
void write_to_path(const std::filesystem::path& path, const T& value, WriteFn&& fn) {
  std::ostringstream buf(std::ios::binary);
  fn(buf, value);
  atomic_write_file(path, buf.str());
}

}  // namespace

void write_imgf(const std::filesystem::path& path, const ImageGrid& img) {
  write_to_path(path, img, [](std::ostream& o, const ImageGrid& v) { write_imgf(o, v); });
}

ImageGrid read_imgf(const std::filesystem::path& path) {
  return with_input_file(path, [](std::istream& in) { return read_imgf(in); });
}

void write_vsch(const std::filesystem::path& path, const VarianceSchedule& sched) {
  write_to_path(path, sched, [](std::ostream& o, const VarianceSchedule& v) { write_vsch(o, v); });
}

VarianceSchedule read_vsch(const std::filesystem::path& path) {
  return with_input_file(path, [](std::istream& in) { return read_vsch(in); });
}

void write_dnsr(const std::filesystem::path& path, const SmallDenoiserNet& net) {
  write_to_path(path, net, [](std::ostream& o, const SmallDenoiserNet& v) { write_dnsr(o, v); });
}

SmallDenoiserNet read_dnsr(const std::filesystem::path& path) {
  return with_input_file(path, [](std::istream& in) { return read_dnsr(in); });
}

std::string pgm_bytes(const ImageGrid& normalized01) {
  std::string out = "P5\n" + std::to_string(normalized01.width()) + " " +
                    std::to_string(normalized01.height()) + "\n255\n";
  out.reserve(out.size() + normalized01.size());
  for (double v : normalized01.values()) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const ImageGrid& normalized01) {
  atomic_write_file(path, pgm_bytes(normalized01));
}

std::string fnv1a_hex(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string hash_file(const std::filesystem::path& path) {
  std::string bytes = read_file_bytes(path);
  return fnv1a_hex(bytes.data(), bytes.size());
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    if (flock(fileno(f), LOCK_EX) != 0) {
      std::fclose(f);
      throw IoError("cannot lock " + tmp.string());
    }
    const std::size_t written = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
    const bool ok = written == bytes.size() && std::fflush(f) == 0;
    flock(fileno(f), LOCK_UN);
    std::fclose(f);
    if (!ok) {
      std::filesystem::remove(tmp);
      throw IoError("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

}  // namespace phantomdiff
