// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "phantomdiff/image.hpp"
#include "phantomdiff/net.hpp"
#include "phantomdiff/schedule.hpp"

namespace phantomdiff {

// Binary formats; byte-level layouts are documented in docs/formats.md.
// All integers and floats little-endian. Readers reject newer versions.
inline constexpr std::uint32_t kImgfVersion = 1;   // magic "IMGF"
inline constexpr std::uint32_t kVschVersion = 1;   // magic "VSCH"
inline constexpr std::uint32_t kDnsrVersion = 1;   // magic "DNSR"

// Images: f32 pixels, row-major, with a value-range tag byte.
void write_imgf(std::ostream& out, const ImageGrid& img);
ImageGrid read_imgf(std::istream& in);
void write_imgf(const std::filesystem::path& path, const ImageGrid& img);
ImageGrid read_imgf(const std::filesystem::path& path);

// Schedules: T f64 betas plus the kind; derived arrays recomputed on load.
void write_vsch(std::ostream& out, const VarianceSchedule& sched);
VarianceSchedule read_vsch(std::istream& in);
void write_vsch(const std::filesystem::path& path, const VarianceSchedule& sched);
VarianceSchedule read_vsch(const std::filesystem::path& path);

// Checkpoints: architecture descriptor block plus the f32 parameter vector.
void write_dnsr(std::ostream& out, const SmallDenoiserNet& net);
SmallDenoiserNet read_dnsr(std::istream& in);
void write_dnsr(const std::filesystem::path& path, const SmallDenoiserNet& net);
SmallDenoiserNet read_dnsr(const std::filesystem::path& path);

/// 8-bit binary PGM (P5) of a [0,1] normalized grid, for human viewing.
std::string pgm_bytes(const ImageGrid& normalized01);
void write_pgm(const std::filesystem::path& path, const ImageGrid& normalized01);

/// FNV-1a 64 over a byte buffer / a file, as lowercase hex.
std::string fnv1a_hex(const void* data, std::size_t len);
std::string hash_file(const std::filesystem::path& path);

/// Writes via a temp file in the same directory, holding an exclusive
/// advisory lock, then renames into place.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace phantomdiff
