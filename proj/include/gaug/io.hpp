#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gaug/common.hpp"

namespace gaug {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file's bytes; throws IoError when unreadable.
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Matrix files: 6-byte magic, u32 rows, u32 cols (little-endian), then
// rows*cols real32 values in row-major order.
inline constexpr std::string_view kFusedMagic = "GAUGX1";
inline constexpr std::string_view kStructMagic = "GAUGS1";
inline constexpr std::string_view kCheckpointMagic = "GAUGC1";

std::string encode_matrix(std::string_view magic, const Mat& m);
Mat decode_matrix(std::string_view magic, std::string_view bytes);

void save_matrix(const std::filesystem::path& path, std::string_view magic, const Mat& m);
Mat load_matrix(const std::filesystem::path& path, std::string_view magic);

// Checkpoints: magic "GAUGC1", u32 tensor count, then per tensor
// u32 name length, name bytes, u32 rows, u32 cols, rows*cols real32.
using NamedTensors = std::vector<std::pair<std::string, Mat>>;

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// CSV with header "epoch,loss".
void save_loss_trace(const std::filesystem::path& path, const std::vector<double>& losses);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace gaug
