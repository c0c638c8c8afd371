#pragma once

#include <filesystem>
#include <string>

#include "retboost/types.hpp"

namespace retboost::io {

// Raw matrix container: 16-byte header {4-byte magic, u32 rows, u32 cols,
// u32 reserved}, then row-major little-endian scalars. Magic "BRF1" carries
// float32 payloads (dataset features, published checkpoints), "BRD1" carries
// float64 payloads (trainer resume state).
inline constexpr char kMagicF32[5] = "BRF1";
inline constexpr char kMagicF64[5] = "BRD1";
inline constexpr std::size_t kHeaderBytes = 16;

void write_matrix_f32(const std::filesystem::path& path, const MatrixXf& m);
MatrixXf read_matrix_f32(const std::filesystem::path& path);

void write_matrix_f64(const std::filesystem::path& path, const MatrixXd& m);
MatrixXd read_matrix_f64(const std::filesystem::path& path);

// Whole-file text helpers.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace retboost::io
