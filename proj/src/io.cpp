#include "retboost/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace retboost::io {

namespace {

// All supported targets are little-endian; refuse to build elsewhere rather
// than silently writing byte-swapped files.
static_assert(std::endian::native == std::endian::little,
              "matrix container assumes a little-endian host");

template <typename Scalar>
void write_matrix(const std::filesystem::path& path, const char* magic,
                  const Matrix<Scalar>& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  std::uint32_t header[3] = {static_cast<std::uint32_t>(m.rows()),
                             static_cast<std::uint32_t>(m.cols()), 0u};
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(header), 12);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
  if (!out) throw std::runtime_error("short write: " + path.string());
}

template <typename Scalar>
Matrix<Scalar> read_matrix(const std::filesystem::path& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());

  char file_magic[4];
  std::uint32_t header[3];
  in.read(file_magic, 4);
  in.read(reinterpret_cast<char*>(header), 12);
  if (!in) throw std::runtime_error("malformed header (file shorter than 16 bytes): " + path.string());
  if (std::memcmp(file_magic, magic, 3) != 0) {
    throw std::runtime_error("malformed header (bad magic): " + path.string());
  }
  if (file_magic[3] != magic[3]) {
    throw std::runtime_error(std::string("unknown container version '") + file_magic[3] +
                             "' in " + path.string());
  }

  const std::uint64_t rows = header[0], cols = header[1];
  Matrix<Scalar> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const std::uint64_t want = sizeof(Scalar) * rows * cols;
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(want));
  const std::uint64_t got = static_cast<std::uint64_t>(in.gcount());
  if (got != want) {
    throw std::runtime_error("length mismatch in " + path.string() + ": expected " +
                             std::to_string(want) + " payload bytes, got " + std::to_string(got));
  }
  // Trailing garbage means the header lied about the shape.
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw std::runtime_error("length mismatch in " + path.string() +
                             ": trailing bytes beyond declared " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " payload");
  }
  return m;
}

}  // namespace

void write_matrix_f32(const std::filesystem::path& path, const MatrixXf& m) {
  write_matrix<float>(path, kMagicF32, m);
}

MatrixXf read_matrix_f32(const std::filesystem::path& path) {
  return read_matrix<float>(path, kMagicF32);
}

void write_matrix_f64(const std::filesystem::path& path, const MatrixXd& m) {
  write_matrix<double>(path, kMagicF64, m);
}

MatrixXd read_matrix_f64(const std::filesystem::path& path) {
  return read_matrix<double>(path, kMagicF64);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("short write: " + path.string());
}

}  // namespace retboost::io
