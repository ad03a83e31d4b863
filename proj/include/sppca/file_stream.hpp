#pragma once

// Binary matrix files. Payload is row-major little-endian IEEE 754, either
// float32 or float64. Files are either headerless (dimensions supplied by the
// caller) or start with a 22-byte SPCA1 header:
//
//   offset  size  field
//   0       4     magic "SPCA"
//   4       1     version (1)
//   5       8     rows, u64 little-endian
//   13      8     cols, u64 little-endian
//   21      1     dtype code (1 = float32, 2 = float64)
//
// See docs/FORMATS.md.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sppca/dense_matrix.hpp"
#include "sppca/error.hpp"
#include "sppca/sketch.hpp"

namespace sppca {

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };
enum class HeaderKind { raw, spca1 };

inline constexpr std::size_t kSpca1HeaderBytes = 22;
inline constexpr std::uint8_t kSpca1Version = 1;

inline std::size_t dtype_width(DType d) { return d == DType::f32 ? 4 : 8; }

inline std::string to_string(DType d) { return d == DType::f32 ? "f32" : "f64"; }
inline std::string to_string(HeaderKind h) { return h == HeaderKind::raw ? "raw" : "spca1"; }

inline DType parse_dtype(const std::string& s) {
  if (s == "f32" || s == "float32") return DType::f32;
  if (s == "f64" || s == "float64") return DType::f64;
  throw ConfigError("unknown dtype '" + s + "' (expected f32 or f64)");
}

inline HeaderKind parse_header_kind(const std::string& s) {
  if (s == "raw") return HeaderKind::raw;
  if (s == "spca1") return HeaderKind::spca1;
  throw ConfigError("unknown layout '" + s + "' (expected raw or spca1)");
}

/// Declared layout of a matrix file. For spca1 files rows/cols may be left 0
/// to take them from the header; nonzero values must match it.
struct FileLayout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  DType dtype = DType::f32;
  HeaderKind header = HeaderKind::raw;
};

namespace detail {

template <typename U>
U byteswap_if_big(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out = (out << 8) | ((v >> (8 * i)) & 0xFF);
    return out;
  }
}

inline void decode_values(std::span<const char> bytes, DType dtype, std::span<double> out) {
  if (dtype == DType::f32) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes.data() + 4 * i, 4);
      out[i] = static_cast<double>(std::bit_cast<float>(byteswap_if_big(bits)));
    }
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, bytes.data() + 8 * i, 8);
      out[i] = std::bit_cast<double>(byteswap_if_big(bits));
    }
  }
}

inline void encode_values(std::span<const double> values, DType dtype, std::vector<char>& out) {
  out.resize(values.size() * dtype_width(dtype));
  if (dtype == DType::f32) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = byteswap_if_big(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
      std::memcpy(out.data() + 4 * i, &bits, 4);
    }
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = byteswap_if_big(std::bit_cast<std::uint64_t>(values[i]));
      std::memcpy(out.data() + 8 * i, &bits, 8);
    }
  }
}

inline std::array<char, kSpca1HeaderBytes> encode_header(std::size_t rows, std::size_t cols, DType dtype) {
  std::array<char, kSpca1HeaderBytes> h{};
  std::memcpy(h.data(), "SPCA", 4);
  h[4] = static_cast<char>(kSpca1Version);
  const std::uint64_t r = byteswap_if_big(static_cast<std::uint64_t>(rows));
  const std::uint64_t c = byteswap_if_big(static_cast<std::uint64_t>(cols));
  std::memcpy(h.data() + 5, &r, 8);
  std::memcpy(h.data() + 13, &c, 8);
  h[21] = static_cast<char>(dtype);
  return h;
}

struct DecodedHeader {
  std::size_t rows;
  std::size_t cols;
  DType dtype;
};

inline DecodedHeader decode_header(std::span<const char> h, const std::string& where) {
  if (h.size() < kSpca1HeaderBytes || std::memcmp(h.data(), "SPCA", 4) != 0) {
    throw FormatError(where + ": missing SPCA magic");
  }
  if (static_cast<std::uint8_t>(h[4]) != kSpca1Version) {
    throw FormatError(where + ": unsupported SPCA version " + std::to_string(static_cast<unsigned char>(h[4])));
  }
  std::uint64_t r, c;
  std::memcpy(&r, h.data() + 5, 8);
  std::memcpy(&c, h.data() + 13, 8);
  const auto code = static_cast<std::uint8_t>(h[21]);
  if (code != 1 && code != 2) throw FormatError(where + ": unknown dtype code " + std::to_string(code));
  return {static_cast<std::size_t>(byteswap_if_big(r)), static_cast<std::size_t>(byteswap_if_big(c)),
          static_cast<DType>(code)};
}

}  // namespace detail

/// Resolves the layout of `path` against its size (and header, for spca1).
/// Returns the layout with rows/cols filled in.
inline FileLayout resolve_layout(const std::filesystem::path& path, FileLayout layout) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError(path.string() + ": cannot stat file: " + ec.message());
  std::size_t offset = 0;
  if (layout.header == HeaderKind::spca1) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    std::array<char, kSpca1HeaderBytes> h{};
    in.read(h.data(), h.size());
    if (in.gcount() != static_cast<std::streamsize>(h.size())) throw FormatError(path.string() + ": truncated header");
    const auto d = detail::decode_header(h, path.string());
    if ((layout.rows != 0 && layout.rows != d.rows) || (layout.cols != 0 && layout.cols != d.cols)) {
      throw FormatError(path.string() + ": header dimensions " + std::to_string(d.rows) + "x" +
                        std::to_string(d.cols) + " differ from the declared ones");
    }
    layout.rows = d.rows;
    layout.cols = d.cols;
    layout.dtype = d.dtype;
    offset = kSpca1HeaderBytes;
  }
  if (layout.rows == 0 || layout.cols == 0) throw FormatError(path.string() + ": dimensions must be positive");
  const std::uintmax_t expected = offset + static_cast<std::uintmax_t>(layout.rows) * layout.cols * dtype_width(layout.dtype);
  if (size != expected) {
    throw FormatError(path.string() + ": file has " + std::to_string(size) + " bytes, expected " +
                      std::to_string(expected) + " for " + std::to_string(layout.rows) + "x" +
                      std::to_string(layout.cols) + " " + to_string(layout.dtype));
  }
  return layout;
}

/// Resettable stream over a matrix file, reading `block_rows` rows at a time.
class FileRowStream final : public RowStream {
 public:
  FileRowStream(std::filesystem::path path, FileLayout layout, std::size_t block_rows)
      : path_(std::move(path)), layout_(resolve_layout(path_, layout)), block_rows_(block_rows) {
    if (block_rows_ == 0) throw DimensionError("FileRowStream: block_rows must be positive");
    offset_ = layout_.header == HeaderKind::spca1 ? kSpca1HeaderBytes : 0;
    in_.open(path_, std::ios::binary);
    if (!in_) throw IoError(path_.string() + ": cannot open for reading");
    reset();
  }

  std::size_t cols() const override { return layout_.cols; }
  std::optional<std::size_t> rows() const override { return layout_.rows; }
  bool resettable() const override { return true; }
  const FileLayout& layout() const noexcept { return layout_; }

  void reset() override {
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(offset_));
    if (!in_) throw IoError(path_.string() + ": seek failed");
    pos_ = 0;
  }

  std::optional<RowBlock> next() override {
    if (pos_ >= layout_.rows) return std::nullopt;
    const std::size_t count = std::min(block_rows_, layout_.rows - pos_);
    const std::size_t values = count * layout_.cols;
    buffer_.resize(values * dtype_width(layout_.dtype));
    in_.read(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (in_.gcount() != static_cast<std::streamsize>(buffer_.size())) {
      throw IoError(path_.string() + ": short read at row " + std::to_string(pos_));
    }
    RowBlock block{pos_, DenseMatrix(count, layout_.cols)};
    detail::decode_values(buffer_, layout_.dtype, block.values.data());
    pos_ += count;
    return block;
  }

 private:
  std::filesystem::path path_;
  FileLayout layout_;
  std::size_t block_rows_;
  std::size_t offset_ = 0;
  std::size_t pos_ = 0;
  std::ifstream in_;
  std::vector<char> buffer_;
};

inline std::unique_ptr<FileRowStream> file_row_stream(const std::filesystem::path& path, const FileLayout& layout,
                                                      std::size_t block_rows) {
  return std::make_unique<FileRowStream>(path, layout, block_rows);
}

/// Single-pass stream over headerless rows from an std::istream (e.g. a
/// pipe). The row count is unknown until the input is exhausted.
class IstreamRowStream final : public RowStream {
 public:
  IstreamRowStream(std::istream& in, std::size_t cols, DType dtype, std::size_t block_rows)
      : in_(&in), cols_(cols), dtype_(dtype), block_rows_(block_rows) {
    if (cols_ == 0 || block_rows_ == 0) throw DimensionError("IstreamRowStream: cols and block_rows must be positive");
  }

  std::size_t cols() const override { return cols_; }
  std::optional<std::size_t> rows() const override { return std::nullopt; }
  bool resettable() const override { return false; }
  void reset() override { throw CapabilityError("IstreamRowStream cannot be rewound"); }

  std::optional<RowBlock> next() override {
    const std::size_t row_bytes = cols_ * dtype_width(dtype_);
    buffer_.resize(block_rows_ * row_bytes);
    in_->read(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    const auto got = static_cast<std::size_t>(in_->gcount());
    if (got % row_bytes != 0) {
      throw FormatError("input ends inside row " + std::to_string(pos_ + got / row_bytes));
    }
    const std::size_t count = got / row_bytes;
    if (count == 0) return std::nullopt;
    RowBlock block{pos_, DenseMatrix(count, cols_)};
    detail::decode_values(std::span<const char>(buffer_.data(), got), dtype_, block.values.data());
    pos_ += count;
    return block;
  }

 private:
  std::istream* in_;
  std::size_t cols_;
  DType dtype_;
  std::size_t block_rows_;
  std::size_t pos_ = 0;
  std::vector<char> buffer_;
};

/// Writes a matrix file row by row; close() checks the row count.
class MatrixFileWriter {
 public:
  MatrixFileWriter(const std::filesystem::path& path, std::size_t rows, std::size_t cols, DType dtype,
                   HeaderKind header)
      : path_(path), rows_(rows), cols_(cols), dtype_(dtype), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError(path.string() + ": cannot open for writing");
    if (header == HeaderKind::spca1) {
      const auto h = detail::encode_header(rows, cols, dtype);
      out_.write(h.data(), h.size());
    }
  }

  void write_row(std::span<const double> row) {
    if (row.size() != cols_) throw DimensionError("MatrixFileWriter: row length mismatch");
    if (written_ == rows_) throw DimensionError("MatrixFileWriter: too many rows");
    detail::encode_values(row, dtype_, buffer_);
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out_) throw IoError(path_.string() + ": write failed");
    ++written_;
  }

  void close() {
    if (written_ != rows_) {
      throw DimensionError(path_.string() + ": wrote " + std::to_string(written_) + " of " + std::to_string(rows_) +
                           " rows");
    }
    out_.close();
    if (!out_) throw IoError(path_.string() + ": close failed");
  }

 private:
  std::filesystem::path path_;
  std::size_t rows_, cols_;
  DType dtype_;
  std::ofstream out_;
  std::vector<char> buffer_;
  std::size_t written_ = 0;
};

inline void write_matrix_file(const std::filesystem::path& path, const DenseMatrix& a, DType dtype,
                              HeaderKind header) {
  MatrixFileWriter w(path, a.rows(), a.cols(), dtype, header);
  for (std::size_t i = 0; i < a.rows(); ++i) w.write_row(a.row(i));
  w.close();
}

inline DenseMatrix read_matrix_file(const std::filesystem::path& path, const FileLayout& layout) {
  FileRowStream s(path, layout, 1024);
  DenseMatrix a(0, s.cols());
  a.reserve_rows(*s.rows());
  while (auto b = s.next()) a.append_rows(b->values.data());
  return a;
}

}  // namespace sppca
