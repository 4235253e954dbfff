#pragma once

// Matrix ingestion (CSV and the USIMMAT0 binary layout), atomic file output
// and JSON serialization of similarity reports.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "usim/types.hpp"

namespace usim {

enum class MatrixFormat { Csv, RawF64 };

/// ".bin", ".f64" and ".usim" are binary; everything else is CSV.
MatrixFormat format_for_path(const std::filesystem::path& path);

struct MatrixFile {
  MatrixFormat format = MatrixFormat::Csv;
  std::filesystem::path path;
  /// Expected (n, d); ShapeMismatch when the file disagrees.
  std::optional<std::pair<Index, Index>> shape;
  /// CSV label column, by header name or 0-based column index.
  std::optional<std::string> label_column;
  /// Defaults to the file stem.
  std::string name;

  static MatrixFile at(const std::filesystem::path& path);
};

/// Binary files pick up labels from a sibling "<path>.labels" file when present.
RepresentationSet load_matrix(const MatrixFile& file);

/// Writes data (and labels: a trailing "label" CSV column, or the sibling
/// labels file for RawF64). Atomic.
void save_matrix(const RepresentationSet& r, const std::filesystem::path& path,
                 MatrixFormat format);

/// 16-byte header ("USIMMAT0", n and d as u32 LE) followed by n*d f64 LE, row-major.
std::string encode_raw(const Matrix& m);
Matrix decode_raw(std::string_view bytes);

std::string matrix_to_csv(const RepresentationSet& r);
/// First line is a header. Cells are trimmed; blank lines are skipped.
RepresentationSet parse_csv(std::string_view text, const std::optional<std::string>& label_column,
                            std::string name = {});

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

nlohmann::json report_to_json(const SimilarityReport& report);

}  // namespace usim
