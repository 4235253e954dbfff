#pragma once

// Plain column-oriented result tables, written as CSV.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace usim {

/// Empty cell (missing data), integer, real or text.
using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;

inline Cell null_cell() { return Cell{std::monostate{}}; }
Cell cell(std::optional<double> value);

/// Shortest form of `value` with 17 significant digits ("%.17g" semantics).
std::string format_real(double value);

class Table {
 public:
  Table() = default;
  explicit Table(std::vector<std::string> columns);

  const std::vector<std::string>& columns() const noexcept { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }

  /// Throws InvalidData when the row width differs from the header.
  void add_row(std::vector<Cell> row);
  std::size_t column_index(const std::string& name) const;
  const Cell& at(std::size_t row, const std::string& column) const;
  /// Numeric column values (integers widened); null for empty or text cells.
  std::vector<std::optional<double>> numeric_column(const std::string& name) const;

  /// RFC 4180 style: header row, "\n" line ends, quoted text when needed.
  void write_csv(std::ostream& out) const;
  std::string to_csv() const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

}  // namespace usim
