#include "usim/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>

#include "usim/error.hpp"

namespace usim {

Cell cell(std::optional<double> value) {
  if (!value) return null_cell();
  return Cell{*value};
}

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Table::Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns_.size()) {
    throw Error(ErrorCode::InvalidData, "row has " + std::to_string(row.size()) +
                                            " cells, table has " +
                                            std::to_string(columns_.size()) + " columns");
  }
  rows_.push_back(std::move(row));
}

std::size_t Table::column_index(const std::string& name) const {
  const auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end()) throw Error(ErrorCode::InvalidData, "no column named " + name);
  return static_cast<std::size_t>(it - columns_.begin());
}

const Cell& Table::at(std::size_t row, const std::string& column) const {
  return rows_.at(row).at(column_index(column));
}

std::vector<std::optional<double>> Table::numeric_column(const std::string& name) const {
  const std::size_t j = column_index(name);
  std::vector<std::optional<double>> out;
  out.reserve(rows_.size());
  for (const auto& row : rows_) {
    const Cell& c = row[j];
    if (const auto* d = std::get_if<double>(&c)) {
      out.emplace_back(*d);
    } else if (const auto* i = std::get_if<std::int64_t>(&c)) {
      out.emplace_back(static_cast<double>(*i));
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

namespace {

void write_text(std::ostream& out, const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) {
    out << s;
    return;
  }
  out << '"';
  for (char ch : s) {
    if (ch == '"') out << '"';
    out << ch;
  }
  out << '"';
}

struct CellWriter {
  std::ostream& out;
  void operator()(std::monostate) const {}
  void operator()(std::int64_t v) const { out << v; }
  void operator()(double v) const { out << format_real(v); }
  void operator()(const std::string& s) const { write_text(out, s); }
};

}  // namespace

void Table::write_csv(std::ostream& out) const {
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (j) out << ',';
    write_text(out, columns_[j]);
  }
  out << '\n';
  for (const auto& row : rows_) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      std::visit(CellWriter{out}, row[j]);
    }
    out << '\n';
  }
}

std::string Table::to_csv() const {
  std::ostringstream os;
  write_csv(os);
  return os.str();
}

}  // namespace usim
