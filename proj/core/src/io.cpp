#include "usim/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "usim/table.hpp"

namespace usim {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'U', 'S', 'I', 'M', 'M', 'A', 'T', '0'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      out.push_back(s[i]);
      if (s[i] == '"' && i + 2 < s.size() && s[i + 1] == '"') ++i;
    }
    return out;
  }
  return std::string(s);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == ',' && !quoted) {
      cells.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  cells.push_back(trim(line.substr(start)));
  return cells;
}

// Case-insensitive match on the spellings from_chars treats as non-finite.
bool looks_non_finite(std::string_view s) {
  std::string low;
  for (char c : s) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (!low.empty() && (low[0] == '+' || low[0] == '-')) low.erase(0, 1);
  return low == "nan" || low == "inf" || low == "infinity" || low.rfind("nan(", 0) == 0;
}

void read_labels_file(const fs::path& path, Labels& labels) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  long long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    int value = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad label '" +
                           std::string(t) + "'",
                       lineno);
    }
    labels.push_back(value);
  }
}

fs::path labels_path(const fs::path& path) {
  fs::path p = path;
  p += ".labels";
  return p;
}

}  // namespace

MatrixFormat format_for_path(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".bin" || ext == ".f64" || ext == ".usim") return MatrixFormat::RawF64;
  return MatrixFormat::Csv;
}

MatrixFile MatrixFile::at(const fs::path& path) {
  MatrixFile f;
  f.path = path;
  f.format = format_for_path(path);
  f.name = path.stem().string();
  return f;
}

std::string encode_raw(const Matrix& m) {
  if (m.rows() > 0xffffffffLL || m.cols() > 0xffffffffLL) {
    throw Error(ErrorCode::InvalidData, "matrix too large for a u32 header");
  }
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.reserve(kHeaderBytes + 8 * static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
  }
  return out;
}

Matrix decode_raw(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw ParseError("binary matrix shorter than its 16-byte header",
                     static_cast<long long>(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ParseError("bad magic, expected USIMMAT0", 0);
  }
  const auto n = static_cast<Index>(get_le(bytes, 8, 4));
  const auto d = static_cast<Index>(get_le(bytes, 12, 4));
  const std::size_t payload = 8 * static_cast<std::size_t>(n) * static_cast<std::size_t>(d);
  if (bytes.size() - kHeaderBytes != payload) {
    throw ParseError("payload is " + std::to_string(bytes.size() - kHeaderBytes) +
                         " bytes, header declares " + std::to_string(payload),
                     static_cast<long long>(kHeaderBytes + std::min(payload, bytes.size() - kHeaderBytes)));
  }
  Matrix m(n, d);
  std::size_t off = kHeaderBytes;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j, off += 8) {
      const double v = std::bit_cast<double>(get_le(bytes, off, 8));
      if (!std::isfinite(v)) {
        throw NonFiniteValue("non-finite value at row " + std::to_string(i) + ", column " +
                                 std::to_string(j),
                             i, j);
      }
      m(i, j) = v;
    }
  }
  return m;
}

RepresentationSet parse_csv(std::string_view text, const std::optional<std::string>& label_column,
                            std::string name) {
  std::vector<std::string_view> lines;
  std::vector<long long> line_numbers;
  {
    std::size_t start = 0;
    long long lineno = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      ++lineno;
      const std::string_view line = trim(text.substr(start, end - start));
      if (!line.empty()) {
        lines.push_back(line);
        line_numbers.push_back(lineno);
      }
      start = end + 1;
    }
  }
  if (lines.empty()) throw ParseError("empty CSV, expected a header row", 1);

  std::vector<std::string> header;
  for (auto c : split_commas(lines[0])) header.push_back(unquote(c));
  const std::size_t width = header.size();

  std::optional<std::size_t> label_idx;
  if (label_column) {
    for (std::size_t j = 0; j < width; ++j) {
      if (header[j] == *label_column) label_idx = j;
    }
    if (!label_idx) {
      std::size_t idx = 0;
      const auto& s = *label_column;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), idx);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || idx >= width) {
        throw Error(ErrorCode::MissingLabels, "label column '" + s + "' not found in header");
      }
      label_idx = idx;
    }
  }
  const Index d = static_cast<Index>(width) - (label_idx ? 1 : 0);
  if (d < 1) throw ParseError("CSV has no data columns", line_numbers[0]);

  const Index n = static_cast<Index>(lines.size()) - 1;
  Matrix m(n, d);
  Labels labels;
  for (Index i = 0; i < n; ++i) {
    const long long lineno = line_numbers[static_cast<std::size_t>(i) + 1];
    const auto cells = split_commas(lines[static_cast<std::size_t>(i) + 1]);
    if (cells.size() != width) {
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                           " cells, found " + std::to_string(cells.size()),
                       lineno);
    }
    Index j = 0;
    for (std::size_t c = 0; c < width; ++c) {
      const std::string_view cellv = cells[c];
      if (label_idx && c == *label_idx) {
        int y = 0;
        const auto res = std::from_chars(cellv.data(), cellv.data() + cellv.size(), y);
        if (res.ec != std::errc{} || res.ptr != cellv.data() + cellv.size()) {
          throw ParseError("line " + std::to_string(lineno) + ": bad label '" +
                               std::string(cellv) + "'",
                           lineno);
        }
        labels.push_back(y);
        continue;
      }
      if (looks_non_finite(cellv)) {
        throw NonFiniteValue("line " + std::to_string(lineno) + ": non-finite value '" +
                                 std::string(cellv) + "' at row " + std::to_string(i) +
                                 ", column " + std::to_string(j),
                             i, j);
      }
      const char* first = cellv.data();
      if (!cellv.empty() && cellv.front() == '+') ++first;
      double v = 0.0;
      const auto res = std::from_chars(first, cellv.data() + cellv.size(), v);
      if (res.ec == std::errc::result_out_of_range) {
        throw NonFiniteValue("line " + std::to_string(lineno) + ": value out of range at row " +
                                 std::to_string(i) + ", column " + std::to_string(j),
                             i, j);
      }
      if (res.ec != std::errc{} || res.ptr != cellv.data() + cellv.size() || cellv.empty()) {
        throw ParseError("line " + std::to_string(lineno) + ": cannot parse '" +
                             std::string(cellv) + "' as a number",
                         lineno);
      }
      m(i, j++) = v;
    }
  }
  if (label_idx) return RepresentationSet(std::move(m), std::move(labels), std::move(name));
  return RepresentationSet(std::move(m), std::move(name));
}

std::string matrix_to_csv(const RepresentationSet& r) {
  std::ostringstream out;
  for (Index j = 0; j < r.features(); ++j) out << (j ? "," : "") << 'f' << j;
  if (r.has_labels()) out << ",label";
  out << '\n';
  for (Index i = 0; i < r.samples(); ++i) {
    for (Index j = 0; j < r.features(); ++j) {
      out << (j ? "," : "") << format_real(r.data()(i, j));
    }
    if (r.has_labels()) out << ',' << r.labels()[static_cast<std::size_t>(i)];
    out << '\n';
  }
  return out.str();
}

RepresentationSet load_matrix(const MatrixFile& file) {
  std::string name = file.name.empty() ? file.path.stem().string() : file.name;
  const std::string bytes = read_file(file.path);
  std::optional<RepresentationSet> r;
  if (file.format == MatrixFormat::Csv) {
    r = parse_csv(bytes, file.label_column, name);
  } else {
    Matrix m = decode_raw(bytes);
    const fs::path lp = labels_path(file.path);
    if (fs::exists(lp)) {
      Labels labels;
      read_labels_file(lp, labels);
      if (static_cast<Index>(labels.size()) != m.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "labels file has " + std::to_string(labels.size()) +
                                                  " entries for " + std::to_string(m.rows()) +
                                                  " rows");
      }
      r.emplace(std::move(m), std::move(labels), name);
    } else {
      r.emplace(std::move(m), name);
    }
  }
  if (file.shape && (file.shape->first != r->samples() || file.shape->second != r->features())) {
    throw Error(ErrorCode::ShapeMismatch,
                "declared shape " + std::to_string(file.shape->first) + "x" +
                    std::to_string(file.shape->second) + ", file holds " +
                    std::to_string(r->samples()) + "x" + std::to_string(r->features()));
  }
  return std::move(*r);
}

void save_matrix(const RepresentationSet& r, const fs::path& path, MatrixFormat format) {
  if (format == MatrixFormat::Csv) {
    write_file_atomic(path, matrix_to_csv(r));
    return;
  }
  write_file_atomic(path, encode_raw(r.data()));
  if (r.has_labels()) {
    std::string text;
    for (int y : r.labels()) text += std::to_string(y) + "\n";
    write_file_atomic(labels_path(path), text);
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path.string());
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot move output into place at " + path.string());
  }
}

nlohmann::json report_to_json(const SimilarityReport& report) {
  using nlohmann::json;
  auto opt = [](std::optional<double> v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["pair"] = {report.pair().first, report.pair().second};
  const auto& fam = report.family();
  j["family"] = {{"kind", std::string(to_string(fam.kind))},
                 {"ortho_penalty_weight", fam.ortho_penalty_weight},
                 {"sv_floor", fam.sv_floor},
                 {"sv_floor_weight", fam.sv_floor_weight}};
  j["rep_forward"] = report.rep_forward();
  j["rep_backward"] = report.rep_backward();
  j["rep_symmetric"] = report.rep_symmetric();
  j["func_forward"] = opt(report.func_forward());
  j["func_backward"] = opt(report.func_backward());
  j["func_symmetric"] = opt(report.func_symmetric());
  const auto& f = report.functional();
  j["func_symmetric_clipped"] = f ? json(f->symmetric_clipped()) : json(nullptr);
  const auto& info = report.usable_cond_info();
  j["usable_cond_info_forward"] = info ? json(info->forward) : json(nullptr);
  j["usable_cond_info_backward"] = info ? json(info->backward) : json(nullptr);
  j["baselines"] = json::object();
  for (const auto& [k, v] : report.baselines()) j["baselines"][k] = v;
  return j;
}

}  // namespace usim
