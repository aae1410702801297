#include "io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lowrank::cli {

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_started || !field.empty())
          throw InputError("CSV line " + std::to_string(line) + ": stray quote inside a field");
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (quoted) throw InputError("CSV: unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();

  if (records.empty()) throw InputError("CSV: the file is empty (a header row is required)");
  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size())
      throw InputError("CSV data row " + std::to_string(r) + " has " +
                       std::to_string(records[r].size()) + " fields, the header has " +
                       std::to_string(table.header.size()));
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

bool parse_number(const std::string& token, double& out) {
  std::size_t begin = 0;
  std::size_t end = token.size();
  while (begin < end && (token[begin] == ' ' || token[begin] == '\t')) ++begin;
  while (end > begin && (token[end - 1] == ' ' || token[end - 1] == '\t')) --end;
  if (begin == end) return false;
  const char* first = token.data() + begin;
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, token.data() + end, out);
  return res.ec == std::errc() && res.ptr == token.data() + end && std::isfinite(out);
}

}  // namespace

NumericTable to_numeric(const CsvTable& table, const std::string& na_token) {
  const auto n = static_cast<Index>(table.rows.size());
  const auto p = static_cast<Index>(table.header.size());
  if (n < 2 || p < 2)
    throw InputError("input must have at least 2 data rows and 2 columns, got " +
                     std::to_string(n) + "x" + std::to_string(p));
  Matrix values(n, p);
  Mask observed(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) {
      const std::string& token = table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (token == na_token) {
        observed(i, j) = false;
        values(i, j) = 0.0;
        continue;
      }
      double v = 0.0;
      if (!parse_number(token, v))
        throw InputError("cannot parse '" + token + "' as a number at data row " +
                         std::to_string(i + 1) + ", column " + std::to_string(j + 1) + " (" +
                         table.header[static_cast<std::size_t>(j)] + ")");
      observed(i, j) = true;
      values(i, j) = v;
    }
  return {table.header, DataMatrix(std::move(values), std::move(observed)), table.rows};
}

NumericTable read_numeric(const std::string& path, const std::string& na_token) {
  return to_numeric(read_csv(path), na_token);
}

std::vector<std::string> default_header(Index cols, const std::string& prefix) {
  std::vector<std::string> out;
  for (Index j = 0; j < cols; ++j) out.push_back(prefix + std::to_string(j + 1));
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write output file '" + path + "'");
  out << text;
  if (!out) throw IoError("failed while writing '" + path + "'");
}

namespace {

void append_header(std::string& out, const std::vector<std::string>& header) {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out.push_back(',');
    out += csv_escape(header[j]);
  }
  out.push_back('\n');
}

}  // namespace

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& header) {
  require(static_cast<Index>(header.size()) == m.cols(), "matrix_csv: header size mismatch");
  std::string out;
  append_header(out, header);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      out += format_double(m(i, j));
    }
    out.push_back('\n');
  }
  return out;
}

std::string completed_csv(const NumericTable& input, const Matrix& completed) {
  std::string out;
  append_header(out, input.header);
  for (Index i = 0; i < completed.rows(); ++i) {
    for (Index j = 0; j < completed.cols(); ++j) {
      if (j) out.push_back(',');
      if (input.data.is_observed(i, j))
        out += csv_escape(input.tokens[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
      else
        out += format_double(completed(i, j));
    }
    out.push_back('\n');
  }
  return out;
}

nlohmann::ordered_json matrix_json(const Matrix& m, const std::vector<std::string>& header) {
  nlohmann::ordered_json out;
  out["columns"] = header;
  auto rows = nlohmann::ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  out["rows"] = std::move(rows);
  return out;
}

void write_json(const std::string& path, const nlohmann::ordered_json& value) {
  write_text(path, value.dump(2) + "\n");
}

void write_matrix(const std::string& dir, const std::string& stem, const Matrix& m,
                  const std::vector<std::string>& header, const std::string& format) {
  const std::filesystem::path base(dir);
  if (format == "json")
    write_json((base / (stem + ".json")).string(), matrix_json(m, header));
  else
    write_text((base / (stem + ".csv")).string(), matrix_csv(m, header));
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory '" + dir + "'");
}

}  // namespace lowrank::cli
