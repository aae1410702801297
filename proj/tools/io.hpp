#pragma once

#include "lowrank/core.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace lowrank::cli {

/// Raised for unreadable input or unwritable output.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  /// Data rows, each with header.size() fields.
  std::vector<std::vector<std::string>> rows;
};

/// RFC-4180 reader: quoted fields, doubled quotes, CRLF or LF line ends.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

std::string csv_escape(const std::string& field);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

struct NumericTable {
  std::vector<std::string> header;
  DataMatrix data;
  /// Original tokens, row-major, kept so observed cells round-trip verbatim.
  std::vector<std::vector<std::string>> tokens;
};

/// Every field must be a finite number or `na_token`; errors name the
/// 1-based data row and column.
NumericTable to_numeric(const CsvTable& table, const std::string& na_token);
NumericTable read_numeric(const std::string& path, const std::string& na_token);

std::vector<std::string> default_header(Index cols, const std::string& prefix = "V");

void write_text(const std::string& path, const std::string& text);

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& header);

/// Observed cells are written with their input tokens, the rest formatted.
std::string completed_csv(const NumericTable& input, const Matrix& completed);

/// {"columns": [...], "rows": [[...], ...]}
nlohmann::ordered_json matrix_json(const Matrix& m, const std::vector<std::string>& header);

/// Writes `<dir>/<stem>.csv` or `<dir>/<stem>.json` depending on `format`.
void write_matrix(const std::string& dir, const std::string& stem, const Matrix& m,
                  const std::vector<std::string>& header, const std::string& format);

void write_json(const std::string& path, const nlohmann::ordered_json& value);

void ensure_directory(const std::string& dir);

}  // namespace lowrank::cli
