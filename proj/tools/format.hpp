#pragma once

// Text output for the command-line front end: every floating-point value is
// written with 17 significant digits so that files round-trip exactly.

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace unreduce::cli {

using json = nlohmann::ordered_json;

/// Failure with a machine-parsable code and the process exit status it maps to.
class CliError : public std::runtime_error {
 public:
  CliError(std::string code, const std::string& message, int exit_code = 1)
      : std::runtime_error(message), code_(std::move(code)), exit_code_(exit_code) {}

  const std::string& code() const noexcept { return code_; }
  int exit_code() const noexcept { return exit_code_; }

 private:
  std::string code_;
  int exit_code_;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& context) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw CliError("E_PARSE", context + ": '" + std::string(text) + "' is not a number");
  }
  return v;
}

namespace detail {

inline void write_string(std::ostream& out, const std::string& s) { out << json(s).dump(); }

inline void write_json(std::ostream& out, const json& v, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (v.type()) {
    case json::value_t::object: {
      if (v.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      bool first = true;
      for (const auto& [key, item] : v.items()) {
        if (!first) out << ",\n";
        first = false;
        out << pad;
        write_string(out, key);
        out << ": ";
        write_json(out, item, indent + 2);
      }
      out << '\n' << close << '}';
      return;
    }
    case json::value_t::array: {
      // Arrays of scalars stay on one line.
      bool scalar = true;
      for (const auto& item : v) scalar = scalar && !item.is_structured();
      if (v.empty()) {
        out << "[]";
      } else if (scalar) {
        out << '[';
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) out << ", ";
          write_json(out, v[i], indent);
        }
        out << ']';
      } else {
        out << "[\n";
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) out << ",\n";
          out << pad;
          write_json(out, v[i], indent + 2);
        }
        out << '\n' << close << ']';
      }
      return;
    }
    case json::value_t::number_float: {
      const double d = v.get<double>();
      if (std::isfinite(d)) {
        out << format_double(d);
      } else {
        out << "null";
      }
      return;
    }
    default:
      out << v.dump();
  }
}

}  // namespace detail

/// Pretty-printed JSON with 17-digit floats and keys in insertion order.
inline std::string to_text(const json& v) {
  std::ostringstream out;
  detail::write_json(out, v, 0);
  out << '\n';
  return out.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError("E_IO", "cannot write " + path);
  out << text;
  if (!out) throw CliError("E_IO", "failed writing " + path);
}

/// Rows of a numeric table with a header line.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string table_text(const Table& t) {
  std::string out;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j) out += ',';
    out += t.header[j];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += format_double(row[j]);
    }
    out += '\n';
  }
  return out;
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("E_IO", "cannot open " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw CliError("E_PARSE", path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_csv(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != t.header.size()) {
      throw CliError("E_PARSE", path + ":" + std::to_string(lineno) + ": expected " +
                                    std::to_string(t.header.size()) + " columns, found " +
                                    std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, path + ":" + std::to_string(lineno)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace unreduce::cli
