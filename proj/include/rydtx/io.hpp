#pragma once

// CSV and JSON serialisation of data sets, histograms and decompositions.
// CSV is UTF-8 with a header row and '.' decimals; numbers are written in
// shortest round-trip form so files re-read without loss.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "rydtx/dataset.hpp"
#include "rydtx/detection.hpp"
#include "rydtx/histogram.hpp"

namespace rydtx::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw FormatError("cannot format number");
  return std::string(buf, end);
}

inline std::string format_number(std::int64_t v) { return std::to_string(v); }
inline std::string format_number(std::uint64_t v) { return std::to_string(v); }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("not an integer: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Rows of a CSV with the given header; blank lines are skipped.
inline std::vector<std::vector<std::string_view>> parse_csv(std::string_view text,
                                                            const std::vector<std::string>& header,
                                                            std::vector<std::string>& storage) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  storage.clear();
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find('\n', start);
    const auto line = trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!line.empty()) storage.emplace_back(line);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (storage.empty()) throw FormatError("missing CSV header");
  const auto head = split(storage.front());
  if (head.size() != header.size()) throw FormatError("unexpected CSV header: " + storage.front());
  for (std::size_t i = 0; i < header.size(); ++i)
    if (head[i] != header[i]) throw FormatError("unexpected CSV column '" + std::string(head[i]) + "'");
  std::vector<std::vector<std::string_view>> rows;
  for (std::size_t i = 1; i < storage.size(); ++i) {
    auto cells = split(storage[i]);
    if (cells.size() != header.size())
      throw FormatError("row " + std::to_string(i) + ": expected " + std::to_string(header.size()) + " fields");
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- DataSet ------------------------------------------------------------------

inline std::string dataset_to_csv(const DataSet& d, const std::vector<std::string>& header = {"x", "y", "sigma"}) {
  std::string out = header[0] + "," + header[1] + "," + header[2] + "\n";
  for (const auto& p : d.points)
    out += format_number(p.x) + "," + format_number(p.y) + "," + format_number(p.sigma) + "\n";
  return out;
}

inline DataSet dataset_from_csv(std::string_view text, const std::vector<std::string>& header = {"x", "y", "sigma"}) {
  std::vector<std::string> storage;
  DataSet d;
  for (const auto& row : parse_csv(text, header, storage))
    d.points.push_back({parse_double(row[0]), parse_double(row[1]), parse_double(row[2])});
  return d;
}

inline nlohmann::ordered_json dataset_to_json(const DataSet& d, const std::vector<std::string>& header = {"x", "y", "sigma"}) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& p : d.points) {
    nlohmann::ordered_json r;
    r[header[0]] = p.x;
    r[header[1]] = p.y;
    r[header[2]] = p.sigma;
    rows.push_back(r);
  }
  nlohmann::ordered_json j;
  j["label"] = d.label;
  j["points"] = rows;
  return j;
}

// --- CountHistogram --------------------------------------------------------------

inline std::string histogram_to_csv(const CountHistogram& h) {
  std::string out = "events,runs\n";
  const auto bins = h.bins();
  for (std::size_t i = 0; i < bins.size(); ++i)
    if (bins[i] != 0) out += std::to_string(i) + "," + std::to_string(bins[i]) + "\n";
  return out;
}

inline CountHistogram histogram_from_csv(std::string_view text) {
  std::vector<std::string> storage;
  CountHistogram h;
  for (const auto& row : parse_csv(text, {"events", "runs"}, storage)) {
    const auto runs = parse_int(row[1]);
    if (runs < 0) throw FormatError("negative run count");
    h.add(parse_int(row[0]), static_cast<std::uint64_t>(runs));
  }
  return h;
}

/// Object map from event count (as a string key) to runs.
inline nlohmann::ordered_json histogram_to_json(const CountHistogram& h) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  const auto bins = h.bins();
  for (std::size_t i = 0; i < bins.size(); ++i)
    if (bins[i] != 0) j[std::to_string(i)] = bins[i];
  return j;
}

inline CountHistogram histogram_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("histogram JSON must be an object");
  CountHistogram h;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number_integer() || value.get<std::int64_t>() < 0) throw FormatError("run counts must be non-negative integers");
    h.add(parse_int(key), value.get<std::uint64_t>());
  }
  return h;
}

// --- Decomposition -------------------------------------------------------------------

inline std::string decomposition_to_csv(const Decomposition& d) {
  std::string out = "events,observed,model_total,model_gated,model_ungated\n";
  for (const auto& r : d.rows)
    out += std::to_string(r.events) + "," + std::to_string(r.observed) + "," + format_number(r.model_total) + "," +
           format_number(r.model_gated) + "," + format_number(r.model_ungated) + "\n";
  return out;
}

inline Decomposition decomposition_from_csv(std::string_view text) {
  std::vector<std::string> storage;
  Decomposition d;
  for (const auto& row :
       parse_csv(text, {"events", "observed", "model_total", "model_gated", "model_ungated"}, storage)) {
    DecompositionRow r;
    r.events = parse_int(row[0]);
    r.observed = static_cast<std::uint64_t>(parse_int(row[1]));
    r.model_total = parse_double(row[2]);
    r.model_gated = parse_double(row[3]);
    r.model_ungated = parse_double(row[4]);
    r.residual = static_cast<double>(r.observed) - r.model_total;
    d.rows.push_back(r);
  }
  return d;
}

inline nlohmann::ordered_json decomposition_to_json(const Decomposition& d) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : d.rows)
    rows.push_back({{"events", r.events},
                    {"observed", r.observed},
                    {"model_total", r.model_total},
                    {"model_gated", r.model_gated},
                    {"model_ungated", r.model_ungated}});
  return rows;
}

/// Generic table: header plus rows of numbers.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::string table_to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
  out += "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_number(r[i]);
    out += "\n";
  }
  return out;
}

inline Table table_from_csv(std::string_view text, const std::vector<std::string>& header) {
  std::vector<std::string> storage;
  Table t;
  t.header = header;
  for (const auto& row : parse_csv(text, header, storage)) {
    std::vector<double> r;
    for (const auto& c : row) r.push_back(parse_double(c));
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline nlohmann::ordered_json table_to_json(const Table& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json o;
    for (std::size_t i = 0; i < t.header.size(); ++i) o[t.header[i]] = r[i];
    rows.push_back(o);
  }
  return rows;
}

}  // namespace rydtx::io
