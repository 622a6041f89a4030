#pragma once

// Machine-readable run reports: a schema-stable JSON document per run, plus
// CSV for sweep tables. Serialization is deterministic; identical inputs and
// seed produce identical bytes. Wall-clock timings are opt-in since they
// would break that guarantee (the cut-scaling sweep CSV keeps its seconds
// column by contract).

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wigner/version.hpp"

namespace wigner::report {

struct AssertionResult {
  std::string name;
  double expected = 0.0;
  double actual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct SweepTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct ReportDocument {
  std::string scenario;
  nlohmann::json parameters = nlohmann::json::object();
  nlohmann::json tables = nlohmann::json::object();
  nlohmann::json derived_quantities = nlohmann::json::object();
  std::vector<AssertionResult> assertions;
  std::uint64_t seed = 42;
  std::optional<SweepTable> sweep;
  std::map<std::string, double> timings;
  bool include_timings = false;

  bool all_passed() const {
    for (const auto& a : assertions) {
      if (!a.passed) return false;
    }
    return true;
  }
};

enum class Format { Json, Csv };

inline std::string format_17g(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline nlohmann::json to_json(const ReportDocument& doc) {
  nlohmann::json j;
  j["schema"] = kReportSchema;
  j["version"] = kVersion;
  j["scenario"] = doc.scenario;
  j["parameters"] = doc.parameters;
  j["tables"] = doc.tables;
  j["derived_quantities"] = doc.derived_quantities;
  j["seed"] = doc.seed;
  nlohmann::json asserts = nlohmann::json::array();
  for (const auto& a : doc.assertions) {
    asserts.push_back({{"name", a.name},
                       {"expected", a.expected},
                       {"actual", a.actual},
                       {"tolerance", a.tolerance},
                       {"passed", a.passed}});
  }
  j["assertions"] = asserts;
  j["all_passed"] = doc.all_passed();
  if (doc.sweep) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : doc.sweep->rows) rows.push_back(row);
    j["tables"]["sweep"] = {{"columns", doc.sweep->columns}, {"rows", rows}};
  }
  if (doc.include_timings) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : doc.timings) t[k] = v;
    j["timings"] = t;
  }
  return j;
}

inline std::string emit_report(const ReportDocument& doc, Format format) {
  if (format == Format::Json) {
    return to_json(doc).dump(2) + "\n";
  }
  if (!doc.sweep) {
    throw std::invalid_argument("csv output requires a sweep table; this report has none");
  }
  std::string out;
  for (std::size_t c = 0; c < doc.sweep->columns.size(); ++c) {
    if (c) out += ",";
    out += doc.sweep->columns[c];
  }
  out += "\n";
  for (const auto& row : doc.sweep->rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ",";
      out += format_17g(row[c]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace wigner::report
