#pragma once

// Long-format CSV ingestion: one row per (unit, time) with an outcome column
// and any number of covariate columns.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlcm/panel_data.hpp"

namespace mlcm {

struct CsvSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "outcome";
  std::vector<std::string> covariates;   // empty: every remaining column
  std::vector<std::string> categorical;  // one-hot encoded as <col>__<level>
  std::vector<std::string> ignore;
  std::string treated;                   // optional 0/1 column, constant per unit
  std::string cohort;                    // optional first-treated time, constant per unit
  std::int64_t t0_time = 0;              // time value of the last pre period
  bool drop_incomplete_units = false;
};

/// Splits one CSV record. Handles double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace detail {

inline std::optional<std::int64_t> parse_int(const std::string& s) {
  auto v = parse_double(s);
  if (!v || *v != std::floor(*v) || std::abs(*v) > 9e15) return std::nullopt;
  return static_cast<std::int64_t>(*v);
}

inline bool is_missing_token(const std::string& s) {
  std::string t;
  for (char c : s)
    if (c != ' ' && c != '\t') t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return t.empty() || t == "na" || t == "nan" || t == "never" || t == "none";
}

}  // namespace detail

inline PanelDataset parse_panel_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error("CSV input is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (col.count(header[k])) throw Error("duplicate CSV column '" + header[k] + "'");
    col[header[k]] = k;
  }
  auto require = [&](const std::string& name, const char* role) {
    auto it = col.find(name);
    if (it == col.end())
      throw Error(std::string("CSV is missing the ") + role + " column '" + name + "'");
    return it->second;
  };
  const std::size_t ucol = require(schema.unit, "unit");
  const std::size_t tcol = require(schema.time, "time");
  const std::size_t ycol = require(schema.outcome, "outcome");
  std::optional<std::size_t> trcol, cocol;
  if (!schema.treated.empty()) trcol = require(schema.treated, "treated");
  if (!schema.cohort.empty()) cocol = require(schema.cohort, "cohort");

  std::set<std::string> categorical(schema.categorical.begin(), schema.categorical.end());
  std::vector<std::string> covs = schema.covariates;
  if (covs.empty()) {
    std::set<std::string> reserved{schema.unit, schema.time, schema.outcome, schema.treated,
                                   schema.cohort};
    reserved.insert(schema.ignore.begin(), schema.ignore.end());
    for (const auto& h : header)
      if (!reserved.count(h)) covs.push_back(h);
  }
  std::vector<std::size_t> cov_cols;
  for (const auto& c : covs) cov_cols.push_back(require(c, "covariate"));
  for (const auto& c : categorical)
    if (std::find(covs.begin(), covs.end(), c) == covs.end())
      throw Error("categorical column '" + c + "' is not among the covariates");

  struct Record {
    std::size_t unit;
    std::int64_t time;
    double y;
    std::vector<std::string> raw;  // covariate cells, parsed later
    std::size_t line;
  };
  std::vector<Record> records;
  std::vector<std::string> unit_ids;
  std::unordered_map<std::string, std::size_t> unit_pos;
  std::set<std::int64_t> times;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw Error("CSV row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                  " fields, expected " + std::to_string(header.size()));
    Record r;
    r.line = lineno;
    auto [it, inserted] = unit_pos.try_emplace(cells[ucol], unit_ids.size());
    if (inserted) unit_ids.push_back(cells[ucol]);
    r.unit = it->second;
    auto t = detail::parse_int(cells[tcol]);
    if (!t)
      throw Error("CSV row " + std::to_string(lineno) + ": time value '" + cells[tcol] +
                  "' is not an integer");
    r.time = *t;
    auto y = parse_double(cells[ycol]);
    if (!y)
      throw Error("CSV row " + std::to_string(lineno) + ": outcome value '" + cells[ycol] +
                  "' is not numeric");
    r.y = *y;
    for (std::size_t c : cov_cols) r.raw.push_back(cells[c]);
    if (trcol) r.raw.push_back(cells[*trcol]);
    if (cocol) r.raw.push_back(cells[*cocol]);
    times.insert(r.time);
    records.push_back(std::move(r));
  }
  if (records.empty()) throw Error("CSV has no data rows");

  std::vector<std::int64_t> time_points(times.begin(), times.end());
  std::map<std::int64_t, std::size_t> time_pos;
  for (std::size_t k = 0; k < time_points.size(); ++k) time_pos[time_points[k]] = k;
  const std::size_t n0 = unit_ids.size(), nt = time_points.size();

  std::vector<long> cell(n0 * nt, -1);
  for (std::size_t k = 0; k < records.size(); ++k) {
    auto& slot = cell[records[k].unit * nt + time_pos[records[k].time]];
    if (slot >= 0)
      throw Error("CSV row " + std::to_string(records[k].line) + " duplicates (unit=" +
                  unit_ids[records[k].unit] + ", time=" + std::to_string(records[k].time) + ")");
    slot = static_cast<long>(k);
  }
  std::vector<std::size_t> keep;
  std::vector<std::string> missing;
  std::size_t n_missing = 0;
  for (std::size_t i = 0; i < n0; ++i) {
    bool complete = true;
    for (std::size_t t = 0; t < nt; ++t)
      if (cell[i * nt + t] < 0) {
        complete = false;
        ++n_missing;
        if (missing.size() < 20)
          missing.push_back("(unit=" + unit_ids[i] + ", time=" + std::to_string(time_points[t]) +
                            ")");
      }
    if (complete) keep.push_back(i);
  }
  if (n_missing > 0 && !schema.drop_incomplete_units) {
    std::string msg = "unbalanced panel: missing " + std::to_string(n_missing) + " cell(s):";
    for (const auto& s : missing) msg += " " + s;
    if (n_missing > missing.size()) msg += " ...";
    throw Error(msg);
  }
  if (keep.empty()) throw Error("no complete units remain after dropping incomplete ones");

  auto t0_it = time_pos.find(schema.t0_time);
  if (t0_it == time_pos.end() || t0_it->second + 1 >= nt)
    throw Error("t0 time " + std::to_string(schema.t0_time) +
                " is outside the observed range or leaves no post period (observed " +
                std::to_string(time_points.front()) + ".." + std::to_string(time_points.back()) +
                ")");

  // Covariate columns: numeric ones pass through, categorical ones expand.
  struct OutCol {
    std::size_t raw_index;
    std::optional<std::string> level;
  };
  PanelArrays a;
  std::vector<OutCol> out_cols;
  for (std::size_t c = 0; c < covs.size(); ++c) {
    if (categorical.count(covs[c])) {
      std::set<std::string> levels;
      for (std::size_t i : keep)
        for (std::size_t t = 0; t < nt; ++t)
          levels.insert(records[static_cast<std::size_t>(cell[i * nt + t])].raw[c]);
      for (const auto& lv : levels) {
        out_cols.push_back({c, lv});
        a.covariate_names.push_back(covs[c] + "__" + lv);
        a.covariate_kinds.push_back(CovariateKind::categorical);
      }
    } else {
      out_cols.push_back({c, std::nullopt});
      a.covariate_names.push_back(covs[c]);
      a.covariate_kinds.push_back(CovariateKind::binary);  // downgraded below if needed
    }
  }
  const std::size_t m = out_cols.size();
  const std::size_t n = keep.size();
  a.time_points = time_points;
  a.outcome.resize(n * nt);
  a.covariates.resize(n * nt * m);
  for (std::size_t ii = 0; ii < n; ++ii) {
    const std::size_t i = keep[ii];
    a.unit_ids.push_back(unit_ids[i]);
    for (std::size_t t = 0; t < nt; ++t) {
      const Record& r = records[static_cast<std::size_t>(cell[i * nt + t])];
      a.outcome[ii * nt + t] = r.y;
      for (std::size_t j = 0; j < m; ++j) {
        const auto& oc = out_cols[j];
        const std::string& raw = r.raw[oc.raw_index];
        double v;
        if (oc.level) {
          v = raw == *oc.level ? 1.0 : 0.0;
        } else {
          auto parsed = parse_double(raw);
          if (!parsed)
            throw Error("CSV row " + std::to_string(r.line) + ": covariate '" +
                        covs[oc.raw_index] + "' value '" + raw + "' is not numeric");
          v = *parsed;
          if (v != 0.0 && v != 1.0) a.covariate_kinds[j] = CovariateKind::continuous;
        }
        a.covariates[(ii * nt + t) * m + j] = v;
      }
    }
  }

  auto unit_constant = [&](std::size_t raw_index, const char* what) {
    std::vector<std::string> per_unit;
    for (std::size_t i : keep) {
      const std::string& first = records[static_cast<std::size_t>(cell[i * nt])].raw[raw_index];
      for (std::size_t t = 1; t < nt; ++t) {
        const Record& r = records[static_cast<std::size_t>(cell[i * nt + t])];
        if (r.raw[raw_index] != first)
          throw Error("CSV row " + std::to_string(r.line) + ": " + what +
                      " must be constant within unit " + unit_ids[i]);
      }
      per_unit.push_back(first);
    }
    return per_unit;
  };
  std::size_t extra = covs.size();
  if (trcol) {
    for (const auto& s : unit_constant(extra, "treated flag")) {
      auto v = parse_double(s);
      if (!v || (*v != 0.0 && *v != 1.0)) throw Error("treated flag must be 0 or 1, got '" + s + "'");
      a.treated.push_back(*v != 0.0 ? 1 : 0);
    }
    ++extra;
  }
  if (cocol) {
    for (const auto& s : unit_constant(extra, "cohort")) {
      if (detail::is_missing_token(s)) {
        a.cohort.push_back(std::nullopt);
      } else {
        auto v = detail::parse_int(s);
        if (!v) throw Error("cohort value '" + s + "' is not an integer time");
        a.cohort.push_back(*v);
      }
    }
  }
  return PanelDataset(std::move(a), t0_it->second + 1);
}

inline PanelDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CSV file '" + path + "'");
  return parse_panel_csv(in, schema);
}

/// Writes the panel back in long format (categoricals as their one-hot
/// columns).
inline void write_panel_csv(const PanelDataset& ds, std::ostream& out) {
  out << "unit,time,outcome";
  for (const auto& c : ds.covariate_names()) out << ',' << csv_escape(c);
  out << '\n';
  for (std::size_t i = 0; i < ds.n_units(); ++i)
    for (std::size_t t = 0; t < ds.n_periods(); ++t) {
      out << csv_escape(ds.unit_id(i)) << ',' << ds.time_point(t) << ','
          << format_double(ds.y(i, t));
      for (std::size_t j = 0; j < ds.n_covariates(); ++j) out << ',' << format_double(ds.x(i, t, j));
      out << '\n';
    }
}

}  // namespace mlcm
