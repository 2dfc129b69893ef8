/* Copyright 2026 The gradsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "gradsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gradsim/error.hpp"

namespace gradsim::metrics {
namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_row(const Record& r) {
  std::string s;
  s += std::to_string(r.step);
  s += ',' + format_double(r.sim_time);
  s += ',' + format_double(r.loss);
  s += ',' + format_double(r.grad_norm);
  s += ',' + format_double(r.staleness_mean);
  s += ',' + format_double(r.effective_lr);
  s += ',' + std::to_string(r.effective_batch);
  s += ',' + std::to_string(r.bytes_sent);
  s += ',' + format_double(r.compression_ratio);
  s += ',' + std::to_string(r.skipped);
  return s;
}

void write_csv(std::ostream& os, const std::vector<Record>& records) {
  os << kCsvHeader << '\n';
  for (const auto& r : records) os << csv_row(r) << '\n';
}

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw ConfigError("tolspec.column", "unknown metrics column '" + name + "'");
}

Table read_csv(std::istream& is) {
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("metrics", "empty metrics file");
  t.columns = split(trim(line), ',');
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != t.columns.size()) {
      throw ConfigError("metrics", "row with " + std::to_string(cells.size()) +
                                       " cells under a " +
                                       std::to_string(t.columns.size()) + "-column header");
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

Table read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("metrics", "cannot open '" + path + "'");
  return read_csv(in);
}

void Summary::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void Summary::set(const std::string& key, double value) { set(key, format_double(value)); }
void Summary::set(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}
void Summary::set(const std::string& key, std::int64_t value) {
  set(key, std::to_string(value));
}

const std::string* Summary::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

void Summary::write(std::ostream& os) const {
  os << "[summary]\n";
  for (const auto& [k, v] : entries_) os << k << '=' << v << '\n';
  os << "[end]\n";
}

std::string Summary::to_string() const {
  std::ostringstream os;
  write(os);
  return os.str();
}

Summary Summary::parse(std::istream& is) {
  Summary s;
  std::string line;
  bool inside = false;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line == "[summary]") {
      inside = true;
    } else if (line == "[end]") {
      break;
    } else if (inside && !line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("summary", "line without '=': " + line);
      s.set(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  return s;
}

const char* to_string(Relation r) noexcept {
  switch (r) {
    case Relation::kEqual: return "equal";
    case Relation::kWithinRelTol: return "within-rel-tol";
    case Relation::kStrictlyLess: return "strictly-less";
  }
  return "?";
}

std::vector<Check> parse_tolspec(std::istream& is) {
  std::vector<Check> checks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto field = "tolspec:" + std::to_string(lineno);
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> words;
    for (std::string w; ls >> w;) words.push_back(w);
    if (words.size() < 2) throw ConfigError(field, "expected '<column> <relation>'");
    Check c;
    c.column = words[0];
    if (words[1] == "equal") {
      c.relation = Relation::kEqual;
    } else if (words[1] == "within-rel-tol") {
      c.relation = Relation::kWithinRelTol;
    } else if (words[1] == "strictly-less") {
      c.relation = Relation::kStrictlyLess;
    } else {
      throw ConfigError(field, "unknown relation '" + words[1] + "'");
    }
    std::size_t next = 2;
    if (c.relation == Relation::kWithinRelTol) {
      if (words.size() < 3 || !parse_number(words[2], c.tolerance) || !(c.tolerance >= 0.0)) {
        throw ConfigError(field, "within-rel-tol needs a nonnegative tolerance");
      }
      next = 3;
    }
    if (next < words.size()) {
      if (words[next] == "final") {
        c.scope = Scope::kFinal;
      } else if (words[next] == "all") {
        c.scope = Scope::kAll;
      } else {
        throw ConfigError(field, "unknown scope '" + words[next] + "'");
      }
      ++next;
    }
    if (next != words.size()) throw ConfigError(field, "trailing words");
    checks.push_back(c);
  }
  return checks;
}

std::vector<Check> parse_tolspec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("tolspec", "cannot open '" + path + "'");
  return parse_tolspec(in);
}

bool CompareReport::pass() const noexcept {
  for (const auto& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

void CompareReport::write(std::ostream& os) const {
  for (const auto& r : results) {
    os << (r.pass ? "PASS " : "FAIL ") << r.check.column << ' '
       << to_string(r.check.relation);
    if (r.check.relation == Relation::kWithinRelTol) os << ' ' << format_double(r.check.tolerance);
    os << (r.check.scope == Scope::kFinal ? " final" : " all");
    if (!r.detail.empty()) os << ": " << r.detail;
    os << '\n';
  }
}

CompareReport compare_runs(const Table& a, const Table& b,
                           const std::vector<Check>& checks) {
  if (a.columns != b.columns) throw ConfigError("metrics", "runs do not share a header");
  CompareReport report;
  for (const auto& check : checks) {
    CheckResult res{check, true, {}};
    const auto col = a.column(check.column);
    std::vector<std::pair<std::size_t, std::size_t>> rows;
    if (check.scope == Scope::kFinal) {
      if (a.rows.empty() || b.rows.empty()) {
        res.pass = false;
        res.detail = "no rows";
      } else {
        rows.emplace_back(a.rows.size() - 1, b.rows.size() - 1);
      }
    } else if (a.rows.size() != b.rows.size()) {
      res.pass = false;
      res.detail = "row counts differ (" + std::to_string(a.rows.size()) + " vs " +
                   std::to_string(b.rows.size()) + ")";
    } else {
      for (std::size_t i = 0; i < a.rows.size(); ++i) rows.emplace_back(i, i);
    }
    for (auto [ia, ib] : rows) {
      const auto& ca = a.rows[ia][col];
      const auto& cb = b.rows[ib][col];
      bool ok = false;
      if (check.relation == Relation::kEqual) {
        ok = ca == cb;
      } else {
        double x = 0.0;
        double y = 0.0;
        if (parse_number(ca, x) && parse_number(cb, y)) {
          if (check.relation == Relation::kStrictlyLess) {
            ok = x < y;
          } else {
            ok = std::fabs(x - y) <= check.tolerance * std::max(std::fabs(x), std::fabs(y));
          }
        }
      }
      if (!ok) {
        res.pass = false;
        res.detail = "row " + std::to_string(ia + 1) + ": " + ca + " vs " + cb;
        break;
      }
    }
    report.results.push_back(std::move(res));
  }
  return report;
}

}  // namespace gradsim::metrics
