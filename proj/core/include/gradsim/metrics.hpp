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

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace gradsim::metrics {

inline constexpr const char* kCsvHeader =
    "step,sim_time,loss,grad_norm,staleness_mean,effective_lr,effective_batch,"
    "bytes_sent,compression_ratio,skipped";

struct Record {
  std::uint64_t step = 0;
  double sim_time = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double staleness_mean = 0.0;
  double effective_lr = 0.0;
  std::uint64_t effective_batch = 0;
  std::uint64_t bytes_sent = 0;  // cumulative
  double compression_ratio = 1.0;
  std::uint64_t skipped = 0;     // cumulative
};

// Doubles are printed with 17 significant digits so a CSV round trip is
// exact and reruns compare byte for byte.
std::string format_double(double v);
std::string csv_row(const Record& r);
void write_csv(std::ostream& os, const std::vector<Record>& records);

// Parsed CSV: header names plus raw cells.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  // Throws ConfigError for an unknown column.
  std::size_t column(const std::string& name) const;
};

Table read_csv(std::istream& is);
Table read_csv_file(const std::string& path);

// Ordered key=value lines framed by `[summary]` / `[end]`.
class Summary {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

  const std::string* get(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept {
    return entries_;
  }

  void write(std::ostream& os) const;
  std::string to_string() const;
  static Summary parse(std::istream& is);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

enum class Relation : std::uint8_t { kEqual, kWithinRelTol, kStrictlyLess };
enum class Scope : std::uint8_t { kAll, kFinal };

const char* to_string(Relation r) noexcept;

struct Check {
  std::string column;
  Relation relation = Relation::kEqual;
  double tolerance = 0.0;
  Scope scope = Scope::kAll;
};

// One check per non-blank, non-# line:
//   <column> <equal|within-rel-tol|strictly-less> [tol] [final|all]
// `within-rel-tol` requires the tolerance; the scope defaults to all rows.
std::vector<Check> parse_tolspec(std::istream& is);
std::vector<Check> parse_tolspec_file(const std::string& path);

struct CheckResult {
  Check check;
  bool pass = false;
  std::string detail;
};

struct CompareReport {
  std::vector<CheckResult> results;
  bool pass() const noexcept;
  void write(std::ostream& os) const;
};

// Relations read "a <relation> b". Throws ConfigError when the two tables
// do not share a header.
CompareReport compare_runs(const Table& a, const Table& b,
                           const std::vector<Check>& checks);

}  // namespace gradsim::metrics
