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

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gradsim/config.hpp"
#include "gradsim/metrics.hpp"

namespace gradsim::harness {

struct Assertion {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ExperimentOutput {
  std::vector<metrics::Record> records;
  // Simnet trace lines; a run boundary is a `# run <label>` line.
  std::string trace;
  metrics::Summary summary;
  std::vector<Assertion> assertions;

  bool pass() const noexcept;
  std::string metrics_csv() const;
  // One PASS/FAIL line per assertion.
  void write_report(std::ostream& os) const;
};

// Runs the configured pipeline. Throws ConfigError for configurations the
// pipeline cannot honour; assertion failures are reported, not thrown.
ExperimentOutput run_experiment(const ExperimentConfig& config);

struct OutputPaths {
  std::string metrics;
  std::string trace;
  std::string summary;
};

// Relative paths in `config.output` resolve against `dir`; empty ones
// default to <dir>/<name>.{metrics.csv,trace,summary}.
OutputPaths output_paths(const ExperimentConfig& config, const std::string& dir);
OutputPaths write_outputs(const ExperimentConfig& config, const ExperimentOutput& out,
                          const std::string& dir);

// FNV-1a over the IEEE bit patterns; stable fingerprint for weight vectors.
std::uint64_t fnv1a(std::span<const double> values) noexcept;
std::uint64_t fnv1a(const std::string& bytes) noexcept;

}  // namespace gradsim::harness
