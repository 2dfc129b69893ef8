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

// gradsim command line: run configs and presets, compare metrics files.
//
//   gradsim run <config.json> [--out DIR]
//   gradsim preset <name> [--out DIR] [--dump]
//   gradsim compare <a.csv> <b.csv> <tolspec>
//   gradsim list-presets
//
// Exit status: 0 on pass, 1 when an assertion or comparison fails, 2 on a
// configuration error.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "gradsim/config.hpp"
#include "gradsim/error.hpp"
#include "gradsim/experiment.hpp"
#include "gradsim/metrics.hpp"
#include "gradsim/presets.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kConfigError = 2;

int execute(const gradsim::harness::ExperimentConfig& config, const std::string& out_dir,
            bool quiet) {
  using namespace gradsim::harness;
  const auto out = run_experiment(config);
  const auto paths = write_outputs(config, out, out_dir);
  out.write_report(std::cout);
  if (!quiet) {
    std::cout << "metrics " << paths.metrics << "\ntrace " << paths.trace << "\nsummary "
              << paths.summary << "\n";
  }
  out.summary.write(std::cout);
  return out.pass() ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradsim: deterministic distributed-training simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  bool quiet = false;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("-o,--out", out_dir, "output directory");
  run->add_flag("-q,--quiet", quiet, "omit output paths");

  std::string preset_name;
  bool dump = false;
  auto* preset = app.add_subcommand("preset", "run a named preset");
  preset->add_option("name", preset_name, "preset name")->required();
  preset->add_option("-o,--out", out_dir, "output directory");
  preset->add_flag("--dump", dump, "print the preset config as JSON and exit");
  preset->add_flag("-q,--quiet", quiet, "omit output paths");

  std::string a_path, b_path, tol_path;
  auto* compare = app.add_subcommand("compare", "compare two metrics files");
  compare->add_option("a", a_path, "metrics CSV (left side of each relation)")->required();
  compare->add_option("b", b_path, "metrics CSV (right side)")->required();
  compare->add_option("tolspec", tol_path, "tolerance spec")->required();

  auto* list = app.add_subcommand("list-presets", "list preset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }

  using namespace gradsim;
  try {
    if (*run) return execute(harness::load_config(config_path), out_dir, quiet);
    if (*preset) {
      const auto config = harness::preset_config(preset_name);
      if (dump) {
        std::cout << harness::to_json(config);
        return kPass;
      }
      return execute(config, out_dir, quiet);
    }
    if (*compare) {
      const auto report = metrics::compare_runs(metrics::read_csv_file(a_path),
                                                metrics::read_csv_file(b_path),
                                                metrics::parse_tolspec_file(tol_path));
      report.write(std::cout);
      return report.pass() ? kPass : kFail;
    }
    if (*list) {
      for (const auto& p : harness::presets()) {
        std::cout << p.name << "  " << p.description << "\n";
      }
      return kPass;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFail;
  }
  return kPass;
}
