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

#include <string>
#include <vector>

#include "gradsim/config.hpp"

namespace gradsim::harness {

struct Preset {
  std::string name;
  std::string description;
  ExperimentConfig (*make)();
};

const std::vector<Preset>& presets();
// Throws ConfigError naming the unknown preset.
ExperimentConfig preset_config(const std::string& name);

}  // namespace gradsim::harness
