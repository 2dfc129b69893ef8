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
#include <stdexcept>
#include <string>
#include <vector>

namespace gradsim {

// Root of every error thrown by the library. Callers that only care about
// "did the run fail" catch this; the subclasses carry the structured bits.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Length or precision mismatch between vectors that must agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field_path, const std::string& what)
      : Error(field_path.empty() ? what : field_path + ": " + what),
        field_path_(std::move(field_path)) {}

  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::string field_path_;
};

class DeadNodeError : public Error {
 public:
  DeadNodeError(std::uint32_t node, const std::string& what)
      : Error(what), node_(node) {}
  std::uint32_t node() const noexcept { return node_; }

 private:
  std::uint32_t node_;
};

// The event queue drained while the run condition was still false.
class DeadlockError : public Error {
 public:
  DeadlockError(std::vector<std::uint32_t> waiting, const std::string& what)
      : Error(what), waiting_(std::move(waiting)) {}
  const std::vector<std::uint32_t>& waiting_nodes() const noexcept {
    return waiting_;
  }

 private:
  std::vector<std::uint32_t> waiting_;
};

// Simulated clock passed the caller's deadline before the condition held.
class Timeout : public Error {
 public:
  using Error::Error;
};

// A non-tolerant collective lost a participant.
class CollectiveFailed : public Error {
 public:
  CollectiveFailed(std::vector<std::uint32_t> dead, const std::string& what)
      : Error(what), dead_(std::move(dead)) {}
  const std::vector<std::uint32_t>& dead_nodes() const noexcept {
    return dead_;
  }

 private:
  std::vector<std::uint32_t> dead_;
};

// A replica group lost its majority; `group` is the logical node id.
class GroupUnavailable : public Error {
 public:
  GroupUnavailable(std::uint32_t group, const std::string& what)
      : Error(what), group_(group) {}
  std::uint32_t group() const noexcept { return group_; }

 private:
  std::uint32_t group_;
};

}  // namespace gradsim
