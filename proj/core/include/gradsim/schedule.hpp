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
#include <string>
#include <vector>

// Static communication schedules. Each algorithm compiles to a per-node list
// of send / receive-and-reduce / receive-and-store operations over element
// ranges. Executors walk the list in order; a receive blocks until the
// matching (source, tag) message arrives, a send never blocks.

namespace gradsim::coll {

enum class Algorithm : std::uint8_t {
  kRing,
  kRecursiveHalvingDoubling,
  kBinaryBlocks,
  kHierarchical,
};

const char* to_string(Algorithm a) noexcept;
Algorithm algorithm_from_string(const std::string& name);

enum class Phase : std::uint8_t {
  kPreCombine,      // non-power-of-two fold of the first 2r nodes
  kScatterReduce,
  kBlockUp,         // binary blocks: smaller block -> next larger block
  kBlockDown,       // binary blocks: larger block -> next smaller block
  kAllGather,
  kPostBroadcast,   // non-power-of-two: result back to folded nodes
  kGroupGather,     // hierarchical: followers -> master
  kGroupBroadcast,  // hierarchical: master -> followers
};
inline constexpr std::size_t kPhaseCount = 8;

const char* to_string(Phase p) noexcept;

struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return end <= begin; }
  friend bool operator==(const Range&, const Range&) = default;
};

Range intersect(Range a, Range b) noexcept;

enum class OpKind : std::uint8_t { kSend, kRecvReduce, kRecvStore };

struct Op {
  OpKind kind = OpKind::kSend;
  std::uint32_t peer = 0;  // participant index, not simulator node id
  Range range;
  Phase phase = Phase::kScatterReduce;
  std::uint32_t step = 0;
  std::uint32_t tag = 0;   // unique per message within the schedule
};

struct Schedule {
  Algorithm algorithm = Algorithm::kRing;
  std::size_t p = 0;
  std::size_t length = 0;
  std::vector<std::vector<Op>> ops;  // indexed by participant

  std::size_t message_count() const noexcept;
  // Every send has exactly one receive with the same tag, peer pairing and
  // range. Throws InvalidArgument otherwise.
  void validate() const;
};

// Balanced split of [0, length) into p ranges, larger ranges first.
std::vector<Range> balanced_ranges(std::size_t length, std::size_t p);

Schedule ring_schedule(std::size_t p, std::size_t length);
Schedule ring_scatter_reduce_schedule(std::size_t p, std::size_t length);
Schedule ring_all_gather_schedule(std::size_t p, std::size_t length);
// Participant i owns chunk (i + 1) mod p after the ring scatter-reduce.
std::vector<Range> ring_owned_ranges(std::size_t p, std::size_t length);

struct RhdLayout {
  std::size_t pz = 1;  // largest power of two <= p
  std::size_t r = 0;   // p - pz
  std::vector<std::uint32_t> core;  // participants running the core exchange
};
RhdLayout rhd_layout(std::size_t p);
Schedule rhd_schedule(std::size_t p, std::size_t length);

struct BlockDecomposition {
  std::vector<std::size_t> blocks;  // descending powers of two summing to p
  struct Slot {
    std::size_t block = 0;
    std::size_t rank = 0;
  };
  std::vector<Slot> assignment;  // participant -> (block, rank)
  std::vector<std::size_t> first;  // first participant of each block
};
BlockDecomposition binary_blocks_decompose(std::size_t p);
Schedule binary_blocks_schedule(std::size_t p, std::size_t length);

Schedule hierarchical_schedule(std::size_t p, std::size_t length,
                               std::size_t group_size);

Schedule make_schedule(Algorithm algorithm, std::size_t p, std::size_t length,
                       std::size_t group_size = 0);

}  // namespace gradsim::coll
