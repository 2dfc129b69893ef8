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

#include "gradsim/schedule.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "gradsim/error.hpp"

namespace gradsim::coll {
namespace {

class Builder {
 public:
  explicit Builder(Schedule& s) : s_(s) {}

  std::uint32_t send(std::size_t from, std::size_t to, Range r, Phase phase,
                     std::uint32_t step) {
    const std::uint32_t tag = next_tag_++;
    s_.ops[from].push_back({OpKind::kSend, static_cast<std::uint32_t>(to), r,
                            phase, step, tag});
    return tag;
  }

  void recv(std::size_t at, std::size_t from, Range r, OpKind kind,
            Phase phase, std::uint32_t step, std::uint32_t tag) {
    s_.ops[at].push_back(
        {kind, static_cast<std::uint32_t>(from), r, phase, step, tag});
  }

 private:
  Schedule& s_;
  std::uint32_t next_tag_ = 0;
};

struct Transfer {
  std::size_t from;
  std::size_t to;
  Range range;
};

// All sends of a step go out before any receive of that step is posted, so
// every participant's send at step j is independent of its receive at j.
void exchange(Builder& b, const std::vector<Transfer>& transfers, OpKind kind,
              Phase phase, std::uint32_t step) {
  std::vector<std::uint32_t> tags;
  tags.reserve(transfers.size());
  for (const auto& t : transfers) tags.push_back(b.send(t.from, t.to, t.range, phase, step));
  for (std::size_t k = 0; k < transfers.size(); ++k) {
    const auto& t = transfers[k];
    b.recv(t.to, t.from, t.range, kind, phase, step, tags[k]);
  }
}

Schedule empty_schedule(Algorithm a, std::size_t p, std::size_t length) {
  if (p == 0) throw InvalidArgument("schedule needs p >= 1");
  Schedule s;
  s.algorithm = a;
  s.p = p;
  s.length = length;
  s.ops.resize(p);
  return s;
}

// Ring over `members`; chunk c of `ranges` belongs to member order.
void ring_scatter_ops(Builder& b, const std::vector<std::size_t>& members,
                      const std::vector<Range>& ranges) {
  const std::size_t m = members.size();
  for (std::size_t j = 0; j + 1 < m; ++j) {
    std::vector<Transfer> step;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t chunk = (i + m - j % m) % m;
      step.push_back({members[i], members[(i + 1) % m], ranges[chunk]});
    }
    exchange(b, step, OpKind::kRecvReduce, Phase::kScatterReduce,
             static_cast<std::uint32_t>(j));
  }
}

void ring_gather_ops(Builder& b, const std::vector<std::size_t>& members,
                     const std::vector<Range>& ranges) {
  const std::size_t m = members.size();
  for (std::size_t j = 0; j + 1 < m; ++j) {
    std::vector<Transfer> step;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t chunk = (i + 1 + m - j % m) % m;
      step.push_back({members[i], members[(i + 1) % m], ranges[chunk]});
    }
    exchange(b, step, OpKind::kRecvStore, Phase::kAllGather,
             static_cast<std::uint32_t>(j));
  }
}

std::vector<std::size_t> iota_members(std::size_t first, std::size_t count) {
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = first + i;
  return out;
}

// Vector-halving scatter-reduce over a power-of-two member list. Partner
// distance starts at m/2 and halves; the member whose distance bit is clear
// keeps the lower half. Returns each member's range before every split so
// the gather can retrace it.
std::vector<std::vector<Range>> halving_scatter(
    Builder& b, const std::vector<std::size_t>& members, std::size_t length,
    std::vector<Range>& current) {
  const std::size_t m = members.size();
  current.assign(m, Range{0, length});
  std::vector<std::vector<Range>> history(m);
  std::uint32_t step = 0;
  for (std::size_t dist = m / 2; dist >= 1; dist /= 2, ++step) {
    std::vector<Transfer> transfers;
    std::vector<Range> keep(m);
    for (std::size_t k = 0; k < m; ++k) {
      const Range cur = current[k];
      const std::size_t mid = cur.begin + (cur.size() + 1) / 2;
      const Range lower{cur.begin, mid};
      const Range upper{mid, cur.end};
      const bool keep_lower = (k & dist) == 0;
      keep[k] = keep_lower ? lower : upper;
      transfers.push_back({members[k], members[k ^ dist], keep_lower ? upper : lower});
      history[k].push_back(cur);
    }
    exchange(b, transfers, OpKind::kRecvReduce, Phase::kScatterReduce, step);
    current = keep;
  }
  return history;
}

// Vector-doubling all-gather; mirror image of halving_scatter.
void doubling_gather(Builder& b, const std::vector<std::size_t>& members,
                     std::vector<Range> current,
                     const std::vector<std::vector<Range>>& history) {
  const std::size_t m = members.size();
  std::uint32_t step = 0;
  std::size_t level = history.empty() ? 0 : history.front().size();
  for (std::size_t dist = 1; dist < m; dist *= 2, ++step) {
    --level;
    std::vector<Transfer> transfers;
    for (std::size_t k = 0; k < m; ++k) {
      transfers.push_back({members[k], members[k ^ dist], current[k]});
    }
    exchange(b, transfers, OpKind::kRecvStore, Phase::kAllGather, step);
    for (std::size_t k = 0; k < m; ++k) current[k] = history[k][level];
  }
}

}  // namespace

const char* to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::kRing: return "ring";
    case Algorithm::kRecursiveHalvingDoubling: return "rhd";
    case Algorithm::kBinaryBlocks: return "binary-blocks";
    case Algorithm::kHierarchical: return "hierarchical";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "ring") return Algorithm::kRing;
  if (name == "rhd" || name == "halving-doubling") {
    return Algorithm::kRecursiveHalvingDoubling;
  }
  if (name == "binary-blocks") return Algorithm::kBinaryBlocks;
  if (name == "hierarchical") return Algorithm::kHierarchical;
  throw InvalidArgument("unknown collective algorithm '" + name + "'");
}

const char* to_string(Phase p) noexcept {
  switch (p) {
    case Phase::kPreCombine: return "pre-combine";
    case Phase::kScatterReduce: return "scatter-reduce";
    case Phase::kBlockUp: return "block-up";
    case Phase::kBlockDown: return "block-down";
    case Phase::kAllGather: return "all-gather";
    case Phase::kPostBroadcast: return "post-broadcast";
    case Phase::kGroupGather: return "group-gather";
    case Phase::kGroupBroadcast: return "group-broadcast";
  }
  return "?";
}

Range intersect(Range a, Range b) noexcept {
  const std::size_t lo = std::max(a.begin, b.begin);
  const std::size_t hi = std::min(a.end, b.end);
  return lo < hi ? Range{lo, hi} : Range{lo, lo};
}

std::size_t Schedule::message_count() const noexcept {
  std::size_t n = 0;
  for (const auto& node : ops) {
    for (const auto& op : node) n += op.kind == OpKind::kSend;
  }
  return n;
}

void Schedule::validate() const {
  if (ops.size() != p) throw InvalidArgument("schedule: ops/p mismatch");
  std::map<std::uint32_t, std::tuple<std::uint32_t, std::uint32_t, Range>> sends;
  for (std::uint32_t i = 0; i < ops.size(); ++i) {
    for (const auto& op : ops[i]) {
      if (op.range.end > length || op.range.begin > op.range.end) {
        throw InvalidArgument("schedule: range outside vector");
      }
      if (op.peer >= p || op.peer == i) {
        throw InvalidArgument("schedule: bad peer");
      }
      if (op.kind == OpKind::kSend &&
          !sends.emplace(op.tag, std::make_tuple(i, op.peer, op.range)).second) {
        throw InvalidArgument("schedule: duplicate tag");
      }
    }
  }
  std::size_t matched = 0;
  for (std::uint32_t i = 0; i < ops.size(); ++i) {
    for (const auto& op : ops[i]) {
      if (op.kind == OpKind::kSend) continue;
      auto it = sends.find(op.tag);
      if (it == sends.end() ||
          it->second != std::make_tuple(op.peer, i, op.range)) {
        throw InvalidArgument("schedule: receive without matching send");
      }
      ++matched;
    }
  }
  if (matched != sends.size()) {
    throw InvalidArgument("schedule: send without matching receive");
  }
}

std::vector<Range> balanced_ranges(std::size_t length, std::size_t p) {
  std::vector<Range> out;
  out.reserve(p);
  const std::size_t base = length / p;
  const std::size_t extra = length % p;
  std::size_t at = 0;
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t n = base + (i < extra ? 1 : 0);
    out.push_back({at, at + n});
    at += n;
  }
  return out;
}

Schedule ring_schedule(std::size_t p, std::size_t length) {
  Schedule s = empty_schedule(Algorithm::kRing, p, length);
  Builder b(s);
  const auto members = iota_members(0, p);
  const auto ranges = balanced_ranges(length, p);
  ring_scatter_ops(b, members, ranges);
  ring_gather_ops(b, members, ranges);
  return s;
}

Schedule ring_scatter_reduce_schedule(std::size_t p, std::size_t length) {
  Schedule s = empty_schedule(Algorithm::kRing, p, length);
  Builder b(s);
  ring_scatter_ops(b, iota_members(0, p), balanced_ranges(length, p));
  return s;
}

Schedule ring_all_gather_schedule(std::size_t p, std::size_t length) {
  Schedule s = empty_schedule(Algorithm::kRing, p, length);
  Builder b(s);
  ring_gather_ops(b, iota_members(0, p), balanced_ranges(length, p));
  return s;
}

std::vector<Range> ring_owned_ranges(std::size_t p, std::size_t length) {
  const auto ranges = balanced_ranges(length, p);
  std::vector<Range> owned(p);
  for (std::size_t i = 0; i < p; ++i) owned[i] = ranges[(i + 1) % p];
  return owned;
}

RhdLayout rhd_layout(std::size_t p) {
  if (p == 0) throw InvalidArgument("rhd needs p >= 1");
  RhdLayout l;
  while (l.pz * 2 <= p) l.pz *= 2;
  l.r = p - l.pz;
  for (std::size_t i = 0; i < 2 * l.r; i += 2) {
    l.core.push_back(static_cast<std::uint32_t>(i));
  }
  for (std::size_t i = 2 * l.r; i < p; ++i) {
    l.core.push_back(static_cast<std::uint32_t>(i));
  }
  return l;
}

Schedule rhd_schedule(std::size_t p, std::size_t length) {
  Schedule s = empty_schedule(Algorithm::kRecursiveHalvingDoubling, p, length);
  Builder b(s);
  const RhdLayout layout = rhd_layout(p);
  const Range full{0, length};

  if (layout.r > 0) {
    std::vector<Transfer> fold;
    for (std::size_t i = 1; i < 2 * layout.r; i += 2) fold.push_back({i, i - 1, full});
    exchange(b, fold, OpKind::kRecvReduce, Phase::kPreCombine, 0);
  }

  std::vector<std::size_t> core(layout.core.begin(), layout.core.end());
  std::vector<Range> current;
  const auto history = halving_scatter(b, core, length, current);
  doubling_gather(b, core, current, history);

  if (layout.r > 0) {
    std::vector<Transfer> unfold;
    for (std::size_t i = 1; i < 2 * layout.r; i += 2) unfold.push_back({i - 1, i, full});
    exchange(b, unfold, OpKind::kRecvStore, Phase::kPostBroadcast, 0);
  }
  return s;
}

BlockDecomposition binary_blocks_decompose(std::size_t p) {
  if (p == 0) throw InvalidArgument("binary blocks needs p >= 1");
  BlockDecomposition d;
  for (int bit = 63; bit >= 0; --bit) {
    const std::size_t size = std::size_t{1} << bit;
    if (p & size) d.blocks.push_back(size);
  }
  std::size_t at = 0;
  for (std::size_t b = 0; b < d.blocks.size(); ++b) {
    d.first.push_back(at);
    for (std::size_t r = 0; r < d.blocks[b]; ++r) d.assignment.push_back({b, r});
    at += d.blocks[b];
  }
  return d;
}

Schedule binary_blocks_schedule(std::size_t p, std::size_t length) {
  Schedule s = empty_schedule(Algorithm::kBinaryBlocks, p, length);
  Builder b(s);
  const BlockDecomposition d = binary_blocks_decompose(p);
  const std::size_t nb = d.blocks.size();

  std::vector<std::vector<std::size_t>> members(nb);
  std::vector<std::vector<Range>> owned(nb);
  std::vector<std::vector<std::vector<Range>>> history(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    members[k] = iota_members(d.first[k], d.blocks[k]);
    history[k] = halving_scatter(b, members[k], length, owned[k]);
  }

  // Reduced chunks climb from the smallest block to the largest. Chunk grids
  // differ between blocks, so every overlapping (sender, receiver) pair
  // exchanges exactly the elements they share.
  auto cross = [&](std::size_t from_block, std::size_t to_block, OpKind kind,
                   Phase phase) {
    std::vector<Transfer> transfers;
    for (std::size_t i = 0; i < members[from_block].size(); ++i) {
      for (std::size_t j = 0; j < members[to_block].size(); ++j) {
        const Range shared = intersect(owned[from_block][i], owned[to_block][j]);
        if (shared.empty()) continue;
        transfers.push_back({members[from_block][i], members[to_block][j], shared});
      }
    }
    exchange(b, transfers, kind, phase, static_cast<std::uint32_t>(from_block));
  };

  for (std::size_t k = nb; k-- > 1;) {
    cross(k, k - 1, OpKind::kRecvReduce, Phase::kBlockUp);
  }
  for (std::size_t k = 0; k < nb; ++k) {
    if (k + 1 < nb) cross(k, k + 1, OpKind::kRecvStore, Phase::kBlockDown);
    doubling_gather(b, members[k], owned[k], history[k]);
  }
  return s;
}

Schedule hierarchical_schedule(std::size_t p, std::size_t length,
                               std::size_t group_size) {
  if (group_size == 0) throw InvalidArgument("hierarchical: group_size must be >= 1");
  Schedule s = empty_schedule(Algorithm::kHierarchical, p, length);
  Builder b(s);
  const std::size_t g = std::min(group_size, p);
  const Range full{0, length};
  std::vector<std::size_t> masters;
  for (std::size_t m = 0; m < p; m += g) masters.push_back(m);

  std::vector<Transfer> gather;
  for (std::size_t m : masters) {
    for (std::size_t f = m + 1; f < std::min(m + g, p); ++f) gather.push_back({f, m, full});
  }
  exchange(b, gather, OpKind::kRecvReduce, Phase::kGroupGather, 0);

  const auto ranges = balanced_ranges(length, masters.size());
  ring_scatter_ops(b, masters, ranges);
  ring_gather_ops(b, masters, ranges);

  std::vector<Transfer> bcast;
  for (std::size_t m : masters) {
    for (std::size_t f = m + 1; f < std::min(m + g, p); ++f) bcast.push_back({m, f, full});
  }
  exchange(b, bcast, OpKind::kRecvStore, Phase::kGroupBroadcast, 0);
  return s;
}

Schedule make_schedule(Algorithm algorithm, std::size_t p, std::size_t length,
                       std::size_t group_size) {
  switch (algorithm) {
    case Algorithm::kRing: return ring_schedule(p, length);
    case Algorithm::kRecursiveHalvingDoubling: return rhd_schedule(p, length);
    case Algorithm::kBinaryBlocks: return binary_blocks_schedule(p, length);
    case Algorithm::kHierarchical:
      return hierarchical_schedule(p, length, group_size == 0 ? p : group_size);
  }
  throw InvalidArgument("unknown algorithm");
}

}  // namespace gradsim::coll
