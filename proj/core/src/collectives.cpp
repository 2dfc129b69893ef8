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

#include "gradsim/collectives.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>

#include "gradsim/error.hpp"
#include "gradsim/wire.hpp"

namespace gradsim::coll {
namespace {

using tensor::GradientVector;
using tensor::Precision;

std::vector<sim::NodeId> resolve_nodes(const sim::Simulator& sim, std::size_t p,
                                       std::span<const sim::NodeId> nodes) {
  std::vector<sim::NodeId> out;
  if (nodes.empty()) {
    out.resize(p);
    std::iota(out.begin(), out.end(), sim::NodeId{0});
  } else {
    out.assign(nodes.begin(), nodes.end());
  }
  if (out.size() != p) throw InvalidArgument("node list does not match participant count");
  std::vector<bool> seen(sim.size(), false);
  for (auto n : out) {
    if (n >= sim.size()) throw InvalidArgument("participant node outside simulator");
    if (seen[n]) throw InvalidArgument("participant node listed twice");
    seen[n] = true;
  }
  return out;
}

void check_inputs(std::span<const GradientVector> inputs) {
  if (inputs.empty()) throw InvalidArgument("collective needs at least one input");
  for (const auto& v : inputs) {
    if (v.size() != inputs[0].size()) throw ShapeError("input length mismatch");
    if (v.precision() != inputs[0].precision()) {
      throw ShapeError("input precision mismatch");
    }
  }
}

// Shared bookkeeping for one run: participant lookup and failure notices.
struct RunContext {
  std::vector<sim::NodeId> nodes;
  std::vector<std::int64_t> index_of;  // simulator node -> participant
  std::vector<sim::NodeId> dead;

  void note_dead(sim::NodeId n) {
    if (std::find(dead.begin(), dead.end(), n) == dead.end()) dead.push_back(n);
  }
};

class Runner final : public sim::Process {
 public:
  Runner(const Schedule& schedule, std::size_t me, GradientVector values,
         const CollectiveOptions& options, RunContext& ctx)
      : ops_(schedule.ops[me]),
        me_(me),
        values_(std::move(values)),
        options_(options),
        ctx_(ctx) {}

  void start(sim::Simulator& sim) { advance(sim); }

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    if (msg.channel != options_.channel) return;
    const auto src = ctx_.index_of[msg.from];
    if (src < 0) return;
    GradientVector chunk;
    const ChunkHeader h = decode_chunk(msg.payload, chunk);
    if (h.collective_id != options_.collective_id) return;
    inbox_.emplace(std::make_pair(static_cast<std::uint32_t>(src), h.tag),
                   std::move(chunk));
    advance(sim);
  }

  void on_send_failed(sim::Simulator&, const sim::Message& msg) override {
    if (msg.channel == options_.channel) ctx_.note_dead(msg.to);
  }

  std::string waiting_on(sim::NodeId) const override {
    if (done()) return {};
    const Op& op = ops_[pc_];
    return "recv tag " + std::to_string(op.tag) + " from participant " +
           std::to_string(op.peer) + " (" + to_string(op.phase) + ")";
  }

  bool done() const noexcept { return pc_ == ops_.size(); }
  GradientVector& values() noexcept { return values_; }
  const Activity& activity() const noexcept { return activity_; }

 private:
  void advance(sim::Simulator& sim) {
    while (pc_ < ops_.size()) {
      const Op& op = ops_[pc_];
      const auto phase = static_cast<std::size_t>(op.phase);
      if (op.kind == OpKind::kSend) {
        auto payload = encode_chunk(
            {options_.collective_id, op.phase, op.step, op.tag, op.range},
            values_.values().subspan(op.range.begin, op.range.size()),
            values_.precision());
        sim.send(ctx_.nodes[me_], ctx_.nodes[op.peer], options_.channel,
                 std::move(payload));
        ++activity_.sent[phase];
      } else {
        auto it = inbox_.find({op.peer, op.tag});
        if (it == inbox_.end()) return;
        if (it->second.size() != op.range.size()) {
          throw DecodeError("chunk length does not match its range");
        }
        auto dst = values_.values().subspan(op.range.begin, op.range.size());
        if (op.kind == OpKind::kRecvReduce) {
          tensor::accumulate(dst, it->second.values(), values_.precision());
        } else {
          std::copy(it->second.values().begin(), it->second.values().end(),
                    dst.begin());
        }
        inbox_.erase(it);
        ++activity_.received[phase];
      }
      ++pc_;
    }
  }

  const std::vector<Op>& ops_;
  std::size_t me_;
  GradientVector values_;
  const CollectiveOptions& options_;
  RunContext& ctx_;
  std::size_t pc_ = 0;
  std::map<std::pair<std::uint32_t, std::uint32_t>, GradientVector> inbox_;
  Activity activity_;
};

// Detaches every participant on scope exit, whatever happened.
struct Detacher {
  sim::Simulator& sim;
  const std::vector<sim::NodeId>& nodes;
  ~Detacher() {
    for (auto n : nodes) sim.detach(n);
  }
};

RunContext make_context(const sim::Simulator& sim, std::size_t p,
                        std::span<const sim::NodeId> nodes) {
  RunContext ctx;
  ctx.nodes = resolve_nodes(sim, p, nodes);
  ctx.index_of.assign(sim.size(), -1);
  for (std::size_t i = 0; i < p; ++i) {
    ctx.index_of[ctx.nodes[i]] = static_cast<std::int64_t>(i);
  }
  return ctx;
}

[[noreturn]] void fail(const RunContext& ctx, const sim::Simulator& sim,
                       std::vector<sim::NodeId> dead) {
  for (auto n : ctx.nodes) {
    if (!sim.alive(n) && std::find(dead.begin(), dead.end(), n) == dead.end()) {
      dead.push_back(n);
    }
  }
  std::sort(dead.begin(), dead.end());
  std::string names;
  for (auto n : dead) names += (names.empty() ? "" : ", ") + std::to_string(n);
  throw CollectiveFailed(dead, "collective failed: node(s) " + names + " died");
}

// Drives the simulator until `finished` holds, converting crashes into
// CollectiveFailed.
sim::Time drive(sim::Simulator& sim, const RunContext& ctx,
                const std::function<bool()>& finished, sim::Time deadline) {
  try {
    const auto elapsed =
        sim.run_until([&] { return finished() || !ctx.dead.empty(); }, deadline);
    if (!ctx.dead.empty()) fail(ctx, sim, ctx.dead);
    return elapsed;
  } catch (const DeadlockError&) {
    bool any_dead = !ctx.dead.empty();
    for (auto n : ctx.nodes) any_dead = any_dead || !sim.alive(n);
    if (any_dead) fail(ctx, sim, ctx.dead);
    throw;
  }
}

}  // namespace

std::uint64_t Activity::total() const noexcept {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < kPhaseCount; ++i) n += sent[i] + received[i];
  return n;
}

std::size_t CollectiveResult::idle_in(Phase phase) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      activity.begin(), activity.end(),
      [phase](const Activity& a) { return a.in_phase(phase) == 0; }));
}

std::size_t CollectiveResult::fully_idle() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(activity.begin(), activity.end(),
                    [](const Activity& a) { return a.total() == 0; }));
}

std::vector<std::uint8_t> encode_chunk(const ChunkHeader& header,
                                       std::span<const double> values,
                                       Precision precision) {
  wire::Writer w;
  w.u32(header.collective_id);
  w.u8(static_cast<std::uint8_t>(header.phase));
  w.u32(header.step);
  w.u32(header.tag);
  w.u64(header.range.begin);
  w.u64(header.range.end);
  tensor::serialize_into(w.buffer(), values, precision);
  return w.take();
}

ChunkHeader decode_chunk(std::span<const std::uint8_t> bytes,
                         GradientVector& values) {
  wire::Reader r(bytes);
  ChunkHeader h;
  h.collective_id = r.u32();
  const auto phase = r.u8();
  if (phase >= kPhaseCount) throw DecodeError("unknown phase byte");
  h.phase = static_cast<Phase>(phase);
  h.step = r.u32();
  h.tag = r.u32();
  h.range.begin = r.u64();
  h.range.end = r.u64();
  if (h.range.end < h.range.begin) throw DecodeError("inverted chunk range");
  std::size_t offset = r.position();
  values = tensor::deserialize(bytes, offset);
  if (offset != bytes.size()) throw DecodeError("trailing bytes after chunk");
  return h;
}

CollectiveResult run_schedule(sim::Simulator& sim, const Schedule& schedule,
                              std::span<const GradientVector> inputs,
                              const CollectiveOptions& options,
                              std::span<const sim::NodeId> nodes) {
  check_inputs(inputs);
  if (inputs.size() != schedule.p) {
    throw InvalidArgument("schedule built for a different participant count");
  }
  if (inputs[0].size() != schedule.length) {
    throw ShapeError("schedule built for a different vector length");
  }
  RunContext ctx = make_context(sim, schedule.p, nodes);

  std::vector<std::unique_ptr<Runner>> runners;
  runners.reserve(schedule.p);
  for (std::size_t i = 0; i < schedule.p; ++i) {
    GradientVector v(inputs[i].data(), inputs[i].precision());
    runners.push_back(std::make_unique<Runner>(schedule, i, std::move(v), options, ctx));
  }
  Detacher guard{sim, ctx.nodes};
  for (std::size_t i = 0; i < schedule.p; ++i) sim.attach(ctx.nodes[i], runners[i].get());

  const auto sent0 = sim.messages_sent();
  const auto bytes0 = sim.bytes_sent();
  for (std::size_t i = 0; i < schedule.p; ++i) {
    if (sim.alive(ctx.nodes[i])) runners[i]->start(sim);
  }
  auto all_done = [&] {
    return std::all_of(runners.begin(), runners.end(),
                       [](const auto& r) { return r->done(); });
  };
  CollectiveResult result;
  result.elapsed = drive(sim, ctx, all_done, options.deadline);
  result.messages = sim.messages_sent() - sent0;
  result.bytes = sim.bytes_sent() - bytes0;
  for (auto& r : runners) {
    tensor::finalize(r->values(), options.op);
    result.outputs.push_back(std::move(r->values()));
    result.activity.push_back(r->activity());
  }
  return result;
}

CollectiveResult all_reduce(sim::Simulator& sim, Algorithm algorithm,
                            std::span<const GradientVector> inputs,
                            const CollectiveOptions& options,
                            std::span<const sim::NodeId> nodes) {
  check_inputs(inputs);
  const Schedule s = make_schedule(algorithm, inputs.size(), inputs[0].size(),
                                   options.group_size);
  return run_schedule(sim, s, inputs, options, nodes);
}

CollectiveResult ring_all_reduce(sim::Simulator& sim,
                                 std::span<const GradientVector> inputs,
                                 const CollectiveOptions& options,
                                 std::span<const sim::NodeId> nodes) {
  return all_reduce(sim, Algorithm::kRing, inputs, options, nodes);
}

CollectiveResult rhd_all_reduce(sim::Simulator& sim,
                                std::span<const GradientVector> inputs,
                                const CollectiveOptions& options,
                                std::span<const sim::NodeId> nodes) {
  return all_reduce(sim, Algorithm::kRecursiveHalvingDoubling, inputs, options, nodes);
}

CollectiveResult binary_blocks_all_reduce(sim::Simulator& sim,
                                          std::span<const GradientVector> inputs,
                                          const CollectiveOptions& options,
                                          std::span<const sim::NodeId> nodes) {
  return all_reduce(sim, Algorithm::kBinaryBlocks, inputs, options, nodes);
}

CollectiveResult hierarchical_all_reduce(sim::Simulator& sim,
                                         std::span<const GradientVector> inputs,
                                         std::size_t group_size,
                                         const CollectiveOptions& options,
                                         std::span<const sim::NodeId> nodes) {
  if (group_size == 0) throw InvalidArgument("group_size must be >= 1");
  CollectiveOptions o = options;
  o.group_size = group_size;
  return all_reduce(sim, Algorithm::kHierarchical, inputs, o, nodes);
}

ScatterResult ring_scatter_reduce(sim::Simulator& sim,
                                  std::span<const GradientVector> inputs,
                                  const CollectiveOptions& options,
                                  std::span<const sim::NodeId> nodes) {
  check_inputs(inputs);
  const std::size_t p = inputs.size();
  const std::size_t n = inputs[0].size();
  CollectiveOptions o = options;
  o.op = tensor::ReduceOp::sum();
  auto full = run_schedule(sim, ring_scatter_reduce_schedule(p, n), inputs, o, nodes);
  ScatterResult out;
  out.owned = ring_owned_ranges(p, n);
  out.elapsed = full.elapsed;
  out.messages = full.messages;
  for (std::size_t i = 0; i < p; ++i) {
    auto chunk = full.outputs[i].slice(out.owned[i].begin, out.owned[i].end);
    tensor::finalize(chunk, options.op);
    out.chunks.push_back(std::move(chunk));
  }
  return out;
}

CollectiveResult ring_all_gather(sim::Simulator& sim, const ScatterResult& scattered,
                                 std::size_t length,
                                 const CollectiveOptions& options,
                                 std::span<const sim::NodeId> nodes) {
  const std::size_t p = scattered.chunks.size();
  if (p == 0 || scattered.owned.size() != p) {
    throw InvalidArgument("all-gather needs one owned chunk per participant");
  }
  const auto expected = ring_owned_ranges(p, length);
  std::vector<GradientVector> inputs;
  for (std::size_t i = 0; i < p; ++i) {
    if (!(scattered.owned[i] == expected[i]) ||
        scattered.chunks[i].size() != expected[i].size()) {
      throw ShapeError("owned chunk does not match the ring layout");
    }
    GradientVector v = GradientVector::zeros(length, scattered.chunks[i].precision());
    v.assign(expected[i].begin, scattered.chunks[i].values());
    inputs.push_back(std::move(v));
  }
  CollectiveOptions o = options;
  o.op = tensor::ReduceOp::sum();
  return run_schedule(sim, ring_all_gather_schedule(p, length), inputs, o, nodes);
}

namespace {

class BlobRunner final : public sim::Process {
 public:
  BlobRunner(std::size_t me, std::size_t p, std::vector<std::uint8_t> own,
             const CollectiveOptions& options, RunContext& ctx)
      : me_(me), p_(p), held_(p), options_(options), ctx_(ctx) {
    held_[me] = std::move(own);
  }

  void start(sim::Simulator& sim) { advance(sim); }

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    if (msg.channel != options_.channel) return;
    wire::Reader r(msg.payload);
    if (r.u32() != options_.collective_id) return;
    r.u32();  // step, informational
    const auto origin = r.u32();
    if (origin >= p_) throw DecodeError("blob origin out of range");
    auto body = r.bytes(r.remaining());
    held_[origin] = std::vector<std::uint8_t>(body.begin(), body.end());
    advance(sim);
  }

  void on_send_failed(sim::Simulator&, const sim::Message& msg) override {
    if (msg.channel == options_.channel) ctx_.note_dead(msg.to);
  }

  std::string waiting_on(sim::NodeId) const override {
    return done() ? std::string{} : "blob step " + std::to_string(step_);
  }

  bool done() const noexcept { return step_ + 1 >= p_; }

  std::vector<std::vector<std::uint8_t>> take() {
    std::vector<std::vector<std::uint8_t>> out;
    for (auto& b : held_) out.push_back(std::move(*b));
    return out;
  }

 private:
  // Step j forwards the blob that originated at (me - j) mod p, then waits
  // for the one from (me - 1 - j) mod p.
  void advance(sim::Simulator& sim) {
    while (step_ + 1 < p_) {
      if (!sent_current_) {
        const std::size_t origin = (me_ + p_ - step_) % p_;
        wire::Writer w;
        w.u32(options_.collective_id);
        w.u32(static_cast<std::uint32_t>(step_));
        w.u32(static_cast<std::uint32_t>(origin));
        w.bytes(*held_[origin]);
        sim.send(ctx_.nodes[me_], ctx_.nodes[(me_ + 1) % p_], options_.channel,
                 w.take());
        sent_current_ = true;
      }
      const std::size_t want = (me_ + 2 * p_ - 1 - step_) % p_;
      if (!held_[want]) return;
      ++step_;
      sent_current_ = false;
    }
  }

  std::size_t me_;
  std::size_t p_;
  std::vector<std::optional<std::vector<std::uint8_t>>> held_;
  const CollectiveOptions& options_;
  RunContext& ctx_;
  std::size_t step_ = 0;
  bool sent_current_ = false;
};

}  // namespace

BlobGatherResult all_gather_blobs(sim::Simulator& sim,
                                  std::span<const std::vector<std::uint8_t>> blobs,
                                  const CollectiveOptions& options,
                                  std::span<const sim::NodeId> nodes) {
  const std::size_t p = blobs.size();
  if (p == 0) throw InvalidArgument("all-gather needs at least one participant");
  RunContext ctx = make_context(sim, p, nodes);
  std::vector<std::unique_ptr<BlobRunner>> runners;
  for (std::size_t i = 0; i < p; ++i) {
    runners.push_back(std::make_unique<BlobRunner>(i, p, blobs[i], options, ctx));
  }
  Detacher guard{sim, ctx.nodes};
  for (std::size_t i = 0; i < p; ++i) sim.attach(ctx.nodes[i], runners[i].get());
  const auto sent0 = sim.messages_sent();
  const auto bytes0 = sim.bytes_sent();
  for (std::size_t i = 0; i < p; ++i) {
    if (sim.alive(ctx.nodes[i])) runners[i]->start(sim);
  }
  BlobGatherResult out;
  out.elapsed = drive(
      sim, ctx,
      [&] {
        return std::all_of(runners.begin(), runners.end(),
                           [](const auto& r) { return r->done(); });
      },
      options.deadline);
  out.messages = sim.messages_sent() - sent0;
  out.bytes = sim.bytes_sent() - bytes0;
  for (auto& r : runners) out.blobs.push_back(r->take());
  return out;
}

}  // namespace gradsim::coll
