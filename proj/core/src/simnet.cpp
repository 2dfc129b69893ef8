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

#include "gradsim/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"

namespace gradsim::sim {
namespace {

constexpr std::uint64_t kStragglerStream = 0x5354524147ULL;  // "STRAG"

}  // namespace

Straggler Straggler::exponential_tail(double rate, double tail_prob) {
  Straggler s;
  s.kind = Kind::kExponentialTail;
  s.rate = rate;
  s.tail_prob = tail_prob;
  return s;
}

Straggler Straggler::fixed_slow_set(std::vector<NodeId> nodes,
                                    double multiplier) {
  Straggler s;
  s.kind = Kind::kFixedSlowSet;
  s.slow_nodes = std::move(nodes);
  s.multiplier = multiplier;
  return s;
}

void Straggler::validate() const {
  switch (kind) {
    case Kind::kNone:
      return;
    case Kind::kExponentialTail:
      if (!(rate > 0.0)) throw InvalidArgument("straggler rate must be > 0");
      if (!(tail_prob >= 0.0 && tail_prob <= 1.0)) {
        throw InvalidArgument("straggler tail_prob must be in [0, 1]");
      }
      return;
    case Kind::kFixedSlowSet:
      if (!(multiplier >= 0.0)) {
        throw InvalidArgument("straggler multiplier must be >= 0");
      }
      return;
  }
}

void LatencyModel::validate() const {
  if (!(startup >= 0.0)) throw InvalidArgument("startup cost A must be >= 0");
  if (!(per_byte >= 0.0)) throw InvalidArgument("per-byte cost B must be >= 0");
  straggler.validate();
}

double sample_straggler_tail(const Straggler& dist, std::uint64_t seed,
                             std::uint64_t draw_index) {
  if (dist.kind != Straggler::Kind::kExponentialTail) return 0.0;
  dist.validate();
  const double u = uniform01(seed, kStragglerStream, 2 * draw_index);
  if (u >= dist.tail_prob) return 0.0;
  const double v = uniform01(seed, kStragglerStream, 2 * draw_index + 1);
  return -std::log1p(-v) / dist.rate;
}

std::uint64_t link_draw_index(NodeId from, NodeId to, std::uint64_t count) noexcept {
  constexpr std::uint64_t kMask = (std::uint64_t{1} << 21) - 1;
  return ((std::uint64_t{from} & kMask) << 42) | ((std::uint64_t{to} & kMask) << 21) |
         (count & kMask);
}

void Topology::validate() const {
  if (p == 0) throw InvalidArgument("topology needs at least one node");
  for (const auto& f : failure_schedule) {
    if (f.node >= p) {
      throw InvalidArgument("failure schedule names unknown node " +
                            std::to_string(f.node));
    }
    if (!(f.time >= 0.0)) throw InvalidArgument("failure time must be >= 0");
  }
}

const char* to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::kSend: return "send";
    case EventKind::kDeliver: return "deliver";
    case EventKind::kDrop: return "drop";
    case EventKind::kCompute: return "compute";
    case EventKind::kFail: return "fail";
    case EventKind::kTimer: return "timer";
  }
  return "?";
}

void Trace::write(std::ostream& os) const {
  char line[128];
  for (const auto& r : records_) {
    std::snprintf(line, sizeof line, "%.9f,%llu,%s,%u,%u,%llu\n", r.time,
                  static_cast<unsigned long long>(r.seq), sim::to_string(r.kind),
                  r.from, r.to, static_cast<unsigned long long>(r.bytes));
    os << line;
  }
}

std::string Trace::to_string() const {
  std::ostringstream os;
  write(os);
  return os.str();
}

std::uint64_t Trace::bytes_sent() const noexcept {
  std::uint64_t total = 0;
  for (const auto& r : records_) {
    if (r.kind == EventKind::kSend) total += r.bytes;
  }
  return total;
}

std::size_t Trace::count(EventKind k) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      records_.begin(), records_.end(),
      [k](const TraceRecord& r) { return r.kind == k; }));
}

Simulator::Simulator(std::size_t nodes, LatencyModel latency,
                     SimOptions options)
    : latency_(std::move(latency)), options_(options), nodes_(nodes) {
  if (nodes == 0) throw InvalidArgument("simulator needs at least one node");
  latency_.validate();
  if (!(options_.drop_notify_delay >= 0.0)) {
    throw InvalidArgument("drop_notify_delay must be >= 0");
  }
  trace_.set_enabled(options_.record_trace);
}

void Simulator::check_node(NodeId node, const char* what) const {
  if (node >= nodes_.size()) {
    throw InvalidArgument(std::string(what) + ": unknown node " +
                          std::to_string(node));
  }
}

void Simulator::attach(NodeId node, Process* process) {
  check_node(node, "attach");
  nodes_[node].process = process;
}

void Simulator::detach(NodeId node) {
  check_node(node, "detach");
  nodes_[node].process = nullptr;
}

void Simulator::detach_all() noexcept {
  for (auto& n : nodes_) n.process = nullptr;
}

bool Simulator::alive(NodeId node) const {
  check_node(node, "alive");
  return nodes_[node].alive;
}

double Simulator::slowdown(NodeId node) const {
  check_node(node, "slowdown");
  return nodes_[node].slowdown;
}

Time Simulator::base_delay(NodeId from, NodeId to, std::size_t bytes) const {
  double delay = latency_.startup + latency_.per_byte * static_cast<double>(bytes);
  delay *= std::max(nodes_[from].slowdown, nodes_[to].slowdown);
  const auto& s = latency_.straggler;
  if (s.kind == Straggler::Kind::kFixedSlowSet &&
      std::find(s.slow_nodes.begin(), s.slow_nodes.end(), to) !=
          s.slow_nodes.end()) {
    delay *= s.multiplier;
  }
  return delay;
}

void Simulator::push(Event ev) {
  queue_.push_back(std::move(ev));
  std::push_heap(queue_.begin(), queue_.end(), Later{});
}

Simulator::Event Simulator::pop() {
  std::pop_heap(queue_.begin(), queue_.end(), Later{});
  Event ev = std::move(queue_.back());
  queue_.pop_back();
  return ev;
}

Time Simulator::next_event_time() const noexcept {
  return queue_.empty() ? kNever : queue_.front().time;
}

std::uint64_t Simulator::send(NodeId from, NodeId to, std::uint32_t channel,
                              std::vector<std::uint8_t> payload) {
  check_node(from, "send");
  check_node(to, "send");
  if (!nodes_[from].alive) {
    throw DeadNodeError(from, "send from crashed node " + std::to_string(from));
  }
  const std::size_t bytes = payload.size();
  Time delay = base_delay(from, to, bytes);
  delay += sample_straggler_tail(latency_.straggler, latency_.seed,
                                 link_draw_index(from, to, link_sends_[{from, to}]++));
  Event ev;
  ev.time = now_ + delay;
  ev.seq = next_seq_++;
  ev.kind = EventKind::kDeliver;
  ev.node = to;
  ev.msg = Message{from, to, channel, std::move(payload), ev.seq};
  ++sent_;
  bytes_sent_ += bytes;
  trace_.add({now_, ev.seq, EventKind::kSend, from, to, bytes});
  const std::uint64_t seq = ev.seq;
  push(std::move(ev));
  return seq;
}

std::uint64_t Simulator::set_timer(NodeId node, Time delay,
                                   std::uint64_t token) {
  check_node(node, "set_timer");
  if (!(delay >= 0.0)) throw InvalidArgument("timer delay must be >= 0");
  Event ev;
  ev.time = now_ + delay;
  ev.seq = next_seq_++;
  ev.kind = EventKind::kTimer;
  ev.node = node;
  ev.token = token;
  const std::uint64_t seq = ev.seq;
  push(std::move(ev));
  return seq;
}

std::uint64_t Simulator::start_compute(NodeId node, Time duration,
                                       std::uint64_t token) {
  check_node(node, "start_compute");
  if (!(duration >= 0.0)) throw InvalidArgument("compute duration must be >= 0");
  Event ev;
  ev.time = now_ + duration * nodes_[node].slowdown;
  ev.seq = next_seq_++;
  ev.kind = EventKind::kCompute;
  ev.node = node;
  ev.token = token;
  const std::uint64_t seq = ev.seq;
  push(std::move(ev));
  return seq;
}

void Simulator::inject_failure(NodeId node, Time at, FailureKind kind,
                               double slow_factor) {
  check_node(node, "inject_failure");
  if (!(at >= now_)) {
    throw InvalidArgument("failure time lies in the simulated past");
  }
  if (kind == FailureKind::kSlow && !(slow_factor > 0.0)) {
    throw InvalidArgument("slow factor must be > 0");
  }
  Event ev;
  ev.time = at;
  ev.seq = next_seq_++;
  ev.kind = EventKind::kFail;
  ev.node = node;
  ev.failure = kind;
  ev.slow_factor = slow_factor;
  push(std::move(ev));
}

void Simulator::apply(const Topology& topology) {
  topology.validate();
  if (topology.p > nodes_.size()) {
    throw InvalidArgument("topology larger than the simulator");
  }
  for (const auto& f : topology.failure_schedule) {
    inject_failure(f.node, f.time, f.kind, f.slow_factor);
  }
}

std::uint64_t Simulator::messages_in_flight() const noexcept {
  return sent_ - delivered_ - dropped_;
}

void Simulator::dispatch(Event& ev) {
  NodeState& node = nodes_[ev.node];
  switch (ev.kind) {
    case EventKind::kDeliver: {
      if (!node.alive) {
        ++dropped_;
        trace_.add({now_, ev.seq, EventKind::kDrop, ev.msg.from, ev.msg.to,
                    ev.msg.payload.size()});
        if (nodes_[ev.msg.from].alive) {
          Event notice;
          notice.time = now_ + options_.drop_notify_delay;
          notice.seq = next_seq_++;
          notice.kind = EventKind::kTimer;
          notice.node = ev.msg.from;
          notice.drop_notice = true;
          notice.msg = std::move(ev.msg);
          push(std::move(notice));
        }
        return;
      }
      ++delivered_;
      trace_.add({now_, ev.seq, EventKind::kDeliver, ev.msg.from, ev.msg.to,
                  ev.msg.payload.size()});
      if (node.process) node.process->on_message(*this, ev.msg);
      return;
    }
    case EventKind::kTimer: {
      if (!node.alive) return;
      trace_.add({now_, ev.seq, EventKind::kTimer, ev.node, ev.node, 0});
      if (!node.process) return;
      if (ev.drop_notice) {
        node.process->on_send_failed(*this, ev.msg);
      } else {
        node.process->on_timer(*this, ev.node, ev.token);
      }
      return;
    }
    case EventKind::kCompute: {
      if (!node.alive) return;
      trace_.add({now_, ev.seq, EventKind::kCompute, ev.node, ev.node, 0});
      if (node.process) node.process->on_compute_done(*this, ev.node, ev.token);
      return;
    }
    case EventKind::kFail: {
      if (!node.alive) return;
      trace_.add({now_, ev.seq, EventKind::kFail, ev.node, ev.node, 0});
      if (ev.failure == FailureKind::kCrash) {
        node.alive = false;
      } else {
        node.slowdown *= ev.slow_factor;
      }
      return;
    }
    case EventKind::kSend:
    case EventKind::kDrop:
      return;  // trace-only kinds, never queued
  }
}

bool Simulator::step() {
  if (queue_.empty()) return false;
  Event ev = pop();
  // Heap order guarantees this; a violation would mean a negative delay.
  if (ev.time < now_) throw Error("simulated clock went backwards");
  now_ = ev.time;
  dispatch(ev);
  return true;
}

std::vector<NodeId> Simulator::waiting_nodes(std::string& detail) const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!n.alive || !n.process) continue;
    std::string why = n.process->waiting_on(i);
    if (why.empty()) continue;
    out.push_back(i);
    if (!detail.empty()) detail += "; ";
    detail += "node " + std::to_string(i) + " " + why;
  }
  return out;
}

Time Simulator::run_until(const std::function<bool()>& done, Time deadline) {
  const Time start = now_;
  while (!done()) {
    if (queue_.empty()) {
      std::string detail;
      auto waiting = waiting_nodes(detail);
      throw DeadlockError(std::move(waiting),
                          "deadlock at t=" + std::to_string(now_) +
                              (detail.empty() ? "" : ": " + detail));
    }
    if (queue_.front().time > deadline) {
      throw Timeout("deadline " + std::to_string(deadline) +
                    " passed before the run condition held");
    }
    step();
  }
  return now_ - start;
}

}  // namespace gradsim::sim
