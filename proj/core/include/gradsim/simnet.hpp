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
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

// Deterministic discrete-event network. Virtual time only: a message costs
// A + B * bytes (times any slowdown) plus a straggler sample, and events
// run in (time, sequence) order where the sequence number is handed out at
// scheduling time.

namespace gradsim::sim {

using NodeId = std::uint32_t;
using Time = double;

inline constexpr Time kNever = std::numeric_limits<Time>::infinity();

struct Straggler {
  enum class Kind : std::uint8_t { kNone, kExponentialTail, kFixedSlowSet };

  Kind kind = Kind::kNone;
  double rate = 1.0;       // exponential-tail
  double tail_prob = 0.0;  // exponential-tail
  std::vector<NodeId> slow_nodes;  // fixed-slow-set
  double multiplier = 1.0;         // fixed-slow-set

  static Straggler none() { return {}; }
  static Straggler exponential_tail(double rate, double tail_prob);
  static Straggler fixed_slow_set(std::vector<NodeId> nodes, double multiplier);

  // Mixture calibrated so that, for 16 arrivals sharing a 1 s base delay,
  // the second-to-last lands under 2 s in ~80% of rounds while the last
  // one does so in only ~42%.
  static Straggler default_calibration() { return exponential_tail(2.25, 0.5); }

  void validate() const;
};

struct LatencyModel {
  double startup = 0.0;   // A: seconds per message
  double per_byte = 0.0;  // B: seconds per byte
  Straggler straggler;
  std::uint64_t seed = 0;

  void validate() const;
};

// 0 with probability 1 - tail_prob, otherwise Exp(rate). A pure function of
// (seed, draw_index).
double sample_straggler_tail(const Straggler& dist, std::uint64_t seed,
                             std::uint64_t draw_index);

// Draw index used for the `count`-th message on the link from -> to. Keying
// by link keeps two runs that send the same per-link traffic paired on
// identical straggler samples even when their global event order differs.
std::uint64_t link_draw_index(NodeId from, NodeId to, std::uint64_t count) noexcept;

enum class FailureKind : std::uint8_t { kCrash, kSlow };

struct Failure {
  NodeId node = 0;
  Time time = 0.0;
  FailureKind kind = FailureKind::kCrash;
  double slow_factor = 10.0;  // kSlow only
};

struct Topology {
  std::size_t p = 1;
  std::size_t replica_factor = 0;
  std::vector<Failure> failure_schedule;

  void validate() const;
};

enum class EventKind : std::uint8_t {
  kSend,
  kDeliver,
  kDrop,
  kCompute,
  kFail,
  kTimer,
};

const char* to_string(EventKind k) noexcept;

struct Message {
  NodeId from = 0;
  NodeId to = 0;
  std::uint32_t channel = 0;  // demultiplexes protocols sharing a node
  std::vector<std::uint8_t> payload;
  std::uint64_t seq = 0;      // filled in by the simulator
};

struct TraceRecord {
  Time time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::kSend;
  NodeId from = 0;
  NodeId to = 0;
  std::uint64_t bytes = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

// Append-only event log; one `time,seq,kind,from,to,bytes` line per record.
class Trace {
 public:
  void add(const TraceRecord& r) {
    if (enabled_) records_.push_back(r);
  }
  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  void set_enabled(bool on) noexcept { enabled_ = on; }
  void clear() noexcept { records_.clear(); }

  void write(std::ostream& os) const;
  std::string to_string() const;
  // Sum of `bytes` over send records.
  std::uint64_t bytes_sent() const noexcept;
  std::size_t count(EventKind k) const noexcept;

 private:
  bool enabled_ = true;
  std::vector<TraceRecord> records_;
};

class Simulator;

// Per-node behaviour. Callbacks only run while the node is alive.
class Process {
 public:
  virtual ~Process() = default;
  virtual void on_message(Simulator& sim, const Message& msg) = 0;
  virtual void on_timer(Simulator& /*sim*/, NodeId /*self*/,
                        std::uint64_t /*token*/) {}
  virtual void on_compute_done(Simulator& /*sim*/, NodeId /*self*/,
                               std::uint64_t /*token*/) {}
  // Drop notification: `msg` never reached its (crashed) receiver.
  virtual void on_send_failed(Simulator& /*sim*/, const Message& /*msg*/) {}
  // Non-empty while the node is blocked; used for deadlock diagnostics.
  virtual std::string waiting_on(NodeId /*self*/) const { return {}; }
};

struct SimOptions {
  // Delay after a drop before the sender hears about it.
  Time drop_notify_delay = 1.0;
  bool record_trace = true;
};

class Simulator {
 public:
  Simulator(std::size_t nodes, LatencyModel latency, SimOptions options = {});

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  std::size_t size() const noexcept { return nodes_.size(); }
  Time now() const noexcept { return now_; }
  const LatencyModel& latency() const noexcept { return latency_; }

  // Non-owning; the process must outlive every run_until that may call it.
  void attach(NodeId node, Process* process);
  void detach(NodeId node);
  void detach_all() noexcept;

  // Returns the message sequence number. Throws DeadNodeError if `from` has
  // crashed.
  std::uint64_t send(NodeId from, NodeId to, std::uint32_t channel,
                     std::vector<std::uint8_t> payload);
  std::uint64_t set_timer(NodeId node, Time delay, std::uint64_t token);
  std::uint64_t start_compute(NodeId node, Time duration, std::uint64_t token);

  void inject_failure(NodeId node, Time at, FailureKind kind,
                      double slow_factor = 10.0);
  void apply(const Topology& topology);

  bool alive(NodeId node) const;
  double slowdown(NodeId node) const;
  // Delay a message of `bytes` from -> to would see, excluding stragglers.
  Time base_delay(NodeId from, NodeId to, std::size_t bytes) const;

  // Runs events until `done()` holds and returns the simulated time that
  // elapsed. Throws DeadlockError when the queue drains first and Timeout
  // when the next event lies beyond `deadline`.
  Time run_until(const std::function<bool()>& done, Time deadline = kNever);
  // Processes one event; false when the queue is empty.
  bool step();
  bool idle() const noexcept { return queue_.empty(); }
  Time next_event_time() const noexcept;

  const Trace& trace() const noexcept { return trace_; }
  Trace& trace() noexcept { return trace_; }

  std::uint64_t messages_sent() const noexcept { return sent_; }
  std::uint64_t messages_delivered() const noexcept { return delivered_; }
  std::uint64_t messages_dropped() const noexcept { return dropped_; }
  std::uint64_t bytes_sent() const noexcept { return bytes_sent_; }
  std::uint64_t messages_in_flight() const noexcept;

 private:
  struct Event {
    Time time = 0.0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::kTimer;
    NodeId node = 0;  // target node
    std::uint64_t token = 0;
    bool drop_notice = false;
    Message msg;
    FailureKind failure = FailureKind::kCrash;
    double slow_factor = 1.0;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const noexcept {
      if (a.time != b.time) return a.time > b.time;
      return a.seq > b.seq;
    }
  };
  struct NodeState {
    Process* process = nullptr;
    bool alive = true;
    double slowdown = 1.0;
  };

  void push(Event ev);
  Event pop();
  void dispatch(Event& ev);
  void check_node(NodeId node, const char* what) const;
  std::vector<NodeId> waiting_nodes(std::string& detail) const;

  LatencyModel latency_;
  SimOptions options_;
  std::vector<NodeState> nodes_;
  std::vector<Event> queue_;  // binary heap under Later
  Time now_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::map<std::pair<NodeId, NodeId>, std::uint64_t> link_sends_;
  std::uint64_t sent_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t bytes_sent_ = 0;
  Trace trace_;
};

}  // namespace gradsim::sim
