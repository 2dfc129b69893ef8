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

#include "gradsim/ftreduce.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "gradsim/collectives.hpp"
#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"
#include "gradsim/wire.hpp"

namespace gradsim::ft {
namespace {

using tensor::GradientVector;

enum MsgType : std::uint8_t {
  kRequestVote = 1,
  kVote = 2,
  kAppend = 3,
  kAppendAck = 4,
  kData = 10,
  kRedirect = 11,
  kAnnounce = 12,
};

enum TimerKind : std::uint64_t { kElection = 1, kHeartbeat = 2, kRetry = 3 };

constexpr std::uint64_t kElectionStream = 0xE1EC7;
constexpr std::uint32_t kNoLeader = 0xFFFFFFFFu;

constexpr std::uint64_t token(TimerKind kind, std::uint64_t gen) {
  return (static_cast<std::uint64_t>(kind) << 56) | (gen & ((1ULL << 56) - 1));
}

void write_entry(wire::Writer& w, const ReductionEntry& e,
                 tensor::Precision precision) {
  w.u64(e.term);
  w.u8(e.noop ? 1 : 0);
  w.u32(e.collective_id);
  w.u32(e.op_index);
  w.u8(static_cast<std::uint8_t>(e.phase));
  w.u32(e.step);
  w.u32(e.tag);
  w.u64(e.range.begin);
  w.u64(e.range.end);
  tensor::serialize_into(w.buffer(), e.values, precision);
}

ReductionEntry read_entry(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  wire::Reader r(bytes.subspan(offset));
  ReductionEntry e;
  e.term = r.u64();
  e.noop = r.u8() != 0;
  e.collective_id = r.u32();
  e.op_index = r.u32();
  const auto phase = r.u8();
  if (phase >= coll::kPhaseCount) throw DecodeError("unknown phase byte");
  e.phase = static_cast<coll::Phase>(phase);
  e.step = r.u32();
  e.tag = r.u32();
  e.range.begin = r.u64();
  e.range.end = r.u64();
  offset += r.position();
  e.values = tensor::deserialize(bytes, offset).data();
  return e;
}

struct Shared {
  Shared(const coll::Schedule& s, std::size_t p_, std::size_t k_,
         const FtOptions& o, std::span<const GradientVector> in)
      : schedule(s),
        p(p_),
        k(k_),
        options(o),
        inputs(in),
        precision(in[0].precision()),
        unavailable_timeout(o.unavailable_timeout > 0.0 ? o.unavailable_timeout
                                                        : 40.0 * o.heartbeat),
        recv_index(p_) {}

  const coll::Schedule& schedule;
  std::size_t p;
  std::size_t k;
  const FtOptions& options;
  std::span<const GradientVector> inputs;
  tensor::Precision precision;
  sim::Time unavailable_timeout;
  // Per group: (source group, tag) -> op index of the matching receive.
  std::vector<std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t>> recv_index;

  std::uint64_t data_messages = 0;
  std::uint64_t control_messages = 0;
  std::uint64_t raft_messages = 0;
  std::uint64_t elections = 0;
  std::uint64_t rounds = 0;
  std::uint64_t splits = 0;
  sim::Time last_progress = 0.0;
  std::optional<std::size_t> unavailable;
};

class Replica final : public sim::Process {
 public:
  Replica(Shared& sh, std::size_t group, std::size_t r)
      : sh_(sh),
        group_(group),
        r_(r),
        self_(replica_node(group, r, sh.k)),
        values_(sh.inputs[group].data(), sh.precision),
        hint_(sh.p, 0),
        next_(sh.k, 1),
        match_(sh.k, 0),
        last_ack_(sh.k, 0.0),
        forced_used_(sh.options.forced_timeouts.size(), false) {}

  void start(sim::Simulator& sim) {
    term_ = 1;
    voted_for_ = replica_node(group_, 0, sh_.k);
    leader_ = *voted_for_;
    if (r_ == 0) {
      role_ = Role::kLeader;
      ready_ = true;
      std::fill(last_ack_.begin(), last_ack_.end(), sim.now());
      arm_heartbeat(sim);
      drive(sim);
    } else {
      role_ = Role::kFollower;
      arm_election(sim);
    }
  }

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    if (msg.payload.empty()) throw DecodeError("empty replica message");
    if (msg.channel == kRaftChannel) {
      handle_raft(sim, msg);
    } else if (msg.channel == kGroupChannel) {
      handle_group(sim, msg);
    }
  }

  void on_timer(sim::Simulator& sim, sim::NodeId, std::uint64_t tok) override {
    const auto kind = tok >> 56;
    const auto gen = tok & ((1ULL << 56) - 1);
    if (kind == kElection) {
      if (gen == election_gen_ && role_ != Role::kLeader) start_election(sim);
    } else if (kind == kHeartbeat) {
      if (gen == hb_gen_ && role_ == Role::kLeader) heartbeat(sim);
    } else if (kind == kRetry) {
      auto it = retries_.find(gen);
      if (it == retries_.end()) return;
      auto [dest, payload] = std::move(it->second);
      retries_.erase(it);
      if (role_ == Role::kLeader) group_send(sim, dest, std::move(payload));
    }
  }

  void on_send_failed(sim::Simulator& sim, const sim::Message& msg) override {
    if (msg.channel != kGroupChannel || role_ != Role::kLeader) return;
    const std::size_t dest = msg.to / sh_.k;
    const std::size_t dead = msg.to % sh_.k;
    if (hint_[dest] == dead) hint_[dest] = (dead + 1) % sh_.k;
    group_send(sim, dest, msg.payload);
  }

  std::string waiting_on(sim::NodeId) const override {
    if (role_ != Role::kLeader || done()) return {};
    return "group " + std::to_string(group_) + " at op " + std::to_string(pc_);
  }

  bool done() const noexcept {
    return role_ == Role::kLeader && ready_ && awaiting_ == 0 &&
           pc_ == sh_.schedule.ops[group_].size();
  }
  const GradientVector& values() const noexcept { return values_; }

  ReplicaReport report(const sim::Simulator& sim) const {
    return {self_, group_, sim.alive(self_), role_, term_, commit_, log_};
  }

 private:
  // ---- plumbing -----------------------------------------------------------

  sim::NodeId peer(std::size_t j) const { return replica_node(group_, j, sh_.k); }

  void raft_send(sim::Simulator& sim, sim::NodeId to, std::vector<std::uint8_t> payload) {
    ++sh_.raft_messages;
    sim.send(self_, to, kRaftChannel, std::move(payload));
  }

  void group_send(sim::Simulator& sim, std::size_t dest,
                  std::vector<std::uint8_t> payload) {
    if (payload[0] == kData) {
      ++sh_.data_messages;
    } else {
      ++sh_.control_messages;
    }
    sim.send(self_, replica_node(dest, hint_[dest], sh_.k), kGroupChannel,
             std::move(payload));
  }

  void reply_group(sim::Simulator& sim, sim::NodeId to,
                   std::vector<std::uint8_t> payload) {
    ++sh_.control_messages;
    sim.send(self_, to, kGroupChannel, std::move(payload));
  }

  sim::Time election_delay(const sim::Simulator& sim) {
    const auto& forced = sh_.options.forced_timeouts;
    for (std::size_t f = 0; f < forced.size(); ++f) {
      if (forced_used_[f] || sim.now() < forced[f].from_time) continue;
      if (std::find(forced[f].nodes.begin(), forced[f].nodes.end(), self_) ==
          forced[f].nodes.end()) {
        continue;
      }
      forced_used_[f] = true;
      return forced[f].delay;
    }
    const double u = uniform01(sh_.options.seed, kElectionStream,
                               (std::uint64_t{self_} << 32) | draws_++);
    const auto& o = sh_.options;
    return o.heartbeat * (o.election_min + (o.election_max - o.election_min) * u);
  }

  void arm_election(sim::Simulator& sim) {
    ++election_gen_;
    sim.set_timer(self_, election_delay(sim), token(kElection, election_gen_));
  }

  void arm_heartbeat(sim::Simulator& sim) {
    ++hb_gen_;
    sim.set_timer(self_, sh_.options.heartbeat, token(kHeartbeat, hb_gen_));
  }

  void flag_unavailable() {
    if (!sh_.unavailable) sh_.unavailable = group_;
  }

  // ---- raft ---------------------------------------------------------------

  std::uint64_t last_term() const { return log_.empty() ? 0 : log_.back().term; }

  void become_follower(sim::Simulator& sim, std::uint64_t term) {
    if (term > term_) {
      term_ = term;
      voted_for_.reset();
      leader_.reset();
    }
    if (role_ == Role::kLeader) {
      ready_ = false;
      awaiting_ = 0;
      ++hb_gen_;
    }
    role_ = Role::kFollower;
    arm_election(sim);
  }

  void start_election(sim::Simulator& sim) {
    if (role_ == Role::kCandidate) ++sh_.splits;
    ++term_;
    role_ = Role::kCandidate;
    voted_for_ = self_;
    votes_ = 1;
    leader_.reset();
    ++sh_.rounds;
    if (++failed_rounds_ > sh_.options.max_election_rounds) flag_unavailable();
    for (std::size_t j = 0; j < sh_.k; ++j) {
      if (j == r_) continue;
      wire::Writer w;
      w.u8(kRequestVote);
      w.u64(term_);
      w.u32(self_);
      w.u64(log_.size());
      w.u64(last_term());
      raft_send(sim, peer(j), w.take());
    }
    arm_election(sim);
    if (votes_ >= majority(sh_.k)) become_leader(sim);
  }

  void become_leader(sim::Simulator& sim) {
    role_ = Role::kLeader;
    leader_ = self_;
    failed_rounds_ = 0;
    ++sh_.elections;
    ++election_gen_;
    for (std::size_t j = 0; j < sh_.k; ++j) {
      next_[j] = log_.size() + 1;
      match_[j] = 0;
      last_ack_[j] = sim.now();
    }
    ReductionEntry noop;
    noop.term = term_;
    noop.noop = true;
    noop.collective_id = sh_.options.collective_id;
    log_.push_back(std::move(noop));
    noop_index_ = log_.size();
    ready_ = false;
    awaiting_ = 0;
    inbox_.clear();
    outbox_.clear();
    retries_.clear();
    broadcast_append(sim);
    arm_heartbeat(sim);
    advance_commit(sim);
  }

  void heartbeat(sim::Simulator& sim) {
    std::size_t live = 1;
    for (std::size_t j = 0; j < sh_.k; ++j) {
      if (j != r_ && sim.now() - last_ack_[j] <= sh_.unavailable_timeout) ++live;
    }
    if (live < majority(sh_.k)) flag_unavailable();
    broadcast_append(sim);
    arm_heartbeat(sim);
  }

  void broadcast_append(sim::Simulator& sim) {
    for (std::size_t j = 0; j < sh_.k; ++j) {
      if (j != r_) send_append(sim, j);
    }
  }

  void send_append(sim::Simulator& sim, std::size_t j) {
    const std::size_t prev = next_[j] - 1;
    wire::Writer w;
    w.u8(kAppend);
    w.u64(term_);
    w.u32(self_);
    w.u64(prev);
    w.u64(prev == 0 ? 0 : log_[prev - 1].term);
    w.u64(commit_);
    w.u32(static_cast<std::uint32_t>(log_.size() - prev));
    for (std::size_t i = prev; i < log_.size(); ++i) {
      write_entry(w, log_[i], sh_.precision);
    }
    raft_send(sim, peer(j), w.take());
  }

  void handle_raft(sim::Simulator& sim, const sim::Message& msg) {
    wire::Reader r(msg.payload);
    switch (r.u8()) {
      case kRequestVote: {
        const auto term = r.u64();
        const auto cand = r.u32();
        const auto lli = r.u64();
        const auto llt = r.u64();
        on_request_vote(sim, msg.from, term, cand, lli, llt);
        return;
      }
      case kVote: {
        const auto term = r.u64();
        const bool granted = r.u8() != 0;
        on_vote(sim, term, granted);
        return;
      }
      case kAppend: {
        const auto term = r.u64();
        const auto leader = r.u32();
        const auto prev = r.u64();
        const auto prev_term = r.u64();
        const auto commit = r.u64();
        const auto count = r.u32();
        std::size_t offset = r.position();
        std::vector<ReductionEntry> entries;
        entries.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
          entries.push_back(read_entry(msg.payload, offset));
        }
        if (offset != msg.payload.size()) throw DecodeError("trailing append bytes");
        on_append(sim, msg.from, term, leader, prev, prev_term, commit, entries);
        return;
      }
      case kAppendAck: {
        const auto term = r.u64();
        const bool ok = r.u8() != 0;
        const auto match = r.u64();
        on_append_ack(sim, msg.from % sh_.k, term, ok, match);
        return;
      }
      default:
        throw DecodeError("unknown raft message type");
    }
  }

  void on_request_vote(sim::Simulator& sim, sim::NodeId from, std::uint64_t term,
                       sim::NodeId cand, std::uint64_t lli, std::uint64_t llt) {
    if (term > term_) become_follower(sim, term);
    bool granted = false;
    if (term == term_) {
      if (role_ == Role::kCandidate) {
        // Relinquish; this term's vote already went to ourselves.
        ++sh_.splits;
        role_ = Role::kFollower;
        arm_election(sim);
      } else if (role_ == Role::kFollower &&
                 (!voted_for_ || *voted_for_ == cand)) {
        const bool up_to_date =
            llt > last_term() || (llt == last_term() && lli >= log_.size());
        if (up_to_date) {
          granted = true;
          voted_for_ = cand;
          arm_election(sim);
        }
      }
    }
    wire::Writer w;
    w.u8(kVote);
    w.u64(term_);
    w.u8(granted ? 1 : 0);
    raft_send(sim, from, w.take());
  }

  void on_vote(sim::Simulator& sim, std::uint64_t term, bool granted) {
    if (term > term_) {
      become_follower(sim, term);
      return;
    }
    if (role_ != Role::kCandidate || term != term_ || !granted) return;
    if (++votes_ >= majority(sh_.k)) become_leader(sim);
  }

  void on_append(sim::Simulator& sim, sim::NodeId from, std::uint64_t term,
                 sim::NodeId leader, std::uint64_t prev, std::uint64_t prev_term,
                 std::uint64_t commit, const std::vector<ReductionEntry>& entries) {
    auto ack = [&](bool ok, std::uint64_t match) {
      wire::Writer w;
      w.u8(kAppendAck);
      w.u64(term_);
      w.u8(ok ? 1 : 0);
      w.u64(match);
      raft_send(sim, from, w.take());
    };
    if (term < term_) {
      ack(false, commit_);
      return;
    }
    if (term > term_ || role_ != Role::kFollower) {
      become_follower(sim, term);
    } else {
      arm_election(sim);
    }
    leader_ = leader;
    failed_rounds_ = 0;
    if (prev > log_.size() || (prev > 0 && log_[prev - 1].term != prev_term)) {
      ack(false, commit_);
      return;
    }
    for (std::size_t j = 0; j < entries.size(); ++j) {
      const std::size_t idx = prev + 1 + j;
      if (idx <= log_.size()) {
        if (log_[idx - 1].term == entries[j].term) continue;
        if (idx <= commit_) throw std::logic_error("raft: committed entry overwritten");
        log_.resize(idx - 1);
      }
      log_.push_back(entries[j]);
    }
    const std::size_t match = prev + entries.size();
    if (commit > commit_) {
      commit_ = std::min<std::size_t>(commit, match);
      apply_committed(sim);
    }
    ack(true, match);
  }

  void on_append_ack(sim::Simulator& sim, std::size_t j, std::uint64_t term,
                     bool ok, std::uint64_t match) {
    if (term > term_) {
      become_follower(sim, term);
      return;
    }
    if (role_ != Role::kLeader || term != term_) return;
    last_ack_[j] = sim.now();
    if (ok) {
      match_[j] = std::max<std::size_t>(match_[j], match);
      next_[j] = match_[j] + 1;
      advance_commit(sim);
    } else {
      next_[j] = std::max<std::size_t>(1, std::min<std::size_t>(next_[j] - 1, match + 1));
      send_append(sim, j);
    }
  }

  void advance_commit(sim::Simulator& sim) {
    for (std::size_t n = log_.size(); n > commit_; --n) {
      if (log_[n - 1].term != term_) break;
      std::size_t acks = 1;
      for (std::size_t j = 0; j < sh_.k; ++j) {
        if (j != r_ && match_[j] >= n) ++acks;
      }
      if (acks >= majority(sh_.k)) {
        commit_ = n;
        break;
      }
    }
    apply_committed(sim);
  }

  void apply_committed(sim::Simulator& sim) {
    if (applied_ == commit_) return;
    while (applied_ < commit_) {
      const ReductionEntry& e = log_[applied_++];
      if (e.noop) continue;
      values_.assign(e.range.begin, e.values);
      committed_pc_ = e.op_index + 1;
    }
    sh_.last_progress = sim.now();
    if (role_ != Role::kLeader) return;
    if (!ready_) {
      if (commit_ >= noop_index_) become_ready(sim);
      return;
    }
    if (awaiting_ != 0 && commit_ >= awaiting_) {
      awaiting_ = 0;
      pc_ = committed_pc_;
      drive(sim);
    }
  }

  // ---- collective ---------------------------------------------------------

  // Vector as it stood right before op `index`, rebuilt from the log.
  std::vector<double> state_at(std::size_t index) const {
    std::vector<double> v = sh_.inputs[group_].data();
    for (std::size_t i = 0; i < commit_; ++i) {
      const auto& e = log_[i];
      if (e.noop || e.op_index >= index) continue;
      std::copy(e.values.begin(), e.values.end(), v.begin() + e.range.begin);
    }
    return v;
  }

  std::vector<std::uint8_t> make_data(std::size_t index,
                                      std::span<const double> state) const {
    const coll::Op& op = sh_.schedule.ops[group_][index];
    wire::Writer w;
    w.u8(kData);
    w.u32(static_cast<std::uint32_t>(group_));
    w.bytes(coll::encode_chunk(
        {sh_.options.collective_id, op.phase, op.step, op.tag, op.range},
        state.subspan(op.range.begin, op.range.size()), sh_.precision));
    return w.take();
  }

  std::vector<std::uint8_t> make_announce() const {
    wire::Writer w;
    w.u8(kAnnounce);
    w.u32(static_cast<std::uint32_t>(group_));
    w.u64(term_);
    return w.take();
  }

  // Re-sends every chunk this group has already released, optionally only
  // those addressed to `only`. Receivers drop duplicates by tag.
  void repush(sim::Simulator& sim, std::optional<std::size_t> only) {
    const auto& ops = sh_.schedule.ops[group_];
    for (std::size_t i = 0; i < pc_; ++i) {
      const auto& op = ops[i];
      if (op.kind != coll::OpKind::kSend) continue;
      if (only && op.peer != *only) continue;
      auto payload = make_data(i, state_at(i));
      outbox_[op.tag] = payload;
      group_send(sim, op.peer, std::move(payload));
    }
  }

  void become_ready(sim::Simulator& sim) {
    ready_ = true;
    pc_ = committed_pc_;
    repush(sim, std::nullopt);
    for (std::size_t g = 0; g < sh_.p; ++g) {
      if (g != group_) group_send(sim, g, make_announce());
    }
    drive(sim);
  }

  void drive(sim::Simulator& sim) {
    if (role_ != Role::kLeader || !ready_ || awaiting_ != 0) return;
    const auto& ops = sh_.schedule.ops[group_];
    while (pc_ < ops.size()) {
      const coll::Op& op = ops[pc_];
      if (op.kind == coll::OpKind::kSend) {
        auto payload = make_data(pc_, values_.values());
        outbox_[op.tag] = payload;
        group_send(sim, op.peer, std::move(payload));
        ++pc_;
        sh_.last_progress = sim.now();
        continue;
      }
      auto it = inbox_.find({op.peer, op.tag});
      if (it == inbox_.end()) return;
      if (it->second.size() != op.range.size()) {
        throw DecodeError("chunk length does not match its range");
      }
      ReductionEntry e;
      e.term = term_;
      e.collective_id = sh_.options.collective_id;
      e.op_index = static_cast<std::uint32_t>(pc_);
      e.phase = op.phase;
      e.step = op.step;
      e.tag = op.tag;
      e.range = op.range;
      if (op.kind == coll::OpKind::kRecvReduce) {
        e.values.assign(values_.data().begin() + op.range.begin,
                        values_.data().begin() + op.range.end);
        tensor::accumulate(e.values, it->second.values(), sh_.precision);
      } else {
        e.values = it->second.data();
      }
      inbox_.erase(it);
      log_.push_back(std::move(e));
      awaiting_ = log_.size();
      broadcast_append(sim);
      advance_commit(sim);
      return;
    }
  }

  void handle_group(sim::Simulator& sim, const sim::Message& msg) {
    wire::Reader r(msg.payload);
    const auto type = r.u8();
    const std::size_t from_group = msg.from / sh_.k;
    switch (type) {
      case kData: {
        const auto src = r.u32();
        GradientVector chunk;
        const auto h = coll::decode_chunk(
            std::span<const std::uint8_t>(msg.payload).subspan(r.position()), chunk);
        if (h.collective_id != sh_.options.collective_id) return;
        if (role_ != Role::kLeader) {
          redirect(sim, msg.from, kData, h.tag);
          return;
        }
        hint_[src] = msg.from % sh_.k;
        const auto& index = sh_.recv_index[group_];
        auto it = index.find({src, h.tag});
        if (it == index.end()) throw DecodeError("chunk with unknown tag");
        const std::size_t op_index = it->second;
        const bool consumed =
            op_index < pc_ || (awaiting_ != 0 && op_index == pc_);
        if (ready_ && consumed) return;
        inbox_.insert_or_assign({src, h.tag}, std::move(chunk));
        drive(sim);
        return;
      }
      case kRedirect: {
        const auto orig = r.u8();
        const auto tag = r.u32();
        const auto hint = r.u32();
        r.u64();  // responder's term, informational
        if (role_ != Role::kLeader) return;
        std::vector<std::uint8_t> payload;
        if (orig == kData) {
          auto it = outbox_.find(tag);
          if (it == outbox_.end()) return;
          payload = it->second;
        } else {
          payload = make_announce();
        }
        if (hint != kNoLeader && hint / sh_.k == from_group && hint != msg.from) {
          hint_[from_group] = hint % sh_.k;
          group_send(sim, from_group, std::move(payload));
        } else {
          // Group mid-election: try the next replica a heartbeat later.
          hint_[from_group] = (msg.from % sh_.k + 1) % sh_.k;
          const auto id = next_retry_++;
          retries_.emplace(id, std::make_pair(from_group, std::move(payload)));
          sim.set_timer(self_, sh_.options.heartbeat, token(kRetry, id));
        }
        return;
      }
      case kAnnounce: {
        const auto g = r.u32();
        r.u64();
        if (role_ != Role::kLeader) {
          redirect(sim, msg.from, kAnnounce, 0);
          return;
        }
        if (g >= sh_.p) throw DecodeError("announce from unknown group");
        hint_[g] = msg.from % sh_.k;
        if (ready_) repush(sim, g);
        return;
      }
      default:
        throw DecodeError("unknown group message type");
    }
  }

  void redirect(sim::Simulator& sim, sim::NodeId to, std::uint8_t orig,
                std::uint32_t tag) {
    wire::Writer w;
    w.u8(kRedirect);
    w.u8(orig);
    w.u32(tag);
    w.u32(leader_ ? *leader_ : kNoLeader);
    w.u64(term_);
    reply_group(sim, to, w.take());
  }

  Shared& sh_;
  std::size_t group_;
  std::size_t r_;
  sim::NodeId self_;

  Role role_ = Role::kFollower;
  std::uint64_t term_ = 0;
  std::optional<sim::NodeId> voted_for_;
  std::optional<sim::NodeId> leader_;
  std::vector<ReductionEntry> log_;
  std::size_t commit_ = 0;
  std::size_t applied_ = 0;
  std::size_t votes_ = 0;
  std::size_t failed_rounds_ = 0;
  std::size_t noop_index_ = 0;
  std::uint64_t election_gen_ = 0;
  std::uint64_t hb_gen_ = 0;
  std::uint64_t draws_ = 0;

  GradientVector values_;
  std::size_t committed_pc_ = 0;
  std::size_t pc_ = 0;
  bool ready_ = false;
  std::size_t awaiting_ = 0;  // log index of the entry being replicated
  std::map<std::pair<std::uint32_t, std::uint32_t>, GradientVector> inbox_;
  std::map<std::uint32_t, std::vector<std::uint8_t>> outbox_;
  std::map<std::uint64_t, std::pair<std::size_t, std::vector<std::uint8_t>>> retries_;
  std::uint64_t next_retry_ = 0;

  std::vector<std::size_t> hint_;  // leader guess per group (replica index)
  std::vector<std::size_t> next_;
  std::vector<std::size_t> match_;
  std::vector<sim::Time> last_ack_;
  std::vector<bool> forced_used_;
};

std::optional<std::size_t> group_without_majority(const sim::Simulator& sim,
                                                  std::size_t p, std::size_t k) {
  for (std::size_t g = 0; g < p; ++g) {
    std::size_t live = 0;
    for (std::size_t r = 0; r < k; ++r) live += sim.alive(replica_node(g, r, k));
    if (live < majority(k)) return g;
  }
  return std::nullopt;
}

[[noreturn]] void throw_unavailable(std::size_t g) {
  throw GroupUnavailable(static_cast<std::uint32_t>(g),
                         "replica group " + std::to_string(g) +
                             " lost its majority; collective failed");
}

}  // namespace

const char* to_string(Role r) noexcept {
  switch (r) {
    case Role::kFollower: return "follower";
    case Role::kCandidate: return "candidate";
    case Role::kLeader: return "leader";
  }
  return "?";
}

void FtOptions::validate() const {
  if (replica_factor == 0 || replica_factor % 2 == 0) {
    throw InvalidArgument("replica_factor must be odd");
  }
  if (!(heartbeat > 0.0)) throw InvalidArgument("heartbeat must be positive");
  if (!(election_min > 0.0) || election_max < election_min) {
    throw InvalidArgument("election timeout range is invalid");
  }
  if (unavailable_timeout < 0.0 || stall_timeout < 0.0) {
    throw InvalidArgument("timeouts must be nonnegative");
  }
  if (max_election_rounds == 0) throw InvalidArgument("max_election_rounds must be >= 1");
}

std::size_t audit_logs(std::span<const ReplicaReport> replicas) {
  std::size_t violations = 0;
  for (std::size_t a = 0; a < replicas.size(); ++a) {
    for (std::size_t b = a + 1; b < replicas.size(); ++b) {
      const auto& x = replicas[a];
      const auto& y = replicas[b];
      if (x.group != y.group) continue;
      const std::size_t n = std::min(x.commit_index, y.commit_index);
      for (std::size_t i = 0; i < n; ++i) {
        if (!(x.log[i] == y.log[i])) ++violations;
      }
    }
  }
  return violations;
}

FtResult tolerant_all_reduce(sim::Simulator& sim,
                             std::span<const GradientVector> inputs,
                             const FtOptions& options) {
  options.validate();
  if (inputs.empty()) throw InvalidArgument("collective needs at least one input");
  for (const auto& v : inputs) {
    if (v.size() != inputs[0].size()) throw ShapeError("input length mismatch");
    if (v.precision() != inputs[0].precision()) throw ShapeError("input precision mismatch");
  }
  const std::size_t p = inputs.size();
  const std::size_t k = options.replica_factor;
  if (sim.size() < p * k) {
    throw InvalidArgument("simulator needs p * replica_factor nodes");
  }

  const coll::Schedule schedule = coll::binary_blocks_schedule(p, inputs[0].size());
  Shared sh(schedule, p, k, options, inputs);
  for (std::size_t g = 0; g < p; ++g) {
    const auto& ops = schedule.ops[g];
    for (std::size_t i = 0; i < ops.size(); ++i) {
      if (ops[i].kind != coll::OpKind::kSend) {
        sh.recv_index[g][{ops[i].peer, ops[i].tag}] = static_cast<std::uint32_t>(i);
      }
    }
  }
  const sim::Time stall = options.stall_timeout > 0.0 ? options.stall_timeout
                                                      : 200.0 * options.heartbeat;

  std::vector<std::unique_ptr<Replica>> replicas;
  std::vector<sim::NodeId> nodes;
  for (std::size_t g = 0; g < p; ++g) {
    for (std::size_t r = 0; r < k; ++r) {
      replicas.push_back(std::make_unique<Replica>(sh, g, r));
      nodes.push_back(replica_node(g, r, k));
    }
  }
  struct Guard {
    sim::Simulator& sim;
    const std::vector<sim::NodeId>& nodes;
    ~Guard() {
      for (auto n : nodes) sim.detach(n);
    }
  } guard{sim, nodes};
  for (std::size_t i = 0; i < replicas.size(); ++i) sim.attach(nodes[i], replicas[i].get());

  sh.last_progress = sim.now();
  for (std::size_t i = 0; i < replicas.size(); ++i) {
    if (sim.alive(nodes[i])) replicas[i]->start(sim);
  }

  auto leader_done = [&](std::size_t g) -> const Replica* {
    for (std::size_t r = 0; r < k; ++r) {
      const auto& rep = replicas[g * k + r];
      if (sim.alive(nodes[g * k + r]) && rep->done()) return rep.get();
    }
    return nullptr;
  };
  auto all_done = [&] {
    for (std::size_t g = 0; g < p; ++g) {
      if (!leader_done(g)) return false;
    }
    return true;
  };
  bool stalled = false;
  FtResult result;
  try {
    result.elapsed = sim.run_until(
        [&] {
          if (all_done() || sh.unavailable) return true;
          stalled = sim.now() - sh.last_progress > stall;
          return stalled;
        },
        options.deadline);
  } catch (const DeadlockError&) {
    if (auto g = group_without_majority(sim, p, k)) throw_unavailable(*g);
    throw;
  }
  if (sh.unavailable) throw_unavailable(*sh.unavailable);
  if (stalled) {
    if (auto g = group_without_majority(sim, p, k)) throw_unavailable(*g);
    throw Timeout("tolerant all-reduce made no progress");
  }
  // Results are only handed out while every group still holds a live
  // majority; a group below it can no longer vouch for its replicated state.
  if (auto g = group_without_majority(sim, p, k)) throw_unavailable(*g);

  for (std::size_t g = 0; g < p; ++g) {
    GradientVector out = leader_done(g)->values();
    tensor::finalize(out, options.op);
    result.outputs.push_back(std::move(out));
  }
  result.data_messages = sh.data_messages;
  result.control_messages = sh.control_messages;
  result.raft_messages = sh.raft_messages;
  result.elections = sh.elections;
  result.election_rounds = sh.rounds;
  result.split_votes = sh.splits;
  for (const auto& rep : replicas) result.replicas.push_back(rep->report(sim));
  result.safety_violations = audit_logs(result.replicas);
  return result;
}

}  // namespace gradsim::ft
