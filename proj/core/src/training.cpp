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

#include "gradsim/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>

#include "gradsim/collectives.hpp"
#include "gradsim/error.hpp"
#include "gradsim/ftreduce.hpp"
#include "gradsim/half.hpp"
#include "gradsim/tensor.hpp"
#include "gradsim/wire.hpp"

namespace gradsim::train {
namespace {

constexpr std::uint32_t kTrainChannel = 5;

using Vec = std::vector<double>;

// Walks one worker's shard, wrapping at the end.
class ShardCursor {
 public:
  ShardCursor(std::size_t size, std::size_t workers, std::size_t k)
      : workers_(workers), k_(k), count_(workload::shard_count(size, workers, k)) {
    if (count_ == 0) throw InvalidArgument("dataset smaller than the worker count");
  }
  std::vector<std::size_t> next(std::size_t n) {
    std::vector<std::size_t> out(n);
    for (auto& j : out) {
      j = k_ + pos_ * workers_;
      pos_ = (pos_ + 1) % count_;
    }
    return out;
  }

 private:
  std::size_t workers_;
  std::size_t k_;
  std::size_t count_;
  std::size_t pos_ = 0;
};

Vec partial_gradient(const workload::Workload& wl, std::span<const double> w,
                     std::span<const std::size_t> batch) {
  Vec g(wl.params(), 0.0);
  wl.gradient_sum(w, batch, g);
  return g;
}

// Left-to-right accumulation shared by every path that must agree bit for
// bit with another.
void add_into(Vec& total, std::span<const double> part) {
  for (std::size_t i = 0; i < total.size(); ++i) total[i] += part[i];
}

double scaled_norm(const Vec& total, double divisor) {
  double sq = 0.0;
  for (double v : total) sq += (v / divisor) * (v / divisor);
  return std::sqrt(sq);
}

void apply_failures(sim::Simulator& sim, const NetworkOptions& net) {
  for (const auto& f : net.failures) {
    if (f.node >= sim.size()) {
      throw ConfigError("network.failures", "failure names unknown node " +
                                                std::to_string(f.node));
    }
    sim.inject_failure(f.node, f.time, f.kind, f.slow_factor);
  }
}

std::unique_ptr<sim::Simulator> make_sim(std::size_t nodes, const NetworkOptions& net) {
  net.latency.validate();
  auto sim = std::make_unique<sim::Simulator>(nodes, net.latency, net.sim);
  apply_failures(*sim, net);
  return sim;
}

std::vector<std::uint8_t> encode_vector(std::uint64_t a, std::uint32_t b,
                                        std::span<const double> v) {
  wire::Writer w;
  w.u64(a);
  w.u32(b);
  tensor::serialize_into(w.buffer(), v, tensor::Precision::kSingle);
  return w.take();
}

struct Decoded {
  std::uint64_t a = 0;
  std::uint32_t b = 0;
  Vec values;
};

Decoded decode_vector(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes);
  Decoded d;
  d.a = r.u64();
  d.b = r.u32();
  std::size_t off = r.position();
  d.values = tensor::deserialize(bytes, off).data();
  return d;
}

// Lets every live node burn `duration` of compute, then returns. A node that
// crashes mid-compute stops counting; the collective that follows reports it.
class ComputeBarrier final : public sim::Process {
 public:
  explicit ComputeBarrier(std::size_t nodes) : busy_(nodes, false) {}
  void on_message(sim::Simulator&, const sim::Message&) override {}
  void on_compute_done(sim::Simulator&, sim::NodeId self, std::uint64_t) override {
    busy_[self] = false;
  }
  bool done(const sim::Simulator& sim) const {
    for (std::size_t n = 0; n < busy_.size(); ++n) {
      if (busy_[n] && sim.alive(static_cast<sim::NodeId>(n))) return false;
    }
    return true;
  }
  std::vector<bool> busy_;
};

void advance_compute(sim::Simulator& sim, std::span<const sim::NodeId> nodes,
                     double duration) {
  if (duration <= 0.0) return;
  ComputeBarrier barrier(sim.size());
  for (auto n : nodes) {
    if (!sim.alive(n)) continue;
    sim.attach(n, &barrier);
    sim.start_compute(n, duration, 0);
    barrier.busy_[n] = true;
  }
  sim.run_until([&] { return barrier.done(sim); });
  for (auto n : nodes) sim.detach(n);
}

metrics::Record base_record(std::uint64_t step, double time, double loss) {
  metrics::Record r;
  r.step = step;
  r.sim_time = time;
  r.loss = loss;
  return r;
}

void finish(RunResult& out, const sim::Simulator& sim, bool keep_trace) {
  out.bytes_sent = sim.bytes_sent();
  out.messages = sim.messages_sent();
  if (keep_trace) out.trace = sim.trace();
}

}  // namespace

const char* to_string(LrSchedule::Kind k) noexcept {
  switch (k) {
    case LrSchedule::Kind::kConstant: return "constant";
    case LrSchedule::Kind::kLinearScaling: return "linear-scaling";
    case LrSchedule::Kind::kPolynomial: return "polynomial";
    case LrSchedule::Kind::kStepDecay: return "step-decay";
  }
  return "?";
}

LrSchedule::Kind lr_kind_from_string(const std::string& name) {
  if (name == "constant") return LrSchedule::Kind::kConstant;
  if (name == "linear-scaling") return LrSchedule::Kind::kLinearScaling;
  if (name == "polynomial") return LrSchedule::Kind::kPolynomial;
  if (name == "step-decay") return LrSchedule::Kind::kStepDecay;
  throw InvalidArgument("unknown learning-rate schedule '" + name + "'");
}

double LrSchedule::rate(double base, double epoch, std::uint64_t step,
                        std::uint64_t run_steps) const {
  switch (kind) {
    case Kind::kConstant: return base;
    case Kind::kLinearScaling:
      return optim::linear_scaling_schedule(base, k, epoch, warmup_epochs);
    case Kind::kPolynomial:
      return optim::polynomial_decay(base, step, total_steps ? total_steps : run_steps, power);
    case Kind::kStepDecay:
      return base * std::pow(decay, std::floor(std::max(epoch, 0.0) / interval_epochs));
  }
  return base;
}

std::size_t BatchSchedule::at(std::size_t base, double epoch, std::size_t dataset) const {
  if (!increasing) return base;
  return optim::batch_size_schedule(base, factor, interval_epochs, epoch, max_batch, dataset);
}

// ---------------------------------------------------------------------------
// Single node

RunResult single_node_sgd(const workload::Workload& wl, const SingleNodeOptions& opts) {
  opts.hp.validate();
  if (opts.micro_batches == 0) throw ConfigError("micro_batches", "must be >= 1");
  const std::size_t m = opts.micro_batches;
  std::vector<ShardCursor> cursors;
  for (std::size_t k = 0; k < m; ++k) cursors.emplace_back(wl.size(), m, k);

  RunResult out;
  Vec w = wl.initial_weights();
  std::uint64_t processed = 0;
  for (std::size_t step = 0; step < opts.steps; ++step) {
    const double epoch = static_cast<double>(processed) / static_cast<double>(wl.size());
    const std::size_t n = opts.batch.at(opts.hp.batch_size, epoch, wl.size());
    const double eta = opts.lr.rate(opts.hp.eta, epoch, step, opts.steps);
    Vec total(wl.params(), 0.0);
    for (auto& c : cursors) add_into(total, partial_gradient(wl, w, c.next(n)));
    const std::size_t global = m * n;
    bool applied = true;
    if (opts.lars) {
      Vec avg(total.size());
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = total[i] / static_cast<double>(global);
      optim::lars_update(w, avg, wl.layers(), opts.hp.trust, opts.hp.weight_decay, eta);
    } else {
      applied = optim::sgd_step(w, total, eta, global);
    }
    if (!applied) ++out.skipped;
    processed += global;
    auto rec = base_record(step + 1, 0.0, wl.loss(w));
    rec.grad_norm = scaled_norm(total, static_cast<double>(global));
    rec.effective_lr = eta;
    rec.effective_batch = global;
    rec.skipped = out.skipped;
    out.records.push_back(rec);
  }
  out.weights = std::move(w);
  return out;
}

// ---------------------------------------------------------------------------
// Parameter-server synchronous SGD

namespace {

struct SyncShared {
  const workload::Workload& wl;
  const SyncOptions& opts;
  std::size_t machines;
  sim::NodeId server;
};

class SyncWorker final : public sim::Process {
 public:
  SyncWorker(SyncShared& s, std::uint32_t id) : s_(s), id_(id) {}

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    auto d = decode_vector(msg.payload);
    pending_.push_back({d.a, std::move(d.values)});
    if (!busy_) start(sim);
  }

  void on_compute_done(sim::Simulator& sim, sim::NodeId, std::uint64_t) override {
    auto [round, w] = std::move(pending_.front());
    pending_.erase(pending_.begin());
    const auto batch = workload::shard_batch(s_.wl.size(), s_.machines, id_, round,
                                             s_.opts.hp.batch_size);
    const Vec g = partial_gradient(s_.wl, w, batch);
    sim.send(id_, s_.server, kTrainChannel, encode_vector(round, id_, g));
    busy_ = false;
    if (!pending_.empty()) start(sim);
  }

 private:
  // Rounds are worked through in order; none is skipped, so per-link
  // traffic is the same whatever the aggregation rule.
  void start(sim::Simulator& sim) {
    busy_ = true;
    sim.start_compute(id_, s_.opts.net.compute_time, pending_.front().first);
  }

  SyncShared& s_;
  std::uint32_t id_;
  bool busy_ = false;
  std::vector<std::pair<std::uint64_t, Vec>> pending_;
};

class SyncServer final : public sim::Process {
 public:
  SyncServer(SyncShared& s, RunResult& out, Vec w)
      : dead_(s.machines, false), s_(s), out_(out), w_(std::move(w)) {}

  void start_round(sim::Simulator& sim) {
    round_start_ = sim.now();
    received_.assign(s_.machines, std::nullopt);
    count_ = 0;
    for (std::uint32_t k = 0; k < s_.machines; ++k) {
      if (dead_[k]) continue;
      sim.send(s_.server, k, kTrainChannel, encode_vector(round_, 0, w_));
    }
  }

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    auto d = decode_vector(msg.payload);
    if (d.a != round_ || count_ >= s_.opts.workers) {
      ++out_.discarded;
      return;
    }
    received_[d.b] = std::move(d.values);
    if (++count_ == s_.opts.workers) complete(sim);
  }

  void on_send_failed(sim::Simulator&, const sim::Message& msg) override {
    dead_[msg.to] = true;
    const auto live = static_cast<std::size_t>(std::count(dead_.begin(), dead_.end(), false));
    if (live < s_.opts.workers) failed_ = true;
  }

  std::string waiting_on(sim::NodeId) const override {
    return done_ ? std::string() : "gradients for round " + std::to_string(round_);
  }

  bool done_ = false;
  bool failed_ = false;
  std::vector<bool> dead_;
  Vec& weights() { return w_; }

 private:
  void complete(sim::Simulator& sim) {
    Vec total(w_.size(), 0.0);
    for (const auto& part : received_) {
      if (part) add_into(total, *part);
    }
    const std::size_t global = s_.opts.workers * s_.opts.hp.batch_size;
    if (!optim::sgd_step(w_, total, s_.opts.hp.eta, global)) ++out_.skipped;
    out_.round_times.push_back(sim.now() - round_start_);
    auto rec = base_record(round_ + 1, sim.now(), s_.wl.loss(w_));
    rec.grad_norm = scaled_norm(total, static_cast<double>(global));
    rec.effective_lr = s_.opts.hp.eta;
    rec.effective_batch = global;
    rec.bytes_sent = sim.bytes_sent();
    rec.skipped = out_.skipped;
    out_.records.push_back(rec);
    ++round_;
    if (round_ == s_.opts.steps) {
      done_ = true;
      out_.sim_time = sim.now();
    } else {
      start_round(sim);
    }
  }

  SyncShared& s_;
  RunResult& out_;
  Vec w_;
  std::uint64_t round_ = 0;
  double round_start_ = 0.0;
  std::size_t count_ = 0;
  std::vector<std::optional<Vec>> received_;
};

}  // namespace

RunResult sync_sgd(const workload::Workload& wl, const SyncOptions& opts) {
  opts.hp.validate();
  if (opts.workers == 0) throw ConfigError("workers", "must be >= 1");
  const std::size_t machines = opts.workers + opts.backups;
  auto sim = make_sim(machines + 1, opts.net);
  SyncShared shared{wl, opts, machines, static_cast<sim::NodeId>(machines)};
  RunResult out;
  SyncServer server(shared, out, wl.initial_weights());
  std::vector<std::unique_ptr<SyncWorker>> workers;
  for (std::uint32_t k = 0; k < machines; ++k) {
    workers.push_back(std::make_unique<SyncWorker>(shared, k));
    sim->attach(k, workers.back().get());
  }
  sim->attach(shared.server, &server);
  if (opts.steps > 0) {
    server.start_round(*sim);
    sim->run_until([&] { return server.done_ || server.failed_; });
  }
  if (server.failed_) {
    std::vector<std::uint32_t> dead;
    for (std::uint32_t k = 0; k < machines; ++k) {
      if (server.dead_[k]) dead.push_back(k);
    }
    sim->detach_all();
    throw CollectiveFailed(dead, "synchronous round cannot collect " +
                                     std::to_string(opts.workers) + " gradients");
  }
  sim->detach_all();
  out.weights = server.weights();
  finish(out, *sim, opts.net.sim.record_trace);
  return out;
}

// ---------------------------------------------------------------------------
// All-reduce synchronous SGD

RunResult allreduce_sgd(const workload::Workload& wl, const AllReduceSgdOptions& opts) {
  opts.hp.validate();
  const std::size_t p = opts.workers;
  if (p == 0) throw ConfigError("workers", "must be >= 1");
  const std::size_t k = opts.fault_tolerant ? opts.replica_factor : 1;
  auto sim = make_sim(p * k, opts.net);
  std::vector<sim::NodeId> all(p * k);
  std::iota(all.begin(), all.end(), sim::NodeId{0});

  RunResult out;
  Vec w = wl.initial_weights();
  const std::size_t global = p * opts.hp.batch_size;
  for (std::size_t step = 0; step < opts.steps; ++step) {
    advance_compute(*sim, all, opts.net.compute_time);
    std::vector<tensor::GradientVector> inputs;
    for (std::size_t i = 0; i < p; ++i) {
      const auto batch = workload::shard_batch(wl.size(), p, i, step, opts.hp.batch_size);
      inputs.emplace_back(partial_gradient(wl, w, batch));
    }
    Vec total;
    if (opts.fault_tolerant) {
      ft::FtOptions fo;
      fo.replica_factor = k;
      fo.collective_id = static_cast<std::uint32_t>(step);
      fo.seed = opts.net.latency.seed + step;
      auto res = ft::tolerant_all_reduce(*sim, inputs, fo);
      total = res.outputs.at(0).data();
    } else {
      coll::CollectiveOptions co;
      co.collective_id = static_cast<std::uint32_t>(step);
      co.group_size = opts.group_size;
      auto res = coll::all_reduce(*sim, opts.algorithm, inputs, co);
      total = res.outputs.at(0).data();
    }
    if (!optim::sgd_step(w, total, opts.hp.eta, global)) ++out.skipped;
    auto rec = base_record(step + 1, sim->now(), wl.loss(w));
    rec.grad_norm = scaled_norm(total, static_cast<double>(global));
    rec.effective_lr = opts.hp.eta;
    rec.effective_batch = global;
    rec.bytes_sent = sim->bytes_sent();
    rec.skipped = out.skipped;
    out.records.push_back(rec);
  }
  out.sim_time = sim->now();
  out.weights = std::move(w);
  finish(out, *sim, opts.net.sim.record_trace);
  return out;
}

// ---------------------------------------------------------------------------
// n-softsync asynchronous SGD

namespace {

struct AsyncShared {
  const workload::Workload& wl;
  const AsyncOptions& opts;
  sim::NodeId server;
};

class AsyncLearner final : public sim::Process {
 public:
  AsyncLearner(AsyncShared& s, std::uint32_t id) : s_(s), id_(id) {}

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    auto d = decode_vector(msg.payload);
    version_ = d.a;
    w_ = std::move(d.values);
    sim.start_compute(id_, s_.opts.net.compute_time, version_);
  }

  void on_compute_done(sim::Simulator& sim, sim::NodeId, std::uint64_t) override {
    const auto batch = workload::shard_batch(s_.wl.size(), s_.opts.async.lambda, id_,
                                             steps_++, s_.opts.hp.batch_size);
    const Vec g = partial_gradient(s_.wl, w_, batch);
    sim.send(id_, s_.server, kTrainChannel, encode_vector(version_, id_, g));
  }

 private:
  AsyncShared& s_;
  std::uint32_t id_;
  std::uint64_t version_ = 0;
  std::uint64_t steps_ = 0;
  Vec w_;
};

class AsyncServer final : public sim::Process {
 public:
  AsyncServer(AsyncShared& s, RunResult& out, Vec w)
      : s_(s), out_(out), w_(std::move(w)), c_(s.opts.async.c()) {}

  void start(sim::Simulator& sim) {
    for (std::uint32_t k = 0; k < s_.opts.async.lambda; ++k) send_weights(sim, k);
  }

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    if (done_) return;
    auto d = decode_vector(msg.payload);
    buffer_.push_back(std::move(d));
    if (buffer_.size() >= c_) apply(sim);
  }

  bool done_ = false;
  Vec& weights() { return w_; }

 private:
  void send_weights(sim::Simulator& sim, std::uint32_t k) {
    sim.send(s_.server, k, kTrainChannel, encode_vector(version_, 0, w_));
  }

  void apply(sim::Simulator& sim) {
    // Learner order, so a full barrier (c = lambda) sums like sync_sgd.
    std::stable_sort(buffer_.begin(), buffer_.end(),
                     [](const Decoded& x, const Decoded& y) { return x.b < y.b; });
    const std::size_t global = buffer_.size() * s_.opts.hp.batch_size;
    const double denom = static_cast<double>(global);
    std::vector<double> lrs;
    double stale_sum = 0.0;
    double lr_sum = 0.0;
    for (const auto& g : buffer_) {
      const std::uint64_t staleness = version_ - g.a;
      out_.staleness.push_back(staleness);
      stale_sum += static_cast<double>(staleness);
      lrs.push_back(optim::staleness_lr(s_.opts.hp.eta, staleness, s_.opts.policy));
      lr_sum += lrs.back();
    }
    const bool uniform = std::all_of(lrs.begin(), lrs.end(),
                                     [&](double lr) { return lr == lrs.front(); });
    Vec delta(w_.size(), 0.0);
    bool applied;
    if (uniform) {
      // Equal rates: one plain SGD step on the summed gradient.
      for (const auto& g : buffer_) add_into(delta, g.values);
      applied = optim::sgd_step(w_, delta, lrs.front(), global);
      for (auto& v : delta) v *= lrs.front();
    } else {
      for (std::size_t j = 0; j < buffer_.size(); ++j) {
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += lrs[j] * buffer_[j].values[i];
      }
      applied = std::all_of(delta.begin(), delta.end(), [](double v) { return std::isfinite(v); });
      if (applied) {
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i] -= delta[i] / denom;
      }
    }
    if (!applied) ++out_.skipped;
    ++version_;
    auto rec = base_record(version_, sim.now(), s_.wl.loss(w_));
    rec.grad_norm = scaled_norm(delta, denom);
    rec.staleness_mean = stale_sum / static_cast<double>(buffer_.size());
    rec.effective_lr = lr_sum / static_cast<double>(buffer_.size());
    rec.effective_batch = static_cast<std::uint64_t>(denom);
    rec.bytes_sent = sim.bytes_sent();
    rec.skipped = out_.skipped;
    out_.records.push_back(rec);
    std::vector<std::uint32_t> senders;
    for (const auto& g : buffer_) senders.push_back(g.b);
    buffer_.clear();
    if (version_ == s_.opts.updates) {
      done_ = true;
      out_.sim_time = sim.now();
      return;
    }
    for (auto k : senders) send_weights(sim, k);
  }

  AsyncShared& s_;
  RunResult& out_;
  Vec w_;
  std::size_t c_;
  std::uint64_t version_ = 0;
  std::vector<Decoded> buffer_;
};

}  // namespace

RunResult async_sgd(const workload::Workload& wl, const AsyncOptions& opts) {
  opts.hp.validate();
  opts.async.validate();
  const std::size_t lambda = opts.async.lambda;
  auto sim = make_sim(lambda + 1, opts.net);
  AsyncShared shared{wl, opts, static_cast<sim::NodeId>(lambda)};
  RunResult out;
  AsyncServer server(shared, out, wl.initial_weights());
  std::vector<std::unique_ptr<AsyncLearner>> learners;
  for (std::uint32_t k = 0; k < lambda; ++k) {
    learners.push_back(std::make_unique<AsyncLearner>(shared, k));
    sim->attach(k, learners.back().get());
  }
  sim->attach(shared.server, &server);
  if (opts.updates > 0) {
    server.start(*sim);
    sim->run_until([&] { return server.done_; });
  }
  sim->detach_all();
  out.weights = server.weights();
  finish(out, *sim, opts.net.sim.record_trace);
  return out;
}

// ---------------------------------------------------------------------------
// EASGD

namespace {

struct EasgdShared {
  const workload::Workload& wl;
  const EasgdOptions& opts;
  sim::NodeId center;
  RunResult& out;
  Vec center_w;
  std::vector<Vec> workers;
  std::vector<std::size_t> finished;  // workers done with step t
  std::size_t steps_done = 0;

  void step_finished(sim::Simulator& sim, std::size_t t) {
    if (finished.size() <= t) finished.resize(t + 1, 0);
    if (++finished[t] != opts.workers) return;
    ++steps_done;
    auto rec = base_record(t + 1, sim.now(), wl.loss(center_w));
    rec.effective_lr = opts.hp.eta;
    rec.effective_batch = opts.workers * opts.hp.batch_size;
    rec.bytes_sent = sim.bytes_sent();
    out.records.push_back(rec);
    if (steps_done == opts.steps) out.sim_time = sim.now();
  }
};

class EasgdWorker final : public sim::Process {
 public:
  EasgdWorker(EasgdShared& s, std::uint32_t id) : s_(s), id_(id) {}

  void begin(sim::Simulator& sim) {
    if (t_ < s_.opts.steps) sim.start_compute(id_, s_.opts.net.compute_time, t_);
  }

  void on_compute_done(sim::Simulator& sim, sim::NodeId, std::uint64_t) override {
    auto& x = s_.workers[id_];
    const auto batch = workload::shard_batch(s_.wl.size(), s_.opts.workers, id_, t_,
                                             s_.opts.hp.batch_size);
    g_ = partial_gradient(s_.wl, x, batch);
    const double n = static_cast<double>(s_.opts.hp.batch_size);
    for (auto& v : g_) v /= n;
    if (t_ % s_.opts.hp.tau == 0) {
      sim.send(id_, s_.center, kTrainChannel, encode_vector(t_, id_, x));
      return;  // resumes when the center answers
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= s_.opts.hp.eta * g_[i];
    advance(sim);
  }

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    const auto d = decode_vector(msg.payload);
    optim::easgd_worker_update(s_.workers[id_], g_, d.values, s_.opts.hp.eta,
                               s_.opts.hp.rho);
    advance(sim);
  }

 private:
  void advance(sim::Simulator& sim) {
    s_.step_finished(sim, t_);
    ++t_;
    begin(sim);
  }

  EasgdShared& s_;
  std::uint32_t id_;
  std::uint64_t t_ = 0;
  Vec g_;
};

class EasgdCenter final : public sim::Process {
 public:
  explicit EasgdCenter(EasgdShared& s) : s_(s) {}

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    auto d = decode_vector(msg.payload);
    arrived_[d.b] = std::move(d.values);
    if (arrived_.size() != s_.opts.workers) return;
    // Workers are answered with the incoming center before it moves, so
    // both sides of the elastic exchange see the same snapshot.
    for (const auto& [k, x] : arrived_) {
      sim.send(s_.center, k, kTrainChannel, encode_vector(d.a, 0, s_.center_w));
    }
    std::vector<Vec> xs;
    for (auto& [k, x] : arrived_) xs.push_back(std::move(x));
    optim::easgd_center_update(s_.center_w, xs, s_.opts.hp.eta, s_.opts.hp.rho);
    arrived_.clear();
  }

 private:
  EasgdShared& s_;
  std::map<std::uint32_t, Vec> arrived_;
};

}  // namespace

RunResult easgd(const workload::Workload& wl, const EasgdOptions& opts) {
  opts.hp.validate();
  if (opts.workers == 0) throw ConfigError("workers", "must be >= 1");
  auto sim = make_sim(opts.workers + 1, opts.net);
  RunResult out;
  const Vec w0 = wl.initial_weights();
  EasgdShared shared{wl, opts, static_cast<sim::NodeId>(opts.workers), out, w0,
                     std::vector<Vec>(opts.workers, w0), {}, 0};
  EasgdCenter center(shared);
  std::vector<std::unique_ptr<EasgdWorker>> workers;
  for (std::uint32_t k = 0; k < opts.workers; ++k) {
    workers.push_back(std::make_unique<EasgdWorker>(shared, k));
    sim->attach(k, workers.back().get());
  }
  sim->attach(shared.center, &center);
  for (auto& wk : workers) wk->begin(*sim);
  if (opts.steps > 0) sim->run_until([&] { return shared.steps_done == opts.steps; });
  sim->detach_all();
  out.weights = shared.center_w;
  finish(out, *sim, opts.net.sim.record_trace);
  return out;
}

// ---------------------------------------------------------------------------
// Gossip SGD

namespace {

struct GossipShared {
  const workload::Workload& wl;
  const GossipOptions& opts;
  RunResult& out;
  std::vector<Vec> nodes;
  std::vector<std::size_t> finished;
  std::size_t steps_done = 0;

  Vec mean() const {
    Vec m(nodes[0].size(), 0.0);
    for (const auto& x : nodes) add_into(m, x);
    for (auto& v : m) v /= static_cast<double>(nodes.size());
    return m;
  }

  void step_finished(sim::Simulator& sim, std::size_t t) {
    if (finished.size() <= t) finished.resize(t + 1, 0);
    if (++finished[t] != opts.workers) return;
    ++steps_done;
    auto rec = base_record(t + 1, sim.now(), wl.loss(mean()));
    rec.grad_norm = optim::max_pairwise_distance(nodes);
    rec.effective_lr = opts.hp.eta;
    rec.effective_batch = opts.workers * opts.hp.batch_size;
    rec.bytes_sent = sim.bytes_sent();
    out.records.push_back(rec);
    if (steps_done == opts.steps) out.sim_time = sim.now();
  }
};

class GossipNode final : public sim::Process {
 public:
  GossipNode(GossipShared& s, std::uint32_t id) : s_(s), id_(id) {}

  void begin(sim::Simulator& sim) {
    if (t_ < s_.opts.steps) sim.start_compute(id_, s_.opts.net.compute_time, t_);
  }

  void on_compute_done(sim::Simulator& sim, sim::NodeId, std::uint64_t) override {
    auto& x = s_.nodes[id_];
    const auto batch = workload::shard_batch(s_.wl.size(), s_.opts.workers, id_, t_,
                                             s_.opts.hp.batch_size);
    const Vec g = partial_gradient(s_.wl, x, batch);
    optim::sgd_step(x, g, s_.opts.hp.eta, s_.opts.hp.batch_size);
    partner_.reset();
    for (auto [a, b] : optim::gossip_matching(s_.opts.workers, s_.opts.seed, t_)) {
      if (a == id_) partner_ = static_cast<std::uint32_t>(b);
      if (b == id_) partner_ = static_cast<std::uint32_t>(a);
    }
    if (!partner_) {
      advance(sim);
      return;
    }
    sim.send(id_, *partner_, kTrainChannel, encode_vector(t_, id_, x));
    sent_ = true;
    try_average(sim);
  }

  void on_message(sim::Simulator& sim, const sim::Message& msg) override {
    inbox_.push_back(decode_vector(msg.payload));
    try_average(sim);
  }

 private:
  void try_average(sim::Simulator& sim) {
    if (!sent_) return;
    auto it = std::find_if(inbox_.begin(), inbox_.end(),
                           [&](const Decoded& d) { return d.a == t_; });
    if (it == inbox_.end()) return;
    auto& x = s_.nodes[id_];
    const bool lower = id_ < *partner_;
    for (std::size_t i = 0; i < x.size(); ++i) {
      // Same operand order on both ends, so the pair stays bit-identical.
      x[i] = lower ? 0.5 * (x[i] + it->values[i]) : 0.5 * (it->values[i] + x[i]);
    }
    inbox_.erase(it);
    sent_ = false;
    advance(sim);
  }

  void advance(sim::Simulator& sim) {
    s_.step_finished(sim, t_);
    ++t_;
    begin(sim);
  }

  GossipShared& s_;
  std::uint32_t id_;
  std::uint64_t t_ = 0;
  bool sent_ = false;
  std::optional<std::uint32_t> partner_;
  std::vector<Decoded> inbox_;
};

}  // namespace

RunResult gossip_sgd(const workload::Workload& wl, const GossipOptions& opts) {
  opts.hp.validate();
  if (opts.workers == 0) throw ConfigError("workers", "must be >= 1");
  auto sim = make_sim(opts.workers, opts.net);
  RunResult out;
  GossipShared shared{wl, opts, out, std::vector<Vec>(opts.workers, wl.initial_weights()),
                      {}, 0};
  std::vector<std::unique_ptr<GossipNode>> nodes;
  for (std::uint32_t k = 0; k < opts.workers; ++k) {
    nodes.push_back(std::make_unique<GossipNode>(shared, k));
    sim->attach(k, nodes.back().get());
  }
  for (auto& n : nodes) n->begin(*sim);
  if (opts.steps > 0) sim->run_until([&] { return shared.steps_done == opts.steps; });
  sim->detach_all();
  out.weights = shared.mean();
  finish(out, *sim, opts.net.sim.record_trace);
  return out;
}

// ---------------------------------------------------------------------------
// Compressed data-parallel SGD

namespace {

constexpr std::size_t kBlobFraming = 12;  // all_gather_blobs message header

// Shared skeleton: per step every worker turns its averaged batch gradient
// into a blob, the blobs are ring all-gathered, and each worker decodes the
// same set and sums it in worker order.
template <typename Encode, typename Decode>
RunResult compressed_loop(const workload::Workload& wl, const optim::Hyperparams& hp,
                          std::size_t p, std::size_t steps, std::size_t epoch_size,
                          const NetworkOptions& net, Encode encode, Decode decode) {
  hp.validate();
  if (p == 0) throw ConfigError("workers", "must be >= 1");
  auto sim = make_sim(p, net);
  std::vector<sim::NodeId> all(p);
  std::iota(all.begin(), all.end(), sim::NodeId{0});
  const std::size_t dense_blob = tensor::serialized_size(wl.params(), tensor::Precision::kSingle);

  RunResult out;
  Vec w = wl.initial_weights();
  const double n = static_cast<double>(hp.batch_size);
  for (std::size_t step = 0; step < steps; ++step) {
    advance_compute(*sim, all, net.compute_time);
    const double epoch = static_cast<double>(step * p * hp.batch_size) /
                         static_cast<double>(epoch_size ? epoch_size : wl.size());
    std::vector<std::vector<std::uint8_t>> blobs;
    for (std::size_t k = 0; k < p; ++k) {
      const auto batch = workload::shard_batch(wl.size(), p, k, step, hp.batch_size);
      Vec g = partial_gradient(wl, w, batch);
      for (auto& v : g) v /= n;
      blobs.push_back(encode(k, g, epoch));
    }
    coll::CollectiveOptions co;
    co.collective_id = static_cast<std::uint32_t>(step);
    const auto gathered = coll::all_gather_blobs(*sim, blobs, co);
    Vec total(wl.params(), 0.0);
    for (std::size_t k = 0; k < p; ++k) decode(gathered.blobs[0][k], total);
    std::size_t actual = 0;
    for (const auto& b : blobs) actual += kBlobFraming + b.size();
    const double ratio = static_cast<double>(p * (kBlobFraming + dense_blob)) /
                         static_cast<double>(actual);
    if (!optim::sgd_step(w, total, hp.eta, p)) ++out.skipped;
    auto rec = base_record(step + 1, sim->now(), wl.loss(w));
    rec.grad_norm = scaled_norm(total, static_cast<double>(p));
    rec.effective_lr = hp.eta;
    rec.effective_batch = p * hp.batch_size;
    rec.bytes_sent = sim->bytes_sent();
    rec.compression_ratio = ratio;
    rec.skipped = out.skipped;
    out.records.push_back(rec);
  }
  out.sim_time = sim->now();
  out.weights = std::move(w);
  finish(out, *sim, net.sim.record_trace);
  return out;
}

void add_dense_blob(const std::vector<std::uint8_t>& blob, Vec& total) {
  add_into(total, tensor::deserialize(blob).data());
}

void add_sparse_blob(const std::vector<std::uint8_t>& blob, Vec& total) {
  const auto s = compress::sparse_decode(blob);
  if (s.dense_length != total.size()) throw DecodeError("sparse blob length mismatch");
  for (std::size_t i = 0; i < s.count(); ++i) total[s.indices[i]] += s.values[i];
}

}  // namespace

RunResult dgc_sgd(const workload::Workload& wl, const DgcOptions& opts) {
  opts.dgc.validate();
  const std::size_t p = opts.workers;
  if (opts.dense) {
    std::vector<Vec> velocity(p, Vec(wl.params(), 0.0));
    const double m = opts.dgc.momentum;
    return compressed_loop(
        wl, opts.hp, p, opts.steps, opts.epoch_size, opts.net,
        [&](std::size_t k, const Vec& g, double) {
          auto& u = velocity[k];
          for (std::size_t i = 0; i < u.size(); ++i) u[i] = m * u[i] + g[i];
          return tensor::serialize(tensor::GradientVector(u));
        },
        add_dense_blob);
  }
  std::vector<compress::DgcState> states(p, compress::DgcState(wl.params(), opts.dgc));
  const auto& layers = wl.layers();
  return compressed_loop(
      wl, opts.hp, p, opts.steps, opts.epoch_size, opts.net,
      [&](std::size_t k, const Vec& g, double epoch) {
        const double s = opts.dgc.sparsity_at(epoch);
        return compress::sparse_encode(states[k].step(g, layers, s));
      },
      add_sparse_blob);
}

RunResult error_feedback_sgd(const workload::Workload& wl,
                             const ErrorFeedbackOptions& opts) {
  const std::size_t p = opts.workers;
  std::vector<Vec> residual(p, Vec(wl.params(), 0.0));
  if (opts.scheme == ErrorFeedbackOptions::Scheme::kGradientDrop) {
    return compressed_loop(
        wl, opts.hp, p, opts.steps, 0, opts.net,
        [&](std::size_t k, const Vec& g, double) {
          auto r = compress::gradient_drop(g, residual[k], opts.drop_percent);
          residual[k] = std::move(r.residual);
          return compress::sparse_encode(r.sent);
        },
        add_sparse_blob);
  }
  return compressed_loop(
      wl, opts.hp, p, opts.steps, 0, opts.net,
      [&](std::size_t k, const Vec& g, double) {
        auto r = compress::onebit_quantize(g, residual[k]);
        residual[k] = std::move(r.error);
        return compress::onebit_encode(r.quantized);
      },
      [](const std::vector<std::uint8_t>& blob, Vec& total) {
        add_into(total, compress::onebit_decode(blob).dequantize());
      });
}

// ---------------------------------------------------------------------------
// Mixed precision

RunResult mixed_precision_sgd(const workload::Workload& wl,
                              const MixedPrecisionOptions& opts) {
  opts.hp.validate();
  auto state = opts.loss_scale;
  state.validate();
  RunResult out;
  const Vec w0 = wl.initial_weights();
  std::vector<float> master(w0.begin(), w0.end());
  ShardCursor cursor(wl.size(), 1, 0);
  precision::MixedUpdateOptions mo;
  mo.eta = opts.hp.eta;
  mo.clip_norm = opts.clip_norm;
  mo.weight_decay = opts.hp.weight_decay;
  const double n = static_cast<double>(opts.hp.batch_size);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    const Vec w = precision::from_half(precision::half_weights(master));
    Vec g = partial_gradient(wl, w, cursor.next(opts.hp.batch_size));
    for (auto& v : g) v = v / n * state.scale;
    const auto half = precision::to_half_gradients(g);
    const auto outcome = precision::mixed_update(master, half.values, state, mo);
    if (outcome == precision::UpdateOutcome::kSkipped) ++out.skipped;
    const Vec now(master.begin(), master.end());
    auto rec = base_record(step + 1, 0.0, wl.loss(now));
    rec.grad_norm = scaled_norm(g, state.scale);
    rec.effective_lr = opts.hp.eta;
    rec.effective_batch = opts.hp.batch_size;
    rec.skipped = out.skipped;
    out.records.push_back(rec);
  }
  out.weights.assign(master.begin(), master.end());
  return out;
}

}  // namespace gradsim::train
