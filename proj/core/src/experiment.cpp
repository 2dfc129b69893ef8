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

#include "gradsim/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "gradsim/collectives.hpp"
#include "gradsim/compress.hpp"
#include "gradsim/error.hpp"
#include "gradsim/ftreduce.hpp"
#include "gradsim/half.hpp"
#include "gradsim/optim.hpp"
#include "gradsim/precision.hpp"
#include "gradsim/presets.hpp"
#include "gradsim/rng.hpp"
#include "gradsim/schedule.hpp"
#include "gradsim/training.hpp"
#include "gradsim/workload.hpp"

namespace gradsim::harness {
namespace {

using Vec = std::vector<double>;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kCollectiveDataStream = 0xC011;
constexpr std::uint64_t kChaosStream = 0xCA05;
constexpr std::uint64_t kFeedbackStream = 0xEF;
constexpr std::uint64_t kSmallGradStream = 0x5A11;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

double distance(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

class Run {
 public:
  explicit Run(const ExperimentConfig& c) : c_(c) {}

  const ExperimentConfig& config() const { return c_; }
  ExperimentOutput& out() { return out_; }

  const workload::Workload& wl() {
    if (!wl_) wl_ = workload::generate_workload(c_.workload);
    return *wl_;
  }

  void check(const std::string& name, bool pass, const std::string& detail = {}) {
    out_.assertions.push_back({name, pass, detail});
  }

  void add_trace(const std::string& label, const std::optional<sim::Trace>& t) {
    if (!t) return;
    out_.trace += "# run " + label + "\n";
    out_.trace += t->to_string();
  }

  void add_trace(const std::string& label, const sim::Trace& t) {
    if (!c_.network.trace) return;
    out_.trace += "# run " + label + "\n";
    out_.trace += t.to_string();
  }

  // Trace accounting must agree with the runner's byte counter.
  void check_bytes(const std::string& label, const train::RunResult& r) {
    if (!r.trace) return;
    const auto traced = r.trace->bytes_sent();
    check(label + " trace bytes", traced == r.bytes_sent,
          std::to_string(traced) + " traced vs " + std::to_string(r.bytes_sent) + " counted");
  }

  train::NetworkOptions net() const { return c_.network.options(); }

 private:
  const ExperimentConfig& c_;
  ExperimentOutput out_;
  std::unique_ptr<workload::Workload> wl_;
};

// ---------------------------------------------------------------------------
// Training

train::RunResult run_training(const ExperimentConfig& c, const workload::Workload& wl) {
  const auto& o = c.optimizer;
  const auto net = c.network.options();
  switch (o.kind) {
    case OptimizerKind::kSgd:
    case OptimizerKind::kLars: {
      train::SingleNodeOptions s;
      s.hp = o.hp;
      s.steps = o.steps;
      s.micro_batches = o.micro_batches;
      s.lr = o.lr;
      s.batch = o.batch;
      s.lars = o.kind == OptimizerKind::kLars;
      return train::single_node_sgd(wl, s);
    }
    case OptimizerKind::kSync: {
      train::SyncOptions s;
      s.hp = o.hp;
      s.workers = o.workers;
      s.backups = o.backups;
      s.steps = o.steps;
      s.net = net;
      return train::sync_sgd(wl, s);
    }
    case OptimizerKind::kAllReduce: {
      train::AllReduceSgdOptions s;
      s.hp = o.hp;
      s.workers = o.workers;
      s.steps = o.steps;
      s.algorithm = c.collective.algorithm;
      s.group_size = c.collective.group_size;
      s.fault_tolerant = c.collective.fault_tolerant;
      s.replica_factor = c.collective.replica_factor;
      s.net = net;
      return train::allreduce_sgd(wl, s);
    }
    case OptimizerKind::kAsync: {
      train::AsyncOptions s;
      s.hp = o.hp;
      s.async = {o.workers, o.softsync_n};
      s.policy = o.staleness;
      s.updates = o.steps;
      s.net = net;
      return train::async_sgd(wl, s);
    }
    case OptimizerKind::kEasgd: {
      train::EasgdOptions s;
      s.hp = o.hp;
      s.workers = o.workers;
      s.steps = o.steps;
      s.net = net;
      return train::easgd(wl, s);
    }
    case OptimizerKind::kGossip: {
      train::GossipOptions s;
      s.hp = o.hp;
      s.workers = o.workers;
      s.steps = o.steps;
      s.seed = o.gossip_seed;
      s.net = net;
      return train::gossip_sgd(wl, s);
    }
    case OptimizerKind::kDgc: {
      train::DgcOptions s;
      s.hp = o.hp;
      s.workers = o.workers;
      s.steps = o.steps;
      s.dgc = c.compression.dgc;
      s.dense = c.compression.kind == CompressionKind::kNone;
      s.epoch_size = c.compression.epoch_size;
      s.net = net;
      return train::dgc_sgd(wl, s);
    }
    case OptimizerKind::kErrorFeedback: {
      train::ErrorFeedbackOptions s;
      s.hp = o.hp;
      if (c.compression.kind == CompressionKind::kOneBit) {
        s.scheme = train::ErrorFeedbackOptions::Scheme::kOneBit;
      } else if (c.compression.kind == CompressionKind::kGradientDrop) {
        s.scheme = train::ErrorFeedbackOptions::Scheme::kGradientDrop;
      } else {
        throw ConfigError("compression.kind", "error-feedback needs gradient-drop or onebit");
      }
      s.drop_percent = c.compression.drop_percent;
      s.workers = o.workers;
      s.steps = o.steps;
      s.net = net;
      return train::error_feedback_sgd(wl, s);
    }
    case OptimizerKind::kMixedPrecision: {
      train::MixedPrecisionOptions s;
      s.hp = o.hp;
      s.steps = o.steps;
      s.loss_scale = c.precision.loss_scale;
      s.clip_norm = c.precision.clip_norm;
      return train::mixed_precision_sgd(wl, s);
    }
  }
  throw ConfigError("optimizer.kind", "unsupported optimizer");
}

void summarize_run(metrics::Summary& s, const train::RunResult& r,
                   const workload::Workload& wl) {
  s.set("final_loss", r.final_loss());
  s.set("sim_time", r.sim_time);
  s.set("bytes_sent", r.bytes_sent);
  s.set("messages", r.messages);
  s.set("skipped", r.skipped);
  s.set("discarded", r.discarded);
  s.set("weights_fnv1a", fnv1a(r.weights));
  const Vec opt = wl.optimum();
  if (!opt.empty() && opt.size() == r.weights.size()) {
    s.set("distance_to_optimum", distance(r.weights, opt));
  }
  if (!r.staleness.empty()) {
    const auto mx = *std::max_element(r.staleness.begin(), r.staleness.end());
    const double sum = std::accumulate(r.staleness.begin(), r.staleness.end(), 0.0);
    s.set("staleness_max", mx);
    s.set("staleness_mean", sum / static_cast<double>(r.staleness.size()));
  }
}

void pipeline_train(Run& run) {
  const auto& c = run.config();
  auto r = run_training(c, run.wl());
  run.add_trace(to_string(c.optimizer.kind), r.trace);
  run.check_bytes(to_string(c.optimizer.kind), r);
  run.check("final loss finite", std::isfinite(r.final_loss()), fmt("%.17g", r.final_loss()));
  if (c.sweep.target_loss > 0.0) {
    run.check("final loss below target", r.final_loss() < c.sweep.target_loss,
              fmt("%.6g", r.final_loss()) + " vs " + fmt("%.6g", c.sweep.target_loss));
  }
  auto& s = run.out().summary;
  s.set("optimizer", std::string(to_string(c.optimizer.kind)));
  summarize_run(s, r, run.wl());
  run.out().records = std::move(r.records);
}

void pipeline_sync_exact(Run& run) {
  const auto& c = run.config();
  if (c.optimizer.backups != 0) {
    throw ConfigError("optimizer.backups", "sync-exact compares against the union batch; use 0");
  }
  train::SyncOptions s;
  s.hp = c.optimizer.hp;
  s.workers = c.optimizer.workers;
  s.steps = c.optimizer.steps;
  s.net = run.net();
  auto sync = train::sync_sgd(run.wl(), s);

  train::SingleNodeOptions b;
  b.hp = c.optimizer.hp;
  b.steps = c.optimizer.steps;
  b.micro_batches = c.optimizer.workers;
  auto base = train::single_node_sgd(run.wl(), b);

  std::size_t first_diff = sync.records.size();
  for (std::size_t i = 0; i < sync.records.size() && i < base.records.size(); ++i) {
    if (std::memcmp(&sync.records[i].loss, &base.records[i].loss, sizeof(double)) != 0) {
      first_diff = i;
      break;
    }
  }
  run.check("weights bit-identical to the union-batch baseline",
            bit_equal(sync.weights, base.weights),
            "sync " + std::to_string(fnv1a(sync.weights)) + " baseline " +
                std::to_string(fnv1a(base.weights)));
  run.check("per-step loss bit-identical", first_diff == sync.records.size(),
            first_diff == sync.records.size() ? "" : "first differs at step " +
                                                          std::to_string(first_diff + 1));
  run.add_trace("sync", sync.trace);
  run.check_bytes("sync", sync);
  auto& sum = run.out().summary;
  summarize_run(sum, sync, run.wl());
  sum.set("baseline_weights_fnv1a", fnv1a(base.weights));
  run.out().records = std::move(sync.records);
}

void pipeline_straggler(Run& run) {
  const auto& c = run.config();
  const std::size_t n = c.optimizer.workers;
  const std::size_t m = n + c.optimizer.backups;
  const bool emit_barrier = c.sweep.variant == "barrier";
  const double tol = c.sweep.tolerance > 0.0 ? c.sweep.tolerance : 0.05;
  const std::size_t seeds = std::max<std::size_t>(c.sweep.seeds, 1);

  std::size_t faster = 0;
  std::size_t close = 0;
  double worst = 0.0;
  double time_backup = 0.0;
  double time_barrier = 0.0;
  std::uint64_t discarded = 0;
  for (std::size_t k = 0; k < seeds; ++k) {
    train::SyncOptions s;
    s.hp = c.optimizer.hp;
    s.steps = c.optimizer.steps;
    s.net = run.net();
    s.net.latency.seed = c.network.latency.seed + k;
    s.net.sim.record_trace = c.network.trace && k == 0;
    s.workers = n;
    s.backups = m - n;
    auto backup = train::sync_sgd(run.wl(), s);
    s.workers = m;
    s.backups = 0;
    auto barrier = train::sync_sgd(run.wl(), s);

    if (backup.sim_time < barrier.sim_time) ++faster;
    const double rel = std::abs(backup.final_loss() - barrier.final_loss()) / barrier.final_loss();
    worst = std::max(worst, rel);
    if (rel < tol) ++close;
    time_backup += backup.sim_time;
    time_barrier += barrier.sim_time;
    discarded += backup.discarded;

    const auto& mine = emit_barrier ? barrier : backup;
    metrics::Record rec;
    rec.step = k;
    rec.sim_time = mine.sim_time;
    rec.loss = mine.final_loss();
    rec.grad_norm = mine.records.empty() ? 0.0 : mine.records.back().grad_norm;
    rec.effective_lr = c.optimizer.hp.eta;
    rec.effective_batch = (emit_barrier ? m : n) * c.optimizer.hp.batch_size;
    rec.bytes_sent = mine.bytes_sent;
    rec.skipped = mine.discarded;
    run.out().records.push_back(rec);
    if (k == 0) {
      run.add_trace(std::string(emit_barrier ? "barrier" : "backup") + " seed=0", mine.trace);
      run.check_bytes("seed 0", mine);
    }
  }
  const std::string label = std::to_string(n) + "-of-" + std::to_string(m);
  run.check(label + " strictly faster than " + std::to_string(m) + "-of-" + std::to_string(m),
            faster == seeds, std::to_string(faster) + "/" + std::to_string(seeds) + " seeds");
  run.check("final loss within " + fmt("%g", tol * 100) + "%", close == seeds,
            std::to_string(close) + "/" + std::to_string(seeds) + " seeds, worst " +
                fmt("%.4f", worst));
  auto& s = run.out().summary;
  s.set("variant", std::string(emit_barrier ? "barrier" : "backup"));
  s.set("seeds", static_cast<std::uint64_t>(seeds));
  s.set("faster_seeds", static_cast<std::uint64_t>(faster));
  s.set("worst_loss_rel_diff", worst);
  s.set("mean_sim_time_backup", time_backup / static_cast<double>(seeds));
  s.set("mean_sim_time_barrier", time_barrier / static_cast<double>(seeds));
  s.set("discarded_gradients", discarded);
}

void pipeline_softsync(Run& run) {
  const auto& c = run.config();
  struct Hand {
    std::size_t lambda, n, c;
  };
  for (const Hand h : {Hand{16, 4, 4}, Hand{8, 8, 1}, Hand{8, 1, 8}}) {
    const auto got = optim::softsync_c(h.lambda, h.n);
    run.check("c(" + std::to_string(h.lambda) + "," + std::to_string(h.n) + ")", got == h.c,
              std::to_string(got));
  }
  std::vector<std::size_t> ns{1};
  if (c.optimizer.softsync_n != 1) ns.push_back(c.optimizer.softsync_n);
  auto& s = run.out().summary;
  for (std::size_t idx = 0; idx < ns.size(); ++idx) {
    train::AsyncOptions a;
    a.hp = c.optimizer.hp;
    a.async = {c.optimizer.workers, ns[idx]};
    a.policy = c.optimizer.staleness;
    a.updates = c.optimizer.steps;
    a.net = run.net();
    auto r = train::async_sgd(run.wl(), a);
    const std::string label = "softsync_n=" + std::to_string(ns[idx]);
    const auto mx = r.staleness.empty()
                        ? std::uint64_t{0}
                        : *std::max_element(r.staleness.begin(), r.staleness.end());
    const double mean =
        r.staleness.empty() ? 0.0
                            : std::accumulate(r.staleness.begin(), r.staleness.end(), 0.0) /
                                  static_cast<double>(r.staleness.size());
    if (ns[idx] == 1) {
      run.check("softsync_n=1 staleness identically zero", mx == 0,
                "max staleness " + std::to_string(mx));
      train::SyncOptions so;
      so.hp = c.optimizer.hp;
      so.workers = c.optimizer.workers;
      so.steps = c.optimizer.steps;
      so.net = run.net();
      so.net.sim.record_trace = false;
      auto sync = train::sync_sgd(run.wl(), so);
      run.check("softsync_n=1 weights match the synchronous barrier",
                bit_equal(r.weights, sync.weights),
                fmt("distance %.3e", distance(r.weights, sync.weights)));
    }
    s.set(label + ".staleness_max", mx);
    s.set(label + ".staleness_mean", mean);
    s.set(label + ".final_loss", r.final_loss());
    s.set(label + ".c", static_cast<std::uint64_t>(a.async.c()));
    metrics::Record rec;
    rec.step = ns[idx];
    rec.sim_time = r.sim_time;
    rec.loss = r.final_loss();
    rec.staleness_mean = mean;
    rec.effective_lr = c.optimizer.hp.eta;
    rec.effective_batch = a.async.c() * c.optimizer.hp.batch_size;
    rec.bytes_sent = r.bytes_sent;
    rec.skipped = r.skipped;
    run.out().records.push_back(rec);
    run.add_trace(label, r.trace);
    run.check_bytes(label, r);
  }
}

void pipeline_easgd(Run& run) {
  const auto& c = run.config();
  const Vec opt = run.wl().optimum();
  if (opt.empty()) throw ConfigError("workload.kind", "easgd pipeline needs a known optimum");
  std::vector<std::size_t> taus = c.sweep.taus;
  if (taus.empty()) taus.push_back(c.optimizer.hp.tau);
  const double tol = c.sweep.tolerance > 0.0 ? c.sweep.tolerance : 1e-3;
  auto& s = run.out().summary;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    train::EasgdOptions e;
    e.hp = c.optimizer.hp;
    e.hp.tau = taus[i];
    e.workers = c.optimizer.workers;
    e.steps = c.optimizer.steps;
    e.net = run.net();
    auto r = train::easgd(run.wl(), e);
    const double d = distance(r.weights, opt);
    const std::string label = "tau=" + std::to_string(taus[i]);
    run.check("center within " + fmt("%g", tol) + " of optimum, " + label, d < tol,
              fmt("%.3e", d));
    s.set(label + ".distance", d);
    metrics::Record rec;
    rec.step = taus[i];
    rec.sim_time = r.sim_time;
    rec.loss = r.final_loss();
    rec.grad_norm = d;
    rec.effective_lr = c.optimizer.hp.eta;
    rec.effective_batch = c.optimizer.workers * c.optimizer.hp.batch_size;
    rec.bytes_sent = r.bytes_sent;
    run.out().records.push_back(rec);
    run.add_trace(label, r.trace);
    run.check_bytes(label, r);
  }
}

void pipeline_lars(Run& run) {
  const auto& c = run.config();
  {
    const Vec w{3.0, 4.0};
    const Vec g{0.0, 5.0};
    const double t = c.optimizer.hp.trust;
    const double lr = optim::lars_local_lr(w, g, t, 0.0);
    run.check("local rate equals trust when norms match", lr == t, fmt("%.17g", lr));
  }
  {
    const Vec w{5.76};
    const Vec g{1.0};
    const Vec w2{1345.0};
    const double a = optim::lars_local_lr(w, g, 1.0, 0.0);
    const double b = optim::lars_local_lr(w2, g, 1.0, 0.0);
    run.check("rate ratio 1345/5.76", b / a == 1345.0 / 5.76, fmt("%.17g", b / a));
  }
  auto r = run_training(c, run.wl());
  run.check("final loss finite", std::isfinite(r.final_loss()));
  if (c.sweep.target_loss > 0.0) {
    run.check("final loss below target", r.final_loss() < c.sweep.target_loss,
              fmt("%.6g", r.final_loss()));
  }
  summarize_run(run.out().summary, r, run.wl());
  run.out().records = std::move(r.records);
}

void pipeline_linear_scaling(Run& run) {
  const auto& c = run.config();
  std::vector<double> ks = c.sweep.k_values;
  if (ks.empty()) ks.push_back(c.optimizer.hp.k);
  const double base = c.optimizer.hp.eta;
  const double warm = c.optimizer.hp.warmup_epochs;
  std::uint64_t row = 0;
  for (double k : ks) {
    const double r0 = optim::linear_scaling_schedule(base, k, 0.0, warm);
    const double r5 = optim::linear_scaling_schedule(base, k, warm, warm);
    const std::string label = "k=" + fmt("%g", k);
    run.check(label + " epoch 0 rate", r0 == base, fmt("%.17g", r0));
    run.check(label + " end-of-warmup rate", r5 == k * base, fmt("%.17g", r5));
    for (int e = 0; e <= static_cast<int>(std::ceil(warm)) + 1; ++e) {
      metrics::Record rec;
      rec.step = row++;
      rec.effective_lr = optim::linear_scaling_schedule(base, k, e, warm);
      rec.effective_batch = static_cast<std::uint64_t>(k * c.optimizer.hp.batch_size);
      run.out().records.push_back(rec);
    }
  }
  run.out().summary.set("k_values", static_cast<std::uint64_t>(ks.size()));
}

// Loss at every epoch boundary of a single-node run.
std::vector<metrics::Record> epoch_checkpoints(const train::RunResult& r, std::size_t dataset,
                                               std::size_t epochs) {
  std::vector<metrics::Record> out;
  std::uint64_t processed = 0;
  std::size_t e = 1;
  for (const auto& rec : r.records) {
    processed += rec.effective_batch;
    if (e <= epochs && processed >= e * dataset) {
      auto cp = rec;
      cp.step = e++;
      out.push_back(cp);
    }
  }
  return out;
}

void pipeline_batch_equivalence(Run& run) {
  const auto& c = run.config();
  const auto& wl = run.wl();
  const std::size_t size = wl.size();
  const std::size_t b0 = c.optimizer.hp.batch_size;
  const std::uint64_t budget = static_cast<std::uint64_t>(c.optimizer.steps) * b0;
  if (budget % size != 0) {
    throw ConfigError("optimizer.steps", "steps x batch_size must be a whole number of epochs");
  }
  const std::size_t epochs = budget / size;
  const bool batch_variant = c.optimizer.batch.increasing;

  train::SingleNodeOptions grow;
  grow.hp = c.optimizer.hp;
  train::SingleNodeOptions decay = grow;
  if (batch_variant) {
    grow.batch = c.optimizer.batch;
    decay.lr.kind = train::LrSchedule::Kind::kStepDecay;
    decay.lr.decay = 1.0 / c.optimizer.batch.factor;
    decay.lr.interval_epochs = c.optimizer.batch.interval_epochs;
  } else {
    if (c.optimizer.lr.kind != train::LrSchedule::Kind::kStepDecay) {
      throw ConfigError("optimizer.lr_schedule.kind",
                        "batch-equivalence needs an increasing batch or a step-decay rate");
    }
    decay.lr = c.optimizer.lr;
    grow.batch.increasing = true;
    grow.batch.factor = 1.0 / c.optimizer.lr.decay;
    grow.batch.interval_epochs = c.optimizer.lr.interval_epochs;
    grow.batch.max_batch = size / 10;
  }
  decay.steps = c.optimizer.steps;
  // Steps the growing-batch run needs to cover the same examples.
  std::uint64_t processed = 0;
  std::size_t steps = 0;
  while (processed < budget) {
    const double epoch = static_cast<double>(processed) / static_cast<double>(size);
    processed += grow.batch.at(b0, epoch, size);
    ++steps;
  }
  grow.steps = steps;
  auto rg = train::single_node_sgd(wl, grow);
  auto rd = train::single_node_sgd(wl, decay);
  auto cg = epoch_checkpoints(rg, size, epochs);
  auto cd = epoch_checkpoints(rd, size, epochs);
  const double tol = c.sweep.tolerance > 0.0 ? c.sweep.tolerance : 0.05;
  double worst = 0.0;
  for (std::size_t e = 0; e < cg.size() && e < cd.size(); ++e) {
    worst = std::max(worst, std::abs(cg[e].loss - cd[e].loss) / cd[e].loss);
  }
  run.check("checkpoints aligned", cg.size() == epochs && cd.size() == epochs,
            std::to_string(cg.size()) + " vs " + std::to_string(cd.size()));
  run.check("loss trend within " + fmt("%g", tol * 100) + "% at equal examples", worst < tol,
            "worst " + fmt("%.4f", worst));
  auto& s = run.out().summary;
  s.set("variant", std::string(batch_variant ? "batch" : "lr"));
  s.set("epochs", static_cast<std::uint64_t>(epochs));
  s.set("steps_growing_batch", static_cast<std::uint64_t>(grow.steps));
  s.set("steps_decaying_lr", static_cast<std::uint64_t>(decay.steps));
  s.set("worst_rel_diff", worst);
  s.set("final_loss", (batch_variant ? rg : rd).final_loss());
  run.out().records = batch_variant ? std::move(cg) : std::move(cd);
}

train::DgcOptions dgc_options(const ExperimentConfig& c) {
  train::DgcOptions d;
  d.hp = c.optimizer.hp;
  d.workers = c.optimizer.workers;
  d.steps = c.optimizer.steps;
  d.dgc = c.compression.dgc;
  d.epoch_size = c.compression.epoch_size;
  d.net = c.network.options();
  return d;
}

void pipeline_dgc_sweep(Run& run) {
  const auto& c = run.config();
  std::vector<double> ss = c.sweep.sparsities;
  if (ss.empty()) ss = {0.0, 0.9, 0.99};
  std::sort(ss.begin(), ss.end());
  std::vector<std::uint64_t> bytes;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    auto d = dgc_options(c);
    d.dgc.sparsity = ss[i];
    d.dgc.warmup = false;
    auto r = train::dgc_sgd(run.wl(), d);
    const std::string label = "s=" + fmt("%g", ss[i]);
    metrics::Record rec;
    rec.step = i;
    rec.sim_time = r.sim_time;
    rec.loss = r.final_loss();
    rec.effective_lr = c.optimizer.hp.eta;
    rec.effective_batch = c.optimizer.workers * c.optimizer.hp.batch_size;
    rec.bytes_sent = r.bytes_sent;
    rec.compression_ratio = r.records.empty() ? 1.0 : r.records.back().compression_ratio;
    run.out().records.push_back(rec);
    run.out().summary.set(label + ".bytes_sent", r.bytes_sent);
    run.out().summary.set(label + ".final_loss", r.final_loss());
    run.add_trace(label, r.trace);
    run.check_bytes(label, r);
    bytes.push_back(r.bytes_sent);
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < bytes.size(); ++i) decreasing = decreasing && bytes[i] < bytes[i - 1];
  std::string detail;
  for (auto b : bytes) detail += (detail.empty() ? "" : " > ") + std::to_string(b);
  run.check("bytes sent strictly decreasing in sparsity", decreasing, detail);
}

void pipeline_dgc_equivalence(Run& run) {
  const auto& c = run.config();
  auto d = dgc_options(c);
  auto sparse = train::dgc_sgd(run.wl(), d);
  d.dense = true;
  auto dense = train::dgc_sgd(run.wl(), d);
  std::size_t first_diff = sparse.records.size();
  for (std::size_t i = 0; i < sparse.records.size() && i < dense.records.size(); ++i) {
    if (std::memcmp(&sparse.records[i].loss, &dense.records[i].loss, sizeof(double)) != 0) {
      first_diff = i;
      break;
    }
  }
  run.check("weights bit-identical to dense momentum SGD",
            bit_equal(sparse.weights, dense.weights));
  run.check("per-step loss bit-identical", first_diff == sparse.records.size(),
            first_diff == sparse.records.size() ? "" : "first differs at step " +
                                                            std::to_string(first_diff + 1));
  run.add_trace("dgc", sparse.trace);
  run.check_bytes("dgc", sparse);
  summarize_run(run.out().summary, sparse, run.wl());
  run.out().summary.set("dense_weights_fnv1a", fnv1a(dense.weights));
  run.out().records = std::move(sparse.records);
}

void pipeline_dgc_compression(Run& run) {
  const auto& c = run.config();
  auto d = dgc_options(c);
  auto sparse = train::dgc_sgd(run.wl(), d);
  d.dense = true;
  auto dense = train::dgc_sgd(run.wl(), d);
  const double ratio = sparse.records.empty() ? 0.0 : sparse.records.back().compression_ratio;
  const double rel = (sparse.final_loss() - dense.final_loss()) / dense.final_loss();
  const double tol = c.sweep.tolerance > 0.0 ? c.sweep.tolerance : 0.10;
  const double min_ratio = c.sweep.min_ratio > 0.0 ? c.sweep.min_ratio : 50.0;
  run.check("compression ratio at final sparsity >= " + fmt("%g", min_ratio), ratio >= min_ratio,
            fmt("%.2f", ratio));
  run.check("final loss within " + fmt("%g", tol * 100) + "% of dense", std::abs(rel) < tol,
            fmt("%.4f", sparse.final_loss()) + " vs " + fmt("%.4f", dense.final_loss()));
  run.add_trace("dgc", sparse.trace);
  run.check_bytes("dgc", sparse);
  auto& s = run.out().summary;
  summarize_run(s, sparse, run.wl());
  s.set("dense_final_loss", dense.final_loss());
  s.set("dense_bytes_sent", dense.bytes_sent);
  s.set("final_ratio", ratio);
  s.set("loss_rel_diff", rel);
  run.out().records = std::move(sparse.records);
}

// Dyadic gradients: multiples of 2^-8 in [-4, 4].
Vec dyadic_gradient(std::size_t n, std::uint64_t seed, std::uint64_t step) {
  Vec g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform01(seed, kFeedbackStream, step * n + i);
    g[i] = std::floor(u * 2049.0 - 1024.0) / 256.0;
  }
  return g;
}

void pipeline_error_feedback(Run& run) {
  const auto& c = run.config();
  const std::size_t n = c.workload.dim;
  const std::size_t steps = c.optimizer.steps;
  for (int scheme = 0; scheme < 2; ++scheme) {
    Vec raw(n, 0.0);
    Vec sent(n, 0.0);
    Vec residual(n, 0.0);
    std::uint64_t bytes = 0;
    for (std::size_t t = 0; t < steps; ++t) {
      const Vec g = dyadic_gradient(n, c.workload.seed, t);
      for (std::size_t i = 0; i < n; ++i) raw[i] += g[i];
      Vec out;
      if (scheme == 0) {
        auto r = compress::gradient_drop(g, residual, c.compression.drop_percent);
        out = r.sent.to_dense();
        residual = std::move(r.residual);
        bytes += r.sent.encoding_bytes();
      } else {
        auto r = compress::onebit_quantize(g, residual);
        out = r.quantized.dequantize();
        residual = std::move(r.error);
        bytes += r.quantized.encoding_bytes();
      }
      for (std::size_t i = 0; i < n; ++i) sent[i] += out[i];
    }
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) bad += sent[i] + residual[i] != raw[i];
    const std::string label = scheme == 0 ? "gradient_drop" : "onebit";
    run.check(label + " sent + residual == raw over " + std::to_string(steps) + " steps",
              bad == 0, std::to_string(bad) + " mismatched entries");
    run.out().summary.set(label + ".bytes", bytes);
    run.out().summary.set(label + ".ratio",
                          static_cast<double>(steps * n * 8) / static_cast<double>(bytes));
  }
  auto r = run_training(c, run.wl());
  run.add_trace(to_string(c.compression.kind), r.trace);
  run.check_bytes(to_string(c.compression.kind), r);
  summarize_run(run.out().summary, r, run.wl());
  run.out().records = std::move(r.records);
}

void pipeline_mixed_precision(Run& run) {
  const auto& c = run.config();
  using precision::Half;
  std::size_t finite = 0;
  std::size_t mismatched = 0;
  for (std::uint32_t bits = 0; bits < 0x10000; ++bits) {
    const Half h{static_cast<std::uint16_t>(bits)};
    if (!precision::is_finite(h)) continue;
    ++finite;
    if (precision::to_half(precision::from_half(h)).value.bits != h.bits) ++mismatched;
  }
  run.check("finite half patterns round-trip", finite == precision::kHalfFinitePatterns &&
                                                   mismatched == 0,
            std::to_string(finite) + " patterns, " + std::to_string(mismatched) + " mismatched");

  // eta * g = 1e-4 against w = 1.
  const double eta = 0.01;
  const Half one = precision::to_half(1.0).value;
  const Half g = precision::to_half(0.01).value;
  const Vec grad_value{precision::from_half(g)};
  const auto pure = precision::pure_half_update(std::vector<Half>{one}, std::vector<Half>{g}, eta);
  std::vector<float> master{1.0f};
  precision::LossScaleState state;
  precision::MixedUpdateOptions mo;
  mo.eta = eta;
  precision::mixed_update(master, std::vector<Half>{g}, state, mo);
  run.check("pure-half update stagnates", pure[0].bits == one.bits,
            fmt("%.9g", precision::from_half(pure[0])));
  run.check("mixed update progresses", master[0] < 1.0f, fmt("%.9g", master[0]));

  Vec small(4096);
  for (std::size_t i = 0; i < small.size(); ++i) {
    const double u = uniform01(c.workload.seed, kSmallGradStream, i);
    small[i] = std::ldexp(1.0, -30 + static_cast<int>(u * 12.0)) * (1.0 + u);
  }
  const auto plain = precision::representable_count(small, 1.0);
  const auto scaled = precision::representable_count(small, 8.0);
  run.check("loss scale 8 keeps more gradients representable", scaled > plain,
            std::to_string(scaled) + " vs " + std::to_string(plain));

  std::vector<float> w{0.5f, -0.25f};
  const auto before = w;
  precision::LossScaleState os;
  os.scale = 1024.0;
  const auto outcome = precision::mixed_update(
      w, std::vector<Half>{precision::to_half(1.0).value, Half{0x7C00}}, os, mo);
  run.check("overflowed batch skipped, weights untouched",
            outcome == precision::UpdateOutcome::kSkipped && w == before &&
                os.skipped_batches == 1);

  auto r = run_training(c, run.wl());
  auto& s = run.out().summary;
  summarize_run(s, r, run.wl());
  s.set("representable_scale1", static_cast<std::uint64_t>(plain));
  s.set("representable_scale8", static_cast<std::uint64_t>(scaled));
  run.out().records = std::move(r.records);
}

// ---------------------------------------------------------------------------
// Collectives

struct CollectiveCase {
  std::string algorithm;  // schedule name or "fault-tolerant"
  std::size_t p = 1;
  std::vector<tensor::GradientVector> inputs;
};

std::vector<tensor::GradientVector> collective_inputs(std::size_t p, std::size_t len,
                                                      bool integer, std::uint64_t seed) {
  std::vector<tensor::GradientVector> in;
  for (std::size_t k = 0; k < p; ++k) {
    Vec v(len);
    for (std::size_t i = 0; i < len; ++i) {
      const double u = uniform01(seed, kCollectiveDataStream + integer, k * len + i);
      v[i] = integer ? std::floor(u * 2001.0) - 1000.0 : 2.0 * u - 1.0;
    }
    in.emplace_back(std::move(v));
  }
  return in;
}

struct CollectiveRun {
  std::vector<tensor::GradientVector> outputs;
  double elapsed = 0.0;
  std::uint64_t bytes = 0;
  std::optional<sim::Trace> trace;
};

CollectiveRun run_collective(const ExperimentConfig& c, const std::string& algorithm,
                             std::span<const tensor::GradientVector> inputs, bool keep_trace) {
  sim::SimOptions so;
  so.drop_notify_delay = c.network.drop_notify_delay;
  so.record_trace = keep_trace;
  CollectiveRun out;
  if (algorithm == "fault-tolerant") {
    const std::size_t k = c.collective.replica_factor;
    sim::Simulator sim(inputs.size() * k, c.network.latency, so);
    ft::FtOptions fo;
    fo.replica_factor = k;
    fo.heartbeat = c.collective.heartbeat;
    fo.seed = c.network.latency.seed;
    auto r = ft::tolerant_all_reduce(sim, inputs, fo);
    out.outputs = std::move(r.outputs);
    out.elapsed = r.elapsed;
    out.bytes = sim.bytes_sent();
    if (keep_trace) out.trace = sim.trace();
    return out;
  }
  sim::Simulator sim(inputs.size(), c.network.latency, so);
  coll::CollectiveOptions co;
  co.group_size = c.collective.group_size;
  auto r = coll::all_reduce(sim, coll::algorithm_from_string(algorithm), inputs, co);
  out.outputs = std::move(r.outputs);
  out.elapsed = r.elapsed;
  out.bytes = sim.bytes_sent();
  if (keep_trace) out.trace = sim.trace();
  return out;
}

void pipeline_collectives(Run& run) {
  const auto& c = run.config();
  std::vector<std::string> algs = c.sweep.algorithms;
  if (algs.empty()) algs = {"ring", "halving-doubling", "binary-blocks", "hierarchical",
                            "fault-tolerant"};
  std::vector<std::size_t> ps = c.sweep.p_values;
  if (ps.empty()) {
    for (std::size_t p = 1; p <= 33; ++p) ps.push_back(p);
  }
  std::vector<std::size_t> lens = c.sweep.lengths;
  if (lens.empty()) lens = {1, 5, 64, 1000};
  const double tol = c.sweep.tolerance > 0.0 ? c.sweep.tolerance : 1e-12;

  std::size_t cases = 0;
  std::size_t failed = 0;
  std::string first_failure;
  std::uint64_t row = 0;
  for (const auto& alg : algs) {
    for (auto p : ps) {
      for (auto len : lens) {
        double worst = 0.0;
        bool ok = true;
        CollectiveRun last;
        for (int integer = 1; integer >= 0; --integer) {
          auto in = collective_inputs(p, len, integer, c.workload.seed);
          last = run_collective(c, alg, in, false);
          for (std::size_t i = 0; i < len; ++i) {
            double oracle = 0.0;
            double scale = 0.0;
            for (std::size_t k = 0; k < p; ++k) {
              oracle += in[k][i];
              scale += std::abs(in[k][i]);
            }
            for (const auto& o : last.outputs) {
              if (integer) {
                ok = ok && o[i] == oracle;
              } else {
                const double err = std::abs(o[i] - oracle) / std::max(scale, 1e-300);
                worst = std::max(worst, err);
                ok = ok && err <= tol;
              }
            }
          }
          ok = ok && last.outputs.size() == p;
        }
        ++cases;
        if (!ok) {
          ++failed;
          if (first_failure.empty()) {
            first_failure = alg + " p=" + std::to_string(p) + " n=" + std::to_string(len);
          }
        }
        metrics::Record rec;
        rec.step = row++;
        rec.sim_time = last.elapsed;
        rec.loss = worst;
        rec.effective_batch = p;
        rec.bytes_sent = last.bytes;
        run.out().records.push_back(rec);
      }
    }
  }
  run.check("every node matches the sequential sum oracle", failed == 0,
            std::to_string(cases - failed) + "/" + std::to_string(cases) + " cases" +
                (first_failure.empty() ? "" : ", first failure " + first_failure));
  run.out().summary.set("cases", static_cast<std::uint64_t>(cases));
  run.out().summary.set("failed", static_cast<std::uint64_t>(failed));
}

void pipeline_step_counts(Run& run) {
  const auto& c = run.config();
  if (c.network.latency.startup != 1.0 || c.network.latency.per_byte != 0.0 ||
      c.network.latency.straggler.kind != sim::Straggler::Kind::kNone) {
    throw ConfigError("network", "step counts need startup 1, per_byte 0 and no stragglers");
  }
  std::vector<std::size_t> ps = c.sweep.p_values;
  if (ps.empty()) ps = {2, 4, 8, 16, 32};
  const std::size_t len = c.sweep.lengths.empty() ? 1024 : c.sweep.lengths.front();
  std::uint64_t row = 0;
  for (const char* alg : {"ring", "halving-doubling"}) {
    for (auto p : ps) {
      auto in = collective_inputs(p, len, true, c.workload.seed);
      auto r = run_collective(c, alg, in, c.network.trace);
      const bool ring = std::string(alg) == "ring";
      double expect = 0.0;
      if (ring) {
        expect = 2.0 * static_cast<double>(p - 1);
      } else {
        std::size_t lg = 0;
        while ((std::size_t{1} << lg) < p) ++lg;
        if ((std::size_t{1} << lg) != p) {
          throw ConfigError("sweep.p_values", "halving-doubling step count needs powers of two");
        }
        expect = 2.0 * static_cast<double>(lg);
      }
      const std::string label = std::string(alg) + " p=" + std::to_string(p);
      run.check(label + " takes " + fmt("%g", expect) + " s", r.elapsed == expect,
                fmt("%.17g", r.elapsed));
      run.add_trace(label, r.trace);
      metrics::Record rec;
      rec.step = row++;
      rec.sim_time = r.elapsed;
      rec.effective_batch = p;
      rec.bytes_sent = r.bytes;
      run.out().records.push_back(rec);
    }
  }
}

// Participants with no traffic outside the non-power-of-two fold phases.
std::size_t core_idle(const coll::CollectiveResult& r) {
  std::size_t idle = 0;
  for (const auto& a : r.activity) {
    std::uint64_t t = 0;
    for (std::size_t ph = 0; ph < coll::kPhaseCount; ++ph) {
      const auto phase = static_cast<coll::Phase>(ph);
      if (phase == coll::Phase::kPreCombine || phase == coll::Phase::kPostBroadcast) continue;
      t += a.in_phase(phase);
    }
    idle += t == 0;
  }
  return idle;
}

void pipeline_binary_blocks(Run& run) {
  const auto& c = run.config();
  const auto d600 = coll::binary_blocks_decompose(600).blocks;
  run.check("decompose(600) = [512, 64, 16, 8]",
            d600 == std::vector<std::size_t>{512, 64, 16, 8});
  std::size_t bad = 0;
  for (std::size_t p = 1; p <= 1024; ++p) {
    const auto b = coll::binary_blocks_decompose(p).blocks;
    std::size_t sum = 0;
    std::size_t prev = 0;
    bool good = true;
    for (auto x : b) {
      good = good && x != 0 && (x & (x - 1)) == 0 && (prev == 0 || x < prev);
      prev = x;
      sum += x;
    }
    bad += !(good && sum == p);
  }
  run.check("decompose(p) partitions p for p <= 1024", bad == 0,
            std::to_string(bad) + " bad decompositions");

  std::vector<std::size_t> ps = c.sweep.p_values;
  if (ps.empty()) ps = {7};
  const std::size_t len = c.sweep.lengths.empty() ? 64 : c.sweep.lengths.front();
  std::uint64_t row = 0;
  for (auto p : ps) {
    auto in = collective_inputs(p, len, true, c.workload.seed);
    const auto layout = coll::rhd_layout(p);
    for (auto alg : {coll::Algorithm::kBinaryBlocks, coll::Algorithm::kRecursiveHalvingDoubling}) {
      sim::SimOptions so;
      so.record_trace = c.network.trace;
      sim::Simulator sim(p, c.network.latency, so);
      auto r = coll::all_reduce(sim, alg, in);
      const std::size_t idle = core_idle(r);
      const std::string label = std::string(coll::to_string(alg)) + " p=" + std::to_string(p);
      if (alg == coll::Algorithm::kBinaryBlocks) {
        run.check(label + " has no idle participants", idle == 0 && r.fully_idle() == 0,
                  std::to_string(idle) + " idle");
      } else {
        run.check(label + " idles r = " + std::to_string(layout.r) + " participants",
                  idle == layout.r, std::to_string(idle) + " idle");
      }
      run.out().summary.set(label + ".idle", static_cast<std::uint64_t>(idle));
      run.add_trace(label, sim.trace());
      metrics::Record rec;
      rec.step = row++;
      rec.sim_time = r.elapsed;
      rec.loss = static_cast<double>(idle);
      rec.effective_batch = p;
      rec.bytes_sent = sim.bytes_sent();
      run.out().records.push_back(rec);
    }
  }
}

void pipeline_ft_chaos(Run& run) {
  const auto& c = run.config();
  const std::size_t p = c.sweep.p_values.empty() ? 6 : c.sweep.p_values.front();
  const std::size_t len = c.sweep.lengths.empty() ? 64 : c.sweep.lengths.front();
  const std::size_t k = c.collective.replica_factor;
  const std::size_t seeds = std::max<std::size_t>(c.sweep.seeds, 1);
  const auto inputs = collective_inputs(p, len, true, c.workload.seed);
  Vec oracle(len, 0.0);
  for (const auto& v : inputs) {
    for (std::size_t i = 0; i < len; ++i) oracle[i] += v[i];
  }
  sim::SimOptions so;
  so.drop_notify_delay = c.network.drop_notify_delay;
  so.record_trace = false;
  ft::FtOptions base;
  base.replica_factor = k;
  base.heartbeat = c.collective.heartbeat;

  double span = 0.0;
  {
    sim::Simulator sim(p * k, c.network.latency, so);
    span = ft::tolerant_all_reduce(sim, inputs, base).elapsed;
  }

  auto matches = [&](const ft::FtResult& r) {
    if (r.outputs.size() != p) return false;
    for (const auto& o : r.outputs) {
      if (!bit_equal(o.values(), oracle)) return false;
    }
    return true;
  };

  std::size_t completed = 0;
  std::size_t violations = 0;
  std::uint64_t elections = 0;
  std::string first_error;
  for (std::size_t s = 0; s < seeds; ++s) {
    so.record_trace = c.network.trace && s == 0;
    sim::Simulator sim(p * k, c.network.latency, so);
    Rng rng(c.workload.seed + s, kChaosStream);
    for (std::size_t g = 0; g < p; ++g) {
      const auto r = rng.below(k);
      sim.inject_failure(ft::replica_node(g, r, k), rng.uniform(0.0, span),
                         sim::FailureKind::kCrash);
    }
    auto fo = base;
    fo.seed = s;
    metrics::Record rec;
    rec.step = s;
    try {
      auto r = ft::tolerant_all_reduce(sim, inputs, fo);
      const bool ok = matches(r);
      completed += ok;
      violations += r.safety_violations + ft::audit_logs(r.replicas);
      elections += r.elections;
      rec.sim_time = r.elapsed;
      rec.loss = ok ? 0.0 : 1.0;
      if (!ok && first_error.empty()) first_error = "seed " + std::to_string(s) + ": wrong result";
    } catch (const Error& e) {
      rec.loss = 1.0;
      if (first_error.empty()) first_error = "seed " + std::to_string(s) + ": " + e.what();
    }
    rec.bytes_sent = sim.bytes_sent();
    run.out().records.push_back(rec);
    if (s == 0) run.add_trace("chaos seed=0", sim.trace());
  }
  run.check("single-replica kills complete with the oracle result", completed == seeds,
            std::to_string(completed) + "/" + std::to_string(seeds) +
                (first_error.empty() ? "" : ", " + first_error));
  run.check("no committed-entry divergence", violations == 0,
            std::to_string(violations) + " violations");

  std::size_t clean = 0;
  std::size_t wrong = 0;
  for (std::size_t s = 0; s < seeds; ++s) {
    so.record_trace = false;
    sim::Simulator sim(p * k, c.network.latency, so);
    Rng rng(c.workload.seed + s, kChaosStream + 1);
    const std::size_t g = rng.below(p);
    const std::size_t spare = rng.below(k);
    std::size_t killed = 0;
    for (std::size_t r = 0; r < k && killed < ft::majority(k); ++r) {
      if (r == spare && k - 1 >= ft::majority(k)) continue;
      sim.inject_failure(ft::replica_node(g, r, k), rng.uniform(0.0, span),
                         sim::FailureKind::kCrash);
      ++killed;
    }
    auto fo = base;
    fo.seed = s;
    try {
      auto r = ft::tolerant_all_reduce(sim, inputs, fo);
      if (!matches(r)) ++wrong;
    } catch (const GroupUnavailable& e) {
      clean += e.group() == g;
    } catch (const Error&) {
    }
  }
  run.check("majority kills fail cleanly as group-unavailable", clean == seeds && wrong == 0,
            std::to_string(clean) + "/" + std::to_string(seeds) + " clean, " +
                std::to_string(wrong) + " wrong results");
  auto& s = run.out().summary;
  s.set("failure_free_elapsed", span);
  s.set("completed", static_cast<std::uint64_t>(completed));
  s.set("elections", elections);
  s.set("majority_clean", static_cast<std::uint64_t>(clean));
}

void pipeline_determinism(Run& run) {
  const auto& c = run.config();
  std::vector<std::string> names = c.sweep.presets;
  if (names.empty()) {
    for (const auto& p : presets()) {
      if (p.name != c.name) names.push_back(p.name);
    }
  }
  std::uint64_t row = 0;
  for (const auto& name : names) {
    const auto pc = preset_config(name);
    if (pc.pipeline == Pipeline::kDeterminism) {
      throw ConfigError("sweep.presets", "determinism cannot nest '" + name + "'");
    }
    const auto a = run_experiment(pc);
    const auto b = run_experiment(pc);
    const auto ma = a.metrics_csv();
    const bool same = ma == b.metrics_csv() && a.trace == b.trace;
    run.check(name + " reruns byte-identical", same);
    run.out().summary.set(name + ".metrics_fnv1a", fnv1a(ma));
    run.out().summary.set(name + ".trace_fnv1a", fnv1a(a.trace));
    metrics::Record rec;
    rec.step = row++;
    rec.bytes_sent = a.trace.size();
    rec.effective_batch = a.records.size();
    run.out().records.push_back(rec);
  }
}

}  // namespace

bool ExperimentOutput::pass() const noexcept {
  return std::all_of(assertions.begin(), assertions.end(),
                     [](const Assertion& a) { return a.pass; });
}

std::string ExperimentOutput::metrics_csv() const {
  std::ostringstream os;
  metrics::write_csv(os, records);
  return os.str();
}

void ExperimentOutput::write_report(std::ostream& os) const {
  for (const auto& a : assertions) {
    os << (a.pass ? "PASS " : "FAIL ") << a.name;
    if (!a.detail.empty()) os << " (" << a.detail << ")";
    os << '\n';
  }
}

std::uint64_t fnv1a(std::span<const double> values) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t fnv1a(const std::string& bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto start = Clock::now();
  Run run(config);
  switch (config.pipeline) {
    case Pipeline::kTrain: pipeline_train(run); break;
    case Pipeline::kSyncExact: pipeline_sync_exact(run); break;
    case Pipeline::kStraggler: pipeline_straggler(run); break;
    case Pipeline::kSoftsync: pipeline_softsync(run); break;
    case Pipeline::kEasgd: pipeline_easgd(run); break;
    case Pipeline::kLars: pipeline_lars(run); break;
    case Pipeline::kLinearScaling: pipeline_linear_scaling(run); break;
    case Pipeline::kBatchEquivalence: pipeline_batch_equivalence(run); break;
    case Pipeline::kDgcSweep: pipeline_dgc_sweep(run); break;
    case Pipeline::kDgcEquivalence: pipeline_dgc_equivalence(run); break;
    case Pipeline::kDgcCompression: pipeline_dgc_compression(run); break;
    case Pipeline::kErrorFeedback: pipeline_error_feedback(run); break;
    case Pipeline::kMixedPrecision: pipeline_mixed_precision(run); break;
    case Pipeline::kCollectives: pipeline_collectives(run); break;
    case Pipeline::kStepCounts: pipeline_step_counts(run); break;
    case Pipeline::kBinaryBlocks: pipeline_binary_blocks(run); break;
    case Pipeline::kFtChaos: pipeline_ft_chaos(run); break;
    case Pipeline::kDeterminism: pipeline_determinism(run); break;
  }
  auto out = std::move(run.out());
  const double wall = std::chrono::duration<double>(Clock::now() - start).count();
  metrics::Summary head;
  head.set("name", config.name);
  head.set("pipeline", std::string(to_string(config.pipeline)));
  head.set("schema", config.schema);
  for (const auto& [k, v] : out.summary.entries()) head.set(k, v);
  if (!out.records.empty()) head.set("rows", static_cast<std::uint64_t>(out.records.size()));
  head.set("trace_bytes", static_cast<std::uint64_t>(out.trace.size()));
  const auto passed = static_cast<std::uint64_t>(
      std::count_if(out.assertions.begin(), out.assertions.end(),
                    [](const Assertion& a) { return a.pass; }));
  head.set("assertions_passed", passed);
  head.set("assertions_failed", static_cast<std::uint64_t>(out.assertions.size()) - passed);
  head.set("wall_clock_s", wall);
  out.summary = std::move(head);
  return out;
}

OutputPaths output_paths(const ExperimentConfig& config, const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string stem = config.name.empty() ? "run" : config.name;
  auto resolve = [&](const std::string& given, const std::string& suffix) {
    if (given.empty()) return (fs::path(dir) / (stem + suffix)).string();
    const fs::path p(given);
    return p.is_absolute() ? p.string() : (fs::path(dir) / p).string();
  };
  return {resolve(config.output.metrics, ".metrics.csv"), resolve(config.output.trace, ".trace"),
          resolve(config.output.summary, ".summary")};
}

OutputPaths write_outputs(const ExperimentConfig& config, const ExperimentOutput& out,
                          const std::string& dir) {
  namespace fs = std::filesystem;
  const auto paths = output_paths(config, dir);
  auto write = [](const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("output", "cannot write '" + path + "'");
    f << text;
  };
  write(paths.metrics, out.metrics_csv());
  write(paths.trace, out.trace);
  write(paths.summary, out.summary.to_string());
  return paths;
}

}  // namespace gradsim::harness
