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

#include "gradsim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "gradsim/error.hpp"
#include "json.hpp"

namespace gradsim::harness {
namespace {

using json = nlohmann::ordered_json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Strict view over one JSON object: every key must be consumed.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string path(const std::string& key) const { return join(path_, key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) throw ConfigError(path(key), "expected a number");
      out = v->get<double>();
    }
  }

  template <typename U>
  void integer(const std::string& key, U& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
        throw ConfigError(path(key), "expected a nonnegative integer");
      }
      out = static_cast<U>(v->get<std::uint64_t>());
    }
  }

  void signed_integer(const std::string& key, int& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) throw ConfigError(path(key), "expected an integer");
      out = v->get<int>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) throw ConfigError(path(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) throw ConfigError(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  // Parses a string field through `convert`, re-raising its error with the
  // field path attached.
  template <typename T, typename F>
  void named(const std::string& key, T& out, F convert) {
    std::string s;
    string(key, s);
    if (!has(key)) return;
    try {
      out = convert(s);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(path(key), e.what());
    }
  }

  template <typename T, typename F>
  void list(const std::string& key, std::vector<T>& out, F item) {
    if (const json* v = raw(key)) {
      if (!v->is_array()) throw ConfigError(path(key), "expected an array");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        out.push_back(item((*v)[i], path(key) + "[" + std::to_string(i) + "]"));
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::size_t item_size(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError(path, "expected a nonnegative integer");
  }
  return v.get<std::size_t>();
}

double item_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

std::string item_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

template <typename Fn>
void section(Fields& parent, const std::string& key, Fn fn) {
  if (const json* v = parent.raw(key)) {
    Fields f(*v, parent.path(key));
    fn(f);
    f.finish();
  }
}

const char* straggler_name(sim::Straggler::Kind k) {
  switch (k) {
    case sim::Straggler::Kind::kNone: return "none";
    case sim::Straggler::Kind::kExponentialTail: return "exponential-tail";
    case sim::Straggler::Kind::kFixedSlowSet: return "fixed-slow-set";
  }
  return "?";
}

void read_straggler(Fields& f, sim::Straggler& s) {
  std::string kind = straggler_name(s.kind);
  f.string("kind", kind);
  if (kind == "none") {
    s.kind = sim::Straggler::Kind::kNone;
  } else if (kind == "exponential-tail") {
    s.kind = sim::Straggler::Kind::kExponentialTail;
  } else if (kind == "fixed-slow-set") {
    s.kind = sim::Straggler::Kind::kFixedSlowSet;
  } else if (kind == "default") {
    s = sim::Straggler::default_calibration();
  } else {
    throw ConfigError(f.path("kind"), "unknown straggler kind '" + kind + "'");
  }
  f.number("rate", s.rate);
  f.number("tail_prob", s.tail_prob);
  f.number("multiplier", s.multiplier);
  std::vector<std::size_t> nodes;
  f.list("nodes", nodes, item_size);
  if (f.has("nodes")) s.slow_nodes.assign(nodes.begin(), nodes.end());
}

sim::Failure read_failure(const json& v, const std::string& path) {
  Fields f(v, path);
  sim::Failure out;
  f.integer("node", out.node);
  if (!f.has("node")) throw ConfigError(f.path("node"), "required");
  f.number("time", out.time);
  std::string kind = "crash";
  f.string("kind", kind);
  if (kind == "crash") {
    out.kind = sim::FailureKind::kCrash;
  } else if (kind == "slow") {
    out.kind = sim::FailureKind::kSlow;
  } else {
    throw ConfigError(f.path("kind"), "expected 'crash' or 'slow'");
  }
  f.number("slow_factor", out.slow_factor);
  f.finish();
  return out;
}

template <typename Fn>
void guard(const std::string& path, Fn fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

const char* kPipelineNames[] = {
    "train",          "sync-exact",     "straggler",       "softsync",
    "easgd",          "lars",           "linear-scaling",  "batch-equivalence",
    "dgc-sweep",      "dgc-equivalence", "dgc-compression", "error-feedback",
    "mixed-precision", "collectives",   "step-counts",     "binary-blocks",
    "ft-chaos",       "determinism",
};

const char* kOptimizerNames[] = {
    "sgd", "sync", "allreduce", "async", "easgd",
    "gossip", "lars", "dgc", "error-feedback", "mixed-precision",
};

const char* kCompressionNames[] = {"none", "dgc", "gradient-drop", "onebit"};

template <typename E, std::size_t N>
E lookup(const char* const (&names)[N], const std::string& name, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (name == names[i]) return static_cast<E>(i);
  }
  throw InvalidArgument(std::string("unknown ") + what + " '" + name + "'");
}

}  // namespace

const char* to_string(Pipeline p) noexcept { return kPipelineNames[static_cast<int>(p)]; }
Pipeline pipeline_from_string(const std::string& name) {
  return lookup<Pipeline>(kPipelineNames, name, "pipeline");
}
const char* to_string(OptimizerKind k) noexcept { return kOptimizerNames[static_cast<int>(k)]; }
OptimizerKind optimizer_from_string(const std::string& name) {
  return lookup<OptimizerKind>(kOptimizerNames, name, "optimizer");
}
const char* to_string(CompressionKind k) noexcept {
  return kCompressionNames[static_cast<int>(k)];
}
CompressionKind compression_from_string(const std::string& name) {
  return lookup<CompressionKind>(kCompressionNames, name, "compression");
}

train::NetworkOptions NetworkConfig::options() const {
  train::NetworkOptions o;
  o.latency = latency;
  o.sim.drop_notify_delay = drop_notify_delay;
  o.sim.record_trace = trace;
  o.failures = failures;
  o.compute_time = compute_time;
  return o;
}

void ExperimentConfig::validate() const {
  if (schema != kSchemaVersion) {
    throw ConfigError("schema", "unsupported schema version " + std::to_string(schema));
  }
  guard("workload", [&] { workload.validate(); });
  guard("network.latency", [&] { network.latency.validate(); });
  if (!(network.drop_notify_delay >= 0.0)) {
    throw ConfigError("network.drop_notify_delay", "must be >= 0");
  }
  if (!(network.compute_time >= 0.0)) throw ConfigError("network.compute_time", "must be >= 0");
  for (std::size_t i = 0; i < network.failures.size(); ++i) {
    if (!(network.failures[i].time >= 0.0)) {
      throw ConfigError("network.failures[" + std::to_string(i) + "].time", "must be >= 0");
    }
  }
  auto prefixed = [](const char* prefix, const ConfigError& e) {
    return ConfigError(std::string(prefix) + e.field_path(), e.what());
  };
  try {
    optimizer.hp.validate();
  } catch (const ConfigError& e) {
    throw prefixed("optimizer.", e);
  }
  if (optimizer.workers == 0) throw ConfigError("optimizer.workers", "must be >= 1");
  if (optimizer.micro_batches == 0) throw ConfigError("optimizer.micro_batches", "must be >= 1");
  if (optimizer.kind == OptimizerKind::kAsync) {
    try {
      optim::AsyncConfig{optimizer.workers, optimizer.softsync_n}.validate();
    } catch (const ConfigError&) {
      throw ConfigError("optimizer.softsync_n", "must lie in [1, workers]");
    }
  }
  if (optimizer.batch.increasing) {
    try {
      optimizer.batch.at(optimizer.hp.batch_size, 0.0, workload.size);
    } catch (const ConfigError& e) {
      throw prefixed("optimizer.", e);
    }
  }
  if (collective.replica_factor == 0) {
    throw ConfigError("collective.replica_factor", "must be >= 1");
  }
  if (!(collective.heartbeat > 0.0)) throw ConfigError("collective.heartbeat", "must be > 0");
  guard("compression.dgc", [&] { compression.dgc.validate(); });
  if (!(compression.drop_percent >= 0.0 && compression.drop_percent < 100.0)) {
    throw ConfigError("compression.drop_percent", "must lie in [0, 100)");
  }
  guard("precision", [&] { precision.loss_scale.validate(); });
  if (pipeline == Pipeline::kStraggler && !sweep.variant.empty() &&
      sweep.variant != "backup" && sweep.variant != "barrier") {
    throw ConfigError("sweep.variant", "expected 'backup' or 'barrier'");
  }
  if (pipeline == Pipeline::kStraggler && optimizer.backups == 0) {
    throw ConfigError("optimizer.backups", "straggler pipeline needs backups > 0");
  }
  for (std::size_t i = 0; i < sweep.algorithms.size(); ++i) {
    const auto& a = sweep.algorithms[i];
    if (a == "fault-tolerant") continue;
    guard("sweep.algorithms[" + std::to_string(i) + "]",
          [&] { coll::algorithm_from_string(a); });
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  Fields top(root, "");
  if (!top.has("schema")) throw ConfigError("schema", "required");
  top.signed_integer("schema", c.schema);
  if (c.schema != kSchemaVersion) {
    throw ConfigError("schema", "unsupported schema version " + std::to_string(c.schema));
  }
  top.string("name", c.name);
  top.string("description", c.description);
  top.named("pipeline", c.pipeline, pipeline_from_string);

  section(top, "workload", [&](Fields& f) {
    auto& w = c.workload;
    f.named("kind", w.kind, workload::kind_from_string);
    f.integer("dim", w.dim);
    f.integer("size", w.size);
    f.integer("seed", w.seed);
    f.number("condition", w.condition);
    f.number("noise", w.noise);
    f.integer("hidden", w.hidden);
    f.number("l2", w.l2);
    f.integer("layers", w.layers);
    f.boolean("stream", w.stream);
  });

  section(top, "network", [&](Fields& f) {
    auto& n = c.network;
    f.number("startup", n.latency.startup);
    f.number("per_byte", n.latency.per_byte);
    f.integer("seed", n.latency.seed);
    section(f, "straggler", [&](Fields& s) { read_straggler(s, n.latency.straggler); });
    f.number("drop_notify_delay", n.drop_notify_delay);
    f.number("compute_time", n.compute_time);
    f.list("failures", n.failures, read_failure);
    f.boolean("trace", n.trace);
  });

  section(top, "optimizer", [&](Fields& f) {
    auto& o = c.optimizer;
    f.named("kind", o.kind, optimizer_from_string);
    f.number("eta", o.hp.eta);
    f.integer("batch_size", o.hp.batch_size);
    f.number("momentum", o.hp.momentum);
    f.number("weight_decay", o.hp.weight_decay);
    f.number("rho", o.hp.rho);
    f.integer("tau", o.hp.tau);
    f.number("trust", o.hp.trust);
    f.number("gamma", o.hp.gamma);
    f.number("k", o.hp.k);
    f.number("warmup_epochs", o.hp.warmup_epochs);
    f.integer("workers", o.workers);
    f.integer("backups", o.backups);
    f.integer("steps", o.steps);
    f.integer("micro_batches", o.micro_batches);
    f.integer("softsync_n", o.softsync_n);
    f.named("staleness_policy", o.staleness, optim::staleness_policy_from_string);
    f.integer("gossip_seed", o.gossip_seed);
    section(f, "lr_schedule", [&](Fields& l) {
      l.named("kind", o.lr.kind, train::lr_kind_from_string);
      l.number("k", o.lr.k);
      l.number("warmup_epochs", o.lr.warmup_epochs);
      l.number("power", o.lr.power);
      l.integer("total_steps", o.lr.total_steps);
      l.number("decay", o.lr.decay);
      l.number("interval_epochs", o.lr.interval_epochs);
    });
    section(f, "batch_schedule", [&](Fields& b) {
      o.batch.increasing = true;
      b.boolean("increasing", o.batch.increasing);
      b.number("factor", o.batch.factor);
      b.number("interval_epochs", o.batch.interval_epochs);
      b.integer("max_batch", o.batch.max_batch);
    });
  });

  section(top, "collective", [&](Fields& f) {
    auto& k = c.collective;
    f.named("algorithm", k.algorithm, coll::algorithm_from_string);
    f.integer("group_size", k.group_size);
    f.boolean("fault_tolerant", k.fault_tolerant);
    f.integer("replica_factor", k.replica_factor);
    f.number("heartbeat", k.heartbeat);
  });

  section(top, "compression", [&](Fields& f) {
    auto& k = c.compression;
    f.named("kind", k.kind, compression_from_string);
    f.number("momentum", k.dgc.momentum);
    f.number("sparsity", k.dgc.sparsity);
    f.boolean("clipping", k.dgc.clipping);
    f.number("clip_threshold", k.dgc.clip_threshold);
    f.boolean("mask_momentum", k.dgc.mask_momentum);
    f.boolean("warmup", k.dgc.warmup);
    f.number("warmup_start", k.dgc.warmup_start);
    f.integer("warmup_epochs", k.dgc.warmup_epochs);
    f.number("drop_percent", k.drop_percent);
    f.integer("epoch_size", k.epoch_size);
  });

  section(top, "precision", [&](Fields& f) {
    auto& s = c.precision.loss_scale;
    f.number("loss_scale", s.scale);
    std::string policy = s.policy.kind == precision::LossScalePolicy::Kind::kDynamic
                             ? "dynamic" : "constant";
    f.string("policy", policy);
    if (policy == "dynamic") {
      s.policy.kind = precision::LossScalePolicy::Kind::kDynamic;
    } else if (policy == "constant") {
      s.policy.kind = precision::LossScalePolicy::Kind::kConstant;
    } else {
      throw ConfigError(f.path("policy"), "expected 'constant' or 'dynamic'");
    }
    f.number("growth", s.policy.growth);
    f.number("backoff", s.policy.backoff);
    f.integer("window", s.policy.window);
    f.number("clip_norm", c.precision.clip_norm);
  });

  section(top, "sweep", [&](Fields& f) {
    auto& s = c.sweep;
    f.integer("seeds", s.seeds);
    f.list("p_values", s.p_values, item_size);
    f.list("lengths", s.lengths, item_size);
    f.list("algorithms", s.algorithms, item_string);
    f.list("sparsities", s.sparsities, item_number);
    f.list("taus", s.taus, item_size);
    f.list("k_values", s.k_values, item_number);
    f.list("presets", s.presets, item_string);
    f.number("target_loss", s.target_loss);
    f.number("tolerance", s.tolerance);
    f.number("min_ratio", s.min_ratio);
    f.string("variant", s.variant);
  });

  section(top, "output", [&](Fields& f) {
    f.string("metrics", c.output.metrics);
    f.string("trace", c.output.trace);
    f.string("summary", c.output.summary);
  });

  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["schema"] = c.schema;
  j["name"] = c.name;
  if (!c.description.empty()) j["description"] = c.description;
  j["pipeline"] = to_string(c.pipeline);

  const auto& w = c.workload;
  j["workload"] = {{"kind", workload::to_string(w.kind)}, {"dim", w.dim},
                   {"size", w.size}, {"seed", w.seed},
                   {"condition", w.condition}, {"noise", w.noise},
                   {"hidden", w.hidden}, {"l2", w.l2},
                   {"layers", w.layers}, {"stream", w.stream}};

  const auto& n = c.network;
  json straggler = {{"kind", straggler_name(n.latency.straggler.kind)},
                    {"rate", n.latency.straggler.rate},
                    {"tail_prob", n.latency.straggler.tail_prob},
                    {"multiplier", n.latency.straggler.multiplier},
                    {"nodes", n.latency.straggler.slow_nodes}};
  json failures = json::array();
  for (const auto& f : n.failures) {
    failures.push_back({{"node", f.node}, {"time", f.time},
                        {"kind", f.kind == sim::FailureKind::kCrash ? "crash" : "slow"},
                        {"slow_factor", f.slow_factor}});
  }
  j["network"] = {{"startup", n.latency.startup}, {"per_byte", n.latency.per_byte},
                  {"seed", n.latency.seed}, {"straggler", straggler},
                  {"drop_notify_delay", n.drop_notify_delay},
                  {"compute_time", n.compute_time}, {"failures", failures},
                  {"trace", n.trace}};

  const auto& o = c.optimizer;
  json opt = {{"kind", to_string(o.kind)}, {"eta", o.hp.eta},
              {"batch_size", o.hp.batch_size}, {"momentum", o.hp.momentum},
              {"weight_decay", o.hp.weight_decay}, {"rho", o.hp.rho},
              {"tau", o.hp.tau}, {"trust", o.hp.trust},
              {"gamma", o.hp.gamma}, {"k", o.hp.k},
              {"warmup_epochs", o.hp.warmup_epochs}, {"workers", o.workers},
              {"backups", o.backups}, {"steps", o.steps},
              {"micro_batches", o.micro_batches}, {"softsync_n", o.softsync_n},
              {"staleness_policy", optim::to_string(o.staleness)},
              {"gossip_seed", o.gossip_seed}};
  opt["lr_schedule"] = {{"kind", train::to_string(o.lr.kind)}, {"k", o.lr.k},
                        {"warmup_epochs", o.lr.warmup_epochs}, {"power", o.lr.power},
                        {"total_steps", o.lr.total_steps}, {"decay", o.lr.decay},
                        {"interval_epochs", o.lr.interval_epochs}};
  if (o.batch.increasing) {
    opt["batch_schedule"] = {{"increasing", true}, {"factor", o.batch.factor},
                             {"interval_epochs", o.batch.interval_epochs},
                             {"max_batch", o.batch.max_batch}};
  }
  j["optimizer"] = opt;

  const auto& k = c.collective;
  j["collective"] = {{"algorithm", coll::to_string(k.algorithm)},
                     {"group_size", k.group_size}, {"fault_tolerant", k.fault_tolerant},
                     {"replica_factor", k.replica_factor}, {"heartbeat", k.heartbeat}};

  const auto& z = c.compression;
  j["compression"] = {{"kind", to_string(z.kind)}, {"momentum", z.dgc.momentum},
                      {"sparsity", z.dgc.sparsity}, {"clipping", z.dgc.clipping},
                      {"clip_threshold", z.dgc.clip_threshold},
                      {"mask_momentum", z.dgc.mask_momentum}, {"warmup", z.dgc.warmup},
                      {"warmup_start", z.dgc.warmup_start},
                      {"warmup_epochs", z.dgc.warmup_epochs},
                      {"drop_percent", z.drop_percent}, {"epoch_size", z.epoch_size}};

  const auto& s = c.precision.loss_scale;
  j["precision"] = {{"loss_scale", s.scale},
                    {"policy", s.policy.kind == precision::LossScalePolicy::Kind::kDynamic
                                   ? "dynamic" : "constant"},
                    {"growth", s.policy.growth}, {"backoff", s.policy.backoff},
                    {"window", s.policy.window}, {"clip_norm", c.precision.clip_norm}};

  const auto& sw = c.sweep;
  j["sweep"] = {{"seeds", sw.seeds}, {"p_values", sw.p_values},
                {"lengths", sw.lengths}, {"algorithms", sw.algorithms},
                {"sparsities", sw.sparsities}, {"taus", sw.taus},
                {"k_values", sw.k_values}, {"presets", sw.presets},
                {"target_loss", sw.target_loss}, {"tolerance", sw.tolerance},
                {"min_ratio", sw.min_ratio}, {"variant", sw.variant}};

  j["output"] = {{"metrics", c.output.metrics}, {"trace", c.output.trace},
                 {"summary", c.output.summary}};
  return j.dump(2) + "\n";
}

}  // namespace gradsim::harness
