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

#include "gradsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"

namespace gradsim::workload {
namespace {

constexpr std::uint64_t kCurvatureStream = 0xD1A6;
constexpr std::uint64_t kDataStream = 0xDA7A;
constexpr std::uint64_t kCentreStream = 0xCE47;
constexpr std::uint64_t kTeacherStream = 0x7EAC;
constexpr std::uint64_t kInitStream = 0x1417;

std::vector<std::size_t> all_examples(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::vector<tensor::LayerSpan> equal_layers(std::size_t params, std::size_t count) {
  const auto plan = tensor::chunk_partition(params, std::max<std::size_t>(count, 1));
  std::vector<tensor::LayerSpan> out;
  for (std::size_t i = 0; i < plan.p; ++i) {
    if (plan.chunk_size(i) > 0) out.push_back({plan.begin(i), plan.chunk_size(i)});
  }
  return out;
}

void check_batch(std::span<const std::size_t> batch, std::size_t size) {
  for (auto j : batch) {
    if (j >= size) throw InvalidArgument("batch index outside the dataset");
  }
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

const char* to_string(Kind k) noexcept {
  switch (k) {
    case Kind::kQuadratic: return "quadratic";
    case Kind::kLogistic: return "logistic";
    case Kind::kMlp: return "mlp";
  }
  return "?";
}

Kind kind_from_string(const std::string& name) {
  if (name == "quadratic") return Kind::kQuadratic;
  if (name == "logistic") return Kind::kLogistic;
  if (name == "mlp") return Kind::kMlp;
  throw InvalidArgument("unknown workload kind '" + name + "'");
}

void WorkloadSpec::validate() const {
  if (dim == 0) throw InvalidArgument("workload dim must be >= 1");
  if (size == 0) throw InvalidArgument("workload size must be >= 1");
  if (!(condition >= 1.0 && condition <= 100.0)) {
    throw InvalidArgument("quadratic condition number must lie in [1, 100]");
  }
  if (!(noise >= 0.0)) throw InvalidArgument("noise must be nonnegative");
  if (stream && kind != Kind::kQuadratic) throw InvalidArgument("only the quadratic can stream");
  if (kind == Kind::kMlp && hidden == 0) throw InvalidArgument("mlp hidden width must be >= 1");
  if (!(l2 >= 0.0)) throw InvalidArgument("l2 must be nonnegative");
  if (layers == 0) throw InvalidArgument("layers must be >= 1");
}

double Workload::loss(std::span<const double> w) const {
  const auto all = all_examples(size_);
  return loss_sum(w, all) / static_cast<double>(size_);
}

std::vector<double> Workload::initial_weights() const {
  Rng rng(seed_, kInitStream);
  std::vector<double> w(params());
  for (auto& v : w) v = rng.normal();
  return w;
}

std::vector<double> Workload::full_gradient(std::span<const double> w) const {
  std::vector<double> g(params(), 0.0);
  const auto all = all_examples(size_);
  gradient_sum(w, all, g);
  for (auto& x : g) x /= static_cast<double>(size_);
  return g;
}

Quadratic::Quadratic(const WorkloadSpec& spec)
    : Workload(spec.size, spec.seed), dim_(spec.dim), noise_(spec.noise), stream_(spec.stream) {
  spec.validate();
  Rng curv(spec.seed, kCurvatureStream);
  d_.resize(dim_);
  const double log_k = std::log(spec.condition);
  for (auto& d : d_) d = std::exp(log_k * curv.uniform());
  d_[0] = 1.0;
  if (dim_ > 1) d_[1] = spec.condition;

  Rng centre(spec.seed, kCentreStream);
  center_.resize(dim_);
  for (auto& c : center_) c = centre.normal();
  if (stream_) {
    mean_ = center_;
  } else {
    x_.resize(size_ * dim_);
    mean_.assign(dim_, 0.0);
    for (std::size_t j = 0; j < size_; ++j) {
      for (std::size_t i = 0; i < dim_; ++i) {
        x_[j * dim_ + i] = sample(j, i);
        mean_[i] += x_[j * dim_ + i];
      }
    }
    for (auto& m : mean_) m /= static_cast<double>(size_);
  }
  layers_ = equal_layers(dim_, spec.layers);
}

// Uniform noise scaled to unit variance: cheap enough to regenerate every
// time a streamed example is touched.
double Quadratic::sample(std::size_t j, std::size_t i) const noexcept {
  const double u = uniform01(seed_, kDataStream, static_cast<std::uint64_t>(j) * dim_ + i);
  return center_[i] + noise_ * 1.7320508075688772 * (2.0 * u - 1.0);
}

const double* Quadratic::example(std::size_t j, std::vector<double>& scratch) const {
  if (!stream_) return &x_[j * dim_];
  scratch.resize(dim_);
  for (std::size_t i = 0; i < dim_; ++i) scratch[i] = sample(j, i);
  return scratch.data();
}

void Quadratic::gradient_sum(std::span<const double> w,
                             std::span<const std::size_t> batch,
                             std::span<double> out) const {
  if (w.size() != dim_ || out.size() != dim_) throw ShapeError("quadratic: dimension mismatch");
  check_batch(batch, size_);
  std::vector<double> scratch;
  for (auto j : batch) {
    const double* x = example(j, scratch);
    for (std::size_t i = 0; i < dim_; ++i) out[i] += d_[i] * (w[i] - x[i]);
  }
}

double Quadratic::loss_sum(std::span<const double> w,
                           std::span<const std::size_t> batch) const {
  if (w.size() != dim_) throw ShapeError("quadratic: dimension mismatch");
  check_batch(batch, size_);
  std::vector<double> scratch;
  double total = 0.0;
  for (auto j : batch) {
    const double* x = example(j, scratch);
    for (std::size_t i = 0; i < dim_; ++i) {
      const double r = w[i] - x[i];
      total += 0.5 * d_[i] * r * r;
    }
  }
  return total;
}

double Quadratic::loss(std::span<const double> w) const {
  if (w.size() != dim_) throw ShapeError("quadratic: dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double r = w[i] - mean_[i];
    total += 0.5 * d_[i] * r * r;
  }
  return total;
}

Logistic::Logistic(const WorkloadSpec& spec)
    : Workload(spec.size, spec.seed), dim_(spec.dim), l2_(spec.l2) {
  spec.validate();
  Rng rng(spec.seed, kDataStream);
  std::vector<double> truth(dim_);
  double norm = 0.0;
  for (auto& t : truth) {
    t = rng.normal();
    norm += t * t;
  }
  norm = std::sqrt(norm);
  x_.resize(size_ * dim_);
  y_.resize(size_);
  for (std::size_t j = 0; j < size_; ++j) {
    double margin = 0.0;
    do {
      margin = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        x_[j * dim_ + i] = rng.normal();
        margin += truth[i] * x_[j * dim_ + i];
      }
    } while (std::fabs(margin) < 0.1 * norm);
    y_[j] = margin > 0 ? 1.0 : -1.0;
  }
  layers_ = equal_layers(dim_, spec.layers);
}

void Logistic::gradient_sum(std::span<const double> w,
                            std::span<const std::size_t> batch,
                            std::span<double> out) const {
  if (w.size() != dim_ || out.size() != dim_) throw ShapeError("logistic: dimension mismatch");
  check_batch(batch, size_);
  for (auto j : batch) {
    const double* x = &x_[j * dim_];
    double z = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) z += w[i] * x[i];
    const double c = -y_[j] * sigmoid(-y_[j] * z);
    for (std::size_t i = 0; i < dim_; ++i) out[i] += c * x[i] + l2_ * w[i];
  }
}

double Logistic::loss_sum(std::span<const double> w,
                          std::span<const std::size_t> batch) const {
  if (w.size() != dim_) throw ShapeError("logistic: dimension mismatch");
  check_batch(batch, size_);
  double sq = 0.0;
  for (double v : w) sq += v * v;
  double total = 0.0;
  for (auto j : batch) {
    const double* x = &x_[j * dim_];
    double z = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) z += w[i] * x[i];
    total += softplus(-y_[j] * z) + 0.5 * l2_ * sq;
  }
  return total;
}

double Logistic::accuracy(std::span<const double> w) const {
  std::size_t right = 0;
  for (std::size_t j = 0; j < size_; ++j) {
    double z = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) z += w[i] * x_[j * dim_ + i];
    right += (z > 0) == (y_[j] > 0);
  }
  return static_cast<double>(right) / static_cast<double>(size_);
}

Mlp::Mlp(const WorkloadSpec& spec)
    : Workload(spec.size, spec.seed),
      in_(spec.dim),
      hidden_(spec.hidden),
      params_(spec.hidden * spec.dim + 2 * spec.hidden + 1) {
  spec.validate();
  layers_ = {{0, hidden_ * in_},
             {hidden_ * in_, hidden_},
             {hidden_ * in_ + hidden_, hidden_},
             {hidden_ * in_ + 2 * hidden_, 1}};
  Rng teach(spec.seed, kTeacherStream);
  std::vector<double> teacher(params_);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (std::size_t i = 0; i < params_; ++i) {
    teacher[i] = (i < hidden_ * in_ + hidden_ ? s1 : s2) * teach.normal();
  }
  Rng data(spec.seed, kDataStream);
  x_.resize(size_ * in_);
  y_.resize(size_);
  for (auto& v : x_) v = data.normal();
  for (std::size_t j = 0; j < size_; ++j) {
    y_[j] = predict(teacher, std::span<const double>(&x_[j * in_], in_));
  }
}

double Mlp::predict(std::span<const double> w, std::span<const double> x) const {
  const double* w1 = w.data();
  const double* b1 = w1 + hidden_ * in_;
  const double* w2 = b1 + hidden_;
  const double b2 = w2[hidden_];
  double out = b2;
  for (std::size_t h = 0; h < hidden_; ++h) {
    double a = b1[h];
    for (std::size_t i = 0; i < in_; ++i) a += w1[h * in_ + i] * x[i];
    out += w2[h] * std::tanh(a);
  }
  return out;
}

void Mlp::gradient_sum(std::span<const double> w, std::span<const std::size_t> batch,
                       std::span<double> out) const {
  if (w.size() != params_ || out.size() != params_) throw ShapeError("mlp: parameter mismatch");
  check_batch(batch, size_);
  const double* w1 = w.data();
  const double* b1 = w1 + hidden_ * in_;
  const double* w2 = b1 + hidden_;
  double* g1 = out.data();
  double* gb1 = g1 + hidden_ * in_;
  double* g2 = gb1 + hidden_;
  std::vector<double> h(hidden_);
  for (auto j : batch) {
    const double* x = &x_[j * in_];
    double pred = w2[hidden_];
    for (std::size_t k = 0; k < hidden_; ++k) {
      double a = b1[k];
      for (std::size_t i = 0; i < in_; ++i) a += w1[k * in_ + i] * x[i];
      h[k] = std::tanh(a);
      pred += w2[k] * h[k];
    }
    const double e = pred - y_[j];
    g2[hidden_] += e;
    for (std::size_t k = 0; k < hidden_; ++k) {
      g2[k] += e * h[k];
      const double dh = e * w2[k] * (1.0 - h[k] * h[k]);
      gb1[k] += dh;
      for (std::size_t i = 0; i < in_; ++i) g1[k * in_ + i] += dh * x[i];
    }
  }
}

double Mlp::loss_sum(std::span<const double> w, std::span<const std::size_t> batch) const {
  if (w.size() != params_) throw ShapeError("mlp: parameter mismatch");
  check_batch(batch, size_);
  double total = 0.0;
  for (auto j : batch) {
    const double e = predict(w, std::span<const double>(&x_[j * in_], in_)) - y_[j];
    total += 0.5 * e * e;
  }
  return total;
}

std::vector<double> Mlp::initial_weights() const {
  Rng rng(seed_, kInitStream);
  std::vector<double> w(params_);
  for (auto& v : w) v = 0.1 * rng.normal();
  return w;
}

std::unique_ptr<Workload> generate_workload(const WorkloadSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case Kind::kQuadratic: return std::make_unique<Quadratic>(spec);
    case Kind::kLogistic: return std::make_unique<Logistic>(spec);
    case Kind::kMlp: return std::make_unique<Mlp>(spec);
  }
  throw InvalidArgument("unknown workload kind");
}

std::vector<std::size_t> shard(std::size_t size, std::size_t workers, std::size_t k) {
  if (workers == 0 || k >= workers) throw InvalidArgument("bad shard request");
  std::vector<std::size_t> out;
  for (std::size_t j = k; j < size; j += workers) out.push_back(j);
  return out;
}

std::size_t shard_count(std::size_t size, std::size_t workers, std::size_t k) {
  if (workers == 0 || k >= workers) throw InvalidArgument("bad shard request");
  return k < size ? (size - k + workers - 1) / workers : 0;
}

std::vector<std::size_t> shard_batch(std::size_t size, std::size_t workers,
                                     std::size_t k, std::size_t step, std::size_t n) {
  const auto count = shard_count(size, workers, k);
  if (count == 0) throw InvalidArgument("worker shard is empty; dataset smaller than worker count");
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = k + ((step * n + i) % count) * workers;
  return out;
}

}  // namespace gradsim::workload
