#pragma once

// Synthetic two-modality embeddings with controllable complementarity.
//
// Every sample has a class sign y (bonafide -1, deepfake +1) and a visibility
// type drawn independently of y:
//
//   hidden in modality a   with probability p
//   hidden in modality b   with probability p
//   visible in both        with probability 1 - 2p
//
// A modality that sees the sample carries amplitude `separation` (a) along
// its own unit direction u; a modality the sample is hidden from carries
// a cos(theta). Each modality then adds isotropic noise:
//
//   x_m = amp_m y u_m + sigma e_m,   e_m ~ N(0, I_{d_m})
//
// theta = 0 makes the modalities redundant. At theta = pi/2 the hidden
// samples are pure noise in one branch, so each branch alone misses a
// fraction of the trials while the other branch still resolves them.
// Projected onto u the single-branch problem is a symmetric Gaussian mixture,
// whose Bayes rule is sign(t), giving
//
//   single-branch Bayes error = (1 - p) Phi(-a / sigma) + p Phi(-a cos(theta) / sigma)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fiona/dataio.hpp"
#include "fiona/error.hpp"
#include "fiona/rng.hpp"

namespace fiona {

struct SynthConfig {
  std::size_t n_per_class = 1000;
  std::size_t dim_a = 32;
  std::size_t dim_b = 32;
  double theta = std::numbers::pi / 2;
  double sigma = 0.5;
  double separation = 1.0;        // a
  double hidden_fraction = 0.28;  // p, per modality
  std::uint64_t seed = 0;

  void validate() const {
    if (n_per_class < 1) throw ConfigError("synth: n per class must be >= 1");
    if (dim_a < 8 || dim_b < 8) throw ConfigError("synth: dims must be >= 8");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("synth: sigma must be > 0");
    if (!std::isfinite(theta)) throw ConfigError("synth: theta must be finite");
    if (!(separation > 0.0) || !std::isfinite(separation)) throw ConfigError("synth: separation must be > 0");
    if (!(hidden_fraction >= 0.0 && hidden_fraction <= 0.5)) {
      throw ConfigError("synth: hidden fraction must lie in [0, 0.5]");
    }
  }
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double synth_hidden_amplitude(const SynthConfig& c) { return c.separation * std::cos(c.theta); }

inline double synth_single_bayes_error(const SynthConfig& c) {
  const double p = c.hidden_fraction;
  return (1.0 - p) * normal_cdf(-c.separation / c.sigma) +
         p * normal_cdf(-synth_hidden_amplitude(c) / c.sigma);
}

// Two-branch Bayes error, 0.5 * integral of min(f+, f-) over the plane spanned
// by the two class directions, by midpoint quadrature.
inline double synth_joint_bayes_error(const SynthConfig& c, std::size_t grid = 801) {
  const double a = c.separation, h = synth_hidden_amplitude(c), s = c.sigma, p = c.hidden_fraction;
  // (amp_a, amp_b, weight) per visibility type.
  const double types[3][3] = {{h, a, p}, {a, h, p}, {a, a, 1.0 - 2.0 * p}};
  const double lim = std::max(std::abs(a), std::abs(h)) + 9.0 * s;
  const double step = 2.0 * lim / static_cast<double>(grid);
  const double norm = 1.0 / (2.0 * std::numbers::pi * s * s);
  auto density = [&](double t1, double t2, double y) {
    double f = 0.0;
    for (const auto& ty : types) {
      const double d1 = t1 - y * ty[0], d2 = t2 - y * ty[1];
      f += ty[2] * norm * std::exp(-(d1 * d1 + d2 * d2) / (2.0 * s * s));
    }
    return f;
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < grid; ++i) {
    const double t1 = -lim + (static_cast<double>(i) + 0.5) * step;
    for (std::size_t j = 0; j < grid; ++j) {
      const double t2 = -lim + (static_cast<double>(j) + 0.5) * step;
      acc += std::min(density(t1, t2, 1.0), density(t1, t2, -1.0));
    }
  }
  return 0.5 * acc * step * step;
}

// sigma at which a single branch has the requested Bayes error, by bisection
// (the error grows monotonically with sigma).
inline double synth_sigma_for_single_error(SynthConfig c, double target_error) {
  c.sigma = 1e-9;
  const double floor_error = synth_single_bayes_error(c);
  if (!(target_error > floor_error && target_error < 0.5)) {
    throw ConfigError("synth: single-branch error " + std::to_string(target_error) +
                      " unreachable, must lie in (" + std::to_string(floor_error) + ", 0.5)");
  }
  double lo = 1e-9, hi = 1.0;
  c.sigma = hi;
  while (synth_single_bayes_error(c) < target_error) {
    hi *= 2.0;
    c.sigma = hi;
  }
  for (int i = 0; i < 200; ++i) {
    c.sigma = 0.5 * (lo + hi);
    (synth_single_bayes_error(c) < target_error ? lo : hi) = c.sigma;
  }
  return 0.5 * (lo + hi);
}

inline std::pair<std::vector<double>, std::vector<double>> synth_directions(const SynthConfig& c) {
  Rng rng = Rng(c.seed).split("directions");
  auto draw = [&](std::size_t d) {
    std::vector<double> u(d);
    double norm = 0.0;
    for (double& v : u) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : u) v /= norm;
    return u;
  };
  auto ua = draw(c.dim_a);
  auto ub = draw(c.dim_b);
  return {std::move(ua), std::move(ub)};
}

// Expected per-class mean amplitude along u (same for both modalities).
inline double synth_mean_amplitude(const SynthConfig& c) {
  return (1.0 - c.hidden_fraction) * c.separation + c.hidden_fraction * synth_hidden_amplitude(c);
}

inline std::string synth_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt%07zu", i);
  return buf;
}

// 2 * n_per_class samples, classes alternating (even index bonafide), ids
// in generation order.
inline PairedDataset synth_generate(const SynthConfig& c) {
  c.validate();
  const auto [ua, ub] = synth_directions(c);
  const double hidden = synth_hidden_amplitude(c);
  Rng rng = Rng(c.seed).split("samples");

  PairedDataset pd;
  auto& A = pd.sources[0];
  auto& B = pd.sources[1];
  A.dim = static_cast<std::uint32_t>(c.dim_a);
  B.dim = static_cast<std::uint32_t>(c.dim_b);
  A.source_tag = "a";
  B.source_tag = "b";
  const std::size_t total = 2 * c.n_per_class;
  A.vectors.reserve(total * c.dim_a);
  B.vectors.reserve(total * c.dim_b);
  for (std::size_t i = 0; i < total; ++i) {
    const Label label = (i % 2 == 0) ? Label::bonafide : Label::deepfake;
    const double y = label == Label::bonafide ? -1.0 : 1.0;
    const double v = rng.uniform();
    const double amp_a = v < c.hidden_fraction ? hidden : c.separation;
    const double amp_b = (v >= c.hidden_fraction && v < 2.0 * c.hidden_fraction) ? hidden : c.separation;
    for (std::size_t j = 0; j < c.dim_a; ++j)
      A.vectors.push_back(static_cast<float>(amp_a * y * ua[j] + c.sigma * rng.normal()));
    for (std::size_t j = 0; j < c.dim_b; ++j)
      B.vectors.push_back(static_cast<float>(amp_b * y * ub[j] + c.sigma * rng.normal()));
    const std::string id = synth_id(i);
    A.ids.push_back(id);
    B.ids.push_back(id);
    A.labels.push_back(label);
    B.labels.push_back(label);
  }
  return pd;
}

struct SynthSplit {
  PairedDataset train;
  PairedDataset eval;
};

// One draw of n_per_class + n_eval_per_class per class; the first
// 2 * n_per_class samples become the training portion.
inline SynthSplit synth_generate_train_eval(SynthConfig c, std::size_t n_eval_per_class) {
  if (n_eval_per_class < 1) throw ConfigError("synth: eval size must be >= 1 per class");
  const std::size_t n_train = c.n_per_class;
  c.n_per_class += n_eval_per_class;
  const PairedDataset all = synth_generate(c);
  std::vector<std::size_t> tr, ev;
  for (std::size_t i = 0; i < all.count(); ++i) (i < 2 * n_train ? tr : ev).push_back(i);
  return {subset(all, tr), subset(all, ev)};
}

}  // namespace fiona
