#pragma once

// L = L_CE + lambda * L_CKA, with
//   L_CE  = -(1/n) sum_i sum_c y_true(i,c) log y_pred(i,c)
//   L_CKA = 1 - CKA(X, Y)

#include <span>
#include <string>
#include <vector>

#include "fiona/autodiff.hpp"
#include "fiona/cka.hpp"
#include "fiona/error.hpp"
#include "fiona/labels.hpp"

namespace fiona {

inline constexpr double kDefaultLambda = 0.1;
inline constexpr double kProbabilityFloor = 1e-12;

struct LossConfig {
  double lambda = kDefaultLambda;
  double cka_epsilon = kCkaEpsilon;
  double label_smoothing = 0.0;

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (!(cka_epsilon > 0.0)) throw ConfigError("cka_epsilon must be positive");
    if (!(label_smoothing >= 0.0 && label_smoothing <= 0.2)) {
      throw ConfigError("label_smoothing must lie in [0, 0.2]");
    }
  }
};

// One-hot targets, optionally smoothed toward uniform over the 2 classes.
inline Tensor one_hot(std::span<const Label> labels, double smoothing = 0.0) {
  Tensor t({labels.size(), 2}, smoothing / 2.0);
  for (std::size_t i = 0; i < labels.size(); ++i) t(i, to_int(labels[i])) += 1.0 - smoothing;
  return t;
}

inline Var cross_entropy(Var probs, std::span<const Label> labels, double smoothing = 0.0) {
  const Shape& s = probs.shape();
  if (s.size() != 2 || s[1] != 2 || s[0] != labels.size()) {
    throw DimensionError("cross_entropy: probabilities " + to_string(s) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const Var target = probs.graph->constant(one_hot(labels, smoothing));
  const Var logp = log(clamp(probs, kProbabilityFloor, 1.0));
  return scale(dot(target, logp), -1.0 / static_cast<double>(labels.size()));
}

inline Var cross_entropy(Var probs, std::span<const int> labels, double smoothing = 0.0) {
  std::vector<Label> ls;
  ls.reserve(labels.size());
  for (int v : labels) ls.push_back(label_from_int(v));
  return cross_entropy(probs, ls, smoothing);
}

struct LossTerms {
  Var total;
  Var cross_entropy;
  Var cka_loss;
};

inline LossTerms total_loss(Var probs, std::span<const Label> labels, Var branch_x, Var branch_y,
                            const LossConfig& cfg) {
  cfg.validate();
  const Var ce = cross_entropy(probs, labels, cfg.label_smoothing);
  const Var align = cka_loss(branch_x, branch_y, cfg.cka_epsilon);
  return {add(ce, scale(align, cfg.lambda)), ce, align};
}

}  // namespace fiona
