#pragma once

// Linear-kernel centered kernel alignment.
//
//   K = X X^T,  L = Y Y^T
//   K~ = H K H, L~ = H L H,  H = I - 11^T / n
//   HSIC(K~, L~) = trace(K~ L~)
//   CKA(X, Y) = HSIC(K~, L~) / sqrt(HSIC(K~, K~) HSIC(L~, L~))
//
// Two routes are provided: plain values (FeatureMatrix / GramMatrix) for
// measuring similarity, and graph ops (cka / cka_loss on Var) so the
// alignment term can be differentiated back into both branches.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "fiona/autodiff.hpp"
#include "fiona/error.hpp"
#include "fiona/tensor.hpp"

namespace fiona {

inline constexpr double kCkaEpsilon = 1e-12;

// n x d batch of features, n >= 2, finite.
class FeatureMatrix {
 public:
  explicit FeatureMatrix(Tensor values) : values_(std::move(values)) {
    if (values_.rank() != 2) {
      throw DimensionError("feature matrix must be 2-D, got " + to_string(values_.shape()));
    }
    if (values_.dim(0) < 2) {
      throw DegenerateInputError("feature matrix needs at least 2 rows to center, got " +
                                 std::to_string(values_.dim(0)));
    }
    if (!values_.all_finite()) throw NumericError("feature matrix contains non-finite values");
  }

  std::size_t rows() const { return values_.dim(0); }
  std::size_t cols() const { return values_.dim(1); }
  const Tensor& values() const noexcept { return values_; }

 private:
  Tensor values_;
};

class GramMatrix {
 public:
  static constexpr double kSymmetryTolerance = 1e-9;

  GramMatrix(Tensor values, bool centered) : values_(std::move(values)), centered_(centered) {
    if (values_.rank() != 2 || values_.dim(0) != values_.dim(1)) {
      throw DimensionError("gram matrix must be square, got " + to_string(values_.shape()));
    }
    const std::size_t n = values_.dim(0);
    double scale = 1.0;
    for (double v : values_.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (std::abs(values_(i, j) - values_(j, i)) > kSymmetryTolerance * scale) {
          throw ContractError("gram matrix is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
        }
  }

  std::size_t size() const { return values_.dim(0); }
  bool centered() const noexcept { return centered_; }
  const Tensor& values() const noexcept { return values_; }

 private:
  Tensor values_;
  bool centered_;
};

inline GramMatrix gram_matrix(const FeatureMatrix& x) {
  const Tensor& X = x.values();
  const std::size_t n = x.rows(), d = x.cols();
  Tensor K({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) s += X[i * d + p] * X[j * d + p];
      K(i, j) = K(j, i) = s;
    }
  if (!K.all_finite()) throw NumericError("gram matrix overflowed");
  return GramMatrix(std::move(K), false);
}

inline GramMatrix center_gram(const GramMatrix& k) {
  if (k.centered()) throw ContractError("center_gram: matrix is already centered");
  Tensor C = double_center(k.values());
  // Restore exact symmetry lost to rounding in the mean subtraction.
  const std::size_t n = C.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) C(j, i) = C(i, j);
  return GramMatrix(std::move(C), true);
}

// trace(K~ L~), evaluated as the elementwise dot product of two symmetric matrices.
inline double hsic(const GramMatrix& k, const GramMatrix& l) {
  if (!k.centered() || !l.centered()) throw ContractError("hsic: both gram matrices must be centered");
  if (k.size() != l.size()) {
    throw DimensionError("hsic: gram sizes differ, " + std::to_string(k.size()) + " vs " +
                         std::to_string(l.size()));
  }
  double s = 0.0;
  const auto a = k.values().data();
  const auto b = l.values().data();
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cka(const FeatureMatrix& x, const FeatureMatrix& y, double epsilon = kCkaEpsilon) {
  if (x.rows() != y.rows()) {
    throw DimensionError("cka: sample counts differ, " + std::to_string(x.rows()) + " vs " +
                         std::to_string(y.rows()));
  }
  const GramMatrix kc = center_gram(gram_matrix(x));
  const GramMatrix lc = center_gram(gram_matrix(y));
  const double kk = hsic(kc, kc);
  const double ll = hsic(lc, lc);
  if (kk <= epsilon) {
    throw DegenerateBatchError(DegenerateBatchError::Side::first,
                               "cka: first feature matrix has no centered variance");
  }
  if (ll <= epsilon) {
    throw DegenerateBatchError(DegenerateBatchError::Side::second,
                               "cka: second feature matrix has no centered variance");
  }
  return hsic(kc, lc) / std::sqrt(kk * ll);
}

// Differentiable CKA between two [n x d] graph nodes.
inline Var cka(Var x, Var y, double epsilon = kCkaEpsilon) {
  detail::require_rank(x, 2, "cka");
  detail::require_rank(y, 2, "cka");
  if (x.shape()[0] != y.shape()[0]) {
    throw DimensionError("cka: sample counts differ, " + to_string(x.shape()) + " vs " +
                         to_string(y.shape()));
  }
  if (x.shape()[0] < 2) throw DegenerateInputError("cka: needs at least 2 samples");
  const Var kc = center(matmul(x, transpose(x)));
  const Var lc = center(matmul(y, transpose(y)));
  const Var kk = dot(kc, kc);
  const Var ll = dot(lc, lc);
  if (kk.value().item() <= epsilon) {
    throw DegenerateBatchError(DegenerateBatchError::Side::first,
                               "cka: first branch features collapsed to a constant");
  }
  if (ll.value().item() <= epsilon) {
    throw DegenerateBatchError(DegenerateBatchError::Side::second,
                               "cka: second branch features collapsed to a constant");
  }
  return div(dot(kc, lc), sqrt(mul(kk, ll)));
}

// 1 - CKA(X, Y): zero for perfectly aligned features, at most one.
// Rounding can push CKA a few ulps past 1 (always the case at n = 2), so clamp.
inline Var cka_loss(Var x, Var y, double epsilon = kCkaEpsilon) {
  return add_scalar(scale(clamp(cka(x, y, epsilon), 0.0, 1.0), -1.0), 1.0);
}

}  // namespace fiona
