#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include <Eigen/Dense>

#include "tested/corpus.hpp"
#include "tested/error.hpp"

namespace tested {

/// Same-label (+1) / different-label (-1) pair matrix of a batch.
/// Symmetric with a +1 diagonal by construction.
class PairMatrix {
 public:
  using Storage = Eigen::Matrix<signed char, Eigen::Dynamic, Eigen::Dynamic>;

  PairMatrix() = default;
  explicit PairMatrix(std::span<const StanceLabel> labels) {
    const auto b = static_cast<Eigen::Index>(labels.size());
    p_.resize(b, b);
    for (Eigen::Index i = 0; i < b; ++i) {
      for (Eigen::Index j = 0; j < b; ++j) {
        p_(i, j) = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? 1 : -1;
      }
    }
  }

  Eigen::Index size() const noexcept { return p_.rows(); }
  int operator()(Eigen::Index i, Eigen::Index j) const { return p_(i, j); }
  const Storage& matrix() const noexcept { return p_; }

 private:
  Storage p_;
};

/// -log softmax(logits)[y], stabilized by subtracting the max logit.
template <typename Derived>
typename Derived::Scalar loss_ce(const Eigen::MatrixBase<Derived>& logits, StanceLabel y) {
  using Scalar = typename Derived::Scalar;
  if (!logits.allFinite()) throw NumericalError("cross-entropy of non-finite logits");
  const Scalar top = logits.maxCoeff();
  const Scalar lse = top + std::log((logits.array() - top).exp().sum());
  return lse - logits(label_index(y));
}

/// Cosine of two representation vectors; throws on a zero vector.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar representation_cosine(const Eigen::MatrixBase<DerivedA>& a,
                                                const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) throw NumericalError("contrastive loss of a zero vector");
  return std::clamp<Scalar>(a.dot(b) / (na * nb), Scalar(-1), Scalar(1));
}

/// Contrastive loss as a function of the pair's cosine.
///   same label:      e (1 - e^(cos - 1))  = e - e^cos, in [0, e - 1/e]
///   different label: e^max(0, cos - beta) - 1,         in [0, e^(1-beta) - 1]
template <typename Scalar>
Scalar contrastive_from_cosine(Scalar cos, int p, Scalar beta) {
  const Scalar e = std::numbers::e_v<Scalar>;
  if (p > 0) return e * (Scalar(1) - std::exp(cos - Scalar(1)));
  return std::exp(std::max(Scalar(0), cos - beta)) - Scalar(1);
}

/// d(loss)/d(cos). The kink of the different-label branch at cos == beta
/// takes the zero subgradient.
template <typename Scalar>
Scalar contrastive_slope(Scalar cos, int p, Scalar beta) {
  if (p > 0) return -std::exp(cos);
  return cos > beta ? std::exp(cos - beta) : Scalar(0);
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar loss_cl_pair(const Eigen::MatrixBase<DerivedA>& xi, const Eigen::MatrixBase<DerivedB>& xj,
                                       int p, typename DerivedA::Scalar beta) {
  return contrastive_from_cosine(representation_cosine(xi, xj), p, beta);
}

/// Mean of the pair loss over unordered pairs i < j of the batch rows.
template <typename Derived>
typename Derived::Scalar loss_cl_batch(const Eigen::MatrixBase<Derived>& reps, const PairMatrix& pairs,
                                       typename Derived::Scalar beta) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index b = reps.rows();
  if (b < 2) throw DataError("contrastive loss needs a batch of at least 2");
  if (pairs.size() != b) throw DataError("pair matrix does not match the batch size");
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = i + 1; j < b; ++j) sum += loss_cl_pair(reps.row(i), reps.row(j), pairs(i, j), beta);
  }
  return sum / static_cast<Scalar>(b * (b - 1) / 2);
}

}  // namespace tested
