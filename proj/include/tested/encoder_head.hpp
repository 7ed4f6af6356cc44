#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tested/corpus.hpp"
#include "tested/loss.hpp"

namespace tested {

/// Two-layer head over frozen embeddings:
///   hidden = tanh(x W1 + b1),  logits = hidden W2 + b2.
/// The hidden activations are the representations the contrastive term
/// acts on. The same type doubles as a gradient or optimizer-moment buffer.
template <typename Scalar>
struct EncoderHead {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix w1;  // dims x hidden
  Vector b1;  // hidden
  Matrix w2;  // hidden x 5
  Vector b2;  // 5

  Eigen::Index dims() const { return w1.rows(); }
  Eigen::Index hidden() const { return w1.cols(); }
  Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  static EncoderHead zeros(Eigen::Index dims, Eigen::Index hidden) {
    const auto classes = static_cast<Eigen::Index>(kNumLabels);
    return {Matrix::Zero(dims, hidden), Vector::Zero(hidden), Matrix::Zero(hidden, classes), Vector::Zero(classes)};
  }

  static EncoderHead zeros_like(const EncoderHead& other) { return zeros(other.dims(), other.hidden()); }

  /// Glorot-uniform weights, zero biases.
  static EncoderHead init(Eigen::Index dims, Eigen::Index hidden, std::uint64_t seed) {
    EncoderHead h = zeros(dims, hidden);
    std::mt19937_64 rng(seed);
    const auto fill = [&rng](Matrix& w) {
      const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> u(-a, a);
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(u(rng));
      }
    };
    fill(h.w1);
    fill(h.w2);
    return h;
  }

  template <typename Other>
  EncoderHead<Other> cast() const {
    return {w1.template cast<Other>(), b1.template cast<Other>(), w2.template cast<Other>(), b2.template cast<Other>()};
  }

  /// Visits (w1, b1, w2, b2) of this and any number of same-shaped heads.
  template <typename Fn, typename... Heads>
  void zip(Fn&& fn, Heads&... others) {
    fn(w1, others.w1...);
    fn(b1, others.b1...);
    fn(w2, others.w2...);
    fn(b2, others.b2...);
  }

  /// Flat view over every parameter, in (w1, b1, w2, b2) order.
  Scalar& coeff(Eigen::Index k) {
    if (k < w1.size()) return w1.data()[k];
    k -= w1.size();
    if (k < b1.size()) return b1.data()[k];
    k -= b1.size();
    if (k < w2.size()) return w2.data()[k];
    return b2.data()[k - w2.size()];
  }

  Scalar squared_norm() const {
    return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() + b2.squaredNorm();
  }

  bool all_finite() const { return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite(); }

  bool operator==(const EncoderHead& o) const {
    return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
  }
};

template <typename Scalar>
struct ForwardPass {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> hidden;  // b x h
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> logits;  // b x 5
};

template <typename Scalar, typename Derived>
ForwardPass<Scalar> forward(const EncoderHead<Scalar>& head, const Eigen::MatrixBase<Derived>& x) {
  ForwardPass<Scalar> f;
  f.hidden = ((x.template cast<Scalar>() * head.w1).rowwise() + head.b1.transpose()).array().tanh().matrix();
  f.logits = (f.hidden * head.w2).rowwise() + head.b2.transpose();
  return f;
}

struct LossOptions {
  double beta = 0.5;
  bool contrastive = true;
};

template <typename Scalar>
struct LossBreakdown {
  Scalar ce = 0;
  Scalar cl = 0;
  Scalar total = 0;
};

/// Mean cross-entropy plus (optionally) the mean pairwise contrastive
/// term over the batch's hidden representations. Fills `grad` with the
/// gradient of `total` when non-null. Batches of one carry no pairs, so
/// their contrastive term is zero.
template <typename Scalar, typename Derived>
LossBreakdown<Scalar> evaluate(const EncoderHead<Scalar>& head, const Eigen::MatrixBase<Derived>& x,
                               std::span<const StanceLabel> labels, const PairMatrix& pairs,
                               const LossOptions& opts, EncoderHead<Scalar>* grad = nullptr,
                               std::vector<Scalar>* negative_margins = nullptr) {
  using Matrix = typename EncoderHead<Scalar>::Matrix;
  const Eigen::Index b = x.rows();
  if (b == 0) throw DataError("empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != b) throw DataError("labels do not match the batch");

  const ForwardPass<Scalar> f = forward(head, x);
  LossBreakdown<Scalar> out;
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b);
  for (Eigen::Index i = 0; i < b; ++i) out.ce += loss_ce(f.logits.row(i), labels[static_cast<std::size_t>(i)]);
  out.ce *= inv_b;

  Matrix d_hidden;
  if (grad != nullptr) {
    // softmax - onehot, scaled by 1/b for the mean reduction
    Matrix d_logits = f.logits;
    for (Eigen::Index i = 0; i < b; ++i) {
      auto row = d_logits.row(i);
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
      row(label_index(labels[static_cast<std::size_t>(i)])) -= Scalar(1);
    }
    d_logits *= inv_b;
    grad->w2.noalias() = f.hidden.transpose() * d_logits;
    grad->b2 = d_logits.colwise().sum().transpose();
    d_hidden.noalias() = d_logits * head.w2.transpose();
  }

  if (opts.contrastive && b >= 2) {
    if (pairs.size() != b) throw DataError("pair matrix does not match the batch size");
    const auto beta = static_cast<Scalar>(opts.beta);
    const Scalar inv_pairs = Scalar(1) / static_cast<Scalar>(b * (b - 1) / 2);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = f.hidden.rowwise().norm();
    for (Eigen::Index i = 0; i < b; ++i) {
      if (norms[i] == Scalar(0)) throw NumericalError("zero representation vector in batch");
    }
    Scalar sum = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
      for (Eigen::Index j = i + 1; j < b; ++j) {
        const int p = pairs(i, j);
        const Scalar cos = std::clamp<Scalar>(f.hidden.row(i).dot(f.hidden.row(j)) / (norms[i] * norms[j]),
                                              Scalar(-1), Scalar(1));
        sum += contrastive_from_cosine(cos, p, beta);
        if (p < 0 && negative_margins != nullptr) negative_margins->push_back(cos - beta);
        if (grad != nullptr) {
          const Scalar slope = contrastive_slope(cos, p, beta) * inv_pairs;
          if (slope != Scalar(0)) {
            const Scalar inv_nn = Scalar(1) / (norms[i] * norms[j]);
            d_hidden.row(i) += slope * (f.hidden.row(j) * inv_nn - cos * f.hidden.row(i) / (norms[i] * norms[i]));
            d_hidden.row(j) += slope * (f.hidden.row(i) * inv_nn - cos * f.hidden.row(j) / (norms[j] * norms[j]));
          }
        }
      }
    }
    out.cl = sum * inv_pairs;
  }
  out.total = out.ce + out.cl;

  if (grad != nullptr) {
    const Matrix d_pre = (d_hidden.array() * (Scalar(1) - f.hidden.array().square())).matrix();
    grad->w1.noalias() = x.template cast<Scalar>().transpose() * d_pre;
    grad->b1 = d_pre.colwise().sum().transpose();
  }
  return out;
}

/// Argmax of the logits per row.
template <typename Scalar, typename Derived>
std::vector<StanceLabel> predict(const EncoderHead<Scalar>& head, const Eigen::MatrixBase<Derived>& x) {
  const auto f = forward(head, x);
  std::vector<StanceLabel> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < f.logits.rows(); ++i) {
    Eigen::Index best = 0;
    f.logits.row(i).maxCoeff(&best);
    out.push_back(kAllLabels[static_cast<std::size_t>(best)]);
  }
  return out;
}

}  // namespace tested
