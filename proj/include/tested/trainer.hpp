#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tested/embedding.hpp"
#include "tested/encoder_head.hpp"

namespace tested {

struct TrainConfig {
  /// Peak of the warmup/decay schedule. The head trains on frozen
  /// embeddings, so the default is 100x the full fine-tuning rate of 2e-5.
  double lr_peak = 2e-3;
  double weight_decay = 0.01;
  int epochs = 3;
  std::size_t batch_size = 16;
  double warmup_fraction = 0.10;
  double clip_norm = 1.0;
  double beta_margin = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int hidden = 128;
  bool contrastive = true;
  std::uint64_t seed = 0;

  void validate() const;
  LossOptions loss_options() const { return {beta_margin, contrastive}; }
};

/// Linear 0 -> lr_peak over the first ceil(warmup_fraction * total) steps,
/// then linear lr_peak -> 0 at `total`.
double lr_at(std::size_t step, std::size_t total, const TrainConfig& cfg);

/// Scales every gradient by min(1, max_norm / global_norm). Returns the
/// norm before clipping.
template <typename Scalar>
Scalar clip_global_norm(EncoderHead<Scalar>& grad, Scalar max_norm) {
  const Scalar norm = std::sqrt(grad.squared_norm());
  if (max_norm > Scalar(0) && norm > max_norm) {
    const Scalar s = max_norm / norm;
    grad.zip([s](auto& g) { g *= s; });
  }
  return norm;
}

/// Adam with bias correction and decoupled weight decay. Biases are not
/// decayed.
template <typename Scalar>
class AdamW {
 public:
  AdamW() = default;
  AdamW(const EncoderHead<Scalar>& like, const TrainConfig& cfg)
      : m_(EncoderHead<Scalar>::zeros_like(like)),
        v_(EncoderHead<Scalar>::zeros_like(like)),
        beta1_(cfg.adam_beta1),
        beta2_(cfg.adam_beta2),
        eps_(cfg.adam_eps),
        weight_decay_(cfg.weight_decay) {}

  void step(EncoderHead<Scalar>& params, const EncoderHead<Scalar>& grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(beta1_);
    const auto b2 = static_cast<Scalar>(beta2_);
    const auto eps = static_cast<Scalar>(eps_);
    const auto lr_s = static_cast<Scalar>(lr);
    const auto step_size = static_cast<Scalar>(lr / c1);
    const auto inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
    auto update = [&](auto& p, const auto& g, auto& m, auto& v, bool decay) {
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
      if (decay && weight_decay_ != 0.0) p -= lr_s * static_cast<Scalar>(weight_decay_) * p;
      p.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_c2 + eps);
    };
    update(params.w1, grad.w1, m_.w1, v_.w1, true);
    update(params.b1, grad.b1, m_.b1, v_.b1, false);
    update(params.w2, grad.w2, m_.w2, v_.w2, true);
    update(params.b2, grad.b2, m_.b2, v_.b2, false);
  }

  std::uint64_t steps() const noexcept { return t_; }
  const EncoderHead<Scalar>& first_moment() const noexcept { return m_; }
  const EncoderHead<Scalar>& second_moment() const noexcept { return v_; }

 private:
  EncoderHead<Scalar> m_;
  EncoderHead<Scalar> v_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  double weight_decay_ = 0.0;
  std::uint64_t t_ = 0;
};

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double ce = 0.0;
  double cl = 0.0;
  double total = 0.0;
};

struct TrainState {
  EncoderHead<float> head;
  AdamW<float> optimizer;
  std::size_t step = 0;
  std::vector<StepRecord> history;
  TrainConfig config;
};

/// Trains a fresh head on the rows of `m` named by `ids`. Batches are
/// formed once (seeded shuffle) with their pair matrices precomputed; each
/// epoch visits them in a reshuffled order. Throws DataError before
/// training if any id lacks an embedding or label.
TrainState train(const std::vector<std::string>& ids, const EmbeddingMatrix& m,
                 const std::map<std::string, StanceLabel>& labels, const TrainConfig& cfg);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Parameters whose central difference straddles the kink of the
  /// different-label branch.
  std::size_t excluded = 0;
};

/// Central finite differences over every parameter against the analytic
/// gradient of the total loss. Relative error per parameter is
/// |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
///
/// The differences are always taken in f64 on the (exactly widened)
/// parameters, so for an f32 head the check measures the error of the f32
/// analytic gradient rather than f32 cancellation in the quotient.
template <typename Scalar, typename Derived>
GradCheckResult grad_check(const EncoderHead<Scalar>& head, const Eigen::MatrixBase<Derived>& x,
                           std::span<const StanceLabel> labels, const LossOptions& opts, double eps = 1e-4) {
  const PairMatrix pairs(labels);
  EncoderHead<Scalar> analytic = EncoderHead<Scalar>::zeros_like(head);
  evaluate(head, x, labels, pairs, opts, &analytic);

  const Eigen::MatrixXd xd = x.template cast<double>();
  EncoderHead<double> probe = head.template cast<double>();
  GradCheckResult r;
  std::vector<double> m_plus, m_minus;
  EncoderHead<double>* no_grad = nullptr;
  for (Eigen::Index k = 0; k < probe.parameter_count(); ++k) {
    double& p = probe.coeff(k);
    const double saved = p;
    m_plus.clear();
    m_minus.clear();
    p = saved + eps;
    const double up = evaluate(probe, xd, labels, pairs, opts, no_grad, &m_plus).total;
    p = saved - eps;
    const double down = evaluate(probe, xd, labels, pairs, opts, no_grad, &m_minus).total;
    p = saved;

    bool straddles = false;
    for (std::size_t q = 0; q < m_plus.size(); ++q) {
      if ((m_plus[q] > 0.0) != (m_minus[q] > 0.0) || m_plus[q] == 0.0 || m_minus[q] == 0.0) {
        straddles = true;
        break;
      }
    }
    if (straddles) {
      ++r.excluded;
      continue;
    }
    const double fd = (up - down) / (2.0 * eps);
    const double ga = static_cast<double>(analytic.coeff(k));
    const double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
    r.max_relative_error = std::max(r.max_relative_error, rel);
    ++r.checked;
  }
  return r;
}

/// Checkpoint: "TSCK", u32 version, u32 dims, u32 hidden, u32 classes,
/// then w1 (row-major), b1, w2 (row-major), b2 as f32 LE, then the config
/// as JSON.
void write_checkpoint(const TrainState& state, const std::filesystem::path& path);
struct Checkpoint {
  EncoderHead<float> head;
  TrainConfig config;
};
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// step,lr,ce,cl,total
void write_loss_history(const std::vector<StepRecord>& history, const std::filesystem::path& path);
std::string loss_history_csv(const std::vector<StepRecord>& history);

std::string train_config_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

/// Embedding rows for `ids` in order, as a dense matrix.
Eigen::MatrixXf gather_rows(const EmbeddingMatrix& m, const std::vector<std::string>& ids);

}  // namespace tested
