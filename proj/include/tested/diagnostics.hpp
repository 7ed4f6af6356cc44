#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tested/corpus.hpp"
#include "tested/embedding.hpp"

namespace tested {

// ---- Kolmogorov-Smirnov -------------------------------------------------

/// sup_x |F1(x) - F2(x)| over the pooled sample points.
double ks_stat(std::span<const double> a, std::span<const double> b);

enum class KsMethod { Exact, Asymptotic };

struct KsResult {
  double stat = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::size_t m = 0;
  KsMethod method = KsMethod::Exact;
};

/// Largest n + m for which the p-value is computed exactly.
inline constexpr std::size_t kKsExactLimit = 20;

/// P(D >= stat) under the null. Exact (lattice-path count over all
/// C(n+m, n) interleavings) when n + m <= kKsExactLimit, otherwise the
/// asymptotic Kolmogorov distribution.
double ks_pvalue(double stat, std::size_t n, std::size_t m, KsMethod* method = nullptr);

KsResult ks_test(std::span<const double> a, std::span<const double> b);

/// Rejection rule used in the imbalance report: p <= 0.05 or stat >= 0.4.
inline bool ks_rejects(const KsResult& r) { return r.p_value <= 0.05 || r.stat >= 0.4; }

// ---- count distributions ------------------------------------------------

using CountMap = std::map<std::string, double>;

struct DistributionReport {
  /// Union of keys, zero-filled, ordered by descending full count then key.
  std::vector<std::string> keys;
  std::vector<double> full;
  std::vector<double> subset;
  double std_full = 0.0;
  double std_subset = 0.0;
  double normalized_std_full = 0.0;
  double normalized_std_subset = 0.0;
  /// Normalized std of the subset below that of the full counts.
  bool rebalanced = false;
  std::vector<std::string> top_keys(std::size_t k) const;
};

/// Population standard deviation.
double population_std(std::span<const double> values);

/// Throws DataError when either map has no nonzero count.
DistributionReport distribution_stats(const CountMap& full, const CountMap& subset);

// ---- clustering / classification quality -------------------------------

/// (1/N) sum_k max_label |cluster_k ∩ label|. Throws DataError when the id
/// sets differ.
double cluster_purity(const std::unordered_map<std::string, int>& assignments,
                      const std::unordered_map<std::string, StanceLabel>& gold);

/// Index-aligned purity over parallel vectors.
double cluster_purity(std::span<const int> clusters, std::span<const StanceLabel> gold);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  bool in_gold = false;
};

struct ClassificationMetrics {
  double macro_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double accuracy = 0.0;
  std::array<ClassScores, kNumLabels> per_class{};
};

/// Macro averages run over the classes present in `golds`; empty
/// denominators contribute 0.
ClassificationMetrics classification_metrics(std::span<const StanceLabel> preds, std::span<const StanceLabel> golds);

// ---- imbalance report ---------------------------------------------------

struct KsEntry {
  std::string key;  // dataset or topic name
  KsResult result;
  bool rejected = false;
};

struct ImbalanceReport {
  DistributionReport inter_topic;
  /// Per-topic label distributions for the top_k most frequent topics.
  std::vector<std::pair<std::string, DistributionReport>> per_topic;
  /// Topic counts (top ks_sample_size topics of each dataset) in D vs subset.
  std::vector<KsEntry> dataset_ks;
  /// Label counts of each top topic in D vs subset.
  std::vector<KsEntry> topic_ks;
  /// Mean per-topic label std over per_topic, full and subset.
  double mean_label_std_full = 0.0;
  double mean_label_std_subset = 0.0;
};

struct ImbalanceOptions {
  std::size_t top_k = 20;
  /// Topics per dataset entering the dataset-level KS test.
  std::size_t ks_sample_size = 5;
};

/// Throws DataError if a subset id is not in the corpus.
ImbalanceReport imbalance_report(const Corpus& corpus, const std::vector<std::string>& subset,
                                 const ImbalanceOptions& options = {});

std::string imbalance_report_json(const ImbalanceReport& r);
std::string imbalance_report_text(const ImbalanceReport& r);
/// key,full,subset rows for external plotting.
std::string distribution_csv(const DistributionReport& r);

// ---- projection ---------------------------------------------------------

/// Rows projected onto the top-2 principal components.
Eigen::MatrixX2d pca_2d(const Eigen::Ref<const Eigen::MatrixXd>& x);

}  // namespace tested
