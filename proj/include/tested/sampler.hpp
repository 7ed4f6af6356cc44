#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tested/corpus.hpp"
#include "tested/embedding.hpp"
#include "tested/topic_model.hpp"

namespace tested {

/// Centroid recurrence applied after each pick.
///  - Exp:           c <- alpha * e + (1 - alpha) * c
///  - Moving:        running mean over {c_0, e_1, ..., e_j}: c <- (j c + e) / (j + 1)
///  - MovingLiteral: c <- ((j - 1) / j) c + e / j, so c_1 = e_1
enum class AvgMode { Moving, Exp, MovingLiteral };

std::string_view to_string(AvgMode mode);
AvgMode parse_avg_mode(std::string_view name);

struct SamplerConfig {
  std::size_t budget = 1;  // S, total sampling threshold
  AvgMode avg_mode = AvgMode::Exp;
  double alpha = 0.9;
  bool label_balance = true;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Throws UsageError unless budget >= 1 and 0 < alpha < 1.
  void validate() const;
};

struct SamplingProvenance {
  std::string method;  // "topic", "random" or "stratified"
  SamplerConfig config;
  std::string clustering_fingerprint;
  std::vector<std::size_t> quotas;
  /// Clusters whose candidates ran out before their quota was met.
  std::vector<int> exhausted_clusters;
};

struct SampledSubset {
  std::vector<std::string> selected;
  std::map<int, std::size_t> per_cluster_counts;
  std::array<std::size_t, kNumLabels> per_label_counts{};
  SamplingProvenance provenance;
};

/// s_i = max(1, floor(S * I_i)).
std::vector<std::size_t> per_cluster_quota(std::size_t budget, std::span<const double> importances);
/// Same law evaluated exactly from cluster sizes: max(1, floor(S * n_i / N)).
std::vector<std::size_t> per_cluster_quota_from_sizes(std::size_t budget, std::span<const std::size_t> sizes);

/// floor(fraction * n), at least 1.
std::size_t budget_from_fraction(double fraction, std::size_t n);

/// Cosines this close to the minimum count as tied.
inline constexpr double kTieTolerance = 1e-12;

/// Diversity selection inside one cluster. `points` holds the member
/// embeddings (one row each), `ids` breaks cosine ties, and `labels`
/// drives round-robin balancing when cfg.label_balance is set (pass an
/// empty span to disable it). Returns member row indices in pick order;
/// fewer than `quota` when the cluster runs out.
std::vector<std::size_t> select_diverse(const Eigen::Ref<const Eigen::MatrixXd>& points,
                                        std::span<const std::string> ids,
                                        std::span<const StanceLabel> labels, std::size_t quota,
                                        const SamplerConfig& cfg);

/// Topic-efficient sampling: importance-weighted quotas per cluster, each
/// filled by repeatedly picking the candidate least similar to a centroid
/// that is updated after every pick.
SampledSubset sample_topic_efficient(const EmbeddingMatrix& m, const TopicClustering& clustering,
                                     const Corpus& corpus, const SamplerConfig& cfg);

/// Uniform without replacement.
SampledSubset sample_random(const Corpus& corpus, std::size_t k, std::uint64_t seed);

/// Proportional allocation over stance labels (largest remainder), uniform
/// within each label.
SampledSubset sample_stratified(const Corpus& corpus, std::size_t k, std::uint64_t seed);

std::string subset_json(const SampledSubset& s);
void write_subset_json(const SampledSubset& s, const std::filesystem::path& path);
/// One id per line.
void write_id_list(const SampledSubset& s, const std::filesystem::path& path);
/// Accepts either the JSON export or a plain id list.
std::vector<std::string> read_selected_ids(const std::filesystem::path& path);

}  // namespace tested
