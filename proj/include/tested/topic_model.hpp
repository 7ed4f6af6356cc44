#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tested/corpus.hpp"
#include "tested/embedding.hpp"

namespace tested {

/// Partition of document ids into t non-empty clusters.
class TopicClustering {
 public:
  TopicClustering() = default;
  /// Validates that every assignment is in [0, t) and no cluster is empty.
  TopicClustering(std::vector<std::string> ids, std::vector<int> assignments, int t,
                  RowMatrixXf centroids = {});

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<int>& assignments() const noexcept { return assignments_; }
  int t() const noexcept { return t_; }
  /// t x dims, unit rows; empty when the clustering was imported.
  const RowMatrixXf& centroids() const noexcept { return centroids_; }
  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  /// |C_i| / sum_j |C_j|.
  const Eigen::VectorXd& importances() const noexcept { return importances_; }

  int cluster_of(const std::string& id) const;
  /// Member ids of cluster k in the order they appear in ids().
  std::vector<std::string> members(int k) const;
  std::unordered_map<std::string, int> assignment_map() const;

  /// SHA-256 over (t, id, cluster) triples; stable across platforms.
  std::string fingerprint() const;

 private:
  std::vector<std::string> ids_;
  std::vector<int> assignments_;
  int t_ = 0;
  RowMatrixXf centroids_;
  std::vector<std::size_t> sizes_;
  Eigen::VectorXd importances_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Recomputes centroids as renormalized member means over `m`.
TopicClustering with_centroids(const TopicClustering& c, const EmbeddingMatrix& m);

struct KMeansOptions {
  std::uint64_t seed = 0;
  int max_iter = 100;
  unsigned threads = 1;
};

struct KMeansFit {
  TopicClustering clustering;
  /// Mean cosine of each point to its own centroid, one entry per iteration.
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

/// max(2, round(sqrt(n / 2))), clamped to n.
int default_cluster_count(std::size_t n);

/// Spherical k-means with cosine k-means++ seeding. Results do not depend
/// on options.threads.
KMeansFit fit_spherical_kmeans(const EmbeddingMatrix& m, int t, const KMeansOptions& options = {});

/// Clustering JSON: {"t": int, "assignments": {id: idx}}.
TopicClustering import_clustering(const std::filesystem::path& path, const Corpus& corpus);
TopicClustering parse_clustering(const std::string& json_text, const Corpus& corpus);
void export_clustering(const TopicClustering& c, const std::filesystem::path& path);
std::string clustering_json(const TopicClustering& c);

/// Joint document x word counts with cached marginals.
class CooccurrenceTable {
 public:
  explicit CooccurrenceTable(Eigen::MatrixXd counts);

  const Eigen::MatrixXd& counts() const noexcept { return counts_; }
  const Eigen::VectorXd& row_marginals() const noexcept { return rows_; }
  const Eigen::VectorXd& col_marginals() const noexcept { return cols_; }
  double total() const noexcept { return total_; }

 private:
  Eigen::MatrixXd counts_;
  Eigen::VectorXd rows_;
  Eigen::VectorXd cols_;
  double total_ = 0.0;
};

/// Lowercased whitespace tokens of each document's text.
CooccurrenceTable build_cooccurrence(const Corpus& corpus);

/// Mutual information I(D; W) in nats. Throws NumericalError on an
/// all-zero table.
double compute_mi(const CooccurrenceTable& table);

}  // namespace tested
