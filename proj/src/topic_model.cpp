#include "tested/topic_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tested/error.hpp"
#include "tested/hash.hpp"
#include "tested/parallel.hpp"

namespace tested {

using nlohmann::json;

TopicClustering::TopicClustering(std::vector<std::string> ids, std::vector<int> assignments, int t,
                                 RowMatrixXf centroids)
    : ids_(std::move(ids)), assignments_(std::move(assignments)), t_(t), centroids_(std::move(centroids)) {
  if (t_ < 1) throw DataError("cluster count must be at least 1");
  if (ids_.size() != assignments_.size()) throw DataError("ids and assignments differ in length");
  if (centroids_.size() != 0 && centroids_.rows() != t_) {
    throw DataError("centroid matrix has " + std::to_string(centroids_.rows()) + " rows for t=" +
                    std::to_string(t_));
  }
  sizes_.assign(static_cast<std::size_t>(t_), 0);
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const int a = assignments_[i];
    if (a < 0 || a >= t_) {
      throw DataError("id '" + ids_[i] + "' assigned to cluster " + std::to_string(a) +
                      " outside [0, " + std::to_string(t_) + ")");
    }
    if (!index_.emplace(ids_[i], i).second) throw DataError("id '" + ids_[i] + "' assigned twice");
    ++sizes_[static_cast<std::size_t>(a)];
  }
  for (int k = 0; k < t_; ++k) {
    if (sizes_[static_cast<std::size_t>(k)] == 0) throw DataError("cluster " + std::to_string(k) + " is empty");
  }
  importances_.resize(t_);
  const double total = static_cast<double>(ids_.size());
  for (int k = 0; k < t_; ++k) importances_[k] = static_cast<double>(sizes_[static_cast<std::size_t>(k)]) / total;
}

int TopicClustering::cluster_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("id '" + id + "' is not clustered");
  return assignments_[it->second];
}

std::vector<std::string> TopicClustering::members(int k) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (assignments_[i] == k) out.push_back(ids_[i]);
  }
  return out;
}

std::unordered_map<std::string, int> TopicClustering::assignment_map() const {
  std::unordered_map<std::string, int> out;
  out.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) out.emplace(ids_[i], assignments_[i]);
  return out;
}

std::string TopicClustering::fingerprint() const {
  std::string buf = std::to_string(t_) + "\n";
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    buf += ids_[i];
    buf += '\t';
    buf += std::to_string(assignments_[i]);
    buf += '\n';
  }
  return sha256_hex(buf);
}

namespace {

// Normalized sum of member rows; falls back to `fallback` when the members
// cancel out exactly.
RowMatrixXf member_centroids(const EmbeddingMatrix& m, const std::vector<Eigen::Index>& rows,
                             const std::vector<int>& assignments, int t, const RowMatrixXf* fallback) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(t, m.dims());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sums.row(assignments[i]) += m.row(rows[i]).cast<double>();
  }
  RowMatrixXf out(t, m.dims());
  for (int k = 0; k < t; ++k) {
    const double n = sums.row(k).norm();
    if (n > 0.0) {
      out.row(k) = (sums.row(k) / n).cast<float>();
    } else if (fallback != nullptr) {
      out.row(k) = fallback->row(k);
    } else {
      out.row(k).setZero();
    }
  }
  return out;
}

}  // namespace

TopicClustering with_centroids(const TopicClustering& c, const EmbeddingMatrix& m) {
  std::vector<Eigen::Index> rows;
  rows.reserve(c.ids().size());
  for (const auto& id : c.ids()) rows.push_back(m.row_of(id));
  auto cents = member_centroids(m, rows, c.assignments(), c.t(), nullptr);
  return TopicClustering(c.ids(), c.assignments(), c.t(), std::move(cents));
}

int default_cluster_count(std::size_t n) {
  const int t = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n) / 2.0)));
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(2, t)), std::max<std::size_t>(n, 1)));
}

KMeansFit fit_spherical_kmeans(const EmbeddingMatrix& input, int t, const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(input.rows());
  if (t < 1) throw UsageError("cluster count must be at least 1");
  if (static_cast<std::size_t>(t) > n) {
    throw DataError("cannot fit " + std::to_string(t) + " clusters to " + std::to_string(n) + " points");
  }
  const EmbeddingMatrix m = input.normalized() ? input : normalize_rows(input);
  const auto dims = m.dims();
  Eigen::MatrixXd points = m.data().cast<double>();

  // k-means++ seeding with 1 - cos as the squared-distance surrogate.
  std::mt19937_64 rng(options.seed);
  std::vector<Eigen::Index> seeds;
  seeds.push_back(static_cast<Eigen::Index>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)));
  Eigen::VectorXd best_cos = points * points.row(seeds[0]).transpose();
  while (seeds.size() < static_cast<std::size_t>(t)) {
    Eigen::VectorXd weight = (1.0 - best_cos.array()).max(0.0);
    for (auto s : seeds) weight[s] = 0.0;
    const double total = weight.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (Eigen::Index i = 0; i < weight.size(); ++i) {
        if (weight[i] <= 0.0) continue;
        pick = i;
        if (u < weight[i]) break;
        u -= weight[i];
      }
    } else {
      // every remaining point duplicates a seed; take the first unused one
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        if (std::find(seeds.begin(), seeds.end(), i) == seeds.end()) {
          pick = i;
          break;
        }
      }
    }
    seeds.push_back(pick);
    best_cos = best_cos.cwiseMax(points * points.row(pick).transpose());
  }

  Eigen::MatrixXd cents(t, dims);
  for (int k = 0; k < t; ++k) cents.row(k) = points.row(seeds[static_cast<std::size_t>(k)]);

  std::vector<int> assign(n, -1);
  std::vector<double> own_cos(n, 0.0);
  KMeansFit fit;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    std::vector<int> next(n, 0);
    parallel_for(n, options.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const Eigen::VectorXd sims = cents * points.row(static_cast<Eigen::Index>(i)).transpose();
        int best = 0;
        for (int k = 1; k < t; ++k) {
          if (sims[k] > sims[best]) best = k;
        }
        next[i] = best;
        own_cos[i] = sims[best];
      }
    });

    // Repair empty clusters by stealing the point farthest from its centroid.
    std::vector<std::size_t> counts(static_cast<std::size_t>(t), 0);
    for (int a : next) ++counts[static_cast<std::size_t>(a)];
    for (int k = 0; k < t; ++k) {
      if (counts[static_cast<std::size_t>(k)] != 0) continue;
      std::size_t victim = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(next[i])] < 2) continue;
        if (victim == n || own_cos[i] < own_cos[victim]) victim = i;
      }
      --counts[static_cast<std::size_t>(next[victim])];
      next[victim] = k;
      ++counts[static_cast<std::size_t>(k)];
      cents.row(k) = points.row(static_cast<Eigen::Index>(victim));
    }

    const bool stable = next == assign;
    assign = std::move(next);

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(t, dims);
    for (std::size_t i = 0; i < n; ++i) sums.row(assign[i]) += points.row(static_cast<Eigen::Index>(i));
    for (int k = 0; k < t; ++k) {
      const double norm = sums.row(k).norm();
      if (norm > 0.0) cents.row(k) = sums.row(k) / norm;
    }

    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) obj += points.row(static_cast<Eigen::Index>(i)).dot(cents.row(assign[i]));
    fit.objective.push_back(obj / static_cast<double>(n));
    fit.iterations = iter + 1;
    if (stable) {
      fit.converged = true;
      break;
    }
  }

  RowMatrixXf cent_f = cents.cast<float>();
  fit.clustering = TopicClustering(m.ids(), std::move(assign), t, std::move(cent_f));
  return fit;
}

TopicClustering parse_clustering(const std::string& json_text, const Corpus& corpus) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("invalid clustering JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("t") || !j.contains("assignments") || !j["assignments"].is_object()) {
    throw DataError("clustering JSON must have integer \"t\" and object \"assignments\"");
  }
  const int t = j["t"].get<int>();
  const auto& map = j["assignments"];

  std::vector<std::string> unknown;
  for (const auto& [id, _] : map.items()) {
    if (!corpus.contains(id)) unknown.push_back(id);
  }
  std::vector<std::string> missing;
  std::vector<std::string> ids;
  std::vector<int> assignments;
  for (const auto& d : corpus.documents()) {
    auto it = map.find(d.id);
    if (it == map.end()) {
      missing.push_back(d.id);
      continue;
    }
    ids.push_back(d.id);
    assignments.push_back(it->get<int>());
  }
  if (!missing.empty() || !unknown.empty()) {
    std::string msg = "clustering does not match corpus:";
    if (!missing.empty()) {
      msg += " missing ids [";
      for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + missing[i];
      msg += "]";
    }
    if (!unknown.empty()) {
      msg += " unknown ids [";
      for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
      msg += "]";
    }
    throw DataError(msg);
  }
  return TopicClustering(std::move(ids), std::move(assignments), t);
}

TopicClustering import_clustering(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_clustering(buf.str(), corpus);
}

std::string clustering_json(const TopicClustering& c) {
  json assignments = json::object();
  for (std::size_t i = 0; i < c.ids().size(); ++i) assignments[c.ids()[i]] = c.assignments()[i];
  return json{{"t", c.t()}, {"assignments", assignments}}.dump(1);
}

void export_clustering(const TopicClustering& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << clustering_json(c) << '\n';
}

CooccurrenceTable::CooccurrenceTable(Eigen::MatrixXd counts) : counts_(std::move(counts)) {
  if (!counts_.allFinite() || (counts_.array() < 0.0).any()) {
    throw DataError("co-occurrence counts must be finite and non-negative");
  }
  rows_ = counts_.rowwise().sum();
  cols_ = counts_.colwise().sum().transpose();
  total_ = counts_.sum();
}

CooccurrenceTable build_cooccurrence(const Corpus& corpus) {
  std::map<std::string, Eigen::Index> vocab;
  std::vector<std::vector<std::string>> tokens;
  for (const auto& d : corpus.documents()) {
    std::istringstream in(to_lower(d.text));
    std::vector<std::string> toks;
    for (std::string w; in >> w;) {
      vocab.emplace(w, 0);
      toks.push_back(std::move(w));
    }
    tokens.push_back(std::move(toks));
  }
  Eigen::Index col = 0;
  for (auto& [_, idx] : vocab) idx = col++;
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tokens.size()), col);
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    for (const auto& w : tokens[r]) counts(static_cast<Eigen::Index>(r), vocab.at(w)) += 1.0;
  }
  return CooccurrenceTable(std::move(counts));
}

double compute_mi(const CooccurrenceTable& table) {
  const double n = table.total();
  if (!(n > 0.0)) throw NumericalError("mutual information of an all-zero table");
  const auto& c = table.counts();
  double mi = 0.0;
  for (Eigen::Index d = 0; d < c.rows(); ++d) {
    for (Eigen::Index w = 0; w < c.cols(); ++w) {
      const double joint = c(d, w);
      if (joint <= 0.0) continue;
      // log(P(d,w) / (P(d) P(w))) = log(n_dw * N / (n_d * n_w))
      mi += (joint / n) * std::log(joint * n / (table.row_marginals()[d] * table.col_marginals()[w]));
    }
  }
  return std::max(mi, 0.0);
}

}  // namespace tested
