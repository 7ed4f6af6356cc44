#include "tested/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tested/error.hpp"
#include "tested/parallel.hpp"

namespace tested {

using nlohmann::json;

std::string_view to_string(AvgMode mode) {
  switch (mode) {
    case AvgMode::Moving: return "moving";
    case AvgMode::Exp: return "exp";
    case AvgMode::MovingLiteral: return "moving-literal";
  }
  return "exp";
}

AvgMode parse_avg_mode(std::string_view name) {
  const std::string key = to_lower(trim(name));
  if (key == "moving") return AvgMode::Moving;
  if (key == "exp") return AvgMode::Exp;
  if (key == "moving-literal") return AvgMode::MovingLiteral;
  throw UsageError("unknown averaging mode '" + std::string(name) + "' (moving, exp, moving-literal)");
}

void SamplerConfig::validate() const {
  if (budget < 1) throw UsageError("sampling budget must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
}

std::vector<std::size_t> per_cluster_quota(std::size_t budget, std::span<const double> importances) {
  std::vector<std::size_t> out;
  out.reserve(importances.size());
  for (double w : importances) {
    const double q = std::floor(static_cast<double>(budget) * w);
    out.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::max(q, 0.0))));
  }
  return out;
}

std::vector<std::size_t> per_cluster_quota_from_sizes(std::size_t budget, std::span<const std::size_t> sizes) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(sizes.size());
  for (std::size_t n : sizes) {
    const std::size_t q = total == 0 ? 0 : (budget * n) / total;
    out.push_back(std::max<std::size_t>(1, q));
  }
  return out;
}

std::size_t budget_from_fraction(double fraction, std::size_t n) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("budget fraction must lie in (0, 1]");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
}

namespace {

void normalize_in_place(Eigen::VectorXd& v) {
  const double n = v.norm();
  if (n > 0.0) v /= n;
}

}  // namespace

std::vector<std::size_t> select_diverse(const Eigen::Ref<const Eigen::MatrixXd>& points,
                                        std::span<const std::string> ids,
                                        std::span<const StanceLabel> labels, std::size_t quota,
                                        const SamplerConfig& cfg) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (ids.size() != n) throw DataError("select_diverse: ids and points differ in length");
  const bool balance = cfg.label_balance && !labels.empty();
  if (balance && labels.size() != n) throw DataError("select_diverse: labels and points differ in length");

  Eigen::VectorXd centroid = points.colwise().mean().transpose();
  normalize_in_place(centroid);
  Eigen::VectorXd point_norms = points.rowwise().norm();

  std::vector<bool> taken(n, false);
  std::vector<double> sims(n);
  std::array<std::size_t, kNumLabels> label_picks{};
  std::array<std::size_t, kNumLabels> label_left{};
  if (balance) {
    for (auto l : labels) ++label_left[static_cast<std::size_t>(label_index(l))];
  }

  std::vector<std::size_t> picks;
  picks.reserve(std::min(quota, n));
  for (std::size_t j = 1; j <= quota && picks.size() < n; ++j) {
    // Round-robin over labels: only labels with the fewest picks so far
    // (among those with candidates left) are eligible this step.
    std::size_t min_picks = 0;
    if (balance) {
      min_picks = std::numeric_limits<std::size_t>::max();
      for (std::size_t l = 0; l < kNumLabels; ++l) {
        if (label_left[l] > 0) min_picks = std::min(min_picks, label_picks[l]);
      }
    }
    // Two passes: the lowest cosine, then the smallest id among candidates
    // within kTieTolerance of it (exact ties rarely survive rounding).
    double min_sim = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      sims[i] = std::numeric_limits<double>::infinity();
      if (taken[i]) continue;
      if (balance && label_picks[static_cast<std::size_t>(label_index(labels[i]))] != min_picks) continue;
      const double denom = point_norms[static_cast<Eigen::Index>(i)];
      sims[i] = denom > 0.0 ? points.row(static_cast<Eigen::Index>(i)).dot(centroid) / denom : 0.0;
      min_sim = std::min(min_sim, sims[i]);
    }
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (sims[i] <= min_sim + kTieTolerance && (best == n || ids[i] < ids[best])) best = i;
    }
    taken[best] = true;
    picks.push_back(best);
    if (balance) {
      const auto l = static_cast<std::size_t>(label_index(labels[best]));
      ++label_picks[l];
      --label_left[l];
    }

    const Eigen::VectorXd e = points.row(static_cast<Eigen::Index>(best)).transpose();
    const double jd = static_cast<double>(j);
    switch (cfg.avg_mode) {
      case AvgMode::Exp:
        centroid = cfg.alpha * e + (1.0 - cfg.alpha) * centroid;
        break;
      case AvgMode::Moving:
        centroid = (jd * centroid + e) / (jd + 1.0);
        break;
      case AvgMode::MovingLiteral:
        centroid = ((jd - 1.0) / jd) * centroid + e / jd;
        break;
    }
    normalize_in_place(centroid);
  }
  return picks;
}

SampledSubset sample_topic_efficient(const EmbeddingMatrix& m, const TopicClustering& clustering,
                                     const Corpus& corpus, const SamplerConfig& cfg) {
  cfg.validate();
  if (!m.normalized()) throw UsageError("topic-efficient sampling needs row-normalized embeddings");
  const int t = clustering.t();
  const auto quotas = per_cluster_quota_from_sizes(cfg.budget, clustering.sizes());

  struct ClusterInput {
    std::vector<std::string> ids;
    std::vector<StanceLabel> labels;
    Eigen::MatrixXd points;
  };
  std::vector<ClusterInput> inputs(static_cast<std::size_t>(t));
  for (int k = 0; k < t; ++k) {
    auto& in = inputs[static_cast<std::size_t>(k)];
    in.ids = clustering.members(k);
    in.points.resize(static_cast<Eigen::Index>(in.ids.size()), m.dims());
    for (std::size_t i = 0; i < in.ids.size(); ++i) {
      const auto row = m.find(in.ids[i]);
      if (!row) throw DataError("clustered id '" + in.ids[i] + "' has no embedding");
      in.points.row(static_cast<Eigen::Index>(i)) = m.row(*row).cast<double>();
      in.labels.push_back(corpus.at(in.ids[i]).label);
    }
  }

  std::vector<std::vector<std::size_t>> picks(static_cast<std::size_t>(t));
  parallel_for(static_cast<std::size_t>(t), cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const auto& in = inputs[k];
      picks[k] = select_diverse(in.points, in.ids, in.labels, quotas[k], cfg);
    }
  });

  SampledSubset out;
  out.provenance.method = "topic";
  out.provenance.config = cfg;
  out.provenance.clustering_fingerprint = clustering.fingerprint();
  out.provenance.quotas = quotas;
  for (int k = 0; k < t; ++k) {
    const auto& in = inputs[static_cast<std::size_t>(k)];
    const auto& pk = picks[static_cast<std::size_t>(k)];
    for (auto i : pk) {
      out.selected.push_back(in.ids[i]);
      ++out.per_label_counts[static_cast<std::size_t>(label_index(in.labels[i]))];
    }
    out.per_cluster_counts[k] = pk.size();
    if (pk.size() < quotas[static_cast<std::size_t>(k)]) out.provenance.exhausted_clusters.push_back(k);
  }
  return out;
}

namespace {

void check_k(std::size_t k, const Corpus& corpus) {
  if (k < 1 || k > corpus.size()) {
    throw UsageError("sample size " + std::to_string(k) + " outside [1, " + std::to_string(corpus.size()) + "]");
  }
}

SampledSubset baseline_subset(const Corpus& corpus, std::vector<std::size_t> picks, const char* method,
                              std::size_t k, std::uint64_t seed) {
  SampledSubset out;
  out.provenance.method = method;
  out.provenance.config.budget = k;
  out.provenance.config.seed = seed;
  out.provenance.config.label_balance = false;
  for (auto i : picks) {
    const auto& d = corpus.documents()[i];
    out.selected.push_back(d.id);
    ++out.per_label_counts[static_cast<std::size_t>(label_index(d.label))];
  }
  return out;
}

}  // namespace

SampledSubset sample_random(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  check_k(k, corpus);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(k);
  return baseline_subset(corpus, std::move(order), "random", k, seed);
}

SampledSubset sample_stratified(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  check_k(k, corpus);
  std::array<std::vector<std::size_t>, kNumLabels> strata;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    strata[static_cast<std::size_t>(label_index(corpus.documents()[i].label))].push_back(i);
  }
  const std::size_t total = corpus.size();
  std::array<std::size_t, kNumLabels> alloc{};
  std::array<std::size_t, kNumLabels> remainder{};
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    alloc[l] = k * strata[l].size() / total;
    remainder[l] = k * strata[l].size() % total;
    assigned += alloc[l];
  }
  std::array<std::size_t, kNumLabels> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t r = 0; assigned < k; r = (r + 1) % kNumLabels) {
    const std::size_t l = order[r];
    if (alloc[l] < strata[l].size()) {
      ++alloc[l];
      ++assigned;
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picks;
  picks.reserve(k);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    auto& s = strata[l];
    std::shuffle(s.begin(), s.end(), rng);
    picks.insert(picks.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(alloc[l]));
  }
  return baseline_subset(corpus, std::move(picks), "stratified", k, seed);
}

std::string subset_json(const SampledSubset& s) {
  const auto& cfg = s.provenance.config;
  json per_cluster = json::object();
  for (const auto& [k, v] : s.per_cluster_counts) per_cluster[std::to_string(k)] = v;
  json per_label = json::object();
  for (StanceLabel l : kAllLabels) {
    per_label[std::string(to_string(l))] = s.per_label_counts[static_cast<std::size_t>(label_index(l))];
  }
  json j = {
      {"selected", s.selected},
      {"config",
       {{"method", s.provenance.method},
        {"budget", cfg.budget},
        {"avg_mode", std::string(to_string(cfg.avg_mode))},
        {"alpha", cfg.alpha},
        {"label_balance", cfg.label_balance},
        {"seed", cfg.seed}}},
      {"clustering_fingerprint", s.provenance.clustering_fingerprint},
      {"quotas", s.provenance.quotas},
      {"exhausted_clusters", s.provenance.exhausted_clusters},
      {"per_cluster_counts", per_cluster},
      {"per_label_counts", per_label},
  };
  return j.dump(1);
}

void write_subset_json(const SampledSubset& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << subset_json(s) << '\n';
}

void write_id_list(const SampledSubset& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& id : s.selected) out << id << '\n';
}

std::vector<std::string> read_selected_ids(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string head = trim(text.substr(0, std::min<std::size_t>(text.size(), 64)));
  if (!head.empty() && head.front() == '{') {
    try {
      return json::parse(text).at("selected").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  std::vector<std::string> ids;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    auto id = trim(line);
    if (!id.empty()) ids.push_back(std::move(id));
  }
  return ids;
}

}  // namespace tested
