#include "tested/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tested/error.hpp"

namespace tested {

using nlohmann::json;

double ks_stat(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DataError("KS statistic needs two nonempty samples");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

namespace {

// Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  const double a2 = -2.0 * lambda * lambda;
  double sum = 0.0;
  double sign = 2.0;
  double prev = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(a2 * k * k);
    sum += term;
    if (std::abs(term) <= 1e-3 * prev || std::abs(term) <= 1e-10 * sum) return std::clamp(sum, 0.0, 1.0);
    sign = -sign;
    prev = std::abs(term);
  }
  return 1.0;
}

// Probability that a uniformly random interleaving of n and m points keeps
// |i/n - j/m| strictly below `stat` along the whole path.
double exact_cdf_below(double stat, std::size_t n, std::size_t m) {
  const double nm = static_cast<double>(n) * static_cast<double>(m);
  const double bound = stat * nm - 1e-9 * nm;
  const auto inside = [&](std::size_t i, std::size_t j) {
    const double diff = std::abs(static_cast<double>(i) * static_cast<double>(m) -
                                 static_cast<double>(j) * static_cast<double>(n));
    return diff < bound;
  };
  // paths[j] counts admissible paths to (i, j); normalized by C(i+j, i)
  // incrementally would lose exactness, so counts stay integral in double.
  std::vector<double> paths(m + 1, 0.0);
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= m; ++j) {
      if (!inside(i, j)) {
        paths[j] = 0.0;
        continue;
      }
      if (i == 0 && j == 0) {
        paths[j] = 1.0;
      } else {
        const double from_left = j > 0 ? paths[j - 1] : 0.0;
        const double from_below = i > 0 ? paths[j] : 0.0;
        paths[j] = from_left + from_below;
      }
    }
  }
  double total = 1.0;  // C(n+m, n)
  for (std::size_t k = 1; k <= n; ++k) total = total * static_cast<double>(m + k) / static_cast<double>(k);
  return paths[m] / std::round(total);
}

}  // namespace

double ks_pvalue(double stat, std::size_t n, std::size_t m, KsMethod* method) {
  if (n < 1 || m < 1) throw DataError("KS p-value needs n, m >= 1");
  const bool exact = n + m <= kKsExactLimit;
  if (method != nullptr) *method = exact ? KsMethod::Exact : KsMethod::Asymptotic;
  if (stat <= 0.0) return 1.0;
  if (exact) return std::clamp(1.0 - exact_cdf_below(stat, n, m), 0.0, 1.0);
  const double ne = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
  const double root = std::sqrt(ne);
  return kolmogorov_q((root + 0.12 + 0.11 / root) * stat);
}

KsResult ks_test(std::span<const double> a, std::span<const double> b) {
  KsResult r;
  r.stat = ks_stat(a, b);
  r.n = a.size();
  r.m = b.size();
  r.p_value = ks_pvalue(r.stat, r.n, r.m, &r.method);
  return r;
}

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

std::vector<std::string> DistributionReport::top_keys(std::size_t k) const {
  return {keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(std::min(k, keys.size()))};
}

namespace {

double normalized(double sd, std::span<const double> values) {
  const double mean = values.empty() ? 0.0 : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return mean > 0.0 ? sd / mean : 0.0;
}

DistributionReport make_report(const CountMap& full, const CountMap& subset) {
  std::set<std::string> keys;
  for (const auto& [k, v] : full) {
    if (v < 0.0) throw DataError("negative count for '" + k + "'");
    keys.insert(k);
  }
  for (const auto& [k, v] : subset) {
    if (v < 0.0) throw DataError("negative count for '" + k + "'");
    keys.insert(k);
  }
  DistributionReport r;
  r.keys.assign(keys.begin(), keys.end());
  const auto get = [](const CountMap& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  };
  std::stable_sort(r.keys.begin(), r.keys.end(),
                   [&](const std::string& a, const std::string& b) { return get(full, a) > get(full, b); });
  for (const auto& k : r.keys) {
    r.full.push_back(get(full, k));
    r.subset.push_back(get(subset, k));
  }
  r.std_full = population_std(r.full);
  r.std_subset = population_std(r.subset);
  r.normalized_std_full = normalized(r.std_full, r.full);
  r.normalized_std_subset = normalized(r.std_subset, r.subset);
  r.rebalanced = r.normalized_std_subset < r.normalized_std_full;
  return r;
}

bool any_nonzero(const CountMap& m) {
  return std::any_of(m.begin(), m.end(), [](const auto& kv) { return kv.second != 0.0; });
}

}  // namespace

DistributionReport distribution_stats(const CountMap& full, const CountMap& subset) {
  if (!any_nonzero(full)) throw DataError("full count map has no nonzero count");
  if (!any_nonzero(subset)) throw DataError("subset count map has no nonzero count");
  return make_report(full, subset);
}

double cluster_purity(std::span<const int> clusters, std::span<const StanceLabel> gold) {
  if (clusters.size() != gold.size()) throw DataError("purity inputs differ in length");
  if (clusters.empty()) throw DataError("purity of an empty clustering");
  std::map<int, std::array<std::size_t, kNumLabels>> tally;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    ++tally[clusters[i]][static_cast<std::size_t>(label_index(gold[i]))];
  }
  std::size_t majority = 0;
  for (const auto& [_, counts] : tally) majority += *std::max_element(counts.begin(), counts.end());
  return static_cast<double>(majority) / static_cast<double>(clusters.size());
}

double cluster_purity(const std::unordered_map<std::string, int>& assignments,
                      const std::unordered_map<std::string, StanceLabel>& gold) {
  if (assignments.size() != gold.size()) throw DataError("purity: assignment and gold id sets differ");
  std::vector<int> c;
  std::vector<StanceLabel> g;
  c.reserve(assignments.size());
  g.reserve(assignments.size());
  for (const auto& [id, k] : assignments) {
    auto it = gold.find(id);
    if (it == gold.end()) throw DataError("purity: id '" + id + "' has no gold label");
    c.push_back(k);
    g.push_back(it->second);
  }
  return cluster_purity(c, g);
}

ClassificationMetrics classification_metrics(std::span<const StanceLabel> preds, std::span<const StanceLabel> golds) {
  if (preds.size() != golds.size()) throw DataError("predictions and gold labels differ in length");
  if (golds.empty()) throw DataError("no predictions to score");
  ClassificationMetrics out;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = static_cast<std::size_t>(label_index(preds[i]));
    const auto g = static_cast<std::size_t>(label_index(golds[i]));
    out.per_class[g].in_gold = true;
    if (p == g) {
      ++out.per_class[g].tp;
      ++correct;
    } else {
      ++out.per_class[p].fp;
      ++out.per_class[g].fn;
    }
  }
  std::size_t present = 0;
  for (auto& c : out.per_class) {
    const auto tp = static_cast<double>(c.tp);
    c.precision = c.tp + c.fp > 0 ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
    c.recall = c.tp + c.fn > 0 ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    c.f1 = denom > 0 ? 2.0 * tp / static_cast<double>(denom) : 0.0;
    if (!c.in_gold) continue;
    ++present;
    out.macro_precision += c.precision;
    out.macro_recall += c.recall;
    out.macro_f1 += c.f1;
  }
  out.macro_precision /= static_cast<double>(present);
  out.macro_recall /= static_cast<double>(present);
  out.macro_f1 /= static_cast<double>(present);
  out.accuracy = static_cast<double>(correct) / static_cast<double>(golds.size());
  return out;
}

ImbalanceReport imbalance_report(const Corpus& corpus, const std::vector<std::string>& subset,
                                 const ImbalanceOptions& options) {
  std::vector<const Document*> chosen;
  chosen.reserve(subset.size());
  for (const auto& id : subset) {
    const auto idx = corpus.find(id);
    if (!idx) throw DataError("subset id '" + id + "' is not in the corpus");
    chosen.push_back(&corpus.documents()[*idx]);
  }

  ImbalanceReport r;
  CountMap topics_full;
  CountMap topics_sub;
  for (const auto& [topic, n] : corpus.topic_counts()) topics_full[topic] = static_cast<double>(n);
  for (const auto* d : chosen) topics_sub[d->topic] += 1.0;
  const DistributionReport all_topics = make_report(topics_full, topics_sub);
  const auto top = all_topics.top_keys(options.top_k);

  CountMap top_full;
  CountMap top_sub;
  for (const auto& t : top) {
    top_full[t] = topics_full[t];
    top_sub[t] = topics_sub.count(t) ? topics_sub[t] : 0.0;
  }
  r.inter_topic = make_report(top_full, top_sub);

  std::map<std::string, std::array<double, kNumLabels>> labels_full;
  std::map<std::string, std::array<double, kNumLabels>> labels_sub;
  for (const auto& d : corpus.documents()) labels_full[d.topic][static_cast<std::size_t>(label_index(d.label))] += 1.0;
  for (const auto* d : chosen) labels_sub[d->topic][static_cast<std::size_t>(label_index(d->label))] += 1.0;

  for (const auto& t : top) {
    CountMap f;
    CountMap s;
    const auto sub = labels_sub.count(t) ? labels_sub[t] : std::array<double, kNumLabels>{};
    std::vector<double> sample_full;
    std::vector<double> sample_sub;
    for (StanceLabel l : kAllLabels) {
      const auto li = static_cast<std::size_t>(label_index(l));
      f[std::string(to_string(l))] = labels_full[t][li];
      s[std::string(to_string(l))] = sub[li];
      if (labels_full[t][li] > 0.0) {
        sample_full.push_back(labels_full[t][li]);
        sample_sub.push_back(sub[li]);
      }
    }
    r.per_topic.emplace_back(t, make_report(f, s));
    KsEntry e{t, ks_test(sample_full, sample_sub), false};
    e.rejected = ks_rejects(e.result);
    r.topic_ks.push_back(std::move(e));
  }
  if (!r.per_topic.empty()) {
    for (const auto& [_, rep] : r.per_topic) {
      r.mean_label_std_full += rep.std_full;
      r.mean_label_std_subset += rep.std_subset;
    }
    r.mean_label_std_full /= static_cast<double>(r.per_topic.size());
    r.mean_label_std_subset /= static_cast<double>(r.per_topic.size());
  }

  for (const auto& ds : corpus.datasets()) {
    CountMap f;
    CountMap s;
    for (const auto& d : corpus.documents()) {
      if (d.dataset == ds) f[d.topic] += 1.0;
    }
    for (const auto* d : chosen) {
      if (d->dataset == ds) s[d->topic] += 1.0;
    }
    const DistributionReport rep = make_report(f, s);
    const std::size_t k = std::min(options.ks_sample_size, rep.keys.size());
    std::vector<double> sample_full(rep.full.begin(), rep.full.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<double> sample_sub(rep.subset.begin(), rep.subset.begin() + static_cast<std::ptrdiff_t>(k));
    KsEntry e{ds, ks_test(sample_full, sample_sub), false};
    e.rejected = ks_rejects(e.result);
    r.dataset_ks.push_back(std::move(e));
  }
  return r;
}

namespace {

json report_to_json(const DistributionReport& r) {
  return {{"keys", r.keys},
          {"full", r.full},
          {"subset", r.subset},
          {"std_full", r.std_full},
          {"std_subset", r.std_subset},
          {"normalized_std_full", r.normalized_std_full},
          {"normalized_std_subset", r.normalized_std_subset},
          {"rebalanced", r.rebalanced}};
}

json ks_to_json(const KsEntry& e) {
  return {{"key", e.key},
          {"stat", e.result.stat},
          {"p_value", e.result.p_value},
          {"n", e.result.n},
          {"m", e.result.m},
          {"method", e.result.method == KsMethod::Exact ? "exact" : "asymptotic"},
          {"rejected", e.rejected}};
}

}  // namespace

std::string imbalance_report_json(const ImbalanceReport& r) {
  json per_topic = json::array();
  for (const auto& [t, rep] : r.per_topic) per_topic.push_back({{"topic", t}, {"labels", report_to_json(rep)}});
  json ds = json::array();
  for (const auto& e : r.dataset_ks) ds.push_back(ks_to_json(e));
  json tp = json::array();
  for (const auto& e : r.topic_ks) tp.push_back(ks_to_json(e));
  return json{{"inter_topic", report_to_json(r.inter_topic)},
              {"per_topic", per_topic},
              {"mean_label_std_full", r.mean_label_std_full},
              {"mean_label_std_subset", r.mean_label_std_subset},
              {"dataset_ks", ds},
              {"topic_ks", tp}}
      .dump(1);
}

std::string imbalance_report_text(const ImbalanceReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "inter-topic (top " << r.inter_topic.keys.size() << " topics)\n";
  out << "  " << std::left << std::setw(32) << "topic" << std::right << std::setw(10) << "D" << std::setw(10)
      << "D_train" << '\n';
  for (std::size_t i = 0; i < r.inter_topic.keys.size(); ++i) {
    out << "  " << std::left << std::setw(32) << r.inter_topic.keys[i] << std::right << std::setw(10)
        << r.inter_topic.full[i] << std::setw(10) << r.inter_topic.subset[i] << '\n';
  }
  out << "  std " << r.inter_topic.std_full << " -> " << r.inter_topic.std_subset << "  normalized "
      << r.inter_topic.normalized_std_full << " -> " << r.inter_topic.normalized_std_subset
      << (r.inter_topic.rebalanced ? "  [rebalanced]" : "") << '\n';
  out << "per-topic label std (mean over top topics) " << r.mean_label_std_full << " -> "
      << r.mean_label_std_subset << '\n';
  const auto table = [&out](const char* title, const std::vector<KsEntry>& rows) {
    out << title << '\n';
    out << "  " << std::left << std::setw(32) << "key" << std::right << std::setw(8) << "stat" << std::setw(12)
        << "p-value" << "  rejected\n";
    for (const auto& e : rows) {
      out << "  " << std::left << std::setw(32) << e.key << std::right << std::setprecision(2) << std::setw(8)
          << e.result.stat << std::setprecision(6) << std::setw(12) << e.result.p_value << "  "
          << (e.rejected ? "yes" : "no") << '\n';
    }
    out << std::setprecision(2);
  };
  table("KS: topic counts per dataset", r.dataset_ks);
  table("KS: label counts per topic", r.topic_ks);
  return out.str();
}

std::string distribution_csv(const DistributionReport& r) {
  std::ostringstream out;
  out << "key,full,subset\n";
  for (std::size_t i = 0; i < r.keys.size(); ++i) {
    std::string key = r.keys[i];
    if (key.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : key) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      key = quoted + "\"";
    }
    out << key << ',' << r.full[i] << ',' << r.subset[i] << '\n';
  }
  return out.str();
}

Eigen::MatrixX2d pca_2d(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (x.rows() == 0) return Eigen::MatrixX2d(0, 2);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(x.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd basis(d, 2);
  basis.col(0) = es.eigenvectors().col(d - 1);
  basis.col(1) = d > 1 ? Eigen::VectorXd(es.eigenvectors().col(d - 2)) : Eigen::VectorXd::Zero(d);
  // fix the sign so that the largest-magnitude loading is positive
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
  }
  return centered * basis;
}

}  // namespace tested
