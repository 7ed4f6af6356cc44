#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "oracles.hpp"
#include "tested/sampler.hpp"
#include "tested/synthetic.hpp"

using namespace tested;

namespace {

SamplerConfig cfg_with(std::size_t budget, bool balance = false, AvgMode mode = AvgMode::Exp) {
  SamplerConfig c;
  c.budget = budget;
  c.label_balance = balance;
  c.avg_mode = mode;
  return c;
}

std::vector<std::size_t> pick(const Eigen::MatrixXd& pts, const std::vector<std::string>& ids, std::size_t quota,
                              const SamplerConfig& cfg, const std::vector<StanceLabel>& labels = {}) {
  return select_diverse(pts, ids, labels, quota, cfg);
}

std::vector<std::string> seq_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(i));
  return ids;
}

Corpus labeled_corpus(const std::vector<StanceLabel>& labels) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < labels.size(); ++i)
    docs.push_back({"d" + std::to_string(i), "A", "x", "t", std::string(to_string(labels[i])), labels[i]});
  return Corpus(std::move(docs));
}

}  // namespace

TEST_CASE("per_cluster_quota examples") {
  const std::vector<double> a{0.8, 0.2};
  CHECK(per_cluster_quota(5, a) == std::vector<std::size_t>{4, 1});
  const std::vector<double> b{0.5, 0.5};
  CHECK(per_cluster_quota(1, b) == std::vector<std::size_t>{1, 1});
  const std::vector<double> c{0.335, 0.335, 0.33};
  CHECK(per_cluster_quota(100, c) == std::vector<std::size_t>{33, 33, 33});
  const std::vector<std::size_t> sizes{335, 335, 330};
  CHECK(per_cluster_quota_from_sizes(100, sizes) == std::vector<std::size_t>{33, 33, 33});
}

TEST_CASE("budget_from_fraction") {
  CHECK(budget_from_fraction(0.10, 1000) == 100);
  CHECK(budget_from_fraction(0.01, 50) == 1);
  CHECK_THROWS_AS(budget_from_fraction(0.0, 10), UsageError);
  CHECK_THROWS_AS(budget_from_fraction(1.5, 10), UsageError);
}

TEST_CASE("config validation") {
  SamplerConfig c;
  c.budget = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.budget = 1;
  c.alpha = 1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK(parse_avg_mode("moving") == AvgMode::Moving);
  CHECK(parse_avg_mode("exp") == AvgMode::Exp);
  CHECK(parse_avg_mode("moving-literal") == AvgMode::MovingLiteral);
  CHECK_THROWS_AS(parse_avg_mode("median"), UsageError);
}

TEST_CASE("first pick is the point least similar to the mean") {
  Eigen::MatrixXd pts(3, 2);
  pts << 1, 0, 0.995, 0.0999, -1, 0;
  const auto ids = seq_ids(3);
  for (AvgMode mode : {AvgMode::Exp, AvgMode::Moving, AvgMode::MovingLiteral}) {
    for (bool balance : {false, true}) {
      const std::vector<StanceLabel> labels(3, StanceLabel::Positive);
      CHECK(pick(pts, ids, 1, cfg_with(1, balance, mode), labels) == std::vector<std::size_t>{2});
    }
  }
}

TEST_CASE("one-point cluster") {
  Eigen::MatrixXd pts(1, 3);
  pts << 0, 0, 1;
  CHECK(pick(pts, {"only"}, 5, cfg_with(5)) == std::vector<std::size_t>{0});
}

TEST_CASE("four-point cluster with quota four is a deterministic permutation") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    Eigen::MatrixXd pts(4, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = g(rng);
    pts.rowwise().normalize();
    const auto a = pick(pts, seq_ids(4), 4, cfg_with(4));
    const auto b = pick(pts, seq_ids(4), 4, cfg_with(4));
    CHECK(a == b);
    CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 4);
  }
}

TEST_CASE("ties go to the smallest id") {
  Eigen::MatrixXd pts(4, 2);
  pts << 1, 0, 0, 1, -1, 0, 0, -1;  // mean is zero: every cosine ties
  CHECK(pick(pts, {"d", "b", "c", "a"}, 1, cfg_with(1)) == std::vector<std::size_t>{3});
}

TEST_CASE("exp selection matches a brute-force replay") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> size(1, 8), dims(2, 6);
  for (int t = 0; t < 200; ++t) {
    const int n = size(rng), d = dims(rng);
    Eigen::MatrixXd pts(n, d);
    std::vector<std::vector<double>> raw(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(d)));
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) raw[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = g(rng);
      raw[static_cast<std::size_t>(i)] = oracle::unit(raw[static_cast<std::size_t>(i)]);
      for (int k = 0; k < d; ++k) pts(i, k) = raw[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    const auto ids = seq_ids(static_cast<std::size_t>(n));
    const auto want = oracle::replay_exp(raw, ids, static_cast<std::size_t>(n), 0.9);
    CAPTURE(n);
    CHECK(pick(pts, ids, static_cast<std::size_t>(n), cfg_with(static_cast<std::size_t>(n))) == want);
  }
}

TEST_CASE("moving modes follow their recurrences") {
  // Two picks on a 3-point cluster, replayed by hand.
  Eigen::MatrixXd pts(3, 2);
  pts << 1, 0, 0.6, 0.8, -0.6, 0.8;
  const auto ids = seq_ids(3);
  const Eigen::Vector2d c0 = pts.colwise().mean().transpose().normalized();
  const auto cos_to = [&](Eigen::Vector2d c, int i) { return pts.row(i).dot(c.normalized()); };
  const auto first = pick(pts, ids, 1, cfg_with(1, false, AvgMode::Moving))[0];

  // moving: c1 = (1 * c0 + e) / 2
  const Eigen::Vector2d e = pts.row(static_cast<Eigen::Index>(first)).transpose();
  const Eigen::Vector2d c_moving = (c0 + e) / 2;
  // literal: c1 = 0 * c0 + e / 1 = e
  const Eigen::Vector2d c_literal = e;
  for (const auto& [mode, c1] : {std::pair{AvgMode::Moving, c_moving}, std::pair{AvgMode::MovingLiteral, c_literal}}) {
    int best = -1;
    for (int i = 0; i < 3; ++i) {
      if (static_cast<std::size_t>(i) == first) continue;
      if (best < 0 || cos_to(c1, i) < cos_to(c1, best)) best = i;
    }
    const auto got = pick(pts, ids, 2, cfg_with(2, false, mode));
    CHECK(got[0] == first);
    CHECK(got[1] == static_cast<std::size_t>(best));
  }
}

TEST_CASE("second exp pick is never the nearest neighbour of the first as alpha approaches 1") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  SamplerConfig c = cfg_with(2);
  c.alpha = 1.0 - 1e-9;
  for (int t = 0; t < 300; ++t) {
    const int n = 3 + t % 6;
    Eigen::MatrixXd pts(n, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = g(rng);
    pts.rowwise().normalize();
    const auto got = pick(pts, seq_ids(static_cast<std::size_t>(n)), 2, c);
    int nearest = -1;
    for (int i = 0; i < n; ++i) {
      if (static_cast<std::size_t>(i) == got[0]) continue;
      if (nearest < 0 || pts.row(i).dot(pts.row(static_cast<Eigen::Index>(got[0]))) >
                             pts.row(nearest).dot(pts.row(static_cast<Eigen::Index>(got[0]))))
        nearest = i;
    }
    CHECK(got[1] != static_cast<std::size_t>(nearest));
  }
}

TEST_CASE("label balance cycles labels before repeating") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  std::vector<StanceLabel> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(i < 8 ? StanceLabel::Positive : (i < 11 ? StanceLabel::Negative : StanceLabel::Other));
  Eigen::MatrixXd pts(12, 4);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = g(rng);
  pts.rowwise().normalize();
  const auto got = pick(pts, seq_ids(12), 12, cfg_with(12, true), labels);
  REQUIRE(got.size() == 12);
  std::array<int, kNumLabels> seen{};
  std::array<int, kNumLabels> left{8, 3, 0, 1, 0};
  for (auto i : got) {
    const auto l = static_cast<std::size_t>(label_index(labels[i]));
    // the picked label has the fewest picks among labels still available
    for (std::size_t k = 0; k < kNumLabels; ++k)
      if (left[k] > 0) CHECK(seen[l] <= seen[k]);
    ++seen[l];
    --left[l];
  }
  // first three picks cover all three labels
  std::set<StanceLabel> first3{labels[got[0]], labels[got[1]], labels[got[2]]};
  CHECK(first3.size() == 3);
}

TEST_CASE("topic-efficient sampling on the synthetic corpus") {
  SyntheticOptions o;
  const auto data = generate_synthetic(o);
  const int t = 24;
  const auto fit = fit_spherical_kmeans(data.embeddings, t, {7, 100, 1});
  SamplerConfig cfg;
  cfg.budget = budget_from_fraction(0.10, data.corpus.size());
  cfg.seed = 7;
  const auto s = sample_topic_efficient(data.embeddings, fit.clustering, data.corpus, cfg);

  SUBCASE("without replacement and consistent ledgers") {
    std::set<std::string> uniq(s.selected.begin(), s.selected.end());
    CHECK(uniq.size() == s.selected.size());
    std::size_t by_cluster = 0, by_label = 0;
    for (const auto& [k, n] : s.per_cluster_counts) by_cluster += n;
    for (auto n : s.per_label_counts) by_label += n;
    CHECK(by_cluster == s.selected.size());
    CHECK(by_label == s.selected.size());
    for (const auto& id : s.selected) CHECK(data.corpus.contains(id));
  }
  SUBCASE("quota law and budget law") {
    const auto q = per_cluster_quota_from_sizes(cfg.budget, fit.clustering.sizes());
    std::size_t total = 0;
    for (int k = 0; k < t; ++k) {
      const auto n = s.per_cluster_counts.at(k);
      CHECK(n <= q[static_cast<std::size_t>(k)]);
      if (fit.clustering.sizes()[static_cast<std::size_t>(k)] >= q[static_cast<std::size_t>(k)])
        CHECK(n == q[static_cast<std::size_t>(k)]);
      total += q[static_cast<std::size_t>(k)];
    }
    CHECK(s.selected.size() <= total);
    CHECK(s.selected.size() <= static_cast<std::size_t>(std::ceil(0.10 * static_cast<double>(data.corpus.size()))) + t);
  }
  SUBCASE("independent of thread count") {
    SamplerConfig c4 = cfg;
    c4.threads = 4;
    const auto s4 = sample_topic_efficient(data.embeddings, fit.clustering, data.corpus, c4);
    CHECK(s4.selected == s.selected);
  }
  SUBCASE("provenance") {
    CHECK(s.provenance.method == "topic");
    CHECK(s.provenance.clustering_fingerprint == fit.clustering.fingerprint());
    CHECK(s.provenance.quotas.size() == static_cast<std::size_t>(t));
  }
}

TEST_CASE("exhausted clusters are recorded") {
  RowMatrixXf d(3, 2);
  d << 1, 0, 0, 1, 0.6f, 0.8f;
  EmbeddingMatrix m({"d0", "d1", "d2"}, d, true);
  const Corpus c = labeled_corpus({StanceLabel::Positive, StanceLabel::Negative, StanceLabel::Other});
  TopicClustering cl({"d0", "d1", "d2"}, {0, 0, 1}, 2);
  auto s = sample_topic_efficient(m, cl, c, cfg_with(30));
  CHECK(s.selected.size() == 3);
  CHECK(s.provenance.exhausted_clusters == std::vector<int>{0, 1});
}

TEST_CASE("topic-efficient sampling preconditions") {
  RowMatrixXf d(2, 2);
  d << 2, 0, 0, 3;
  const Corpus c = labeled_corpus({StanceLabel::Positive, StanceLabel::Negative});
  TopicClustering cl({"d0", "d1"}, {0, 1}, 2);
  CHECK_THROWS_AS(sample_topic_efficient(EmbeddingMatrix({"d0", "d1"}, d, false), cl, c, cfg_with(1)), UsageError);
  RowMatrixXf one(1, 2);
  one << 1, 0;
  CHECK_THROWS_AS(sample_topic_efficient(EmbeddingMatrix({"d0"}, one, true), cl, c, cfg_with(1)), DataError);
}

TEST_CASE("random and stratified baselines") {
  std::vector<StanceLabel> labels;
  for (int i = 0; i < 60; ++i) labels.push_back(StanceLabel::Positive);
  for (int i = 0; i < 40; ++i) labels.push_back(StanceLabel::Negative);
  const Corpus c = labeled_corpus(labels);

  auto full = sample_random(c, c.size(), 1);
  CHECK(std::set<std::string>(full.selected.begin(), full.selected.end()).size() == c.size());

  auto st = sample_stratified(c, 10, 3);
  CHECK(st.per_label_counts[0] == 6);
  CHECK(st.per_label_counts[1] == 4);

  CHECK(sample_random(c, 17, 9).selected == sample_random(c, 17, 9).selected);
  CHECK(sample_stratified(c, 17, 9).selected == sample_stratified(c, 17, 9).selected);
  CHECK(sample_random(c, 17, 9).selected != sample_random(c, 17, 10).selected);

  CHECK_THROWS_AS(sample_random(c, 0, 1), UsageError);
  CHECK_THROWS_AS(sample_stratified(c, 101, 1), UsageError);
}

TEST_CASE("stratified uses largest remainder") {
  std::vector<StanceLabel> labels;
  for (int i = 0; i < 5; ++i) labels.push_back(StanceLabel::Positive);
  for (int i = 0; i < 3; ++i) labels.push_back(StanceLabel::Negative);
  for (int i = 0; i < 2; ++i) labels.push_back(StanceLabel::Neutral);
  // k=5 -> quotas 2.5, 1.5, 1.0 -> floors 2,1,1 with one seat left; ties go in label order
  auto s = sample_stratified(labeled_corpus(labels), 5, 1);
  CHECK(s.per_label_counts[0] == 3);
  CHECK(s.per_label_counts[1] == 1);
  CHECK(s.per_label_counts[4] == 1);
}

TEST_CASE("subset export and id list import") {
  const Corpus c = labeled_corpus({StanceLabel::Positive, StanceLabel::Negative, StanceLabel::Other});
  auto s = sample_random(c, 2, 4);
  const auto dir = std::filesystem::temp_directory_path();
  write_subset_json(s, dir / "tested_subset.json");
  write_id_list(s, dir / "tested_subset.txt");
  CHECK(read_selected_ids(dir / "tested_subset.json") == s.selected);
  CHECK(read_selected_ids(dir / "tested_subset.txt") == s.selected);
  std::filesystem::remove(dir / "tested_subset.json");
  std::filesystem::remove(dir / "tested_subset.txt");
}
