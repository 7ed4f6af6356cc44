#include "tested/synthetic.hpp"

#include <cmath>
#include <random>

#include "tested/error.hpp"

namespace tested {

std::string topic_name(std::size_t topic) { return "topic-" + std::to_string(topic); }
std::string dataset_name(std::size_t dataset) { return std::string(1, static_cast<char>('A' + dataset % 26)) + (dataset >= 26 ? std::to_string(dataset / 26) : ""); }

namespace {

Eigen::VectorXd unit_gaussian(Eigen::Index dims, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd v(dims);
  for (Eigen::Index i = 0; i < dims; ++i) v[i] = g(rng);
  return v.normalized();
}

struct Structure {
  std::vector<Eigen::VectorXd> topic_dirs;
  std::vector<Eigen::VectorXd> label_dirs;
  std::vector<std::vector<double>> label_probs;  // per topic
};

Structure make_structure(const SyntheticOptions& o) {
  if (o.topic_counts.empty()) throw UsageError("synthetic corpus needs at least one topic");
  if (o.datasets < 1) throw UsageError("synthetic corpus needs at least one dataset");
  if (o.dims < 2) throw UsageError("synthetic embeddings need dims >= 2");
  if (o.label_weights.size() != kNumLabels) throw UsageError("label_weights must have 5 entries");
  std::mt19937_64 rng(o.structure_seed);
  Structure s;
  for (std::size_t t = 0; t < o.topic_counts.size(); ++t) s.topic_dirs.push_back(unit_gaussian(o.dims, rng));
  for (std::size_t l = 0; l < kNumLabels; ++l) s.label_dirs.push_back(unit_gaussian(o.dims, rng));
  for (std::size_t t = 0; t < o.topic_counts.size(); ++t) {
    std::vector<double> p(kNumLabels);
    for (std::size_t l = 0; l < kNumLabels; ++l) p[(l + t) % kNumLabels] = o.label_weights[l];
    s.label_probs.push_back(std::move(p));
  }
  return s;
}

const char* const kTopicWords[] = {"policy", "vote", "claim", "report", "debate", "health", "market", "court"};
const char* const kLabelWords[] = {"support", "oppose", "discuss", "unrelated", "neutral"};

SyntheticData draw(const SyntheticOptions& o, const std::vector<std::size_t>& counts) {
  const Structure s = make_structure(o);
  std::mt19937_64 rng(o.sample_seed * 0x9E3779B97F4A7C15ULL + 1);
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(o.dims)));
  std::uniform_int_distribution<int> word(0, 7);

  std::vector<Document> docs;
  std::vector<std::string> ids;
  std::size_t total = 0;
  for (auto c : counts) total += c;
  RowMatrixXf data(static_cast<Eigen::Index>(total), o.dims);
  Eigen::Index row = 0;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    std::discrete_distribution<std::size_t> pick_label(s.label_probs[t].begin(), s.label_probs[t].end());
    for (std::size_t i = 0; i < counts[t]; ++i, ++row) {
      const std::size_t l = pick_label(rng);
      Eigen::VectorXd e = o.topic_scale * s.topic_dirs[t] + o.label_scale * s.label_dirs[l];
      for (Eigen::Index d = 0; d < o.dims; ++d) e[d] += o.noise * g(rng);
      data.row(row) = e.normalized().cast<float>().transpose();

      Document doc;
      doc.id = o.id_prefix + ":" + std::to_string(t) + ":" + std::to_string(i);
      doc.dataset = dataset_name(t % o.datasets);
      doc.topic = topic_name(t);
      doc.text = "doc " + std::to_string(row) + " " + kTopicWords[(t + static_cast<std::size_t>(word(rng))) % 8] + " " +
                 kTopicWords[t % 8] + " " + kLabelWords[l];
      doc.label = kAllLabels[l];
      doc.raw_label = std::string(to_string(doc.label));
      ids.push_back(doc.id);
      docs.push_back(std::move(doc));
    }
  }
  SyntheticData out{Corpus(std::move(docs)), EmbeddingMatrix(std::move(ids), std::move(data), true)};
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticOptions& options) { return draw(options, options.topic_counts); }

SyntheticData generate_synthetic_eval(const SyntheticOptions& options, std::size_t per_topic) {
  SyntheticOptions o = options;
  o.sample_seed = options.sample_seed ^ 0xE7A1E7A1E7A1ULL;
  o.id_prefix = options.id_prefix + "-eval";
  return draw(o, std::vector<std::size_t>(options.topic_counts.size(), per_topic));
}

}  // namespace tested
