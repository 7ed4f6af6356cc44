#include "tested/pipeline.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

#include "tested/error.hpp"
#include "tested/hash.hpp"

namespace tested {

using nlohmann::json;

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Topic: return "topic";
    case SamplerKind::Random: return "random";
    case SamplerKind::Stratified: return "stratified";
  }
  return "topic";
}

SamplerKind parse_sampler_kind(std::string_view name) {
  const std::string key = to_lower(trim(name));
  if (key == "topic") return SamplerKind::Topic;
  if (key == "random") return SamplerKind::Random;
  if (key == "stratified") return SamplerKind::Stratified;
  throw UsageError("unknown sampler '" + std::string(name) + "' (topic, random, stratified)");
}

void RunConfig::validate() const {
  if (!(budget > 0.0 && budget <= 1.0)) throw UsageError("budget fraction must lie in (0, 1]");
  if (clusters < 0) throw UsageError("clusters must be >= 0");
  if (kmeans_max_iter < 1) throw UsageError("kmeans_max_iter must be >= 1");
  if (threads < 1) throw UsageError("threads must be >= 1");
  if (!(sampler.alpha > 0.0 && sampler.alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  train_config().validate();
}

SamplerConfig RunConfig::sampler_config(std::size_t budget_size) const {
  SamplerConfig s = sampler;
  s.budget = budget_size;
  s.seed = seed;
  s.threads = threads;
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  if (no_contrastive) t.contrastive = false;
  return t;
}

RunConfig apply_run_config_json(RunConfig c, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
  try {
    c.budget = j.value("budget", c.budget);
    c.seed = j.value("seed", c.seed);
    if (j.contains("sampler")) c.sampler_kind = parse_sampler_kind(j["sampler"].get<std::string>());
    c.no_contrastive = j.value("no_contrastive", c.no_contrastive);
    c.clusters = j.value("clusters", c.clusters);
    c.kmeans_max_iter = j.value("kmeans_max_iter", c.kmeans_max_iter);
    c.threads = j.value("threads", c.threads);
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      const auto get = [&p](const char* key, std::filesystem::path& dst) {
        if (p.contains(key)) dst = p[key].get<std::string>();
      };
      get("corpus", c.paths.corpus);
      get("embeddings", c.paths.embeddings);
      get("clustering", c.paths.clustering);
      get("subset", c.paths.subset);
      get("checkpoint", c.paths.checkpoint);
      get("eval_corpus", c.paths.eval_corpus);
      get("eval_embeddings", c.paths.eval_embeddings);
      get("output_dir", c.paths.output_dir);
    }
    if (j.contains("sampler_options")) {
      const auto& s = j["sampler_options"];
      if (s.contains("avg_mode")) c.sampler.avg_mode = parse_avg_mode(s["avg_mode"].get<std::string>());
      c.sampler.alpha = s.value("alpha", c.sampler.alpha);
      c.sampler.label_balance = s.value("label_balance", c.sampler.label_balance);
    }
    if (j.contains("train")) {
      json merged = json::parse(train_config_json(c.train));
      merged.update(j["train"]);
      c.train = train_config_from_json(merged.dump());
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (path.extension() == ".toml") {
    try {
      const toml::table tbl = toml::parse(text, path.string());
      std::ostringstream js;
      js << toml::json_formatter{tbl};
      text = js.str();
    } catch (const toml::parse_error& e) {
      throw UsageError(std::string("invalid TOML config: ") + std::string(e.description()));
    }
  }
  return apply_run_config_json(RunConfig{}, text);
}

std::string run_config_json(const RunConfig& c) {
  json j = {{"budget", c.budget},
            {"seed", c.seed},
            {"sampler", std::string(to_string(c.sampler_kind))},
            {"no_contrastive", c.no_contrastive},
            {"clusters", c.clusters},
            {"kmeans_max_iter", c.kmeans_max_iter},
            {"sampler_options",
             {{"avg_mode", std::string(to_string(c.sampler.avg_mode))},
              {"alpha", c.sampler.alpha},
              {"label_balance", c.sampler.label_balance}}},
            {"train", json::parse(train_config_json(c.train_config()))}};
  // threads and paths are left out on purpose: neither changes results
  return j.dump();
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return import_csv(path);
  return read_matrix(path);
}

TopicClustering cluster_pool(const EmbeddingMatrix& pool, const RunConfig& cfg) {
  const int t = cfg.clusters > 0 ? cfg.clusters : default_cluster_count(static_cast<std::size_t>(pool.rows()));
  KMeansOptions opts;
  opts.seed = cfg.seed;
  opts.max_iter = cfg.kmeans_max_iter;
  opts.threads = cfg.threads;
  return fit_spherical_kmeans(pool, t, opts).clustering;
}

SampledSubset draw_subset(const Corpus& pool, const EmbeddingMatrix& embeddings, const TopicClustering* clustering,
                          const RunConfig& cfg) {
  const std::size_t s = budget_from_fraction(cfg.budget, pool.size());
  switch (cfg.sampler_kind) {
    case SamplerKind::Topic: {
      if (clustering == nullptr) throw UsageError("topic sampler needs a clustering");
      const EmbeddingMatrix& m = embeddings.normalized() ? embeddings : normalize_rows(embeddings);
      return sample_topic_efficient(m, *clustering, pool, cfg.sampler_config(s));
    }
    case SamplerKind::Random: return sample_random(pool, s, cfg.seed);
    case SamplerKind::Stratified: return sample_stratified(pool, s, cfg.seed);
  }
  throw UsageError("unknown sampler");
}

Evaluation evaluate_head(const EncoderHead<float>& head, const Corpus& corpus, const EmbeddingMatrix& embeddings) {
  Evaluation ev;
  for (const auto& d : corpus.documents()) {
    ev.ids.push_back(d.id);
    ev.gold.push_back(d.label);
  }
  const Eigen::MatrixXf x = gather_rows(embeddings, ev.ids);
  ev.predictions = predict(head, x);
  ev.metrics = classification_metrics(ev.predictions, ev.gold);
  return ev;
}

ExperimentResult run_experiment(const Corpus& pool, const EmbeddingMatrix& pool_embeddings, const Corpus& eval,
                                const EmbeddingMatrix& eval_embeddings, const RunConfig& cfg,
                                const TopicClustering* clustering) {
  cfg.validate();
  if (pool.empty()) throw DataError("training pool is empty");
  if (eval.empty()) throw DataError("evaluation corpus is empty");
  ExperimentResult r;
  if (cfg.sampler_kind == SamplerKind::Topic) {
    if (clustering != nullptr) {
      r.clustering = *clustering;
    } else {
      std::vector<std::string> ids;
      for (const auto& d : pool.documents()) ids.push_back(d.id);
      r.clustering = cluster_pool(select_rows(pool_embeddings, ids), cfg);
    }
  }
  r.subset = draw_subset(pool, pool_embeddings, cfg.sampler_kind == SamplerKind::Topic ? &r.clustering : nullptr, cfg);
  r.state = train(r.subset.selected, pool_embeddings, pool.label_map(), cfg.train_config());
  r.evaluation = evaluate_head(r.state.head, eval, eval_embeddings);
  return r;
}

std::vector<SweepRow> run_sweep(const Corpus& pool, const EmbeddingMatrix& pool_embeddings, const Corpus& eval,
                                const EmbeddingMatrix& eval_embeddings, const RunConfig& cfg,
                                const std::vector<double>& budgets) {
  if (budgets.empty()) throw UsageError("sweep needs at least one budget");
  for (double b : budgets) {
    if (!(b > 0.0 && b <= 1.0)) throw UsageError("sweep budgets must lie in (0, 1]");
  }
  TopicClustering shared;
  const TopicClustering* clustering = nullptr;
  if (cfg.sampler_kind == SamplerKind::Topic) {
    std::vector<std::string> ids;
    for (const auto& d : pool.documents()) ids.push_back(d.id);
    shared = cluster_pool(select_rows(pool_embeddings, ids), cfg);
    clustering = &shared;
  }
  std::vector<SweepRow> rows;
  for (double b : budgets) {
    RunConfig c = cfg;
    c.budget = b;
    const auto r = run_experiment(pool, pool_embeddings, eval, eval_embeddings, c, clustering);
    rows.push_back({b, r.evaluation.metrics.macro_f1, r.subset.selected.size()});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(9);
  out << "budget,macro_f1,subset_size\n";
  for (const auto& r : rows) out << r.budget << ',' << r.macro_f1 << ',' << r.subset_size << '\n';
  return out.str();
}

LooResult run_loo(const Corpus& corpus, const EmbeddingMatrix& embeddings, const std::string& held_out,
                  const RunConfig& cfg) {
  Split split = split_leave_one_out(corpus, held_out);
  if (split.train.empty()) throw DataError("holding out '" + held_out + "' leaves nothing to train on");
  LooResult r;
  r.held_out = held_out;
  r.train_size = split.train.size();
  r.test_size = split.test.size();
  r.experiment = run_experiment(split.train, embeddings, split.test, embeddings, cfg);
  return r;
}

std::string metrics_text(const ClassificationMetrics& m) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "macro_f1        " << m.macro_f1 << '\n'
      << "macro_precision " << m.macro_precision << '\n'
      << "macro_recall    " << m.macro_recall << '\n'
      << "accuracy        " << m.accuracy << '\n';
  return out.str();
}

std::string metrics_json(const ClassificationMetrics& m) {
  json per_class = json::object();
  for (StanceLabel l : kAllLabels) {
    const auto& c = m.per_class[static_cast<std::size_t>(label_index(l))];
    per_class[std::string(to_string(l))] = {
        {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"in_gold", c.in_gold}};
  }
  return json{{"macro_f1", m.macro_f1},
              {"macro_precision", m.macro_precision},
              {"macro_recall", m.macro_recall},
              {"accuracy", m.accuracy},
              {"per_class", per_class}}
      .dump(1);
}

std::string manifest_json(const std::string& command, const std::string& config_json,
                          const std::vector<std::filesystem::path>& inputs,
                          const std::vector<std::filesystem::path>& outputs) {
  json in = json::object();
  for (const auto& p : inputs) in[p.filename().string()] = sha256_file(p);
  json out = json::object();
  for (const auto& p : outputs) out[p.filename().string()] = sha256_file(p);
  return json{{"command", command},
              {"version", kVersion},
              {"config", json::parse(config_json)},
              {"inputs", in},
              {"outputs", out}}
      .dump(1);
}

void write_manifest(const std::filesystem::path& path, const std::string& command, const std::string& config_json,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs) {
  const std::string text = manifest_json(command, config_json, inputs, outputs);
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << text << '\n';
}

}  // namespace tested
