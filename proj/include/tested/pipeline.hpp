#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tested/corpus.hpp"
#include "tested/diagnostics.hpp"
#include "tested/embedding.hpp"
#include "tested/sampler.hpp"
#include "tested/topic_model.hpp"
#include "tested/trainer.hpp"

namespace tested {

inline constexpr const char* kVersion = "0.1.0";

enum class SamplerKind { Topic, Random, Stratified };
std::string_view to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(std::string_view name);

struct RunPaths {
  std::filesystem::path corpus;
  std::filesystem::path embeddings;
  std::filesystem::path clustering;
  std::filesystem::path subset;
  std::filesystem::path checkpoint;
  std::filesystem::path eval_corpus;
  std::filesystem::path eval_embeddings;
  std::filesystem::path output_dir;
};

struct RunConfig {
  RunPaths paths;
  SamplerConfig sampler;
  TrainConfig train;
  double budget = 0.10;
  std::uint64_t seed = 7;
  SamplerKind sampler_kind = SamplerKind::Topic;
  bool no_contrastive = false;
  /// 0 picks default_cluster_count(n).
  int clusters = 0;
  int kmeans_max_iter = 100;
  unsigned threads = 1;

  /// Throws UsageError for out-of-range values.
  void validate() const;
  /// The run seed and thread count pushed into the stage configs.
  SamplerConfig sampler_config(std::size_t budget_size) const;
  TrainConfig train_config() const;
};

/// Reads a TOML (.toml) or JSON (any other extension) run configuration.
/// Keys: budget, seed, sampler, no_contrastive, clusters, kmeans_max_iter,
/// threads, [paths], [sampler_options], [train].
RunConfig load_run_config(const std::filesystem::path& path);
/// Applies the keys present in a JSON object on top of `base`.
RunConfig apply_run_config_json(RunConfig base, const std::string& json_text);
std::string run_config_json(const RunConfig& cfg);

/// Clustering used by the topic sampler: spherical k-means over the pool.
TopicClustering cluster_pool(const EmbeddingMatrix& pool, const RunConfig& cfg);

/// Draws a subset of `pool` with the configured sampler at the configured
/// budget fraction. `clustering` is required for SamplerKind::Topic.
SampledSubset draw_subset(const Corpus& pool, const EmbeddingMatrix& embeddings, const TopicClustering* clustering,
                          const RunConfig& cfg);

struct Evaluation {
  std::vector<std::string> ids;
  std::vector<StanceLabel> predictions;
  std::vector<StanceLabel> gold;
  ClassificationMetrics metrics;
};

Evaluation evaluate_head(const EncoderHead<float>& head, const Corpus& corpus, const EmbeddingMatrix& embeddings);

struct ExperimentResult {
  TopicClustering clustering;
  SampledSubset subset;
  TrainState state;
  Evaluation evaluation;
};

/// cluster -> sample -> train -> evaluate. Uses `clustering` when given.
ExperimentResult run_experiment(const Corpus& pool, const EmbeddingMatrix& pool_embeddings, const Corpus& eval,
                                const EmbeddingMatrix& eval_embeddings, const RunConfig& cfg,
                                const TopicClustering* clustering = nullptr);

struct SweepRow {
  double budget = 0.0;
  double macro_f1 = 0.0;
  std::size_t subset_size = 0;
};

/// One experiment per budget with a shared seed and a shared clustering.
std::vector<SweepRow> run_sweep(const Corpus& pool, const EmbeddingMatrix& pool_embeddings, const Corpus& eval,
                                const EmbeddingMatrix& eval_embeddings, const RunConfig& cfg,
                                const std::vector<double>& budgets);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct LooResult {
  std::string held_out;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  ExperimentResult experiment;
};

/// Trains on the topic-efficient subset of every other dataset and
/// evaluates on `held_out` only. Throws DataError if nothing is left to
/// train on.
LooResult run_loo(const Corpus& corpus, const EmbeddingMatrix& embeddings, const std::string& held_out,
                  const RunConfig& cfg);

std::string metrics_text(const ClassificationMetrics& m);
std::string metrics_json(const ClassificationMetrics& m);

/// {"command", "version", "config", "inputs": {path: sha256}, "outputs": {...}}.
/// Contains no timestamps, so reruns reproduce it byte for byte.
std::string manifest_json(const std::string& command, const std::string& config_json,
                          const std::vector<std::filesystem::path>& inputs,
                          const std::vector<std::filesystem::path>& outputs);
void write_manifest(const std::filesystem::path& path, const std::string& command, const std::string& config_json,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs);

/// Reads embeddings as TESTED-EMB, or CSV when the extension is .csv.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

}  // namespace tested
