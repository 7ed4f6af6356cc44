#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tested/corpus.hpp"
#include "tested/embedding.hpp"

namespace tested {

/// Desk-scale stand-in for a multi-domain stance benchmark: skewed topic
/// frequencies, a per-topic label skew and Gaussian-mixture embeddings.
///
/// Each document embedding is normalize(topic_scale * u_topic +
/// label_scale * v_label + noise * z) with unit directions u, v shared by
/// all documents of the topic / label and z ~ N(0, I / dims).
struct SyntheticOptions {
  std::vector<std::size_t> topic_counts{1000, 100, 10};
  /// Topic i belongs to dataset (i mod datasets).
  std::size_t datasets = 2;
  Eigen::Index dims = 128;
  double topic_scale = 0.6;
  double label_scale = 0.3;
  double noise = 2.0;
  /// Label probabilities before per-topic rotation; topic i starts the
  /// rotation at label (i mod 5).
  std::vector<double> label_weights{0.55, 0.2, 0.12, 0.08, 0.05};
  /// Draws centers and label priors.
  std::uint64_t structure_seed = 7;
  /// Draws documents.
  std::uint64_t sample_seed = 7;
  /// Prepended to document ids.
  std::string id_prefix = "syn";
};

struct SyntheticData {
  Corpus corpus;
  EmbeddingMatrix embeddings;  // row-normalized, ids in corpus order
};

SyntheticData generate_synthetic(const SyntheticOptions& options);

/// Second draw from the same topic/label structure with fresh documents,
/// used as an evaluation set.
SyntheticData generate_synthetic_eval(const SyntheticOptions& options, std::size_t per_topic = 200);

std::string topic_name(std::size_t topic);
std::string dataset_name(std::size_t dataset);

}  // namespace tested
