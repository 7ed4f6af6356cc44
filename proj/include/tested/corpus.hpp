#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tested {

enum class StanceLabel : int { Positive = 0, Negative = 1, Discuss = 2, Other = 3, Neutral = 4 };

inline constexpr std::size_t kNumLabels = 5;
inline constexpr std::array<StanceLabel, kNumLabels> kAllLabels{
    StanceLabel::Positive, StanceLabel::Negative, StanceLabel::Discuss, StanceLabel::Other,
    StanceLabel::Neutral};

std::string_view to_string(StanceLabel label);
/// Parses a canonical label name ("Positive", ...); case-insensitive.
StanceLabel parse_label(std::string_view name);
inline int label_index(StanceLabel label) { return static_cast<int>(label); }

/// Per-dataset remapping of raw label strings, consulted before the
/// built-in table. Keys are matched lowercased and trimmed.
using LabelOverrides = std::map<std::string, StanceLabel>;

/// Maps a raw source-dataset label onto the five-way scheme.
/// Throws DataError carrying the raw string when it is not in the table.
StanceLabel standardize_label(std::string_view raw, const LabelOverrides* overrides = nullptr);

struct Document {
  std::string id;
  std::string dataset;
  std::string topic;
  std::string text;
  std::string raw_label;
  StanceLabel label = StanceLabel::Other;
};

/// "[CLS] premise: <text> hypothesis: <topic> [EOS]". Markers inside the
/// text are passed through verbatim.
std::string build_prompt(const Document& doc);

/// Immutable collection of documents with unique ids.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> documents);

  const std::vector<Document>& documents() const noexcept { return documents_; }
  const std::set<std::string>& datasets() const noexcept { return datasets_; }
  const std::map<std::string, std::size_t>& topic_counts() const noexcept { return topic_counts_; }
  std::size_t size() const noexcept { return documents_.size(); }
  bool empty() const noexcept { return documents_.empty(); }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  /// Throws DataError for unknown ids.
  const Document& at(const std::string& id) const;
  std::optional<std::size_t> find(const std::string& id) const;

  std::map<std::string, StanceLabel> label_map() const;

  /// Concatenates corpora; ids must stay unique.
  static Corpus merge(const std::vector<Corpus>& parts);

 private:
  std::vector<Document> documents_;
  std::set<std::string> datasets_;
  std::map<std::string, std::size_t> topic_counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class InputFormat { Jsonl, Csv };

struct FieldNames {
  std::string id = "id";
  std::string text = "text";
  std::string topic = "topic";
  std::string label = "label";
};

struct IngestOptions {
  InputFormat format = InputFormat::Jsonl;
  FieldNames fields;
  LabelOverrides overrides;
};

struct RecordError {
  std::size_t line = 0;  // 1-based line (jsonl) or data row index (csv)
  std::string message;
};

struct IngestResult {
  Corpus corpus;
  std::vector<RecordError> errors;
  std::vector<std::string> warnings;
};

/// Reads one source dataset. Bad records are collected in `errors`;
/// an unmappable raw label aborts the whole ingest with DataError.
IngestResult ingest_dataset(const std::filesystem::path& path, const std::string& dataset_name,
                            const IngestOptions& options = {});

/// Same as ingest_dataset over an in-memory payload.
IngestResult ingest_text(std::string_view payload, const std::string& dataset_name,
                         const IngestOptions& options = {});

struct Split {
  Corpus train;
  Corpus test;
  std::vector<std::string> warnings;
};

/// Holds out every document of `held_out`. Throws DataError if the
/// dataset is unknown.
Split split_leave_one_out(const Corpus& corpus, const std::string& held_out);

/// Canonical JSONL: id, dataset, topic, text, raw_label, label.
void write_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus_jsonl(const std::filesystem::path& path);

/// Parses RFC-4180 CSV (quoted fields, doubled quotes, embedded newlines).
std::vector<std::vector<std::string>> parse_csv(std::string_view payload);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

}  // namespace tested
