#include "tested/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "tested/error.hpp"

namespace tested {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view to_string(StanceLabel label) {
  switch (label) {
    case StanceLabel::Positive: return "Positive";
    case StanceLabel::Negative: return "Negative";
    case StanceLabel::Discuss: return "Discuss";
    case StanceLabel::Other: return "Other";
    case StanceLabel::Neutral: return "Neutral";
  }
  return "Other";
}

StanceLabel parse_label(std::string_view name) {
  const std::string key = to_lower(trim(name));
  for (StanceLabel l : kAllLabels) {
    if (to_lower(to_string(l)) == key) return l;
  }
  throw DataError("unknown stance label '" + std::string(name) + "'");
}

namespace {

// Hard mapping from source-dataset vocabularies. "comment" is listed
// under both Discuss and Other upstream; it resolves to Discuss here and
// can be remapped per dataset through LabelOverrides.
const std::map<std::string, StanceLabel>& label_table() {
  static const std::map<std::string, StanceLabel> table = {
      {"agree", StanceLabel::Positive},
      {"argument for", StanceLabel::Positive},
      {"for", StanceLabel::Positive},
      {"pro", StanceLabel::Positive},
      {"favor", StanceLabel::Positive},
      {"support", StanceLabel::Positive},
      {"endorse", StanceLabel::Positive},
      {"disagree", StanceLabel::Negative},
      {"argument against", StanceLabel::Negative},
      {"against", StanceLabel::Negative},
      {"anti", StanceLabel::Negative},
      {"con", StanceLabel::Negative},
      {"undermine", StanceLabel::Negative},
      {"deny", StanceLabel::Negative},
      {"refute", StanceLabel::Negative},
      {"discuss", StanceLabel::Discuss},
      {"observing", StanceLabel::Discuss},
      {"question", StanceLabel::Discuss},
      {"query", StanceLabel::Discuss},
      {"comment", StanceLabel::Discuss},
      {"unrelated", StanceLabel::Other},
      {"none", StanceLabel::Other},
      {"neutral", StanceLabel::Neutral},
      // canonical names map onto themselves
      {"positive", StanceLabel::Positive},
      {"negative", StanceLabel::Negative},
      {"other", StanceLabel::Other},
  };
  return table;
}

}  // namespace

StanceLabel standardize_label(std::string_view raw, const LabelOverrides* overrides) {
  const std::string key = to_lower(trim(raw));
  if (overrides != nullptr) {
    for (const auto& [k, v] : *overrides) {
      if (to_lower(trim(k)) == key) return v;
    }
  }
  const auto& table = label_table();
  if (auto it = table.find(key); it != table.end()) return it->second;
  throw DataError("unmappable raw label '" + std::string(raw) + "'");
}

std::string build_prompt(const Document& doc) {
  return "[CLS] premise: " + doc.text + " hypothesis: " + doc.topic + " [EOS]";
}

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  index_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    const Document& d = documents_[i];
    if (d.id.empty()) throw DataError("document with empty id at position " + std::to_string(i));
    if (trim(d.text).empty()) throw DataError("document '" + d.id + "' has empty text");
    if (trim(d.topic).empty()) throw DataError("document '" + d.id + "' has empty topic");
    if (d.dataset.empty()) throw DataError("document '" + d.id + "' has no dataset");
    if (!index_.emplace(d.id, i).second) throw DataError("duplicate document id '" + d.id + "'");
    datasets_.insert(d.dataset);
    ++topic_counts_[d.topic];
  }
}

const Document& Corpus::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown document id '" + id + "'");
  return documents_[it->second];
}

std::optional<std::size_t> Corpus::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::map<std::string, StanceLabel> Corpus::label_map() const {
  std::map<std::string, StanceLabel> out;
  for (const auto& d : documents_) out.emplace(d.id, d.label);
  return out;
}

Corpus Corpus::merge(const std::vector<Corpus>& parts) {
  std::vector<Document> all;
  for (const auto& p : parts) all.insert(all.end(), p.documents().begin(), p.documents().end());
  return Corpus(std::move(all));
}

std::vector<std::vector<std::string>> parse_csv(std::string_view payload) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  for (std::size_t i = 0; i < payload.size(); ++i) {
    const char c = payload[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < payload.size() && payload[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        field_started = false;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (field_started || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

struct RawRecord {
  std::size_t line;
  std::optional<std::string> id, text, topic, label;
};

std::optional<std::string> json_field(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

std::vector<RawRecord> read_jsonl_records(std::string_view payload, const FieldNames& f,
                                          std::vector<RecordError>& errors) {
  std::vector<RawRecord> out;
  std::istringstream in{std::string(payload)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      errors.push_back({lineno, std::string("invalid JSON: ") + e.what()});
      continue;
    }
    if (!obj.is_object()) {
      errors.push_back({lineno, "record is not a JSON object"});
      continue;
    }
    out.push_back({lineno, json_field(obj, f.id), json_field(obj, f.text), json_field(obj, f.topic),
                   json_field(obj, f.label)});
  }
  return out;
}

std::vector<RawRecord> read_csv_records(std::string_view payload, const FieldNames& f,
                                        std::vector<RecordError>& errors) {
  std::vector<RawRecord> out;
  const auto rows = parse_csv(payload);
  if (rows.empty()) return out;
  const auto& header = rows.front();
  const auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  const auto c_id = column(f.id);
  const auto c_text = column(f.text);
  const auto c_topic = column(f.topic);
  const auto c_label = column(f.label);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    if (row.size() != header.size()) {
      errors.push_back({r, "expected " + std::to_string(header.size()) + " columns, got " +
                               std::to_string(row.size())});
      continue;
    }
    const auto get = [&](const std::optional<std::size_t>& c) -> std::optional<std::string> {
      if (!c || row[*c].empty()) return std::nullopt;
      return row[*c];
    };
    out.push_back({r, get(c_id), get(c_text), get(c_topic), get(c_label)});
  }
  return out;
}

}  // namespace

IngestResult ingest_text(std::string_view payload, const std::string& dataset_name,
                         const IngestOptions& options) {
  if (trim(dataset_name).empty()) throw UsageError("dataset name must be non-empty");
  IngestResult result;
  if (trim(payload).empty()) {
    result.warnings.push_back("dataset '" + dataset_name + "' is empty");
    return result;
  }
  const auto records = options.format == InputFormat::Jsonl
                           ? read_jsonl_records(payload, options.fields, result.errors)
                           : read_csv_records(payload, options.fields, result.errors);

  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::size_t running = 0;
  for (const auto& rec : records) {
    const std::size_t index = running++;
    std::vector<std::string> missing;
    if (!rec.text || trim(*rec.text).empty()) missing.push_back(options.fields.text);
    if (!rec.topic || trim(*rec.topic).empty()) missing.push_back(options.fields.topic);
    if (!rec.label || trim(*rec.label).empty()) missing.push_back(options.fields.label);
    if (!missing.empty()) {
      std::string msg = "missing field(s):";
      for (const auto& m : missing) msg += " " + m;
      result.errors.push_back({rec.line, msg});
      continue;
    }
    Document d;
    d.id = rec.id ? *rec.id : dataset_name + ":" + std::to_string(index);
    d.dataset = dataset_name;
    d.text = *rec.text;
    d.topic = *rec.topic;
    d.raw_label = *rec.label;
    d.label = standardize_label(d.raw_label, &options.overrides);
    if (!seen.insert(d.id).second) {
      result.errors.push_back({rec.line, "duplicate id '" + d.id + "'"});
      continue;
    }
    docs.push_back(std::move(d));
  }
  if (docs.empty() && result.errors.empty()) {
    result.warnings.push_back("dataset '" + dataset_name + "' has no records");
  }
  result.corpus = Corpus(std::move(docs));
  return result;
}

IngestResult ingest_dataset(const std::filesystem::path& path, const std::string& dataset_name,
                            const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return ingest_text(buf.str(), dataset_name, options);
}

Split split_leave_one_out(const Corpus& corpus, const std::string& held_out) {
  if (corpus.datasets().count(held_out) == 0) {
    throw DataError("unknown dataset '" + held_out + "'");
  }
  std::vector<Document> train;
  std::vector<Document> test;
  for (const auto& d : corpus.documents()) (d.dataset == held_out ? test : train).push_back(d);
  Split s{Corpus(std::move(train)), Corpus(std::move(test)), {}};
  if (s.train.empty()) {
    s.warnings.push_back("holding out '" + held_out + "' leaves the training corpus empty");
  }
  return s;
}

void write_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& d : corpus.documents()) {
    json j = {{"id", d.id},       {"dataset", d.dataset},         {"topic", d.topic},
              {"text", d.text},   {"raw_label", d.raw_label},     {"label", to_string(d.label)}};
    out << j.dump() << '\n';
  }
}

Corpus read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      Document d;
      d.id = j.at("id").get<std::string>();
      d.dataset = j.at("dataset").get<std::string>();
      d.topic = j.at("topic").get<std::string>();
      d.text = j.at("text").get<std::string>();
      d.raw_label = j.value("raw_label", std::string{});
      d.label = parse_label(j.at("label").get<std::string>());
      docs.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return Corpus(std::move(docs));
}

}  // namespace tested
