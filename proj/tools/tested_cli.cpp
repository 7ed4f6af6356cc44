// tested: topic-efficient sampling and contrastive training over frozen
// embeddings, one subcommand per pipeline stage.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tested/pipeline.hpp"
#include "tested/synthetic.hpp"

namespace fs = std::filesystem;
using namespace tested;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Options shared by every subcommand. Anything left unset falls back to the
// config file, then to the built-in defaults.
struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "TOML (.toml) or JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", c.out, "output directory (default: paths.output_dir, else .)");
  cmd->add_option("--seed", c.seed, "run seed");
  cmd->add_option("--threads", c.threads, "worker threads; results do not depend on it");
}

RunConfig base_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (!c.out.empty()) cfg.paths.output_dir = c.out;
  if (cfg.paths.output_dir.empty()) cfg.paths.output_dir = ".";
  return cfg;
}

fs::path out_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.paths.output_dir);
  return cfg.paths.output_dir;
}

// Flag beats config; otherwise the stage's default file in the output dir.
// A missing file names the stage that should have produced it.
fs::path upstream(const std::string& flag, const fs::path& configured, const RunConfig& cfg, const char* file,
                  const char* stage) {
  fs::path p = !flag.empty() ? fs::path(flag) : !configured.empty() ? configured : cfg.paths.output_dir / file;
  if (!fs::exists(p)) {
    throw DataError("missing " + std::string(file) + " at " + p.string() + ": run the '" + stage +
                    "' stage first or pass its path");
  }
  return p;
}

void manifest(const RunConfig& cfg, const std::string& command, const std::vector<fs::path>& inputs,
              const std::vector<fs::path>& outputs) {
  write_manifest(cfg.paths.output_dir / (command + ".manifest.json"), command, run_config_json(cfg), inputs, outputs);
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  f << s;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  return out;
}

// Predictions as JSONL {"id","label"} or CSV id,label.
std::map<std::string, StanceLabel> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::map<std::string, StanceLabel> out;
  if (path.extension() == ".csv") {
    const auto rows = parse_csv(buf.str());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i == 0 && rows[i].size() >= 2 && rows[i][0] == "id") continue;
      if (rows[i].size() < 2) throw DataError("predictions row " + std::to_string(i + 1) + " needs id,label");
      out[rows[i][0]] = standardize_label(rows[i][1]);
    }
    return out;
  }
  std::istringstream lines(buf.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      out[j.at("id").get<std::string>()] = standardize_label(j.at("label").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError("predictions line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-efficient sampling and contrastive stance training over frozen embeddings"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // synth
  Common synth_c;
  SyntheticOptions synth_o;
  std::size_t eval_per_topic = 200;
  std::string topic_counts;
  auto* synth = app.add_subcommand("synth", "write the bundled synthetic corpus and embeddings");
  add_common(synth, synth_c);
  synth->add_option("--topic-counts", topic_counts, "comma-separated documents per topic (default 1000,100,10)");
  synth->add_option("--datasets", synth_o.datasets, "number of source datasets");
  synth->add_option("--dims", synth_o.dims, "embedding width");
  synth->add_option("--eval-per-topic", eval_per_topic, "documents per topic in the evaluation draw");

  // ingest
  Common ingest_c;
  std::vector<std::string> ingest_inputs, ingest_names;
  std::string label_map, field_text, field_topic, field_label, field_id;
  auto* ingest = app.add_subcommand("ingest", "read raw datasets into the canonical corpus");
  add_common(ingest, ingest_c);
  ingest->add_option("-i,--input", ingest_inputs, "dataset file (.jsonl or .csv); repeatable")->required();
  ingest->add_option("--dataset", ingest_names, "dataset name per input (default: file stem)");
  ingest->add_option("--label-map", label_map, "JSON object of raw label -> canonical label overrides");
  ingest->add_option("--text-field", field_text, "name of the text field");
  ingest->add_option("--topic-field", field_topic, "name of the topic field");
  ingest->add_option("--label-field", field_label, "name of the label field");
  ingest->add_option("--id-field", field_id, "name of the id field");

  // cluster
  Common cluster_c;
  std::string cluster_corpus, cluster_emb;
  std::optional<int> n_clusters, max_iter;
  auto* cluster = app.add_subcommand("cluster", "spherical k-means over the corpus embeddings");
  add_common(cluster, cluster_c);
  cluster->add_option("--corpus", cluster_corpus, "canonical corpus (default <out>/corpus.jsonl)");
  cluster->add_option("--embeddings", cluster_emb, "TESTED-EMB or CSV (default <out>/embeddings.tseb)");
  cluster->add_option("-t,--clusters", n_clusters, "number of clusters (0: sqrt(n/2))");
  cluster->add_option("--max-iter", max_iter, "k-means iteration cap");

  // sample
  Common sample_c;
  std::string sample_corpus, sample_emb, sample_clusters, sampler_name, avg_mode;
  std::optional<double> budget, alpha;
  bool no_balance = false;
  auto* sample = app.add_subcommand("sample", "draw the training subset");
  add_common(sample, sample_c);
  sample->add_option("--corpus", sample_corpus, "canonical corpus (default <out>/corpus.jsonl)");
  sample->add_option("--embeddings", sample_emb, "embeddings (default <out>/embeddings.tseb)");
  sample->add_option("--clustering", sample_clusters, "clustering JSON (default <out>/clustering.json)");
  sample->add_option("--budget", budget, "budget fraction; S = floor(budget * |corpus|)");
  sample->add_option("--sampler", sampler_name, "topic, random or stratified");
  sample->add_option("--avg-mode", avg_mode, "exp, moving or moving-literal");
  sample->add_option("--alpha", alpha, "exp update weight in (0, 1)");
  sample->add_flag("--no-label-balance", no_balance, "disable round-robin over labels");

  // diagnose
  Common diag_c;
  std::string diag_corpus, diag_subset;
  ImbalanceOptions diag_o;
  auto* diagnose = app.add_subcommand("diagnose", "imbalance report of the subset against the corpus");
  add_common(diagnose, diag_c);
  diagnose->add_option("--corpus", diag_corpus, "canonical corpus (default <out>/corpus.jsonl)");
  diagnose->add_option("--subset", diag_subset, "subset JSON or id list (default <out>/subset.json)");
  diagnose->add_option("--top-k", diag_o.top_k, "topics in the inter-topic report");

  // train
  Common train_c;
  std::string train_corpus, train_emb, train_subset;
  std::optional<int> epochs, hidden;
  std::optional<double> lr, beta;
  std::optional<std::size_t> batch;
  bool no_cl = false;
  auto* trn = app.add_subcommand("train", "train the head on the subset");
  add_common(trn, train_c);
  trn->add_option("--corpus", train_corpus, "canonical corpus (default <out>/corpus.jsonl)");
  trn->add_option("--embeddings", train_emb, "embeddings (default <out>/embeddings.tseb)");
  trn->add_option("--subset", train_subset, "subset JSON or id list (default <out>/subset.json)");
  const auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--hidden", hidden, "hidden width of the head");
    cmd->add_option("--lr", lr, "peak learning rate");
    cmd->add_option("--batch-size", batch);
    cmd->add_option("--beta", beta, "margin of the different-label branch");
    cmd->add_flag("--no-contrastive", no_cl, "cross-entropy only");
  };
  add_train_flags(trn);

  // eval
  Common eval_c;
  std::string eval_corpus, eval_emb, eval_ck, eval_preds;
  auto* evl = app.add_subcommand("eval", "score a checkpoint or a predictions file");
  add_common(evl, eval_c);
  evl->add_option("--corpus", eval_corpus, "gold corpus (default <out>/eval_corpus.jsonl)");
  evl->add_option("--embeddings", eval_emb, "embeddings (default <out>/eval_embeddings.tseb)");
  evl->add_option("--checkpoint", eval_ck, "checkpoint (default <out>/head.tsck)");
  evl->add_option("--predictions", eval_preds, "JSONL {id,label} or CSV id,label; skips the checkpoint");

  // sweep
  Common sweep_c;
  std::string sweep_corpus, sweep_emb, sweep_eval, sweep_eval_emb, budgets = "0.01,0.05,0.10,0.15";
  auto* sweep = app.add_subcommand("sweep", "sample -> train -> eval over several budgets");
  add_common(sweep, sweep_c);
  sweep->add_option("--corpus", sweep_corpus);
  sweep->add_option("--embeddings", sweep_emb);
  sweep->add_option("--eval-corpus", sweep_eval);
  sweep->add_option("--eval-embeddings", sweep_eval_emb);
  sweep->add_option("--budgets", budgets, "comma-separated fractions")->capture_default_str();
  sweep->add_option("--sampler", sampler_name, "topic, random or stratified");
  add_train_flags(sweep);

  // loo
  Common loo_c;
  std::string loo_corpus, loo_emb, held_out;
  auto* loo = app.add_subcommand("loo", "leave one dataset out");
  add_common(loo, loo_c);
  loo->add_option("--corpus", loo_corpus);
  loo->add_option("--embeddings", loo_emb);
  loo->add_option("--held-out", held_out, "dataset to evaluate on")->required();
  loo->add_option("--sampler", sampler_name, "topic, random or stratified");
  loo->add_option("--budget", budget, "budget fraction");
  add_train_flags(loo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  // Flags shared by several subcommands land on the config here.
  const auto apply_sampler = [&](RunConfig& cfg) {
    if (budget) cfg.budget = *budget;
    if (!sampler_name.empty()) cfg.sampler_kind = parse_sampler_kind(sampler_name);
    if (!avg_mode.empty()) cfg.sampler.avg_mode = parse_avg_mode(avg_mode);
    if (alpha) cfg.sampler.alpha = *alpha;
    if (no_balance) cfg.sampler.label_balance = false;
  };
  const auto apply_train = [&](RunConfig& cfg) {
    if (epochs) cfg.train.epochs = *epochs;
    if (hidden) cfg.train.hidden = *hidden;
    if (lr) cfg.train.lr_peak = *lr;
    if (batch) cfg.train.batch_size = *batch;
    if (beta) cfg.train.beta_margin = *beta;
    if (no_cl) cfg.no_contrastive = true;
  };

  try {
    if (*synth) {
      RunConfig cfg = base_config(synth_c);
      cfg.validate();
      if (!topic_counts.empty()) {
        synth_o.topic_counts.clear();
        for (double v : parse_list(topic_counts)) {
          if (v < 1) throw UsageError("topic counts must be >= 1");
          synth_o.topic_counts.push_back(static_cast<std::size_t>(v));
        }
      }
      synth_o.structure_seed = synth_o.sample_seed = cfg.seed;
      const auto dir = out_dir(cfg);
      const auto train_set = generate_synthetic(synth_o);
      const auto eval_set = generate_synthetic_eval(synth_o, eval_per_topic);
      write_corpus_jsonl(train_set.corpus, dir / "corpus.jsonl");
      write_matrix(train_set.embeddings, dir / "embeddings.tseb");
      write_corpus_jsonl(eval_set.corpus, dir / "eval_corpus.jsonl");
      write_matrix(eval_set.embeddings, dir / "eval_embeddings.tseb");
      manifest(cfg, "synth", {},
               {dir / "corpus.jsonl", dir / "embeddings.tseb", dir / "eval_corpus.jsonl", dir / "eval_embeddings.tseb"});
      std::cout << "wrote " << train_set.corpus.size() << " + " << eval_set.corpus.size() << " documents to "
                << dir.string() << '\n';
    } else if (*ingest) {
      RunConfig cfg = base_config(ingest_c);
      if (!ingest_names.empty() && ingest_names.size() != ingest_inputs.size()) {
        throw UsageError("--dataset must be given once per --input");
      }
      IngestOptions opts;
      if (!field_text.empty()) opts.fields.text = field_text;
      if (!field_topic.empty()) opts.fields.topic = field_topic;
      if (!field_label.empty()) opts.fields.label = field_label;
      if (!field_id.empty()) opts.fields.id = field_id;
      std::vector<fs::path> inputs;
      if (!label_map.empty()) {
        std::ifstream in(label_map);
        if (!in) throw DataError("cannot open label map " + label_map);
        try {
          for (const auto& [raw, canon] : json::parse(in).items()) {
            opts.overrides[to_lower(trim(raw))] = parse_label(canon.get<std::string>());
          }
        } catch (const json::exception& e) {
          throw DataError(std::string("bad label map: ") + e.what());
        }
        inputs.emplace_back(label_map);
      }
      std::vector<Corpus> parts;
      std::size_t bad = 0;
      for (std::size_t i = 0; i < ingest_inputs.size(); ++i) {
        const fs::path p = ingest_inputs[i];
        opts.format = p.extension() == ".csv" ? InputFormat::Csv : InputFormat::Jsonl;
        const std::string name = ingest_names.empty() ? p.stem().string() : ingest_names[i];
        auto r = ingest_dataset(p, name, opts);
        for (const auto& e : r.errors) std::cerr << p.string() << ':' << e.line << ": " << e.message << '\n';
        for (const auto& w : r.warnings) std::cerr << p.string() << ": warning: " << w << '\n';
        bad += r.errors.size();
        parts.push_back(std::move(r.corpus));
        inputs.push_back(p);
      }
      const Corpus merged = Corpus::merge(parts);
      const auto dir = out_dir(cfg);
      write_corpus_jsonl(merged, dir / "corpus.jsonl");
      manifest(cfg, "ingest", inputs, {dir / "corpus.jsonl"});
      std::cout << "ingested " << merged.size() << " documents (" << bad << " rejected records)\n";
    } else if (*cluster) {
      RunConfig cfg = base_config(cluster_c);
      if (n_clusters) cfg.clusters = *n_clusters;
      if (max_iter) cfg.kmeans_max_iter = *max_iter;
      cfg.validate();
      const auto corpus_p = upstream(cluster_corpus, cfg.paths.corpus, cfg, "corpus.jsonl", "ingest");
      const auto emb_p = upstream(cluster_emb, cfg.paths.embeddings, cfg, "embeddings.tseb", "embed");
      const Corpus corpus = read_corpus_jsonl(corpus_p);
      std::vector<std::string> ids;
      for (const auto& d : corpus.documents()) ids.push_back(d.id);
      const auto pool = select_rows(load_embeddings(emb_p), ids);
      const auto clustering = cluster_pool(normalize_rows(pool), cfg);
      const auto dir = out_dir(cfg);
      export_clustering(clustering, dir / "clustering.json");
      manifest(cfg, "cluster", {corpus_p, emb_p}, {dir / "clustering.json"});
      std::cout << "clustered " << ids.size() << " documents into " << clustering.sizes().size() << " topics\n";
    } else if (*sample) {
      RunConfig cfg = base_config(sample_c);
      apply_sampler(cfg);
      cfg.validate();
      const auto corpus_p = upstream(sample_corpus, cfg.paths.corpus, cfg, "corpus.jsonl", "ingest");
      const Corpus corpus = read_corpus_jsonl(corpus_p);
      std::vector<fs::path> inputs{corpus_p};
      SampledSubset s;
      if (cfg.sampler_kind == SamplerKind::Topic) {
        const auto emb_p = upstream(sample_emb, cfg.paths.embeddings, cfg, "embeddings.tseb", "embed");
        const auto cl_p = upstream(sample_clusters, cfg.paths.clustering, cfg, "clustering.json", "cluster");
        const auto clustering = import_clustering(cl_p, corpus);
        s = draw_subset(corpus, load_embeddings(emb_p), &clustering, cfg);
        inputs.push_back(emb_p);
        inputs.push_back(cl_p);
      } else {
        s = draw_subset(corpus, EmbeddingMatrix{}, nullptr, cfg);
      }
      const auto dir = out_dir(cfg);
      write_subset_json(s, dir / "subset.json");
      write_id_list(s, dir / "subset.txt");
      manifest(cfg, "sample", inputs, {dir / "subset.json", dir / "subset.txt"});
      std::cout << "selected " << s.selected.size() << " of " << corpus.size() << " documents (S = "
                << budget_from_fraction(cfg.budget, corpus.size()) << ")\n";
    } else if (*diagnose) {
      RunConfig cfg = base_config(diag_c);
      cfg.validate();
      const auto corpus_p = upstream(diag_corpus, cfg.paths.corpus, cfg, "corpus.jsonl", "ingest");
      const auto subset_p = upstream(diag_subset, cfg.paths.subset, cfg, "subset.json", "sample");
      const Corpus corpus = read_corpus_jsonl(corpus_p);
      const auto report = imbalance_report(corpus, read_selected_ids(subset_p), diag_o);
      const auto dir = out_dir(cfg);
      write_text(dir / "imbalance.json", imbalance_report_json(report) + "\n");
      write_text(dir / "imbalance.txt", imbalance_report_text(report));
      write_text(dir / "inter_topic.csv", distribution_csv(report.inter_topic));
      manifest(cfg, "diagnose", {corpus_p, subset_p},
               {dir / "imbalance.json", dir / "imbalance.txt", dir / "inter_topic.csv"});
      std::cout << imbalance_report_text(report);
    } else if (*trn) {
      RunConfig cfg = base_config(train_c);
      apply_train(cfg);
      cfg.validate();
      const auto corpus_p = upstream(train_corpus, cfg.paths.corpus, cfg, "corpus.jsonl", "ingest");
      const auto emb_p = upstream(train_emb, cfg.paths.embeddings, cfg, "embeddings.tseb", "embed");
      const auto subset_p = upstream(train_subset, cfg.paths.subset, cfg, "subset.json", "sample");
      const Corpus corpus = read_corpus_jsonl(corpus_p);
      const auto state =
          train(read_selected_ids(subset_p), load_embeddings(emb_p), corpus.label_map(), cfg.train_config());
      const auto dir = out_dir(cfg);
      write_checkpoint(state, dir / "head.tsck");
      write_loss_history(state.history, dir / "loss_history.csv");
      manifest(cfg, "train", {corpus_p, emb_p, subset_p}, {dir / "head.tsck", dir / "loss_history.csv"});
      std::cout << "trained " << state.step << " steps";
      if (!state.history.empty()) std::cout << ", final loss " << state.history.back().total;
      std::cout << '\n';
    } else if (*evl) {
      RunConfig cfg = base_config(eval_c);
      const auto corpus_p = upstream(eval_corpus, cfg.paths.eval_corpus, cfg, "eval_corpus.jsonl", "ingest");
      const Corpus gold = read_corpus_jsonl(corpus_p);
      std::vector<fs::path> inputs{corpus_p};
      ClassificationMetrics m;
      if (!eval_preds.empty()) {
        const auto preds_p = upstream(eval_preds, {}, cfg, "predictions", "predict");
        const auto preds = read_predictions(preds_p);
        std::vector<StanceLabel> p, g;
        for (const auto& d : gold.documents()) {
          const auto it = preds.find(d.id);
          if (it == preds.end()) throw DataError("no prediction for '" + d.id + "'");
          p.push_back(it->second);
          g.push_back(d.label);
        }
        m = classification_metrics(p, g);
        inputs.push_back(preds_p);
      } else {
        const auto ck_p = upstream(eval_ck, cfg.paths.checkpoint, cfg, "head.tsck", "train");
        const auto emb_p = upstream(eval_emb, cfg.paths.eval_embeddings, cfg, "eval_embeddings.tseb", "embed");
        m = evaluate_head(read_checkpoint(ck_p).head, gold, load_embeddings(emb_p)).metrics;
        inputs.push_back(ck_p);
        inputs.push_back(emb_p);
      }
      const auto dir = out_dir(cfg);
      write_text(dir / "metrics.json", metrics_json(m) + "\n");
      manifest(cfg, "eval", inputs, {dir / "metrics.json"});
      std::cout << metrics_text(m);
    } else if (*sweep) {
      RunConfig cfg = base_config(sweep_c);
      apply_sampler(cfg);
      apply_train(cfg);
      cfg.validate();
      const auto corpus_p = upstream(sweep_corpus, cfg.paths.corpus, cfg, "corpus.jsonl", "ingest");
      const auto emb_p = upstream(sweep_emb, cfg.paths.embeddings, cfg, "embeddings.tseb", "embed");
      const auto ev_p = upstream(sweep_eval, cfg.paths.eval_corpus, cfg, "eval_corpus.jsonl", "ingest");
      const auto ev_emb_p = upstream(sweep_eval_emb, cfg.paths.eval_embeddings, cfg, "eval_embeddings.tseb", "embed");
      const auto rows = run_sweep(read_corpus_jsonl(corpus_p), load_embeddings(emb_p), read_corpus_jsonl(ev_p),
                                  load_embeddings(ev_emb_p), cfg, parse_list(budgets));
      const auto dir = out_dir(cfg);
      write_text(dir / "sweep.csv", sweep_csv(rows));
      manifest(cfg, "sweep", {corpus_p, emb_p, ev_p, ev_emb_p}, {dir / "sweep.csv"});
      std::cout << sweep_csv(rows);
    } else if (*loo) {
      RunConfig cfg = base_config(loo_c);
      apply_sampler(cfg);
      apply_train(cfg);
      cfg.validate();
      const auto corpus_p = upstream(loo_corpus, cfg.paths.corpus, cfg, "corpus.jsonl", "ingest");
      const auto emb_p = upstream(loo_emb, cfg.paths.embeddings, cfg, "embeddings.tseb", "embed");
      const auto r = run_loo(read_corpus_jsonl(corpus_p), load_embeddings(emb_p), held_out, cfg);
      const auto dir = out_dir(cfg);
      const auto file = "loo_" + held_out + ".json";
      write_text(dir / file, metrics_json(r.experiment.evaluation.metrics) + "\n");
      manifest(cfg, "loo", {corpus_p, emb_p}, {dir / file});
      std::cout << "held out " << held_out << ": trained on " << r.experiment.subset.selected.size() << " of "
                << r.train_size << ", tested on " << r.test_size << '\n'
                << metrics_text(r.experiment.evaluation.metrics);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
