#include "tested/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tested/error.hpp"

namespace tested {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr_peak >= 0.0) || !std::isfinite(lr_peak)) throw UsageError("lr_peak must be finite and >= 0");
  if (weight_decay < 0.0) throw UsageError("weight_decay must be >= 0");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw UsageError("warmup_fraction must lie in (0, 1)");
  if (clip_norm < 0.0) throw UsageError("clip_norm must be >= 0");
  if (!(beta_margin >= 0.0 && beta_margin < 1.0)) throw UsageError("beta_margin must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw UsageError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw UsageError("adam_eps must be > 0");
  if (hidden < 1) throw UsageError("hidden width must be >= 1");
}

double lr_at(std::size_t step, std::size_t total, const TrainConfig& cfg) {
  if (total == 0 || step >= total) return 0.0;
  const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total)));
  if (step < warmup) return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(warmup);
  return cfg.lr_peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

Eigen::MatrixXf gather_rows(const EmbeddingMatrix& m, const std::vector<std::string>& ids) {
  Eigen::MatrixXf x(static_cast<Eigen::Index>(ids.size()), m.dims());
  for (std::size_t i = 0; i < ids.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = m.row(m.row_of(ids[i]));
  return x;
}

TrainState train(const std::vector<std::string>& ids, const EmbeddingMatrix& m,
                 const std::map<std::string, StanceLabel>& labels, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::string> problems;
  for (const auto& id : ids) {
    if (!m.find(id)) problems.push_back("no embedding for '" + id + "'");
    if (labels.count(id) == 0) problems.push_back("no label for '" + id + "'");
  }
  if (!problems.empty()) {
    std::string msg = "cannot train:";
    for (std::size_t i = 0; i < std::min<std::size_t>(problems.size(), 10); ++i) msg += " " + problems[i] + ";";
    if (problems.size() > 10) msg += " ... (" + std::to_string(problems.size()) + " problems)";
    throw DataError(msg);
  }

  TrainState state;
  state.config = cfg;
  state.head = EncoderHead<float>::init(m.dims(), cfg.hidden, cfg.seed);
  state.optimizer = AdamW<float>(state.head, cfg);
  if (ids.empty() || cfg.epochs == 0) return state;

  std::mt19937_64 rng(cfg.seed ^ 0x5eedba7c4ULL);
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  struct Batch {
    Eigen::MatrixXf x;
    std::vector<StanceLabel> labels;
    PairMatrix pairs;
  };
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
    groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                        order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + cfg.batch_size)));
  }
  // A trailing singleton has no pairs; fold it into the previous batch.
  if (groups.size() > 1 && groups.back().size() == 1) {
    groups[groups.size() - 2].push_back(groups.back().front());
    groups.pop_back();
  }
  std::vector<Batch> batches;
  batches.reserve(groups.size());
  for (const auto& g : groups) {
    Batch batch;
    batch.x.resize(static_cast<Eigen::Index>(g.size()), m.dims());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& id = ids[g[i]];
      batch.x.row(static_cast<Eigen::Index>(i)) = m.row(m.row_of(id));
      batch.labels.push_back(labels.at(id));
    }
    batch.pairs = PairMatrix(batch.labels);
    batches.push_back(std::move(batch));
  }

  const std::size_t total_steps = batches.size() * static_cast<std::size_t>(cfg.epochs);
  const LossOptions opts = cfg.loss_options();
  EncoderHead<float> grad = EncoderHead<float>::zeros_like(state.head);
  std::vector<std::size_t> visit(batches.size());
  std::iota(visit.begin(), visit.end(), std::size_t{0});
  state.history.reserve(total_steps);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(visit.begin(), visit.end(), rng);
    for (std::size_t bi : visit) {
      const Batch& batch = batches[bi];
      const auto loss = evaluate(state.head, batch.x, batch.labels, batch.pairs, opts, &grad);
      if (!std::isfinite(loss.total) || !grad.all_finite()) {
        throw NumericalError("non-finite loss or gradient at step " + std::to_string(state.step));
      }
      clip_global_norm(grad, static_cast<float>(cfg.clip_norm));
      const double lr = lr_at(state.step, total_steps, cfg);
      state.optimizer.step(state.head, grad, lr);
      StepRecord rec;
      rec.step = state.step;
      rec.lr = lr;
      rec.ce = static_cast<double>(loss.ce);
      rec.cl = static_cast<double>(loss.cl);
      rec.total = rec.ce + rec.cl;
      state.history.push_back(rec);
      ++state.step;
    }
  }
  if (!state.head.all_finite()) throw NumericalError("training diverged to non-finite parameters");
  return state;
}

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& offset) {
  if (offset + sizeof(T) > in.size()) throw FormatError("truncated checkpoint", in.size());
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  offset += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename M>
void put_matrix(std::string& out, const M& mat) {
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    for (Eigen::Index c = 0; c < mat.cols(); ++c) put_le<float>(out, mat(r, c));
  }
}

template <typename M>
void get_matrix(const std::string& in, std::size_t& off, M& mat) {
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    for (Eigen::Index c = 0; c < mat.cols(); ++c) mat(r, c) = get_le<float>(in, off);
  }
}

}  // namespace

std::string train_config_json(const TrainConfig& c) {
  return json{{"lr_peak", c.lr_peak},
              {"weight_decay", c.weight_decay},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"warmup_fraction", c.warmup_fraction},
              {"clip_norm", c.clip_norm},
              {"beta_margin", c.beta_margin},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"hidden", c.hidden},
              {"contrastive", c.contrastive},
              {"seed", c.seed}}
      .dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig c;
  c.lr_peak = j.value("lr_peak", c.lr_peak);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.beta_margin = j.value("beta_margin", c.beta_margin);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.hidden = j.value("hidden", c.hidden);
  c.contrastive = j.value("contrastive", c.contrastive);
  c.seed = j.value("seed", c.seed);
  return c;
}

void write_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto& h = state.head;
  std::string out(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.dims()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.hidden()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kNumLabels));
  put_matrix(out, h.w1);
  put_matrix(out, h.b1);
  put_matrix(out, h.w2);
  put_matrix(out, h.b2);
  out += train_config_json(state.config);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string in = buf.str();
  if (in.size() < 4 || std::memcmp(in.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic", 0);
  }
  std::size_t off = 4;
  if (get_le<std::uint32_t>(in, off) != kCheckpointVersion) throw FormatError("unsupported checkpoint version", 4);
  const auto dims = get_le<std::uint32_t>(in, off);
  const auto hidden = get_le<std::uint32_t>(in, off);
  const auto classes = get_le<std::uint32_t>(in, off);
  if (classes != kNumLabels) throw FormatError("checkpoint has " + std::to_string(classes) + " classes", 16);
  Checkpoint ck;
  ck.head = EncoderHead<float>::zeros(dims, hidden);
  get_matrix(in, off, ck.head.w1);
  get_matrix(in, off, ck.head.b1);
  get_matrix(in, off, ck.head.w2);
  get_matrix(in, off, ck.head.b2);
  try {
    ck.config = train_config_from_json(in.substr(off));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint config: ") + e.what(), off);
  }
  return ck;
}

std::string loss_history_csv(const std::vector<StepRecord>& history) {
  std::ostringstream out;
  out.precision(9);
  out << "step,lr,ce,cl,total\n";
  for (const auto& r : history) out << r.step << ',' << r.lr << ',' << r.ce << ',' << r.cl << ',' << r.total << '\n';
  return out.str();
}

void write_loss_history(const std::vector<StepRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << loss_history_csv(history);
}

}  // namespace tested
