#include "tested/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "tested/corpus.hpp"

namespace tested {

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, RowMatrixXf data, bool normalized)
    : ids_(std::move(ids)), data_(std::move(data)), normalized_(normalized) {
  if (static_cast<Eigen::Index>(ids_.size()) != data_.rows()) {
    throw DataError("embedding matrix has " + std::to_string(data_.rows()) + " rows but " +
                    std::to_string(ids_.size()) + " ids");
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], static_cast<Eigen::Index>(i)).second) {
      throw DataError("duplicate embedding id '" + ids_[i] + "'");
    }
  }
  if (!data_.allFinite()) throw NumericalError("embedding matrix contains non-finite values");
}

std::optional<Eigen::Index> EmbeddingMatrix::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::Index EmbeddingMatrix::row_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("no embedding for id '" + id + "'");
  return it->second;
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  RowMatrixXf out(m.rows(), m.dims());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Eigen::VectorXd row = m.row(r).transpose().cast<double>();
    const double norm = row.norm();
    if (norm == 0.0) throw NumericalError("cannot normalize all-zero row '" + m.ids()[r] + "'");
    out.row(r) = (row / norm).cast<float>().transpose();
  }
  return EmbeddingMatrix(m.ids(), std::move(out), true);
}

bool rows_are_unit(const EmbeddingMatrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).cast<double>().norm();
    if (std::abs(n - 1.0) > kUnitNormTolerance) return false;
  }
  return true;
}

Eigen::VectorXd cosine_to(const EmbeddingMatrix& m, const Eigen::Ref<const Eigen::VectorXd>& centroid) {
  const double cn = centroid.norm();
  if (cn == 0.0) throw NumericalError("cosine against a zero centroid");
  Eigen::VectorXd out(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[r] = cosine_similarity(m.row(r).transpose(), centroid);
  return out;
}

namespace {

constexpr char kMagic[4] = {'T', 'S', 'E', 'B'};
constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 4;

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string encode_matrix(const EmbeddingMatrix& m) {
  std::string out;
  out.reserve(kHeaderSize + static_cast<std::size_t>(m.data().size()) * 4 + m.ids().size() * 16);
  out.append(kMagic, 4);
  put_le<std::uint32_t>(out, kEmbeddingFormatVersion);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.dims()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.dims(); ++c) put_le<float>(out, m.data()(r, c));
  }
  out += nlohmann::json(m.ids()).dump();
  return out;
}

EmbeddingMatrix decode_matrix(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic, expected \"TSEB\"", 0);
  }
  if (bytes.size() < kHeaderSize) throw FormatError("truncated header", bytes.size());
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kEmbeddingFormatVersion) {
    throw FormatError("unsupported version " + std::to_string(version), 4);
  }
  const auto rows = get_le<std::uint64_t>(bytes, 8);
  const auto dims = get_le<std::uint32_t>(bytes, 16);
  if (dims == 0) throw FormatError("dims must be positive", 16);
  const std::uint64_t payload = rows * dims * 4;
  if (rows != 0 && payload / rows / 4 != dims) throw FormatError("payload size overflows", 8);
  if (bytes.size() - kHeaderSize < payload) {
    throw FormatError("truncated payload: header declares " + std::to_string(rows) + " rows of " +
                          std::to_string(dims) + " floats",
                      bytes.size());
  }
  RowMatrixXf data(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dims));
  std::size_t off = kHeaderSize;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c, off += 4) data(r, c) = get_le<float>(bytes, off);
  }
  std::vector<std::string> ids;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(off));
    ids = j.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid id sidecar: ") + e.what(), off);
  }
  if (ids.size() != rows) {
    throw FormatError("id sidecar has " + std::to_string(ids.size()) + " ids for " +
                          std::to_string(rows) + " rows",
                      off);
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw FormatError("duplicate id '" + id + "' in sidecar", off);
  }
  EmbeddingMatrix probe(ids, data, false);
  const bool unit = rows_are_unit(probe);
  return EmbeddingMatrix(std::move(ids), std::move(data), unit);
}

void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::string bytes = encode_matrix(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

EmbeddingMatrix read_matrix(const std::filesystem::path& path) { return decode_matrix(slurp(path)); }

EmbeddingMatrix parse_embedding_csv(std::string_view payload) {
  const auto rows = parse_csv(payload);
  std::vector<std::string> ids;
  std::vector<std::vector<float>> values;
  std::size_t dims = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.empty() || (row.size() == 1 && trim(row[0]).empty())) continue;
    if (r == 0 && trim(row[0]) == "id") continue;
    if (row.size() < 2) throw DataError("csv row " + std::to_string(r + 1) + " has no values");
    if (dims == 0) dims = row.size() - 1;
    if (row.size() - 1 != dims) {
      throw DataError("csv row " + std::to_string(r + 1) + " has " + std::to_string(row.size() - 1) +
                      " values, expected " + std::to_string(dims));
    }
    ids.push_back(trim(row[0]));
    std::vector<float> v(dims);
    for (std::size_t c = 0; c < dims; ++c) {
      try {
        v[c] = std::stof(row[c + 1]);
      } catch (const std::exception&) {
        throw DataError("csv row " + std::to_string(r + 1) + ": bad number '" + row[c + 1] + "'");
      }
    }
    values.push_back(std::move(v));
  }
  RowMatrixXf data(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(dims));
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (std::size_t c = 0; c < dims; ++c) data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r][c];
  }
  EmbeddingMatrix probe(ids, data, false);
  const bool unit = values.empty() ? false : rows_are_unit(probe);
  return EmbeddingMatrix(std::move(ids), std::move(data), unit);
}

EmbeddingMatrix import_csv(const std::filesystem::path& path) { return parse_embedding_csv(slurp(path)); }

EmbeddingMatrix select_rows(const EmbeddingMatrix& m, const std::vector<std::string>& ids) {
  RowMatrixXf data(static_cast<Eigen::Index>(ids.size()), m.dims());
  for (std::size_t i = 0; i < ids.size(); ++i) data.row(static_cast<Eigen::Index>(i)) = m.row(m.row_of(ids[i]));
  return EmbeddingMatrix(ids, std::move(data), m.normalized());
}

}  // namespace tested
