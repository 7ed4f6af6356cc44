#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tested/error.hpp"

namespace tested {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXf = RowMatrix<float>;

inline constexpr std::uint32_t kDefaultEmbeddingDims = 384;

/// Dense document embeddings, one row per id. Storage is f32; reductions
/// in the kernels below accumulate in f64.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  /// Throws DataError on duplicate ids or a row-count mismatch.
  EmbeddingMatrix(std::vector<std::string> ids, RowMatrixXf data, bool normalized = false);

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const RowMatrixXf& data() const noexcept { return data_; }
  bool normalized() const noexcept { return normalized_; }
  Eigen::Index rows() const noexcept { return data_.rows(); }
  Eigen::Index dims() const noexcept { return data_.cols(); }

  std::optional<Eigen::Index> find(const std::string& id) const;
  /// Throws DataError for unknown ids.
  Eigen::Index row_of(const std::string& id) const;
  auto row(Eigen::Index r) const { return data_.row(r); }

 private:
  std::vector<std::string> ids_;
  RowMatrixXf data_;
  bool normalized_ = false;
  std::unordered_map<std::string, Eigen::Index> index_;
};

inline constexpr double kUnitNormTolerance = 1e-4;

/// Scales each row to unit L2 norm. Throws NumericalError naming the
/// first all-zero row.
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

/// True when every row norm lies within kUnitNormTolerance of 1.
bool rows_are_unit(const EmbeddingMatrix& m);

template <typename DerivedA, typename DerivedB>
double dot_f64(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  return a.template cast<double>().dot(b.template cast<double>());
}

/// Cosine of the angle between two vectors. Throws NumericalError when
/// either is zero.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const double na = a.template cast<double>().norm();
  const double nb = b.template cast<double>().norm();
  if (na == 0.0 || nb == 0.0) throw NumericalError("cosine similarity of a zero vector");
  const double c = dot_f64(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

/// Cosine of every row of `m` against `centroid`.
Eigen::VectorXd cosine_to(const EmbeddingMatrix& m, const Eigen::Ref<const Eigen::VectorXd>& centroid);

/// TESTED-EMB: "TSEB", u32 version, u64 rows, u32 dims, rows*dims f32,
/// then a UTF-8 JSON array of ids. All integers little endian.
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix read_matrix(const std::filesystem::path& path);
std::string encode_matrix(const EmbeddingMatrix& m);
EmbeddingMatrix decode_matrix(std::string_view bytes);

/// One row per line: id followed by dims floats, comma separated. An
/// optional header row whose first cell is "id" is skipped.
EmbeddingMatrix import_csv(const std::filesystem::path& path);
EmbeddingMatrix parse_embedding_csv(std::string_view payload);

/// Returns the rows for `ids` in that order.
EmbeddingMatrix select_rows(const EmbeddingMatrix& m, const std::vector<std::string>& ids);

}  // namespace tested
