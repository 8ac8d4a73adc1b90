#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace rospca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// n x p table of finite reals with column names and optional row ids.
class DataMatrix
{
public:
  DataMatrix() = default;

  DataMatrix(Matrix values, std::vector<std::string> names, std::vector<std::string> ids = {})
    : values_(std::move(values)), names_(std::move(names)), ids_(std::move(ids))
  {
    if (names_.empty()) {
      for (Eigen::Index j = 0; j < values_.cols(); ++j)
        names_.push_back("x" + std::to_string(j + 1));
    }
    if (static_cast<Eigen::Index>(names_.size()) != values_.cols())
      throw DimensionMismatch("DataMatrix: " + std::to_string(names_.size()) + " names for " +
                              std::to_string(values_.cols()) + " columns");
    if (!ids_.empty() && static_cast<Eigen::Index>(ids_.size()) != values_.rows())
      throw DimensionMismatch("DataMatrix: " + std::to_string(ids_.size()) + " ids for " +
                              std::to_string(values_.rows()) + " rows");
    for (Eigen::Index j = 0; j < values_.cols(); ++j)
      for (Eigen::Index i = 0; i < values_.rows(); ++i)
        if (!std::isfinite(values_(i, j)))
          throw ValidationError("DataMatrix: non-finite value at row " + std::to_string(i + 1) +
                                ", column '" + names_[static_cast<std::size_t>(j)] + "'");
  }

  explicit DataMatrix(Matrix values) : DataMatrix(std::move(values), {}) {}

  const Matrix& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::string>& ids() const { return ids_; }
  bool has_ids() const { return !ids_.empty(); }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }

  /// Row label: the id when present, otherwise the 1-based row number.
  std::string row_label(Eigen::Index i) const
  {
    return ids_.empty() ? std::to_string(i + 1) : ids_[static_cast<std::size_t>(i)];
  }

private:
  Matrix values_;
  std::vector<std::string> names_;
  std::vector<std::string> ids_;
};

/// Rows of `x` selected by a boolean mask, in original order.
inline Matrix select_rows(const Matrix& x, const std::vector<bool>& mask)
{
  Eigen::Index count = 0;
  for (bool b : mask)
    count += b ? 1 : 0;
  Matrix out(count, x.cols());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (mask[static_cast<std::size_t>(i)])
      out.row(r++) = x.row(i);
  return out;
}

inline Matrix select_rows(const Matrix& x, const std::vector<std::size_t>& idx)
{
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

inline std::vector<std::size_t> mask_to_indices(const std::vector<bool>& mask)
{
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i])
      out.push_back(i);
  return out;
}

/// Sample covariance with denominator n - 1.
inline Matrix sample_covariance(const Matrix& x, const Vector& center)
{
  const Matrix centered = x.rowwise() - center.transpose();
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  Matrix cov = (centered.transpose() * centered) / denom;
  return 0.5 * (cov + cov.transpose());
}

inline Vector column_means(const Matrix& x) { return x.colwise().mean().transpose(); }

} // namespace rospca
