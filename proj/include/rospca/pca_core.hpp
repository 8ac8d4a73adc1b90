#pragma once

/// Classical PCA, standardization, component-count selection, scores and
/// reconstruction.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core_stats.hpp"
#include "data_matrix.hpp"
#include "errors.hpp"

namespace rospca {

enum class PcaMethod
{
  cpca,
  cspca,
  robpca,
  rospca
};

inline std::string to_string(PcaMethod m)
{
  switch (m) {
  case PcaMethod::cpca: return "cpca";
  case PcaMethod::cspca: return "cspca";
  case PcaMethod::robpca: return "robpca";
  case PcaMethod::rospca: return "rospca";
  }
  return "cpca";
}

inline PcaMethod parse_pca_method(const std::string& s)
{
  if (s == "cpca") return PcaMethod::cpca;
  if (s == "cspca") return PcaMethod::cspca;
  if (s == "robpca") return PcaMethod::robpca;
  if (s == "rospca") return PcaMethod::rospca;
  throw ValidationError("unknown PCA method '" + s + "' (expected cpca, cspca, robpca or rospca)");
}

inline bool is_robust(PcaMethod m) { return m == PcaMethod::robpca || m == PcaMethod::rospca; }

enum class StandardizeMethod
{
  classical, ///< mean and sample standard deviation
  robust     ///< median and raw MAD (scale 1 where the MAD is zero)
};

inline std::string to_string(StandardizeMethod m)
{
  return m == StandardizeMethod::classical ? "classical" : "robust";
}

/// Fitted principal component model.
///
/// `center` and `scale` live in the original coordinates: a row x is scored
/// as loadings' * ((x - center) / scale).
struct PCAModel
{
  Vector center;
  Vector scale;
  Matrix loadings; ///< p x k
  Vector eigenvalues;
  std::size_t k = 0;
  PcaMethod method = PcaMethod::cpca;
  double total_variance = 0.0;
  std::vector<std::string> names;

  Eigen::Index p() const { return loadings.rows(); }
};

struct StandardizedMatrix
{
  Matrix data;
  Vector centers;
  Vector scales;
  StandardizeMethod method = StandardizeMethod::classical;
  std::vector<std::string> names;
  std::vector<std::string> ids;

  /// Wraps already-standardized values (zero centers, unit scales).
  static StandardizedMatrix identity(Matrix data, StandardizeMethod method = StandardizeMethod::classical)
  {
    StandardizedMatrix s;
    s.centers = Vector::Zero(data.cols());
    s.scales = Vector::Ones(data.cols());
    for (Eigen::Index j = 0; j < data.cols(); ++j)
      s.names.push_back("x" + std::to_string(j + 1));
    s.data = std::move(data);
    s.method = method;
    return s;
  }
};

struct ScreeRow
{
  std::size_t index = 0;
  double eigenvalue = 0.0;
  double cumulative_ratio = 0.0;
};

inline StandardizedMatrix standardize(const DataMatrix& x, StandardizeMethod method)
{
  const Matrix& v = x.values();
  const Eigen::Index n = v.rows(), p = v.cols();
  if (n < 1)
    throw ValidationError("standardize: empty matrix");
  StandardizedMatrix out;
  out.method = method;
  out.names = x.names();
  out.ids = x.ids();
  out.centers.resize(p);
  out.scales.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> col(v.col(j).data(), v.col(j).data() + n);
    if (method == StandardizeMethod::classical) {
      if (n < 2)
        throw ValidationError("standardize: classical scaling needs at least 2 rows");
      const double mean = v.col(j).mean();
      const double sd = std::sqrt((v.col(j).array() - mean).square().sum() / static_cast<double>(n - 1));
      if (!(sd > 0.0))
        throw ValidationError("standardize: column '" + x.names()[static_cast<std::size_t>(j)] +
                              "' has zero standard deviation");
      out.centers(j) = mean;
      out.scales(j) = sd;
    } else {
      const Sample s(col);
      const double med = median(s);
      const double m = detail::mad_around(col, med);
      out.centers(j) = med;
      out.scales(j) = m > 0.0 ? m : 1.0;
    }
  }
  out.data = (v.rowwise() - out.centers.transpose()).array().rowwise() / out.scales.transpose().array();
  return out;
}

/// Smallest k whose leading eigenvalues explain at least `threshold` of the
/// total.
inline std::size_t select_k(const std::vector<double>& eigenvalues, double threshold)
{
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw DomainError("select_k: threshold " + std::to_string(threshold) + " outside (0, 1]");
  if (eigenvalues.empty())
    throw ValidationError("select_k: no eigenvalues");
  double total = 0.0;
  for (double e : eigenvalues)
    total += std::max(e, 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    acc += std::max(eigenvalues[k], 0.0);
    if (acc / total >= threshold)
      return k + 1;
  }
  return eigenvalues.size();
}

inline std::vector<ScreeRow> scree_data(const std::vector<double>& eigenvalues)
{
  double total = 0.0;
  for (double e : eigenvalues)
    total += std::max(e, 0.0);
  std::vector<ScreeRow> rows;
  double acc = 0.0;
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    acc += std::max(eigenvalues[k], 0.0);
    rows.push_back({k + 1, eigenvalues[k], total > 0.0 ? acc / total : 1.0});
  }
  return rows;
}

/// Flips each loading column so its largest-magnitude entry is positive.
/// Returns the per-column sign applied.
inline Vector apply_sign_rule(Matrix& loadings)
{
  Vector signs = Vector::Ones(loadings.cols());
  for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < loadings.rows(); ++i) {
      if (std::abs(loadings(i, j)) > best) {
        best = std::abs(loadings(i, j));
        arg = i;
      }
    }
    if (loadings(arg, j) < 0.0) {
      loadings.col(j) *= -1.0;
      signs(j) = -1.0;
    }
  }
  return signs;
}

namespace detail {

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
struct SymmetricEigen
{
  Vector values;
  Matrix vectors;
};

inline SymmetricEigen eigen_descending(const Matrix& sym)
{
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success)
    throw NumericalError("symmetric eigen-decomposition failed");
  SymmetricEigen out;
  out.values = eig.eigenvalues().reverse();
  out.vectors = eig.eigenvectors().rowwise().reverse();
  return out;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// Classical PCA of a plain matrix (mean center, n-1 covariance).
struct SubspaceFit
{
  Vector center;
  Matrix loadings;
  Vector eigenvalues;
  Vector all_eigenvalues;
  std::size_t k = 0;
};

inline std::size_t count_positive(const Vector& eigenvalues)
{
  if (eigenvalues.size() == 0)
    return 0;
  const double tol = std::max(eigenvalues(0), 0.0) * 1e-12;
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
    if (eigenvalues(i) > tol && eigenvalues(i) > 0.0)
      ++c;
  return c;
}

inline std::size_t resolve_k(std::optional<std::size_t> k, const Vector& all_eigenvalues, double threshold,
                             std::size_t n, const char* who)
{
  const auto p = static_cast<std::size_t>(all_eigenvalues.size());
  std::size_t kk = k ? *k : select_k(to_std(all_eigenvalues), threshold);
  const std::size_t cap = std::min(n > 0 ? n - 1 : 0, p);
  if (kk < 1 || kk > cap)
    throw ValidationError(std::string(who) + ": k = " + std::to_string(kk) + " outside [1, " +
                          std::to_string(cap) + "]");
  if (count_positive(all_eigenvalues) < kk)
    throw RankError(std::string(who) + ": only " + std::to_string(count_positive(all_eigenvalues)) +
                    " positive eigenvalues for k = " + std::to_string(kk));
  return kk;
}

inline SubspaceFit classical_subspace(const Matrix& x, std::optional<std::size_t> k, double threshold,
                                      const char* who = "cpca_fit")
{
  if (x.rows() < 2)
    throw ValidationError(std::string(who) + ": needs at least 2 observations");
  SubspaceFit fit;
  fit.center = column_means(x);
  const auto eig = eigen_descending(sample_covariance(x, fit.center));
  fit.all_eigenvalues = eig.values;
  fit.k = resolve_k(k, eig.values, threshold, static_cast<std::size_t>(x.rows()), who);
  const auto kk = static_cast<Eigen::Index>(fit.k);
  fit.loadings = eig.vectors.leftCols(kk);
  fit.eigenvalues = eig.values.head(kk);
  apply_sign_rule(fit.loadings);
  return fit;
}

/// Orthogonal distances of rows of `x` to the affine subspace center + span(P).
inline Vector orthogonal_distances_raw(const Matrix& x, const Vector& center, const Matrix& loadings)
{
  const Matrix centered = x.rowwise() - center.transpose();
  const Matrix resid = centered - (centered * loadings) * loadings.transpose();
  return resid.rowwise().norm();
}

inline PCAModel to_model(const StandardizedMatrix& xs, const Vector& center_s, Matrix loadings,
                         Vector eigenvalues, double total_variance, PcaMethod method)
{
  PCAModel m;
  m.center = xs.centers + xs.scales.cwiseProduct(center_s);
  m.scale = xs.scales;
  m.k = static_cast<std::size_t>(loadings.cols());
  m.loadings = std::move(loadings);
  m.eigenvalues = std::move(eigenvalues);
  m.total_variance = total_variance;
  m.method = method;
  m.names = xs.names;
  return m;
}

} // namespace detail

/// Classical PCA on a standardized matrix. k = nullopt selects the smallest
/// k explaining `threshold` of the variance.
inline PCAModel cpca_fit(const StandardizedMatrix& xs, std::optional<std::size_t> k = std::nullopt,
                         double threshold = 0.80)
{
  auto fit = detail::classical_subspace(xs.data, k, threshold);
  return detail::to_model(xs, fit.center, fit.loadings, fit.eigenvalues, fit.all_eigenvalues.sum(),
                          PcaMethod::cpca);
}

/// All eigenvalues of the sample covariance of xs, descending.
inline std::vector<double> covariance_eigenvalues(const Matrix& x)
{
  return detail::to_std(detail::eigen_descending(sample_covariance(x, column_means(x))).values);
}

/// Rows of x in standardized model coordinates, (x - center) / scale.
inline Matrix model_coordinates(const Matrix& x, const PCAModel& model)
{
  if (x.cols() != model.p())
    throw DimensionMismatch("model has " + std::to_string(model.p()) + " variables, data has " +
                            std::to_string(x.cols()));
  return (x.rowwise() - model.center.transpose()).array().rowwise() / model.scale.transpose().array();
}

inline Matrix project(const Matrix& x, const PCAModel& model)
{
  return model_coordinates(x, model) * model.loadings;
}

inline Matrix project(const DataMatrix& x, const PCAModel& model) { return project(x.values(), model); }

inline DataMatrix reconstruct(const Matrix& scores, const PCAModel& model)
{
  if (scores.cols() != model.loadings.cols())
    throw DimensionMismatch("reconstruct: scores have " + std::to_string(scores.cols()) +
                            " columns, model has k = " + std::to_string(model.loadings.cols()));
  Matrix xs = scores * model.loadings.transpose();
  Matrix x = (xs.array().rowwise() * model.scale.transpose().array()).matrix().rowwise() +
             model.center.transpose();
  return DataMatrix(std::move(x), model.names);
}

} // namespace rospca
