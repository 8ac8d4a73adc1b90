#pragma once

/// Minimum Covariance Determinant: exhaustive and FAST-MCD style estimation,
/// Mahalanobis distances and 2-D tolerance ellipses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include <Eigen/Dense>

#include "core_stats.hpp"
#include "data_matrix.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace rospca {

struct MCDOptions
{
  std::size_t starts = 500;        ///< random (p+1)-point elemental starts
  int initial_csteps = 2;          ///< C-steps applied to every start
  std::size_t survivors = 10;      ///< candidates iterated to convergence
  int max_csteps = 500;
  double condition_limit = 1e12;   ///< scatter with larger condition number is singular
  bool consistency_factor = false; ///< multiply the scatter by c(h, n, p)
  std::size_t exact_limit = 25;    ///< largest n accepted by mcd_exact
};

struct MCDResult
{
  Vector center;
  Matrix scatter;
  std::size_t h = 0;
  std::vector<bool> support;
  double det_objective = 0.0; ///< determinant of the raw subset covariance
  double log_det = 0.0;

  std::vector<std::size_t> support_indices() const { return mask_to_indices(support); }
};

struct Ellipse2D
{
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector2d axis_lengths = Eigen::Vector2d::Zero(); ///< descending
  double rotation = 0.0;                                   ///< radians, in [-pi/2, pi/2)
  double coverage_p = 0.0;
  double cutoff = 0.0;                                     ///< chi-squared quantile
};

namespace detail {

inline std::string describe_support(const std::vector<std::size_t>& idx)
{
  std::string s = "{";
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i)
      s += ",";
    s += std::to_string(idx[i]);
  }
  return s + "}";
}

/// Mean, (h-1)-denominator covariance and log-determinant of a subset given
/// by sorted row indices.
struct SubsetEstimate
{
  Vector center;
  Matrix scatter;
  double log_det = 0.0;
  bool singular = false;
};

inline SubsetEstimate estimate_subset(const Matrix& x, const std::vector<std::size_t>& idx,
                                      double condition_limit)
{
  const Matrix sub = select_rows(x, idx);
  SubsetEstimate e;
  e.center = column_means(sub);
  e.scatter = sample_covariance(sub, e.center);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(e.scatter, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(lo > 0.0) || hi / lo > condition_limit) {
    e.singular = true;
    e.log_det = -std::numeric_limits<double>::infinity();
    return e;
  }
  e.log_det = ev.array().log().sum();
  return e;
}

/// Squared Mahalanobis distances of every row.
inline Vector mahalanobis_all(const Matrix& x, const Vector& center, const Matrix& scatter)
{
  const Eigen::LLT<Matrix> llt(scatter);
  Matrix centered = (x.rowwise() - center.transpose()).transpose();
  llt.matrixL().solveInPlace(centered);
  return centered.colwise().squaredNorm().transpose();
}

/// Indices of the h smallest distances (stable on ties), sorted ascending.
inline std::vector<std::size_t> smallest_h(const Vector& d2, std::size_t h)
{
  std::vector<std::size_t> order(static_cast<std::size_t>(d2.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return d2(static_cast<Eigen::Index>(a)) < d2(static_cast<Eigen::Index>(b)); });
  order.resize(h);
  std::sort(order.begin(), order.end());
  return order;
}

struct Candidate
{
  std::vector<std::size_t> support;
  SubsetEstimate estimate;
};

inline bool candidate_less(const Candidate& a, const Candidate& b)
{
  if (a.estimate.log_det != b.estimate.log_det)
    return a.estimate.log_det < b.estimate.log_det;
  return a.support < b.support;
}

inline MCDResult make_result(const Candidate& c, std::size_t n, std::size_t h, const MCDOptions& opt)
{
  MCDResult r;
  r.center = c.estimate.center;
  r.scatter = c.estimate.scatter;
  r.h = h;
  r.support.assign(n, false);
  for (auto i : c.support)
    r.support[i] = true;
  r.log_det = c.estimate.log_det;
  r.det_objective = std::exp(c.estimate.log_det);
  if (opt.consistency_factor && h < n) {
    const double p = static_cast<double>(c.estimate.center.size());
    const double alpha = static_cast<double>(h) / static_cast<double>(n);
    const double q = boost::math::quantile(boost::math::chi_squared_distribution<double>(p), alpha);
    const double mass = boost::math::cdf(boost::math::chi_squared_distribution<double>(p + 2.0), q);
    r.scatter *= alpha / mass;
  }
  return r;
}

inline void check_h(std::size_t n, std::size_t p, std::size_t h)
{
  const std::size_t lo = (n + 1) / 2;
  if (h < lo || h > n)
    throw ValidationError("mcd: h = " + std::to_string(h) + " outside [" + std::to_string(lo) + ", " +
                          std::to_string(n) + "]");
  if (p >= h)
    throw ValidationError("mcd: dimension " + std::to_string(p) + " must be below h = " + std::to_string(h));
}

} // namespace detail

/// Default subset size, ceil(n / 2).
inline std::size_t default_h(std::size_t n) { return (n + 1) / 2; }

/// One concentration step: the h points closest to (center, scatter) in
/// Mahalanobis distance, as sorted row indices.
inline std::vector<std::size_t> c_step(const Matrix& x, const Vector& center, const Matrix& scatter,
                                       std::size_t h)
{
  return detail::smallest_h(detail::mahalanobis_all(x, center, scatter), h);
}

/// Exhaustive MCD over all C(n, h) subsets. Ties in the determinant go to the
/// lexicographically smallest index set.
inline MCDResult mcd_exact(const DataMatrix& data, std::size_t h, const MCDOptions& opt = {})
{
  const Matrix& x = data.values();
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  if (n > opt.exact_limit)
    throw SizeLimit("mcd_exact: n = " + std::to_string(n) + " exceeds enumeration limit " +
                    std::to_string(opt.exact_limit));
  detail::check_h(n, p, h);

  std::vector<std::size_t> idx(h);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  detail::Candidate best;
  bool found = false;
  for (;;) {
    auto est = detail::estimate_subset(x, idx, opt.condition_limit);
    if (!est.singular && (!found || est.log_det < best.estimate.log_det)) {
      best.support = idx;
      best.estimate = std::move(est);
      found = true;
    }
    // next combination in lexicographic order
    std::size_t k = h;
    while (k > 0 && idx[k - 1] == n - h + (k - 1))
      --k;
    if (k == 0)
      break;
    ++idx[k - 1];
    for (std::size_t j = k; j < h; ++j)
      idx[j] = idx[j - 1] + 1;
  }
  if (!found)
    throw SingularMatrix("mcd_exact: every " + std::to_string(h) + "-subset has a singular covariance");
  return detail::make_result(best, n, h, opt);
}

/// FAST-MCD estimate: random elemental starts, a few C-steps each, then full
/// C-step iteration on the best survivors. Deterministic for a fixed seed.
inline MCDResult mcd(const DataMatrix& data, std::size_t h, std::uint64_t seed, const MCDOptions& opt = {})
{
  const Matrix& x = data.values();
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  detail::check_h(n, p, h);

  auto evaluate = [&](std::vector<std::size_t> idx) {
    detail::Candidate c;
    c.estimate = detail::estimate_subset(x, idx, opt.condition_limit);
    c.support = std::move(idx);
    return c;
  };
  auto singular_error = [&](const std::vector<std::size_t>& idx) {
    return SingularMatrix("mcd: subset covariance is singular (exact fit); support " +
                          detail::describe_support(idx));
  };

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (h == n) {
    auto c = evaluate(all);
    if (c.estimate.singular)
      throw singular_error(all);
    return detail::make_result(c, n, h, opt);
  }

  auto concentrate = [&](detail::Candidate c) {
    auto next = evaluate(c_step(x, c.estimate.center, c.estimate.scatter, h));
    if (next.estimate.singular)
      throw singular_error(next.support);
    return next;
  };

  Rng master(seed);
  std::vector<std::uint64_t> start_seeds(opt.starts);
  for (auto& s : start_seeds)
    s = master.next();

  std::vector<detail::Candidate> candidates(opt.starts);
  parallel_for(opt.starts, [&](std::size_t s) {
    Rng rng(start_seeds[s]);
    const std::vector<std::size_t> perm = rng.sample(n, n);
    std::size_t take = p + 1;
    std::vector<std::size_t> idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(idx.begin(), idx.end());
    auto c = evaluate(idx);
    while (c.estimate.singular && take < n) {
      idx.push_back(perm[take++]);
      std::sort(idx.begin(), idx.end());
      c = evaluate(idx);
    }
    if (c.estimate.singular)
      throw SingularMatrix("mcd: data matrix is singular");
    for (int k = 0; k < opt.initial_csteps; ++k)
      c = concentrate(std::move(c));
    candidates[s] = std::move(c);
  });

  std::sort(candidates.begin(), candidates.end(), detail::candidate_less);
  candidates.erase(std::unique(candidates.begin(), candidates.end(),
                               [](const auto& a, const auto& b) { return a.support == b.support; }),
                   candidates.end());
  if (candidates.size() > opt.survivors)
    candidates.resize(opt.survivors);

  parallel_for(candidates.size(), [&](std::size_t s) {
    detail::Candidate c = std::move(candidates[s]);
    for (int k = 0; k < opt.max_csteps; ++k) {
      auto next = concentrate(c);
      if (next.support == c.support || !(next.estimate.log_det < c.estimate.log_det))
        break;
      c = std::move(next);
    }
    candidates[s] = std::move(c);
  });

  const auto best = std::min_element(candidates.begin(), candidates.end(), detail::candidate_less);
  return detail::make_result(*best, n, h, opt);
}

/// (x - center)' scatter^{-1} (x - center).
inline double mahalanobis_sq(const Vector& x, const Vector& center, const Matrix& scatter,
                             double condition_limit = 1e12)
{
  if (x.size() != center.size() || scatter.rows() != x.size() || scatter.cols() != x.size())
    throw DimensionMismatch("mahalanobis_sq: dimensions of point, center and scatter disagree");
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(scatter, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > condition_limit)
    throw SingularMatrix("mahalanobis_sq: scatter matrix is singular");
  const Vector d = x - center;
  return std::max(0.0, d.dot(scatter.ldlt().solve(d)));
}

/// Ellipse {x : mahalanobis_sq(x) = chi2_quantile(2, p)}.
inline Ellipse2D tolerance_ellipse(const Eigen::Vector2d& center, const Eigen::Matrix2d& scatter, double p)
{
  if (std::abs(scatter(0, 1) - scatter(1, 0)) > 1e-12 * (std::abs(scatter(0, 1)) + 1.0))
    throw ValidationError("tolerance_ellipse: scatter is not symmetric");
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  const Eigen::Vector2d ev = eig.eigenvalues(); // ascending
  if (!(ev(0) > 0.0) || ev(1) / ev(0) > 1e12)
    throw SingularMatrix("tolerance_ellipse: scatter matrix is singular");
  Ellipse2D e;
  e.center = center;
  e.coverage_p = p;
  e.cutoff = chi2_quantile(2, p);
  e.axis_lengths = Eigen::Vector2d(std::sqrt(ev(1) * e.cutoff), std::sqrt(ev(0) * e.cutoff));
  const Eigen::Vector2d major = eig.eigenvectors().col(1);
  double angle = std::atan2(major(1), major(0));
  if (angle >= std::numbers::pi / 2)
    angle -= std::numbers::pi;
  if (angle < -std::numbers::pi / 2)
    angle += std::numbers::pi;
  if (angle >= std::numbers::pi / 2) // atan2 rounding at the upper edge
    angle = -std::numbers::pi / 2;
  e.rotation = angle;
  return e;
}

/// Boundary polyline with `vertices` points, starting at the end of the
/// major axis and running counter-clockwise.
inline std::vector<Eigen::Vector2d> ellipse_boundary(const Ellipse2D& e, std::size_t vertices = 128)
{
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(vertices);
  const double c = std::cos(e.rotation), s = std::sin(e.rotation);
  for (std::size_t k = 0; k < vertices; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(vertices);
    const double u = e.axis_lengths(0) * std::cos(t);
    const double v = e.axis_lengths(1) * std::sin(t);
    pts.emplace_back(e.center(0) + c * u - s * v, e.center(1) + s * u + c * v);
  }
  return pts;
}

} // namespace rospca
