#pragma once

/// Classical sparse PCA: each component maximizes sd(X p) - lambda ||p||_1
/// over unit vectors orthogonal to the earlier components, and BIC-based
/// selection of lambda.

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "data_matrix.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "pca_core.hpp"

namespace rospca {

inline std::vector<double> default_lambda_grid()
{
  return {0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75, 1.0};
}

struct SparsityConfig
{
  double lambda = 0.0;
  std::vector<double> grid = default_lambda_grid();
  int max_iter = 20000;
  double tol = 1e-12;            ///< stop when successive iterates differ by less
  double zero_threshold = 1e-12; ///< loading entries below this are stored as 0
};

/// Penalized objective value after each ascent iteration, per component.
struct SparseFitTrace
{
  std::vector<std::vector<double>> objective;
};

struct BicRow
{
  double lambda = 0.0;
  double bic = std::numeric_limits<double>::quiet_NaN();
  std::size_t zero_count = 0;
  double explained_variance = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;
};

struct BicSelection
{
  double lambda = 0.0;
  std::vector<BicRow> table;
};

namespace detail {

inline Vector soft_threshold(const Vector& v, double level)
{
  return v.unaryExpr([level](double x) {
    if (x > level)
      return x - level;
    if (x < -level)
      return x + level;
    return 0.0;
  });
}

/// argmax of g'q - lambda ||q||_1 over the unit ball intersected with the
/// orthogonal complement of span(B). Solved through the dual
/// min_mu 1/2 ||soft(g - B mu, lambda)||^2 by damped semismooth Newton; the
/// primal solution is soft(g - B mu*, lambda), normalized. Returns nullopt
/// when the maximizer is the zero vector.
inline std::optional<Vector> constrained_soft_direction(const Vector& g, double lambda, const Matrix& b)
{
  if (b.cols() == 0) {
    Vector s = soft_threshold(g, lambda);
    const double nrm = s.norm();
    if (nrm == 0.0)
      return std::nullopt;
    return Vector(s / nrm);
  }
  const Eigen::Index m = b.cols();
  Vector mu = b.transpose() * g;
  auto residual = [&](const Vector& mu_) { return soft_threshold(g - b * mu_, lambda); };
  Vector s = residual(mu);
  double phi = 0.5 * s.squaredNorm();
  for (int it = 0; it < 500; ++it) {
    const Vector grad = b.transpose() * s; // minus the dual gradient
    if (grad.norm() <= 1e-14 * std::max(1.0, s.norm()) || phi == 0.0)
      break;
    const Vector shifted = g - b * mu;
    Matrix ba = Matrix::Zero(b.rows(), m);
    for (Eigen::Index i = 0; i < b.rows(); ++i)
      if (std::abs(shifted(i)) > lambda)
        ba.row(i) = b.row(i);
    Matrix hess = ba.transpose() * ba;
    hess.diagonal().array() += 1e-12;
    Vector step = hess.ldlt().solve(grad);
    if (!step.allFinite())
      step = grad;
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector trial_mu = mu + t * step;
      const Vector trial_s = residual(trial_mu);
      const double trial_phi = 0.5 * trial_s.squaredNorm();
      if (trial_phi <= phi - 1e-4 * t * grad.dot(step) || trial_phi < phi) {
        mu = trial_mu;
        s = trial_s;
        phi = trial_phi;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved)
      break;
  }
  const double nrm = s.norm();
  if (nrm <= 1e-300)
    return std::nullopt;
  return Vector(s / nrm);
}

struct SparseSubspace
{
  Vector center;
  Matrix loadings;
  Vector eigenvalues;
  Vector all_eigenvalues; ///< classical covariance eigenvalues, for k selection and scree
  double total_variance = 0.0;
};

inline std::size_t zero_count(const Matrix& m)
{
  std::size_t c = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (m(i, j) == 0.0)
        ++c;
  return c;
}

inline SparseSubspace sparse_subspace(const Matrix& x, std::optional<std::size_t> k, double threshold,
                                      const SparsityConfig& cfg, SparseFitTrace* trace,
                                      const char* who = "cspca_fit")
{
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda))
    throw DomainError(std::string(who) + ": lambda must be a finite non-negative number");
  if (x.rows() < 2)
    throw ValidationError(std::string(who) + ": needs at least 2 observations");
  const Eigen::Index p = x.cols();
  SparseSubspace out;
  out.center = column_means(x);
  const Matrix cov = sample_covariance(x, out.center);
  out.all_eigenvalues = eigen_descending(cov).values;
  out.total_variance = cov.trace();
  const std::size_t kk = resolve_k(k, out.all_eigenvalues, threshold, static_cast<std::size_t>(x.rows()), who);
  const double lambda = cfg.lambda;

  Matrix found(p, 0);
  if (trace)
    trace->objective.assign(kk, {});

  for (std::size_t comp = 0; comp < kk; ++comp) {
    const Matrix proj = Matrix::Identity(p, p) - found * found.transpose();
    Matrix cd = proj * cov * proj;
    cd = 0.5 * (cd + cd.transpose());
    auto sd = [&](const Vector& q) { return std::sqrt(std::max(q.dot(cd * q), 0.0)); };
    auto objective = [&](const Vector& q) { return sd(q) - lambda * q.lpNorm<1>(); };

    const auto eig = eigen_descending(cd);
    if (!(eig.values(0) > 1e-12 * std::max(out.all_eigenvalues(0), 1e-300)))
      throw RankError(std::string(who) + ": deflated covariance vanishes at component " + std::to_string(comp + 1));

    // Axes not touched by earlier loadings keep orthogonality exactly.
    std::vector<Eigen::Index> free_axes;
    for (Eigen::Index i = 0; i < p; ++i)
      if (found.cols() == 0 || found.row(i).cwiseAbs().maxCoeff() == 0.0)
        free_axes.push_back(i);
    auto best_axis = [&]() -> std::optional<Vector> {
      std::optional<Vector> best;
      double best_obj = -std::numeric_limits<double>::infinity();
      for (auto i : free_axes) {
        Vector e = Vector::Unit(p, i);
        const double o = objective(e);
        if (o > best_obj) {
          best_obj = o;
          best = e;
        }
      }
      return best;
    };

    const double critical = cd.diagonal().cwiseMax(0.0).cwiseSqrt().maxCoeff();
    Vector q;
    bool done = false;
    if (lambda > 0.0 && lambda >= critical) {
      if (auto axis = best_axis()) {
        q = *axis;
        done = true;
        if (trace)
          trace->objective[comp].push_back(objective(q));
      }
    }
    if (!done) {
      // Ascent from one start; the objective is not concave, so several
      // starts are tried and the best local maximum kept.
      auto ascend = [&](Vector start, std::vector<double>& path) {
        double obj = objective(start);
        path.assign(1, obj);
        int it = 0;
        for (; it < cfg.max_iter; ++it) {
          const double s = sd(start);
          if (!(s > 0.0))
            throw RankError(std::string(who) + ": zero variance direction at component " + std::to_string(comp + 1));
          const Vector g = cd * start / s;
          std::optional<Vector> cand = constrained_soft_direction(g, lambda, found);
          if (!cand)
            cand = best_axis();
          if (!cand)
            break;
          const double cand_obj = objective(*cand);
          if (cand_obj < obj - 1e-12 * (std::abs(obj) + 1.0))
            break;
          const double delta = (*cand - start).norm();
          const double gain = cand_obj - obj;
          start = *cand;
          obj = cand_obj;
          path.push_back(obj);
          // The objective gain is second order in the step near a fixed point.
          if (delta < cfg.tol || (delta < 1e-7 && gain <= 1e-16 * (std::abs(obj) + 1.0)))
            break;
        }
        if (it == cfg.max_iter)
          throw NonConvergence(std::string(who) + ": component " + std::to_string(comp + 1) + " did not converge in " +
                               std::to_string(cfg.max_iter) + " iterations");
        return std::pair{start, obj};
      };
      std::vector<double> best_path, path;
      auto [bq, bobj] = ascend(eig.vectors.col(0), best_path);
      if (lambda > 0.0)
        for (auto i : free_axes) {
          auto [cq, cobj] = ascend(Vector::Unit(p, i), path);
          if (cobj > bobj + 1e-12 * (std::abs(bobj) + 1.0)) {
            bq = cq;
            bobj = cobj;
            best_path.swap(path);
          }
        }
      q = bq;
      if (trace)
        trace->objective[comp] = std::move(best_path);
    }

    for (Eigen::Index i = 0; i < p; ++i)
      if (std::abs(q(i)) < cfg.zero_threshold)
        q(i) = 0.0;
    q /= q.norm();
    found.conservativeResize(p, found.cols() + 1);
    found.col(found.cols() - 1) = q;
  }

  // Order components by explained variance.
  Vector var(static_cast<Eigen::Index>(kk));
  for (Eigen::Index j = 0; j < var.size(); ++j)
    var(j) = found.col(j).dot(cov * found.col(j));
  std::vector<Eigen::Index> order(kk);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return var(a) > var(b); });
  out.loadings.resize(p, static_cast<Eigen::Index>(kk));
  out.eigenvalues.resize(static_cast<Eigen::Index>(kk));
  for (std::size_t j = 0; j < kk; ++j) {
    out.loadings.col(static_cast<Eigen::Index>(j)) = found.col(order[j]);
    out.eigenvalues(static_cast<Eigen::Index>(j)) = var(order[j]);
  }
  if (trace) {
    std::vector<std::vector<double>> reordered(kk);
    for (std::size_t j = 0; j < kk; ++j)
      reordered[j] = trace->objective[static_cast<std::size_t>(order[j])];
    trace->objective = std::move(reordered);
  }
  apply_sign_rule(out.loadings);
  return out;
}

} // namespace detail

/// Sparse PCA with L1 penalty cfg.lambda. lambda = 0 reproduces cpca_fit.
inline PCAModel cspca_fit(const StandardizedMatrix& xs, std::optional<std::size_t> k, const SparsityConfig& cfg,
                          SparseFitTrace* trace = nullptr, double threshold = 0.80)
{
  auto fit = detail::sparse_subspace(xs.data, k, threshold, cfg, trace);
  return detail::to_model(xs, fit.center, fit.loadings, fit.eigenvalues, fit.total_variance, PcaMethod::cspca);
}

inline void validate_lambda_grid(const std::vector<double>& grid)
{
  if (grid.empty())
    throw ValidationError("lambda grid is empty");
  if (grid.front() != 0.0)
    throw ValidationError("lambda grid must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]) || !std::isfinite(grid[i]))
      throw ValidationError("lambda grid must be strictly increasing");
}

/// Residual sum of squares of rows of x around center + span(loadings).
inline double reconstruction_rss(const Matrix& x, const Vector& center, const Matrix& loadings)
{
  return detail::orthogonal_distances_raw(x, center, loadings).squaredNorm();
}

/// BIC(lambda) = n ln(RSS / n) + df ln(n) with df the count of nonzero
/// loadings. Failed grid points are kept in the table with ok = false. Ties
/// go to the larger lambda.
inline BicSelection bic_select_lambda(const Matrix& x, std::size_t k, const std::vector<double>& grid,
                                      const SparsityConfig& base = {})
{
  validate_lambda_grid(grid);
  const auto n = static_cast<double>(x.rows());
  BicSelection sel;
  sel.table.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t g) {
    BicRow& row = sel.table[g];
    row.lambda = grid[g];
    try {
      SparsityConfig cfg = base;
      cfg.lambda = grid[g];
      const auto fit = detail::sparse_subspace(x, k, 0.8, cfg, nullptr, "bic_select_lambda");
      const double rss = std::max(reconstruction_rss(x, fit.center, fit.loadings), std::numeric_limits<double>::min());
      row.zero_count = detail::zero_count(fit.loadings);
      const double df = static_cast<double>(fit.loadings.size()) - static_cast<double>(row.zero_count);
      row.bic = n * std::log(rss / n) + df * std::log(n);
      row.explained_variance = fit.eigenvalues.sum() / fit.total_variance;
      row.ok = true;
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
    }
  });
  bool any = false;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : sel.table) {
    if (row.ok && row.bic <= best) {
      best = row.bic;
      sel.lambda = row.lambda;
      any = true;
    }
  }
  if (!any)
    throw NumericalError("bic_select_lambda: every grid point failed; first error: " + sel.table.front().error);
  return sel;
}

inline BicSelection bic_select_lambda(const StandardizedMatrix& xs, std::size_t k, const std::vector<double>& grid,
                                      const SparsityConfig& base = {})
{
  return bic_select_lambda(xs.data, k, grid, base);
}

} // namespace rospca
