#pragma once

/// ROBPCA and ROSPCA.
///
/// Both fits run the same four stages on a standardized matrix:
///  1. projection-pursuit outlyingness over directions through point pairs;
///     the h least outlying points form the initial support;
///  2. PCA (classical for ROBPCA, sparse for ROSPCA) on that support gives an
///     initial k-dimensional subspace;
///  3. every observation whose orthogonal distance to that subspace stays
///     below the adjusted-boxplot upper fence is kept, and the PCA is refit
///     on this reweighted set;
///  4. ROBPCA: MCD of the scores of all points in the reweighted subspace,
///     whose eigenvectors rotate the final loadings. ROSPCA: the loadings
///     are kept and each eigenvalue becomes the squared MAD of its score
///     column on the reweighted set.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core_stats.hpp"
#include "data_matrix.hpp"
#include "errors.hpp"
#include "mcd.hpp"
#include "parallel.hpp"
#include "pca_core.hpp"
#include "random.hpp"
#include "sparse_pca.hpp"

namespace rospca {

enum class DirectionProvenance
{
  point_pair,
  random
};

struct DirectionSet
{
  std::vector<Vector> directions;
  std::vector<DirectionProvenance> provenance;
  std::uint64_t seed = 0;

  std::size_t size() const { return directions.size(); }
};

/// Location and scale applied to each projected sample inside outlyingness.
struct UnivariateEstimators
{
  std::function<double(const std::vector<double>&)> location = [](const std::vector<double>& v) {
    std::vector<double> tmp = v;
    return detail::median_inplace(tmp);
  };
  std::function<double(const std::vector<double>&, double)> scale = [](const std::vector<double>& v, double loc) {
    return detail::mad_around(v, loc);
  };
};

enum class FinalStage
{
  mcd_rotation, ///< MCD of the scores; its eigenvectors rotate the loadings
  mad_scale     ///< loadings kept; eigenvalue = squared MAD of each score column
};

struct RobustOptions
{
  std::size_t directions = 250;
  bool fill_random_directions = false;
  double threshold = 0.80; ///< explained-variance share for automatic k
  MCDOptions mcd;
  UnivariateEstimators estimators;
  SparsityConfig sparse;   ///< lambda and iteration controls for ROSPCA
  std::optional<FinalStage> final_stage; ///< overrides the method default
};

struct StageSummary
{
  std::string stage;
  std::size_t support_size = 0;
  double objective = 0.0;
  std::string note;
};

struct RobustFit
{
  PCAModel model;
  std::size_t h = 0;
  Vector outlyingness;
  std::vector<bool> initial_support;
  std::vector<bool> reweight_support;
  std::vector<StageSummary> stage_log;
  Matrix stage3_loadings;              ///< reweighted-subspace loadings, columns in final order
  std::vector<double> scree_eigenvalues; ///< all covariance eigenvalues of the h-subset
  double reweight_cutoff = 0.0;
};

/// Unit directions through distinct pairs of rows. When n(n-1)/2 <= count all
/// pairs are used in (i, j) order; otherwise `count` pairs are drawn without
/// replacement. Pairs of identical rows are skipped.
inline DirectionSet generate_directions(const Matrix& x, std::size_t count, std::uint64_t seed,
                                        bool fill_random = false)
{
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 2)
    throw ValidationError("generate_directions: needs at least 2 observations");
  DirectionSet set;
  set.seed = seed;
  auto try_pair = [&](std::size_t i, std::size_t j) {
    Vector d = (x.row(static_cast<Eigen::Index>(j)) - x.row(static_cast<Eigen::Index>(i))).transpose();
    const double nrm = d.norm();
    if (nrm == 0.0)
      return;
    set.directions.push_back(d / nrm);
    set.provenance.push_back(DirectionProvenance::point_pair);
  };

  Rng rng(seed);
  const std::size_t pairs = n * (n - 1) / 2;
  if (pairs <= count) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        try_pair(i, j);
  } else {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    const std::size_t max_draws = 100 * count + 1000;
    for (std::size_t draw = 0; draw < max_draws && set.size() < count; ++draw) {
      std::size_t i = rng.index(n), j = rng.index(n);
      if (i == j)
        continue;
      if (i > j)
        std::swap(i, j);
      if (!seen.insert({i, j}).second)
        continue;
      try_pair(i, j);
    }
  }
  if (set.directions.empty())
    throw ValidationError("generate_directions: no valid direction, all observations are identical");
  if (fill_random) {
    while (set.size() < count) {
      Vector d(x.cols());
      for (Eigen::Index c = 0; c < d.size(); ++c)
        d(c) = rng.normal();
      if (d.norm() == 0.0)
        continue;
      set.directions.push_back(d / d.norm());
      set.provenance.push_back(DirectionProvenance::random);
    }
  }
  return set;
}

/// Maximum over directions v of |x'v - loc(Xv)| / scale(Xv).
///
/// Directions with zero scale are skipped, except that a point deviating on
/// one is flagged: its outlyingness becomes the largest finite value observed
/// plus its rank (1, 2, ...) among the flagged points by deviation size.
inline Vector outlyingness(const Matrix& x, const DirectionSet& dirs, const UnivariateEstimators& est = {})
{
  if (dirs.directions.empty())
    throw ValidationError("outlyingness: empty direction set");
  const auto n = static_cast<std::size_t>(x.rows());
  const std::size_t m = dirs.size();
  for (const auto& d : dirs.directions)
    if (d.size() != x.cols())
      throw DimensionMismatch("outlyingness: direction dimension differs from data");

  std::vector<std::vector<double>> ratio(m), zero_dev(m);
  std::vector<char> zero_scale(m, 0);
  parallel_for(m, [&](std::size_t k) {
    const Vector proj = x * dirs.directions[k];
    std::vector<double> v(proj.data(), proj.data() + proj.size());
    const double loc = est.location(v);
    const double scale = est.scale(v, loc);
    if (scale > 0.0) {
      ratio[k].resize(n);
      for (std::size_t i = 0; i < n; ++i)
        ratio[k][i] = std::abs(v[i] - loc) / scale;
    } else {
      zero_scale[k] = 1;
      zero_dev[k].resize(n);
      for (std::size_t i = 0; i < n; ++i)
        zero_dev[k][i] = std::abs(v[i] - loc);
    }
  });

  Vector out = Vector::Zero(static_cast<Eigen::Index>(n));
  std::vector<double> flagged_dev(n, 0.0);
  bool any_scaled = false;
  for (std::size_t k = 0; k < m; ++k) {
    if (!zero_scale[k]) {
      any_scaled = true;
      for (std::size_t i = 0; i < n; ++i)
        out(static_cast<Eigen::Index>(i)) = std::max(out(static_cast<Eigen::Index>(i)), ratio[k][i]);
    } else {
      for (std::size_t i = 0; i < n; ++i)
        flagged_dev[i] = std::max(flagged_dev[i], zero_dev[k][i]);
    }
  }
  if (!any_scaled)
    throw DegenerateSample("outlyingness: every direction has zero scale");

  std::vector<double> devs;
  for (std::size_t i = 0; i < n; ++i)
    if (flagged_dev[i] > 0.0)
      devs.push_back(flagged_dev[i]);
  if (!devs.empty()) {
    std::sort(devs.begin(), devs.end());
    devs.erase(std::unique(devs.begin(), devs.end()), devs.end());
    const double top = out.maxCoeff();
    for (std::size_t i = 0; i < n; ++i) {
      if (flagged_dev[i] > 0.0) {
        const auto rank = static_cast<double>(std::lower_bound(devs.begin(), devs.end(), flagged_dev[i]) - devs.begin() + 1);
        out(static_cast<Eigen::Index>(i)) = top + rank;
      }
    }
  }
  return out;
}

namespace detail {

struct InitialSupport
{
  Vector outlyingness;
  std::vector<bool> mask;
  std::size_t directions = 0;
};

inline InitialSupport least_outlying(const Matrix& x, std::size_t h, std::uint64_t seed, const RobustOptions& opt)
{
  InitialSupport s;
  const auto dirs = generate_directions(x, opt.directions, seed, opt.fill_random_directions);
  s.directions = dirs.size();
  s.outlyingness = outlyingness(x, dirs, opt.estimators);
  const auto chosen = smallest_h(s.outlyingness, h);
  s.mask.assign(static_cast<std::size_t>(x.rows()), false);
  for (auto i : chosen)
    s.mask[i] = true;
  return s;
}

/// Observations whose orthogonal distance stays within the adjusted-boxplot
/// upper fence of the distances of the reference rows (the h-subset), so the
/// cut inherits the breakdown of the h-subset instead of the 25% of the
/// quartiles. When the reference distances are too degenerate for the fence
/// (zero IQR) the cut falls back to their third quartile.
inline std::vector<bool> close_to_subspace(const Matrix& x, const std::vector<bool>& reference, const Vector& center,
                                           const Matrix& loadings, double& cutoff, std::string& note)
{
  const Vector od = orthogonal_distances_raw(x, center, loadings);
  std::vector<double> ref;
  for (Eigen::Index i = 0; i < od.size(); ++i)
    if (reference[static_cast<std::size_t>(i)])
      ref.push_back(od(i));
  try {
    cutoff = adjusted_fences(Sample(ref)).upper;
  } catch (const DegenerateSample&) {
    cutoff = quantile(Sample(ref), 0.75);
    note = "orthogonal distances degenerate; cut at third quartile";
  }
  std::vector<bool> keep(static_cast<std::size_t>(od.size()));
  for (Eigen::Index i = 0; i < od.size(); ++i)
    keep[static_cast<std::size_t>(i)] = od(i) <= cutoff;
  return keep;
}

inline std::size_t count_true(const std::vector<bool>& m)
{
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
}

inline void check_robust_args(std::size_t n, std::size_t p, std::size_t h, std::optional<std::size_t> k,
                              const char* who)
{
  const std::size_t lo = (n + 1) / 2;
  if (h < lo || h > n)
    throw ValidationError(std::string(who) + ": h = " + std::to_string(h) + " outside [" + std::to_string(lo) +
                          ", " + std::to_string(n) + "]");
  if (k && (*k < 1 || *k > std::min(h - 1, p)))
    throw ValidationError(std::string(who) + ": k = " + std::to_string(*k) + " outside [1, " +
                          std::to_string(std::min(h - 1, p)) + "]");
}

/// Squared MAD of each score column on `rows`; classical variance where the
/// MAD vanishes. Also returns the column medians.
inline std::pair<Vector, Vector> robust_score_scale(const Matrix& scores, std::vector<StageSummary>& log)
{
  const Eigen::Index k = scores.cols();
  Vector eig(k), loc(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<double> col(scores.col(j).data(), scores.col(j).data() + scores.rows());
    const double med = median(Sample(col));
    const double m = mad_around(col, med);
    loc(j) = med;
    if (m > 0.0) {
      eig(j) = m * m;
    } else {
      const double mean = scores.col(j).mean();
      const double var = (scores.col(j).array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(scores.rows() - 1, 1));
      if (!(var > 0.0))
        throw RankError("robust scale: score column " + std::to_string(j + 1) + " is constant");
      eig(j) = var;
      log.push_back({"robust-scale", static_cast<std::size_t>(scores.rows()), var,
                     "MAD of score column " + std::to_string(j + 1) + " is zero; classical variance used"});
    }
  }
  return {eig, loc};
}

inline RobustFit robust_fit(const StandardizedMatrix& xs, std::optional<std::size_t> k_in, std::size_t h,
                            std::uint64_t seed, const RobustOptions& opt, bool sparse)
{
  const Matrix& x = xs.data;
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  const char* who = sparse ? "rospca_fit" : "robpca_fit";
  check_robust_args(n, p, h, k_in, who);

  RobustFit fit;
  fit.h = h;

  // Stage 1
  auto init = least_outlying(x, h, seed, opt);
  fit.outlyingness = init.outlyingness;
  fit.initial_support = init.mask;
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (init.mask[i])
        worst = std::max(worst, init.outlyingness(static_cast<Eigen::Index>(i)));
    fit.stage_log.push_back({"outlyingness", h, worst, std::to_string(init.directions) + " directions"});
  }

  // Stage 2
  const Matrix hsub = select_rows(x, init.mask);
  const Vector h_eig = eigen_descending(sample_covariance(hsub, column_means(hsub))).values;
  fit.scree_eigenvalues = to_std(h_eig);
  const std::size_t k = resolve_k(k_in, h_eig, opt.threshold, h, who);
  SparsityConfig scfg = opt.sparse;
  Vector center0;
  Matrix load0;
  if (sparse) {
    auto s = sparse_subspace(hsub, k, opt.threshold, scfg, nullptr, who);
    center0 = s.center;
    load0 = s.loadings;
  } else {
    auto s = classical_subspace(hsub, k, opt.threshold, who);
    center0 = s.center;
    load0 = s.loadings;
  }
  fit.stage_log.push_back({sparse ? "h-subset sparse pca" : "h-subset pca", h,
                           h_eig.head(static_cast<Eigen::Index>(k)).sum() / h_eig.sum(),
                           "k = " + std::to_string(k)});

  // Stage 3
  std::string note;
  fit.reweight_support = close_to_subspace(x, init.mask, center0, load0, fit.reweight_cutoff, note);
  const Matrix rsub = select_rows(x, fit.reweight_support);
  if (static_cast<std::size_t>(rsub.rows()) <= k)
    throw RankError(std::string(who) + ": reweighted set of " + std::to_string(rsub.rows()) +
                    " observations is too small for k = " + std::to_string(k));
  Vector center1;
  Matrix load1;
  if (sparse) {
    auto s = sparse_subspace(rsub, k, opt.threshold, scfg, nullptr, who);
    center1 = s.center;
    load1 = s.loadings;
  } else {
    auto s = classical_subspace(rsub, k, opt.threshold, who);
    center1 = s.center;
    load1 = s.loadings;
  }
  fit.stage_log.push_back({"reweighting", static_cast<std::size_t>(rsub.rows()), fit.reweight_cutoff, note});

  // Stage 4
  const FinalStage final_stage = opt.final_stage.value_or(sparse ? FinalStage::mad_scale : FinalStage::mcd_rotation);
  Vector center_s;
  Matrix loadings;
  Vector eigenvalues;
  Matrix stage3 = load1;
  if (final_stage == FinalStage::mcd_rotation) {
    const Matrix scores = (x.rowwise() - center1.transpose()) * load1;
    const MCDResult m = mcd(DataMatrix(scores), h, seed, opt.mcd);
    const auto eig = eigen_descending(m.scatter);
    if (count_positive(eig.values) < k)
      throw RankError(std::string(who) + ": robust scatter of the scores is rank deficient");
    center_s = center1 + load1 * m.center;
    loadings = load1 * eig.vectors;
    eigenvalues = eig.values;
    fit.stage_log.push_back({"mcd", h, m.log_det, "log-determinant of the score scatter"});
  } else {
    const Matrix scores = (rsub.rowwise() - center1.transpose()) * load1;
    auto [eig, loc] = robust_score_scale(scores, fit.stage_log);
    std::vector<Eigen::Index> order(k);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return eig(a) > eig(b); });
    loadings.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k));
    stage3.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k));
    eigenvalues.resize(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
      loadings.col(static_cast<Eigen::Index>(j)) = load1.col(order[j]);
      stage3.col(static_cast<Eigen::Index>(j)) = load1.col(order[j]);
      eigenvalues(static_cast<Eigen::Index>(j)) = eig(order[j]);
    }
    center_s = center1 + load1 * loc;
    fit.stage_log.push_back({"robust-scale", static_cast<std::size_t>(rsub.rows()), eigenvalues.sum(),
                             "squared MAD of scores"});
  }
  apply_sign_rule(loadings);
  fit.stage3_loadings = stage3;
  fit.model = to_model(xs, center_s, std::move(loadings), std::move(eigenvalues), h_eig.sum(),
                       sparse ? PcaMethod::rospca : PcaMethod::robpca);
  return fit;
}

} // namespace detail

inline RobustFit robpca_fit(const StandardizedMatrix& xs, std::optional<std::size_t> k, std::size_t h,
                            std::uint64_t seed, const RobustOptions& opt = {})
{
  return detail::robust_fit(xs, k, h, seed, opt, false);
}

inline RobustFit rospca_fit(const StandardizedMatrix& xs, std::optional<std::size_t> k, double lambda,
                            std::size_t h, std::uint64_t seed, RobustOptions opt = {})
{
  opt.sparse.lambda = lambda;
  return detail::robust_fit(xs, k, h, seed, opt, true);
}

} // namespace rospca
