#pragma once

/// Univariate robust statistics: median, MAD, type-7 quantiles, the
/// medcouple skewness measure, adjusted-boxplot fences and chi-squared
/// quantiles. All functions are pure.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include <Eigen/Dense>

#include "errors.hpp"

namespace rospca {

/// Non-empty list of finite reals.
class Sample
{
public:
  Sample(std::vector<double> values) : values_(std::move(values)) { validate(); }
  Sample(std::initializer_list<double> values) : values_(values) { validate(); }
  explicit Sample(std::span<const double> values) : values_(values.begin(), values.end()) { validate(); }
  explicit Sample(const Eigen::VectorXd& v) : values_(v.data(), v.data() + v.size()) { validate(); }

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  std::vector<double> sorted() const
  {
    std::vector<double> s = values_;
    std::sort(s.begin(), s.end());
    return s;
  }

private:
  void validate() const
  {
    if (values_.empty())
      throw ValidationError("Sample: empty");
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i]))
        throw ValidationError("Sample: non-finite value at position " + std::to_string(i));
  }

  std::vector<double> values_;
};

/// [lower, upper] whiskers of the adjusted boxplot with the quantities
/// used to build them.
struct Fences
{
  double lower = 0.0;
  double upper = 0.0;
  double medcouple = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

/// Exponents of the adjusted boxplot whiskers. For MC >= 0 the fences are
/// [Q1 - w e^{lower_exp MC} IQR, Q3 + w e^{upper_exp MC} IQR]; for MC < 0 the
/// exponents swap role and sign.
struct AdjustedBoxplotConstants
{
  double whisker = 1.5;
  double lower_exp = -4.0;
  double upper_exp = 3.0;
};

enum class MedcoupleMethod
{
  pairwise,  ///< all-pairs kernel median, O(n^2) memory and time
  fast,      ///< sorted-matrix selection, O(n log n)
  automatic  ///< pairwise up to 5000 values, fast above
};

namespace detail {

/// Median of an unsorted buffer; reorders it.
inline double median_inplace(std::vector<double>& v)
{
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (n % 2 == 1)
    return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

/// Raw MAD around a known center; reorders nothing in `v`.
inline double mad_around(const std::vector<double>& v, double center)
{
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    dev[i] = std::abs(v[i] - center);
  return median_inplace(dev);
}

inline double quantile_sorted(const std::vector<double>& s, double prob)
{
  const std::size_t n = s.size();
  if (n == 1)
    return s[0];
  const double pos = prob * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + frac * (s[hi] - s[lo]);
}

/// Medcouple kernel laid out as a p x q matrix that is non-increasing along
/// rows and columns. Row i holds plus_[i] (values >= median, descending),
/// column j holds minus_[j] (values <= median, descending). The block where
/// both entries sit exactly on the median uses the rank convention
/// sign((k - 1) - i' - j') for the k tied values.
class MedcoupleKernel
{
public:
  explicit MedcoupleKernel(const std::vector<double>& values)
  {
    std::vector<double> s = values;
    std::sort(s.begin(), s.end(), std::greater<>());
    const std::size_t n = s.size();
    const double med = (n % 2 == 1) ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
    for (double x : s) {
      const double z = x - med;
      if (z >= 0.0)
        plus_.push_back(z);
      if (z <= 0.0)
        minus_.push_back(z);
      if (z == 0.0)
        ++ties_;
    }
  }

  std::size_t rows() const { return plus_.size(); }
  std::size_t cols() const { return minus_.size(); }

  double operator()(std::size_t i, std::size_t j) const
  {
    const double a = plus_[i];
    const double b = minus_[j];
    if (a == 0.0 && b == 0.0) {
      const auto ti = static_cast<long long>(i - (plus_.size() - ties_));
      const auto tj = static_cast<long long>(j);
      const long long s = static_cast<long long>(ties_) - 1 - ti - tj;
      return s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
    }
    return (a + b) / (a - b);
  }

private:
  std::vector<double> plus_;
  std::vector<double> minus_;
  std::size_t ties_ = 0;
};

inline double medcouple_pairwise(const MedcoupleKernel& h)
{
  std::vector<double> all;
  all.reserve(h.rows() * h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j)
      all.push_back(h(i, j));
  return median_inplace(all);
}

/// Element of descending rank `rank` (0-based) in the sorted kernel matrix,
/// by weighted-median bracketing of the row candidates.
inline double kernel_kth_largest(const MedcoupleKernel& h, std::size_t rank)
{
  const std::size_t p = h.rows();
  const std::size_t q = h.cols();
  // Candidates in row i are columns [left[i], right[i]).
  std::vector<std::size_t> left(p, 0), right(p, q), gt(p), ge(p);
  std::vector<std::pair<double, std::size_t>> mids;

  for (;;) {
    std::size_t candidates = 0, before = 0;
    for (std::size_t i = 0; i < p; ++i) {
      candidates += right[i] - left[i];
      before += left[i];
    }
    if (candidates <= std::max<std::size_t>(p, 32)) {
      std::vector<double> rest;
      rest.reserve(candidates);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = left[i]; j < right[i]; ++j)
          rest.push_back(h(i, j));
      std::sort(rest.begin(), rest.end(), std::greater<>());
      return rest.at(rank - before);
    }

    mids.clear();
    std::size_t total = 0;
    for (std::size_t i = 0; i < p; ++i) {
      if (right[i] > left[i]) {
        const std::size_t w = right[i] - left[i];
        mids.emplace_back(h(i, left[i] + (w - 1) / 2), w);
        total += w;
      }
    }
    std::sort(mids.begin(), mids.end());
    double trial = mids.back().first;
    std::size_t acc = 0;
    for (const auto& [value, w] : mids) {
      acc += w;
      if (2 * acc >= total) {
        trial = value;
        break;
      }
    }

    // Staircase counts of entries > trial and >= trial per row.
    std::size_t sum_gt = 0, sum_ge = 0;
    std::size_t j_gt = q, j_ge = q;
    for (std::size_t i = 0; i < p; ++i) {
      while (j_gt > 0 && !(h(i, j_gt - 1) > trial))
        --j_gt;
      while (j_ge > 0 && !(h(i, j_ge - 1) >= trial))
        --j_ge;
      gt[i] = j_gt;
      ge[i] = j_ge;
      sum_gt += j_gt;
      sum_ge += j_ge;
    }

    if (rank < sum_gt) {
      for (std::size_t i = 0; i < p; ++i)
        right[i] = std::min(right[i], gt[i]);
    } else if (rank >= sum_ge) {
      for (std::size_t i = 0; i < p; ++i)
        left[i] = std::max(left[i], ge[i]);
    } else {
      return trial;
    }
  }
}

inline double medcouple_fast(const MedcoupleKernel& h)
{
  const std::size_t total = h.rows() * h.cols();
  if (total % 2 == 1)
    return kernel_kth_largest(h, total / 2);
  const double a = kernel_kth_largest(h, total / 2 - 1);
  const double b = kernel_kth_largest(h, total / 2);
  return 0.5 * (a + b);
}

} // namespace detail

inline double median(const Sample& s)
{
  std::vector<double> v = s.values();
  return detail::median_inplace(v);
}

/// Median absolute deviation from the median. `consistent` multiplies by
/// 1.4826 so the result estimates the standard deviation at the normal.
inline double mad(const Sample& s, bool consistent = false)
{
  const double raw = detail::mad_around(s.values(), median(s));
  return consistent ? 1.4826 * raw : raw;
}

/// Linear interpolation between order statistics (type 7).
inline double quantile(const Sample& s, double prob)
{
  if (!(prob >= 0.0 && prob <= 1.0))
    throw DomainError("quantile: probability " + std::to_string(prob) + " outside [0, 1]");
  return detail::quantile_sorted(s.sorted(), prob);
}

inline double medcouple(const Sample& s, MedcoupleMethod method = MedcoupleMethod::automatic)
{
  if (s.size() < 3)
    throw DegenerateSample("medcouple: needs at least 3 values, got " + std::to_string(s.size()));
  const auto [mn, mx] = std::minmax_element(s.values().begin(), s.values().end());
  if (*mn == *mx)
    throw DegenerateSample("medcouple: all values are equal");

  const detail::MedcoupleKernel kernel(s.values());
  if (method == MedcoupleMethod::automatic)
    method = s.size() <= 5000 ? MedcoupleMethod::pairwise : MedcoupleMethod::fast;
  return method == MedcoupleMethod::pairwise ? detail::medcouple_pairwise(kernel)
                                             : detail::medcouple_fast(kernel);
}

/// Fences from quartiles, IQR and a given medcouple value.
inline Fences adjusted_fences_from(double q1, double q3, double mc,
                                   const AdjustedBoxplotConstants& c = {})
{
  const double iqr = q3 - q1;
  Fences f;
  f.q1 = q1;
  f.q3 = q3;
  f.medcouple = mc;
  if (mc >= 0.0) {
    f.lower = q1 - c.whisker * std::exp(c.lower_exp * mc) * iqr;
    f.upper = q3 + c.whisker * std::exp(c.upper_exp * mc) * iqr;
  } else {
    f.lower = q1 - c.whisker * std::exp(-c.upper_exp * mc) * iqr;
    f.upper = q3 + c.whisker * std::exp(-c.lower_exp * mc) * iqr;
  }
  return f;
}

/// Skewness-adjusted boxplot whiskers.
inline Fences adjusted_fences(const Sample& s, const AdjustedBoxplotConstants& c = {})
{
  if (s.size() < 4)
    throw DegenerateSample("adjusted_fences: needs at least 4 values, got " + std::to_string(s.size()));
  const std::vector<double> sorted = s.sorted();
  const double q1 = detail::quantile_sorted(sorted, 0.25);
  const double q3 = detail::quantile_sorted(sorted, 0.75);
  if (!(q3 - q1 > 0.0))
    throw DegenerateSample("adjusted_fences: interquartile range is zero");
  return adjusted_fences_from(q1, q3, medcouple(s), c);
}

/// Inverse CDF of the chi-squared distribution.
inline double chi2_quantile(int df, double p)
{
  if (df < 1)
    throw DomainError("chi2_quantile: degrees of freedom must be positive, got " + std::to_string(df));
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("chi2_quantile: probability " + std::to_string(p) + " outside (0, 1)");
  const boost::math::chi_squared_distribution<double> dist(static_cast<double>(df));
  return boost::math::quantile(dist, p);
}

} // namespace rospca
