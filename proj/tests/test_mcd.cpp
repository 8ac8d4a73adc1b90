#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "rospca/mcd.hpp"
#include "test_support.hpp"

using namespace rospca;
namespace ts = testing_support;

namespace {

Matrix cluster_with_far_points(Rng& rng)
{
  Matrix x(13, 2);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = 0.1 * rng.normal();
    x(i, 1) = 0.1 * rng.normal();
  }
  x.row(10) << 10.0, 10.0;
  x.row(11) << -9.0, 12.0;
  x.row(12) << 11.0, -8.0;
  return x;
}

void expect_result_invariants(const MCDResult& r, std::size_t n, std::size_t h)
{
  EXPECT_EQ(r.h, h);
  EXPECT_EQ(r.support.size(), n);
  EXPECT_EQ(static_cast<std::size_t>(std::count(r.support.begin(), r.support.end(), true)), h);
  EXPECT_LT((r.scatter - r.scatter.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(r.scatter);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10 * eig.eigenvalues().maxCoeff());
}

} // namespace

TEST(McdExact, FullSubsetIsClassical)
{
  Rng rng(1);
  const Matrix x = ts::random_normal(rng, 12, 3);
  const auto r = mcd_exact(DataMatrix(x), 12);
  EXPECT_LT((r.center - x.colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((r.scatter - ts::loop_covariance(x)).cwiseAbs().maxCoeff(), 1e-12);
  const auto f = mcd(DataMatrix(x), 12, 5);
  EXPECT_LT((f.center - r.center).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((f.scatter - r.scatter).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(McdExact, ExcludesDistantPoints)
{
  Rng rng(2);
  const Matrix x = cluster_with_far_points(rng);
  const auto r = mcd_exact(DataMatrix(x), 10);
  expect_result_invariants(r, 13, 10);
  for (int i = 0; i < 10; ++i)
    EXPECT_TRUE(r.support[static_cast<std::size_t>(i)]);
  const auto brute = ts::brute_mcd(x, 10);
  EXPECT_NEAR(r.det_objective, brute.det, 1e-10 * brute.det);
  EXPECT_EQ(r.support_indices(), brute.support);
}

TEST(McdExact, DuplicatedPointsNoWorseThanHandPickedHalf)
{
  Rng rng(3);
  const Matrix base = ts::random_normal(rng, 7, 2);
  Matrix x(14, 2);
  x << base, base;
  const auto r = mcd_exact(DataMatrix(x), 7);
  const auto hand = ts::gauss_det(ts::loop_covariance(base));
  EXPECT_LE(r.det_objective, hand * (1 + 1e-12));
  EXPECT_NEAR(r.det_objective, ts::brute_mcd(x, 7).det, 1e-10 * hand);
}

TEST(McdExact, Errors)
{
  Rng rng(4);
  EXPECT_THROW(mcd_exact(DataMatrix(ts::random_normal(rng, 30, 2)), 15), SizeLimit);
  EXPECT_THROW(mcd_exact(DataMatrix(ts::random_normal(rng, 10, 2)), 4), ValidationError);
  EXPECT_THROW(mcd_exact(DataMatrix(ts::random_normal(rng, 5, 3)), 3), ValidationError);
  Matrix line(8, 2);
  for (int i = 0; i < 8; ++i)
    line.row(i) << i, 2.0 * i;
  EXPECT_THROW(mcd_exact(DataMatrix(line), 5), SingularMatrix);
}

TEST(Mcd, DeterministicForSeed)
{
  Rng rng(5);
  const Matrix x = ts::random_normal(rng, 200, 3);
  const auto a = mcd(DataMatrix(x), 100, 42);
  const auto b = mcd(DataMatrix(x), 100, 42);
  EXPECT_EQ(a.support, b.support);
  EXPECT_TRUE(a.center == b.center);
  EXPECT_TRUE(a.scatter == b.scatter);
  EXPECT_EQ(a.log_det, b.log_det);
  expect_result_invariants(a, 200, 100);
}

TEST(Mcd, IndependentOfThreadCount)
{
  Rng rng(6);
  const Matrix x = ts::random_normal(rng, 150, 2);
  setenv("ROSPCA_KIT_THREADS", "1", 1);
  const auto a = mcd(DataMatrix(x), 80, 9);
  setenv("ROSPCA_KIT_THREADS", "4", 1);
  const auto b = mcd(DataMatrix(x), 80, 9);
  unsetenv("ROSPCA_KIT_THREADS");
  EXPECT_EQ(a.support, b.support);
  EXPECT_TRUE(a.scatter == b.scatter);
}

TEST(Mcd, MatchesExactOnSmallInstances)
{
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index n = 8 + static_cast<Eigen::Index>(rng.index(9));
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.index(3));
    const Matrix x = ts::random_normal(rng, n, p);
    const std::size_t h = default_h(static_cast<std::size_t>(n)) + rng.index(3);
    const auto fast = mcd(DataMatrix(x), h, static_cast<std::uint64_t>(t));
    const auto brute = ts::brute_mcd(x, h);
    EXPECT_NEAR(fast.det_objective, brute.det, 1e-8 * brute.det) << "trial " << t;
  }
}

TEST(Mcd, ResistsShiftContamination)
{
  Rng rng(8);
  Matrix x = ts::random_normal(rng, 500, 2);
  for (int i = 0; i < 150; ++i)
    x.row(i) += Eigen::RowVector2d(8.0, 8.0);
  const auto r = mcd(DataMatrix(x), 250, 1);
  const Vector clean_mean = x.bottomRows(350).colwise().mean().transpose();
  EXPECT_LT((r.center - clean_mean).norm(), 0.2);
  EXPECT_GE((x.colwise().mean().transpose() - clean_mean).norm(), 1.0);
  for (int i = 0; i < 150; ++i)
    EXPECT_FALSE(r.support[static_cast<std::size_t>(i)]);
}

TEST(Mcd, CStepNeverIncreasesDeterminant)
{
  Rng rng(9);
  for (int t = 0; t < 30; ++t) {
    Matrix x = ts::random_normal(rng, 60, 3);
    x.topRows(15).array() += 4.0 * rng.uniform();
    const std::size_t h = 35;
    auto idx = rng.sample(60, h);
    std::sort(idx.begin(), idx.end());
    double prev = INFINITY;
    for (int step = 0; step < 15; ++step) {
      const Matrix sub = select_rows(x, idx);
      const Matrix cov = ts::loop_covariance(sub);
      const double det = ts::gauss_det(cov);
      EXPECT_LE(det, prev * (1 + 1e-12)) << "trial " << t << " step " << step;
      prev = det;
      idx = c_step(x, sub.colwise().mean().transpose(), cov, h);
    }
  }
}

TEST(Mcd, AffineEquivariance)
{
  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    Matrix x = ts::random_normal(rng, 80, 3);
    x.topRows(20).array() += 6.0;
    Matrix a = ts::random_normal(rng, 3, 3) + 2.0 * Matrix::Identity(3, 3);
    const Vector b = ts::random_normal(rng, 3, 1);
    const Matrix y = (x * a.transpose()).rowwise() + b.transpose();
    const auto rx = mcd(DataMatrix(x), 45, 77);
    const auto ry = mcd(DataMatrix(y), 45, 77);
    EXPECT_EQ(rx.support, ry.support);
    const Vector c = a * rx.center + b;
    const Matrix s = a * rx.scatter * a.transpose();
    EXPECT_LT((ry.center - c).norm(), 1e-6 * (1 + c.norm()));
    EXPECT_LT((ry.scatter - s).norm(), 1e-6 * s.norm());
  }
}

TEST(Mcd, ConsistencyFactorScalesScatter)
{
  Rng rng(11);
  const Matrix x = ts::random_normal(rng, 2000, 2);
  MCDOptions opt;
  opt.consistency_factor = true;
  const auto r = mcd(DataMatrix(x), 1000, 3, opt);
  EXPECT_NEAR(r.scatter(0, 0), 1.0, 0.15);
  EXPECT_NEAR(r.scatter(1, 1), 1.0, 0.15);
  const auto raw = mcd(DataMatrix(x), 1000, 3);
  EXPECT_LT(raw.scatter(0, 0), 0.6);
}

TEST(Mahalanobis, Examples)
{
  const Vector c = Eigen::Vector3d(1, 2, 3);
  EXPECT_EQ(mahalanobis_sq(c, c, Matrix::Identity(3, 3)), 0.0);
  const Vector x = Eigen::Vector3d(2, 0, 5);
  EXPECT_NEAR(mahalanobis_sq(x, c, Matrix::Identity(3, 3)), 9.0, 1e-12);
  EXPECT_NEAR(mahalanobis_sq(x, c, 4.0 * Matrix::Identity(3, 3)), 9.0 / 4.0, 1e-12);
  Matrix sing = Matrix::Ones(3, 3);
  EXPECT_THROW(mahalanobis_sq(x, c, sing), SingularMatrix);
}

TEST(ToleranceEllipse, IdentityIsCircle)
{
  const auto e = tolerance_ellipse(Eigen::Vector2d(1, -1), Eigen::Matrix2d::Identity(), 0.995);
  const double r = std::sqrt(-2.0 * std::log(0.005));
  EXPECT_NEAR(e.axis_lengths(0), r, 1e-9);
  EXPECT_NEAR(e.axis_lengths(1), r, 1e-9);
  for (const auto& v : ellipse_boundary(e))
    EXPECT_NEAR((v - e.center).norm(), r, 1e-9);
}

TEST(ToleranceEllipse, DiagonalAxes)
{
  Eigen::Matrix2d s;
  s << 4, 0, 0, 1;
  const auto e = tolerance_ellipse(Eigen::Vector2d::Zero(), s, 0.9);
  EXPECT_NEAR(e.axis_lengths(0) / e.axis_lengths(1), 2.0, 1e-12);
  EXPECT_NEAR(e.rotation, 0.0, 1e-12);
  EXPECT_GE(e.axis_lengths(0), e.axis_lengths(1));
}

TEST(ToleranceEllipse, BoundaryOnCutoff)
{
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = ts::random_normal(rng, 2, 2);
    const Eigen::Matrix2d s = a * a.transpose() + 0.1 * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d c(rng.normal(), rng.normal());
    const auto e = tolerance_ellipse(c, s, 0.995);
    EXPECT_GE(e.rotation, -std::numbers::pi / 2);
    EXPECT_LT(e.rotation, std::numbers::pi / 2);
    EXPECT_GE(e.axis_lengths(0), e.axis_lengths(1));
    for (const auto& v : ellipse_boundary(e))
      EXPECT_NEAR(mahalanobis_sq(v, c, s), e.cutoff, 1e-9 * e.cutoff);
  }
}

TEST(ToleranceEllipse, SingularScatter)
{
  Eigen::Matrix2d s;
  s << 1, 1, 1, 1;
  EXPECT_THROW(tolerance_ellipse(Eigen::Vector2d::Zero(), s, 0.99), SingularMatrix);
}
