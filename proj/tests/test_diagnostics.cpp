#include <algorithm>
#include <cmath>
#include <regex>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "rospca/diagnostics.hpp"
#include "rospca/robust_pca.hpp"
#include "test_support.hpp"

using namespace rospca;
namespace ts = testing_support;

namespace {

std::size_t count_occurrences(const std::string& s, const std::string& needle)
{
  std::size_t c = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1))
    ++c;
  return c;
}

double type7(std::vector<double> v, double q)
{
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Upper whisker recomputed from its definition with the brute-force medcouple.
double oracle_upper(const std::vector<double>& v)
{
  const double q1 = type7(v, 0.25), q3 = type7(v, 0.75), mc = ts::brute_medcouple(v);
  return q3 + 1.5 * std::exp((mc >= 0 ? 3.0 : 4.0) * mc) * (q3 - q1);
}

Vector to_vector(const std::vector<double>& v)
{
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

TEST(ScoreDistances, Examples)
{
  Matrix t(2, 1);
  t << 0, 2;
  const Vector sd = score_distances(t, Vector::Constant(1, 4.0));
  EXPECT_EQ(sd(0), 0.0);
  EXPECT_EQ(sd(1), 1.0);
  Rng rng(1);
  const Matrix s = ts::random_normal(rng, 20, 3);
  const Vector ev = Eigen::Vector3d(5, 2, 0.5);
  const Vector a = score_distances(s, ev), b = score_distances(s, 9.0 * ev);
  EXPECT_LT((b - a / 3.0).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(score_distances(s, Eigen::Vector3d(1, 0, 1)), DomainError);
  EXPECT_THROW(score_distances(s, Eigen::Vector2d(1, 1)), DimensionMismatch);
}

TEST(OrthogonalDistances, Geometry)
{
  Rng rng(2);
  const Matrix x = ts::random_normal(rng, 50, 4) * ts::random_normal(rng, 4, 4);
  const auto m = cpca_fit(StandardizedMatrix::identity(x), 2);
  const Matrix full = Eigen::HouseholderQR<Matrix>(m.loadings).householderQ();
  const Vector u = full.col(3);
  Matrix probe(3, 4);
  probe.row(0) = (m.center + 2.5 * m.loadings.col(0) - 1.5 * m.loadings.col(1)).transpose();
  probe.row(1) = (m.center + 3.0 * u).transpose();
  probe.row(2) = (m.center - 0.7 * u + 4.0 * m.loadings.col(1)).transpose();
  const Vector od = orthogonal_distances(probe, m);
  EXPECT_NEAR(od(0), 0.0, 1e-9);
  EXPECT_NEAR(od(1), 3.0, 1e-9);
  EXPECT_NEAR(od(2), 0.7, 1e-9);
  const auto f = cpca_fit(StandardizedMatrix::identity(x), 4);
  EXPECT_LT(orthogonal_distances(x, f).maxCoeff(), 1e-9);
  EXPECT_THROW(orthogonal_distances(Matrix::Zero(2, 3), m), DimensionMismatch);
}

TEST(DistanceCutoffs, SymmetricAndSkewed)
{
  const std::vector<double> sym{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto c = distance_cutoffs(to_vector(sym), to_vector(sym));
  EXPECT_EQ(c.sd, type7(sym, 0.75) + 1.5 * (type7(sym, 0.75) - type7(sym, 0.25)));
  ASSERT_TRUE(c.od.has_value());
  EXPECT_EQ(*c.od, c.sd);

  const std::vector<double> skew{0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.7, 1.0, 1.6, 2.5, 4.0};
  const auto s = distance_cutoffs(to_vector(skew), to_vector(skew));
  EXPECT_GT(s.sd, type7(skew, 0.75) + 1.5 * (type7(skew, 0.75) - type7(skew, 0.25)));
  EXPECT_NEAR(s.sd, oracle_upper(skew), 1e-12);
}

TEST(DistanceCutoffs, OneEnormousDistanceHasBoundedEffect)
{
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(20 + rng.index(60));
    for (auto& x : v)
      x = std::abs(rng.normal()) + 0.1 * rng.uniform();
    const double base = distance_cutoffs(to_vector(v), to_vector(v)).sd;
    double lo = INFINITY, hi = -INFINITY;
    for (double big : {1e2, 1e4, 1e8, 1e12}) {
      auto w = v;
      w.push_back(big);
      const double c = distance_cutoffs(to_vector(w), to_vector(w)).sd;
      EXPECT_NEAR(c, oracle_upper(w), 1e-9 * c) << "trial " << t;
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    EXPECT_LT(hi, 3.0 * base) << "trial " << t;
    EXPECT_LT(hi - lo, 0.25 * base) << "trial " << t;
  }
}

TEST(Classify, RulesAndBoundaries)
{
  const Cutoffs c{2.0, 3.0};
  const Vector sd = Eigen::Vector4d(0, 5, 1, 5), od = Eigen::Vector4d(0, 1, 9, 9);
  const auto l = classify(sd, od, c);
  EXPECT_EQ(l[0], Label::regular);
  EXPECT_EQ(l[1], Label::good_leverage);
  EXPECT_EQ(l[2], Label::orthogonal_outlier);
  EXPECT_EQ(l[3], Label::bad_leverage);
  const auto eq = classify(Eigen::Vector2d(2, 2), Eigen::Vector2d(3, 3), c);
  EXPECT_EQ(eq[0], Label::regular);
  const auto no_od = classify(Eigen::Vector2d(1, 9), Eigen::Vector2d(1e9, 1e9), Cutoffs{2.0, std::nullopt});
  EXPECT_EQ(no_od[0], Label::regular);
  EXPECT_EQ(no_od[1], Label::good_leverage);
}

TEST(Diagnose, PlantedGeometry)
{
  Rng rng(4);
  Matrix x(202, 3);
  x.topRows(200) = ts::random_normal(rng, 200, 3) * Eigen::Vector3d(3, 2, 0.1).asDiagonal();
  const auto m = cpca_fit(StandardizedMatrix::identity(Matrix(x.topRows(200))), 2);
  x.row(200) = (m.center + 20.0 * m.loadings.col(0)).transpose();
  x.row(201) = (m.center + 5.0 * Vector(Eigen::Vector3d(0, 0, 1))).transpose();
  const auto r = diagnose(x, m);
  EXPECT_NEAR(r.sd(200), 20.0 / std::sqrt(m.eigenvalues(0)), 1e-9);
  EXPECT_NEAR(r.od(200), 0.0, 1e-9);
  const double along3 = m.loadings.col(0)(2), along3b = m.loadings.col(1)(2);
  EXPECT_NEAR(r.od(201), 5.0 * std::sqrt(1.0 - along3 * along3 - along3b * along3b), 1e-9);
  EXPECT_EQ(r.labels[200], Label::good_leverage);
  EXPECT_EQ(r.labels[201], Label::orthogonal_outlier);
  EXPECT_EQ(r.labels.size(), 202u);
  const auto again = diagnose(x, m);
  EXPECT_EQ(r.labels, again.labels);
}

TEST(Diagnose, FullRankModelSuppressesOdLabels)
{
  Rng rng(5);
  const Matrix x = ts::random_normal(rng, 40, 3);
  const auto m = cpca_fit(StandardizedMatrix::identity(x), 3);
  const auto r = diagnose(x, m);
  EXPECT_LT(r.od.maxCoeff(), 1e-9);
  EXPECT_FALSE(r.cutoffs.od.has_value());
  ASSERT_EQ(r.warnings.size(), 1u);
  for (auto l : r.labels)
    EXPECT_TRUE(l == Label::regular || l == Label::good_leverage);
}

TEST(Diagnose, GeneratorPlantsBadLeverageForTrueModel)
{
  const auto fam = ts::low_rank_family(32);
  const auto truth = cpca_fit(StandardizedMatrix::identity(fam.clean), 2);
  const auto ref = diagnose(fam.clean, truth);
  ASSERT_TRUE(ref.cutoffs.od.has_value());
  const Vector sd = score_distances(project(fam.data, truth), truth.eigenvalues);
  const Vector od = orthogonal_distances(fam.data, truth);
  const auto labels = classify(sd, od, ref.cutoffs);
  for (auto i : fam.planted)
    EXPECT_EQ(labels[i], Label::bad_leverage) << "row " << i;
}

// 10% contamination: inside the range where whole-sample adjusted-boxplot
// cutoffs still separate the planted rows.
TEST(Diagnose, MaskingUnderClassicalFit)
{
  for (std::uint64_t seed : {32u, 33u, 34u}) {
    const auto fam = ts::low_rank_family(seed, 300, 6, 2, 0.10);
    const auto xs = StandardizedMatrix::identity(fam.data);
    const auto classical = diagnose(fam.data, cpca_fit(xs, 2));
    const auto robust = diagnose(fam.data, robpca_fit(xs, 2, 150, seed).model);
    std::size_t masked = 0;
    for (auto i : fam.planted) {
      EXPECT_EQ(robust.labels[i], Label::bad_leverage) << "seed " << seed << " row " << i;
      masked += classical.labels[i] == Label::regular || classical.labels[i] == Label::good_leverage;
    }
    EXPECT_GE(masked, 1u) << "seed " << seed;
  }
}

TEST(EmitPlot, DiagnosticStructureAndDeterminism)
{
  DiagnosticPayload p;
  p.report.sd = Eigen::Vector4d(0.5, 1.0, 1.5, 0.2);
  p.report.od = Eigen::Vector4d(0.1, 0.3, 0.2, 0.4);
  p.report.cutoffs = {3.0, 2.0};
  p.report.labels.assign(4, Label::regular);
  p.report.k = 2;
  const auto a = emit_plot(PlotKind::diagnostic, p);
  const auto b = emit_plot(PlotKind::diagnostic, p);
  EXPECT_EQ(a.json, b.json);
  EXPECT_EQ(a.svg, b.svg);
  EXPECT_EQ(count_occurrences(a.svg, "class=\"cutoff\""), 2u);
  EXPECT_EQ(count_occurrences(a.svg, "<text"), 0u);
  EXPECT_NE(a.svg.find("width=\"800\""), std::string::npos);
  EXPECT_NE(a.svg.find("height=\"600\""), std::string::npos);

  const auto j = nlohmann::json::parse(a.json);
  EXPECT_EQ(j["kind"], "diagnostic");
  EXPECT_EQ(j["series"][0]["points"].size(), 4u);
  EXPECT_EQ(j["cutoffs"]["sd"], 3.0);
  EXPECT_EQ(j["cutoffs"]["od"], 2.0);
  EXPECT_EQ(j["labels"].size(), 4u);

  p.report.labels[1] = Label::bad_leverage;
  p.ids = {"a", "b&c", "d", "e"};
  const auto c = emit_plot(PlotKind::diagnostic, p);
  EXPECT_EQ(count_occurrences(c.svg, "class=\"obs-label\""), 1u);
  EXPECT_NE(c.svg.find("b&amp;c"), std::string::npos);
  EXPECT_THROW(emit_plot(PlotKind::scree, p), ValidationError);
}

TEST(EmitPlot, EllipseIdentityScatterIsCircle)
{
  EllipsePayload p;
  p.points = Matrix::Zero(3, 2);
  p.points << 0, 0, 1, 0, 0, 5;
  const auto e = tolerance_ellipse(Eigen::Vector2d(0.5, -0.5), Eigen::Matrix2d::Identity(), 0.995);
  p.ellipses = {{"mcd", e}};
  p.labels = {"inside", "inside", "outside"};
  const auto d = emit_plot(PlotKind::ellipse_scatter, p);
  const auto j = nlohmann::json::parse(d.json);
  ASSERT_EQ(j["series"].size(), 2u);
  const auto& poly = j["series"][1]["points"];
  ASSERT_EQ(poly.size(), 128u);
  for (const auto& v : poly)
    EXPECT_NEAR(std::hypot(v[0].get<double>() - 0.5, v[1].get<double>() + 0.5), std::sqrt(e.cutoff), 1e-6);
  EXPECT_EQ(count_occurrences(d.svg, "class=\"ellipse\""), 1u);
  EXPECT_EQ(count_occurrences(d.svg, "class=\"obs-label\""), 1u);
  EXPECT_EQ(emit_plot(PlotKind::ellipse_scatter, p).svg, d.svg);
}

TEST(EmitPlot, ScreeSeries)
{
  const auto d = emit_plot(PlotKind::scree, ScreePayload{{4, 3, 2, 1}});
  const auto j = nlohmann::json::parse(d.json);
  EXPECT_EQ(j["kind"], "scree");
  EXPECT_EQ(j["series"][1]["points"][1][1], 0.7);
  EXPECT_THROW(emit_plot(PlotKind::scree, ScreePayload{}), ValidationError);
}
