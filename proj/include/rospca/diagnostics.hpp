#pragma once

/// Score and orthogonal distances, adjusted-boxplot cutoffs, the four-way
/// outlier map and plot emission (JSON series plus a fixed-layout SVG).

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "core_stats.hpp"
#include "data_matrix.hpp"
#include "errors.hpp"
#include "mcd.hpp"
#include "pca_core.hpp"

namespace rospca {

enum class Label
{
  regular,
  orthogonal_outlier,
  good_leverage,
  bad_leverage
};

inline std::string to_string(Label l)
{
  switch (l) {
  case Label::regular: return "regular";
  case Label::orthogonal_outlier: return "orthogonal_outlier";
  case Label::good_leverage: return "good_leverage";
  case Label::bad_leverage: return "bad_leverage";
  }
  return "regular";
}

struct Cutoffs
{
  double sd = 0.0;
  std::optional<double> od; ///< absent when the orthogonal distances are degenerate
};

struct DiagnosticReport
{
  Vector sd;
  Vector od;
  Cutoffs cutoffs;
  std::vector<Label> labels;
  PcaMethod method = PcaMethod::cpca;
  std::size_t k = 0;
  std::vector<std::string> warnings;
};

/// sd_i = sqrt(sum_j t_ij^2 / lambda_j).
inline Vector score_distances(const Matrix& scores, const Vector& eigenvalues)
{
  if (scores.cols() != eigenvalues.size())
    throw DimensionMismatch("score_distances: " + std::to_string(scores.cols()) + " score columns, " +
                            std::to_string(eigenvalues.size()) + " eigenvalues");
  for (Eigen::Index j = 0; j < eigenvalues.size(); ++j)
    if (!(eigenvalues(j) > 0.0))
      throw DomainError("score_distances: eigenvalue " + std::to_string(j + 1) + " is not positive");
  return (scores.array().square().rowwise() / eigenvalues.transpose().array()).rowwise().sum().sqrt();
}

/// Distances to the model subspace, in the model's standardized coordinates.
/// A full-rank model spans everything, so its distances are exactly zero.
inline Vector orthogonal_distances(const Matrix& x, const PCAModel& model)
{
  const Matrix z = model_coordinates(x, model);
  if (model.loadings.cols() == model.loadings.rows())
    return Vector::Zero(x.rows());
  return (z - (z * model.loadings) * model.loadings.transpose()).rowwise().norm();
}

inline Vector orthogonal_distances(const DataMatrix& x, const PCAModel& model)
{
  return orthogonal_distances(x.values(), model);
}

/// Upper adjusted-boxplot whiskers of both distance samples.
inline Cutoffs distance_cutoffs(const Vector& sd, const Vector& od)
{
  Cutoffs c;
  c.sd = adjusted_fences(Sample(sd)).upper;
  c.od = adjusted_fences(Sample(od)).upper;
  return c;
}

/// A distance equal to its cutoff does not exceed it. Without an od cutoff
/// every od counts as not exceeding.
inline std::vector<Label> classify(const Vector& sd, const Vector& od, const Cutoffs& c)
{
  if (sd.size() != od.size())
    throw DimensionMismatch("classify: sd and od lengths differ");
  std::vector<Label> out(static_cast<std::size_t>(sd.size()));
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    const bool far_sd = sd(i) > c.sd;
    const bool far_od = c.od && od(i) > *c.od;
    out[static_cast<std::size_t>(i)] = far_sd ? (far_od ? Label::bad_leverage : Label::good_leverage)
                                              : (far_od ? Label::orthogonal_outlier : Label::regular);
  }
  return out;
}

inline DiagnosticReport diagnose(const Matrix& x, const PCAModel& model)
{
  DiagnosticReport r;
  r.method = model.method;
  r.k = model.k;
  r.sd = score_distances(project(x, model), model.eigenvalues);
  r.od = orthogonal_distances(x, model);
  r.cutoffs.sd = adjusted_fences(Sample(r.sd)).upper;
  try {
    r.cutoffs.od = adjusted_fences(Sample(r.od)).upper;
  } catch (const DegenerateSample& e) {
    r.warnings.push_back(std::string("orthogonal distances degenerate, od classification suppressed: ") +
                         e.what());
  }
  r.labels = classify(r.sd, r.od, r.cutoffs);
  return r;
}

inline DiagnosticReport diagnose(const DataMatrix& x, const PCAModel& model) { return diagnose(x.values(), model); }

// ---------------------------------------------------------------------------
// Plot emission

enum class PlotKind
{
  diagnostic,
  scree,
  ellipse_scatter
};

inline std::string to_string(PlotKind k)
{
  switch (k) {
  case PlotKind::diagnostic: return "diagnostic";
  case PlotKind::scree: return "scree";
  case PlotKind::ellipse_scatter: return "ellipse_scatter";
  }
  return "diagnostic";
}

struct DiagnosticPayload
{
  DiagnosticReport report;
  std::vector<std::string> ids; ///< row labels; 1-based row numbers when empty
};

struct ScreePayload
{
  std::vector<double> eigenvalues;
};

struct NamedEllipse
{
  std::string name;
  Ellipse2D ellipse;
};

struct EllipsePayload
{
  Matrix points; ///< n x 2
  std::vector<std::string> ids;
  std::vector<NamedEllipse> ellipses;
  std::vector<std::string> labels; ///< per point, "inside" or "outside"
};

using PlotPayload = std::variant<DiagnosticPayload, ScreePayload, EllipsePayload>;

struct PlotDocuments
{
  std::string json;
  std::string svg;
};

namespace detail {

inline std::string fmt2(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v + 0.0);
  std::string s(buf);
  return s == "-0.00" ? "0.00" : s;
}

inline std::string xml_escape(const std::string& s)
{
  std::string out;
  for (char c : s) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out += c;
    }
  }
  return out;
}

/// Maps data coordinates onto the fixed 800 x 600 canvas.
class Canvas
{
public:
  static constexpr double width = 800.0, height = 600.0, margin = 60.0;

  void include(double x, double y)
  {
    xmin_ = std::min(xmin_, x);
    xmax_ = std::max(xmax_, x);
    ymin_ = std::min(ymin_, y);
    ymax_ = std::max(ymax_, y);
  }

  void finish()
  {
    if (!(xmax_ > xmin_)) {
      xmin_ -= 1.0;
      xmax_ += 1.0;
    }
    if (!(ymax_ > ymin_)) {
      ymin_ -= 1.0;
      ymax_ += 1.0;
    }
    const double px = 0.05 * (xmax_ - xmin_), py = 0.05 * (ymax_ - ymin_);
    xmin_ -= px;
    xmax_ += px;
    ymin_ -= py;
    ymax_ += py;
  }

  double sx(double x) const { return margin + (x - xmin_) / (xmax_ - xmin_) * (width - 2 * margin); }
  double sy(double y) const { return height - margin - (y - ymin_) / (ymax_ - ymin_) * (height - 2 * margin); }
  double xmin() const { return xmin_; }
  double xmax() const { return xmax_; }
  double ymin() const { return ymin_; }
  double ymax() const { return ymax_; }

private:
  double xmin_ = INFINITY, xmax_ = -INFINITY, ymin_ = INFINITY, ymax_ = -INFINITY;
};

inline const char* label_color(const std::string& label)
{
  if (label == "good_leverage") return "#1f77b4";
  if (label == "orthogonal_outlier") return "#ff7f0e";
  if (label == "bad_leverage" || label == "outside") return "#d62728";
  return "#4d4d4d";
}

inline constexpr const char* series_palette[] = {"#2ca02c", "#9467bd", "#8c564b", "#e377c2"};

inline void svg_open(std::ostringstream& os, const std::string& title)
{
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" height=\"600\" "
        "viewBox=\"0 0 800 600\">\n"
     << "<title>" << xml_escape(title) << "</title>\n"
     << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"#ffffff\"/>\n"
     << "<rect class=\"frame\" x=\"" << fmt2(Canvas::margin) << "\" y=\"" << fmt2(Canvas::margin)
     << "\" width=\"" << fmt2(Canvas::width - 2 * Canvas::margin) << "\" height=\""
     << fmt2(Canvas::height - 2 * Canvas::margin) << "\" fill=\"none\" stroke=\"#000000\"/>\n";
}

inline std::string row_id(const std::vector<std::string>& ids, std::size_t i)
{
  return i < ids.size() ? ids[i] : std::to_string(i + 1);
}

inline PlotDocuments emit_diagnostic(const DiagnosticPayload& p)
{
  const auto& r = p.report;
  if (r.sd.size() != r.od.size() || r.labels.size() != static_cast<std::size_t>(r.sd.size()))
    throw ValidationError("emit_plot: diagnostic payload has inconsistent lengths");
  nlohmann::ordered_json j;
  j["kind"] = "diagnostic";
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < r.sd.size(); ++i)
    pts.push_back({r.sd(i), r.od(i)});
  j["series"] = nlohmann::ordered_json::array({{{"name", "observations"}, {"points", pts}}});
  j["cutoffs"]["sd"] = r.cutoffs.sd;
  if (r.cutoffs.od)
    j["cutoffs"]["od"] = *r.cutoffs.od;
  j["labels"] = nlohmann::ordered_json::array();
  for (auto l : r.labels)
    j["labels"].push_back(to_string(l));

  Canvas c;
  for (Eigen::Index i = 0; i < r.sd.size(); ++i)
    c.include(r.sd(i), r.od(i));
  c.include(r.cutoffs.sd, r.od.size() ? r.od.minCoeff() : 0.0);
  if (r.cutoffs.od)
    c.include(r.sd.size() ? r.sd.minCoeff() : 0.0, *r.cutoffs.od);
  c.finish();

  std::ostringstream os;
  svg_open(os, "diagnostic plot: " + to_string(r.method) + ", k = " + std::to_string(r.k));
  os << "<line class=\"cutoff\" x1=\"" << fmt2(c.sx(r.cutoffs.sd)) << "\" y1=\"" << fmt2(c.sy(c.ymin()))
     << "\" x2=\"" << fmt2(c.sx(r.cutoffs.sd)) << "\" y2=\"" << fmt2(c.sy(c.ymax()))
     << "\" stroke=\"#7f7f7f\" stroke-dasharray=\"6 4\"/>\n";
  if (r.cutoffs.od)
    os << "<line class=\"cutoff\" x1=\"" << fmt2(c.sx(c.xmin())) << "\" y1=\"" << fmt2(c.sy(*r.cutoffs.od))
       << "\" x2=\"" << fmt2(c.sx(c.xmax())) << "\" y2=\"" << fmt2(c.sy(*r.cutoffs.od))
       << "\" stroke=\"#7f7f7f\" stroke-dasharray=\"6 4\"/>\n";
  for (Eigen::Index i = 0; i < r.sd.size(); ++i) {
    const std::string lab = to_string(r.labels[static_cast<std::size_t>(i)]);
    os << "<circle cx=\"" << fmt2(c.sx(r.sd(i))) << "\" cy=\"" << fmt2(c.sy(r.od(i))) << "\" r=\"3\" fill=\""
       << label_color(lab) << "\"/>\n";
  }
  for (Eigen::Index i = 0; i < r.sd.size(); ++i) {
    if (r.labels[static_cast<std::size_t>(i)] != Label::bad_leverage)
      continue;
    os << "<text class=\"obs-label\" x=\"" << fmt2(c.sx(r.sd(i)) + 5) << "\" y=\"" << fmt2(c.sy(r.od(i)) - 5)
       << "\" font-size=\"10\">" << xml_escape(row_id(p.ids, static_cast<std::size_t>(i))) << "</text>\n";
  }
  os << "</svg>\n";
  return {j.dump(2) + "\n", os.str()};
}

inline PlotDocuments emit_scree(const ScreePayload& p)
{
  if (p.eigenvalues.empty())
    throw ValidationError("emit_plot: scree payload has no eigenvalues");
  const auto rows = scree_data(p.eigenvalues);
  nlohmann::ordered_json j;
  j["kind"] = "scree";
  nlohmann::ordered_json ev = nlohmann::ordered_json::array(), cum = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    ev.push_back({static_cast<double>(row.index), row.eigenvalue});
    cum.push_back({static_cast<double>(row.index), row.cumulative_ratio});
  }
  j["series"] = nlohmann::ordered_json::array(
      {{{"name", "eigenvalue"}, {"points", ev}}, {{"name", "cumulative_ratio"}, {"points", cum}}});
  j["cutoffs"] = nlohmann::ordered_json::object();
  j["labels"] = nlohmann::ordered_json::array();

  Canvas c;
  for (const auto& row : rows)
    c.include(static_cast<double>(row.index), row.eigenvalue);
  c.include(1.0, 0.0);
  c.finish();
  std::ostringstream os;
  svg_open(os, "scree plot");
  os << "<polyline class=\"series\" fill=\"none\" stroke=\"" << series_palette[0] << "\" points=\"";
  for (std::size_t i = 0; i < rows.size(); ++i)
    os << (i ? " " : "") << fmt2(c.sx(static_cast<double>(rows[i].index))) << ","
       << fmt2(c.sy(rows[i].eigenvalue));
  os << "\"/>\n";
  for (const auto& row : rows)
    os << "<circle cx=\"" << fmt2(c.sx(static_cast<double>(row.index))) << "\" cy=\"" << fmt2(c.sy(row.eigenvalue))
       << "\" r=\"3\" fill=\"" << series_palette[0] << "\"/>\n";
  os << "</svg>\n";
  return {j.dump(2) + "\n", os.str()};
}

inline PlotDocuments emit_ellipse(const EllipsePayload& p)
{
  if (p.points.cols() != 2)
    throw ValidationError("emit_plot: ellipse payload needs 2 columns, got " + std::to_string(p.points.cols()));
  if (!p.labels.empty() && p.labels.size() != static_cast<std::size_t>(p.points.rows()))
    throw ValidationError("emit_plot: ellipse payload has " + std::to_string(p.labels.size()) + " labels for " +
                          std::to_string(p.points.rows()) + " points");
  nlohmann::ordered_json j;
  j["kind"] = "ellipse_scatter";
  j["series"] = nlohmann::ordered_json::array();
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < p.points.rows(); ++i)
    pts.push_back({p.points(i, 0), p.points(i, 1)});
  j["series"].push_back({{"name", "observations"}, {"points", pts}});

  Canvas c;
  for (Eigen::Index i = 0; i < p.points.rows(); ++i)
    c.include(p.points(i, 0), p.points(i, 1));
  std::vector<std::vector<Eigen::Vector2d>> outlines;
  for (const auto& e : p.ellipses) {
    outlines.push_back(ellipse_boundary(e.ellipse, 128));
    nlohmann::ordered_json poly = nlohmann::ordered_json::array();
    for (const auto& v : outlines.back()) {
      poly.push_back({v(0), v(1)});
      c.include(v(0), v(1));
    }
    j["series"].push_back({{"name", "ellipse:" + e.name}, {"points", poly}});
  }
  j["cutoffs"] = nlohmann::ordered_json::object();
  j["labels"] = p.labels;
  c.finish();

  std::ostringstream os;
  svg_open(os, "tolerance ellipses");
  for (std::size_t e = 0; e < outlines.size(); ++e) {
    os << "<polygon class=\"ellipse\" fill=\"none\" stroke=\"" << series_palette[e % 4] << "\" points=\"";
    for (std::size_t v = 0; v < outlines[e].size(); ++v)
      os << (v ? " " : "") << fmt2(c.sx(outlines[e][v](0))) << "," << fmt2(c.sy(outlines[e][v](1)));
    os << "\"><title>" << xml_escape(p.ellipses[e].name) << "</title></polygon>\n";
  }
  for (Eigen::Index i = 0; i < p.points.rows(); ++i) {
    const std::string lab = p.labels.empty() ? "inside" : p.labels[static_cast<std::size_t>(i)];
    os << "<circle cx=\"" << fmt2(c.sx(p.points(i, 0))) << "\" cy=\"" << fmt2(c.sy(p.points(i, 1)))
       << "\" r=\"2\" fill=\"" << label_color(lab) << "\"/>\n";
  }
  for (Eigen::Index i = 0; i < p.points.rows(); ++i) {
    if (p.labels.empty() || p.labels[static_cast<std::size_t>(i)] != "outside")
      continue;
    os << "<text class=\"obs-label\" x=\"" << fmt2(c.sx(p.points(i, 0)) + 4) << "\" y=\""
       << fmt2(c.sy(p.points(i, 1)) - 4) << "\" font-size=\"9\">"
       << xml_escape(row_id(p.ids, static_cast<std::size_t>(i))) << "</text>\n";
  }
  os << "</svg>\n";
  return {j.dump(2) + "\n", os.str()};
}

} // namespace detail

/// JSON schema: {kind, series: [{name, points: [[x, y], ...]}], cutoffs: {sd?, od?}, labels: [...]}.
inline PlotDocuments emit_plot(PlotKind kind, const PlotPayload& payload)
{
  switch (kind) {
  case PlotKind::diagnostic:
    if (const auto* d = std::get_if<DiagnosticPayload>(&payload))
      return detail::emit_diagnostic(*d);
    break;
  case PlotKind::scree:
    if (const auto* s = std::get_if<ScreePayload>(&payload))
      return detail::emit_scree(*s);
    break;
  case PlotKind::ellipse_scatter:
    if (const auto* e = std::get_if<EllipsePayload>(&payload))
      return detail::emit_ellipse(*e);
    break;
  }
  throw ValidationError("emit_plot: payload does not match plot kind '" + to_string(kind) + "'");
}

} // namespace rospca
