#pragma once

/// Command implementations behind the rospca command-line tool. Each command
/// reads its inputs, builds every artifact in memory and only then writes
/// them (temp file + rename). Exit codes: 0 success, 2 input or validation
/// error, 3 numerical failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "core_stats.hpp"
#include "data_matrix.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "ingest.hpp"
#include "mcd.hpp"
#include "model_io.hpp"
#include "pca_core.hpp"
#include "robust_pca.hpp"
#include "sparse_pca.hpp"

namespace rospca::cli {

inline constexpr std::uint64_t default_seed = 20081201;

enum ExitCode : int
{
  ok = 0,
  invalid = 2,
  numerical = 3
};

struct FeaturesConfig
{
  std::string trips;
  int days = 7;
  std::string roster; ///< optional file with one person_id per line
  std::string out = "features.csv";
};

struct FitConfig
{
  std::string matrix;
  PcaMethod method = PcaMethod::robpca;
  std::optional<std::size_t> k;     ///< nullopt = automatic
  std::optional<double> lambda = 0.0; ///< nullopt = BIC search
  double h_fraction = 0.5;
  std::uint64_t seed = default_seed;
  double threshold = 0.80;
  std::string out_dir = ".";
  std::optional<StandardizeMethod> standardize; ///< expert override
};

struct DiagnoseConfig
{
  std::string matrix;
  std::string model;
  std::string out_dir = ".";
};

enum class EllipseEstimator
{
  classical,
  mcd
};

struct EllipseConfig
{
  std::string matrix;
  double p = 0.995;
  EllipseEstimator estimator = EllipseEstimator::mcd;
  std::uint64_t seed = default_seed;
  double h_fraction = 0.5;
  bool consistency_factor = false;
  std::string out_dir = ".";
};

struct SummaryConfig
{
  std::string matrix;
  std::string out = "summary.csv";
};

/// Pending output files, written together once every artifact is built.
class Outputs
{
public:
  void add(std::filesystem::path path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }

  void commit() const
  {
    for (const auto& [path, content] : files_) {
      if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
      auto tmp = path;
      tmp += ".tmp";
      {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
          throw ValidationError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out.flush())
          throw ValidationError("write failed for '" + tmp.string() + "'");
      }
      std::filesystem::rename(tmp, path);
    }
  }

private:
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

/// Runs `body`, mapping library errors to exit codes and messages on `err`.
template <class F>
int guarded(const char* command, std::ostream& err, F&& body)
{
  try {
    body();
    return ok;
  } catch (const ValidationError& e) {
    err << "rospca " << command << ": " << e.what() << "\n";
    return invalid;
  } catch (const NumericalError& e) {
    err << "rospca " << command << ": numerical failure: " << e.what() << "\n";
    return numerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "rospca " << command << ": " << e.what() << "\n";
    return invalid;
  }
}

/// h = ceil(fraction * n), at least ceil(n / 2).
inline std::size_t h_from_fraction(std::size_t n, double fraction)
{
  if (!(fraction >= 0.5 && fraction <= 1.0))
    throw DomainError("h fraction " + std::to_string(fraction) + " outside [0.5, 1]");
  const auto h = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::clamp(h, (n + 1) / 2, n);
}

inline std::string scree_csv(const std::vector<double>& eigenvalues)
{
  std::ostringstream os;
  os << "index,eigenvalue,cumulative_ratio\n";
  for (const auto& r : scree_data(eigenvalues))
    os << r.index << "," << format_real(r.eigenvalue) << "," << format_real(r.cumulative_ratio) << "\n";
  return os.str();
}

inline std::string bic_csv(const BicSelection& sel)
{
  std::ostringstream os;
  os << "lambda,bic,zero_count,explained_variance,ok,error\n";
  for (const auto& r : sel.table) {
    os << format_real(r.lambda) << ",";
    if (r.ok)
      os << format_real(r.bic) << "," << r.zero_count << "," << format_real(r.explained_variance) << ",1,";
    else
      os << ",,,0," << detail::csv_field(r.error);
    os << "\n";
  }
  return os.str();
}

inline std::vector<std::string> read_roster(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open roster '" + path + "'");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (!line.empty())
      ids.push_back(line);
  }
  return ids;
}

inline int cmd_features(const FeaturesConfig& cfg, std::ostream& err = std::cerr)
{
  return guarded("features", err, [&] {
    const auto trips = read_trips_csv(cfg.trips);
    const auto roster = cfg.roster.empty() ? std::vector<std::string>{} : read_roster(cfg.roster);
    const auto features = derive_features(trips, cfg.days, roster);
    std::ostringstream os;
    write_features_csv(os, features);
    Outputs out;
    out.add(cfg.out, os.str());
    out.commit();
  });
}

inline int cmd_fit(const FitConfig& cfg, std::ostream& err = std::cerr)
{
  return guarded("fit", err, [&] {
    const DataMatrix x = read_matrix_csv(cfg.matrix);
    if (!(cfg.threshold > 0.0 && cfg.threshold <= 1.0))
      throw DomainError("threshold " + std::to_string(cfg.threshold) + " outside (0, 1]");
    const StandardizeMethod bound = is_robust(cfg.method) ? StandardizeMethod::robust : StandardizeMethod::classical;
    StandardizeMethod how = bound;
    if (cfg.standardize && *cfg.standardize != bound) {
      how = *cfg.standardize;
      err << "rospca fit: warning: " << to_string(how) << " standardization overrides the " << to_string(bound)
          << " default for " << to_string(cfg.method) << "\n";
    }
    const StandardizedMatrix xs = standardize(x, how);
    const auto n = static_cast<std::size_t>(xs.data.rows());
    const std::filesystem::path dir(cfg.out_dir);
    const bool sparse = cfg.method == PcaMethod::cspca || cfg.method == PcaMethod::rospca;
    const bool search = sparse && !cfg.lambda;
    if (cfg.lambda && *cfg.lambda < 0.0)
      throw DomainError("lambda must be non-negative");

    ModelExtras extra;
    extra.standardization = how;
    Outputs out;
    PCAModel model;
    std::vector<double> scree;
    std::optional<BicSelection> bic;
    SparsityConfig scfg;

    if (!is_robust(cfg.method)) {
      scree = covariance_eigenvalues(xs.data);
      if (!sparse) {
        model = cpca_fit(xs, cfg.k, cfg.threshold);
      } else {
        scfg.lambda = cfg.lambda.value_or(0.0);
        if (search) {
          const std::size_t k = cfg.k ? *cfg.k : select_k(scree, cfg.threshold);
          bic = bic_select_lambda(xs, k, scfg.grid, scfg);
          scfg.lambda = bic->lambda;
        }
        model = cspca_fit(xs, cfg.k, scfg, nullptr, cfg.threshold);
        extra.lambda = scfg.lambda;
      }
    } else {
      const std::size_t h = h_from_fraction(n, cfg.h_fraction);
      RobustOptions opt;
      opt.threshold = cfg.threshold;
      RobustFit fit;
      if (cfg.method == PcaMethod::robpca) {
        fit = robpca_fit(xs, cfg.k, h, cfg.seed, opt);
      } else {
        double lambda = cfg.lambda.value_or(0.0);
        if (search) {
          const auto init = detail::least_outlying(xs.data, h, cfg.seed, opt);
          const Matrix hsub = select_rows(xs.data, init.mask);
          const std::size_t k = cfg.k ? *cfg.k : select_k(covariance_eigenvalues(hsub), cfg.threshold);
          bic = bic_select_lambda(hsub, k, opt.sparse.grid, opt.sparse);
          lambda = bic->lambda;
        }
        fit = rospca_fit(xs, cfg.k, lambda, h, cfg.seed, opt);
        extra.lambda = lambda;
      }
      model = fit.model;
      scree = fit.scree_eigenvalues;
      extra.h = h;
      extra.seed = cfg.seed;
      out.add(dir / "robust_fit.json", robust_fit_to_json(fit).dump(2) + "\n");
    }
    out.add(dir / "model.json", model_to_json(model, extra).dump(2) + "\n");
    out.add(dir / "scree.csv", scree_csv(scree));
    if (bic)
      out.add(dir / "bic.csv", bic_csv(*bic));
    out.commit();
  });
}

inline int cmd_diagnose(const DiagnoseConfig& cfg, std::ostream& err = std::cerr)
{
  return guarded("diagnose", err, [&] {
    const DataMatrix x = read_matrix_csv(cfg.matrix);
    const PCAModel model = read_model_json(cfg.model);
    if (x.cols() != model.p())
      throw DimensionMismatch("model has " + std::to_string(model.p()) + " variables, data has " +
                              std::to_string(x.cols()));
    const DiagnosticReport report = diagnose(x, model);
    for (const auto& w : report.warnings)
      err << "rospca diagnose: warning: " << w << "\n";

    std::ostringstream csv;
    csv << "id,sd,od,label\n";
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      csv << detail::csv_field(x.row_label(i)) << "," << format_real(report.sd(i)) << ","
          << format_real(report.od(i)) << "," << to_string(report.labels[static_cast<std::size_t>(i)]) << "\n";
    std::vector<std::string> ids;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      ids.push_back(x.row_label(i));
    const auto docs = emit_plot(PlotKind::diagnostic, DiagnosticPayload{report, ids});

    const std::filesystem::path dir(cfg.out_dir);
    Outputs out;
    out.add(dir / "diagnostics.csv", csv.str());
    out.add(dir / "diagnostic.json", docs.json);
    out.add(dir / "diagnostic.svg", docs.svg);
    out.commit();
  });
}

struct EllipseResult
{
  Ellipse2D ellipse;
  Eigen::Matrix2d scatter;
  Vector distances; ///< squared Mahalanobis distances
  std::vector<bool> outside;
};

/// Tolerance ellipse of a two-column matrix and per-row outside flags.
inline EllipseResult fit_ellipse(const DataMatrix& x, const EllipseConfig& cfg)
{
  if (x.cols() != 2)
    throw ValidationError("ellipse needs exactly 2 numeric columns, got " + std::to_string(x.cols()));
  Vector center;
  Matrix scatter;
  if (cfg.estimator == EllipseEstimator::classical) {
    if (x.rows() < 3)
      throw ValidationError("ellipse needs at least 3 rows");
    center = column_means(x.values());
    scatter = sample_covariance(x.values(), center);
  } else {
    MCDOptions opt;
    opt.consistency_factor = cfg.consistency_factor;
    const auto m = mcd(x, h_from_fraction(static_cast<std::size_t>(x.rows()), cfg.h_fraction), cfg.seed, opt);
    center = m.center;
    scatter = m.scatter;
  }
  EllipseResult r;
  r.scatter = scatter;
  r.ellipse = tolerance_ellipse(Eigen::Vector2d(center), r.scatter, cfg.p);
  r.distances = Vector(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    r.distances(i) = mahalanobis_sq(x.values().row(i).transpose(), center, scatter);
  r.outside.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    r.outside[static_cast<std::size_t>(i)] = r.distances(i) > r.ellipse.cutoff;
  return r;
}

inline int cmd_ellipse(const EllipseConfig& cfg, std::ostream& err = std::cerr)
{
  return guarded("ellipse", err, [&] {
    const DataMatrix x = read_matrix_csv(cfg.matrix);
    const EllipseResult r = fit_ellipse(x, cfg);
    const std::string est = cfg.estimator == EllipseEstimator::mcd ? "mcd" : "classical";

    json j;
    j["estimator"] = est;
    j["coverage_p"] = cfg.p;
    j["cutoff"] = r.ellipse.cutoff;
    j["center"] = {r.ellipse.center(0), r.ellipse.center(1)};
    j["scatter"] = {{r.scatter(0, 0), r.scatter(0, 1)}, {r.scatter(1, 0), r.scatter(1, 1)}};
    j["axis_lengths"] = {r.ellipse.axis_lengths(0), r.ellipse.axis_lengths(1)};
    j["rotation"] = r.ellipse.rotation;
    if (cfg.estimator == EllipseEstimator::mcd) {
      j["h"] = h_from_fraction(static_cast<std::size_t>(x.rows()), cfg.h_fraction);
      j["seed"] = cfg.seed;
    }
    std::size_t n_out = 0;
    for (bool o : r.outside)
      n_out += o;
    j["outside_count"] = n_out;

    EllipsePayload payload;
    payload.points = x.values();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      payload.ids.push_back(x.row_label(i));
      payload.labels.push_back(r.outside[static_cast<std::size_t>(i)] ? "outside" : "inside");
    }
    payload.ellipses.push_back({est, r.ellipse});
    const auto docs = emit_plot(PlotKind::ellipse_scatter, payload);
    j["plot"] = json::parse(docs.json);

    std::ostringstream csv;
    csv << "id,distance_sq,outside\n";
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      csv << detail::csv_field(x.row_label(i)) << "," << format_real(r.distances(i)) << ","
          << (r.outside[static_cast<std::size_t>(i)] ? 1 : 0) << "\n";

    const std::filesystem::path dir(cfg.out_dir);
    Outputs out;
    out.add(dir / "ellipse.json", j.dump(2) + "\n");
    out.add(dir / "ellipse.svg", docs.svg);
    out.add(dir / "flags.csv", csv.str());
    out.commit();
  });
}

inline int cmd_summary(const SummaryConfig& cfg, std::ostream& err = std::cerr)
{
  return guarded("summary", err, [&] {
    const DataMatrix x = read_matrix_csv(cfg.matrix);
    std::ostringstream os;
    write_summary_csv(os, summarize(x));
    Outputs out;
    out.add(cfg.out, os.str());
    out.commit();
  });
}

} // namespace rospca::cli
