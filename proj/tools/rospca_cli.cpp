#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rospca/cli.hpp"

namespace {

std::optional<std::size_t> parse_k(const std::string& s)
{
  if (s == "auto")
    return std::nullopt;
  std::size_t pos = 0;
  const long v = std::stol(s, &pos);
  if (pos != s.size() || v < 1)
    throw rospca::ValidationError("--k expects 'auto' or a positive integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

std::optional<double> parse_lambda(const std::string& s)
{
  if (s == "bic")
    return std::nullopt;
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size())
    throw rospca::ValidationError("--lambda expects a number or 'bic', got '" + s + "'");
  return v;
}

} // namespace

int main(int argc, char** argv)
{
  using namespace rospca;
  CLI::App app{"Robust and sparse principal component analysis toolkit"};
  app.require_subcommand(1);

  cli::FeaturesConfig features;
  auto* c_features = app.add_subcommand("features", "derive ta1..ta21 per person from a trip diary");
  c_features->add_option("trips", features.trips, "trip CSV")->required();
  c_features->add_option("--days", features.days, "diary length in days")->capture_default_str();
  c_features->add_option("--roster", features.roster, "person ids to include even without trips, one per line");
  c_features->add_option("-o,--out", features.out, "output CSV")->capture_default_str();

  cli::FitConfig fit;
  std::string method = "robpca", k = "auto", lambda = "0", standardize;
  auto* c_fit = app.add_subcommand("fit", "standardize and fit a PCA model");
  c_fit->add_option("matrix", fit.matrix, "numeric CSV, optional leading id column")->required();
  c_fit->add_option("--method", method, "cpca, cspca, robpca or rospca")->capture_default_str();
  c_fit->add_option("--k", k, "number of components or 'auto'")->capture_default_str();
  c_fit->add_option("--lambda", lambda, "sparsity penalty or 'bic'")->capture_default_str();
  c_fit->add_option("--h-fraction", fit.h_fraction, "h as a fraction of n, in [0.5, 1]")->capture_default_str();
  c_fit->add_option("--seed", fit.seed, "random seed")->capture_default_str();
  c_fit->add_option("--threshold", fit.threshold, "explained-variance share for automatic k")->capture_default_str();
  c_fit->add_option("--out-dir", fit.out_dir, "output directory")->capture_default_str();
  c_fit->add_option("--standardize", standardize, "override: classical or robust (warns)");

  cli::DiagnoseConfig diag;
  auto* c_diag = app.add_subcommand("diagnose", "score and orthogonal distances with outlier labels");
  c_diag->add_option("matrix", diag.matrix, "numeric CSV")->required();
  c_diag->add_option("model", diag.model, "model.json from fit")->required();
  c_diag->add_option("--out-dir", diag.out_dir, "output directory")->capture_default_str();

  cli::EllipseConfig ell;
  std::string estimator = "mcd";
  auto* c_ell = app.add_subcommand("ellipse", "tolerance ellipse of a two-column matrix");
  c_ell->add_option("matrix", ell.matrix, "numeric CSV with two value columns")->required();
  c_ell->add_option("--p", ell.p, "coverage probability")->capture_default_str();
  c_ell->add_option("--estimator", estimator, "classical or mcd")->capture_default_str();
  c_ell->add_option("--seed", ell.seed, "random seed")->capture_default_str();
  c_ell->add_option("--h-fraction", ell.h_fraction, "MCD h as a fraction of n")->capture_default_str();
  c_ell->add_flag("--consistency-factor", ell.consistency_factor, "scale the MCD scatter for normal consistency");
  c_ell->add_option("--out-dir", ell.out_dir, "output directory")->capture_default_str();

  cli::SummaryConfig summary;
  auto* c_sum = app.add_subcommand("summary", "mean, stdev, median and raw MAD per column");
  c_sum->add_option("matrix", summary.matrix, "numeric CSV")->required();
  c_sum->add_option("-o,--out", summary.out, "output CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::invalid;
  }

  try {
    if (*c_features)
      return cli::cmd_features(features);
    if (*c_fit) {
      fit.method = parse_pca_method(method);
      fit.k = parse_k(k);
      fit.lambda = parse_lambda(lambda);
      if (!standardize.empty()) {
        if (standardize != "classical" && standardize != "robust")
          throw ValidationError("--standardize expects classical or robust");
        fit.standardize = standardize == "robust" ? StandardizeMethod::robust : StandardizeMethod::classical;
      }
      return cli::cmd_fit(fit);
    }
    if (*c_diag)
      return cli::cmd_diagnose(diag);
    if (*c_ell) {
      if (estimator != "mcd" && estimator != "classical")
        throw ValidationError("--estimator expects classical or mcd");
      ell.estimator = estimator == "mcd" ? cli::EllipseEstimator::mcd : cli::EllipseEstimator::classical;
      return cli::cmd_ellipse(ell);
    }
    if (*c_sum)
      return cli::cmd_summary(summary);
  } catch (const ValidationError& e) {
    std::cerr << "rospca: " << e.what() << "\n";
    return cli::invalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "rospca: invalid number: " << e.what() << "\n";
    return cli::invalid;
  } catch (const std::exception& e) {
    std::cerr << "rospca: " << e.what() << "\n";
    return cli::numerical;
  }
  return cli::invalid;
}
