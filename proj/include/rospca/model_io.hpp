#pragma once

/// JSON form of fitted models and robust-fit details.

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "pca_core.hpp"
#include "robust_pca.hpp"

namespace rospca {

using json = nlohmann::ordered_json;

namespace detail {

inline json vec_json(const Vector& v) { return json(to_std(v)); }

inline Vector json_vec(const json& j, const char* field)
{
  if (!j.contains(field) || !j[field].is_array())
    throw ValidationError(std::string("model JSON: missing array '") + field + "'");
  const auto v = j[field].get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json mask_json(const std::vector<bool>& m)
{
  json a = json::array();
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i])
      a.push_back(i + 1);
  return a;
}

} // namespace detail

struct ModelExtras
{
  StandardizeMethod standardization = StandardizeMethod::classical;
  std::optional<double> lambda;
  std::optional<std::size_t> h;
  std::optional<std::uint64_t> seed;
};

/// Loadings are stored row-major: one array of k entries per variable.
inline json model_to_json(const PCAModel& m, const ModelExtras& extra = {})
{
  json j;
  j["method"] = to_string(m.method);
  j["k"] = m.k;
  j["standardization"] = to_string(extra.standardization);
  j["names"] = m.names;
  j["center"] = detail::vec_json(m.center);
  j["scale"] = detail::vec_json(m.scale);
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.loadings.rows(); ++i)
    rows.push_back(detail::to_std(m.loadings.row(i).transpose()));
  j["loadings"] = rows;
  j["eigenvalues"] = detail::vec_json(m.eigenvalues);
  j["total_variance"] = m.total_variance;
  j["explained_ratio"] = m.total_variance > 0.0 ? m.eigenvalues.sum() / m.total_variance : 0.0;
  if (extra.lambda)
    j["lambda"] = *extra.lambda;
  if (extra.h)
    j["h"] = *extra.h;
  if (extra.seed)
    j["seed"] = *extra.seed;
  return j;
}

inline PCAModel model_from_json(const json& j)
{
  try {
    PCAModel m;
    m.method = parse_pca_method(j.at("method").get<std::string>());
    m.k = j.at("k").get<std::size_t>();
    m.names = j.at("names").get<std::vector<std::string>>();
    m.center = detail::json_vec(j, "center");
    m.scale = detail::json_vec(j, "scale");
    m.eigenvalues = detail::json_vec(j, "eigenvalues");
    m.total_variance = j.at("total_variance").get<double>();
    const auto& rows = j.at("loadings");
    const auto p = static_cast<Eigen::Index>(rows.size());
    m.loadings.resize(p, static_cast<Eigen::Index>(m.k));
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto r = rows[static_cast<std::size_t>(i)].get<std::vector<double>>();
      if (r.size() != m.k)
        throw DimensionMismatch("model JSON: loadings row " + std::to_string(i + 1) + " has " +
                                std::to_string(r.size()) + " entries, k = " + std::to_string(m.k));
      for (std::size_t c = 0; c < r.size(); ++c)
        m.loadings(i, static_cast<Eigen::Index>(c)) = r[c];
    }
    if (m.center.size() != p || m.scale.size() != p || static_cast<Eigen::Index>(m.names.size()) != p)
      throw DimensionMismatch("model JSON: center, scale, names and loadings disagree on p");
    if (m.eigenvalues.size() != static_cast<Eigen::Index>(m.k))
      throw DimensionMismatch("model JSON: " + std::to_string(m.eigenvalues.size()) + " eigenvalues for k = " +
                              std::to_string(m.k));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model JSON: ") + e.what());
  }
}

inline PCAModel read_model_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open '" + path + "'");
  try {
    return model_from_json(json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("model JSON '" + path + "': " + e.what());
  }
}

inline json robust_fit_to_json(const RobustFit& f)
{
  json j;
  j["h"] = f.h;
  j["outlyingness"] = detail::vec_json(f.outlyingness);
  j["initial_support"] = detail::mask_json(f.initial_support);
  j["reweight_support"] = detail::mask_json(f.reweight_support);
  j["reweight_cutoff"] = f.reweight_cutoff;
  json log = json::array();
  for (const auto& s : f.stage_log)
    log.push_back({{"stage", s.stage}, {"support_size", s.support_size}, {"objective", s.objective}, {"note", s.note}});
  j["stage_log"] = log;
  json rows = json::array();
  for (Eigen::Index i = 0; i < f.stage3_loadings.rows(); ++i)
    rows.push_back(detail::to_std(f.stage3_loadings.row(i).transpose()));
  j["stage3_loadings"] = rows;
  j["scree_eigenvalues"] = f.scree_eigenvalues;
  return j;
}

} // namespace rospca
