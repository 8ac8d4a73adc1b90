#pragma once

/// CSV reading and writing for feature matrices and trip diaries, per-person
/// travel-activity features (ta1..ta21) and column summaries.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "core_stats.hpp"
#include "data_matrix.hpp"
#include "errors.hpp"
#include "parallel.hpp"

namespace rospca {

/// Malformed CSV content. `row` counts data rows from 1 (0 is the header),
/// `column` counts fields from 1.
class ParseError : public ValidationError
{
public:
  ParseError(std::size_t row, std::size_t column, const std::string& what, const std::string& file = {})
      : ValidationError((file.empty() ? "" : file + " ") + "(" + std::to_string(row) + "," +
                        std::to_string(column) + "): " + what),
        row_(row), column_(column), detail_(what)
  {
  }
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }
  /// Message without the location prefix.
  const std::string& detail() const { return detail_; }

private:
  std::size_t row_;
  std::size_t column_;
  std::string detail_;
};

namespace detail {

/// Splits one CSV record. Double-quoted fields may contain commas and "".
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t row)
{
  if (!line.empty() && line.back() == '\r')
    line.remove_suffix(1);
  std::vector<std::string> out;
  std::string field;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field += c;
    }
  }
  if (quoted)
    throw ParseError(row, out.size() + 1, "unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(std::istream& in)
{
  CsvTable t;
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(0, 1, "missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
    line.erase(0, 3);
  t.header = split_csv_line(line, 0);
  std::set<std::string> seen;
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (!seen.insert(t.header[c]).second)
      throw ParseError(0, c + 1, "duplicate header column '" + t.header[c] + "'");
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r")
      continue;
    ++row;
    auto fields = split_csv_line(line, row);
    if (fields.size() != t.header.size())
      throw ParseError(row, std::min(fields.size(), t.header.size()) + 1,
                       "ragged row: " + std::to_string(fields.size()) + " fields, header has " +
                           std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

inline double parse_real(const std::string& cell, std::size_t row, std::size_t col)
{
  if (cell.empty())
    throw ParseError(row, col, "empty cell");
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+')
    ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ParseError(row, col, "'" + cell + "' is not a number");
  if (!std::isfinite(v))
    throw ParseError(row, col, "'" + cell + "' is not finite");
  return v;
}

inline long long parse_integer(const std::string& cell, std::size_t row, std::size_t col)
{
  if (cell.empty())
    throw ParseError(row, col, "empty cell");
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw ParseError(row, col, "'" + cell + "' is not an integer");
  return v;
}

inline std::string csv_field(const std::string& s)
{
  if (s.find_first_of(",\"\n\r") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char c : s)
    out += (c == '"') ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::ifstream open_input(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError("cannot open '" + path + "'");
  return in;
}

} // namespace detail

/// Shortest decimal text that reads back to the same double.
inline std::string format_real(double v)
{
  if (v == 0.0)
    return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline DataMatrix read_matrix_csv(std::istream& in)
{
  const auto t = detail::read_csv(in);
  const bool has_id = !t.header.empty() && t.header.front() == "id";
  const std::size_t offset = has_id ? 1 : 0;
  if (t.header.size() <= offset)
    throw ParseError(0, 1, "no numeric columns");
  Matrix v(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size() - offset));
  std::vector<std::string> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (has_id)
      ids.push_back(t.rows[r][0]);
    for (std::size_t c = offset; c < t.header.size(); ++c)
      v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - offset)) =
          detail::parse_real(t.rows[r][c], r + 1, c + 1);
  }
  return DataMatrix(std::move(v), {t.header.begin() + static_cast<std::ptrdiff_t>(offset), t.header.end()},
                    std::move(ids));
}

inline DataMatrix read_matrix_csv(const std::string& path)
{
  auto in = detail::open_input(path);
  try {
    return read_matrix_csv(in);
  } catch (const ParseError& e) {
    throw ParseError(e.row(), e.column(), e.detail(), path);
  }
}

/// Writes names (and an id column when the matrix has ids) followed by the
/// values in shortest round-trip form.
inline void write_matrix_csv(std::ostream& out, const DataMatrix& x)
{
  const bool has_id = !x.ids().empty();
  if (has_id)
    out << "id,";
  for (std::size_t c = 0; c < x.names().size(); ++c)
    out << (c ? "," : "") << detail::csv_field(x.names()[c]);
  out << "\n";
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (has_id)
      out << detail::csv_field(x.ids()[static_cast<std::size_t>(r)]) << ",";
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      out << (c ? "," : "") << format_real(x.values()(r, c));
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Trip diaries

enum class Purpose
{
  to_home,
  work,
  education,
  eat_out,
  daily_shopping,
  regular_shopping,
  personal_business,
  visit,
  sport_culture_touring,
  escort,
  other
};

inline constexpr std::array<std::string_view, 11> purpose_tags = {
    "to_home", "work",  "education", "eat_out", "daily_shopping", "regular_shopping", "personal_business",
    "visit",   "sport_culture_touring", "escort", "other"};

inline std::string to_string(Purpose p) { return std::string(purpose_tags[static_cast<std::size_t>(p)]); }

inline std::optional<Purpose> parse_purpose(std::string_view s)
{
  for (std::size_t i = 0; i < purpose_tags.size(); ++i)
    if (purpose_tags[i] == s)
      return static_cast<Purpose>(i);
  return std::nullopt;
}

struct TripRecord
{
  std::string person_id;
  int day_index = 1;
  int depart_minutes = 0;
  Purpose purpose = Purpose::other;
  double distance_km = 0.0;
  double duration_min = 0.0;
  bool with_children = false;
  bool with_baggage = false;
  bool with_purchased_goods = false;
  std::string origin_zone;
  std::string destination_zone;

  auto key() const
  {
    return std::tie(person_id, day_index, depart_minutes, purpose, distance_km, duration_min, with_children,
                    with_baggage, with_purchased_goods, origin_zone, destination_zone);
  }
};

inline constexpr std::array<std::string_view, 11> trip_columns = {
    "person_id",    "day_index",     "depart_minutes", "purpose",          "distance_km",
    "duration_min", "with_children", "with_baggage",   "with_purchased_goods", "origin_zone",
    "destination_zone"};

inline std::vector<TripRecord> read_trips_csv(std::istream& in)
{
  const auto t = detail::read_csv(in);
  if (t.header.size() != trip_columns.size() || !std::equal(t.header.begin(), t.header.end(), trip_columns.begin())) {
    std::string expected;
    for (auto c : trip_columns)
      expected += (expected.empty() ? "" : ",") + std::string(c);
    throw ParseError(0, 1, "trip header must be exactly '" + expected + "'");
  }
  std::vector<TripRecord> trips;
  trips.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    const std::size_t row = r + 1;
    TripRecord tr;
    tr.person_id = f[0];
    if (tr.person_id.empty())
      throw ParseError(row, 1, "empty person_id");
    const auto day = detail::parse_integer(f[1], row, 2);
    if (day < 1)
      throw ParseError(row, 2, "day_index " + f[1] + " must be at least 1");
    tr.day_index = static_cast<int>(std::min<long long>(day, 1 << 30));
    const auto dep = detail::parse_integer(f[2], row, 3);
    if (dep < 0 || dep > 1439)
      throw ParseError(row, 3, "depart_minutes " + f[2] + " outside [0, 1439]");
    tr.depart_minutes = static_cast<int>(dep);
    const auto purpose = parse_purpose(f[3]);
    if (!purpose) {
      std::string allowed;
      for (auto tag : purpose_tags)
        allowed += (allowed.empty() ? "" : ", ") + std::string(tag);
      throw ParseError(row, 4, "unknown purpose '" + f[3] + "' (allowed: " + allowed + ")");
    }
    tr.purpose = *purpose;
    tr.distance_km = detail::parse_real(f[4], row, 5);
    if (tr.distance_km < 0.0)
      throw ParseError(row, 5, "negative distance_km");
    tr.duration_min = detail::parse_real(f[5], row, 6);
    if (tr.duration_min < 0.0)
      throw ParseError(row, 6, "negative duration_min");
    bool* flags[] = {&tr.with_children, &tr.with_baggage, &tr.with_purchased_goods};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& cell = f[6 + k];
      if (cell != "0" && cell != "1")
        throw ParseError(row, 7 + k, "flag must be 0 or 1, got '" + cell + "'");
      *flags[k] = cell == "1";
    }
    tr.origin_zone = f[9];
    tr.destination_zone = f[10];
    if (tr.origin_zone.empty() || tr.destination_zone.empty())
      throw ParseError(row, tr.origin_zone.empty() ? 10 : 11, "empty zone identifier");
    trips.push_back(std::move(tr));
  }
  return trips;
}

inline std::vector<TripRecord> read_trips_csv(const std::string& path)
{
  auto in = detail::open_input(path);
  try {
    return read_trips_csv(in);
  } catch (const ParseError& e) {
    throw ParseError(e.row(), e.column(), e.detail(), path);
  }
}

// ---------------------------------------------------------------------------
// Travel-activity features

inline constexpr std::size_t feature_count = 21;

inline constexpr std::array<std::string_view, feature_count> feature_descriptions = {
    "days_no_journey",  "n_peak",        "n_night",          "n_escort",           "n_to_home",
    "n_work",           "n_education",   "n_shopping",       "n_leisure",          "mean_escort_km",
    "mean_home_km",     "mean_work_km",  "mean_education_km", "mean_shopping_km",  "mean_leisure_km",
    "n_short_duration", "n_short_distance", "mean_dist_most_frequent_km", "n_with_children", "n_with_goods",
    "n_with_baggage"};

inline std::string feature_name(std::size_t j) { return "ta" + std::to_string(j + 1); }

/// Departure windows are half-open [start, end) in minutes after midnight; a
/// window with start > end wraps past midnight.
struct FeatureOptions
{
  std::pair<int, int> night{22 * 60, 6 * 60};
  std::vector<std::pair<int, int>> peak{{7 * 60, 9 * 60}, {16 * 60, 19 * 60}};
  double short_duration_min = 5.0;
  double short_distance_km = 1.0;
};

struct FeatureVector
{
  std::array<double, feature_count> ta{};
  std::size_t other_count = 0; ///< trips with purpose `other`
  std::size_t trip_count = 0;
};

namespace detail {

inline bool in_window(int m, std::pair<int, int> w)
{
  return w.first <= w.second ? (m >= w.first && m < w.second) : (m >= w.first || m < w.second);
}

inline FeatureVector person_features(std::vector<TripRecord> trips, int diary_days, const FeatureOptions& opt)
{
  std::sort(trips.begin(), trips.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
  FeatureVector f;
  auto& ta = f.ta;
  f.trip_count = trips.size();
  std::set<int> active_days;
  // Purpose groups feeding ta4..ta9 and the distance sums for ta10..ta15.
  std::array<double, 6> dist_sum{};
  std::array<std::size_t, 6> n{};
  std::map<std::pair<std::string, std::string>, std::vector<double>> od;
  for (const auto& t : trips) {
    if (t.day_index > diary_days)
      throw ValidationError("person " + t.person_id + ": day_index " + std::to_string(t.day_index) +
                            " exceeds diary length " + std::to_string(diary_days));
    active_days.insert(t.day_index);
    if (std::any_of(opt.peak.begin(), opt.peak.end(), [&](auto w) { return in_window(t.depart_minutes, w); }))
      ta[1] += 1;
    if (in_window(t.depart_minutes, opt.night))
      ta[2] += 1;
    int g = -1;
    switch (t.purpose) {
    case Purpose::escort: g = 0; break;
    case Purpose::to_home: g = 1; break;
    case Purpose::work: g = 2; break;
    case Purpose::education: g = 3; break;
    case Purpose::eat_out:
    case Purpose::daily_shopping:
    case Purpose::regular_shopping: g = 4; break;
    case Purpose::personal_business:
    case Purpose::visit:
    case Purpose::sport_culture_touring: g = 5; break;
    case Purpose::other: ++f.other_count; break;
    }
    if (g >= 0) {
      ++n[static_cast<std::size_t>(g)];
      dist_sum[static_cast<std::size_t>(g)] += t.distance_km;
    }
    if (t.duration_min <= opt.short_duration_min)
      ta[15] += 1;
    if (t.distance_km <= opt.short_distance_km)
      ta[16] += 1;
    if (t.purpose != Purpose::to_home)
      od[{t.origin_zone, t.destination_zone}].push_back(t.distance_km);
    ta[18] += t.with_children;
    ta[19] += t.with_purchased_goods;
    ta[20] += t.with_baggage;
  }
  ta[0] = static_cast<double>(diary_days) - static_cast<double>(active_days.size());
  for (std::size_t g = 0; g < 6; ++g) {
    ta[3 + g] = static_cast<double>(n[g]);
    ta[9 + g] = n[g] ? dist_sum[g] / static_cast<double>(n[g]) : 0.0;
  }
  // Modal origin-destination pair: frequency, then total distance, then the
  // lexicographically smallest pair.
  const std::vector<double>* best = nullptr;
  double best_total = 0.0;
  for (auto& [pair, d] : od) {
    std::sort(d.begin(), d.end());
    double total = 0.0;
    for (double v : d)
      total += v;
    if (!best || d.size() > best->size() || (d.size() == best->size() && total > best_total)) {
      best = &d;
      best_total = total;
    }
  }
  ta[17] = best ? best_total / static_cast<double>(best->size()) : 0.0;
  return f;
}

} // namespace detail

/// Features per person, ordered by person_id. Persons in `roster` without
/// any trip get ta1 = diary_days and zeros elsewhere.
inline std::map<std::string, FeatureVector> derive_features(const std::vector<TripRecord>& trips, int diary_days,
                                                            const std::vector<std::string>& roster = {},
                                                            const FeatureOptions& opt = {})
{
  if (diary_days < 1)
    throw ValidationError("derive_features: diary_days must be at least 1, got " + std::to_string(diary_days));
  std::map<std::string, std::vector<TripRecord>> by_person;
  for (const auto& id : roster)
    by_person[id];
  for (const auto& t : trips)
    by_person[t.person_id].push_back(t);

  std::vector<std::pair<std::string, std::vector<TripRecord>*>> work;
  for (auto& [id, v] : by_person)
    work.emplace_back(id, &v);
  std::vector<FeatureVector> out(work.size());
  parallel_for(work.size(), [&](std::size_t i) {
    out[i] = detail::person_features(*work[i].second, diary_days, opt);
  });
  std::map<std::string, FeatureVector> result;
  for (std::size_t i = 0; i < work.size(); ++i)
    result.emplace(work[i].first, out[i]);
  return result;
}

inline DataMatrix features_matrix(const std::map<std::string, FeatureVector>& features)
{
  Matrix v(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(feature_count));
  std::vector<std::string> ids, names;
  for (std::size_t j = 0; j < feature_count; ++j)
    names.push_back(feature_name(j));
  Eigen::Index r = 0;
  for (const auto& [id, f] : features) {
    ids.push_back(id);
    for (std::size_t j = 0; j < feature_count; ++j)
      v(r, static_cast<Eigen::Index>(j)) = f.ta[j];
    ++r;
  }
  return DataMatrix(std::move(v), std::move(names), std::move(ids));
}

/// id,ta1..ta21 rows in person_id order. An empty map gives the header only.
inline void write_features_csv(std::ostream& out, const std::map<std::string, FeatureVector>& features)
{
  out << "id";
  for (std::size_t j = 0; j < feature_count; ++j)
    out << "," << feature_name(j);
  out << "\n";
  for (const auto& [id, f] : features) {
    out << detail::csv_field(id);
    for (double v : f.ta)
      out << "," << format_real(v);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Summaries

struct SummaryRow
{
  std::string variable;
  std::string unit;
  double mean = 0.0;
  double stdev = 0.0;
  double median = 0.0;
  double mad = 0.0; ///< raw, without the normal consistency factor
};

struct SummaryTable
{
  std::vector<SummaryRow> rows;
};

inline std::string feature_unit(const std::string& name)
{
  for (std::size_t j = 9; j <= 14; ++j)
    if (name == feature_name(j))
      return "km";
  return name == feature_name(17) ? "km" : "-";
}

inline SummaryTable summarize(const DataMatrix& x)
{
  if (x.rows() < 2)
    throw ValidationError("summarize: needs at least 2 rows, got " + std::to_string(x.rows()));
  SummaryTable t;
  const Matrix& v = x.values();
  const auto n = static_cast<double>(v.rows());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    SummaryRow r;
    r.variable = x.names()[static_cast<std::size_t>(j)];
    r.unit = feature_unit(r.variable);
    r.mean = v.col(j).mean();
    r.stdev = std::sqrt((v.col(j).array() - r.mean).square().sum() / (n - 1.0));
    const Sample s(Vector(v.col(j)));
    r.median = median(s);
    r.mad = mad(s);
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline void write_summary_csv(std::ostream& out, const SummaryTable& t)
{
  out << "variable,unit,mean,stdev,median,mad\n";
  for (const auto& r : t.rows)
    out << detail::csv_field(r.variable) << "," << r.unit << "," << format_real(r.mean) << ","
        << format_real(r.stdev) << "," << format_real(r.median) << "," << format_real(r.mad) << "\n";
}

} // namespace rospca
