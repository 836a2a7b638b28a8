#pragma once

// File formats: cohort CSV, digits CSV, history CSV, KM CSV, model checkpoint
// and report JSON. All writes go through a temp file and a rename.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "survlr/error.hpp"
#include "survlr/evaluate.hpp"
#include "survlr/network.hpp"
#include "survlr/preprocess.hpp"
#include "survlr/survival.hpp"
#include "survlr/train.hpp"

namespace survlr {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// FNV-1a, 64-bit, as 16 hex digits. Used to tag artifacts with their config.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

inline std::string config_hash(const json& config) { return fnv1a_hex(config.dump()); }

/// Leading comment line carrying provenance; read_csv skips lines starting with '#'.
inline std::string csv_provenance(const std::string& hash, std::uint64_t seed) {
  return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    detail::require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out << content;
    detail::require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  detail::require(!ec, ErrorKind::Io, "cannot move " + tmp.string() + " to " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.remove_suffix(1);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    out.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(const std::string& field, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  require(res.ec == std::errc() && res.ptr == field.data() + field.size(), ErrorKind::InvalidInput,
          "line " + std::to_string(line) + ": cannot parse number '" + field + "'");
  return v;
}

inline int parse_int(const std::string& field, std::size_t line) {
  int v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  require(res.ec == std::errc() && res.ptr == field.data() + field.size(), ErrorKind::InvalidInput,
          "line " + std::to_string(line) + ": cannot parse integer '" + field + "'");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return static_cast<int>(c);
    return -1;
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  CsvTable table;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    auto fields = split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    require(fields.size() == table.header.size(), ErrorKind::InvalidInput,
            path.string() + " line " + std::to_string(number) + ": expected " +
                std::to_string(table.header.size()) + " fields");
    table.rows.push_back(std::move(fields));
  }
  require(!table.header.empty(), ErrorKind::InvalidInput, path.string() + " is empty");
  return table;
}

}  // namespace detail

struct CohortData {
  MatrixD features;
  std::vector<SurvivalRecord> records;
  std::optional<std::vector<int>> truth;
};

/// Columns `time,event[,truth][,feature_*]`; event is 0 or 1.
inline CohortData read_cohort_csv(const std::filesystem::path& path) {
  const auto table = detail::read_csv(path);
  const int time_col = table.column("time");
  const int event_col = table.column("event");
  const int truth_col = table.column("truth");
  detail::require(time_col >= 0 && event_col >= 0, ErrorKind::InvalidInput,
                  path.string() + ": header must contain time and event");
  std::vector<int> feature_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (table.header[c].rfind("feature_", 0) == 0) feature_cols.push_back(static_cast<int>(c));

  CohortData data;
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  data.features.resize(n, static_cast<Eigen::Index>(feature_cols.size()));
  if (truth_col >= 0) data.truth.emplace();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = r + 2;
    const auto& ev = row[static_cast<std::size_t>(event_col)];
    detail::require(ev == "0" || ev == "1", ErrorKind::InvalidInput,
                    "line " + std::to_string(line) + ": event must be 0 or 1");
    data.records.push_back({detail::parse_double(row[static_cast<std::size_t>(time_col)], line), ev == "1"});
    if (truth_col >= 0) data.truth->push_back(detail::parse_int(row[static_cast<std::size_t>(truth_col)], line));
    for (std::size_t f = 0; f < feature_cols.size(); ++f)
      data.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) =
          detail::parse_double(row[static_cast<std::size_t>(feature_cols[f])], line);
  }
  validate_records(data.records);
  return data;
}

inline std::string cohort_csv(const MatrixD& features, std::span<const SurvivalRecord> records,
                              const std::optional<std::vector<int>>& truth) {
  std::string out = "time,event";
  if (truth) out += ",truth";
  for (Eigen::Index c = 0; c < features.cols(); ++c) out += ",feature_" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    out += format_double(records[i].time);
    out += records[i].event ? ",1" : ",0";
    if (truth) out += "," + std::to_string((*truth)[i]);
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      out += "," + format_double(features(static_cast<Eigen::Index>(i), c));
    out += '\n';
  }
  return out;
}

struct DigitsData {
  std::vector<int> digits;
  MatrixD pixels;
};

/// Columns `digit,pixel_0..pixel_63`.
inline DigitsData read_digits_csv(const std::filesystem::path& path) {
  const auto table = detail::read_csv(path);
  const int digit_col = table.column("digit");
  detail::require(digit_col >= 0, ErrorKind::InvalidInput, path.string() + ": missing digit column");
  std::vector<int> pixel_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (table.header[c].rfind("pixel_", 0) == 0) pixel_cols.push_back(static_cast<int>(c));
  DigitsData data;
  data.pixels.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(pixel_cols.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    data.digits.push_back(detail::parse_int(table.rows[r][static_cast<std::size_t>(digit_col)], r + 2));
    for (std::size_t p = 0; p < pixel_cols.size(); ++p)
      data.pixels(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) =
          detail::parse_double(table.rows[r][static_cast<std::size_t>(pixel_cols[p])], r + 2);
  }
  return data;
}

inline std::string history_csv(const TrainResult& result) {
  std::string out = "epoch,objective,statistic,penalty\n";
  for (const auto& e : result.history)
    out += std::to_string(e.epoch) + "," + format_double(e.objective) + "," + format_double(e.statistic) +
           "," + format_double(e.penalty) + "\n";
  return out;
}

inline std::string km_csv(const std::vector<std::optional<StepSurvivalCurve>>& curves) {
  std::string out = "cluster,time,survival,ci_lower,ci_upper,at_risk,events\n";
  for (std::size_t g = 0; g < curves.size(); ++g) {
    if (!curves[g]) continue;
    const auto& c = *curves[g];
    out += std::to_string(g) + ",0,1,1,1,,\n";
    for (std::size_t j = 0; j < c.times.size(); ++j)
      out += std::to_string(g) + "," + format_double(c.times[j]) + "," + format_double(c.survival[j]) + "," +
             format_double(c.ci_lower[j]) + "," + format_double(c.ci_upper[j]) + "," +
             format_double(c.at_risk[j]) + "," + format_double(c.events[j]) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- checkpoint

struct Checkpoint {
  Network<double> network;
  Standardizer standardizer;
  std::string config_hash;
};

inline json checkpoint_json(const Checkpoint& ckpt) {
  const auto& net = ckpt.network;
  json j;
  j["format"] = "survlr-checkpoint";
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = ckpt.config_hash;
  j["seed"] = net.spec.seed;
  j["layer_sizes"] = net.spec.layer_sizes;
  j["activation"] = to_string(net.spec.hidden_activation);
  const VectorD flat = net.params.flatten();
  j["parameters"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  if (!ckpt.standardizer.empty()) {
    const auto& s = ckpt.standardizer;
    j["standardizer"] = {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
                         {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
  } else {
    j["standardizer"] = nullptr;
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  try {
    detail::require(j.at("format") == "survlr-checkpoint", ErrorKind::InvalidInput, "not a survlr checkpoint");
    detail::require(j.at("schema_version").get<int>() == kSchemaVersion, ErrorKind::InvalidInput,
                    "unsupported checkpoint schema version");
    NetworkSpec spec;
    spec.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    spec.hidden_activation = parse_activation(j.at("activation").get<std::string>());
    spec.seed = j.at("seed").get<std::uint64_t>();
    Checkpoint ckpt;
    ckpt.network = zero_network<double>(spec);
    const auto params = j.at("parameters").get<std::vector<double>>();
    ckpt.network.params.assign(Eigen::Map<const VectorD>(params.data(), static_cast<Eigen::Index>(params.size())));
    ckpt.config_hash = j.value("config_hash", "");
    if (!j.at("standardizer").is_null()) {
      const auto mean = j["standardizer"].at("mean").get<std::vector<double>>();
      const auto scale = j["standardizer"].at("scale").get<std::vector<double>>();
      ckpt.standardizer.mean = Eigen::Map<const VectorD>(mean.data(), static_cast<Eigen::Index>(mean.size()));
      ckpt.standardizer.scale = Eigen::Map<const VectorD>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, checkpoint_json(ckpt).dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

// ---------------------------------------------------------------- reports

inline json matrix_json(const MatrixD& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

inline json report_json(const RecoveryReport& r) {
  json j;
  j["subjects"] = r.subjects;
  j["cluster_sizes"] = r.cluster_sizes;
  j["hard_logrank_statistic"] = r.hard_logrank_statistic;
  j["hard_logrank_p"] = r.hard_logrank_p;
  j["c_index"] = r.c_index;
  if (r.recovery) {
    j["matching"] = r.recovery->matching;
    j["accuracy"] = r.recovery->accuracy;
    j["auc_per_class"] = r.recovery->auc_per_class;
    j["confusion"] = matrix_json(r.recovery->confusion);
  }
  return j;
}

/// Human-readable aligned summary of a report.
inline std::string report_table(const RecoveryReport& r, const std::string& title) {
  std::ostringstream out;
  out << title << "\n";
  out << std::left << std::setw(26) << "  subjects" << r.subjects << "\n";
  out << std::setw(26) << "  cluster sizes";
  for (int s : r.cluster_sizes) out << std::setw(8) << s;
  out << "\n" << std::setw(26) << "  hard logrank statistic" << std::setprecision(6) << r.hard_logrank_statistic
      << "\n";
  out << std::setw(26) << "  hard logrank p-value" << std::setprecision(4) << r.hard_logrank_p << "\n";
  out << std::setw(26) << "  c-index" << std::fixed << std::setprecision(4) << r.c_index << "\n";
  if (r.recovery) {
    const auto& m = *r.recovery;
    out << std::setw(26) << "  matched accuracy" << m.accuracy << "\n";
    out << std::setw(26) << "  AUC per class";
    for (double a : m.auc_per_class) out << std::setw(8) << a;
    out << "\n  confusion (rows = truth)\n";
    for (Eigen::Index row = 0; row < m.confusion.rows(); ++row) {
      out << "    ";
      for (Eigen::Index c = 0; c < m.confusion.cols(); ++c) out << std::setw(8) << m.confusion(row, c);
      out << "\n";
    }
  }
  out.unsetf(std::ios::fixed);
  return out.str();
}

}  // namespace survlr
