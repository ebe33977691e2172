#include <cmath>

#include "tsprobe/io_util.hpp"
#include "tsprobe/serialize.hpp"

namespace tsprobe {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const ConceptSpec& spec) {
  json ranges = json::object();
  for (const auto& [key, r] : spec.ranges) ranges[key] = json::array({r.lo, r.hi});
  json j = {{"kind", std::string(to_string(spec.kind))},
            {"length", spec.length},
            {"normalization", std::string(to_string(spec.normalization))},
            {"ranges", ranges}};
  if (spec.kind == ConceptKind::Spectral) j["k_max"] = spec.k_max;
  return j;
}

ConceptSpec concept_spec_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ValidationError(where + ".kind: missing or not a string");
  ConceptKind kind;
  try {
    kind = parse_concept_kind(j["kind"].get<std::string>());
  } catch (const ValidationError& e) {
    throw ValidationError(where + ".kind: " + e.what());
  }
  std::size_t length = 256;
  if (j.contains("length")) {
    if (!j["length"].is_number_integer() || j["length"].get<std::int64_t>() < 0) throw ValidationError(where + ".length: expected a positive integer");
    length = j["length"].get<std::size_t>();
  }
  ConceptSpec spec = ConceptSpec::defaults(kind, length);
  if (j.contains("normalization")) {
    try {
      spec.normalization = parse_normalization(j["normalization"].get<std::string>());
    } catch (const std::exception& e) {
      throw ValidationError(where + ".normalization: " + e.what());
    }
  }
  if (j.contains("ranges")) {
    if (!j["ranges"].is_object()) throw ValidationError(where + ".ranges: expected an object");
    for (const auto& [key, value] : j["ranges"].items()) {
      const auto field = where + ".ranges." + key;
      if (!spec.ranges.contains(key)) throw ValidationError(field + ": not a parameter of this concept");
      if (value.is_number()) {
        spec.ranges[key] = {value.get<double>(), value.get<double>()};
      } else if (value.is_array() && value.size() == 2 && value[0].is_number() && value[1].is_number()) {
        spec.ranges[key] = {value[0].get<double>(), value[1].get<double>()};
      } else {
        throw ValidationError(field + ": expected [lo, hi] or a number");
      }
    }
  }
  if (j.contains("k_max")) {
    if (!j["k_max"].is_number_integer()) throw ValidationError(where + ".k_max: expected an integer");
    spec.k_max = j["k_max"].get<int>();
  }
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  return spec;
}

json provenance_json(const Provenance& provenance) {
  json j = {{"seed", provenance.seed}};
  if (provenance.config_hash) j["config_hash"] = *provenance.config_hash;
  return j;
}

std::string provenance_comment(const Provenance& provenance) {
  std::string s;
  if (provenance.config_hash) s += "config_hash=" + *provenance.config_hash + " ";
  s += "seed=" + std::to_string(provenance.seed);
  return s;
}

void save_dataset(const ConceptDataset& ds, const fs::path& dir, const Provenance& provenance) {
  fs::create_directories(dir);
  const auto values = ds.values();
  io::write_f32_file(dir / "series.f32", std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));

  io::CsvWriter targets(dir / "targets.csv");
  targets.comment(provenance_comment(provenance));
  targets.header(ds.target_names);
  for (Eigen::Index i = 0; i < ds.targets.rows(); ++i) {
    std::vector<double> row(ds.targets.cols());
    for (Eigen::Index j = 0; j < ds.targets.cols(); ++j) row[j] = ds.targets(i, j);
    targets.row(std::span<const double>(row));
  }

  json series = json::array();
  for (const auto& s : ds.series) {
    series.push_back({{"seed", s.seed},
                      {"applied_normalization", std::string(to_string(s.applied_normalization))},
                      {"params", s.params}});
  }
  json meta = {{"format", "tsprobe-dataset"},
               {"version", 1},
               {"spec", to_json(ds.spec)},
               {"master_seed", ds.master_seed},
               {"n", ds.size()},
               {"length", ds.length()},
               {"normalization", std::string(to_string(ds.spec.normalization))},
               {"target_names", ds.target_names},
               {"train_indices", ds.train_indices()},
               {"val_indices", ds.val_indices()},
               {"series", series},
               {"provenance", provenance_json(provenance)}};
  io::write_json(dir / "meta.json", meta);
}

ConceptDataset load_dataset(const fs::path& dir) {
  const auto meta = io::read_json(dir / "meta.json");
  if (meta.value("format", "") != "tsprobe-dataset" || meta.value("version", 0) != 1)
    throw FormatError("'" + dir.string() + "': not a version-1 dataset directory");

  ConceptDataset ds;
  ds.spec = concept_spec_from_json(meta.at("spec"), "meta.spec");
  ds.master_seed = meta.at("master_seed").get<std::uint64_t>();
  const auto n = meta.at("n").get<std::size_t>();
  const auto T = meta.at("length").get<std::size_t>();
  ds.target_names = meta.at("target_names").get<std::vector<std::string>>();

  const auto raw = io::read_f32_file(dir / "series.f32");
  if (raw.size() != n * T)
    throw FormatError("'" + dir.string() + "': series.f32 holds " + std::to_string(raw.size()) +
                      " values, expected " + std::to_string(n * T));
  const auto& series_meta = meta.at("series");
  if (series_meta.size() != n) throw FormatError("'" + dir.string() + "': series metadata count mismatch");
  ds.series.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = ds.series[i];
    s.kind = ds.spec.kind;
    s.values.assign(raw.begin() + static_cast<std::ptrdiff_t>(i * T), raw.begin() + static_cast<std::ptrdiff_t>((i + 1) * T));
    s.seed = series_meta[i].at("seed").get<std::uint64_t>();
    s.applied_normalization = parse_normalization(series_meta[i].at("applied_normalization").get<std::string>());
    s.params = series_meta[i].at("params").get<ParamMap>();
  }

  const auto table = io::read_csv(dir / "targets.csv");
  if (table.header != ds.target_names) throw FormatError("'" + dir.string() + "': targets.csv header mismatch");
  if (table.rows.size() != n) throw FormatError("'" + dir.string() + "': targets.csv row count mismatch");
  ds.targets.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ds.target_names.size()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < ds.target_names.size(); ++j)
      ds.targets(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::stod(table.rows[i][j]);

  ds.is_train.assign(n, false);
  for (auto i : meta.at("train_indices").get<std::vector<std::size_t>>()) {
    if (i >= n) throw FormatError("'" + dir.string() + "': train index out of range");
    ds.is_train[i] = true;
  }
  return ds;
}

}  // namespace tsprobe
