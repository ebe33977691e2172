#include "tsprobe/compose.hpp"

#include <cmath>
#include <fstream>

#include "tsprobe/io_util.hpp"
#include "tsprobe/parallel.hpp"
#include "tsprobe/serialize.hpp"

namespace tsprobe {

namespace fs = std::filesystem;
using nlohmann::json;

void StructuredConfig::validate() const {
  const bool ordered = 0.0 < alpha_low && alpha_low < alpha_high && alpha_high <= beta_low && beta_low < beta_high &&
                       beta_high < 1.0;
  if (!ordered)
    throw ValidationError("structured config must satisfy 0 < alpha_low < alpha_high <= beta_low < beta_high < 1");
}

void FunctionalConfig::validate() const {
  if (alpha && !(*alpha > 0.0 && *alpha <= 1.0)) throw ValidationError("functional alpha must lie in (0, 1]");
}

std::string_view to_string(CompositionMode mode) {
  return mode == CompositionMode::Structured ? "structured" : "functional";
}

std::vector<std::size_t> CompositeDataset::val_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < is_train.size(); ++i)
    if (!is_train[i]) out.push_back(i);
  return out;
}

namespace {

void check_same_shape(const SeriesMatrix& t1, const SeriesMatrix& t2) {
  if (t1.rows() != t2.rows() || t1.cols() != t2.cols())
    throw ValidationError("composition sources differ in series count or length");
  if (t1.rows() < 1 || t1.cols() < 2) throw ValidationError("composition sources are empty");
}

void attach_sources(CompositeDataset& out, const ConceptDataset& ds1, const ConceptDataset& ds2) {
  out.kind1 = ds1.spec.kind;
  out.kind2 = ds2.spec.kind;
  for (const auto& s : ds1.series) out.params1.push_back(s.params);
  for (const auto& s : ds2.series) out.params2.push_back(s.params);
  out.target_names1 = ds1.target_names;
  out.target_names2 = ds2.target_names;
  out.targets1 = ds1.targets;
  out.targets2 = ds2.targets;
  out.is_train = ds1.is_train;
}

std::span<const double> row_span(const SeriesMatrix& m, Eigen::Index i) {
  return {m.row(i).data(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

std::vector<double> interleave(std::span<const double> t1, std::span<const double> t2, Breakpoints& bp) {
  const std::size_t T = t1.size();
  if (t2.size() != T) throw ValidationError("interleave sources differ in length");
  if (!(bp.a < bp.b && bp.b < T)) throw ValidationError("breakpoints must satisfy a < b < T");
  bp.delta1 = t1[bp.a] - t2[bp.a];
  bp.delta2 = t2[bp.b] - t1[bp.b] + bp.delta1;
  std::vector<double> x(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (t < bp.a) {
      x[t] = t1[t];
    } else if (t < bp.b) {
      x[t] = t2[t] + bp.delta1;
    } else {
      x[t] = t1[t] + bp.delta2;
    }
  }
  // t2[a] + (t1[a] - t2[a]) can differ from t1[a] by one rounding step.
  x[bp.a] = t1[bp.a];
  return x;
}

CompositeDataset compose_structured(const SeriesMatrix& t1, const SeriesMatrix& t2, const StructuredConfig& cfg,
                                    std::uint64_t seed) {
  cfg.validate();
  check_same_shape(t1, t2);
  const auto N = t1.rows();
  const auto T = t1.cols();
  const double Td = static_cast<double>(T);
  const auto a_lo = static_cast<std::int64_t>(std::floor(cfg.alpha_low * Td));
  const auto a_hi = static_cast<std::int64_t>(std::floor(cfg.alpha_high * Td));
  const auto b_lo = static_cast<std::int64_t>(std::floor(cfg.beta_low * Td));
  const auto b_hi = static_cast<std::int64_t>(std::floor(cfg.beta_high * Td));
  if (b_hi <= a_lo || b_hi > T - 1) throw ValidationError("series too short for the structured breakpoint ranges");

  CompositeDataset out;
  out.mode = CompositionMode::Structured;
  out.structured = cfg;
  out.seed = seed;
  out.source1 = t1;
  out.source2 = t2;
  out.composites.resize(N, T);
  out.masks = MaskMatrix::Zero(N, T);
  out.breakpoints.resize(static_cast<std::size_t>(N));

  parallel_for(static_cast<std::size_t>(N), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    Rng rng(derive_seed(seed, i));
    Breakpoints bp;
    const auto a = rng.uniform_int(a_lo, a_hi);
    // a < b is guaranteed when alpha_high < beta_low; at equality the draw
    // is restricted to b > a.
    const auto b = rng.uniform_int(std::max(b_lo, a + 1), b_hi);
    bp.a = static_cast<std::size_t>(a);
    bp.b = static_cast<std::size_t>(b);
    const auto x = interleave(row_span(t1, row), row_span(t2, row), bp);
    out.composites.row(row) = Eigen::Map<const Eigen::RowVectorXd>(x.data(), T);
    for (auto t = bp.a; t < bp.b; ++t) out.masks(row, static_cast<Eigen::Index>(t)) = 1;
    out.breakpoints[i] = bp;
  });
  return out;
}

CompositeDataset compose_structured(const ConceptDataset& ds1, const ConceptDataset& ds2, const StructuredConfig& cfg,
                                    std::uint64_t seed) {
  if (ds1.size() != ds2.size() || ds1.length() != ds2.length())
    throw ValidationError("composition sources differ in series count or length");
  auto out = compose_structured(ds1.values(), ds2.values(), cfg, seed);
  attach_sources(out, ds1, ds2);
  return out;
}

CompositeDataset compose_functional(const SeriesMatrix& t1, const SeriesMatrix& t2, const FunctionalConfig& cfg) {
  cfg.validate();
  check_same_shape(t1, t2);
  CompositeDataset out;
  out.mode = CompositionMode::Functional;
  out.functional = cfg;
  out.source1 = t1;
  out.source2 = t2;
  if (cfg.normalize) {
    for (Eigen::Index i = 0; i < t1.rows(); ++i) {
      const auto z1 = zscore(row_span(t1, i)).values;
      const auto z2 = zscore(row_span(t2, i)).values;
      out.source1.row(i) = Eigen::Map<const Eigen::RowVectorXd>(z1.data(), t1.cols());
      out.source2.row(i) = Eigen::Map<const Eigen::RowVectorXd>(z2.data(), t2.cols());
    }
  }
  if (cfg.alpha) {
    const double alpha = *cfg.alpha;
    out.composites = alpha * out.source1 + (1.0 - alpha) * out.source2;
  } else {
    out.composites = out.source1 + out.source2;
  }
  return out;
}

CompositeDataset compose_functional(const ConceptDataset& ds1, const ConceptDataset& ds2, const FunctionalConfig& cfg) {
  if (ds1.size() != ds2.size() || ds1.length() != ds2.length())
    throw ValidationError("composition sources differ in series count or length");
  auto out = compose_functional(ds1.values(), ds2.values(), cfg);
  attach_sources(out, ds1, ds2);
  return out;
}

std::pair<SeriesMatrix, SeriesMatrix> mixed_parts(const CompositeDataset& c) {
  if (c.source1.size() == 0 || c.source2.size() == 0) throw ValidationError("composite has no source series attached");
  if (c.mode == CompositionMode::Functional && c.functional.alpha) {
    const double alpha = *c.functional.alpha;
    return {alpha * c.source1, (1.0 - alpha) * c.source2};
  }
  return {c.source1, c.source2};
}

namespace {

void write_targets(const fs::path& path, const std::vector<std::string>& names, const Eigen::MatrixXd& targets,
                   const Provenance& provenance) {
  io::CsvWriter csv(path);
  csv.comment(provenance_comment(provenance));
  csv.header(names);
  std::vector<double> row(static_cast<std::size_t>(targets.cols()));
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    for (Eigen::Index j = 0; j < targets.cols(); ++j) row[static_cast<std::size_t>(j)] = targets(i, j);
    csv.row(std::span<const double>(row));
  }
}

Eigen::MatrixXd read_targets(const fs::path& path, std::vector<std::string>& names, std::size_t n) {
  const auto table = io::read_csv(path);
  if (table.rows.size() != n) throw FormatError("'" + path.string() + "': row count mismatch");
  names = table.header;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < names.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::stod(table.rows[i][j]);
  return out;
}

}  // namespace

void save_composite(const CompositeDataset& c, const fs::path& dir, const Provenance& provenance) {
  fs::create_directories(dir);
  io::write_f32_file(dir / "series.f32",
                     std::span<const double>(c.composites.data(), static_cast<std::size_t>(c.composites.size())));
  write_targets(dir / "targets_c1.csv", c.target_names1, c.targets1, provenance);
  write_targets(dir / "targets_c2.csv", c.target_names2, c.targets2, provenance);

  json config;
  if (c.mode == CompositionMode::Structured) {
    config = {{"alpha_low", c.structured.alpha_low},
              {"alpha_high", c.structured.alpha_high},
              {"beta_low", c.structured.beta_low},
              {"beta_high", c.structured.beta_high}};
    std::ofstream masks(dir / "masks.u8", std::ios::binary);
    masks.write(reinterpret_cast<const char*>(c.masks.data()), static_cast<std::streamsize>(c.masks.size()));
    io::CsvWriter bp(dir / "breakpoints.csv");
    bp.comment(provenance_comment(provenance));
    bp.header({"a", "b", "delta1", "delta2"});
    for (const auto& b : c.breakpoints) bp.row(b.a, b.b, b.delta1, b.delta2);
  } else {
    config = {{"normalize", c.functional.normalize}, {"alpha", nullptr}};
    if (c.functional.alpha) config["alpha"] = *c.functional.alpha;
  }

  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < c.is_train.size(); ++i)
    if (c.is_train[i]) train.push_back(i);
  json meta = {{"format", "tsprobe-composite"},
               {"version", 1},
               {"mode", std::string(to_string(c.mode))},
               {"kind1", std::string(to_string(c.kind1))},
               {"kind2", std::string(to_string(c.kind2))},
               {"n", c.size()},
               {"length", c.length()},
               {"config", config},
               {"seed", c.seed},
               {"train_indices", train},
               {"val_indices", c.val_indices()},
               {"params_c1", c.params1},
               {"params_c2", c.params2},
               {"provenance", provenance_json(provenance)}};
  io::write_json(dir / "meta.json", meta);
}

CompositeDataset load_composite(const fs::path& dir) {
  const auto meta = io::read_json(dir / "meta.json");
  if (meta.value("format", "") != "tsprobe-composite" || meta.value("version", 0) != 1)
    throw FormatError("'" + dir.string() + "': not a version-1 composite directory");
  CompositeDataset c;
  c.mode = meta.at("mode").get<std::string>() == "structured" ? CompositionMode::Structured : CompositionMode::Functional;
  c.kind1 = parse_concept_kind(meta.at("kind1").get<std::string>());
  c.kind2 = parse_concept_kind(meta.at("kind2").get<std::string>());
  c.seed = meta.at("seed").get<std::uint64_t>();
  const auto n = meta.at("n").get<std::size_t>();
  const auto T = meta.at("length").get<std::size_t>();
  const auto N = static_cast<Eigen::Index>(n);
  const auto Ti = static_cast<Eigen::Index>(T);

  const auto raw = io::read_f32_file(dir / "series.f32");
  if (raw.size() != n * T) throw FormatError("'" + dir.string() + "': series.f32 size mismatch");
  c.composites.resize(N, Ti);
  for (std::size_t i = 0; i < raw.size(); ++i) c.composites.data()[i] = raw[i];

  c.targets1 = read_targets(dir / "targets_c1.csv", c.target_names1, n);
  c.targets2 = read_targets(dir / "targets_c2.csv", c.target_names2, n);
  c.params1 = meta.at("params_c1").get<std::vector<ParamMap>>();
  c.params2 = meta.at("params_c2").get<std::vector<ParamMap>>();
  c.is_train.assign(n, false);
  for (auto i : meta.at("train_indices").get<std::vector<std::size_t>>()) {
    if (i >= n) throw FormatError("'" + dir.string() + "': train index out of range");
    c.is_train[i] = true;
  }

  const auto& config = meta.at("config");
  if (c.mode == CompositionMode::Structured) {
    c.structured = {config.at("alpha_low").get<double>(), config.at("alpha_high").get<double>(),
                    config.at("beta_low").get<double>(), config.at("beta_high").get<double>()};
    const auto masks = io::read_file(dir / "masks.u8");
    if (masks.size() != n * T) throw FormatError("'" + dir.string() + "': masks.u8 size mismatch");
    c.masks.resize(N, Ti);
    std::copy(masks.begin(), masks.end(), reinterpret_cast<char*>(c.masks.data()));
    const auto table = io::read_csv(dir / "breakpoints.csv");
    if (table.rows.size() != n) throw FormatError("'" + dir.string() + "': breakpoints.csv row count mismatch");
    for (const auto& row : table.rows)
      c.breakpoints.push_back({std::stoul(row[0]), std::stoul(row[1]), std::stod(row[2]), std::stod(row[3])});
  } else {
    c.functional.normalize = config.at("normalize").get<bool>();
    if (!config.at("alpha").is_null()) c.functional.alpha = config.at("alpha").get<double>();
  }
  return c;
}

}  // namespace tsprobe
