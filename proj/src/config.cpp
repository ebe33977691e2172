#include "tsprobe/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tsprobe/io_util.hpp"
#include "tsprobe/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsprobe {

std::string ProviderConfig::label() const {
  switch (kind) {
    case ProviderKind::Toy: return "toy";
    case ProviderKind::Identity: return "identity";
    case ProviderKind::File: return "file:" + directory.string();
  }
  return "?";
}

const NamedConcept* ExperimentConfig::find_concept(const std::string& name) const {
  for (const auto& c : concepts)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

// Documents built in code store integers as signed, parsed files as unsigned.
bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

class Parser {
 public:
  explicit Parser(std::vector<std::string>& errors) : errors_(errors) {}

  void error(const std::string& where, const std::string& msg) { errors_.push_back(where + ": " + msg); }

  void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
      (void)value;
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
        error(join(where, key), "unknown field");
    }
  }

  static std::string join(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
  }

  template <typename T>
  void read_uint(const json& obj, const std::string& where, const char* key, T& out, T min_value = 0) {
    if (!obj.contains(key)) return;
    const auto& v = obj[key];
    if (!is_count(v) || v.get<std::uint64_t>() < static_cast<std::uint64_t>(min_value)) {
      error(join(where, key), "expected an integer >= " + std::to_string(min_value));
      return;
    }
    out = static_cast<T>(v.get<std::uint64_t>());
  }

  void read_double(const json& obj, const std::string& where, const char* key, double& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_number() || !std::isfinite(obj[key].get<double>())) {
      error(join(where, key), "expected a finite number");
      return;
    }
    out = obj[key].get<double>();
  }

  void read_bool(const json& obj, const std::string& where, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_boolean()) {
      error(join(where, key), "expected true or false");
      return;
    }
    out = obj[key].get<bool>();
  }

  bool require_object(const json& v, const std::string& where) {
    if (v.is_object()) return true;
    error(where, "expected an object");
    return false;
  }

 private:
  std::vector<std::string>& errors_;
};

bool valid_name(const std::string& name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

void parse_range_pair(Parser& p, const json& obj, const std::string& where, const char* key, double& lo, double& hi) {
  if (!obj.contains(key)) return;
  const auto& v = obj[key];
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    p.error(Parser::join(where, key), "expected [low, high]");
    return;
  }
  lo = v[0].get<double>();
  hi = v[1].get<double>();
}

void parse_composition(Parser& p, const json& j, const std::string& where, CompositionPair& pair) {
  if (!p.require_object(j, where)) return;
  p.check_keys(j, where, {"c1", "c2", "mode", "alpha_range", "beta_range", "normalize", "alpha"});
  for (const char* key : {"c1", "c2"}) {
    if (!j.contains(key) || !j[key].is_string()) {
      p.error(Parser::join(where, key), "missing or not a string");
      continue;
    }
    (std::string_view(key) == "c1" ? pair.c1 : pair.c2) = j[key].get<std::string>();
  }
  if (j.contains("mode")) {
    const auto mode = j["mode"].is_string() ? j["mode"].get<std::string>() : "";
    if (mode == "structured") {
      pair.mode = CompositionMode::Structured;
    } else if (mode == "functional") {
      pair.mode = CompositionMode::Functional;
    } else {
      p.error(where + ".mode", "expected \"structured\" or \"functional\"");
    }
  }
  if (pair.mode == CompositionMode::Structured) {
    for (const char* key : {"normalize", "alpha"})
      if (j.contains(key)) p.error(Parser::join(where, key), "only valid for functional composition");
    parse_range_pair(p, j, where, "alpha_range", pair.structured.alpha_low, pair.structured.alpha_high);
    parse_range_pair(p, j, where, "beta_range", pair.structured.beta_low, pair.structured.beta_high);
    try {
      pair.structured.validate();
    } catch (const ValidationError& e) {
      p.error(where, e.what());
    }
  } else {
    for (const char* key : {"alpha_range", "beta_range"})
      if (j.contains(key)) p.error(Parser::join(where, key), "only valid for structured composition");
    p.read_bool(j, where, "normalize", pair.functional.normalize);
    if (j.contains("alpha")) {
      double alpha = 0.0;
      p.read_double(j, where, "alpha", alpha);
      pair.functional.alpha = alpha;
    }
    try {
      pair.functional.validate();
    } catch (const ValidationError& e) {
      p.error(where, e.what());
    }
  }
}

void parse_provider(Parser& p, const json& j, ProviderConfig& provider) {
  const std::string where = "provider";
  auto parse_kind = [&](const std::string& s) {
    if (s == "toy") {
      provider.kind = ProviderKind::Toy;
    } else if (s == "identity") {
      provider.kind = ProviderKind::Identity;
    } else if (s.rfind("file:", 0) == 0 && s.size() > 5) {
      provider.kind = ProviderKind::File;
      provider.directory = s.substr(5);
    } else {
      p.error(where, "expected \"toy\", \"identity\" or \"file:<dir>\", got \"" + s + "\"");
    }
  };
  if (j.is_string()) {
    parse_kind(j.get<std::string>());
    return;
  }
  if (!p.require_object(j, where)) return;
  p.check_keys(j, where, {"kind", "patch_len", "d_model", "n_layers", "n_heads", "mlp_ratio", "init_seed"});
  if (!j.contains("kind") || !j["kind"].is_string()) {
    p.error(where + ".kind", "missing or not a string");
    return;
  }
  parse_kind(j["kind"].get<std::string>());
  auto& t = provider.toy;
  const bool toy_fields = j.contains("patch_len") || j.contains("d_model") || j.contains("n_layers") ||
                          j.contains("n_heads") || j.contains("mlp_ratio") || j.contains("init_seed");
  if (toy_fields && provider.kind != ProviderKind::Toy) p.error(where, "encoder fields are only valid for the toy provider");
  p.read_uint(j, where, "patch_len", t.patch_len, std::size_t{1});
  p.read_uint(j, where, "d_model", t.d_model, std::size_t{1});
  p.read_uint(j, where, "n_layers", t.n_layers, std::size_t{1});
  p.read_uint(j, where, "n_heads", t.n_heads, std::size_t{1});
  p.read_uint(j, where, "mlp_ratio", t.mlp_ratio, std::size_t{1});
  p.read_uint(j, where, "init_seed", t.init_seed);
  try {
    t.validate();
  } catch (const ValidationError& e) {
    p.error(where, e.what());
  }
}

void parse_analyses(Parser& p, const json& j, AnalysisToggles& a) {
  const std::string where = "analyses";
  if (j.is_array()) {
    a = AnalysisToggles{false, false, false, false, false, false, false};
    for (std::size_t i = 0; i < j.size(); ++i) {
      const auto name = j[i].is_string() ? j[i].get<std::string>() : "";
      bool* flag = name == "sweep"        ? &a.sweep
                   : name == "cka"        ? &a.cka
                   : name == "transfer"   ? &a.transfer
                   : name == "ablation"   ? &a.ablation
                   : name == "arithmetic" ? &a.arithmetic
                   : name == "alignment"  ? &a.alignment
                   : name == "dimred"     ? &a.dimred
                                          : nullptr;
      if (!flag) {
        p.error(where + "[" + std::to_string(i) + "]", "unknown analysis");
      } else {
        *flag = true;
      }
    }
    return;
  }
  if (!p.require_object(j, where)) return;
  p.check_keys(j, where, {"sweep", "cka", "transfer", "ablation", "arithmetic", "alignment", "dimred"});
  p.read_bool(j, where, "sweep", a.sweep);
  p.read_bool(j, where, "cka", a.cka);
  p.read_bool(j, where, "transfer", a.transfer);
  p.read_bool(j, where, "ablation", a.ablation);
  p.read_bool(j, where, "arithmetic", a.arithmetic);
  p.read_bool(j, where, "alignment", a.alignment);
  p.read_bool(j, where, "dimred", a.dimred);
}

void parse_dimred(Parser& p, const json& j, DimredConfig& d) {
  const std::string where = "dimred";
  if (!p.require_object(j, where)) return;
  p.check_keys(j, where, {"methods", "layers", "max_points", "tsne", "umap"});
  if (j.contains("methods")) {
    d.methods.clear();
    const auto& m = j["methods"];
    if (!m.is_array() || m.empty()) {
      p.error(where + ".methods", "expected a non-empty list");
    } else {
      for (std::size_t i = 0; i < m.size(); ++i) {
        const auto name = m[i].is_string() ? m[i].get<std::string>() : "";
        if (name != "pca" && name != "tsne" && name != "umap") {
          p.error(where + ".methods[" + std::to_string(i) + "]", "expected \"pca\", \"tsne\" or \"umap\"");
        } else if (std::find(d.methods.begin(), d.methods.end(), name) != d.methods.end()) {
          p.error(where + ".methods[" + std::to_string(i) + "]", "duplicate method");
        } else {
          d.methods.push_back(name);
        }
      }
    }
  }
  if (j.contains("layers")) {
    const auto& l = j["layers"];
    if (!l.is_array() || l.empty() || !std::all_of(l.begin(), l.end(), is_count)) {
      p.error(where + ".layers", "expected a non-empty list of layer indices");
    } else {
      d.layers = l.get<std::vector<std::size_t>>();
      std::sort(d.layers.begin(), d.layers.end());
      d.layers.erase(std::unique(d.layers.begin(), d.layers.end()), d.layers.end());
    }
  }
  p.read_uint(j, where, "max_points", d.max_points, std::size_t{4});
  if (j.contains("tsne") && p.require_object(j["tsne"], where + ".tsne")) {
    const auto& t = j["tsne"];
    const auto w = where + ".tsne";
    p.check_keys(t, w, {"perplexity", "iterations", "learning_rate", "exaggeration", "exaggeration_iters"});
    p.read_double(t, w, "perplexity", d.tsne.perplexity);
    p.read_uint(t, w, "iterations", d.tsne.iterations, std::size_t{1});
    p.read_double(t, w, "learning_rate", d.tsne.learning_rate);
    p.read_double(t, w, "exaggeration", d.tsne.exaggeration);
    p.read_uint(t, w, "exaggeration_iters", d.tsne.exaggeration_iters);
    if (d.tsne.learning_rate <= 0.0) p.error(w + ".learning_rate", "must be positive");
    if (d.tsne.exaggeration < 1.0) p.error(w + ".exaggeration", "must be >= 1");
  }
  if (j.contains("umap") && p.require_object(j["umap"], where + ".umap")) {
    const auto& u = j["umap"];
    const auto w = where + ".umap";
    p.check_keys(u, w, {"n_neighbors", "epochs", "negative_samples", "learning_rate"});
    p.read_uint(u, w, "n_neighbors", d.umap.n_neighbors, std::size_t{2});
    p.read_uint(u, w, "epochs", d.umap.epochs, std::size_t{1});
    p.read_uint(u, w, "negative_samples", d.umap.negative_samples);
    p.read_double(u, w, "learning_rate", d.umap.learning_rate);
    if (d.umap.learning_rate <= 0.0) p.error(w + ".learning_rate", "must be positive");
  }
}

std::size_t provider_layers(const ProviderConfig& provider) {
  switch (provider.kind) {
    case ProviderKind::Toy: return provider.toy.n_layers + 1;
    case ProviderKind::Identity: return 2;
    case ProviderKind::File: return 0;  // known only after loading
  }
  return 0;
}

std::size_t provider_min_length(const ProviderConfig& provider) {
  return provider.kind == ProviderKind::Toy ? provider.toy.patch_len : 1;
}

void semantic_checks(Parser& p, ExperimentConfig& cfg) {
  if (!cfg.analyses.any()) p.error("analyses", "at least one analysis must be enabled");
  const auto min_len = provider_min_length(cfg.provider);

  std::set<std::string> names;
  for (std::size_t i = 0; i < cfg.concepts.size(); ++i) {
    const auto where = "concepts[" + std::to_string(i) + "]";
    const auto& c = cfg.concepts[i];
    if (!valid_name(c.name)) p.error(where + ".name", "use letters, digits, '_' or '-'");
    if (!names.insert(c.name).second) p.error(where + ".name", "duplicate concept name '" + c.name + "'");
    if (c.spec.length < min_len)
      p.error(where + ".length", "shorter than the provider minimum of " + std::to_string(min_len));
  }

  std::set<std::string> labels;
  for (std::size_t i = 0; i < cfg.compositions.size(); ++i) {
    const auto where = "compositions[" + std::to_string(i) + "]";
    const auto& pair = cfg.compositions[i];
    const auto* c1 = cfg.find_concept(pair.c1);
    const auto* c2 = cfg.find_concept(pair.c2);
    if (!c1 || !c2) {
      std::string missing = !c1 ? pair.c1 : pair.c2;
      if (!c1 && !c2) missing = pair.c1 + "' and '" + pair.c2;
      p.error(where, "pair (" + pair.c1 + ", " + pair.c2 + ") references undeclared concept '" + missing + "'");
      continue;
    }
    if (c1->spec.length != c2->spec.length)
      p.error(where, "pair (" + pair.c1 + ", " + pair.c2 + ") joins concepts of different lengths");
    if (!labels.insert(pair.label()).second) p.error(where, "duplicate pair (" + pair.c1 + ", " + pair.c2 + ")");
  }

  const auto& a = cfg.analyses;
  if ((a.transfer || a.ablation) && !a.sweep)
    for (auto [flag, name] : {std::pair{a.transfer, "transfer"}, std::pair{a.ablation, "ablation"}})
      if (flag) p.error(std::string("analyses.") + name, "requires analyses.sweep (frozen probes)");
  if ((a.transfer || a.arithmetic) && cfg.compositions.empty())
    for (auto [flag, name] : {std::pair{a.transfer, "transfer"}, std::pair{a.arithmetic, "arithmetic"}})
      if (flag) p.error(std::string("analyses.") + name, "requires at least one composition pair");
  if (a.alignment &&
      std::none_of(cfg.compositions.begin(), cfg.compositions.end(),
                   [](const CompositionPair& pr) { return pr.mode == CompositionMode::Functional; }))
    p.error("analyses.alignment", "requires at least one functional composition pair");

  if (cfg.provider.kind == ProviderKind::File) {
    for (auto [flag, name] : {std::pair{a.transfer, "transfer"}, std::pair{a.ablation, "ablation"},
                              std::pair{a.arithmetic, "arithmetic"}, std::pair{a.alignment, "alignment"}})
      if (flag) p.error(std::string("analyses.") + name, "needs to re-encode series, which a file provider cannot do");
    std::error_code ec;
    if (!fs::is_directory(cfg.provider.directory, ec)) {
      p.error("provider", "embedding directory '" + cfg.provider.directory.string() + "' does not exist");
    } else {
      for (std::size_t i = 0; i < cfg.concepts.size(); ++i) {
        const auto file = cfg.provider.directory / (cfg.concepts[i].name + ".tsem");
        if (!fs::is_regular_file(file, ec))
          p.error("concepts[" + std::to_string(i) + "]", "embedding file '" + file.string() + "' does not exist");
      }
    }
  }

  if (a.ablation) {
    const auto& f = cfg.ablation_fractions;
    if (f.empty() || !std::is_sorted(f.begin(), f.end()) || std::adjacent_find(f.begin(), f.end()) != f.end() ||
        f.front() <= 0.0 || f.back() != 1.0) {
      p.error("ablation_fractions", "expected strictly increasing fractions in (0, 1] ending with 1.0");
    } else {
      for (std::size_t i = 0; i < cfg.concepts.size(); ++i) {
        const auto T = cfg.concepts[i].spec.length;
        const auto kept = static_cast<std::size_t>(std::floor(f.front() * static_cast<double>(T)));
        if (kept < std::max<std::size_t>(min_len, 2))
          p.error("ablation_fractions[0]", "keeps " + std::to_string(kept) + " samples of concept '" +
                                              cfg.concepts[i].name + "', below the provider minimum");
      }
    }
  }
  if (a.alignment) {
    const auto& l = cfg.alignment_lengths;
    if (l.empty() || !std::is_sorted(l.begin(), l.end()) || std::adjacent_find(l.begin(), l.end()) != l.end()) {
      p.error("alignment_lengths", "expected a strictly increasing list");
    } else if (l.front() < std::max<std::size_t>(min_len, 2)) {
      p.error("alignment_lengths[0]", "below the provider minimum of " + std::to_string(std::max<std::size_t>(min_len, 2)));
    }
  }
  if (a.dimred) {
    const auto layers = provider_layers(cfg.provider);
    for (auto l : cfg.dimred.layers)
      if (layers > 0 && l >= layers)
        p.error("dimred.layers", "layer " + std::to_string(l) + " does not exist (provider has " + std::to_string(layers) + ")");
    const auto points = std::min(cfg.dimred.max_points, cfg.n_series);
    const auto has = [&](const char* m) {
      return std::find(cfg.dimred.methods.begin(), cfg.dimred.methods.end(), m) != cfg.dimred.methods.end();
    };
    if (has("tsne") && !(cfg.dimred.tsne.perplexity >= 2.0 && cfg.dimred.tsne.perplexity < static_cast<double>(points) / 3.0))
      p.error("dimred.tsne.perplexity", "must satisfy 2 <= perplexity < points / 3 (points = " + std::to_string(points) + ")");
    if (has("umap") && cfg.dimred.umap.n_neighbors >= points)
      p.error("dimred.umap.n_neighbors", "must be below the number of points (" + std::to_string(points) + ")");
  }
}

}  // namespace

ExperimentConfig parse_config(const json& doc, std::vector<std::string>& errors) {
  Parser p(errors);
  ExperimentConfig cfg;
  if (!doc.is_object()) {
    p.error("(root)", "expected an object");
    return cfg;
  }
  p.check_keys(doc, "", {"schema_version", "master_seed", "n_series", "length", "concepts", "compositions", "provider",
                         "pooling", "probe", "analyses", "ablation_fractions", "alignment_lengths", "dimred",
                         "output_dir"});
  if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer()) {
    p.error("schema_version", "missing or not an integer");
  } else if (doc["schema_version"].get<int>() != kConfigSchemaVersion) {
    p.error("schema_version", "unsupported version " + doc["schema_version"].dump() + " (expected " +
                                  std::to_string(kConfigSchemaVersion) + ")");
  }
  p.read_uint(doc, "", "master_seed", cfg.master_seed);
  p.read_uint(doc, "", "n_series", cfg.n_series, std::size_t{10});
  p.read_uint(doc, "", "length", cfg.length, std::size_t{2});

  if (!doc.contains("concepts") || !doc["concepts"].is_array() || doc["concepts"].empty()) {
    p.error("concepts", "expected a non-empty list");
  } else {
    const auto& list = doc["concepts"];
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto where = "concepts[" + std::to_string(i) + "]";
      json entry = list[i].is_string() ? json{{"kind", list[i]}} : list[i];
      if (!p.require_object(entry, where)) continue;
      NamedConcept nc;
      if (entry.contains("name")) {
        if (!entry["name"].is_string()) {
          p.error(where + ".name", "expected a string");
          continue;
        }
        nc.name = entry["name"].get<std::string>();
        entry.erase("name");
      }
      if (!entry.contains("length")) entry["length"] = cfg.length;
      p.check_keys(entry, where, {"kind", "length", "normalization", "ranges", "k_max"});
      try {
        nc.spec = concept_spec_from_json(entry, where);
      } catch (const ValidationError& e) {
        errors.emplace_back(e.what());
        continue;
      }
      if (nc.name.empty()) nc.name = std::string(to_string(nc.spec.kind));
      cfg.concepts.push_back(std::move(nc));
    }
  }

  if (doc.contains("compositions")) {
    const auto& list = doc["compositions"];
    if (!list.is_array()) {
      p.error("compositions", "expected a list");
    } else {
      for (std::size_t i = 0; i < list.size(); ++i) {
        CompositionPair pair;
        parse_composition(p, list[i], "compositions[" + std::to_string(i) + "]", pair);
        cfg.compositions.push_back(std::move(pair));
      }
    }
  }

  if (doc.contains("provider")) parse_provider(p, doc["provider"], cfg.provider);
  if (doc.contains("pooling")) {
    try {
      cfg.pooling = parse_pooling(doc["pooling"].is_string() ? doc["pooling"].get<std::string>() : "");
    } catch (const ValidationError& e) {
      p.error("pooling", e.what());
    }
  }
  if (doc.contains("probe") && p.require_object(doc["probe"], "probe")) {
    const auto& j = doc["probe"];
    p.check_keys(j, "probe", {"ridge_lambda", "standardize"});
    p.read_double(j, "probe", "ridge_lambda", cfg.probe.ridge_lambda);
    p.read_bool(j, "probe", "standardize", cfg.probe.standardize_features);
    try {
      cfg.probe.validate();
    } catch (const ValidationError& e) {
      p.error("probe", e.what());
    }
  }
  if (doc.contains("analyses")) parse_analyses(p, doc["analyses"], cfg.analyses);
  if (doc.contains("ablation_fractions")) {
    const auto& f = doc["ablation_fractions"];
    if (!f.is_array() || !std::all_of(f.begin(), f.end(), [](const json& v) { return v.is_number(); })) {
      p.error("ablation_fractions", "expected a list of numbers");
    } else {
      cfg.ablation_fractions = f.get<std::vector<double>>();
    }
  }
  if (doc.contains("alignment_lengths")) {
    const auto& l = doc["alignment_lengths"];
    if (!l.is_array() || !std::all_of(l.begin(), l.end(), is_count)) {
      p.error("alignment_lengths", "expected a list of positive integers");
    } else {
      cfg.alignment_lengths = l.get<std::vector<std::size_t>>();
    }
  }
  if (doc.contains("dimred")) parse_dimred(p, doc["dimred"], cfg.dimred);
  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string() || doc["output_dir"].get<std::string>().empty()) {
      p.error("output_dir", "expected a non-empty string");
    } else {
      cfg.output_dir = doc["output_dir"].get<std::string>();
    }
  }

  if (errors.empty()) semantic_checks(p, cfg);

  json hashed = doc;
  hashed.erase("output_dir");
  cfg.hash = io::fnv1a_hex(hashed.dump());
  return cfg;
}

namespace {

json read_config_json(const fs::path& path, std::vector<std::string>& errors) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    errors.push_back("(file): invalid JSON: " + std::string(e.what()));
  } catch (const std::exception& e) {
    errors.push_back(std::string("(file): ") + e.what());
  }
  return json();
}

}  // namespace

std::vector<std::string> validate_config_file(const fs::path& path) {
  std::vector<std::string> errors;
  const auto doc = read_config_json(path, errors);
  if (errors.empty()) parse_config(doc, errors);
  return errors;
}

ExperimentConfig load_config(const fs::path& path, const json& overrides) {
  std::vector<std::string> errors;
  auto doc = read_config_json(path, errors);
  if (errors.empty() && doc.is_object())
    for (const auto& [key, value] : overrides.items()) doc[key] = value;
  ExperimentConfig cfg;
  if (errors.empty()) cfg = parse_config(doc, errors);
  if (!errors.empty()) {
    std::string msg = "invalid config '" + path.string() + "':";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  return cfg;
}

}  // namespace tsprobe
