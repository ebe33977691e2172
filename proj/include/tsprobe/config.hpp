#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsprobe/compose.hpp"
#include "tsprobe/dimred.hpp"
#include "tsprobe/embed.hpp"
#include "tsprobe/probes.hpp"
#include "tsprobe/simgeo.hpp"
#include "tsprobe/synthgen.hpp"
#include "tsprobe/toy_encoder.hpp"

namespace tsprobe {

inline constexpr int kConfigSchemaVersion = 1;

struct NamedConcept {
  std::string name;  // defaults to the kind name
  ConceptSpec spec;
};

struct CompositionPair {
  std::string c1;
  std::string c2;
  CompositionMode mode = CompositionMode::Functional;
  StructuredConfig structured;
  FunctionalConfig functional;

  std::string label() const { return c1 + "__" + c2; }
};

enum class ProviderKind { Toy, Identity, File };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::Toy;
  std::filesystem::path directory;  // File only: holds <concept name>.tsem
  ToyEncoderConfig toy;

  /// "toy", "identity" or "file:<dir>".
  std::string label() const;
};

struct AnalysisToggles {
  bool sweep = true;
  bool cka = false;
  bool transfer = false;
  bool ablation = false;
  bool arithmetic = false;
  bool alignment = false;
  bool dimred = false;

  bool any() const { return sweep || cka || transfer || ablation || arithmetic || alignment || dimred; }
};

struct DimredConfig {
  std::vector<std::string> methods = {"pca", "tsne", "umap"};
  /// Layers to project; empty selects {0, middle, last}.
  std::vector<std::size_t> layers;
  /// Each concept is subsampled (evenly spaced rows) down to this many points.
  std::size_t max_points = 500;
  TsneOptions tsne;
  UmapOptions umap;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t master_seed = 0;
  std::size_t n_series = 1000;
  std::size_t length = 256;
  std::vector<NamedConcept> concepts;
  std::vector<CompositionPair> compositions;
  ProviderConfig provider;
  Pooling pooling = Pooling::Mean;
  ProbeConfig probe;
  AnalysisToggles analyses;
  std::vector<double> ablation_fractions = kDefaultFractions;
  std::vector<std::size_t> alignment_lengths = kDefaultAlignmentLengths;
  DimredConfig dimred;
  std::filesystem::path output_dir = "out";

  /// FNV-1a of the canonical JSON form without output_dir, so the same
  /// experiment written to two places carries the same hash.
  std::string hash;

  const NamedConcept* find_concept(const std::string& name) const;
};

/// Parses and validates a config document. Every problem is appended to
/// `errors` as "<path.to.field>: <message>"; the returned config is only
/// meaningful when `errors` stays empty.
ExperimentConfig parse_config(const nlohmann::json& document, std::vector<std::string>& errors);

/// Reads and validates a config file without side effects.
std::vector<std::string> validate_config_file(const std::filesystem::path& path);

/// Throws ValidationError listing every problem. Top-level keys of
/// `overrides` replace those of the file before validation, so they take part
/// in the config hash.
ExperimentConfig load_config(const std::filesystem::path& path, const nlohmann::json& overrides = nlohmann::json::object());

}  // namespace tsprobe
