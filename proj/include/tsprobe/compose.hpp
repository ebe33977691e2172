#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsprobe/synthgen.hpp"

namespace tsprobe {

/// Breakpoint ranges for structured composition, as fractions of T.
/// Requires 0 < alpha_low < alpha_high <= beta_low < beta_high < 1.
struct StructuredConfig {
  double alpha_low = 0.2;
  double alpha_high = 0.4;
  double beta_low = 0.6;
  double beta_high = 0.8;

  void validate() const;
};

/// Additive mixing. Without alpha the composite is the plain sum of the
/// (optionally z-scored) sources; with alpha it is alpha*T1 + (1-alpha)*T2.
struct FunctionalConfig {
  bool normalize = false;
  std::optional<double> alpha;

  void validate() const;
};

enum class CompositionMode { Structured, Functional };

std::string_view to_string(CompositionMode mode);

/// Segment boundaries and continuity offsets of one structured composite.
struct Breakpoints {
  std::size_t a = 0;
  std::size_t b = 0;
  double delta1 = 0.0;
  double delta2 = 0.0;
};

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CompositeDataset {
  CompositionMode mode = CompositionMode::Functional;
  ConceptKind kind1 = ConceptKind::AR1;
  ConceptKind kind2 = ConceptKind::AR1;
  SeriesMatrix composites;  // X
  SeriesMatrix source1;     // T1 (as mixed, i.e. after optional normalization)
  SeriesMatrix source2;     // T2
  MaskMatrix masks;                     // structured only: 1 where X comes from C2
  std::vector<Breakpoints> breakpoints;  // structured only
  StructuredConfig structured;
  FunctionalConfig functional;
  std::uint64_t seed = 0;

  std::vector<ParamMap> params1, params2;
  std::vector<std::string> target_names1, target_names2;
  Eigen::MatrixXd targets1, targets2;
  std::vector<bool> is_train;  // inherited from the first source dataset

  std::size_t size() const { return static_cast<std::size_t>(composites.rows()); }
  std::size_t length() const { return static_cast<std::size_t>(composites.cols()); }
  std::vector<std::size_t> val_indices() const;
};

/// Segment-wise interleaving with continuity offsets. For each series the
/// composite is T1 on [0, a), T2 + delta1 on [a, b) and T1 + delta2 on
/// [b, T), with delta1 = T1[a] - T2[a] and delta2 = T2[b] - T1[b] + delta1.
/// X[a] is stored as T1[a] so continuity at a holds exactly in floating point.
CompositeDataset compose_structured(const ConceptDataset& ds1, const ConceptDataset& ds2,
                                    const StructuredConfig& cfg, std::uint64_t seed);

/// Same construction on raw matrices; breakpoints are drawn per row from
/// derive_seed(seed, i).
CompositeDataset compose_structured(const SeriesMatrix& t1, const SeriesMatrix& t2, const StructuredConfig& cfg,
                                    std::uint64_t seed);

/// Structured composite for fixed breakpoints.
std::vector<double> interleave(std::span<const double> t1, std::span<const double> t2, Breakpoints& bp);

CompositeDataset compose_functional(const ConceptDataset& ds1, const ConceptDataset& ds2, const FunctionalConfig& cfg);
CompositeDataset compose_functional(const SeriesMatrix& t1, const SeriesMatrix& t2, const FunctionalConfig& cfg);

/// The two additive parts of a composite: alpha*T1 and (1-alpha)*T2 for a
/// weighted functional composite, the (possibly normalized) sources otherwise.
std::pair<SeriesMatrix, SeriesMatrix> mixed_parts(const CompositeDataset& composite);

/// Writes series.f32, targets_c1.csv, targets_c2.csv, meta.json and, for
/// structured composites, masks.u8 and breakpoints.csv.
void save_composite(const CompositeDataset& composite, const std::filesystem::path& dir,
                    const Provenance& provenance);
CompositeDataset load_composite(const std::filesystem::path& dir);

}  // namespace tsprobe
