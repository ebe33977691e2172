#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tsprobe/types.hpp"

namespace tsprobe {

enum class ConceptKind { AR1, LevelShift, RandomWalk, Spectral, TimeWarped, Trend, VarianceShift };

enum class Normalization { None, ZScore };

std::string_view to_string(ConceptKind kind);
std::string_view to_string(Normalization norm);
/// Accepts the canonical names ("AR1", "LevelShift", ...) case-insensitively.
ConceptKind parse_concept_kind(std::string_view name);
Normalization parse_normalization(std::string_view name);
std::span<const ConceptKind> all_concept_kinds();

/// Closed sampling interval [lo, hi]; lo == hi pins the value.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Generator configuration for one concept family.
///
/// Range keys per kind:
///   AR1           phi, sigma
///   LevelShift    delta, tau_frac, noise_std
///   RandomWalk    mu, sigma
///   Spectral      freq, amp, noise_std (+ k_max)
///   TimeWarped    freq, warp_shape, noise_std
///   Trend         beta, noise_std
///   VarianceShift sigma1, sigma2, tau_frac
struct ConceptSpec {
  ConceptKind kind = ConceptKind::AR1;
  std::size_t length = 256;
  Normalization normalization = Normalization::ZScore;
  std::map<std::string, Range> ranges;
  int k_max = 3;

  /// Default ranges and the per-kind default normalization.
  static ConceptSpec defaults(ConceptKind kind, std::size_t length = 256);

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Generative parameters of one series, keyed by name.
using ParamMap = std::map<std::string, double>;

struct LabeledSeries {
  std::vector<double> values;
  ConceptKind kind = ConceptKind::AR1;
  ParamMap params;
  Normalization applied_normalization = Normalization::None;
  std::uint64_t seed = 0;
};

struct ConceptDataset {
  ConceptSpec spec;
  std::uint64_t master_seed = 0;
  std::vector<LabeledSeries> series;
  std::vector<std::string> target_names;
  Eigen::MatrixXd targets;      // N x k, columns ordered as target_names
  std::vector<bool> is_train;   // per-series split flag

  std::size_t size() const { return series.size(); }
  std::size_t length() const { return series.empty() ? 0 : series.front().values.size(); }
  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> val_indices() const;
  /// N x T copy of the series values.
  SeriesMatrix values() const;
};

struct ZScoreResult {
  std::vector<double> values;
  Normalization applied = Normalization::ZScore;
};

/// Per-series z-score with population (1/T) standard deviation. A constant
/// series (std < 1e-12) is only mean-subtracted and flagged as un-normalized.
ZScoreResult zscore(std::span<const double> values);

/// Parameter keys generate_series expects for a kind. Spectral keys depend on
/// the component count k, so k must be given for that kind.
std::vector<std::string> required_param_keys(ConceptKind kind, int spectral_k = 1);

/// Probe target names for a kind, in the order used by the target matrix.
std::vector<std::string> target_names(ConceptKind kind);

/// Probe targets derived from a series' generative parameters.
std::vector<double> target_values(ConceptKind kind, const ParamMap& params, std::size_t length);

/// Draws one parameter set uniformly from the spec's ranges.
ParamMap sample_params(const ConceptSpec& spec, Rng& rng);

/// Runs the concept's generative recurrence with a per-series RNG seeded by
/// `seed`, then applies spec.normalization.
LabeledSeries generate_series(const ConceptSpec& spec, const ParamMap& params, std::uint64_t seed);

/// Samples n parameter sets and series (series i is seeded with
/// derive_seed(master_seed, i)) and assigns the seeded 80/20 split.
ConceptDataset generate_dataset(const ConceptSpec& spec, std::size_t n, std::uint64_t master_seed);

/// Number of training series for a dataset of size n: ceil(0.8 n).
constexpr std::size_t train_count(std::size_t n) { return (4 * n + 4) / 5; }

/// Seeded 80/20 split flags; a pure function of (master_seed, n).
std::vector<bool> make_split(std::uint64_t master_seed, std::size_t n);

/// Places base sample k at the warped position u_k (u_0 = 0, u_k = sum of the
/// first k steps, rescaled so u_{T-1} = T - 1) and linearly interpolates back
/// onto the integer grid. `steps` must hold T - 1 positive values.
std::vector<double> warp_resample(std::span<const double> base, std::span<const double> steps);

// Dataset directory I/O (series.f32, targets.csv, meta.json).

struct Provenance {
  std::optional<std::string> config_hash;
  std::uint64_t seed = 0;
};

void save_dataset(const ConceptDataset& dataset, const std::filesystem::path& dir,
                  const Provenance& provenance);
ConceptDataset load_dataset(const std::filesystem::path& dir);

}  // namespace tsprobe
