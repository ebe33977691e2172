#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>

#include <json.hpp>

#include "tsprobe/config.hpp"

namespace tsprobe {

/// Artifact classes, one per analysis, in stage order.
inline constexpr const char* kArtifactClasses[] = {"probe_report", "cka_matrix", "transfer",   "context_grid",
                                                   "composition",  "alignment",  "projection"};

/// Seed streams derived from the master seed.
inline constexpr std::uint64_t kConceptStream = 0x10000;
inline constexpr std::uint64_t kCompositionStream = 0x20000;
inline constexpr std::uint64_t kDimredStream = 0x30000;

std::uint64_t concept_seed(const ExperimentConfig& cfg, std::size_t concept_index);

/// Provider for the toy and identity kinds; throws for file providers.
std::unique_ptr<ActivationProvider> make_provider(const ProviderConfig& cfg);

struct RunOptions {
  /// Replaces a non-empty output directory instead of refusing to run.
  bool overwrite = false;
  /// Progress messages; nullptr keeps the run silent.
  std::ostream* log = nullptr;
};

/// Executes the enabled stages (generate -> compose -> embed -> sweep ->
/// cka, transfer, ablation, arithmetic, alignment, dimred) into a staging
/// directory that replaces cfg.output_dir on success and is removed on
/// failure. Returns the summary.json document.
nlohmann::json run_pipeline(const ExperimentConfig& cfg, const RunOptions& options = {});

}  // namespace tsprobe
