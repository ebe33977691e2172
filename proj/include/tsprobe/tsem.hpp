#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsprobe/embed.hpp"

namespace tsprobe {

/// TSEM interchange format (little-endian):
///   "TSEM" | u32 version = 1 | u32 n_layers | u32 n_series | u32 n_tokens |
///   u32 d_model | u32 dtype (0 = float32) | float32 payload
/// The payload is layer-major: [layer][series][token][dim].
struct TsemHeader {
  std::uint32_t n_layers = 0;  // includes layer 0
  std::uint32_t n_series = 0;
  std::uint32_t n_tokens = 0;
  std::uint32_t d_model = 0;
  std::uint32_t dtype = 0;
};

inline constexpr std::uint32_t kTsemVersion = 1;
inline constexpr std::size_t kTsemHeaderBytes = 28;

/// Exact payload size implied by a header.
std::uint64_t tsem_payload_bytes(const TsemHeader& header);

/// Contents of the `<stem>.meta.json` sidecar.
struct EmbeddingMeta {
  std::string provider;
  std::string pooling = "mean";
  std::string source_dataset;
  std::uint64_t seed = 0;
};

enum class NonFinitePolicy { Reject, Warn };

struct LoadedEmbeddings {
  TsemHeader header;
  std::vector<LayerActivations> series;
  EmbeddingMeta meta;
  std::size_t non_finite_values = 0;  // only non-zero under NonFinitePolicy::Warn
};

/// Sidecar path for an embedding file: `dir/name.tsem` -> `dir/name.meta.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Writes the blob and its sidecar. Every series must have the same layer
/// count and every layer the same S x d shape; values are stored as float32.
void save_embeddings(std::span<const LayerActivations> acts, const std::filesystem::path& path,
                     const EmbeddingMeta& meta);

/// Throws FormatError on magic/version/dtype mismatch, on a size mismatch
/// between header and payload, and (under Reject) on non-finite values.
/// The sidecar is optional.
LoadedEmbeddings load_embeddings(const std::filesystem::path& path,
                                 NonFinitePolicy policy = NonFinitePolicy::Reject);

}  // namespace tsprobe
