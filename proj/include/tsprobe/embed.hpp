#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tsprobe/types.hpp"

namespace tsprobe {

/// Token-level hidden states of one series: layers[l] is S_l x d_l.
/// Layer 0 is the post-input-embedding representation.
struct LayerActivations {
  std::vector<Eigen::MatrixXd> layers;
  std::string provider;
  std::size_t series_id = 0;

  std::size_t num_layers() const { return layers.size(); }
};

enum class Pooling { Mean, Last, Max };

std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view name);

/// Per-layer N x d_l matrices of pooled vectors.
struct PooledEmbeddings {
  std::vector<Eigen::MatrixXd> layers;
  Pooling pooling = Pooling::Mean;
  std::string provider;

  std::size_t num_layers() const { return layers.size(); }
  std::size_t num_series() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().rows()); }
  /// Rows `indices` of every layer.
  PooledEmbeddings select(std::span<const std::size_t> indices) const;
};

/// Source of layer-wise activations. Implementations are immutable after
/// construction, so encode may be called concurrently.
class ActivationProvider {
 public:
  virtual ~ActivationProvider() = default;
  virtual std::string name() const = 0;
  /// Number of layers including layer 0.
  virtual std::size_t num_layers() const = 0;
  /// Shortest series the provider accepts.
  virtual std::size_t min_length() const { return 1; }
  virtual LayerActivations encode(std::span<const double> series) const = 0;
};

/// Linear two-layer reference provider. Layer 0 holds the raw series as T
/// tokens of width 1. Layer 1 splits the zero-padded series into windows of
/// 8 samples; token s, dim j is the mean of the first j + 1 samples of
/// window s.
class IdentityProvider final : public ActivationProvider {
 public:
  static constexpr std::size_t kWindow = 8;

  std::string name() const override { return "identity"; }
  std::size_t num_layers() const override { return 2; }
  LayerActivations encode(std::span<const double> series) const override;
};

/// Reduces S x d tokens to a d-vector.
Eigen::RowVectorXd pool(const Eigen::MatrixXd& tokens, Pooling pooling);
std::vector<Eigen::RowVectorXd> pool(const LayerActivations& acts, Pooling pooling);

std::vector<LayerActivations> encode_batch(const ActivationProvider& provider, const SeriesMatrix& batch);

PooledEmbeddings pool_all(std::span<const LayerActivations> acts, Pooling pooling);

/// Encodes and pools every row without keeping token-level activations.
PooledEmbeddings embed_pooled(const ActivationProvider& provider, const SeriesMatrix& batch, Pooling pooling);

}  // namespace tsprobe
