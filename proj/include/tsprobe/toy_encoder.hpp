#pragma once

#include <cstdint>
#include <vector>

#include "tsprobe/embed.hpp"

namespace tsprobe {

struct ToyEncoderConfig {
  std::size_t patch_len = 8;
  std::size_t d_model = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t mlp_ratio = 4;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// Intermediate tensors captured during one forward pass.
struct ForwardTrace {
  /// attention[l * n_heads + h] is the S x S row-stochastic attention matrix.
  std::vector<Eigen::MatrixXd> attention;
  /// Output of every LayerNorm, in evaluation order (two per block).
  std::vector<Eigen::MatrixXd> layer_norm_outputs;
};

/// Frozen pre-norm transformer encoder with seeded N(0, 0.02^2) weights.
///
/// The series is right-padded with zeros to a multiple of patch_len and cut
/// into non-overlapping patches. Each patch is linearly projected to d_model
/// and summed with a sinusoidal position code (layer 0). Each block applies
/// LayerNorm -> multi-head self-attention -> residual -> LayerNorm ->
/// GELU MLP -> residual, without masking.
class ToyEncoder final : public ActivationProvider {
 public:
  explicit ToyEncoder(const ToyEncoderConfig& cfg);

  std::string name() const override { return "toy"; }
  std::size_t num_layers() const override { return cfg_.n_layers + 1; }
  std::size_t min_length() const override { return cfg_.patch_len; }
  LayerActivations encode(std::span<const double> series) const override { return encode(series, nullptr); }
  LayerActivations encode(std::span<const double> series, ForwardTrace* trace) const;

  const ToyEncoderConfig& config() const { return cfg_; }
  std::size_t num_tokens(std::size_t length) const { return (length + cfg_.patch_len - 1) / cfg_.patch_len; }

 private:
  struct Block {
    Eigen::MatrixXd wq, wk, wv, wo;  // d x d, applied as X * W
    Eigen::MatrixXd w1;              // d x hidden
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // hidden x d
    Eigen::VectorXd b2;
  };

  Eigen::MatrixXd attention(const Eigen::MatrixXd& x, const Block& block, ForwardTrace* trace) const;

  ToyEncoderConfig cfg_;
  Eigen::MatrixXd patch_proj_;  // patch_len x d
  Eigen::VectorXd patch_bias_;
  std::vector<Block> blocks_;
};

/// Row-wise LayerNorm with unit gain, zero bias and eps = 1e-5.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x);

/// Sinusoidal position codes, S x d.
Eigen::MatrixXd sinusoidal_positions(std::size_t tokens, std::size_t d_model);

}  // namespace tsprobe
