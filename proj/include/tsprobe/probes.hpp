#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsprobe/compose.hpp"
#include "tsprobe/embed.hpp"
#include "tsprobe/synthgen.hpp"

namespace tsprobe {

struct ProbeConfig {
  double ridge_lambda = 1e-3;
  bool standardize_features = true;

  void validate() const;
};

/// Affine read-out theta_hat = ((z - feature_mean) / feature_std) * weights + bias.
///
/// Features are always centered with the training mean; they are also scaled
/// by the training std when standardize_features is set (otherwise the std
/// vector is all ones). `weights` live in that transformed space, so `bias`
/// equals the training target mean.
struct Probe {
  Eigen::MatrixXd weights;       // d x k
  Eigen::RowVectorXd bias;       // k
  Eigen::RowVectorXd feature_mean;
  Eigen::RowVectorXd feature_std;  // entries >= 1e-12
  double ridge_lambda = 0.0;
  std::size_t layer = 0;
  std::vector<std::string> target_names;
  std::string provider;
  Pooling pooling = Pooling::Mean;

  /// Weights and bias expressed on the raw feature scale.
  Eigen::MatrixXd raw_weights() const;
  Eigen::RowVectorXd raw_bias() const;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& features) const;
};

/// Closed-form ridge: solves (Xs^T Xs + lambda I) W = Xs^T (Y - mean Y) with
/// an LDL^T factorization of the symmetric system.
Probe fit_probe(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, const ProbeConfig& cfg);

/// Per-target mean squared error.
Eigen::RowVectorXd eval_probe(const Probe& probe, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets);

/// Validation and training error of one layer's probe.
struct LayerScore {
  Eigen::RowVectorXd val_mse;    // per target
  Eigen::RowVectorXd train_mse;  // per target
  /// (1/N) sum_i ||theta_i - theta_hat_i||^2, i.e. the per-target MSEs summed.
  double val_total() const { return val_mse.sum(); }
};

struct ProbeReport {
  std::vector<std::string> target_names;
  std::vector<LayerScore> layers;  // index = layer, 0..L
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::string provider;
};

struct SweepResult {
  ProbeReport report;
  std::vector<Probe> probes;  // one per layer
};

/// Trains one probe per layer on the train split and scores it on the
/// validation split.
SweepResult layerwise_sweep(const ConceptDataset& dataset, const PooledEmbeddings& pooled, const ProbeConfig& cfg);

/// Same, from an explicit target matrix and split.
SweepResult layerwise_sweep(const Eigen::MatrixXd& targets, const std::vector<std::string>& target_names,
                            const std::vector<bool>& is_train, const PooledEmbeddings& pooled,
                            const ProbeConfig& cfg);

/// Frozen-probe evaluation of both source concepts on composite embeddings.
struct TransferResult {
  std::vector<Eigen::RowVectorXd> c1_mse;  // per layer, per C1 target
  std::vector<Eigen::RowVectorXd> c2_mse;  // per layer, per C2 target
  std::vector<std::string> c1_targets, c2_targets;
};

/// Evaluates the frozen per-layer probes on the validation rows of the
/// composite. Throws ValidationError when the probes were trained on another
/// provider or pooling than the composite embeddings.
TransferResult probe_transfer(const std::vector<Probe>& c1_probes, const std::vector<Probe>& c2_probes,
                              const PooledEmbeddings& composite, const CompositeDataset& data);

/// Per-layer validation MSE of frozen probes on suffix-cropped inputs.
struct ContextAblationGrid {
  std::vector<double> fractions;
  /// total_mse(layer, fraction index): summed per-target validation MSE.
  Eigen::MatrixXd total_mse;
  /// per_target[t](layer, fraction index).
  std::vector<Eigen::MatrixXd> per_target;
  std::vector<std::string> target_names;
};

inline const std::vector<double> kDefaultFractions = {0.25, 0.5, 0.75, 1.0};

/// Keeps the trailing floor(fraction * T) samples of every row.
SeriesMatrix crop_suffix(const SeriesMatrix& batch, double fraction);

/// For each fraction: crop, re-embed, re-pool and evaluate the frozen probes
/// against the original targets on the validation split.
ContextAblationGrid context_ablation(const ConceptDataset& dataset, const ActivationProvider& provider,
                                     const std::vector<Probe>& probes, const std::vector<double>& fractions,
                                     Pooling pooling);

/// Float32 blob with a JSON header: u32 header length, header bytes, then
/// weights (d x k, row-major), bias, feature_mean and feature_std.
void save_probe(const Probe& probe, const std::filesystem::path& path);
Probe load_probe(const std::filesystem::path& path);

}  // namespace tsprobe
