#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tsprobe {

struct PcaResult {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;          // d x k, orthonormal columns
  Eigen::MatrixXd projected;           // N x k
  Eigen::VectorXd explained_variance;  // eigenvalues of the 1/N covariance, descending
  Eigen::VectorXd explained_ratio;
};

/// Principal axes of the 1/N empirical covariance. Each component is signed
/// so that its largest-magnitude entry is positive. Requires
/// 1 <= k <= min(N - 1, d).
PcaResult pca(const Eigen::MatrixXd& x, std::size_t k);

/// 2-D embedding plus the optimizer's objective value per iteration/epoch.
struct Projection2D {
  Eigen::MatrixXd coords;  // N x 2
  std::string method;
  std::map<std::string, double> hyperparameters;
  std::vector<double> objective_trace;
};

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
};

struct TsneAffinities {
  Eigen::MatrixXd conditional;  // p_{j|i}, rows sum to 1, zero diagonal
  Eigen::VectorXd sigma;        // Gaussian bandwidth per point
  Eigen::MatrixXd joint;        // (p_{j|i} + p_{i|j}) / 2N
};

/// Per-point bandwidths found by bisection so that the conditional
/// distribution's entropy equals log2(perplexity) bits (tolerance 1e-5).
TsneAffinities tsne_affinities(const Eigen::MatrixXd& x, double perplexity);

/// KL(P || Q) of a joint affinity matrix against the Student-t similarities of y.
double tsne_kl(const Eigen::MatrixXd& joint, const Eigen::MatrixXd& y);

/// Exact O(N^2) t-SNE. Momentum 0.5 switches to 0.8 and early exaggeration
/// ends after `exaggeration_iters`; from then on a step that would raise the
/// KL divergence is retried as a shorter plain gradient step, so the trace is
/// non-increasing in that phase.
Projection2D tsne(const Eigen::MatrixXd& x, const TsneOptions& options);

struct UmapOptions {
  std::size_t n_neighbors = 15;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t negative_samples = 5;
  double learning_rate = 1.0;
};

struct FuzzyEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  double weight = 0.0;
};

/// Weighted kNN graph: directed memberships exp(-max(0, d - rho) / sigma)
/// and their fuzzy union w = w1 + w2 - w1 w2.
struct FuzzyGraph {
  std::vector<std::vector<std::size_t>> neighbors;  // k nearest, ascending distance
  std::vector<std::vector<double>> distances;
  std::vector<std::vector<double>> memberships;     // directed weights per neighbor
  Eigen::VectorXd rho;
  Eigen::VectorXd sigma;
  std::vector<FuzzyEdge> edges;  // symmetric weights, i < j
};

FuzzyGraph umap_graph(const Eigen::MatrixXd& x, std::size_t n_neighbors);

/// Cross-entropy between graph memberships and 1 / (1 + |y_i - y_j|^2) over
/// all unordered pairs.
double umap_cross_entropy(const FuzzyGraph& graph, const Eigen::MatrixXd& y);

/// Simplified UMAP (a = b = 1 output kernel), PCA initialization scaled to
/// unit variance, negative sampling SGD.
Projection2D umap(const Eigen::MatrixXd& x, const UmapOptions& options);

/// Writes `x,y,color_value,series_id` rows.
void write_projection_csv(const std::filesystem::path& path, const Projection2D& projection,
                          std::span<const double> color, std::span<const std::size_t> series_ids,
                          const std::string& comment);

/// Scatter plot with a linear blue-to-red color ramp.
void write_projection_svg(const std::filesystem::path& path, const Projection2D& projection,
                          std::span<const double> color, const std::string& title);

}  // namespace tsprobe
