#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tsprobe/compose.hpp"
#include "tsprobe/embed.hpp"
#include "tsprobe/synthgen.hpp"

namespace tsprobe {

/// Linear CKA of column-centered X (N x d1) and Y (N x d2):
/// ||X^T Y||_F^2 / (||X^T X||_F ||Y^T Y||_F). Throws ValidationError when
/// either input has zero variance after centering.
double cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct CkaMatrix {
  Eigen::MatrixXd values;  // L x L
  std::vector<std::size_t> layers;
};

CkaMatrix cka_layer_matrix(const PooledEmbeddings& pooled);

struct LayerComposition {
  double cosine_mean = 0.0;
  double cosine_std = 0.0;
  double reldist_mean = 0.0;
  double reldist_std = 0.0;
  std::size_t used = 0;     // series that entered the averages
  std::size_t skipped = 0;  // series with ||e3|| = 0
};

/// Per layer, the mean over series of cos(e1 + e2, e3) and
/// ||(e1 + e2) - e3|| / ||e3||. Standard deviations are population (1/N).
struct CompositionAnalysis {
  std::vector<LayerComposition> layers;
  ConceptKind kind1 = ConceptKind::AR1;
  ConceptKind kind2 = ConceptKind::AR1;
};

CompositionAnalysis vector_arithmetic(const PooledEmbeddings& e1, const PooledEmbeddings& e2,
                                      const PooledEmbeddings& e3);

/// Concept pair and construction used when regenerating data per length.
struct PairSpec {
  ConceptSpec c1;
  ConceptSpec c2;
  FunctionalConfig functional;
  std::uint64_t seed1 = 0;  // master seed of the C1 dataset
  std::uint64_t seed2 = 0;  // master seed of the C2 dataset
  std::size_t n_series = 1000;
};

inline const std::vector<std::size_t> kDefaultAlignmentLengths = {32, 64, 128, 256};

struct AlignmentTable {
  std::vector<std::size_t> lengths;
  Eigen::MatrixXd cosine_mean;  // layers x lengths
  std::vector<CompositionAnalysis> per_length;
};

/// Regenerates both atomic datasets and their functional composite at every
/// length (same master seeds), then runs vector_arithmetic.
AlignmentTable temporal_alignment(const PairSpec& pair, const std::vector<std::size_t>& lengths,
                                  const ActivationProvider& provider, Pooling pooling);

}  // namespace tsprobe
