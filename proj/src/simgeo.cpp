#include "tsprobe/simgeo.hpp"

#include <algorithm>
#include <cmath>

namespace tsprobe {

double cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != y.rows()) throw ValidationError("cka inputs differ in row count");
  if (x.rows() < 2) throw ValidationError("cka needs at least two rows");
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();
  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  if (!(xx > 0.0) || !(yy > 0.0)) throw ValidationError("cka input has zero variance after centering");
  const double xy = (xc.transpose() * yc).squaredNorm();
  return xy / (xx * yy);
}

CkaMatrix cka_layer_matrix(const PooledEmbeddings& pooled) {
  const auto L = pooled.num_layers();
  if (L < 2) throw ValidationError("cka layer matrix needs at least two layers");
  CkaMatrix out;
  out.values = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
  for (std::size_t i = 0; i < L; ++i) {
    out.layers.push_back(i);
    for (std::size_t j = i; j < L; ++j) {
      const double v = cka(pooled.layers[i], pooled.layers[j]);
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return out;
}

CompositionAnalysis vector_arithmetic(const PooledEmbeddings& e1, const PooledEmbeddings& e2,
                                      const PooledEmbeddings& e3) {
  const auto L = e3.num_layers();
  if (e1.num_layers() != L || e2.num_layers() != L) throw ValidationError("vector arithmetic: layer count mismatch");
  CompositionAnalysis out;
  out.layers.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& a = e1.layers[l];
    const auto& b = e2.layers[l];
    const auto& c = e3.layers[l];
    if (a.rows() != c.rows() || b.rows() != c.rows() || a.cols() != c.cols() || b.cols() != c.cols())
      throw ValidationError("vector arithmetic: embedding shapes differ at layer " + std::to_string(l));
    std::vector<double> cosines, reldists;
    auto& res = out.layers[l];
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      const Eigen::RowVectorXd sum = a.row(i) + b.row(i);
      const double target_norm = c.row(i).norm();
      const double sum_norm = sum.norm();
      if (target_norm == 0.0 || sum_norm == 0.0) {
        ++res.skipped;
        continue;
      }
      const double cosine = std::clamp(sum.dot(c.row(i)) / (sum_norm * target_norm), -1.0, 1.0);
      cosines.push_back(cosine);
      reldists.push_back((sum - c.row(i)).norm() / target_norm);
    }
    res.used = cosines.size();
    auto moments = [](const std::vector<double>& v, double& mean, double& sd) {
      if (v.empty()) {
        mean = sd = std::nan("");
        return;
      }
      double s = 0.0;
      for (double x : v) s += x;
      mean = s / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = std::sqrt(ss / static_cast<double>(v.size()));
    };
    moments(cosines, res.cosine_mean, res.cosine_std);
    moments(reldists, res.reldist_mean, res.reldist_std);
  }
  return out;
}

AlignmentTable temporal_alignment(const PairSpec& pair, const std::vector<std::size_t>& lengths,
                                  const ActivationProvider& provider, Pooling pooling) {
  if (lengths.empty()) throw ValidationError("temporal alignment needs at least one length");
  if (!std::is_sorted(lengths.begin(), lengths.end())) throw ValidationError("alignment lengths must be sorted");
  for (auto len : lengths)
    if (len < std::max<std::size_t>(provider.min_length(), 2))
      throw ValidationError("alignment length " + std::to_string(len) + " is below the provider minimum");

  AlignmentTable out;
  out.lengths = lengths;
  out.cosine_mean.resize(static_cast<Eigen::Index>(provider.num_layers()), static_cast<Eigen::Index>(lengths.size()));
  for (std::size_t k = 0; k < lengths.size(); ++k) {
    ConceptSpec s1 = pair.c1;
    ConceptSpec s2 = pair.c2;
    s1.length = s2.length = lengths[k];
    const auto ds1 = generate_dataset(s1, pair.n_series, pair.seed1);
    const auto ds2 = generate_dataset(s2, pair.n_series, pair.seed2);
    const auto composite = compose_functional(ds1, ds2, pair.functional);
    const auto [part1, part2] = mixed_parts(composite);
    const auto e1 = embed_pooled(provider, part1, pooling);
    const auto e2 = embed_pooled(provider, part2, pooling);
    const auto e3 = embed_pooled(provider, composite.composites, pooling);
    auto analysis = vector_arithmetic(e1, e2, e3);
    analysis.kind1 = s1.kind;
    analysis.kind2 = s2.kind;
    for (std::size_t l = 0; l < analysis.layers.size(); ++l)
      out.cosine_mean(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = analysis.layers[l].cosine_mean;
    out.per_length.push_back(std::move(analysis));
  }
  return out;
}

}  // namespace tsprobe
