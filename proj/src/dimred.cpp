#include "tsprobe/dimred.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "tsprobe/io_util.hpp"
#include "tsprobe/parallel.hpp"
#include "tsprobe/types.hpp"

namespace tsprobe {

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const auto N = x.rows();
  Eigen::MatrixXd d(N, N);
  parallel_for(static_cast<std::size_t>(N), [&](std::size_t row) {
    const auto i = static_cast<Eigen::Index>(row);
    d.col(i) = (x.rowwise() - x.row(i)).rowwise().squaredNorm();
  });
  return d;
}

void center_columns(Eigen::MatrixXd& y) { y.rowwise() -= y.colwise().mean(); }

}  // namespace

// ---------------------------------------------------------------------------
// PCA

PcaResult pca(const Eigen::MatrixXd& x, std::size_t k) {
  const auto N = x.rows();
  const auto d = x.cols();
  if (N < 2) throw ValidationError("pca needs at least two rows");
  if (k < 1 || static_cast<Eigen::Index>(k) > std::min(N - 1, d))
    throw ValidationError("pca component count must lie in [1, min(N - 1, d)]");

  PcaResult out;
  out.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - out.mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(N);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("pca eigendecomposition failed");

  // Eigen returns ascending eigenvalues.
  const auto K = static_cast<Eigen::Index>(k);
  out.components.resize(d, K);
  out.explained_variance.resize(K);
  for (Eigen::Index c = 0; c < K; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.components.col(c) = v;
    out.explained_variance(c) = std::max(solver.eigenvalues()(d - 1 - c), 0.0);
  }
  const double total = solver.eigenvalues().cwiseMax(0.0).sum();
  out.explained_ratio = total > 0.0 ? Eigen::VectorXd(out.explained_variance / total) : Eigen::VectorXd::Zero(K);
  out.projected = centered * out.components;
  return out;
}

// ---------------------------------------------------------------------------
// t-SNE

TsneAffinities tsne_affinities(const Eigen::MatrixXd& x, double perplexity) {
  const auto N = x.rows();
  if (!(perplexity >= 2.0) || !(perplexity < static_cast<double>(N) / 3.0))
    throw ValidationError("t-SNE perplexity must satisfy 2 <= perplexity < N / 3 (N = " + std::to_string(N) + ")");
  const Eigen::MatrixXd dist = squared_distances(x);
  const double target = std::log2(perplexity);

  TsneAffinities out;
  out.conditional = Eigen::MatrixXd::Zero(N, N);
  out.sigma.resize(N);
  parallel_for(static_cast<std::size_t>(N), [&](std::size_t row) {
    const auto i = static_cast<Eigen::Index>(row);
    double dmin = std::numeric_limits<double>::infinity();
    double dsum = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (j == i) continue;
      dmin = std::min(dmin, dist(j, i));
      dsum += dist(j, i);
    }
    const double spread = dsum / static_cast<double>(N - 1) - dmin;
    double beta = spread > 0.0 ? 1.0 / spread : 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    Eigen::VectorXd p(N);
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0;
      double weighted = 0.0;
      for (Eigen::Index j = 0; j < N; ++j) {
        const double shifted = dist(j, i) - dmin;
        p(j) = j == i ? 0.0 : std::exp(-shifted * beta);
        sum += p(j);
        weighted += shifted * p(j);
      }
      const double entropy_bits = (std::log(sum) + beta * weighted / sum) / std::log(2.0);
      p /= sum;
      const double gap = entropy_bits - target;
      if (std::abs(gap) < 1e-5) break;
      if (gap > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    out.conditional.row(i) = p.transpose();
    out.sigma(i) = std::sqrt(1.0 / (2.0 * beta));
  });
  out.joint = (out.conditional + out.conditional.transpose()) / (2.0 * static_cast<double>(N));
  return out;
}

namespace {

// Student-t kernel matrix (zero diagonal) and its sum.
double student_kernel(const Eigen::MatrixXd& y, Eigen::MatrixXd& num) {
  const auto N = y.rows();
  num.resize(N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    for (Eigen::Index i = 0; i < N; ++i) {
      const double dx = y(i, 0) - y(j, 0);
      const double dy = y(i, 1) - y(j, 1);
      num(i, j) = i == j ? 0.0 : 1.0 / (1.0 + dx * dx + dy * dy);
    }
  }
  return num.sum();
}

double kl_from_kernel(const Eigen::MatrixXd& joint, const Eigen::MatrixXd& num, double num_sum) {
  double kl = 0.0;
  const auto N = joint.rows();
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = 0; i < N; ++i) {
      const double p = joint(i, j);
      if (i == j || p <= 0.0) continue;
      kl += p * std::log(p * num_sum / num(i, j));
    }
  return kl;
}

}  // namespace

double tsne_kl(const Eigen::MatrixXd& joint, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd num;
  const double s = student_kernel(y, num);
  return kl_from_kernel(joint, num, s);
}

Projection2D tsne(const Eigen::MatrixXd& x, const TsneOptions& opt) {
  const auto aff = tsne_affinities(x, opt.perplexity);
  const auto& P = aff.joint;
  const auto N = x.rows();

  Rng rng(opt.seed);
  Eigen::MatrixXd y(N, 2);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index c = 0; c < 2; ++c) y(i, c) = 1e-4 * rng.normal();

  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(N, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(N, 2);
  Eigen::MatrixXd num;
  Eigen::MatrixXd grad(N, 2);

  Projection2D out;
  out.method = "tsne";
  out.hyperparameters = {{"perplexity", opt.perplexity},
                         {"iterations", static_cast<double>(opt.iterations)},
                         {"learning_rate", opt.learning_rate},
                         {"exaggeration", opt.exaggeration},
                         {"exaggeration_iters", static_cast<double>(opt.exaggeration_iters)},
                         {"seed", static_cast<double>(opt.seed)}};

  auto update_gains = [&] {
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index c = 0; c < 2; ++c) {
        const bool same_sign = (grad(i, c) > 0.0) == (velocity(i, c) > 0.0);
        gains(i, c) = std::max(same_sign ? gains(i, c) * 0.8 : gains(i, c) + 0.2, 0.01);
      }
  };

  double current_kl = 0.0;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    const bool early = it < opt.exaggeration_iters;
    const double exaggeration = early ? opt.exaggeration : 1.0;
    const double momentum = early ? 0.5 : 0.8;

    const double num_sum = student_kernel(y, num);
    for (Eigen::Index i = 0; i < N; ++i) {
      double gx = 0.0, gy = 0.0;
      for (Eigen::Index j = 0; j < N; ++j) {
        const double coeff = (exaggeration * P(i, j) - num(i, j) / num_sum) * num(i, j);
        gx += coeff * (y(i, 0) - y(j, 0));
        gy += coeff * (y(i, 1) - y(j, 1));
      }
      grad(i, 0) = 4.0 * gx;
      grad(i, 1) = 4.0 * gy;
    }

    update_gains();
    Eigen::MatrixXd step = momentum * velocity - opt.learning_rate * gains.cwiseProduct(grad);
    Eigen::MatrixXd candidate = y + step;
    center_columns(candidate);

    if (early) {
      velocity = step;
      y = std::move(candidate);
      current_kl = tsne_kl(P, y);
    } else {
      if (it == opt.exaggeration_iters && out.objective_trace.empty()) current_kl = tsne_kl(P, y);
      double candidate_kl = tsne_kl(P, candidate);
      if (candidate_kl <= current_kl) {
        velocity = step;
      } else {
        // Momentum overshot: restart from a plain, progressively shorter step.
        velocity.setZero();
        gains.setOnes();
        double rate = opt.learning_rate;
        bool accepted = false;
        for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
          rate *= 0.5;
          candidate = y - rate * grad;
          center_columns(candidate);
          candidate_kl = tsne_kl(P, candidate);
          accepted = candidate_kl <= current_kl;
        }
        if (!accepted) {
          candidate = y;
          candidate_kl = current_kl;
        }
      }
      y = std::move(candidate);
      current_kl = candidate_kl;
    }
    out.objective_trace.push_back(current_kl);
  }
  out.coords = y;
  return out;
}

// ---------------------------------------------------------------------------
// UMAP

FuzzyGraph umap_graph(const Eigen::MatrixXd& x, std::size_t n_neighbors) {
  const auto N = static_cast<std::size_t>(x.rows());
  if (n_neighbors < 2 || n_neighbors >= N) throw ValidationError("umap n_neighbors must satisfy 2 <= k < N");
  const Eigen::MatrixXd dist2 = squared_distances(x);
  const double target = std::log2(static_cast<double>(n_neighbors));
  constexpr double kMinSigma = 1e-12;

  FuzzyGraph g;
  g.neighbors.resize(N);
  g.distances.resize(N);
  g.memberships.resize(N);
  g.rho.resize(static_cast<Eigen::Index>(N));
  g.sigma.resize(static_cast<Eigen::Index>(N));

  parallel_for(N, [&](std::size_t i) {
    std::vector<std::size_t> order;
    order.reserve(N - 1);
    for (std::size_t j = 0; j < N; ++j)
      if (j != i) order.push_back(j);
    const auto col = dist2.col(static_cast<Eigen::Index>(i));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_neighbors), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double da = col(static_cast<Eigen::Index>(a));
                        const double db = col(static_cast<Eigen::Index>(b));
                        return da < db || (da == db && a < b);
                      });
    order.resize(n_neighbors);
    std::vector<double> d(n_neighbors);
    for (std::size_t k = 0; k < n_neighbors; ++k) d[k] = std::sqrt(std::max(col(static_cast<Eigen::Index>(order[k])), 0.0));
    const double rho = d.front();

    auto membership_sum = [&](double sigma) {
      double s = 0.0;
      for (double v : d) s += std::exp(-std::max(0.0, v - rho) / sigma);
      return s;
    };
    // The sum increases with sigma; bisect in log space.
    double lo = kMinSigma;
    double hi = 1.0;
    while (membership_sum(hi) < target && hi < 1e300) hi *= 2.0;
    double sigma = hi;
    if (membership_sum(lo) >= target) {
      sigma = lo;
    } else {
      for (int iter = 0; iter < 200; ++iter) {
        sigma = std::sqrt(lo * hi);
        const double s = membership_sum(sigma);
        if (std::abs(s - target) < 1e-9) break;
        (s < target ? lo : hi) = sigma;
      }
    }

    std::vector<double> w(n_neighbors);
    for (std::size_t k = 0; k < n_neighbors; ++k) w[k] = std::exp(-std::max(0.0, d[k] - rho) / sigma);
    g.neighbors[i] = std::move(order);
    g.distances[i] = std::move(d);
    g.memberships[i] = std::move(w);
    g.rho(static_cast<Eigen::Index>(i)) = rho;
    g.sigma(static_cast<Eigen::Index>(i)) = sigma;
  });

  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> directed;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k < n_neighbors; ++k) {
      const std::size_t j = g.neighbors[i][k];
      const double w = g.memberships[i][k];
      if (i < j) {
        directed[{i, j}].first = w;
      } else {
        directed[{j, i}].second = w;
      }
    }
  }
  for (const auto& [key, w] : directed) {
    const double sym = w.first + w.second - w.first * w.second;
    if (sym > 0.0) g.edges.push_back({key.first, key.second, sym});
  }
  return g;
}

double umap_cross_entropy(const FuzzyGraph& graph, const Eigen::MatrixXd& y) {
  constexpr double kEps = 1e-12;
  const auto N = y.rows();
  auto q_of = [&](Eigen::Index i, Eigen::Index j) {
    const double d2 = (y.row(i) - y.row(j)).squaredNorm();
    return std::clamp(1.0 / (1.0 + d2), kEps, 1.0 - kEps);
  };
  double loss = 0.0;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i + 1; j < N; ++j) loss -= std::log(1.0 - q_of(i, j));
  for (const auto& e : graph.edges) {
    const double q = q_of(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j));
    loss += e.weight * (std::log(1.0 - q) - std::log(q));
  }
  return loss;
}

Projection2D umap(const Eigen::MatrixXd& x, const UmapOptions& opt) {
  const auto graph = umap_graph(x, opt.n_neighbors);
  const auto N = x.rows();
  Rng rng(opt.seed);

  // PCA initialization, each axis scaled to unit variance.
  Eigen::MatrixXd y(N, 2);
  const auto k = static_cast<std::size_t>(std::min<Eigen::Index>({2, x.cols(), N - 1}));
  const auto init = pca(x, k);
  for (Eigen::Index c = 0; c < 2; ++c) {
    if (c < static_cast<Eigen::Index>(k)) {
      y.col(c) = init.projected.col(c);
    } else {
      for (Eigen::Index i = 0; i < N; ++i) y(i, c) = rng.normal();
    }
    const double sd = std::sqrt((y.col(c).array() - y.col(c).mean()).square().mean());
    if (sd > 0.0) {
      y.col(c) = (y.col(c).array() - y.col(c).mean()) / sd;
    } else {
      for (Eigen::Index i = 0; i < N; ++i) y(i, c) = 1e-4 * rng.normal();
    }
  }

  Projection2D out;
  out.method = "umap";
  out.hyperparameters = {{"n_neighbors", static_cast<double>(opt.n_neighbors)},
                         {"epochs", static_cast<double>(opt.epochs)},
                         {"negative_samples", static_cast<double>(opt.negative_samples)},
                         {"learning_rate", opt.learning_rate},
                         {"a", 1.0},
                         {"b", 1.0},
                         {"seed", static_cast<double>(opt.seed)}};

  double max_w = 0.0;
  for (const auto& e : graph.edges) max_w = std::max(max_w, e.weight);
  std::vector<double> epochs_per_sample(graph.edges.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) epochs_per_sample[e] = max_w / graph.edges[e].weight;
  std::vector<double> next_sample = epochs_per_sample;

  static constexpr double kClip = 4.0;
  auto clip = [](double v) { return std::clamp(v, -kClip, kClip); };
  const std::size_t trace_every = std::max<std::size_t>(1, opt.epochs / 50);
  out.objective_trace.push_back(umap_cross_entropy(graph, y));

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const double alpha = opt.learning_rate * (1.0 - static_cast<double>(epoch) / static_cast<double>(opt.epochs));
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      if (next_sample[e] > static_cast<double>(epoch + 1)) continue;
      const auto i = static_cast<Eigen::Index>(graph.edges[e].i);
      const auto j = static_cast<Eigen::Index>(graph.edges[e].j);

      // Attraction along the edge: d/dy of -log(1 / (1 + d^2)).
      const Eigen::RowVector2d diff = y.row(i) - y.row(j);
      const double attract = -2.0 / (1.0 + diff.squaredNorm());
      for (Eigen::Index c = 0; c < 2; ++c) {
        const double gstep = alpha * clip(attract * diff(c));
        y(i, c) += gstep;
        y(j, c) -= gstep;
      }
      // Repulsion from uniformly sampled points.
      for (std::size_t s = 0; s < opt.negative_samples; ++s) {
        const auto other = static_cast<Eigen::Index>(rng.uniform_int(0, N - 1));
        if (other == i) continue;
        const Eigen::RowVector2d away = y.row(i) - y.row(other);
        const double d2 = away.squaredNorm();
        const double repel = 2.0 / ((0.001 + d2) * (1.0 + d2));
        for (Eigen::Index c = 0; c < 2; ++c) y(i, c) += alpha * clip(repel * away(c));
      }
      next_sample[e] += epochs_per_sample[e];
    }
    if ((epoch + 1) % trace_every == 0 || epoch + 1 == opt.epochs) out.objective_trace.push_back(umap_cross_entropy(graph, y));
  }
  out.coords = y;
  return out;
}

// ---------------------------------------------------------------------------
// Output

void write_projection_csv(const std::filesystem::path& path, const Projection2D& projection,
                          std::span<const double> color, std::span<const std::size_t> series_ids,
                          const std::string& comment) {
  const auto N = static_cast<std::size_t>(projection.coords.rows());
  if (color.size() != N || series_ids.size() != N) throw ValidationError("projection output: length mismatch");
  io::CsvWriter csv(path);
  if (!comment.empty()) csv.comment(comment);
  csv.header({"x", "y", "color_value", "series_id"});
  for (std::size_t i = 0; i < N; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    csv.row(projection.coords(r, 0), projection.coords(r, 1), color[i], series_ids[i]);
  }
}

void write_projection_svg(const std::filesystem::path& path, const Projection2D& projection,
                          std::span<const double> color, const std::string& title) {
  constexpr double kSize = 480.0;
  constexpr double kMargin = 24.0;
  const auto& c = projection.coords;
  const Eigen::RowVector2d lo = c.colwise().minCoeff();
  const Eigen::RowVector2d hi = c.colwise().maxCoeff();
  const auto [cmin, cmax] = std::minmax_element(color.begin(), color.end());
  const double crange = color.empty() || *cmax == *cmin ? 1.0 : *cmax - *cmin;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kMargin << "\" y=\"16\" font-size=\"12\" font-family=\"sans-serif\">" << title << "</text>\n";
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    auto scale = [&](Eigen::Index axis, double v) {
      const double span = hi(axis) - lo(axis);
      const double unit = span > 0.0 ? (v - lo(axis)) / span : 0.5;
      return kMargin + unit * (kSize - 2.0 * kMargin);
    };
    const double t = color.empty() ? 0.5 : (color[static_cast<std::size_t>(i)] - *cmin) / crange;
    const int red = static_cast<int>(std::lround(255.0 * t));
    const int blue = 255 - red;
    out << "<circle cx=\"" << io::format_double(scale(0, c(i, 0))) << "\" cy=\""
        << io::format_double(kSize - scale(1, c(i, 1))) << "\" r=\"2.5\" fill=\"rgb(" << red << ",64," << blue
        << ")\" fill-opacity=\"0.8\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace tsprobe
