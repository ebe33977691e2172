#include "tsprobe/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tsprobe/parallel.hpp"

namespace tsprobe {

namespace {

constexpr std::array kAllKinds = {ConceptKind::AR1,        ConceptKind::LevelShift, ConceptKind::RandomWalk,
                                  ConceptKind::Spectral,   ConceptKind::TimeWarped, ConceptKind::Trend,
                                  ConceptKind::VarianceShift};

// Stream ids above any plausible series index.
constexpr std::uint64_t kSplitStream = 0xffffffff00000001ull;
constexpr std::uint64_t kParamStream = 0x70617261ull;

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

std::vector<std::string> range_keys(ConceptKind kind) {
  switch (kind) {
    case ConceptKind::AR1: return {"phi", "sigma"};
    case ConceptKind::LevelShift: return {"delta", "noise_std", "tau_frac"};
    case ConceptKind::RandomWalk: return {"mu", "sigma"};
    case ConceptKind::Spectral: return {"amp", "freq", "noise_std"};
    case ConceptKind::TimeWarped: return {"freq", "noise_std", "warp_shape"};
    case ConceptKind::Trend: return {"beta", "noise_std"};
    case ConceptKind::VarianceShift: return {"sigma1", "sigma2", "tau_frac"};
  }
  return {};
}

double param(const ParamMap& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) throw ValidationError("missing parameter '" + key + "'");
  return it->second;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

void require_nonnegative(const ParamMap& params, const std::string& key) {
  const double v = param(params, key);
  require(std::isfinite(v) && v >= 0.0, key + " must be a finite non-negative value");
}

std::size_t changepoint(const ParamMap& params, std::size_t length) {
  const double tau = param(params, "tau");
  require(tau == std::floor(tau) && tau >= 1.0 && tau <= static_cast<double>(length) - 1.0,
          "changepoint tau must be an integer in [1, T-1]");
  return static_cast<std::size_t>(tau);
}

// Rounds a changepoint fraction to a valid integer index in [1, T-1].
double changepoint_from_fraction(double frac, std::size_t length) {
  const double t = std::floor(frac * static_cast<double>(length));
  return std::clamp(t, 1.0, static_cast<double>(length) - 1.0);
}

void check_params(ConceptKind kind, const ParamMap& params, std::size_t length) {
  int spectral_k = 1;
  if (kind == ConceptKind::Spectral) {
    const double k = param(params, "k");
    require(k == std::floor(k) && k >= 1.0 && k <= 64.0, "spectral component count k must be an integer >= 1");
    spectral_k = static_cast<int>(k);
  }
  auto keys = required_param_keys(kind, spectral_k);
  std::sort(keys.begin(), keys.end());
  std::vector<std::string> given;
  for (const auto& [key, value] : params) {
    given.push_back(key);
    require(std::isfinite(value), "parameter '" + key + "' is not finite");
  }
  require(given == keys, "parameter set does not match the required keys for " + std::string(to_string(kind)));

  switch (kind) {
    case ConceptKind::AR1:
      require(std::abs(param(params, "phi")) < 1.0, "AR1 requires |phi| < 1");
      require_nonnegative(params, "sigma");
      break;
    case ConceptKind::LevelShift:
      changepoint(params, length);
      require_nonnegative(params, "noise_std");
      break;
    case ConceptKind::RandomWalk: require_nonnegative(params, "sigma"); break;
    case ConceptKind::Spectral:
      require_nonnegative(params, "noise_std");
      for (int j = 1; j <= spectral_k; ++j) {
        const double f = param(params, "freq_" + std::to_string(j));
        require(f > 0.0 && f < 0.5, "spectral frequencies must lie in (0, 0.5)");
      }
      break;
    case ConceptKind::TimeWarped: {
      const double f = param(params, "freq");
      require(f > 0.0 && f < 0.5, "time-warped frequency must lie in (0, 0.5)");
      require(param(params, "warp_shape") > 0.0, "warp_shape must be positive");
      require_nonnegative(params, "noise_std");
      break;
    }
    case ConceptKind::Trend: require_nonnegative(params, "noise_std"); break;
    case ConceptKind::VarianceShift:
      changepoint(params, length);
      require(param(params, "sigma1") > 0.0, "sigma1 must be positive");
      require(param(params, "sigma2") > 0.0, "sigma2 must be positive");
      break;
  }
}

std::vector<double> raw_series(ConceptKind kind, const ParamMap& p, std::size_t length, Rng& rng) {
  std::vector<double> x(length, 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  switch (kind) {
    case ConceptKind::AR1: {
      const double phi = param(p, "phi");
      const double sigma = param(p, "sigma");
      // x_0 from the stationary distribution N(0, sigma^2 / (1 - phi^2)).
      x[0] = rng.normal() * sigma / std::sqrt(1.0 - phi * phi);
      for (std::size_t t = 1; t < length; ++t) x[t] = phi * x[t - 1] + sigma * rng.normal();
      break;
    }
    case ConceptKind::LevelShift: {
      const double delta = param(p, "delta");
      const double noise = param(p, "noise_std");
      const std::size_t tau = changepoint(p, length);
      for (std::size_t t = 0; t < length; ++t) x[t] = noise * rng.normal() + (t >= tau ? delta : 0.0);
      break;
    }
    case ConceptKind::RandomWalk: {
      const double mu = param(p, "mu");
      const double sigma = param(p, "sigma");
      double level = 0.0;
      for (std::size_t t = 0; t < length; ++t) {
        level += mu + sigma * rng.normal();
        x[t] = level;
      }
      break;
    }
    case ConceptKind::Spectral: {
      const int k = static_cast<int>(param(p, "k"));
      for (int j = 1; j <= k; ++j) {
        const auto suffix = std::to_string(j);
        const double a = param(p, "amp_" + suffix);
        const double f = param(p, "freq_" + suffix);
        const double phase = param(p, "phase_" + suffix);
        for (std::size_t t = 0; t < length; ++t) x[t] += a * std::sin(two_pi * f * static_cast<double>(t) + phase);
      }
      const double noise = param(p, "noise_std");
      for (auto& v : x) v += noise * rng.normal();
      break;
    }
    case ConceptKind::TimeWarped: {
      const double f = param(p, "freq");
      const double phase = param(p, "phase");
      const double shape = param(p, "warp_shape");
      std::vector<double> base(length);
      for (std::size_t t = 0; t < length; ++t) base[t] = std::sin(two_pi * f * static_cast<double>(t) + phase);
      if (length < 2) {
        x = base;
      } else {
        std::vector<double> steps(length - 1);
        for (auto& s : steps) s = rng.gamma(shape);
        x = warp_resample(base, steps);
      }
      const double noise = param(p, "noise_std");
      for (auto& v : x) v += noise * rng.normal();
      break;
    }
    case ConceptKind::Trend: {
      const double beta = param(p, "beta");
      const double noise = param(p, "noise_std");
      for (std::size_t t = 0; t < length; ++t) x[t] = beta * static_cast<double>(t) + noise * rng.normal();
      break;
    }
    case ConceptKind::VarianceShift: {
      const double s1 = param(p, "sigma1");
      const double s2 = param(p, "sigma2");
      const std::size_t tau = changepoint(p, length);
      for (std::size_t t = 0; t < length; ++t) x[t] = (t < tau ? s1 : s2) * rng.normal();
      break;
    }
  }
  return x;
}

}  // namespace

std::string_view to_string(ConceptKind kind) {
  switch (kind) {
    case ConceptKind::AR1: return "AR1";
    case ConceptKind::LevelShift: return "LevelShift";
    case ConceptKind::RandomWalk: return "RandomWalk";
    case ConceptKind::Spectral: return "Spectral";
    case ConceptKind::TimeWarped: return "TimeWarped";
    case ConceptKind::Trend: return "Trend";
    case ConceptKind::VarianceShift: return "VarianceShift";
  }
  return "?";
}

std::string_view to_string(Normalization norm) { return norm == Normalization::ZScore ? "zscore" : "none"; }

ConceptKind parse_concept_kind(std::string_view name) {
  for (auto kind : kAllKinds) {
    if (iequals(name, to_string(kind))) return kind;
  }
  throw ValidationError("unknown concept kind '" + std::string(name) + "'");
}

Normalization parse_normalization(std::string_view name) {
  if (iequals(name, "zscore")) return Normalization::ZScore;
  if (iequals(name, "none")) return Normalization::None;
  throw ValidationError("unknown normalization '" + std::string(name) + "'");
}

std::span<const ConceptKind> all_concept_kinds() { return kAllKinds; }

ConceptSpec ConceptSpec::defaults(ConceptKind kind, std::size_t length) {
  ConceptSpec spec;
  spec.kind = kind;
  spec.length = length;
  switch (kind) {
    case ConceptKind::AR1: spec.ranges = {{"phi", {-0.95, 0.95}}, {"sigma", {0.5, 1.5}}}; break;
    case ConceptKind::LevelShift:
      spec.ranges = {{"delta", {-3.0, 3.0}}, {"tau_frac", {0.2, 0.8}}, {"noise_std", {0.1, 1.0}}};
      break;
    case ConceptKind::RandomWalk: spec.ranges = {{"mu", {-0.1, 0.1}}, {"sigma", {0.5, 1.5}}}; break;
    case ConceptKind::Spectral:
      spec.ranges = {{"freq", {0.02, 0.45}}, {"amp", {0.5, 2.0}}, {"noise_std", {0.1, 0.1}}};
      spec.k_max = 3;
      break;
    case ConceptKind::TimeWarped:
      spec.ranges = {{"freq", {0.02, 0.2}}, {"warp_shape", {0.5, 5.0}}, {"noise_std", {0.05, 0.05}}};
      break;
    case ConceptKind::Trend: spec.ranges = {{"beta", {-0.05, 0.05}}, {"noise_std", {0.1, 1.0}}}; break;
    case ConceptKind::VarianceShift:
      spec.ranges = {{"sigma1", {0.5, 2.5}}, {"sigma2", {0.5, 2.5}}, {"tau_frac", {0.2, 0.8}}};
      break;
  }
  const bool magnitude_is_signal = kind == ConceptKind::LevelShift || kind == ConceptKind::RandomWalk ||
                                   kind == ConceptKind::VarianceShift;
  spec.normalization = magnitude_is_signal ? Normalization::None : Normalization::ZScore;
  return spec;
}

void ConceptSpec::validate() const {
  const std::string where = std::string(to_string(kind)) + ": ";
  require(length >= 2, where + "length must be at least 2");
  std::vector<std::string> given;
  for (const auto& [key, r] : ranges) given.push_back(key);
  require(given == range_keys(kind), where + "ranges must define exactly the keys of this concept");
  for (const auto& [key, r] : ranges) {
    require(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi,
            where + "range '" + key + "' must be finite with lo <= hi");
  }
  auto positive = [&](const char* key) {
    require(ranges.at(key).lo > 0.0, where + "range '" + key + "' must be strictly positive");
  };
  auto nonnegative = [&](const char* key) {
    require(ranges.at(key).lo >= 0.0, where + "range '" + key + "' must be non-negative");
  };
  auto fraction = [&](const char* key) {
    require(ranges.at(key).lo > 0.0 && ranges.at(key).hi < 1.0, where + "range '" + key + "' must lie in (0, 1)");
  };
  auto frequency = [&](const char* key) {
    require(ranges.at(key).lo > 0.0 && ranges.at(key).hi < 0.5, where + "range '" + key + "' must lie in (0, 0.5)");
  };
  switch (kind) {
    case ConceptKind::AR1:
      require(ranges.at("phi").lo > -1.0 && ranges.at("phi").hi < 1.0, where + "range 'phi' must lie in (-1, 1)");
      positive("sigma");
      break;
    case ConceptKind::LevelShift:
      fraction("tau_frac");
      nonnegative("noise_std");
      break;
    case ConceptKind::RandomWalk: positive("sigma"); break;
    case ConceptKind::Spectral:
      require(k_max >= 1, where + "k_max must be >= 1");
      frequency("freq");
      positive("amp");
      nonnegative("noise_std");
      break;
    case ConceptKind::TimeWarped:
      frequency("freq");
      positive("warp_shape");
      nonnegative("noise_std");
      break;
    case ConceptKind::Trend: nonnegative("noise_std"); break;
    case ConceptKind::VarianceShift:
      positive("sigma1");
      positive("sigma2");
      fraction("tau_frac");
      break;
  }
}

std::vector<std::size_t> ConceptDataset::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < is_train.size(); ++i)
    if (is_train[i]) out.push_back(i);
  return out;
}

std::vector<std::size_t> ConceptDataset::val_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < is_train.size(); ++i)
    if (!is_train[i]) out.push_back(i);
  return out;
}

SeriesMatrix ConceptDataset::values() const {
  SeriesMatrix out(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(length()));
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& v = series[i].values;
    out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  return out;
}

ZScoreResult zscore(std::span<const double> values) {
  if (values.size() < 2) throw ValidationError("zscore requires at least two values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);

  ZScoreResult out;
  out.values.resize(values.size());
  if (sd < 1e-12) {
    std::transform(values.begin(), values.end(), out.values.begin(), [&](double v) { return v - mean; });
    out.applied = Normalization::None;
  } else {
    std::transform(values.begin(), values.end(), out.values.begin(), [&](double v) { return (v - mean) / sd; });
  }
  return out;
}

std::vector<std::string> required_param_keys(ConceptKind kind, int spectral_k) {
  switch (kind) {
    case ConceptKind::AR1: return {"phi", "sigma"};
    case ConceptKind::LevelShift: return {"delta", "tau", "noise_std"};
    case ConceptKind::RandomWalk: return {"mu", "sigma"};
    case ConceptKind::Spectral: {
      std::vector<std::string> keys = {"k", "noise_std"};
      for (int j = 1; j <= spectral_k; ++j) {
        const auto s = std::to_string(j);
        keys.push_back("freq_" + s);
        keys.push_back("amp_" + s);
        keys.push_back("phase_" + s);
      }
      return keys;
    }
    case ConceptKind::TimeWarped: return {"freq", "phase", "warp_shape", "noise_std"};
    case ConceptKind::Trend: return {"beta", "noise_std"};
    case ConceptKind::VarianceShift: return {"sigma1", "sigma2", "tau"};
  }
  return {};
}

std::vector<std::string> target_names(ConceptKind kind) {
  switch (kind) {
    case ConceptKind::AR1: return {"phi"};
    case ConceptKind::LevelShift: return {"delta", "tau_frac"};
    case ConceptKind::RandomWalk: return {"mu"};
    case ConceptKind::Spectral: return {"mean_freq"};
    case ConceptKind::TimeWarped: return {"freq"};
    case ConceptKind::Trend: return {"beta"};
    case ConceptKind::VarianceShift: return {"tau_frac", "sigma_ratio"};
  }
  return {};
}

std::vector<double> target_values(ConceptKind kind, const ParamMap& p, std::size_t length) {
  const double T = static_cast<double>(length);
  switch (kind) {
    case ConceptKind::AR1: return {param(p, "phi")};
    case ConceptKind::LevelShift: return {param(p, "delta"), param(p, "tau") / T};
    case ConceptKind::RandomWalk: return {param(p, "mu")};
    case ConceptKind::Spectral: {
      const int k = static_cast<int>(param(p, "k"));
      double sum = 0.0;
      for (int j = 1; j <= k; ++j) sum += param(p, "freq_" + std::to_string(j));
      return {sum / k};
    }
    case ConceptKind::TimeWarped: return {param(p, "freq")};
    case ConceptKind::Trend: return {param(p, "beta")};
    case ConceptKind::VarianceShift: return {param(p, "tau") / T, param(p, "sigma2") / param(p, "sigma1")};
  }
  return {};
}

ParamMap sample_params(const ConceptSpec& spec, Rng& rng) {
  auto draw = [&](const char* key) {
    const Range& r = spec.ranges.at(key);
    return rng.uniform(r.lo, r.hi);
  };
  const double two_pi = 2.0 * std::numbers::pi;
  ParamMap p;
  switch (spec.kind) {
    case ConceptKind::AR1:
      p["phi"] = draw("phi");
      p["sigma"] = draw("sigma");
      break;
    case ConceptKind::LevelShift:
      p["delta"] = draw("delta");
      p["tau"] = changepoint_from_fraction(draw("tau_frac"), spec.length);
      p["noise_std"] = draw("noise_std");
      break;
    case ConceptKind::RandomWalk:
      p["mu"] = draw("mu");
      p["sigma"] = draw("sigma");
      break;
    case ConceptKind::Spectral: {
      const auto k = rng.uniform_int(1, spec.k_max);
      p["k"] = static_cast<double>(k);
      for (std::int64_t j = 1; j <= k; ++j) {
        const auto s = std::to_string(j);
        p["freq_" + s] = draw("freq");
        p["amp_" + s] = draw("amp");
        p["phase_" + s] = rng.uniform(0.0, two_pi);
      }
      p["noise_std"] = draw("noise_std");
      break;
    }
    case ConceptKind::TimeWarped:
      p["freq"] = draw("freq");
      p["phase"] = rng.uniform(0.0, two_pi);
      p["warp_shape"] = draw("warp_shape");
      p["noise_std"] = draw("noise_std");
      break;
    case ConceptKind::Trend:
      p["beta"] = draw("beta");
      p["noise_std"] = draw("noise_std");
      break;
    case ConceptKind::VarianceShift:
      p["sigma1"] = draw("sigma1");
      p["sigma2"] = draw("sigma2");
      p["tau"] = changepoint_from_fraction(draw("tau_frac"), spec.length);
      break;
  }
  return p;
}

LabeledSeries generate_series(const ConceptSpec& spec, const ParamMap& params, std::uint64_t seed) {
  if (spec.length < 2) throw ValidationError("series length must be at least 2");
  check_params(spec.kind, params, spec.length);

  Rng rng(seed);
  LabeledSeries out;
  out.kind = spec.kind;
  out.params = params;
  out.seed = seed;
  out.values = raw_series(spec.kind, params, spec.length, rng);
  out.applied_normalization = Normalization::None;
  if (spec.normalization == Normalization::ZScore) {
    auto z = zscore(out.values);
    out.values = std::move(z.values);
    out.applied_normalization = z.applied;
  }
  return out;
}

std::vector<bool> make_split(std::uint64_t master_seed, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(master_seed, kSplitStream));
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<bool> is_train(n, false);
  for (std::size_t i = 0; i < train_count(n); ++i) is_train[order[i]] = true;
  return is_train;
}

ConceptDataset generate_dataset(const ConceptSpec& spec, std::size_t n, std::uint64_t master_seed) {
  spec.validate();
  if (n < 2) throw ValidationError("a dataset needs at least two series");

  ConceptDataset ds;
  ds.spec = spec;
  ds.master_seed = master_seed;
  ds.series.resize(n);
  ds.target_names = target_names(spec.kind);

  parallel_for(n, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(master_seed, i);
    Rng param_rng(derive_seed(seed, kParamStream));
    ds.series[i] = generate_series(spec, sample_params(spec, param_rng), seed);
  });

  ds.targets.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ds.target_names.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = target_values(spec.kind, ds.series[i].params, spec.length);
    for (std::size_t j = 0; j < row.size(); ++j)
      ds.targets(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  ds.is_train = make_split(master_seed, n);
  return ds;
}

std::vector<double> warp_resample(std::span<const double> base, std::span<const double> steps) {
  const std::size_t T = base.size();
  if (T < 2 || steps.size() != T - 1) throw ValidationError("warp_resample needs T >= 2 samples and T - 1 steps");
  std::vector<double> u(T, 0.0);
  for (std::size_t k = 1; k < T; ++k) {
    if (!(steps[k - 1] > 0.0) || !std::isfinite(steps[k - 1])) throw ValidationError("warp steps must be positive");
    u[k] = u[k - 1] + steps[k - 1];
  }
  const double scale = static_cast<double>(T - 1) / u[T - 1];
  for (auto& v : u) v *= scale;
  u[T - 1] = static_cast<double>(T - 1);

  std::vector<double> out(T);
  std::size_t k = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const double pos = static_cast<double>(t);
    while (k + 2 < T && u[k + 1] < pos) ++k;
    const double span = u[k + 1] - u[k];
    double w = span > 0.0 ? (pos - u[k]) / span : 0.0;
    w = std::clamp(w, 0.0, 1.0);
    out[t] = (1.0 - w) * base[k] + w * base[k + 1];
  }
  return out;
}

}  // namespace tsprobe
