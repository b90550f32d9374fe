#pragma once

// Monte Carlo oracles and derived analyses: sampling, empirical pattern laws,
// comparison metrics and Jacobian singular-value distributions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "relu_lawn/distribution.hpp"
#include "relu_lawn/geometry.hpp"
#include "relu_lawn/parallel.hpp"
#include "relu_lawn/support.hpp"

namespace relu_lawn {

inline constexpr std::size_t kSampleBlock = 4096;

/// Square-root factor L with L L^T = Sigma: Cholesky, else eigen factor for singular PSD input.
inline Matrix covariance_factor(const Matrix& sigma, double tol = 1e-10) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
  const Vector& ev = eig.eigenvalues();
  const double top = std::max(ev.maxCoeff(), 0.0);
  if (ev.minCoeff() < -tol * top) throw DomainError("covariance is not positive semidefinite");
  return eig.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// n i.i.d. rows from the mixture. Block b of 4096 rows draws from its own stream
/// mix_seed(seed, b), so the output does not depend on the worker count.
inline Matrix mc_sample(const GaussianMixture& gmm, std::size_t n, std::uint64_t seed, std::size_t threads = 0) {
  if (n < 1) throw DomainError("mc_sample needs n >= 1");
  const auto d = static_cast<Eigen::Index>(gmm.dim());
  std::vector<Matrix> factors;
  for (const auto& s : gmm.covariances()) factors.push_back(covariance_factor(s));
  std::vector<double> cumulative;
  double acc = 0.0;
  for (double w : gmm.weights()) cumulative.push_back(acc += w);
  Matrix out(static_cast<Eigen::Index>(n), d);
  const std::size_t blocks = (n + kSampleBlock - 1) / kSampleBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    std::mt19937_64 rng(mix_seed(seed, b));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal;
    Vector z(d);
    const std::size_t end = std::min(n, (b + 1) * kSampleBlock);
    for (std::size_t i = b * kSampleBlock; i < end; ++i) {
      const double u = unif(rng) * acc;
      std::size_t k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      k = std::min(k, gmm.size() - 1);
      for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(rng);
      out.row(static_cast<Eigen::Index>(i)) = (gmm.mean(k) + factors[k] * z).transpose();
    }
  });
  return out;
}

struct EmpiricalLaw {
  std::map<ActivationPattern, std::size_t> pattern_counts;
  Matrix output_samples;  // n x n_L
  std::size_t n = 0;
  std::uint64_t seed = 0;

  PatternPMF pmf() const {
    PatternPMF out;
    out.mode = PmfMode::empirical;
    const double total = static_cast<double>(n);
    for (const auto& [p, c] : pattern_counts) {
      const double q = static_cast<double>(c) / total;
      out.entries.emplace(p, ProbEstimate{q, std::sqrt(q * (1.0 - q) / total)});
    }
    out.residual_mass = 0.0;
    return out;
  }
};

/// Forward pass of every row; tallies patterns and keeps the outputs.
inline EmpiricalLaw mc_empirical(const NetworkParams& net, const Matrix& samples, std::uint64_t seed = 0,
                                 std::size_t threads = 0) {
  if (static_cast<std::size_t>(samples.cols()) != net.input_dim()) throw ShapeError("sample dimension != network input");
  const auto n = static_cast<std::size_t>(samples.rows());
  EmpiricalLaw law;
  law.n = n;
  law.seed = seed;
  law.output_samples.resize(samples.rows(), static_cast<Eigen::Index>(net.output_dim()));
  const std::size_t blocks = (n + kSampleBlock - 1) / kSampleBlock;
  std::vector<std::map<ActivationPattern, std::size_t>> partial(blocks);
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * kSampleBlock);
    for (std::size_t i = b * kSampleBlock; i < end; ++i) {
      ForwardResult r = forward(net, samples.row(static_cast<Eigen::Index>(i)).transpose());
      law.output_samples.row(static_cast<Eigen::Index>(i)) = r.output.transpose();
      ++partial[b][std::move(r.pattern)];
    }
  });
  for (auto& m : partial)
    for (auto& [p, c] : m) law.pattern_counts[p] += c;
  return law;
}

/// Network whose first layer is the identity on h_1, paired with the law of h_1.
/// Patterns and outputs have the same distribution as under (net, gmm), but
/// sampling happens in n_1 rather than n_0 dimensions.
struct FirstLayerReduction {
  NetworkParams net;
  GaussianMixture gmm;
};

inline FirstLayerReduction first_layer_reduction(const NetworkParams& net, const GaussianMixture& gmm) {
  const Layer& first = net.layer(1);
  std::vector<Layer> layers = net.layers();
  const auto n1 = first.weight.rows();
  layers[0] = Layer{Matrix::Identity(n1, n1), Vector::Zero(n1)};
  return {NetworkParams(std::move(layers), net.activation()), gmm.pushforward(first.weight, first.bias)};
}

/// 1/2 sum |p - q| over the union of supports; residual masses are compared as one extra symbol.
inline double tv_distance(const PatternPMF& a, const PatternPMF& b) {
  double s = 0.0;
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  while (ia != a.entries.end() || ib != b.entries.end()) {
    if (ib == b.entries.end() || (ia != a.entries.end() && ia->first < ib->first)) {
      s += std::abs(ia->second.probability);
      ++ia;
    } else if (ia == a.entries.end() || ib->first < ia->first) {
      s += std::abs(ib->second.probability);
      ++ib;
    } else {
      s += std::abs(ia->second.probability - ib->second.probability);
      ++ia;
      ++ib;
    }
  }
  s += std::abs(a.residual_mass - b.residual_mass);
  return 0.5 * s;
}

/// max over patterns of |p - q|.
inline double max_abs_difference(const PatternPMF& a, const PatternPMF& b) {
  double m = 0.0;
  for (const auto& [p, e] : a.entries) m = std::max(m, std::abs(e.probability - b.probability(p)));
  for (const auto& [p, e] : b.entries) m = std::max(m, std::abs(e.probability - a.probability(p)));
  return m;
}

/// Fraction of sorted samples <= x.
inline double ecdf(std::span<const double> sorted, double x) {
  return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) /
         static_cast<double>(sorted.size());
}

/// sup over grid points of |F(x) - ECDF(x)|.
inline double ks_statistic(std::span<const double> grid, std::span<const double> cdf, std::span<const double> samples) {
  if (grid.size() != cdf.size()) throw ShapeError("grid and cdf lengths differ");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  double m = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) m = std::max(m, std::abs(cdf[i] - ecdf(sorted, grid[i])));
  return m;
}

/// Dvoretzky-Kiefer-Wolfowitz radius: sup |ECDF - F| <= eps with probability 1 - alpha.
inline double dkw_radius(std::size_t n, double alpha) {
  return std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(n)));
}

struct WeightedValues {
  std::vector<double> values;
  std::vector<double> weights;
};

/// Two-sample KS between weighted samples; each side is normalized by its own total weight.
inline double ks_two_sample(const WeightedValues& a, const WeightedValues& b) {
  auto sorted = [](const WeightedValues& w) {
    std::vector<std::pair<double, double>> v;
    double total = 0.0;
    for (std::size_t i = 0; i < w.values.size(); ++i) {
      v.emplace_back(w.values[i], w.weights[i]);
      total += w.weights[i];
    }
    std::sort(v.begin(), v.end());
    if (total > 0.0)
      for (auto& e : v) e.second /= total;
    return v;
  };
  const auto va = sorted(a);
  const auto vb = sorted(b);
  double fa = 0.0, fb = 0.0, gap = 0.0;
  std::size_t i = 0, j = 0;
  while (i < va.size() || j < vb.size()) {
    const double x = (j == vb.size() || (i < va.size() && va[i].first <= vb[j].first)) ? va[i].first : vb[j].first;
    while (i < va.size() && va[i].first == x) fa += va[i++].second;
    while (j < vb.size() && vb[j].first == x) fb += vb[j++].second;
    gap = std::max(gap, std::abs(fa - fb));
  }
  return gap;
}

/// Jacobian dy/dx on the affine piece of a pattern: C_L.
inline Matrix jacobian(const NetworkParams& net, const ActivationPattern& pattern) {
  return affine_params(net, pattern, net.depth()).C;
}

/// Singular values of C_L for many patterns. Writes C_L = B W_1 with B the map
/// from h_1, so only the small Gram matrix B (W_1 W_1^T) B^T is decomposed.
class JacobianSpectrum {
 public:
  explicit JacobianSpectrum(const NetworkParams& net) : net_(&net) {
    const Matrix& w1 = net.layer(1).weight;
    gram_ = w1 * w1.transpose();
    count_ = std::min(net.output_dim(), net.input_dim());
  }

  /// Number of singular values per Jacobian, min(n_L, n_0).
  std::size_t count() const { return count_; }

  /// Descending singular values.
  std::vector<double> singular_values(const ActivationPattern& pattern) const {
    const NetworkParams& net = *net_;
    check_pattern_shape(net, pattern);
    const auto n1 = net.layer(1).weight.rows();
    Matrix b = Matrix::Identity(n1, n1);
    const Activation& act = net.activation();
    for (std::size_t l = 2; l <= net.depth(); ++l) {
      Matrix masked = net.layer(l).weight;
      for (std::size_t i = 0; i < pattern.width(l - 2); ++i)
        masked.col(static_cast<Eigen::Index>(i)) *= act.mask_value(pattern.bit(l - 2, i));
      b = masked * b;
    }
    Matrix g = b * gram_ * b.transpose();
    g = 0.5 * (g + g.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
    std::vector<double> sv;
    const Vector& ev = eig.eigenvalues();
    for (Eigen::Index i = ev.size() - 1; i >= 0 && sv.size() < count_; --i) sv.push_back(std::sqrt(std::max(ev[i], 0.0)));
    while (sv.size() < count_) sv.push_back(0.0);
    return sv;
  }

 private:
  const NetworkParams* net_;
  Matrix gram_;
  std::size_t count_ = 0;
};

/// Each singular value of each pattern's Jacobian, carrying weight w / count.
inline WeightedValues weighted_singular_values(const NetworkParams& net, std::span<const ActivationPattern> patterns,
                                               std::span<const double> weights, std::size_t threads = 0) {
  if (patterns.size() != weights.size()) throw ShapeError("one weight per pattern required");
  const JacobianSpectrum spec(net);
  std::vector<std::vector<double>> per(patterns.size());
  parallel_for(patterns.size(), threads, [&](std::size_t i) { per[i] = spec.singular_values(patterns[i]); });
  WeightedValues out;
  const double share = 1.0 / static_cast<double>(spec.count());
  for (std::size_t i = 0; i < patterns.size(); ++i)
    for (double s : per[i]) {
      out.values.push_back(s);
      out.weights.push_back(weights[i] * share);
    }
  return out;
}

struct SVHistogram {
  enum class Source { exact_support, monte_carlo };
  std::vector<double> edges;  // bins + 1
  std::vector<double> mass;
  double residual = 0.0;  // 1 - total weight supplied
  Source source = Source::exact_support;
};

/// Histogram over [0, upper] with uniform bins; the last bin is closed.
inline SVHistogram sv_histogram(const WeightedValues& values, double upper, std::size_t bins,
                                SVHistogram::Source source) {
  if (bins == 0 || !(upper > 0.0)) throw DomainError("histogram needs bins >= 1 and upper > 0");
  SVHistogram h;
  h.source = source;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = upper * static_cast<double>(i) / static_cast<double>(bins);
  h.mass.assign(bins, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < values.values.size(); ++i) {
    const double x = values.values[i];
    auto b = static_cast<std::size_t>(std::floor(x / upper * static_cast<double>(bins)));
    b = std::min(b, bins - 1);
    h.mass[b] += values.weights[i];
    total += values.weights[i];
  }
  h.residual = 1.0 - total;
  return h;
}

inline constexpr std::size_t kSvBins = 50;

/// Probability-weighted singular-value histogram, 50 bins over [0, 1.05 max].
/// Pass `upper` > 0 to share bins with another source.
inline SVHistogram sv_distribution(const NetworkParams& net, std::span<const ActivationPattern> patterns,
                                   std::span<const double> weights, double upper = 0.0, std::size_t threads = 0) {
  const WeightedValues v = weighted_singular_values(net, patterns, weights, threads);
  if (!(upper > 0.0)) {
    double top = 0.0;
    for (double x : v.values) top = std::max(top, x);
    upper = top > 0.0 ? 1.05 * top : 1.0;
  }
  return sv_histogram(v, upper, kSvBins, SVHistogram::Source::exact_support);
}

/// Pattern whose bits are the rounded layer marginals along the single most likely path.
inline ActivationPattern rounded_marginal_pattern(const NetworkParams& net, const GaussianMixture& gmm) {
  const auto spec = ThresholdSpec::uniform_entropy(1.0, net.depth() - 1, 0);
  return estimate_support(net, gmm, spec).patterns.front();
}

/// Diagnostic: the Jacobian at the rounded-marginal pattern.
inline Matrix rounded_marginal_jacobian(const NetworkParams& net, const GaussianMixture& gmm) {
  return jacobian(net, rounded_marginal_pattern(net, gmm));
}

/// Q diag(lambda) Q^T with Haar-random Q and eigenvalues uniform on (0, 1], rescaled so the largest is 1.
inline Matrix random_covariance(std::size_t dim, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  Vector lambda(n);
  for (Eigen::Index i = 0; i < n; ++i) lambda[i] = 1.0 - unif(rng);
  lambda /= lambda.maxCoeff();
  Matrix s = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

}  // namespace relu_lawn
