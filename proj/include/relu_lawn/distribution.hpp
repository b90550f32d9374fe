#pragma once

// Pattern PMF, truncated-Gaussian output mixture and output CDF under a
// Gaussian-mixture input. Every (component, pattern) cell is an independent
// Gaussian box probability whose quadrature seed depends only on the
// top-level seed, the pattern and the component index, so results do not
// depend on evaluation order or worker count.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relu_lawn/gaussian_mixture.hpp"
#include "relu_lawn/geometry.hpp"
#include "relu_lawn/normal.hpp"
#include "relu_lawn/orthant.hpp"
#include "relu_lawn/parallel.hpp"

namespace relu_lawn {

struct EvalConfig {
  QuadratureConfig quadrature;
  /// Replace pushforward covariances by their diagonals (exact product of CDFs).
  bool diagonal_approximation = false;
  /// Largest hidden-bit count allowed for exhaustive enumeration.
  std::size_t exhaustive_cap = 16;
  std::size_t threads = 0;
};

/// Per-component mean/covariance of stacked preactivations for one pattern.
struct PushforwardGaussianParams {
  std::vector<double> weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  std::size_t depth = 0;  // L-1 (hidden only) or L (hidden + output)
};

/// Input mixture pushed through the first layer once; deeper layers are
/// affine in h_1 for a fixed pattern (h_l = A_l h_1 + e_l), so every stacked
/// pushforward is A S_k A^T with S_k = W_1 Sigma_k W_1^T. This equals
/// C Sigma_k C^T for the stacked (C, d) without touching the input dimension.
class InputLaw {
 public:
  InputLaw(const NetworkParams& net, const GaussianMixture& gmm) : net_(&net), gmm_(&gmm) {
    if (gmm.dim() != net.input_dim())
      throw ShapeError("mixture dimension " + std::to_string(gmm.dim()) + " != network input dimension " +
                       std::to_string(net.input_dim()));
    const Layer& first = net.layer(1);
    for (std::size_t k = 0; k < gmm.size(); ++k) {
      first_means_.push_back(first.weight * gmm.mean(k) + first.bias);
      Matrix s = first.weight * gmm.covariance(k) * first.weight.transpose();
      first_covs_.push_back(0.5 * (s + s.transpose()));
    }
  }

  const NetworkParams& network() const { return *net_; }
  const GaussianMixture& mixture() const { return *gmm_; }
  std::size_t components() const { return gmm_->size(); }

  /// Stacked map in terms of h_1: rows h_1..h_depth = A h_1 + e.
  std::pair<Matrix, Vector> stacked_in_first_layer(const ActivationPattern& pattern, std::size_t depth) const {
    check_pattern_shape(*net_, pattern);
    if (depth < 1 || depth > net_->depth()) throw IndexError("pushforward depth out of range [1, L]");
    std::size_t rows = 0;
    for (std::size_t l = 1; l <= depth; ++l) rows += static_cast<std::size_t>(net_->layer(l).weight.rows());
    const auto n1 = net_->layer(1).weight.rows();
    Matrix A(static_cast<Eigen::Index>(rows), n1);
    Vector e(static_cast<Eigen::Index>(rows));
    Matrix cur = Matrix::Identity(n1, n1);
    Vector off = Vector::Zero(n1);
    Eigen::Index row = 0;
    const Activation& act = net_->activation();
    for (std::size_t l = 1; l <= depth; ++l) {
      if (l > 1) {
        Matrix masked = net_->layer(l).weight;
        for (std::size_t i = 0; i < pattern.width(l - 2); ++i)
          masked.col(static_cast<Eigen::Index>(i)) *= act.mask_value(pattern.bit(l - 2, i));
        cur = masked * cur;
        off = masked * off + net_->layer(l).bias;
      }
      A.middleRows(row, cur.rows()) = cur;
      e.segment(row, off.size()) = off;
      row += cur.rows();
    }
    return {std::move(A), std::move(e)};
  }

  PushforwardGaussianParams pushforward(const ActivationPattern& pattern, std::size_t depth) const {
    auto [A, e] = stacked_in_first_layer(pattern, depth);
    PushforwardGaussianParams p;
    p.depth = depth;
    p.weights = gmm_->weights();
    for (std::size_t k = 0; k < gmm_->size(); ++k) {
      p.means.push_back(A * first_means_[k] + e);
      Matrix s = A * first_covs_[k] * A.transpose();
      p.covariances.push_back(0.5 * (s + s.transpose()));
    }
    return p;
  }

 private:
  const NetworkParams* net_;
  const GaussianMixture* gmm_;
  std::vector<Vector> first_means_;
  std::vector<Matrix> first_covs_;
};

/// Quadrature seed of the (pattern, component) cell.
inline std::uint64_t cell_seed(std::uint64_t seed, const ActivationPattern& pattern, std::size_t k) {
  return mix_seed(mix_seed(seed, pattern.hash()), k);
}

namespace detail {

inline std::vector<Interval> hidden_box(const ActivationPattern& pattern) {
  std::vector<Interval> box(pattern.total_bits());
  for (std::size_t j = 0; j < box.size(); ++j) {
    if (pattern.flat_bit(j)) {
      box[j].lower = 0.0;
      box[j].lower_open = true;
    } else {
      box[j].upper = 0.0;
    }
  }
  return box;
}

inline ProbResult cell_box_prob(const Vector& mean, const Matrix& cov, std::span<const Interval> box,
                                const EvalConfig& cfg, std::uint64_t seed) {
  if (!cfg.diagonal_approximation) return box_prob(mean, cov, box, cfg.quadrature.with_seed(seed));
  double p = 1.0;
  const double floor = cfg.quadrature.rank_tolerance * std::max(0.0, cov.diagonal().maxCoeff());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const auto& iv = box[static_cast<std::size_t>(i)];
    const double v = cov(i, i);
    if (v <= floor) {
      if (!iv.holds(mean[i])) return {0.0, 0.0, 0};
      continue;
    }
    const double s = std::sqrt(v);
    p *= phi((iv.upper - mean[i]) / s) - phi((iv.lower - mean[i]) / s);
  }
  return {std::clamp(p, 0.0, 1.0), 0.0, 0};
}

/// Mass of component k of the input law inside K(pattern).
inline ProbResult cell_mass(const ActivationPattern& pattern, std::size_t k,
                            const PushforwardGaussianParams& hidden, const EvalConfig& cfg) {
  const auto box = hidden_box(pattern);
  return cell_box_prob(hidden.means[k], hidden.covariances[k], box, cfg, cell_seed(cfg.quadrature.seed, pattern, k));
}

}  // namespace detail

/// P(zeta = pattern) = sum_k alpha_k P(N(mu~_k, Sigma~_k) in O(pattern)); errors add across components.
inline ProbResult pattern_pmf(const InputLaw& law, const ActivationPattern& pattern, const EvalConfig& cfg = {}) {
  const auto hidden = law.pushforward(pattern, law.network().depth() - 1);
  ProbResult total;
  for (std::size_t k = 0; k < law.components(); ++k) {
    const ProbResult r = detail::cell_mass(pattern, k, hidden, cfg);
    total.value += hidden.weights[k] * r.value;
    total.std_error += hidden.weights[k] * r.std_error;
    total.n_points += r.n_points;
  }
  total.value = std::clamp(total.value, 0.0, 1.0);
  return total;
}

inline ProbResult pattern_pmf(const NetworkParams& net, const GaussianMixture& gmm, const ActivationPattern& pattern,
                              const EvalConfig& cfg = {}) {
  return pattern_pmf(InputLaw(net, gmm), pattern, cfg);
}

struct ProbEstimate {
  double probability = 0.0;
  double std_error = 0.0;
};

enum class PmfMode { exhaustive, support_restricted, empirical };

struct PatternPMF {
  std::map<ActivationPattern, ProbEstimate> entries;  // canonical order
  double residual_mass = 0.0;
  PmfMode mode = PmfMode::support_restricted;

  double total() const {
    double s = 0.0;
    for (const auto& [p, e] : entries) s += e.probability;
    return s;
  }
  double total_std_error() const {
    double s = 0.0;
    for (const auto& [p, e] : entries) s += e.std_error;
    return s;
  }
  double probability(const ActivationPattern& p) const {
    auto it = entries.find(p);
    return it == entries.end() ? 0.0 : it->second.probability;
  }
};

/// Which patterns to evaluate: all 2^bits of them, or an explicit list.
struct PatternSelection {
  std::optional<std::vector<ActivationPattern>> patterns;

  static PatternSelection exhaustive() { return {}; }
  static PatternSelection explicit_list(std::vector<ActivationPattern> list) { return {std::move(list)}; }
  bool is_exhaustive() const { return !patterns.has_value(); }
};

/// All patterns of a network in canonical order.
inline std::vector<ActivationPattern> all_patterns(const NetworkParams& net, std::size_t cap) {
  const std::size_t bits = net.total_hidden_bits();
  if (bits > cap)
    throw CapacityError("exhaustive enumeration of " + std::to_string(bits) + " hidden bits exceeds cap " +
                        std::to_string(cap) + "; use support estimation instead");
  std::vector<ActivationPattern> out;
  out.reserve(std::size_t{1} << bits);
  for (std::uint64_t i = 0; i < (std::uint64_t{1} << bits); ++i)
    out.push_back(ActivationPattern::from_index(net.hidden_widths(), i));
  return out;
}

inline PatternPMF enumerate_pmf(const InputLaw& law, const PatternSelection& selection, const EvalConfig& cfg = {}) {
  const std::vector<ActivationPattern> patterns =
      selection.is_exhaustive() ? all_patterns(law.network(), cfg.exhaustive_cap) : *selection.patterns;
  std::vector<ProbResult> results(patterns.size());
  parallel_for(patterns.size(), cfg.threads, [&](std::size_t i) { results[i] = pattern_pmf(law, patterns[i], cfg); });
  PatternPMF pmf;
  pmf.mode = selection.is_exhaustive() ? PmfMode::exhaustive : PmfMode::support_restricted;
  for (std::size_t i = 0; i < patterns.size(); ++i)
    pmf.entries.insert_or_assign(patterns[i], ProbEstimate{results[i].value, results[i].std_error});
  pmf.residual_mass = 1.0 - pmf.total();
  return pmf;
}

inline PatternPMF enumerate_pmf(const NetworkParams& net, const GaussianMixture& gmm, const PatternSelection& selection,
                                const EvalConfig& cfg = {}) {
  return enumerate_pmf(InputLaw(net, gmm), selection, cfg);
}

/// Patterns of a PMF with strictly positive probability, canonical order.
inline std::vector<ActivationPattern> positive_support(const PatternPMF& pmf) {
  std::vector<ActivationPattern> out;
  for (const auto& [p, e] : pmf.entries)
    if (e.probability > 0.0) out.push_back(p);
  return out;
}

/// P(h_j > 0) per coordinate of a mixture over one layer's preactivations,
/// sum_k alpha_k Phi(mu_kj / sigma_kj); zero-variance coordinates are decided by the mean sign.
inline Vector marginal_active_prob(const GaussianMixture& pushed) {
  const auto n = static_cast<Eigen::Index>(pushed.dim());
  Vector p = Vector::Zero(n);
  for (std::size_t k = 0; k < pushed.size(); ++k) {
    const Vector& mu = pushed.mean(k);
    const Matrix& cov = pushed.covariance(k);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = cov(j, j);
      const double pk = v > 0.0 ? phi(mu[j] / std::sqrt(v)) : (mu[j] > 0.0 ? 1.0 : 0.0);
      p[j] += pushed.weight(k) * pk;
    }
  }
  return p;
}

/// Same, from weights/means/diagonal variances.
inline Vector marginal_active_prob(std::span<const double> weights, std::span<const Vector> means,
                                   std::span<const Vector> variances) {
  const auto n = means.front().size();
  Vector p = Vector::Zero(n);
  for (std::size_t k = 0; k < weights.size(); ++k)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = variances[k][j];
      p[j] += weights[k] * (v > 0.0 ? phi(means[k][j] / std::sqrt(v)) : (means[k][j] > 0.0 ? 1.0 : 0.0));
    }
  return p;
}

/// P(y in output box, zeta in support): one joint box probability per (k, pattern).
inline ProbResult output_box_prob(const InputLaw& law, std::span<const ActivationPattern> support,
                                  std::span<const Interval> output_box, const EvalConfig& cfg = {}) {
  const NetworkParams& net = law.network();
  if (output_box.size() != net.output_dim()) throw ShapeError("output box dimension != n_L");
  std::vector<ProbResult> results(support.size());
  parallel_for(support.size(), cfg.threads, [&](std::size_t i) {
    const ActivationPattern& pattern = support[i];
    const auto joint = law.pushforward(pattern, net.depth());
    auto box = detail::hidden_box(pattern);
    box.insert(box.end(), output_box.begin(), output_box.end());
    ProbResult acc;
    for (std::size_t k = 0; k < law.components(); ++k) {
      const ProbResult r = detail::cell_box_prob(joint.means[k], joint.covariances[k], box, cfg,
                                                 cell_seed(cfg.quadrature.seed, pattern, k));
      acc.value += joint.weights[k] * r.value;
      acc.std_error += joint.weights[k] * r.std_error;
      acc.n_points += r.n_points;
    }
    results[i] = acc;
  });
  ProbResult total;
  for (const auto& r : results) {
    total.value += r.value;
    total.std_error += r.std_error;
    total.n_points += r.n_points;
  }
  total.value = std::clamp(total.value, 0.0, 1.0);
  return total;
}

/// P(y < phi componentwise, zeta in support).
inline ProbResult output_cdf(const InputLaw& law, std::span<const ActivationPattern> support, const Vector& at,
                             const EvalConfig& cfg = {}) {
  if (static_cast<std::size_t>(at.size()) != law.network().output_dim()) throw ShapeError("CDF point length != n_L");
  std::vector<Interval> box(static_cast<std::size_t>(at.size()));
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    box[static_cast<std::size_t>(i)].upper = at[i];
    box[static_cast<std::size_t>(i)].upper_open = true;
  }
  return output_box_prob(law, support, box, cfg);
}

inline ProbResult output_cdf(const NetworkParams& net, const GaussianMixture& gmm,
                             std::span<const ActivationPattern> support, const Vector& at, const EvalConfig& cfg = {}) {
  return output_cdf(InputLaw(net, gmm), support, at, cfg);
}

/// CDF density on a scalar-output grid by finite differences of the CDF.
inline std::vector<double> output_density_fd(std::span<const double> grid, std::span<const ProbResult> cdf) {
  if (grid.size() != cdf.size()) throw ShapeError("grid and cdf lengths differ");
  std::vector<double> dens(grid.size(), 0.0);
  if (grid.size() < 2) return dens;
  // central differences inside, one-sided at the ends
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == grid.size() ? i : i + 1;
    dens[i] = (cdf[hi].value - cdf[lo].value) / (grid[hi] - grid[lo]);
  }
  return dens;
}

/// One cell of the output law: component k restricted to K(pattern), mapped by (C_L, d_L).
struct TruncatedComponent {
  std::size_t k = 0;
  ActivationPattern pattern;
  Vector out_mean;
  Matrix out_cov;
  ProbResult mass;  // alpha_k * P(component-k input in K(pattern))
};

inline std::vector<TruncatedComponent> truncated_mixture(const InputLaw& law, std::span<const ActivationPattern> support,
                                                         const EvalConfig& cfg = {}) {
  const NetworkParams& net = law.network();
  const GaussianMixture& gmm = law.mixture();
  std::vector<std::vector<TruncatedComponent>> per_pattern(support.size());
  parallel_for(support.size(), cfg.threads, [&](std::size_t i) {
    const ActivationPattern& pattern = support[i];
    const auto hidden = law.pushforward(pattern, net.depth() - 1);
    const AffineMap out = affine_params(net, pattern, net.depth());
    for (std::size_t k = 0; k < gmm.size(); ++k) {
      TruncatedComponent c;
      c.k = k;
      c.pattern = pattern;
      c.out_mean = out.C * gmm.mean(k) + out.d;
      c.out_cov = out.C * gmm.covariance(k) * out.C.transpose();
      c.out_cov = 0.5 * (c.out_cov + c.out_cov.transpose()).eval();
      ProbResult r = detail::cell_mass(pattern, k, hidden, cfg);
      r.value *= gmm.weight(k);
      r.std_error *= gmm.weight(k);
      c.mass = r;
      per_pattern[i].push_back(std::move(c));
    }
  });
  std::vector<TruncatedComponent> out;
  for (auto& v : per_pattern)
    for (auto& c : v) out.push_back(std::move(c));
  return out;
}

inline std::vector<TruncatedComponent> truncated_mixture(const NetworkParams& net, const GaussianMixture& gmm,
                                                         std::span<const ActivationPattern> support,
                                                         const EvalConfig& cfg = {}) {
  return truncated_mixture(InputLaw(net, gmm), support, cfg);
}

struct TailRate {
  ProbResult rate;
  std::size_t label = 0;
};

/// Binary classifier with scalar logit: class 1 is predicted when y > threshold.
/// Returns P(y > t) under class 0 and P(y < t) under class 1, restricted to each class's support.
inline std::vector<TailRate> tail_rates(const NetworkParams& net, std::span<const GaussianMixture> class_gmms,
                                        std::span<const std::vector<ActivationPattern>> supports, double threshold,
                                        const EvalConfig& cfg = {}) {
  if (net.output_dim() != 1) throw ShapeError("tail_rates needs a scalar-output network");
  if (class_gmms.size() != 2 || supports.size() != 2) throw ShapeError("tail_rates needs exactly two classes");
  std::vector<TailRate> out;
  for (std::size_t c = 0; c < 2; ++c) {
    const InputLaw law(net, class_gmms[c]);
    Interval wrong;
    if (c == 0) {
      wrong.lower = threshold;
      wrong.lower_open = true;
    } else {
      wrong.upper = threshold;
      wrong.upper_open = true;
    }
    const std::vector<Interval> box{wrong};
    out.push_back({output_box_prob(law, supports[c], box, cfg), c});
  }
  return out;
}

}  // namespace relu_lawn
