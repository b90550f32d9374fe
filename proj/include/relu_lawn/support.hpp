#pragma once

// Sample-free support estimation. Layer by layer, neurons whose marginal
// activation probability has low binary entropy are fixed to their likely
// value; the remaining (free) neurons are enumerated, and each resulting
// prefix conditions the Gaussian parameters of the next layer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "relu_lawn/distribution.hpp"
#include "relu_lawn/geometry.hpp"
#include "relu_lawn/normal.hpp"

namespace relu_lawn {

/// Entropy threshold for a margin delta: neurons with |p - 0.5| > delta have H(p) < H(0.5 + delta).
inline double entropy_from_margin(double margin) { return binary_entropy(0.5 + margin); }

/// Inverse of entropy_from_margin on [0, 0.5].
inline double margin_from_entropy(double bits) {
  if (bits >= 1.0) return 0.0;
  if (bits <= 0.0) return 0.5;
  double lo = 0.0, hi = 0.5;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (entropy_from_margin(mid) > bits ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct LayerThreshold {
  enum class Form { entropy_bits, margin };
  Form form = Form::margin;
  double value = 0.0;

  static LayerThreshold entropy(double bits) {
    if (!(bits >= 0.0 && bits <= 1.0)) throw DomainError("entropy threshold must lie in [0, 1] bits");
    return {Form::entropy_bits, bits};
  }
  static LayerThreshold from_margin(double delta) {
    if (!(delta > 0.0 && delta < 0.5)) throw DomainError("margin threshold must lie in (0, 0.5)");
    return {Form::margin, delta};
  }

  double entropy_bits() const { return form == Form::entropy_bits ? value : entropy_from_margin(value); }
  double margin() const { return form == Form::margin ? value : margin_from_entropy(value); }
};

struct ThresholdSpec {
  std::vector<LayerThreshold> layers;  // one per hidden layer
  std::size_t branch_cap = 10;         // max free neurons per layer

  static ThresholdSpec uniform_margin(double delta, std::size_t hidden_layers, std::size_t cap = 10) {
    return {std::vector<LayerThreshold>(hidden_layers, LayerThreshold::from_margin(delta)), cap};
  }
  static ThresholdSpec uniform_entropy(double bits, std::size_t hidden_layers, std::size_t cap = 10) {
    return {std::vector<LayerThreshold>(hidden_layers, LayerThreshold::entropy(bits)), cap};
  }
};

/// Patterns for one layer: fixed neurons carry their rounded value, free ones are enumerated.
struct LayerPatterns {
  Vector marginals;
  std::vector<std::size_t> free_indices;
  std::vector<std::size_t> cap_fixed;  // free by threshold but fixed to respect the branch cap
  std::vector<std::uint8_t> fixed_values;
  std::vector<std::vector<std::uint8_t>> patterns;
};

/// Fix neurons with entropy < tau_bits to round(p), then keep at most `branch_cap` free
/// neurons by additionally fixing the lowest-entropy ones. Patterns are listed in
/// ascending little-endian order over the layer.
inline LayerPatterns get_patterns(const Vector& marginals, double tau_bits, std::size_t branch_cap) {
  LayerPatterns out;
  out.marginals = marginals;
  const auto n = static_cast<std::size_t>(marginals.size());
  out.fixed_values.resize(n);
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = marginals[static_cast<Eigen::Index>(i)];
    out.fixed_values[i] = std::abs(1.0 - p) < std::abs(p) ? 1 : 0;
    if (!(binary_entropy(p) < tau_bits)) free.push_back(i);
  }
  if (free.size() > branch_cap) {
    std::vector<std::size_t> order = free;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return binary_entropy(marginals[static_cast<Eigen::Index>(a)]) < binary_entropy(marginals[static_cast<Eigen::Index>(b)]);
    });
    out.cap_fixed.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(free.size() - branch_cap));
    std::sort(out.cap_fixed.begin(), out.cap_fixed.end());
    std::vector<std::size_t> kept;
    std::set_difference(free.begin(), free.end(), out.cap_fixed.begin(), out.cap_fixed.end(), std::back_inserter(kept));
    free = std::move(kept);
  }
  out.free_indices = free;
  const std::uint64_t count = std::uint64_t{1} << free.size();
  out.patterns.reserve(count);
  for (std::uint64_t m = 0; m < count; ++m) {
    std::vector<std::uint8_t> z = out.fixed_values;
    for (std::size_t j = 0; j < free.size(); ++j) z[free[j]] = ((m >> j) & 1U) ? 1 : 0;
    out.patterns.push_back(std::move(z));
  }
  return out;
}

/// Layer patterns from pushed Gaussian parameters, using only diagonal variances.
inline LayerPatterns get_patterns(const PushforwardGaussianParams& pushed, double tau_bits, std::size_t branch_cap) {
  std::vector<Vector> variances;
  for (const auto& c : pushed.covariances) variances.push_back(c.diagonal());
  return get_patterns(marginal_active_prob(pushed.weights, pushed.means, variances), tau_bits, branch_cap);
}

/// Upper bound min_i P(z_i = bits_i) on the joint probability of a layer mask.
inline double prune_bound(const Vector& marginals, std::span<const std::uint8_t> bits) {
  double bound = 1.0;
  for (Eigen::Index i = 0; i < marginals.size(); ++i) {
    const double p = marginals[i];
    bound = std::min(bound, bits[static_cast<std::size_t>(i)] ? p : 1.0 - p);
  }
  return bound;
}

/// Bound valid for every mask of the layer: min_i max(p_i, 1 - p_i).
inline double prune_bound(const Vector& marginals) {
  double bound = 1.0;
  for (Eigen::Index i = 0; i < marginals.size(); ++i) bound = std::min(bound, std::max(marginals[i], 1.0 - marginals[i]));
  return bound;
}

struct SupportOptions {
  std::size_t global_cap = std::size_t{1} << 16;
  /// Drop layer masks whose prune_bound falls below this value (0 disables).
  double min_branch_bound = 0.0;
};

struct SupportEstimate {
  std::vector<ActivationPattern> patterns;  // prefix order, then layer order
  std::vector<std::size_t> max_free_per_layer;
  std::vector<std::size_t> prefixes_per_layer;  // number of partial patterns after each layer
  std::vector<double> entropy_thresholds;
  std::vector<double> margin_thresholds;
  std::size_t branch_cap = 0;
};

/// Algorithm: layer-1 masks from (alpha_k, W_1 mu_k + b_1, W_1 Sigma_k W_1^T); every
/// prefix then yields the next layer's parameters (alpha_k, C mu_k + d, C Sigma_k C^T)
/// with (C, d) = affine_params at that depth, propagated incrementally as
/// h_{l+1} = W_{l+1} diag(m(z_l)) h_l + b_{l+1}.
inline SupportEstimate estimate_support(const NetworkParams& net, const GaussianMixture& gmm,
                                        const ThresholdSpec& thresholds, const SupportOptions& options = {}) {
  if (gmm.dim() != net.input_dim()) throw ShapeError("mixture dimension does not match network input");
  const std::size_t hidden = net.depth() - 1;
  if (thresholds.layers.size() != hidden)
    throw ShapeError("need one threshold per hidden layer (" + std::to_string(hidden) + ")");

  struct Prefix {
    ActivationPattern pattern;
    std::vector<Vector> means;
    std::vector<Matrix> covs;
  };
  SupportEstimate est;
  est.branch_cap = thresholds.branch_cap;
  for (const auto& t : thresholds.layers) {
    est.entropy_thresholds.push_back(t.entropy_bits());
    est.margin_thresholds.push_back(t.margin());
  }

  std::vector<Prefix> current(1);
  current[0].pattern = net.empty_pattern();
  const Layer& first = net.layer(1);
  for (std::size_t k = 0; k < gmm.size(); ++k) {
    current[0].means.push_back(first.weight * gmm.mean(k) + first.bias);
    Matrix s = first.weight * gmm.covariance(k) * first.weight.transpose();
    current[0].covs.push_back(0.5 * (s + s.transpose()));
  }
  const Activation& act = net.activation();

  for (std::size_t l = 0; l < hidden; ++l) {
    const bool last = l + 1 == hidden;
    std::vector<Prefix> next;
    std::size_t max_free = 0;
    for (Prefix& pre : current) {
      std::vector<Vector> variances;
      for (const auto& c : pre.covs) variances.push_back(c.diagonal());
      const Vector p = marginal_active_prob(gmm.weights(), pre.means, variances);
      const LayerPatterns lp = get_patterns(p, est.entropy_thresholds[l], thresholds.branch_cap);
      max_free = std::max(max_free, lp.free_indices.size());
      for (const auto& z : lp.patterns) {
        if (options.min_branch_bound > 0.0 && prune_bound(p, z) < options.min_branch_bound) continue;
        if (next.size() >= options.global_cap)
          throw CapacityError("support estimate exceeds " + std::to_string(options.global_cap) +
                              " patterns at hidden layer " + std::to_string(l + 1));
        Prefix child;
        child.pattern = pre.pattern;
        child.pattern.set_layer(l, z);
        if (!last) {
          Matrix masked = net.layer(l + 2).weight;
          for (std::size_t i = 0; i < z.size(); ++i) masked.col(static_cast<Eigen::Index>(i)) *= act.mask_value(z[i] != 0);
          const Vector& b = net.layer(l + 2).bias;
          for (std::size_t k = 0; k < gmm.size(); ++k) {
            child.means.push_back(masked * pre.means[k] + b);
            Matrix s = masked * pre.covs[k] * masked.transpose();
            child.covs.push_back(0.5 * (s + s.transpose()));
          }
        }
        next.push_back(std::move(child));
      }
    }
    est.max_free_per_layer.push_back(max_free);
    est.prefixes_per_layer.push_back(next.size());
    current = std::move(next);
  }
  est.patterns.reserve(current.size());
  for (auto& pre : current) est.patterns.push_back(std::move(pre.pattern));
  return est;
}

/// Fraction of inputs (rows) whose full forward pattern belongs to the estimate.
inline double coverage_proportion(std::span<const ActivationPattern> patterns, const NetworkParams& net,
                                  const Matrix& inputs) {
  if (inputs.rows() == 0) return 0.0;
  const std::unordered_set<ActivationPattern, PatternHash> set(patterns.begin(), patterns.end());
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i)
    if (set.contains(pattern_of(net, inputs.row(i).transpose()))) ++hits;
  return static_cast<double>(hits) / static_cast<double>(inputs.rows());
}

inline double coverage_proportion(const SupportEstimate& estimate, const NetworkParams& net, const Matrix& inputs) {
  return coverage_proportion(estimate.patterns, net, inputs);
}

}  // namespace relu_lawn
