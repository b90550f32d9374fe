#pragma once

// Gaussian box and orthant probabilities.
//
// P(l <= Z <= u) for Z ~ N(mu, Sigma) is evaluated by sequential conditioning
// (separation of variables) on a possibly rank-deficient factor Sigma = B B^T,
// B of size n x r. Rows are pivoted in order of ascending conditional interval
// probability; a row that becomes linearly dependent on the pivots chosen so
// far constrains the current step instead of opening a new one, so singular
// covariances are integrated over their true r-dimensional support. The unit
// cube is sampled with randomly shifted Kronecker (Richtmyer) points on
// sqrt-prime generators, tent-transformed and antithetic; the spread of the
// per-shift means gives the error estimate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relu_lawn/errors.hpp"
#include "relu_lawn/network.hpp"
#include "relu_lawn/normal.hpp"
#include "relu_lawn/parallel.hpp"

namespace relu_lawn {

struct QuadratureConfig {
  std::size_t sample_budget = 8192;  // points per randomized shift
  std::size_t n_shifts = 8;
  std::uint64_t seed = 20240601;
  double rank_tolerance = 1e-10;  // relative eigenvalue cutoff

  void validate() const {
    if (sample_budget < 1) throw DomainError("sample_budget must be >= 1");
    if (n_shifts < 2) throw DomainError("n_shifts must be >= 2 for an error estimate");
    if (!(rank_tolerance > 0.0 && rank_tolerance < 1.0)) throw DomainError("rank_tolerance must lie in (0, 1)");
  }

  QuadratureConfig with_seed(std::uint64_t s) const {
    QuadratureConfig c = *this;
    c.seed = s;
    return c;
  }
};

struct ProbResult {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_points = 0;
};

/// One coordinate constraint. Openness only matters for deterministic coordinates.
struct Interval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool lower_open = false;
  bool upper_open = false;

  bool holds(double v) const {
    const bool lo = lower_open ? v > lower : v >= lower;
    const bool hi = upper_open ? v < upper : v <= upper;
    return lo && hi;
  }
  bool unbounded() const { return std::isinf(lower) && lower < 0 && std::isinf(upper) && upper > 0; }
};

/// Eigen-reduction of N(mu, Sigma): X = mean + transform * v, v ~ N(0, diag(variances)).
struct DegenerateReduction {
  Matrix transform;                 // n x r, orthonormal columns
  Vector mean;                      // n
  Vector variances;                 // r kept eigenvalues
  std::vector<bool> deterministic;  // coordinate has (numerically) zero variance
  std::vector<bool> fixed_sign;     // for deterministic coordinates: mean > 0
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;

  std::size_t rank() const { return static_cast<std::size_t>(variances.size()); }

  Matrix factor() const { return transform * variances.cwiseSqrt().asDiagonal(); }

  Matrix reduced_covariance() const { return variances.asDiagonal(); }

  /// Deterministic coordinates agree with the orthant bits (zero mean reads as bit 0).
  bool consistent_with(std::span<const std::uint8_t> bits) const {
    for (std::size_t i = 0; i < deterministic.size(); ++i)
      if (deterministic[i] && fixed_sign[i] != (bits[i] != 0)) return false;
    return true;
  }
};

/// Keeps eigen-directions with eigenvalue >= rank_tolerance * lambda_max;
/// coordinates with no variance left are reported as deterministic.
inline DegenerateReduction reduce_degenerate(const Vector& mu, const Matrix& sigma, double rank_tolerance) {
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) throw ShapeError("covariance does not match mean");
  DegenerateReduction red;
  red.mean = mu;
  const auto n = mu.size();
  red.deterministic.assign(static_cast<std::size_t>(n), false);
  red.fixed_sign.assign(static_cast<std::size_t>(n), false);
  if (n == 0) return red;
  const Matrix sym = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector& lambda = eig.eigenvalues();
  red.min_eigenvalue = lambda.minCoeff();
  red.max_eigenvalue = lambda.maxCoeff();
  const double cutoff = rank_tolerance * std::max(red.max_eigenvalue, 0.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (lambda[i] > cutoff && lambda[i] > 0.0) keep.push_back(i);
  red.transform.resize(n, static_cast<Eigen::Index>(keep.size()));
  red.variances.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    red.transform.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(keep[c]);
    red.variances[static_cast<Eigen::Index>(c)] = lambda[keep[c]];
  }
  const Vector row_var = (red.transform * red.variances.asDiagonal() * red.transform.transpose()).diagonal();
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool det = keep.empty() || row_var[i] <= cutoff;
    red.deterministic[static_cast<std::size_t>(i)] = det;
    red.fixed_sign[static_cast<std::size_t>(i)] = det && mu[i] > 0.0;
  }
  return red;
}

namespace detail {

inline const std::vector<double>& kronecker_generators(std::size_t dims) {
  static thread_local std::vector<double> gens;
  if (gens.size() < dims) {
    gens.clear();
    for (std::uint64_t p = 2; gens.size() < std::max<std::size_t>(dims, 64); ++p) {
      bool prime = true;
      for (std::uint64_t d = 2; d * d <= p; ++d)
        if (p % d == 0) {
          prime = false;
          break;
        }
      if (prime) {
        const double s = std::sqrt(static_cast<double>(p));
        gens.push_back(s - std::floor(s));
      }
    }
  }
  return gens;
}

/// Mass and inverse-CDF draw of a standard normal restricted to [lo, hi],
/// using upper tails when the interval sits on the positive side.
struct TruncatedNormal {
  double mass;
  double lo, hi;
  bool upper_tail;
  double base;

  TruncatedNormal(double lo_, double hi_) : lo(lo_), hi(hi_), upper_tail(lo_ > 0.0) {
    if (upper_tail) {
      base = phi(-hi);
      mass = phi(-lo) - base;
    } else {
      base = phi(lo);
      mass = phi(hi) - base;
    }
    if (mass < 0.0) mass = 0.0;
  }

  double draw(double u) const {
    double z = upper_tail ? -phi_inv(base + u * mass) : phi_inv(base + u * mass);
    if (!std::isfinite(z)) z = z > 0 ? (std::isfinite(hi) ? hi : 38.0) : (std::isfinite(lo) ? lo : -38.0);
    return std::clamp(z, lo, hi);
  }

  double mean() const {
    if (mass <= 1e-300) return std::isfinite(lo) ? (std::isfinite(hi) ? 0.5 * (lo + hi) : lo) : (std::isfinite(hi) ? hi : 0.0);
    const double dlo = std::isfinite(lo) ? normal_pdf(lo) : 0.0;
    const double dhi = std::isfinite(hi) ? normal_pdf(hi) : 0.0;
    return std::clamp((dlo - dhi) / mass, lo, hi);
  }
};

/// Conditioning plan for P(l <= mean + B w <= u), w ~ N(0, I_r).
struct ConditioningPlan {
  struct Row {
    double mean;
    double lower, upper;
    std::vector<double> coeff;  // coefficients on w_0 .. w_step
  };
  std::vector<std::vector<Row>> steps;  // rows that constrain w_step
};

inline ConditioningPlan build_plan(const Vector& mean, const Matrix& factor, std::span<const Interval> box) {
  const Eigen::Index m = factor.rows();
  const Eigen::Index r = factor.cols();
  Matrix resid = factor;
  Matrix coeff = Matrix::Zero(m, r);
  std::vector<double> orig(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) orig[static_cast<std::size_t>(j)] = factor.row(j).squaredNorm();
  std::vector<bool> done(static_cast<std::size_t>(m), false);
  std::vector<double> w_hat;
  ConditioningPlan plan;
  const double dep_tol = 1e-10;

  auto cond_mean = [&](Eigen::Index j, std::size_t upto) {
    double t = mean[j];
    for (std::size_t k = 0; k < upto; ++k) t += coeff(j, static_cast<Eigen::Index>(k)) * w_hat[k];
    return t;
  };

  for (Eigen::Index step = 0; step < r; ++step) {
    Eigen::Index pivot = -1;
    double best = std::numeric_limits<double>::infinity();
    const auto c = static_cast<std::size_t>(step);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (done[static_cast<std::size_t>(j)]) continue;
      const double s2 = resid.row(j).squaredNorm();
      if (s2 <= dep_tol * orig[static_cast<std::size_t>(j)]) continue;
      const double s = std::sqrt(s2);
      const double t = cond_mean(j, c);
      const auto& iv = box[static_cast<std::size_t>(j)];
      const double p = phi((iv.upper - t) / s) - phi((iv.lower - t) / s);
      if (p < best) {
        best = p;
        pivot = j;
      }
    }
    if (pivot < 0) break;
    const Eigen::RowVectorXd q = resid.row(pivot) / resid.row(pivot).norm();
    std::vector<ConditioningPlan::Row> rows;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (done[static_cast<std::size_t>(j)]) continue;
      const double a = resid.row(j).dot(q);
      coeff(j, step) = a;
      resid.row(j) -= a * q;
      if (j == pivot || resid.row(j).squaredNorm() <= dep_tol * orig[static_cast<std::size_t>(j)]) {
        done[static_cast<std::size_t>(j)] = true;
        const auto& iv = box[static_cast<std::size_t>(j)];
        ConditioningPlan::Row row{mean[j], iv.lower, iv.upper, {}};
        for (Eigen::Index k = 0; k <= step; ++k) row.coeff.push_back(coeff(j, k));
        rows.push_back(std::move(row));
      }
    }
    // expected value of w_step given the expected earlier draws
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (const auto& row : rows) {
      double t = row.mean;
      for (std::size_t k = 0; k < c; ++k) t += row.coeff[k] * w_hat[k];
      const double a = row.coeff[c];
      double v1 = (row.lower - t) / a, v2 = (row.upper - t) / a;
      if (a < 0) std::swap(v1, v2);
      lo = std::max(lo, v1);
      hi = std::min(hi, v2);
    }
    w_hat.push_back(lo < hi ? TruncatedNormal(lo, hi).mean() : 0.5 * (lo + hi));
    plan.steps.push_back(std::move(rows));
  }
  return plan;
}

/// Integrand at one point of [0,1)^steps (the last coordinate is unused).
inline double conditioned_weight(const ConditioningPlan& plan, const double* u, std::vector<double>& w) {
  double weight = 1.0;
  const std::size_t steps = plan.steps.size();
  for (std::size_t c = 0; c < steps; ++c) {
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (const auto& row : plan.steps[c]) {
      double t = row.mean;
      for (std::size_t k = 0; k < c; ++k) t += row.coeff[k] * w[k];
      const double a = row.coeff[c];
      double v1 = (row.lower - t) / a, v2 = (row.upper - t) / a;
      if (a < 0) std::swap(v1, v2);
      if (v1 > lo) lo = v1;
      if (v2 < hi) hi = v2;
    }
    if (!(lo < hi)) return 0.0;
    const TruncatedNormal tn(lo, hi);
    weight *= tn.mass;
    if (weight == 0.0) return 0.0;
    if (c + 1 < steps) w[c] = tn.draw(u[c]);
  }
  return weight;
}

inline ProbResult integrate_plan(const ConditioningPlan& plan, const QuadratureConfig& cfg) {
  const std::size_t steps = plan.steps.size();
  if (steps == 0) return {1.0, 0.0, 0};
  // A single step has no random coordinate: the probability is exact.
  if (steps == 1) {
    std::vector<double> w(1);
    const double v = conditioned_weight(plan, nullptr, w);
    return {std::clamp(v, 0.0, 1.0), 0.0, 1};
  }
  const std::size_t dims = steps - 1;
  const auto& gens = kronecker_generators(dims);
  std::vector<long double> shift_means(cfg.n_shifts);
  std::vector<double> shift(dims), u(dims), ua(dims), w(steps);
  for (std::size_t s = 0; s < cfg.n_shifts; ++s) {
    std::mt19937_64 rng(mix_seed(cfg.seed, s));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (auto& d : shift) d = unif(rng);
    long double acc = 0.0L;
    for (std::size_t i = 1; i <= cfg.sample_budget; ++i) {
      for (std::size_t c = 0; c < dims; ++c) {
        double x = static_cast<double>(i) * gens[c] + shift[c];
        x -= std::floor(x);
        x = std::abs(2.0 * x - 1.0);
        u[c] = x;
        ua[c] = 1.0 - x;
      }
      acc += 0.5L * (static_cast<long double>(conditioned_weight(plan, u.data(), w)) +
                     static_cast<long double>(conditioned_weight(plan, ua.data(), w)));
    }
    shift_means[s] = acc / static_cast<long double>(cfg.sample_budget);
  }
  long double mean = 0.0L;
  for (auto v : shift_means) mean += v;
  mean /= static_cast<long double>(cfg.n_shifts);
  long double var = 0.0L;
  for (auto v : shift_means) var += (v - mean) * (v - mean);
  var /= static_cast<long double>(cfg.n_shifts - 1);
  const double se = std::sqrt(static_cast<double>(var / static_cast<long double>(cfg.n_shifts)));
  return {std::clamp(static_cast<double>(mean), 0.0, 1.0), se, 2 * cfg.sample_budget * cfg.n_shifts};
}

/// Exact emptiness test for {w : lower <= mean + B w <= upper} by Fourier-Motzkin
/// elimination. Only used for small rank; returns false (not proven empty) when
/// the constraint count blows past the limit.
inline bool provably_empty(const Vector& mean, const Matrix& factor, std::span<const Interval> box,
                           std::size_t max_constraints = 4096) {
  struct Halfspace {
    std::vector<double> a;
    double b;
  };
  const auto r = static_cast<std::size_t>(factor.cols());
  std::vector<Halfspace> sys;
  auto push = [&](std::vector<double> a, double b) {
    double norm = 0.0;
    for (double v : a) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : a) v /= norm;
      b /= norm;
    }
    sys.push_back({std::move(a), b});
  };
  for (Eigen::Index j = 0; j < factor.rows(); ++j) {
    std::vector<double> a(r);
    for (std::size_t k = 0; k < r; ++k) a[k] = factor(j, static_cast<Eigen::Index>(k));
    const auto& iv = box[static_cast<std::size_t>(j)];
    if (std::isfinite(iv.upper)) push(a, iv.upper - mean[j]);
    if (std::isfinite(iv.lower)) {
      for (double& v : a) v = -v;
      push(a, mean[j] - iv.lower);
    }
  }
  double scale = 1.0;
  for (const auto& h : sys) scale = std::max(scale, std::abs(h.b));
  const double eps = 1e-12;
  for (std::size_t k = 0; k < r; ++k) {
    std::vector<Halfspace> pos, neg, next;
    for (auto& h : sys) {
      if (h.a[k] > eps) pos.push_back(std::move(h));
      else if (h.a[k] < -eps) neg.push_back(std::move(h));
      else {
        h.a[k] = 0.0;
        next.push_back(std::move(h));
      }
    }
    if (next.size() + pos.size() * neg.size() > max_constraints) return false;
    sys = std::move(next);
    for (const auto& p : pos)
      for (const auto& n : neg) {
        const double sp = 1.0 / p.a[k], sn = -1.0 / n.a[k];
        std::vector<double> a(r);
        for (std::size_t i = 0; i < r; ++i) a[i] = i == k ? 0.0 : p.a[i] * sp + n.a[i] * sn;
        push(std::move(a), p.b * sp + n.b * sn);
      }
  }
  for (const auto& h : sys)
    if (h.b < -eps * scale) return true;
  return false;
}

inline void check_psd(const DegenerateReduction& red, double rank_tolerance) {
  if (red.min_eigenvalue < -rank_tolerance * std::max(red.max_eigenvalue, 0.0))
    throw DomainError("covariance is not positive semidefinite (eigenvalue " + std::to_string(red.min_eigenvalue) + ")");
}

}  // namespace detail

/// P(Z in box) for Z ~ N(mu, Sigma) with per-coordinate intervals.
inline ProbResult box_prob(const Vector& mu, const Matrix& sigma, std::span<const Interval> box,
                           const QuadratureConfig& cfg = {}) {
  cfg.validate();
  if (static_cast<std::size_t>(mu.size()) != box.size()) throw ShapeError("box dimension does not match mean");
  for (const auto& iv : box)
    if (!(iv.lower < iv.upper)) throw DomainError("empty box: lower bound not below upper bound");
  const DegenerateReduction red = reduce_degenerate(mu, sigma, cfg.rank_tolerance);
  detail::check_psd(red, cfg.rank_tolerance);

  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const auto& iv = box[static_cast<std::size_t>(i)];
    if (red.deterministic[static_cast<std::size_t>(i)]) {
      if (!iv.holds(mu[i])) return {0.0, 0.0, 0};
    } else if (!iv.unbounded()) {
      active.push_back(i);
    }
  }
  if (active.empty()) return {1.0, 0.0, 0};
  const Matrix full_factor = red.factor();
  Matrix factor(static_cast<Eigen::Index>(active.size()), full_factor.cols());
  Vector mean(static_cast<Eigen::Index>(active.size()));
  std::vector<Interval> sub;
  for (std::size_t a = 0; a < active.size(); ++a) {
    factor.row(static_cast<Eigen::Index>(a)) = full_factor.row(active[a]);
    mean[static_cast<Eigen::Index>(a)] = mu[active[a]];
    sub.push_back(box[static_cast<std::size_t>(active[a])]);
  }
  if (factor.cols() <= 3 && detail::provably_empty(mean, factor, sub)) return {0.0, 0.0, 0};
  return detail::integrate_plan(detail::build_plan(mean, factor, sub), cfg);
}

/// P(lower <= Z <= upper), Z ~ N(mu, Sigma); infinite bounds allowed.
inline ProbResult mvn_rect(const Vector& lower, const Vector& upper, const Vector& mu, const Matrix& sigma,
                           const QuadratureConfig& cfg = {}) {
  if (lower.size() != mu.size() || upper.size() != mu.size()) throw ShapeError("bounds do not match mean");
  std::vector<Interval> box(static_cast<std::size_t>(mu.size()));
  for (Eigen::Index i = 0; i < mu.size(); ++i) box[static_cast<std::size_t>(i)] = Interval{lower[i], upper[i]};
  return box_prob(mu, sigma, box, cfg);
}

/// P(X in O(bits)), X ~ N(mu, Sigma): coordinate i positive iff bit i is 1.
/// Evaluated as the nonnegative orthant of the sign-flipped law N(D mu, D Sigma D),
/// D = diag(2 bits - 1); flipped bit-0 coordinates keep the closed boundary.
inline ProbResult orthant_prob(const Vector& mu, const Matrix& sigma, std::span<const std::uint8_t> bits,
                               const QuadratureConfig& cfg = {}) {
  if (static_cast<std::size_t>(mu.size()) != bits.size() || sigma.rows() != mu.size() || sigma.cols() != mu.size())
    throw ShapeError("orthant bits, mean and covariance disagree in dimension");
  Vector sign(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) sign[i] = bits[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
  const Vector flipped_mu = sign.cwiseProduct(mu);
  const Matrix flipped_sigma = sign.asDiagonal() * sigma * sign.asDiagonal();
  std::vector<Interval> box(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    box[i].lower = 0.0;
    box[i].lower_open = bits[i] != 0;
  }
  return box_prob(flipped_mu, flipped_sigma, box, cfg);
}

/// Exact orthant probability for independent coordinates with standard deviations `stddev`.
inline double orthant_prob_diag(const Vector& mu, const Vector& stddev, std::span<const std::uint8_t> bits) {
  if (mu.size() != stddev.size() || static_cast<std::size_t>(mu.size()) != bits.size())
    throw ShapeError("orthant bits, mean and deviations disagree in dimension");
  double p = 1.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(stddev[i] > 0.0)) throw DomainError("orthant_prob_diag needs strictly positive deviations");
    const double s = bits[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
    p *= phi(s * mu[i] / stddev[i]);
  }
  return p;
}

/// Diagonal approximation tolerant of zero variances (deterministic coordinates).
inline double orthant_prob_diag_variances(const Vector& mu, const Vector& variances, std::span<const std::uint8_t> bits) {
  double p = 1.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const bool on = bits[static_cast<std::size_t>(i)] != 0;
    if (variances[i] <= 0.0) {
      if ((mu[i] > 0.0) != on) return 0.0;
      continue;
    }
    p *= phi((on ? 1.0 : -1.0) * mu[i] / std::sqrt(variances[i]));
  }
  return p;
}

}  // namespace relu_lawn
