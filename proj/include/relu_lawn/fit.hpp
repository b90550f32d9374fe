#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "relu_lawn/errors.hpp"
#include "relu_lawn/gaussian_mixture.hpp"

namespace relu_lawn {

struct EmConfig {
  std::size_t max_iters = 200;
  double tol = 1e-6;  // stop when the mean log-likelihood gains less than this
  std::uint64_t seed = 0;
};

struct EmResult {
  GaussianMixture gmm;
  std::vector<double> log_likelihood;  // mean per-sample value after each E step
  std::size_t iterations = 0;
  bool converged = false;
};

/// Diagonal-covariance EM with k-means++ seeding.
inline EmResult fit_gmm_em(const Matrix& data, std::size_t K, const EmConfig& cfg = {}) {
  const Eigen::Index n = data.rows(), d = data.cols();
  if (K < 1) throw DomainError("fit_gmm_em needs K >= 1");
  if (static_cast<std::size_t>(n) < K * static_cast<std::size_t>(d + 1))
    throw DomainError("fit_gmm_em needs at least K * (dims + 1) rows");
  const auto k_ = static_cast<Eigen::Index>(K);
  const Vector data_mean = data.colwise().mean().transpose();
  const Vector data_var = (data.rowwise() - data_mean.transpose()).array().square().colwise().mean().transpose();
  const double mean_var = data_var.mean();
  Vector floor = 1e-6 * data_var;
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(floor[j] > 0.0)) floor[j] = mean_var > 0.0 ? 1e-6 * mean_var : 1e-12;

  std::mt19937_64 rng(cfg.seed);
  Matrix means(k_, d);
  {
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    means.row(0) = data.row(pick(rng));
    Vector dist2 = (data.rowwise() - means.row(0)).rowwise().squaredNorm();
    for (Eigen::Index c = 1; c < k_; ++c) {
      const double total = dist2.sum();
      Eigen::Index chosen = pick(rng);
      if (total > 0.0) {
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        for (chosen = 0; chosen < n - 1 && u >= dist2[chosen]; ++chosen) u -= dist2[chosen];
      }
      means.row(c) = data.row(chosen);
      dist2 = dist2.cwiseMin((data.rowwise() - means.row(c)).rowwise().squaredNorm());
    }
  }
  Matrix vars = data_var.cwiseMax(floor).transpose().replicate(k_, 1);
  Vector weights = Vector::Constant(k_, 1.0 / static_cast<double>(K));

  Matrix logp(n, k_);
  Vector row_ll(n);
  auto e_step = [&] {
    for (Eigen::Index c = 0; c < k_; ++c) {
      const double log_norm = std::log(weights[c]) - 0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) +
                                                            vars.row(c).array().log().sum());
      const Eigen::RowVectorXd inv = vars.row(c).cwiseInverse();
      logp.col(c) = (-0.5 * ((data.rowwise() - means.row(c)).array().square().rowwise() * inv.array()).rowwise().sum())
                        .matrix() + Vector::Constant(n, log_norm);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = logp.row(i).maxCoeff();
      row_ll[i] = m + std::log((logp.row(i).array() - m).exp().sum());
      logp.row(i) = (logp.row(i).array() - row_ll[i]).exp();
    }
    return row_ll.mean();
  };

  EmResult result{GaussianMixture::single(Vector::Zero(d), Matrix::Zero(d, d)), {}, 0, false};
  double prev = e_step();
  result.log_likelihood.push_back(prev);
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const Vector nk = logp.colwise().sum().transpose();
    for (Eigen::Index c = 0; c < k_; ++c) {
      if (nk[c] < 1e-10) {
        Eigen::Index worst = 0;
        row_ll.minCoeff(&worst);
        means.row(c) = data.row(worst);
        vars.row(c) = data_var.cwiseMax(floor).transpose();
        weights[c] = 1.0 / static_cast<double>(n);
        continue;
      }
      weights[c] = nk[c] / static_cast<double>(n);
      const Vector r = logp.col(c);
      means.row(c) = (r.transpose() * data) / nk[c];
      const Eigen::RowVectorXd second = (r.transpose() * data.array().square().matrix()) / nk[c];
      vars.row(c) = (second.array() - means.row(c).array().square()).matrix().cwiseMax(floor.transpose());
    }
    weights /= weights.sum();
    const double ll = e_step();
    result.log_likelihood.push_back(ll);
    result.iterations = it + 1;
    if (ll - prev < cfg.tol) {
      result.converged = true;
      break;
    }
    prev = ll;
  }

  std::vector<double> w(weights.data(), weights.data() + k_);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= wsum;
  std::vector<Vector> mu;
  std::vector<Matrix> cov;
  for (Eigen::Index c = 0; c < k_; ++c) {
    mu.push_back(means.row(c).transpose());
    cov.push_back(vars.row(c).transpose().asDiagonal());
  }
  result.gmm = GaussianMixture(std::move(w), std::move(mu), std::move(cov), CovarianceKind::diagonal);
  return result;
}

struct ClassGaussian {
  Vector mean;
  Matrix covariance;
  double ridge = 0.0;
};

/// Sample mean and covariance (divisor n - 1) plus ridge 1e-6 * trace / dims on the diagonal.
inline ClassGaussian fit_class_gaussian(const Matrix& rows) {
  if (rows.rows() < 2) throw DomainError("fit_class_gaussian needs at least two rows");
  ClassGaussian g;
  g.mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(rows.rows() - 1);
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose()).eval();
  const double trace = g.covariance.trace();
  g.ridge = trace > 0.0 ? 1e-6 * trace / static_cast<double>(rows.cols()) : 1e-6;
  g.covariance.diagonal().array() += g.ridge;
  return g;
}

}  // namespace relu_lawn
