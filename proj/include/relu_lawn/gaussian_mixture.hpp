#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relu_lawn/errors.hpp"
#include "relu_lawn/network.hpp"

namespace relu_lawn {

enum class CovarianceKind { full, diagonal };

/// Mixture sum_k alpha_k N(mu_k, Sigma_k). Covariances are always stored as
/// dense matrices; `kind` records whether they are known to be diagonal.
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Vector> means, std::vector<Matrix> covariances,
                  CovarianceKind kind = CovarianceKind::full, bool check_psd = true)
      : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)), kind_(kind) {
    validate(check_psd);
  }

  /// Single Gaussian.
  static GaussianMixture single(Vector mean, Matrix covariance) {
    return GaussianMixture({1.0}, {std::move(mean)}, {std::move(covariance)});
  }

  std::size_t size() const { return weights_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(means_.front().size()); }
  double weight(std::size_t k) const { return weights_[k]; }
  const Vector& mean(std::size_t k) const { return means_[k]; }
  const Matrix& covariance(std::size_t k) const { return covariances_[k]; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vector>& means() const { return means_; }
  const std::vector<Matrix>& covariances() const { return covariances_; }
  CovarianceKind kind() const { return kind_; }

  /// Law of C x + d. Singular results are allowed.
  GaussianMixture pushforward(const Matrix& C, const Vector& d) const {
    if (static_cast<std::size_t>(C.cols()) != dim() || C.rows() != d.size())
      throw ShapeError("pushforward map does not match mixture dimension");
    std::vector<Vector> mu;
    std::vector<Matrix> cov;
    for (std::size_t k = 0; k < size(); ++k) {
      mu.push_back(C * means_[k] + d);
      Matrix s = C * covariances_[k] * C.transpose();
      cov.push_back(0.5 * (s + s.transpose()));
    }
    return GaussianMixture(weights_, std::move(mu), std::move(cov), CovarianceKind::full, false);
  }

 private:
  void validate(bool check_psd) const {
    if (weights_.empty()) throw ShapeError("mixture needs at least one component");
    if (means_.size() != weights_.size() || covariances_.size() != weights_.size())
      throw ShapeError("mixture weights, means and covariances differ in length");
    const Eigen::Index n = means_.front().size();
    double total = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      if (!(weights_[k] > 0.0) || !std::isfinite(weights_[k]))
        throw DomainError("mixture weight " + std::to_string(k) + " must be positive");
      total += weights_[k];
      if (means_[k].size() != n || covariances_[k].rows() != n || covariances_[k].cols() != n)
        throw ShapeError("mixture component " + std::to_string(k) + " has inconsistent dimension");
      if (!means_[k].allFinite() || !covariances_[k].allFinite())
        throw DomainError("mixture component " + std::to_string(k) + " has non-finite entries");
      if (check_psd) check_covariance(covariances_[k], k);
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture weights must sum to 1");
  }

  static void check_covariance(const Matrix& s, std::size_t k) {
    const double scale = s.cwiseAbs().maxCoeff();
    if (scale == 0.0) return;
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw DomainError("covariance " + std::to_string(k) + " is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(top, 0.0))
      throw DomainError("covariance " + std::to_string(k) + " is not positive semidefinite");
  }

  std::vector<double> weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covariances_;
  CovarianceKind kind_;
};

}  // namespace relu_lawn
