#pragma once

#include <random>
#include <vector>

#include "relu_lawn.hpp"

namespace rl_test {

using relu_lawn::Matrix;
using relu_lawn::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

inline relu_lawn::NetworkParams random_net(std::mt19937_64& rng, const std::vector<std::size_t>& widths,
                                           relu_lawn::Activation act = relu_lawn::Activation::relu()) {
  std::vector<relu_lawn::Layer> layers;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const auto r = static_cast<Eigen::Index>(widths[l]), c = static_cast<Eigen::Index>(widths[l - 1]);
    layers.push_back({random_matrix(rng, r, c, 1.0 / std::sqrt(static_cast<double>(c))), random_vector(rng, r, 0.5)});
  }
  return relu_lawn::NetworkParams(std::move(layers), act);
}

/// Random SPD matrix A A^T + eps I.
inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index n, double eps = 0.1) {
  const Matrix a = random_matrix(rng, n, n);
  return a * a.transpose() + eps * Matrix::Identity(n, n);
}

/// Net with identity layers: W_l = I_n, b_l = 0.
inline relu_lawn::NetworkParams identity_net(std::size_t n, std::size_t depth,
                                             relu_lawn::Activation act = relu_lawn::Activation::relu()) {
  const auto k = static_cast<Eigen::Index>(n);
  std::vector<relu_lawn::Layer> layers(depth, relu_lawn::Layer{Matrix::Identity(k, k), Vector::Zero(k)});
  return relu_lawn::NetworkParams(std::move(layers), act);
}

}  // namespace rl_test
