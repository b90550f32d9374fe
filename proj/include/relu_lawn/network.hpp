#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relu_lawn/errors.hpp"
#include "relu_lawn/pattern.hpp"

namespace relu_lawn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// ReLU or Leaky ReLU. ReLU is the slope-0 case and shares every code path
/// with LeakyReLU(0), so the two produce bit-identical results.
class Activation {
 public:
  enum class Kind { relu, leaky_relu };

  static Activation relu() { return Activation(Kind::relu, 0.0); }

  static Activation leaky_relu(double slope) {
    if (!(slope >= 0.0) || !std::isfinite(slope)) throw DomainError("leaky_relu slope must be finite and >= 0");
    return Activation(Kind::leaky_relu, slope);
  }

  Kind kind() const { return kind_; }
  /// Multiplier applied to inactive (h <= 0) units.
  double negative_slope() const { return slope_; }
  /// Multiplier for a mask bit.
  double mask_value(bool active) const { return active ? 1.0 : slope_; }

  bool operator==(const Activation&) const = default;

 private:
  Activation(Kind k, double s) : kind_(k), slope_(s) {}
  Kind kind_;
  double slope_;
};

struct Layer {
  Matrix weight;  // n_l x n_{l-1}
  Vector bias;    // n_l
};

/// Feed-forward network h_1 = W_1 x + b_1, h_l = W_l act(h_{l-1}) + b_l, y = h_L.
class NetworkParams {
 public:
  NetworkParams(std::vector<Layer> layers, Activation activation)
      : layers_(std::move(layers)), activation_(activation) {
    if (layers_.size() < 2) throw ShapeError("network needs at least two layers (one nonlinearity)");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.weight.rows() != layer.bias.size())
        throw ShapeError("layer " + std::to_string(l + 1) + ": bias length != weight rows");
      if (layer.weight.rows() == 0 || layer.weight.cols() == 0)
        throw ShapeError("layer " + std::to_string(l + 1) + ": empty weight matrix");
      if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows())
        throw ShapeError("layer " + std::to_string(l + 1) + ": weight columns != previous layer rows");
      if (!layer.weight.allFinite() || !layer.bias.allFinite())
        throw DomainError("layer " + std::to_string(l + 1) + ": non-finite parameter");
    }
  }

  /// L, the number of affine layers.
  std::size_t depth() const { return layers_.size(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(layers_.front().weight.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers_.back().weight.rows()); }

  /// Layer by 1-based depth, matching W_1..W_L.
  const Layer& layer(std::size_t depth) const {
    if (depth < 1 || depth > layers_.size()) throw IndexError("layer depth out of range");
    return layers_[depth - 1];
  }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }
  const Activation& activation() const { return activation_; }

  /// Widths n_1..n_{L-1} of the hidden layers.
  std::vector<std::size_t> hidden_widths() const {
    std::vector<std::size_t> w;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) w.push_back(static_cast<std::size_t>(layers_[l].weight.rows()));
    return w;
  }

  std::size_t total_hidden_bits() const {
    std::size_t n = 0;
    for (std::size_t w : hidden_widths()) n += w;
    return n;
  }

  ActivationPattern empty_pattern() const { return ActivationPattern(hidden_widths()); }

  /// Same weights under a different activation.
  NetworkParams with_activation(Activation a) const { return NetworkParams(layers_, a); }

 private:
  std::vector<Layer> layers_;
  Activation activation_;
};

}  // namespace relu_lawn
