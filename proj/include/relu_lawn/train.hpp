#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "relu_lawn/data.hpp"
#include "relu_lawn/errors.hpp"
#include "relu_lawn/network.hpp"

namespace relu_lawn {

enum class LossKind { binary_logit, softmax };

struct TrainConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::binary_logit;

  void validate() const {
    if (!(learning_rate > 0.0) || !(epsilon > 0.0)) throw DomainError("learning rate and epsilon must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw DomainError("Adam betas must lie in [0, 1)");
    if (batch_size < 1) throw DomainError("batch size must be >= 1");
  }
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline NetworkParams glorot_init(std::span<const std::size_t> widths, Activation activation, std::uint64_t seed) {
  if (widths.size() < 3) throw ShapeError("need input, at least one hidden and an output width");
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(widths[l]), cols = static_cast<Eigen::Index>(widths[l - 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(widths[l] + widths[l - 1]));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = u(rng);
    layers.push_back({std::move(w), Vector::Zero(rows)});
  }
  return NetworkParams(std::move(layers), activation);
}

struct Gradient {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

/// Mean loss over the batch (columns of x) and its gradient by backpropagation.
inline double loss_and_gradient(const NetworkParams& net, const Matrix& x, std::span<const int> labels, LossKind loss,
                                Gradient* grad) {
  const std::size_t L = net.depth();
  const auto m = x.cols();
  const double slope = net.activation().negative_slope();
  std::vector<Matrix> acts{x};
  std::vector<Matrix> pre;
  for (std::size_t l = 1; l <= L; ++l) {
    const Layer& layer = net.layer(l);
    Matrix h = (layer.weight * acts.back()).colwise() + layer.bias;
    if (l < L) acts.push_back(h.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; }));
    pre.push_back(std::move(h));
  }
  const Matrix& y = pre.back();
  Matrix dy(y.rows(), m);
  double total = 0.0;
  if (loss == LossKind::binary_logit) {
    if (y.rows() != 1) throw ShapeError("binary loss needs a scalar output");
    for (Eigen::Index i = 0; i < m; ++i) {
      const double z = y(0, i);
      const double t = labels[static_cast<std::size_t>(i)];
      total += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - t * z;
      dy(0, i) = 1.0 / (1.0 + std::exp(-z)) - t;
    }
  } else {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double top = y.col(i).maxCoeff();
      const Vector e = (y.col(i).array() - top).exp();
      const double s = e.sum();
      const auto t = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
      if (t < 0 || t >= y.rows()) throw DomainError("label out of range for softmax output");
      total += top + std::log(s) - y(t, i);
      dy.col(i) = e / s;
      dy(t, i) -= 1.0;
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  if (grad) {
    grad->weight.assign(L, Matrix());
    grad->bias.assign(L, Vector());
    Matrix delta = dy * inv_m;
    for (std::size_t l = L; l >= 1; --l) {
      grad->weight[l - 1] = delta * acts[l - 1].transpose();
      grad->bias[l - 1] = delta.rowwise().sum();
      if (l > 1) {
        Matrix back = net.layer(l).weight.transpose() * delta;
        const Matrix& h = pre[l - 2];
        delta = back.cwiseProduct(h.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }));
      }
    }
  }
  return total * inv_m;
}

struct TrainResult {
  NetworkParams net;
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

/// Minibatch Adam. The shuffle order depends only on cfg.seed.
inline TrainResult train_mlp(NetworkParams net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.dim() != net.input_dim()) throw ShapeError("dataset dimension != network input");
  const std::size_t L = net.depth();
  std::vector<Matrix> mw, vw;
  std::vector<Vector> mb, vb;
  for (const auto& layer : net.layers()) {
    mw.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    vw.push_back(mw.back());
    mb.push_back(Vector::Zero(layer.bias.size()));
    vb.push_back(mb.back());
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result{net, {}};
  std::size_t step = 0;
  Gradient g;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Matrix x(static_cast<Eigen::Index>(data.dim()), static_cast<Eigen::Index>(end - start));
      std::vector<int> y;
      for (std::size_t i = start; i < end; ++i) {
        x.col(static_cast<Eigen::Index>(i - start)) = data.inputs.row(static_cast<Eigen::Index>(order[i])).transpose();
        y.push_back(data.labels[order[i]]);
      }
      const double loss = loss_and_gradient(result.net, x, y, cfg.loss, &g);
      if (!std::isfinite(loss)) throw TrainingError("training loss diverged", step);
      sum += loss;
      ++batches;
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto& layers = result.net.mutable_layers();
      for (std::size_t l = 0; l < L; ++l) {
        mw[l] = cfg.beta1 * mw[l] + (1.0 - cfg.beta1) * g.weight[l];
        vw[l] = cfg.beta2 * vw[l] + (1.0 - cfg.beta2) * g.weight[l].cwiseAbs2();
        mb[l] = cfg.beta1 * mb[l] + (1.0 - cfg.beta1) * g.bias[l];
        vb[l] = cfg.beta2 * vb[l] + (1.0 - cfg.beta2) * g.bias[l].cwiseAbs2();
        layers[l].weight.array() -=
            cfg.learning_rate * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + cfg.epsilon);
        layers[l].bias.array() -=
            cfg.learning_rate * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + cfg.epsilon);
      }
    }
    result.epoch_loss.push_back(sum / static_cast<double>(std::max<std::size_t>(batches, 1)));
  }
  return result;
}

/// Predicted class: y > 0 for a scalar logit, argmax otherwise.
inline int predict(const NetworkParams& net, const Vector& x) {
  Vector a = x;
  const double slope = net.activation().negative_slope();
  for (std::size_t l = 1; l <= net.depth(); ++l) {
    Vector h = net.layer(l).weight * a + net.layer(l).bias;
    a = l < net.depth() ? h.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; }) : h;
  }
  if (a.size() == 1) return a[0] > 0.0 ? 1 : 0;
  Eigen::Index best = 0;
  a.maxCoeff(&best);
  return static_cast<int>(best);
}

inline double accuracy(const NetworkParams& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predict(net, data.inputs.row(static_cast<Eigen::Index>(i)).transpose()) == data.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace relu_lawn
