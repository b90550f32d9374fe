#pragma once

#include <cstddef>
#include <vector>

#include "relu_lawn/network.hpp"

namespace relu_lawn {

struct ForwardResult {
  Vector output;
  ActivationPattern pattern;
  std::vector<Vector> preactivations;  // h_1 .. h_L
};

/// Evaluates the network; a unit is active iff its preactivation is strictly positive.
inline ForwardResult forward(const NetworkParams& net, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != net.input_dim())
    throw ShapeError("input length " + std::to_string(x.size()) + " != n_0 = " + std::to_string(net.input_dim()));
  ForwardResult r{Vector(), net.empty_pattern(), {}};
  r.preactivations.reserve(net.depth());
  const double slope = net.activation().negative_slope();
  Vector a = x;
  for (std::size_t l = 1; l <= net.depth(); ++l) {
    const Layer& layer = net.layer(l);
    Vector h = layer.weight * a + layer.bias;
    if (l < net.depth()) {
      a.resize(h.size());
      for (Eigen::Index i = 0; i < h.size(); ++i) {
        const bool on = h[i] > 0.0;
        r.pattern.set(l - 1, static_cast<std::size_t>(i), on);
        a[i] = (on ? 1.0 : slope) * h[i];
      }
    }
    r.preactivations.push_back(std::move(h));
  }
  r.output = r.preactivations.back();
  return r;
}

/// Pattern only; skips storing preactivations.
inline ActivationPattern pattern_of(const NetworkParams& net, const Vector& x) { return forward(net, x).pattern; }

/// Per-layer diagonal multipliers: active -> 1, inactive -> 0 (ReLU) or the leaky slope.
inline std::vector<Vector> mask_values(const Activation& activation, const ActivationPattern& pattern) {
  std::vector<Vector> masks;
  masks.reserve(pattern.num_layers());
  for (std::size_t l = 0; l < pattern.num_layers(); ++l) {
    Vector m(static_cast<Eigen::Index>(pattern.width(l)));
    for (std::size_t i = 0; i < pattern.width(l); ++i)
      m[static_cast<Eigen::Index>(i)] = activation.mask_value(pattern.bit(l, i));
    masks.push_back(std::move(m));
  }
  return masks;
}

inline void check_pattern_shape(const NetworkParams& net, const ActivationPattern& pattern) {
  if (pattern.widths() != net.hidden_widths()) throw ShapeError("activation pattern shape does not match network");
}

/// h = C x + d for one layer under a fixed pattern.
struct AffineMap {
  Matrix C;
  Vector d;
};

/// C_1..C_depth and d_1..d_depth stacked row-wise.
struct StackedAffine {
  Matrix C;
  Vector d;
  std::size_t depth = 0;
  std::vector<std::size_t> block_rows;
};

/// (C_P, d_P) with C_1 = W_1, d_1 = b_1, C_l = W_l diag(m_{l-1}) C_{l-1},
/// d_l = W_l diag(m_{l-1}) d_{l-1} + b_l. Only masks of layers 1..P-1 are read.
inline AffineMap affine_params(const NetworkParams& net, const ActivationPattern& pattern, std::size_t depth) {
  check_pattern_shape(net, pattern);
  if (depth < 1 || depth > net.depth()) throw IndexError("affine_params depth out of range [1, L]");
  AffineMap map{net.layer(1).weight, net.layer(1).bias};
  const Activation& act = net.activation();
  for (std::size_t l = 2; l <= depth; ++l) {
    Matrix masked = net.layer(l).weight;
    for (std::size_t i = 0; i < pattern.width(l - 2); ++i)
      masked.col(static_cast<Eigen::Index>(i)) *= act.mask_value(pattern.bit(l - 2, i));
    map.C = masked * map.C;
    map.d = masked * map.d + net.layer(l).bias;
  }
  return map;
}

inline StackedAffine stacked_affine(const NetworkParams& net, const ActivationPattern& pattern, std::size_t depth) {
  check_pattern_shape(net, pattern);
  if (depth < 1 || depth > net.depth()) throw IndexError("stacked_affine depth out of range [1, L]");
  std::size_t rows = 0;
  for (std::size_t l = 1; l <= depth; ++l) rows += static_cast<std::size_t>(net.layer(l).weight.rows());
  StackedAffine s;
  s.depth = depth;
  s.C.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(net.input_dim()));
  s.d.resize(static_cast<Eigen::Index>(rows));
  const Activation& act = net.activation();
  Matrix C = net.layer(1).weight;
  Vector d = net.layer(1).bias;
  Eigen::Index row = 0;
  for (std::size_t l = 1; l <= depth; ++l) {
    if (l > 1) {
      Matrix masked = net.layer(l).weight;
      for (std::size_t i = 0; i < pattern.width(l - 2); ++i)
        masked.col(static_cast<Eigen::Index>(i)) *= act.mask_value(pattern.bit(l - 2, i));
      C = masked * C;
      d = masked * d + net.layer(l).bias;
    }
    s.C.middleRows(row, C.rows()) = C;
    s.d.segment(row, d.size()) = d;
    s.block_rows.push_back(static_cast<std::size_t>(C.rows()));
    row += C.rows();
  }
  return s;
}

/// Rows constrain A x + b: strict rows require > 0, the others <= 0.
struct HalfspaceSystem {
  Matrix A;
  Vector b;
  std::vector<bool> strict;
};

/// Input region K(pattern): every hidden preactivation has the sign its bit demands.
inline HalfspaceSystem polytope_of(const NetworkParams& net, const ActivationPattern& pattern) {
  StackedAffine s = stacked_affine(net, pattern, net.depth() - 1);
  HalfspaceSystem sys{std::move(s.C), std::move(s.d), {}};
  sys.strict.reserve(pattern.total_bits());
  for (std::size_t j = 0; j < pattern.total_bits(); ++j) sys.strict.push_back(pattern.flat_bit(j));
  return sys;
}

inline bool contains(const HalfspaceSystem& sys, const Vector& x) {
  if (x.size() != sys.A.cols()) throw ShapeError("point dimension does not match halfspace system");
  const Vector v = sys.A * x + sys.b;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const bool ok = sys.strict[static_cast<std::size_t>(i)] ? v[i] > 0.0 : v[i] <= 0.0;
    if (!ok) return false;
  }
  return true;
}

}  // namespace relu_lawn
