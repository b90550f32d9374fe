#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relu_lawn/errors.hpp"
#include "relu_lawn/network.hpp"

namespace relu_lawn {

struct Dataset {
  Matrix inputs;            // n x n_0
  std::vector<int> labels;  // n
  std::size_t n_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }

  void validate() const {
    if (static_cast<std::size_t>(inputs.rows()) != labels.size()) throw ShapeError("dataset rows != label count");
    if (!inputs.allFinite()) throw DomainError("dataset has non-finite inputs");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw DomainError("label out of range");
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset d;
    d.n_classes = n_classes;
    d.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      d.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
      d.labels.push_back(labels[rows[i]]);
    }
    return d;
  }

  /// Rows with the given label, in original order.
  Matrix class_rows(int label) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) rows.push_back(i);
    return subset(rows).inputs;
  }
};

/// Two interleaving half circles: label 0 on (cos t, sin t), label 1 on
/// (1 - cos t, 0.5 - sin t), t evenly spaced on [0, pi]; rows shuffled, then
/// N(0, noise_std^2 I) noise added.
inline Dataset make_moons(std::size_t n, double noise_std, std::uint64_t seed) {
  if (n % 2 != 0) throw DomainError("make_moons needs an even sample count");
  if (!(noise_std >= 0.0)) throw DomainError("noise_std must be >= 0");
  const std::size_t half = n / 2;
  Dataset d;
  d.n_classes = 2;
  d.inputs.resize(static_cast<Eigen::Index>(n), 2);
  d.labels.resize(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = order[i];
    const bool inner = src >= half;
    const std::size_t j = inner ? src - half : src;
    const double t = half > 1 ? std::numbers::pi * static_cast<double>(j) / static_cast<double>(half - 1) : 0.0;
    const auto r = static_cast<Eigen::Index>(i);
    if (!inner) {
      d.inputs(r, 0) = std::cos(t);
      d.inputs(r, 1) = std::sin(t);
    } else {
      d.inputs(r, 0) = 1.0 - std::cos(t);
      d.inputs(r, 1) = 0.5 - std::sin(t);
    }
    d.labels[i] = inner ? 1 : 0;
  }
  if (noise_std > 0.0) {
    std::normal_distribution<double> normal(0.0, noise_std);
    for (Eigen::Index i = 0; i < d.inputs.rows(); ++i) {
      d.inputs(i, 0) += normal(rng);
      d.inputs(i, 1) += normal(rng);
    }
  }
  return d;
}

/// First round(fraction * n) rows of a seeded permutation go to the first set.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("split fraction must lie in (0, 1)");
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(d.size())));
  const std::span<const std::size_t> all(order);
  return {d.subset(all.first(cut)), d.subset(all.subspan(cut))};
}

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& name) {
  if (offset + 4 > buf.size()) throw ParseError(name + ": truncated header at offset " + std::to_string(offset));
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace detail

/// IDX image/label pair: images scaled to [0, 1], flattened row-major.
inline Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const std::string iname = images.string(), lname = labels.string();
  const auto ibuf = detail::read_file(images);
  const auto lbuf = detail::read_file(labels);
  if (const auto magic = detail::read_be32(ibuf, 0, iname); magic != 0x00000803)
    throw ParseError(iname + ": bad image magic at offset 0");
  if (const auto magic = detail::read_be32(lbuf, 0, lname); magic != 0x00000801)
    throw ParseError(lname + ": bad label magic at offset 0");
  const std::size_t count = detail::read_be32(ibuf, 4, iname);
  const std::size_t rows = detail::read_be32(ibuf, 8, iname);
  const std::size_t cols = detail::read_be32(ibuf, 12, iname);
  const std::size_t lcount = detail::read_be32(lbuf, 4, lname);
  if (count != lcount)
    throw ParseError(lname + ": label count " + std::to_string(lcount) + " at offset 4 != image count " +
                     std::to_string(count));
  const std::size_t pixels = rows * cols;
  if (ibuf.size() < 16 + count * pixels)
    throw ParseError(iname + ": truncated pixel data at offset " + std::to_string(ibuf.size()));
  if (lbuf.size() < 8 + count) throw ParseError(lname + ": truncated label data at offset " + std::to_string(lbuf.size()));
  Dataset d;
  d.inputs.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
  d.labels.resize(count);
  int top = -1;
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* src = ibuf.data() + 16 + i * pixels;
    for (std::size_t j = 0; j < pixels; ++j)
      d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(src[j]) / 255.0;
    d.labels[i] = lbuf[8 + i];
    top = std::max(top, d.labels[i]);
  }
  d.n_classes = static_cast<std::size_t>(std::max(top + 1, 10));
  return d;
}

/// Writes an IDX pair; pixels are round(255 v) clamped to [0, 255].
inline void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& d,
                      std::size_t rows, std::size_t cols) {
  if (rows * cols != d.dim()) throw ShapeError("rows * cols != dataset dimension");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw ParseError("cannot open IDX output files");
  detail::write_be32(img, 0x00000803);
  detail::write_be32(img, static_cast<std::uint32_t>(d.size()));
  detail::write_be32(img, static_cast<std::uint32_t>(rows));
  detail::write_be32(img, static_cast<std::uint32_t>(cols));
  for (Eigen::Index i = 0; i < d.inputs.rows(); ++i)
    for (Eigen::Index j = 0; j < d.inputs.cols(); ++j)
      img.put(static_cast<char>(std::clamp(std::lround(255.0 * d.inputs(i, j)), 0L, 255L)));
  detail::write_be32(lab, 0x00000801);
  detail::write_be32(lab, static_cast<std::uint32_t>(d.size()));
  for (int y : d.labels) lab.put(static_cast<char>(y));
}

}  // namespace relu_lawn
