#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relu_lawn/errors.hpp"

namespace relu_lawn {

/// Concatenated per-layer binary masks of the hidden layers.
///
/// Bits are addressed either per layer (layer 0 is the first hidden layer) or
/// by flat position in the canonical bit string: layer-major, neuron index
/// ascending. Each layer is packed into its own run of 64-bit words; unused
/// high bits are always zero, so word comparison is exact.
///
/// The decimal label reads the canonical string little-endian (flat bit j has
/// weight 2^j) and the canonical total order is ascending decimal label, which
/// makes `from_index(widths, i)` for i = 0, 1, ... enumerate in order.
class ActivationPattern {
 public:
  ActivationPattern() = default;

  explicit ActivationPattern(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    offsets_.reserve(widths_.size() + 1);
    std::size_t words = 0;
    for (std::size_t w : widths_) {
      offsets_.push_back(words);
      words += (w + 63) / 64;
    }
    offsets_.push_back(words);
    words_.assign(words, 0);
  }

  /// Pattern whose flat bits are given as 0/1 values in canonical order.
  static ActivationPattern from_bits(std::vector<std::size_t> widths, std::span<const std::uint8_t> bits) {
    ActivationPattern p(std::move(widths));
    if (bits.size() != p.total_bits()) {
      throw ShapeError("pattern bit count " + std::to_string(bits.size()) + " does not match " +
                       std::to_string(p.total_bits()) + " hidden neurons");
    }
    for (std::size_t j = 0; j < bits.size(); ++j) p.set_flat(j, bits[j] != 0);
    return p;
  }

  /// Pattern whose little-endian decimal label is `index` (total_bits <= 64).
  static ActivationPattern from_index(std::vector<std::size_t> widths, std::uint64_t index) {
    ActivationPattern p(std::move(widths));
    if (p.total_bits() > 64) throw CapacityError("from_index supports at most 64 hidden bits");
    for (std::size_t j = 0; j < p.total_bits(); ++j) p.set_flat(j, ((index >> j) & 1U) != 0);
    return p;
  }

  /// Parses a '0'/'1' string in canonical order.
  static ActivationPattern parse(std::vector<std::size_t> widths, std::string_view text) {
    std::vector<std::uint8_t> bits;
    bits.reserve(text.size());
    for (char c : text) {
      if (c != '0' && c != '1') throw ShapeError("pattern string must contain only '0'/'1'");
      bits.push_back(c == '1' ? 1 : 0);
    }
    return from_bits(std::move(widths), bits);
  }

  std::size_t num_layers() const { return widths_.size(); }
  std::size_t width(std::size_t layer) const { return widths_.at(layer); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t total_bits() const { return std::accumulate(widths_.begin(), widths_.end(), std::size_t{0}); }

  bool bit(std::size_t layer, std::size_t i) const {
    return ((words_[offsets_[layer] + i / 64] >> (i % 64)) & 1U) != 0;
  }

  void set(std::size_t layer, std::size_t i, bool value) {
    auto& w = words_[offsets_[layer] + i / 64];
    const std::uint64_t m = std::uint64_t{1} << (i % 64);
    w = value ? (w | m) : (w & ~m);
  }

  bool flat_bit(std::size_t j) const {
    const auto [layer, i] = locate(j);
    return bit(layer, i);
  }

  void set_flat(std::size_t j, bool value) {
    const auto [layer, i] = locate(j);
    set(layer, i, value);
  }

  /// Bits of one layer as 0/1 bytes.
  std::vector<std::uint8_t> layer_bits(std::size_t layer) const {
    std::vector<std::uint8_t> out(widths_.at(layer));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = bit(layer, i) ? 1 : 0;
    return out;
  }

  void set_layer(std::size_t layer, std::span<const std::uint8_t> bits) {
    if (bits.size() != widths_.at(layer)) throw ShapeError("layer mask width mismatch");
    for (std::size_t i = 0; i < bits.size(); ++i) set(layer, i, bits[i] != 0);
  }

  /// All flat bits as 0/1 bytes.
  std::vector<std::uint8_t> bits() const {
    std::vector<std::uint8_t> out;
    out.reserve(total_bits());
    for (std::size_t l = 0; l < widths_.size(); ++l)
      for (std::size_t i = 0; i < widths_[l]; ++i) out.push_back(bit(l, i) ? 1 : 0);
    return out;
  }

  /// Canonical '0'/'1' string.
  std::string to_string() const {
    std::string s;
    s.reserve(total_bits());
    for (std::size_t l = 0; l < widths_.size(); ++l)
      for (std::size_t i = 0; i < widths_[l]; ++i) s.push_back(bit(l, i) ? '1' : '0');
    return s;
  }

  /// Little-endian decimal label of the canonical string, any width.
  std::string decimal_label() const {
    std::vector<int> digits{0};  // least significant first
    const std::size_t n = total_bits();
    for (std::size_t j = n; j-- > 0;) {
      int carry = flat_bit(j) ? 1 : 0;
      for (int& d : digits) {
        const int v = d * 2 + carry;
        d = v % 10;
        carry = v / 10;
      }
      if (carry) digits.push_back(carry);
    }
    std::string s;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) s.push_back(static_cast<char>('0' + *it));
    return s;
  }

  /// Flips every bit.
  ActivationPattern complement() const {
    ActivationPattern p = *this;
    for (std::size_t j = 0; j < total_bits(); ++j) p.set_flat(j, !flat_bit(j));
    return p;
  }

  bool operator==(const ActivationPattern& o) const { return widths_ == o.widths_ && words_ == o.words_; }

  std::strong_ordering operator<=>(const ActivationPattern& o) const {
    if (auto c = widths_ <=> o.widths_; c != 0) return c;
    for (std::size_t k = words_.size(); k-- > 0;) {
      if (words_[k] != o.words_[k]) return words_[k] <=> o.words_[k];
    }
    return std::strong_ordering::equal;
  }

  std::size_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint64_t w : words_) {
      h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }

 private:
  std::pair<std::size_t, std::size_t> locate(std::size_t j) const {
    for (std::size_t l = 0; l < widths_.size(); ++l) {
      if (j < widths_[l]) return {l, j};
      j -= widths_[l];
    }
    throw IndexError("flat bit index out of range");
  }

  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint64_t> words_;
};

struct PatternHash {
  std::size_t operator()(const ActivationPattern& p) const { return p.hash(); }
};

}  // namespace relu_lawn
