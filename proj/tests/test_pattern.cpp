#include <gtest/gtest.h>

#include <set>
#include <unordered_set>

#include "helpers.hpp"

using namespace relu_lawn;

TEST(Pattern, FlatOrderIsLayerMajor) {
  const auto p = ActivationPattern::parse({2, 3}, "10011");
  EXPECT_TRUE(p.bit(0, 0));
  EXPECT_FALSE(p.bit(0, 1));
  EXPECT_FALSE(p.bit(1, 0));
  EXPECT_TRUE(p.bit(1, 1));
  EXPECT_TRUE(p.bit(1, 2));
  EXPECT_EQ(p.to_string(), "10011");
  EXPECT_EQ(p.total_bits(), 5u);
}

TEST(Pattern, DecimalLabelIsLittleEndian) {
  EXPECT_EQ(ActivationPattern::parse({3}, "100").decimal_label(), "1");
  EXPECT_EQ(ActivationPattern::parse({3}, "001").decimal_label(), "4");
  EXPECT_EQ(ActivationPattern::parse({2, 2}, "1111").decimal_label(), "15");
  EXPECT_EQ(ActivationPattern::parse({2}, "00").decimal_label(), "0");
}

TEST(Pattern, WideLabelBeyond64Bits) {
  ActivationPattern p(std::vector<std::size_t>{40, 40});
  p.set_flat(79, true);
  EXPECT_EQ(p.decimal_label(), "604462909807314587353088");  // 2^79
}

TEST(Pattern, FromIndexRoundTripsAndOrders) {
  const std::vector<std::size_t> w{2, 3, 1};
  ActivationPattern prev = ActivationPattern::from_index(w, 0);
  for (std::uint64_t i = 1; i < 64; ++i) {
    const auto p = ActivationPattern::from_index(w, i);
    EXPECT_EQ(p.decimal_label(), std::to_string(i));
    EXPECT_LT(prev, p);
    prev = p;
  }
}

TEST(Pattern, FromIndexRejectsWidePatterns) {
  EXPECT_THROW(ActivationPattern::from_index({40, 40}, 1), CapacityError);
}

TEST(Pattern, ShapeErrors) {
  EXPECT_THROW(ActivationPattern::parse({2, 2}, "101"), ShapeError);
  EXPECT_THROW(ActivationPattern::parse({2}, "1x"), ShapeError);
  ActivationPattern p(std::vector<std::size_t>{2});
  const std::vector<std::uint8_t> three{1, 0, 1};
  EXPECT_THROW(p.set_layer(0, three), ShapeError);
}

TEST(Pattern, ComplementAndEquality) {
  const auto p = ActivationPattern::parse({2, 2}, "1001");
  EXPECT_EQ(p.complement().to_string(), "0110");
  EXPECT_EQ(p.complement().complement(), p);
  EXPECT_NE(p, p.complement());
  EXPECT_NE(ActivationPattern::parse({2, 2}, "0000"), ActivationPattern::parse({4}, "0000"));
}

TEST(Pattern, HashDistinguishesSmallSpace) {
  std::unordered_set<ActivationPattern, PatternHash> seen;
  for (std::uint64_t i = 0; i < 4096; ++i) seen.insert(ActivationPattern::from_index({4, 4, 4}, i));
  EXPECT_EQ(seen.size(), 4096u);
}

TEST(Pattern, LayerBitsRoundTrip) {
  ActivationPattern p(std::vector<std::size_t>{3, 70});
  std::vector<std::uint8_t> z(70, 0);
  z[0] = z[65] = z[69] = 1;
  p.set_layer(1, z);
  EXPECT_EQ(p.layer_bits(1), z);
  EXPECT_TRUE(p.flat_bit(3 + 65));
  EXPECT_EQ(p.bits().size(), 73u);
}

TEST(Normal, PhiValues) {
  EXPECT_DOUBLE_EQ(phi(0.0), 0.5);
  EXPECT_NEAR(phi(40.0), 1.0, 1e-15);
  // 30-digit reference values
  EXPECT_NEAR(phi(1.0), 0.841344746068542948585232545632, 1e-15);
  EXPECT_NEAR(phi(-2.5), 0.00620966532577613516697810457419, 1e-16);
  EXPECT_NEAR(phi(0.3), 0.617911422188952637306528963121, 1e-15);
}

TEST(Normal, PhiInverseRoundTrip) {
  for (double p : {1e-300, 1e-12, 1e-6, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.97575, 0.999, 1 - 1e-9}) {
    const double z = phi_inv(p);
    EXPECT_NEAR(phi(z), p, 1e-14 + 1e-12 * p) << p;
  }
  EXPECT_DOUBLE_EQ(phi_inv(0.5), 0.0);
}

TEST(Normal, BinaryEntropy) {
  EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
  EXPECT_DOUBLE_EQ(binary_entropy(0.0), 0.0);
  EXPECT_DOUBLE_EQ(binary_entropy(1.0), 0.0);
  EXPECT_NEAR(binary_entropy(0.6), 0.970950594454668, 1e-14);
  EXPECT_NEAR(binary_entropy(0.11), binary_entropy(0.89), 1e-15);
}

TEST(Parallel, SeedMixingAndDispatch) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  std::vector<int> hit(1000, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw DomainError("x"); }), DomainError);
}
