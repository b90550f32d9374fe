#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"

using namespace relu_lawn;

namespace {

std::vector<std::vector<std::uint8_t>> as_sets(const LayerPatterns& lp) { return lp.patterns; }

// Expansion re-derived through the stacked pushforward of each prefix.
std::vector<ActivationPattern> reference_support(const NetworkParams& net, const GaussianMixture& gmm,
                                                 const std::vector<double>& tau, std::size_t cap) {
  const InputLaw law(net, gmm);
  std::vector<ActivationPattern> current{net.empty_pattern()};
  const auto widths = net.hidden_widths();
  for (std::size_t l = 0; l < widths.size(); ++l) {
    std::vector<ActivationPattern> next;
    for (const auto& prefix : current) {
      const auto pushed = law.pushforward(prefix, l + 1);
      PushforwardGaussianParams layer;
      layer.weights = pushed.weights;
      const auto rows = static_cast<Eigen::Index>(widths[l]);
      for (std::size_t k = 0; k < gmm.size(); ++k) {
        const Eigen::Index start = pushed.means[k].size() - rows;
        layer.means.push_back(pushed.means[k].segment(start, rows));
        layer.covariances.push_back(pushed.covariances[k].block(start, start, rows, rows));
      }
      for (const auto& z : get_patterns(layer, tau[l], cap).patterns) {
        ActivationPattern child = prefix;
        child.set_layer(l, z);
        next.push_back(child);
      }
    }
    current = std::move(next);
  }
  return current;
}

}  // namespace

TEST(GetPatterns, HandExecutedExample) {
  const LayerPatterns lp = get_patterns(Vector{{0.99, 0.5, 0.01}}, 0.5, 10);
  EXPECT_EQ(lp.free_indices, (std::vector<std::size_t>{1}));
  const std::vector<std::vector<std::uint8_t>> expected{{1, 0, 0}, {1, 1, 0}};
  EXPECT_EQ(as_sets(lp), expected);
}

TEST(GetPatterns, DegenerateThresholds) {
  const Vector p{{0.7, 0.2, 0.45, 0.51}};
  const LayerPatterns all_fixed = get_patterns(p, 1.0, 10);
  ASSERT_EQ(all_fixed.patterns.size(), 1u);
  EXPECT_EQ(all_fixed.patterns[0], (std::vector<std::uint8_t>{1, 0, 0, 1}));
  EXPECT_EQ(get_patterns(p, 0.0, 10).patterns.size(), 16u);
  EXPECT_EQ(get_patterns(p, 0.0, 2).patterns.size(), 4u);
}

TEST(GetPatterns, CapFixesLowestEntropyFirst) {
  const Vector p{{0.5, 0.3, 0.45, 0.2, 0.6}};
  const LayerPatterns lp = get_patterns(p, 0.0, 2);
  EXPECT_EQ(lp.free_indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(lp.cap_fixed, (std::vector<std::size_t>{1, 3, 4}));
  for (const auto& z : lp.patterns) {
    EXPECT_EQ(z[1], 0);
    EXPECT_EQ(z[3], 0);
    EXPECT_EQ(z[4], 1);
  }
}

TEST(GetPatterns, DeterministicNeuronsUseMeanSign) {
  PushforwardGaussianParams pushed;
  pushed.weights = {1.0};
  pushed.means = {Vector{{2.0, 0.0, -1.0}}};
  pushed.covariances = {Matrix::Zero(3, 3)};
  const LayerPatterns lp = get_patterns(pushed, 0.5, 10);
  ASSERT_EQ(lp.patterns.size(), 1u);
  EXPECT_EQ(lp.patterns[0], (std::vector<std::uint8_t>{1, 0, 0}));
}

TEST(Thresholds, MarginEntropyConversion) {
  EXPECT_NEAR(entropy_from_margin(0.1), 0.970950594454668638998076063121, 1e-14);
  for (double d : {0.05, 0.1, 0.25, 0.4}) EXPECT_NEAR(margin_from_entropy(entropy_from_margin(d)), d, 1e-12);
  EXPECT_THROW(LayerThreshold::from_margin(0.5), DomainError);
  EXPECT_THROW(LayerThreshold::entropy(1.5), DomainError);
  const auto spec = ThresholdSpec::uniform_margin(0.25, 3);
  EXPECT_EQ(spec.layers.size(), 3u);
  EXPECT_EQ(spec.branch_cap, 10u);
}

TEST(EstimateSupport, SingleLayerAllFixed) {
  std::mt19937_64 rng(1);
  const auto net = rl_test::random_net(rng, {3, 5, 1});
  const auto gmm = GaussianMixture::single(rl_test::random_vector(rng, 3), 0.3 * Matrix::Identity(3, 3));
  const auto est = estimate_support(net, gmm, ThresholdSpec::uniform_entropy(1.0, 1));
  ASSERT_EQ(est.patterns.size(), 1u);
  const Vector h = net.layer(1).weight * gmm.mean(0) + net.layer(1).bias;
  const Vector var = (net.layer(1).weight * gmm.covariance(0) * net.layer(1).weight.transpose()).diagonal();
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(est.patterns[0].bit(0, static_cast<std::size_t>(i)), phi(h[i] / std::sqrt(var[i])) > 0.5);
}

TEST(EstimateSupport, MatchesStackedPushforwardReference) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const auto net = rl_test::random_net(rng, {3, 6, 5, 4, 2}, t % 2 ? Activation::leaky_relu(0.1) : Activation::relu());
    const GaussianMixture gmm({0.4, 0.6}, {rl_test::random_vector(rng, 3), rl_test::random_vector(rng, 3)},
                              {rl_test::random_spd(rng, 3, 0.05), rl_test::random_spd(rng, 3, 0.05)});
    const std::vector<double> tau{entropy_from_margin(0.3), entropy_from_margin(0.2), entropy_from_margin(0.35)};
    ThresholdSpec spec;
    for (double x : tau) spec.layers.push_back(LayerThreshold::entropy(x));
    spec.branch_cap = 3;
    const auto est = estimate_support(net, gmm, spec);
    EXPECT_EQ(est.patterns, reference_support(net, gmm, tau, 3));
    std::set<ActivationPattern> unique(est.patterns.begin(), est.patterns.end());
    EXPECT_EQ(unique.size(), est.patterns.size());
    std::size_t bound = 1;
    for (std::size_t f : est.max_free_per_layer) {
      EXPECT_LE(f, 3u);
      bound <<= f;
    }
    EXPECT_LE(est.patterns.size(), bound);
    EXPECT_EQ(est.prefixes_per_layer.back(), est.patterns.size());
  }
}

TEST(EstimateSupport, CountLawWithUniformFreeSets) {
  // layer 2 reads only the always-active neuron 1, so every prefix has the same free set
  Matrix w2(3, 3);
  w2 << 0, 1, 0, 0, 1, 0, 0, -1, 0;
  std::vector<Layer> layers{{Matrix::Identity(3, 3), Vector::Zero(3)},
                            {w2, Vector{{-2.0, 2.0, 0.0}}},
                            {Matrix::Ones(1, 3), Vector::Zero(1)}};
  const NetworkParams net(layers, Activation::relu());
  const auto gmm = GaussianMixture::single(Vector{{0.0, 2.0, -2.0}}, Matrix::Identity(3, 3));
  const auto est = estimate_support(net, gmm, ThresholdSpec::uniform_margin(0.4, 2));
  EXPECT_EQ(est.max_free_per_layer, (std::vector<std::size_t>{1, 1}));
  std::size_t product = 1;
  for (std::size_t f : est.max_free_per_layer) product <<= f;
  EXPECT_EQ(est.patterns.size(), product);
}

TEST(EstimateSupport, ExhaustiveLimit) {
  std::mt19937_64 rng(3);
  const auto net = rl_test::random_net(rng, {2, 3, 4, 1});
  const auto gmm = GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2));
  const auto est = estimate_support(net, gmm, ThresholdSpec::uniform_entropy(0.0, 2, 4));
  std::vector<ActivationPattern> sorted = est.patterns;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, all_patterns(net, 16));
}

TEST(EstimateSupport, SoundnessOfThresholdFixedBits) {
  std::mt19937_64 rng(14);
  const auto net = rl_test::random_net(rng, {2, 8, 1});
  const auto gmm = GaussianMixture::single(rl_test::random_vector(rng, 2), 0.2 * Matrix::Identity(2, 2));
  const InputLaw law(net, gmm);
  const auto pushed = law.pushforward(net.empty_pattern(), 1);
  for (double margin : {0.1, 0.25, 0.4}) {
    const LayerPatterns lp = get_patterns(pushed, entropy_from_margin(margin), 10);
    for (Eigen::Index i = 0; i < lp.marginals.size(); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (std::find(lp.free_indices.begin(), lp.free_indices.end(), idx) != lp.free_indices.end()) continue;
      const double p = lp.marginals[i];
      EXPECT_GE(lp.fixed_values[idx] ? p : 1.0 - p, 0.5 + margin - 1e-12);
    }
  }
}

TEST(EstimateSupport, GlobalCapNamesLayer) {
  const auto net = rl_test::identity_net(4, 3);
  const auto gmm = GaussianMixture::single(Vector::Zero(4), Matrix::Identity(4, 4));
  SupportOptions opt;
  opt.global_cap = 20;
  try {
    estimate_support(net, gmm, ThresholdSpec::uniform_entropy(0.0, 2), opt);
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("hidden layer 2"), std::string::npos) << e.what();
  }
}

TEST(EstimateSupport, OptionalPruning) {
  const auto net = rl_test::identity_net(3, 2);
  const auto gmm = GaussianMixture::single(Vector{{0.1, 0.0, -0.2}}, Matrix::Identity(3, 3));
  SupportOptions opt;
  opt.min_branch_bound = 0.48;
  const auto pruned = estimate_support(net, gmm, ThresholdSpec::uniform_entropy(0.0, 1), opt);
  const auto full = estimate_support(net, gmm, ThresholdSpec::uniform_entropy(0.0, 1));
  EXPECT_EQ(full.patterns.size(), 8u);
  EXPECT_LT(pruned.patterns.size(), full.patterns.size());
}

TEST(PruneBound, Examples) {
  const Vector half{{0.5, 0.5}};
  EXPECT_DOUBLE_EQ(prune_bound(half), 0.5);
  for (std::uint8_t a : {0, 1})
    for (std::uint8_t b : {0, 1}) EXPECT_DOUBLE_EQ(prune_bound(half, std::vector<std::uint8_t>{a, b}), 0.5);
  EXPECT_NEAR(prune_bound(Vector{{0.99, 0.5}}, std::vector<std::uint8_t>{0, 1}), 0.01, 1e-15);
}

TEST(PruneBound, DominatesExactPmf) {
  std::mt19937_64 rng(88);
  for (int t = 0; t < 200; ++t) {
    const auto net = rl_test::random_net(rng, {2, 3, 2, 1});
    const auto gmm = GaussianMixture::single(rl_test::random_vector(rng, 2), rl_test::random_spd(rng, 2));
    const auto p = ActivationPattern::from_index(net.hidden_widths(), rng() % 32);
    const Vector marg = marginal_active_prob(InputLaw(net, gmm).pushforward(p, 1).weights,
                                             InputLaw(net, gmm).pushforward(p, 1).means,
                                             std::vector<Vector>{InputLaw(net, gmm).pushforward(p, 1).covariances[0].diagonal()});
    const ProbResult exact = pattern_pmf(net, gmm, p);
    EXPECT_LE(exact.value, prune_bound(marg, p.layer_bits(0)) + 3.0 * exact.std_error + 1e-12);
  }
}

TEST(Coverage, EmptyAndFull) {
  std::mt19937_64 rng(4);
  const auto net = rl_test::random_net(rng, {2, 3, 3, 1});
  const Matrix x = rl_test::random_matrix(rng, 50, 2);
  EXPECT_EQ(coverage_proportion(std::vector<ActivationPattern>{}, net, x), 0.0);
  std::vector<ActivationPattern> seen;
  for (Eigen::Index i = 0; i < x.rows(); ++i) seen.push_back(pattern_of(net, x.row(i).transpose()));
  EXPECT_EQ(coverage_proportion(seen, net, x), 1.0);
  EXPECT_EQ(coverage_proportion(all_patterns(net, 16), net, x), 1.0);
}

TEST(Coverage, MonotoneInMargin) {
  std::mt19937_64 rng(23);
  const auto net = rl_test::random_net(rng, {4, 8, 8, 8, 3});
  const Vector mu = rl_test::random_vector(rng, 4, 0.5);
  const Matrix sigma = 0.3 * rl_test::random_spd(rng, 4);
  const auto gmm = GaussianMixture::single(mu, sigma);
  const Matrix test = mc_sample(gmm, 500, 6);
  double prev = -1.0;
  std::size_t prev_count = 0;
  for (double margin : {0.1, 0.2, 0.3, 0.4}) {
    const auto est = estimate_support(net, gmm, ThresholdSpec::uniform_margin(margin, 3, 4));
    const double cov = coverage_proportion(est, net, test);
    EXPECT_GE(cov, prev);
    EXPECT_GE(est.patterns.size(), prev_count);
    prev = cov;
    prev_count = est.patterns.size();
  }
}
