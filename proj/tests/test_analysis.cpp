#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace relu_lawn;

TEST(McSample, PointMass) {
  const auto gmm = GaussianMixture::single(Vector{{1.5, -2.0}}, Matrix::Zero(2, 2));
  const Matrix x = mc_sample(gmm, 100, 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) EXPECT_EQ(x.row(i), (Eigen::RowVector2d{1.5, -2.0}));
}

TEST(McSample, MeanWithinClt) {
  const Vector mu{{0.5, -1.0, 2.0}};
  const auto gmm = GaussianMixture::single(mu, Matrix::Identity(3, 3));
  const std::size_t n = 1000000;
  const Matrix x = mc_sample(gmm, n, 42);
  const Vector m = x.colwise().mean().transpose();
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(m[j], mu[j], 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(McSample, ComponentFrequencies) {
  const GaussianMixture gmm({0.2, 0.3, 0.5}, {Vector::Constant(1, -100.0), Vector::Zero(1), Vector::Constant(1, 100.0)},
                            {Matrix::Identity(1, 1), Matrix::Identity(1, 1), Matrix::Identity(1, 1)});
  const std::size_t n = 200000;
  const Matrix x = mc_sample(gmm, n, 9);
  const double c0 = (x.col(0).array() < -50.0).cast<double>().mean();
  const double c2 = (x.col(0).array() > 50.0).cast<double>().mean();
  EXPECT_NEAR(c0, 0.2, 4.0 * std::sqrt(0.2 * 0.8 / n));
  EXPECT_NEAR(c2, 0.5, 4.0 * std::sqrt(0.5 * 0.5 / n));
}

TEST(McSample, SingularAndInvalidCovariances) {
  Matrix rank1(2, 2);
  rank1 << 1.0, 1.0, 1.0, 1.0;
  const Matrix x = mc_sample(GaussianMixture::single(Vector::Zero(2), rank1), 1000, 3);
  EXPECT_LE((x.col(0) - x.col(1)).cwiseAbs().maxCoeff(), 1e-12);
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(covariance_factor(bad), DomainError);
  EXPECT_THROW(mc_sample(GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2)), 0, 1), DomainError);
}

TEST(McSample, IndependentOfThreadCount) {
  const auto gmm = GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_EQ(mc_sample(gmm, 20000, 5, 1), mc_sample(gmm, 20000, 5, 3));
}

TEST(McEmpirical, SymmetricIdentityNet) {
  const auto net = rl_test::identity_net(2, 2);
  const auto gmm = GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2));
  const EmpiricalLaw law = mc_empirical(net, mc_sample(gmm, 1000000, 11), 11);
  ASSERT_EQ(law.pattern_counts.size(), 4u);
  std::size_t total = 0;
  for (const auto& [p, c] : law.pattern_counts) {
    EXPECT_NEAR(static_cast<double>(c) / 1e6, 0.25, 0.002);
    total += c;
  }
  EXPECT_EQ(total, law.n);
  EXPECT_EQ(law.output_samples.rows(), 1000000);
}

TEST(McEmpirical, Reproducible) {
  std::mt19937_64 rng(2);
  const auto net = rl_test::random_net(rng, {2, 4, 4, 1});
  const auto gmm = GaussianMixture::single(Vector::Zero(2), Matrix::Identity(2, 2));
  const auto a = mc_empirical(net, mc_sample(gmm, 30000, 4), 4, 1);
  const auto b = mc_empirical(net, mc_sample(gmm, 30000, 4), 4, 2);
  EXPECT_EQ(a.pattern_counts, b.pattern_counts);
  EXPECT_EQ(a.output_samples, b.output_samples);
}

TEST(McEmpirical, EcdfWithinDkwOfOutputCdf) {
  std::vector<Layer> layers{{Matrix::Ones(1, 1), Vector::Zero(1)}, {Matrix::Ones(1, 1), Vector::Zero(1)}};
  const NetworkParams net(layers, Activation::relu());
  const auto gmm = GaussianMixture::single(Vector::Zero(1), Matrix::Identity(1, 1));
  const std::size_t n = 100000;
  const auto law = mc_empirical(net, mc_sample(gmm, n, 8));
  const auto support = all_patterns(net, 16);
  std::vector<double> grid, cdf;
  for (double x : {-0.5, 1e-9, 0.25, 0.5, 1.0, 2.0}) {
    grid.push_back(x);
    cdf.push_back(output_cdf(net, gmm, support, Vector::Constant(1, x)).value);
  }
  std::vector<double> y(law.output_samples.data(), law.output_samples.data() + n);
  EXPECT_LE(ks_statistic(grid, cdf, y), dkw_radius(n, 1e-3));
}

TEST(McEmpirical, PatternFrequenciesMatchPmf) {
  std::mt19937_64 rng(13);
  const auto net = rl_test::random_net(rng, {2, 3, 3, 1});
  const GaussianMixture gmm({0.5, 0.5}, {Vector{{1.0, 0.0}}, Vector{{-1.0, 0.5}}},
                            {0.5 * Matrix::Identity(2, 2), Matrix::Identity(2, 2)});
  const auto pmf = enumerate_pmf(net, gmm, PatternSelection::exhaustive());
  const std::size_t n = 200000;
  const auto emp = mc_empirical(net, mc_sample(gmm, n, 21)).pmf();
  for (const auto& [p, e] : pmf.entries) {
    const double q = emp.probability(p);
    const double binom = std::sqrt(std::max(e.probability * (1.0 - e.probability), 1e-12) / n);
    EXPECT_NEAR(q, e.probability, 4.0 * (binom + e.std_error) + 1e-6) << p.to_string();
  }
  EXPECT_LE(tv_distance(pmf, emp), 0.01);
}

TEST(FirstLayerReduction, SamePatternLaw) {
  std::mt19937_64 rng(15);
  const auto net = rl_test::random_net(rng, {5, 3, 3, 2});
  const auto gmm = GaussianMixture::single(rl_test::random_vector(rng, 5), rl_test::random_spd(rng, 5));
  const auto red = first_layer_reduction(net, gmm);
  EXPECT_EQ(red.net.input_dim(), 3u);
  const auto a = enumerate_pmf(net, gmm, PatternSelection::exhaustive());
  const auto b = enumerate_pmf(red.net, red.gmm, PatternSelection::exhaustive());
  EXPECT_LE(tv_distance(a, b), 1e-3);
  const Vector x = rl_test::random_vector(rng, 5);
  const Vector h1 = net.layer(1).weight * x + net.layer(1).bias;
  EXPECT_EQ(pattern_of(net, x), pattern_of(red.net, h1));
}

TEST(Metrics, TotalVariation) {
  PatternPMF a, b;
  a.entries[ActivationPattern::parse({2}, "10")] = {1.0, 0.0};
  b.entries[ActivationPattern::parse({2}, "01")] = {1.0, 0.0};
  EXPECT_DOUBLE_EQ(tv_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(tv_distance(a, b), 1.0);
  PatternPMF c;
  c.entries[ActivationPattern::parse({2}, "10")] = {0.6, 0.0};
  c.residual_mass = 0.4;
  EXPECT_DOUBLE_EQ(tv_distance(a, c), 0.4);
  EXPECT_DOUBLE_EQ(max_abs_difference(a, c), 0.4);
}

TEST(Metrics, KolmogorovSmirnov) {
  const WeightedValues a{{1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}};
  const WeightedValues b{{10.0, 11.0}, {0.5, 0.5}};
  EXPECT_DOUBLE_EQ(ks_two_sample(a, a), 0.0);
  EXPECT_DOUBLE_EQ(ks_two_sample(a, b), 1.0);
  const WeightedValues c{{1.0, 2.0}, {3.0, 1.0}};
  const WeightedValues d{{1.0, 2.0}, {1.0, 1.0}};
  EXPECT_DOUBLE_EQ(ks_two_sample(c, d), 0.25);
  const std::vector<double> grid{0.0}, cdf{0.5}, samples{-1.0, 1.0};
  EXPECT_DOUBLE_EQ(ks_statistic(grid, cdf, samples), 0.0);
}

TEST(Jacobian, IdentityAndAnnihilated) {
  const auto net = rl_test::identity_net(3, 3);
  EXPECT_EQ(jacobian(net, net.empty_pattern().complement()), Matrix::Identity(3, 3));
  auto p = net.empty_pattern().complement();
  for (std::size_t i = 0; i < 3; ++i) p.set(1, i, false);
  EXPECT_EQ(jacobian(net, p), Matrix::Zero(3, 3));
}

TEST(Jacobian, FiniteDifferenceAtInteriorPoints) {
  std::mt19937_64 rng(19);
  int checked = 0;
  for (int t = 0; t < 50; ++t) {
    const auto net = rl_test::random_net(rng, {3, 5, 4, 2}, t % 2 ? Activation::leaky_relu(0.05) : Activation::relu());
    const Vector x = rl_test::random_vector(rng, 3);
    const auto r = forward(net, x);
    bool interior = true;
    for (std::size_t l = 0; l + 1 < r.preactivations.size(); ++l) interior = interior && r.preactivations[l].cwiseAbs().minCoeff() > 1e-3;
    if (!interior) continue;
    ++checked;
    const Matrix j = jacobian(net, r.pattern);
    const double h = 1e-6 * std::max(1.0, x.norm());
    Matrix fd(2, 3);
    for (Eigen::Index c = 0; c < 3; ++c) {
      Vector e = Vector::Zero(3);
      e[c] = h;
      fd.col(c) = (forward(net, x + e).output - forward(net, x - e).output) / (2.0 * h);
    }
    EXPECT_LE((fd - j).norm(), 1e-5 * std::max(1.0, j.norm()));
  }
  EXPECT_GT(checked, 10);
}

TEST(Jacobian, SpectrumMatchesDirectSvd) {
  std::mt19937_64 rng(20);
  const auto net = rl_test::random_net(rng, {20, 6, 6, 4});
  const JacobianSpectrum spec(net);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto p = ActivationPattern::from_index(net.hidden_widths(), rng() % 4096);
    const Eigen::JacobiSVD<Matrix> svd(jacobian(net, p));
    const auto sv = spec.singular_values(p);
    ASSERT_EQ(sv.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(sv[k], svd.singularValues()[static_cast<Eigen::Index>(k)], 1e-6);
  }
}

TEST(SvDistribution, SinglePatternIdentity) {
  const auto net = rl_test::identity_net(3, 2);
  const std::vector<ActivationPattern> p{net.empty_pattern().complement()};
  const std::vector<double> w{1.0};
  const SVHistogram h = sv_distribution(net, p, w);
  ASSERT_EQ(h.mass.size(), 50u);
  EXPECT_DOUBLE_EQ(h.edges.back(), 1.05);
  const auto bin = static_cast<std::size_t>(1.0 / 1.05 * 50);
  EXPECT_NEAR(h.mass[bin], 1.0, 1e-12);
  EXPECT_NEAR(h.residual, 0.0, 1e-12);
}

TEST(SvDistribution, TwoEquiprobablePatterns) {
  // second layer doubles only when its input masks are active in the scaled branch
  std::vector<Layer> layers{{Matrix::Identity(2, 2), Vector::Zero(2)}, {2.0 * Matrix::Identity(2, 2), Vector::Zero(2)},
                            {Matrix::Identity(2, 2), Vector::Zero(2)}};
  const NetworkParams net(layers, Activation::relu());
  const auto all_on = ActivationPattern::parse({2, 2}, "1111");
  std::vector<Layer> plain{{Matrix::Identity(2, 2), Vector::Zero(2)}, {Matrix::Identity(2, 2), Vector::Zero(2)}};
  const WeightedValues doubled = weighted_singular_values(net, std::vector<ActivationPattern>{all_on}, std::vector<double>{0.5});
  const WeightedValues unit = weighted_singular_values(NetworkParams(plain, Activation::relu()),
                                                       std::vector<ActivationPattern>{ActivationPattern::parse({2}, "11")},
                                                       std::vector<double>{0.5});
  WeightedValues both = doubled;
  both.values.insert(both.values.end(), unit.values.begin(), unit.values.end());
  both.weights.insert(both.weights.end(), unit.weights.begin(), unit.weights.end());
  const SVHistogram h = sv_histogram(both, 2.1, 50, SVHistogram::Source::exact_support);
  EXPECT_NEAR(h.mass[static_cast<std::size_t>(1.0 / 2.1 * 50)], 0.5, 1e-12);
  EXPECT_NEAR(h.mass[static_cast<std::size_t>(2.0 / 2.1 * 50)], 0.5, 1e-12);
}

TEST(SvDistribution, MassConservation) {
  std::mt19937_64 rng(30);
  const auto net = rl_test::random_net(rng, {4, 4, 4, 3});
  const auto gmm = GaussianMixture::single(Vector::Zero(4), Matrix::Identity(4, 4));
  const auto est = estimate_support(net, gmm, ThresholdSpec::uniform_margin(0.3, 2));
  const auto pmf = enumerate_pmf(net, gmm, PatternSelection::explicit_list(est.patterns));
  std::vector<double> w;
  for (const auto& p : est.patterns) w.push_back(pmf.probability(p));
  const SVHistogram h = sv_distribution(net, est.patterns, w);
  double total = 0.0;
  for (double m : h.mass) {
    EXPECT_GE(m, 0.0);
    total += m;
  }
  double wsum = 0.0;
  for (double x : w) wsum += x;
  EXPECT_NEAR(total + h.residual, 1.0, 1e-9);
  EXPECT_NEAR(total, wsum, 1e-9);
}

TEST(RandomCovariance, Properties) {
  const Matrix s = random_covariance(30, 5);
  EXPECT_EQ(s, random_covariance(30, 5));
  EXPECT_LE((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  EXPECT_NEAR(eig.eigenvalues().maxCoeff(), 1.0, 1e-12);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(RoundedMarginals, PatternAndJacobian) {
  const auto net = rl_test::identity_net(2, 3);
  const auto gmm = GaussianMixture::single(Vector{{1.0, -1.0}}, Matrix::Identity(2, 2));
  const auto p = rounded_marginal_pattern(net, gmm);
  EXPECT_EQ(p.to_string(), "1010");
  const Matrix j = rounded_marginal_jacobian(net, gmm);
  EXPECT_EQ(j, (Matrix{{1.0, 0.0}, {0.0, 0.0}}));
}
