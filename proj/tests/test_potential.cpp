#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "kesten/potential.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace kesten;

namespace {

const double kGolden = (1.0 + std::sqrt(5.0)) / 2.0;

std::map<Word, double> random_table(const Shift& s, int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 1.0);
  std::map<Word, double> t;
  for (const auto& w : s.enumerate_words(k)) t[w] = u(rng);
  return t;
}

// Unweighted least-squares slope, written out.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST(Birkhoff, ConstantPotential) {
  for (int m = 2; m <= 4; ++m) {
    const auto s = Shift::full(m);
    const auto p = Potential::constant(s, -std::log(m));
    for (const auto& w : s.enumerate_words(4))
      EXPECT_NEAR(birkhoff_log_weight(s, p, w, Word{}), -4 * std::log(m), 1e-12);
  }
  const auto g = Shift::validate(oracle::golden());
  const auto one = Potential::constant(g, 0.0);
  for (const auto& w : g.enumerate_words(5)) EXPECT_EQ(birkhoff_log_weight(g, one, w, Word{}), 0.0);
}

TEST(Birkhoff, MemoryTwoPeriodicClosure) {
  const auto s = Shift::full(2);
  const auto p = Potential::from_table(s, 2, {{{0, 0}, -1.0}, {{0, 1}, -2.0}, {{1, 0}, -0.5}, {{1, 1}, -3.0}});
  // Blocks 00, 01 and the wrapped 10.
  EXPECT_DOUBLE_EQ(birkhoff_log_weight(s, p, {0, 0, 1}, PeriodicClosure{}), -1.0 - 2.0 - 0.5);
  EXPECT_DOUBLE_EQ(birkhoff_log_weight(s, p, {0, 0, 1}, Word{1}), -1.0 - 2.0 - 3.0);
}

TEST(Birkhoff, InadmissibleContext) {
  const auto g = Shift::validate(oracle::golden());
  const auto p = Potential::from_table(g, 2, {{{0, 0}, 0.0}, {{0, 1}, 0.0}, {{1, 0}, 0.0}});
  EXPECT_EQ(thrown_kind([&] { birkhoff_log_weight(g, p, {0, 1}, Word{1}); }), "InadmissibleContext");
  EXPECT_EQ(thrown_kind([&] { birkhoff_log_weight(g, p, {1, 0, 1}, PeriodicClosure{}); }), "InadmissibleContext");
  EXPECT_EQ(thrown_kind([&] { birkhoff_log_weight(g, p, {0, 1}, Word{}); }), "InadmissibleContext");
}

TEST(Partition, Examples) {
  for (int m = 2; m <= 4; ++m) {
    const auto s = Shift::full(m);
    const auto one = Potential::constant(s, 0.0);
    for (int n = 1; n <= 8; ++n) EXPECT_NEAR(partition_function(s, one, 0, n), (n - 1) * std::log(m), 1e-12);
  }
  const auto g = Shift::validate(oracle::golden());
  EXPECT_NEAR(std::exp(partition_function(g, Potential::constant(g, 0.0), 0, 3)),
              static_cast<double>(oracle::int_power(oracle::golden(), 3)[0][0]), 1e-12);
  EXPECT_NEAR(std::exp(partition_function(g, Potential::constant(g, 0.0), 0, 3)), 3.0, 1e-12);
  const auto s2 = Shift::full(2);
  for (int n = 1; n <= 10; ++n)
    EXPECT_NEAR(partition_function(s2, Potential::constant(s2, std::log(0.5)), 1, n), std::log(0.5), 1e-12);
}

TEST(Partition, EmptyGivesNegativeInfinity) {
  const auto flip = Shift::validate({{0, 1}, {1, 0}});
  EXPECT_EQ(partition_function(flip, Potential::constant(flip, 0.0), 0, 3), kNegInf);
  EXPECT_NEAR(partition_function(flip, Potential::constant(flip, 0.0), 0, 4), 0.0, 1e-15);
}

TEST(Partition, MatchesEnumerationOracle) {
  std::mt19937_64 rng(11);
  const std::vector<oracle::Matrix> shifts{oracle::golden(), oracle::full(2), oracle::full(3),
                                           {{0, 1, 1}, {1, 0, 1}, {1, 1, 1}}};
  for (const auto& a : shifts) {
    const auto s = Shift::validate(a);
    for (int k = 1; k <= 3; ++k) {
      const auto table = random_table(s, k, rng);
      const auto p = Potential::from_table(s, k, table);
      for (int letter = 0; letter < s.alphabet_size(); ++letter)
        for (int n = 1; n <= (a.size() > 2 ? 9 : 12); ++n) {
          const double z = oracle::partition(a, table, k, letter, n);
          const double got = partition_function(s, p, letter, n);
          if (z == 0.0)
            EXPECT_EQ(got, kNegInf);
          else
            EXPECT_NEAR(got, std::log(z), 1e-11) << "k=" << k << " n=" << n;
        }
    }
  }
}

TEST(Transfer, FullShiftUniformIsStochastic) {
  for (int m = 2; m <= 4; ++m) {
    const auto s = Shift::full(m);
    const auto tm = transfer_matrix(s, Potential::constant(s, -std::log(m)));
    const Eigen::MatrixXd d(tm.matrix);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) EXPECT_NEAR(d(i, j), 1.0 / m, 1e-15);
  }
}

TEST(Transfer, GoldenIsTransposePattern) {
  const auto g = Shift::validate(oracle::golden());
  const Eigen::MatrixXd d(transfer_matrix(g, Potential::constant(g, 0.0)).matrix);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_EQ(d(i, j), oracle::golden()[j][i]);
}

TEST(Eigen, Examples) {
  const auto s = Shift::full(3);
  const auto e = leading_eigen(transfer_matrix(s, Potential::constant(s, -std::log(3.0))).matrix);
  EXPECT_NEAR(e.lambda, 1.0, 1e-12);
  for (double h : e.right) EXPECT_NEAR(h, e.right[0], 1e-12);
  const auto g = Shift::validate(oracle::golden());
  const auto eg = leading_eigen(transfer_matrix(g, Potential::constant(g, 0.0)).matrix);
  EXPECT_NEAR(eg.lambda, kGolden, 1e-10);
  double dot = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < eg.left.size(); ++i) {
    EXPECT_GT(eg.left[i], 0.0);
    EXPECT_GT(eg.right[i], 0.0);
    dot += eg.left[i] * eg.right[i];
    sum += eg.left[i];
  }
  EXPECT_NEAR(dot, 1.0, 1e-12);
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Eigen, NonPrimitiveFails) {
  // Not irreducible: letter 1 never returns to 0.
  const auto s = Shift::validate({{1, 1}, {0, 1}});
  EXPECT_EQ(thrown_kind([&] { leading_eigen(transfer_matrix(s, Potential::constant(s, 0.0)).matrix, 1e-13, 2000); }),
            "NoConvergence");
}

TEST(Normalize, UniformUnchanged) {
  const auto s = Shift::full(4);
  const auto n = normalize(s, Potential::constant(s, -std::log(4.0)));
  for (double v : n.log_weights()) EXPECT_NEAR(v, -std::log(4.0), 1e-12);
}

TEST(Normalize, GoldenMatchesEigenData) {
  const auto g = Shift::validate(oracle::golden());
  const auto n = normalize(g, Potential::constant(g, 0.0));
  ASSERT_EQ(n.memory(), 2);
  // Parry: phi'(ij...) = h_j / (lambda h_i) with h = (lambda, 1) on letters.
  const double h[2] = {kGolden, 1.0};
  for (std::size_t b = 0; b < n.blocks().size(); ++b) {
    const Word& w = n.blocks().block(b);
    EXPECT_NEAR(std::exp(n.log_weight(b)), h[w[0]] / (kGolden * h[w[1]]), 1e-12);
  }
  const auto tm = transfer_matrix(g, n);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(tm.matrix.rows());
  EXPECT_LT((tm.matrix * ones - ones).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(leading_eigen(tm.matrix).lambda, 1.0, 1e-10);
}

TEST(Normalize, IdempotentAndPressureZero) {
  std::mt19937_64 rng(5);
  for (const auto& a : {oracle::golden(), oracle::full(3)}) {
    const auto s = Shift::validate(a);
    for (int k = 1; k <= 3; ++k) {
      const auto n1 = normalize(s, Potential::from_table(s, k, random_table(s, k, rng)));
      const auto n2 = normalize(s, n1);
      ASSERT_EQ(n1.memory(), n2.memory());
      for (std::size_t i = 0; i < n1.log_weights().size(); ++i)
        EXPECT_NEAR(n1.log_weights()[i], n2.log_weights()[i], 1e-12);
      EXPECT_NEAR(pressure_estimate(s, n1, 0, 8, 16).eigenvalue_pressure, 0.0, 1e-9);
    }
  }
}

TEST(Gibbs, UniformCylinders) {
  const auto s = Shift::full(3);
  const GibbsMeasure mu(s, Potential::constant(s, -std::log(3.0)));
  for (int n = 1; n <= 4; ++n)
    for (const auto& w : s.enumerate_words(n)) EXPECT_NEAR(mu.cylinder(w), std::pow(3.0, -n), 1e-14);
}

TEST(Gibbs, GoldenParryMeasure) {
  const auto g = Shift::validate(oracle::golden());
  const GibbsMeasure mu(g, normalize(g, Potential::constant(g, 0.0)));
  EXPECT_NEAR(mu.cylinder({0}) + mu.cylinder({1}), 1.0, 1e-12);
  EXPECT_NEAR(mu.cylinder({0}), (5.0 + std::sqrt(5.0)) / 10.0, 1e-12);
  // Parry: mu([w]) = u_{w_1} v_{w_n} / lambda^{n-1}, with u = v = (lambda, 1) / norm.
  const double norm = kGolden * kGolden + 1.0;
  const double e[2] = {kGolden, 1.0};
  for (int n = 1; n <= 8; ++n)
    for (const auto& w : g.enumerate_words(n))
      EXPECT_NEAR(mu.cylinder(w), e[w.front()] * e[w.back()] / norm / std::pow(kGolden, n - 1), 1e-12);
}

TEST(Gibbs, ConsistentAndInvariant) {
  std::mt19937_64 rng(3);
  for (const auto& a : {oracle::golden(), oracle::full(3), oracle::Matrix{{0, 1, 1}, {1, 0, 1}, {1, 1, 1}}}) {
    const auto s = Shift::validate(a);
    for (int k = 1; k <= 3; ++k) {
      const GibbsMeasure mu(s, normalize(s, Potential::from_table(s, k, random_table(s, k, rng))));
      for (int n = 1; n <= 5; ++n)
        for (const auto& w : s.enumerate_words(n)) {
          double right = 0.0, left = 0.0;
          for (int b = 0; b < s.alphabet_size(); ++b) {
            Word wb = w, bw{b};
            wb.push_back(b);
            bw.insert(bw.end(), w.begin(), w.end());
            if (s.admissible(wb)) right += mu.cylinder(wb);
            if (s.admissible(bw)) left += mu.cylinder(bw);
          }
          EXPECT_NEAR(right, mu.cylinder(w), 1e-12);
          EXPECT_NEAR(left, mu.cylinder(w), 1e-12);  // shift invariance
        }
    }
  }
}

TEST(Gibbs, RequiresNormalizedPotential) {
  const auto g = Shift::validate(oracle::golden());
  EXPECT_EQ(thrown_kind([&] { GibbsMeasure(g, Potential::constant(g, 0.0)); }), "InvalidArgument");
}

TEST(Conformal, UniformIsExact) {
  const auto s = Shift::full(2);
  const auto rep = conformal_check(s, normalize(s, Potential::constant(s, -std::log(2.0))), 6);
  EXPECT_NEAR(rep.max_ratio, 1.0, 1e-12);
  EXPECT_EQ(rep.violations, 0u);
}

TEST(Conformal, GoldenAndRandomMemoryTwo) {
  const auto g = Shift::validate(oracle::golden());
  const auto ng = normalize(g, Potential::constant(g, 0.0));
  const auto rg = conformal_check(g, ng, 6);
  EXPECT_EQ(rg.violations, 0u);
  EXPECT_LE(rg.max_ratio, std::exp(variation_constants(g, ng, nullptr, 1).log_c[0]) * (1 + 1e-12));

  std::mt19937_64 rng(17);
  const auto s = Shift::full(3);
  const auto n2 = normalize(s, Potential::from_table(s, 2, random_table(s, 2, rng)));
  const auto r2 = conformal_check(s, n2, 5);
  EXPECT_EQ(r2.violations, 0u);
  EXPECT_LE(r2.max_ratio, std::exp(variation_constants(s, n2, nullptr, 2).log_c[1]) * (1 + 1e-12));
}

TEST(GibbsInequality, BoundCkOnFullShiftsAndGoldenMean) {
  std::mt19937_64 rng(23);
  for (int m = 2; m <= 3; ++m) {
    const auto s = Shift::full(m);
    for (int k = 1; k <= 3; ++k) {
      const auto n = normalize(s, Potential::from_table(s, k, random_table(s, k, rng)));
      const auto rep = gibbs_check(s, n, 8);
      EXPECT_EQ(rep.violations, 0u) << "m=" << m << " k=" << k;
    }
  }
  const auto g = Shift::validate(oracle::golden());
  EXPECT_EQ(gibbs_check(g, normalize(g, Potential::constant(g, 0.0)), 8).violations, 0u);
}

TEST(GibbsInequality, GeneralBoundDividesByLetterImageMass) {
  // Off the full shift, C_k alone can fail; C_k / min_a mu(theta[a]) always works.
  std::mt19937_64 rng(29);
  const auto g = Shift::validate(oracle::golden());
  for (int trial = 0; trial < 5; ++trial) {
    const auto n = normalize(g, Potential::from_table(g, 2, random_table(g, 2, rng)));
    const GibbsMeasure mu(g, n);
    const double ck = std::exp(variation_constants(g, n, nullptr, 2).log_c[1]);
    const double low = std::min(mu.image_of_letter(0), mu.image_of_letter(1));
    EXPECT_EQ(gibbs_check(g, n, 8, ck / low).violations, 0u);
  }
}

TEST(Variation, MemoryOneHasNoDistortion) {
  std::mt19937_64 rng(31);
  const auto s = Shift::full(3);
  const auto rep = variation_constants(s, Potential::from_table(s, 1, random_table(s, 1, rng)), nullptr, 6);
  for (double c : rep.log_c) EXPECT_EQ(c, 0.0);
}

TEST(Variation, StabilizesAtMemory) {
  std::mt19937_64 rng(37);
  for (const auto& a : {oracle::golden(), oracle::full(3)}) {
    const auto s = Shift::validate(a);
    for (int k = 2; k <= 3; ++k) {
      const auto rep = variation_constants(s, Potential::from_table(s, k, random_table(s, k, rng)), nullptr, 7);
      for (int n = k; n <= 7; ++n) EXPECT_EQ(rep.log_c[n - 1], rep.log_c[k - 1]);
      EXPECT_GE(rep.log_c[0], 0.0);
    }
  }
}

TEST(Variation, SymmetryDefect) {
  const auto s = Shift::full(4);  // a, b, A, B
  const auto inv = Involution::validate(s, {2, 3, 0, 1});
  const auto sym = Potential::from_values(s, 1, {-1.0, -2.0, -1.0, -2.0});
  for (double d : variation_constants(s, sym, &inv, 6, true).log_d) EXPECT_NEAR(d, 0.0, 1e-14);
  const auto asym = Potential::from_values(s, 1, {std::log(0.4), std::log(0.2), std::log(0.2), std::log(0.2)});
  const auto rep = variation_constants(s, asym, &inv, 6, true);
  for (int n = 1; n <= 6; ++n) EXPECT_NEAR(rep.log_d[n - 1], n * std::log(2.0), 1e-12);
  EXPECT_EQ(thrown_kind([&] { variation_constants(s, asym, nullptr, 3, true); }), "InvolutionMissing");
}

TEST(Pressure, FullShiftsBothMethods) {
  for (int m = 2; m <= 4; ++m) {
    const auto s = Shift::full(m);
    const auto est = pressure_estimate(s, Potential::constant(s, 0.0), 0, 8, 16);
    EXPECT_NEAR(est.eigenvalue_pressure, std::log(m), 1e-9);
    EXPECT_NEAR(est.orbit_slope, std::log(m), 1e-9);
    EXPECT_LE(est.discrepancy, 1e-6);
    for (const auto& [n, v] : est.samples) EXPECT_NEAR(v, (n - 1) * std::log(m) / n, 1e-12);
  }
}

TEST(Pressure, GoldenMean) {
  const auto g = Shift::validate(oracle::golden());
  const auto one = Potential::constant(g, 0.0);
  for (int a = 0; a < 2; ++a) {
    const auto est = pressure_estimate(g, one, a, 8, 16);
    EXPECT_NEAR(est.eigenvalue_pressure, std::log(kGolden), 1e-9);
    EXPECT_NEAR(est.eigenvalue_pressure, 0.4812, 5e-5);
    // The fitted slope is the least-squares slope of log (A^n)_aa over the window.
    std::vector<double> xs, ys;
    for (int n = 8; n <= 16; ++n) {
      xs.push_back(n);
      ys.push_back(std::log(static_cast<double>(oracle::int_power(oracle::golden(), n)[a][a])));
    }
    EXPECT_NEAR(est.orbit_slope, slope(xs, ys), 1e-12);
    // (A^n)_aa = lambda^n + O(lambda^-n): the slope is within 1e-4 of log lambda,
    // but not within 1e-6.
    EXPECT_LT(est.discrepancy, 1e-4);
  }
}

TEST(Pressure, NormalizedIsZero) {
  std::mt19937_64 rng(41);
  const auto s = Shift::validate({{0, 1, 1}, {1, 0, 1}, {1, 1, 1}});
  const auto n = normalize(s, Potential::from_table(s, 2, random_table(s, 2, rng)));
  EXPECT_NEAR(pressure_estimate(s, n, 0, 8, 16).eigenvalue_pressure, 0.0, 1e-9);
}

TEST(Pressure, RejectsNonMixing) {
  const auto flip = Shift::validate({{0, 1}, {1, 0}});
  EXPECT_EQ(thrown_kind([&] { pressure_estimate(flip, Potential::constant(flip, 0.0), 0, 8, 16); }), "NotMixing");
}
