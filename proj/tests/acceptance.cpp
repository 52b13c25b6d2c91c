// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "kesten/amenability.hpp"
#include "oracles.hpp"

using namespace kesten;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.require(false, std::string("threw ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.require(secs < budget_s, "runtime budget");
  if (!out.pass) ++failures;
  std::printf("%s %s (%.3f s, budget %.0f s)%s\n", out.pass ? "PASS" : "FAIL", name, secs, budget_s,
              out.detail.str().c_str());
  std::fflush(stdout);
}

std::map<Word, double> random_table(const Shift& s, int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 1.0);
  std::map<Word, double> t;
  for (const auto& w : s.enumerate_words(k)) t[w] = u(rng);
  return t;
}

Potential log_probabilities(const Shift& s, const std::vector<double>& p) {
  std::vector<double> lw;
  for (double x : p) lw.push_back(std::log(x));
  return Potential::from_values(s, 1, lw);
}

ExtensionSystem<ZdGroup> z_extension(double p0 = 0.5) {
  const auto s = Shift::full(2);
  const ZdGroup z(1);
  return {s, log_probabilities(s, {p0, 1.0 - p0}), z, {z.make({1}), z.make({-1})}, Involution::validate(s, {1, 0})};
}

// Letters x, y, X, Y.
ExtensionSystem<ZdGroup> z2_extension() {
  const auto s = Shift::full(4);
  const ZdGroup z(2);
  return {s, Potential::constant(s, std::log(0.25)), z, {z.make({1, 0}), z.make({0, 1}), z.make({-1, 0}), z.make({0, -1})},
          Involution::validate(s, {2, 3, 0, 1})};
}

// Letters a, b, A, B.
ExtensionSystem<FreeGroup> f2_extension(const std::vector<double>& p = {0.25, 0.25, 0.25, 0.25}) {
  const auto s = Shift::full(4);
  const FreeGroup f(2);
  return {s, log_probabilities(s, p), f, f.standard_generators(), Involution::validate(s, {2, 3, 0, 1})};
}

// Lazy lamplighter walk: stay, toggle, step right, step left.
ExtensionSystem<LamplighterGroup> lamp_extension() {
  const auto s = Shift::full(4);
  const LamplighterGroup l;
  return {s, log_probabilities(s, {0.5, 0.25, 0.125, 0.125}), l, {l.identity(), l.toggle(), l.step(1), l.step(-1)},
          Involution::validate(s, {0, 1, 3, 2})};
}

template <GroupBackend G>
bool exactly_symmetric(const G& group, const KestenWalk<G>& walk) {
  for (const auto& [g, w] : walk.weights)
    if (w != walk.weight(group.inverse(g))) return false;
  return true;
}

template <GroupBackend G>
void verdict_is(Outcome& out, const char* label, const Verdict& v, VerdictKind want) {
  out.detail << " " << label << "=" << to_string(v.kind) << " rate=" << v.rate << " loss=" << v.max_loss;
  out.require(v.kind == want, std::string(label) + " verdict");
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");

  criterion("pressure-exactness", 1.0, [](Outcome& out) {
    double worst_eig = 0.0, worst_orbit = 0.0;
    for (int m = 2; m <= 4; ++m) {
      const auto s = Shift::full(m);
      const auto est = pressure_estimate(s, Potential::constant(s, 0.0), 0, 8, 16);
      worst_eig = std::max(worst_eig, std::abs(est.eigenvalue_pressure - std::log(m)));
      worst_orbit = std::max(worst_orbit, std::abs(est.orbit_slope - std::log(m)));
    }
    const auto g = Shift::validate(oracle::golden());
    const double golden =
        std::abs(pressure_estimate(g, Potential::constant(g, 0.0), 0, 8, 16).eigenvalue_pressure -
                 std::log((1.0 + std::sqrt(5.0)) / 2.0));
    out.detail << " full-shift eig err=" << worst_eig << " orbit err=" << worst_orbit << " golden err=" << golden;
    out.require(worst_eig <= 1e-9, "eigenvalue pressure within 1e-9");
    out.require(worst_orbit <= 5e-3, "orbit fit within 5e-3");
    out.require(golden <= 1e-9, "golden mean within 1e-9");
  });

  criterion("gibbs-conformal", 10.0, [](Outcome& out) {
    std::mt19937_64 rng(23);
    std::size_t gibbs = 0, conformal = 0, cases = 0;
    auto check = [&](const Shift& s, const Potential& n) {
      gibbs += gibbs_check(s, n, 8).violations;
      conformal += conformal_check(s, n, 8).violations;
      ++cases;
    };
    for (int m = 2; m <= 3; ++m) {
      const auto s = Shift::full(m);
      for (int k = 1; k <= 3; ++k) check(s, normalize(s, Potential::from_table(s, k, random_table(s, k, rng))));
    }
    const auto g = Shift::validate(oracle::golden());
    check(g, normalize(g, Potential::constant(g, 0.0)));
    out.detail << " potentials=" << cases << " gibbs violations=" << gibbs << " conformal violations=" << conformal;
    out.require(gibbs == 0, "gibbs bound B = C_k");
    out.require(conformal == 0, "conformal bounds");
  });

  criterion("amenable-z-extension", 60.0, [](Outcome& out) {
    const auto z = z_extension();
    const auto series = return_weight_series(z, 40, 40);
    double worst = 0.0;
    for (const auto& s : series.samples)
      if (s.n % 2 == 0) worst = std::max(worst, std::abs(std::exp(s.log_r) - oracle::central_ratio(s.n / 2)));
      else out.require(s.log_r == kNegInf, "odd return weight vanishes");
    const auto v = amenability_verdict(series, 20, 40);
    out.detail << " binomial err=" << worst;
    out.require(worst <= 1e-15, "exact binomial returns");
    out.require(std::abs(v.rate) <= 0.01, "|rate| <= 0.01");
    verdict_is<ZdGroup>(out, "Z", v, VerdictKind::AmenableConsistent);
  });

  criterion("amenable-z2-extension", 60.0, [](Outcome& out) {
    const auto v = amenability_verdict(return_weight_series(z2_extension(), 24, 12), 12, 24);
    verdict_is<ZdGroup>(out, "Z2", v, VerdictKind::AmenableConsistent);
  });

  criterion("amenable-lamplighter-extension", 60.0, [](Outcome& out) {
    const auto v = amenability_verdict(return_weight_series(lamp_extension(), 40, 12), 20, 40);
    verdict_is<LamplighterGroup>(out, "lamplighter", v, VerdictKind::AmenableConsistent);
  });

  criterion("free-group-pressure-drop", 60.0, [](Outcome& out) {
    const auto v = amenability_verdict(radial_return_series(f2_extension(), 60), 20, 60);
    const double want = std::log(std::sqrt(3.0) / 2.0);
    out.detail << " target=" << want;
    verdict_is<FreeGroup>(out, "F2", v, VerdictKind::PressureDrop);
    out.require(std::abs(v.rate - want) <= 0.01, "rate within 0.01 of log(sqrt(3)/2)");
  });

  criterion("kesten-constants", 30.0, [](Outcome& out) {
    const ZdGroup z(1);
    const std::map<ZdElement, double> zs{{z.make({1}), 0.5}, {z.make({-1}), 0.5}};
    const auto ez = spectral_radius_estimate(z, zs, 20, std::nullopt, z.standard_generators());
    const double exact = std::pow(oracle::central_ratio(20), 1.0 / 40.0);
    out.detail << std::setprecision(10) << " Z rho_20=" << ez.rho_hat[19] << " exact=" << exact;
    out.require(std::abs(ez.rho_hat[19] - exact) <= 1e-6, "Z rho_20 within 1e-6");
    out.require(ez.monotone, "Z monotone");

    const FreeGroup f(2);
    std::map<FreeElement, double> fs;
    for (const auto& g : f.standard_generators()) fs[g] = 0.25;
    const auto ef = spectral_radius_estimate(f, fs, 60, std::nullopt, f.standard_generators());
    const double gap = std::sqrt(3.0) / 2.0 - ef.rho_hat[59];
    out.detail << " F2 rho_60=" << ef.rho_hat[59] << " gap=" << gap << " ratio_bound_60=" << ef.ratio_bound[59];
    out.require(ef.monotone, "F2 monotone");
    out.require(std::abs(gap) <= 0.02, "F2 rho_60 within 0.02 of sqrt(3)/2");
  });

  criterion("cogrowth", 30.0, [](Outcome& out) {
    const ZdGroup z2(2);
    const Homomorphism ab(2, z2, {z2.make({1, 0}), z2.make({0, 1})});
    const auto c = cogrowth_series(ab, 16);
    const double lhs = std::log(static_cast<double>(c[15])) / 16.0;
    const double rhs = std::log(3.0) - 2.2 * std::log(16.0) / 16.0;
    out.detail << " c_4=" << c[3] << " (1/16)log c_16=" << lhs << " bound=" << rhs;
    out.require(c[3] == 8, "c_4 = 8");
    out.require(lhs >= rhs, "growth bound at n = 16");
    bool rising = true;
    for (int n = 4; n <= 16; n += 2)
      rising = rising && std::log(static_cast<double>(c[n - 1])) / n > std::log(static_cast<double>(c[n - 3])) / (n - 2);
    out.require(rising, "c_n^(1/n) rising on even n");
    bool brute = true;
    for (int n = 1; n <= 12; ++n) brute = brute && c[n - 1] == oracle::cogrowth_abelian(2, {{1, 0}, {0, 1}}, n);
    out.require(brute, "DP equals brute force for n <= 12");
    const FreeGroup f2(2);
    const Homomorphism inj(2, f2, {f2.letter(0), f2.letter(1)});
    bool zero = true;
    for (auto x : cogrowth_series(inj, 12)) zero = zero && x == 0;
    out.require(zero, "injective hom has c_n = 0 for n <= 12");
  });

  criterion("folner", 30.0, [](Outcome& out) {
    const ZdGroup z(1), z2(2);
    const auto rz = folner_search(z, z.standard_generators(), 0.5);
    const auto rz2 = folner_search(z2, z2.standard_generators(), 0.5);
    const auto c = FiniteGroup::cyclic(6);
    const auto rc = folner_search(c, c.elements(), 0.5);
    const LamplighterGroup l;
    const auto rl = folner_search(l, l.standard_generators(), 0.5);
    const FreeGroup f(2);
    const auto rf = folner_search(f, f.standard_generators(), 0.5, {200'000, 8, 0});
    out.detail << " Z=" << rz.best.set.size() << "/" << rz.best.defect << " Z2=" << rz2.best.set.size() << "/"
               << rz2.best.defect << " C6=" << rc.best.set.size() << "/" << rc.best.defect
               << " lamplighter=" << rl.best.set.size() << "/" << rl.best.defect << " F2 best=" << rf.best.defect;
    out.require(rz.found && rz.best.family == "box", "Z interval");
    out.require(rz2.found && rz2.best.family == "box", "Z2 box");
    out.require(rc.found && rc.best.set.size() == 6, "finite whole group");
    out.require(rl.found && rl.best.defect <= 0.5, "lamplighter eps 0.5");
    out.require(!rf.found && rf.best.defect > 1.0, "F2 NotFound with defect > 1");
  });

  criterion("structural-invariants", 30.0, [](Outcome& out) {
    const auto z = z_extension();
    const auto f = f2_extension({0.1, 0.2, 0.3, 0.4});
    const auto l = lamp_extension();
    const auto wz = build_kesten_walk(z, {0, 1}, 6);
    const auto wf = build_kesten_walk(f, {}, 3);
    const auto wl = build_kesten_walk(l, {0}, 4);
    out.require(exactly_symmetric(z.group(), wz) && exactly_symmetric(f.group(), wf) &&
                    exactly_symmetric(l.group(), wl),
                "m_n symmetry exact");

    const double res = std::max({self_adjoint_check(z.group(), wz.weights, 4, z.group().standard_generators()),
                                 self_adjoint_check(f.group(), wf.weights, 4, f.group().standard_generators()),
                                 self_adjoint_check(l.group(), wl.weights, 4, l.group().standard_generators())});
    out.detail << " self-adjoint residual=" << res;
    out.require(res <= 1e-15, "self-adjoint residual <= 1e-15");

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const ExtensionOperator<ZdGroup> zop(z);
    const ExtensionOperator<FreeGroup> fop(f);
    const auto zball = ball(z.group(), 3, z.group().standard_generators());
    const auto fball = ball(f.group(), 2, f.group().standard_generators());
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      if (trial % 2 == 0) {
        FibreFunction<ZdGroup> fn;
        for (const auto& g : zball)
          if (u(rng) < 0.7) fn[g] = u(rng);
        if (fn.empty()) fn[zball[0]] = 1.0;
        worst = std::max(worst, lambda_k(zop, fn, 1 + static_cast<int>(rng() % 12)));
      } else {
        FibreFunction<FreeGroup> fn;
        for (const auto& g : fball)
          if (u(rng) < 0.7) fn[g] = u(rng);
        if (fn.empty()) fn[fball[0]] = 1.0;
        worst = std::max(worst, lambda_k(fop, fn, 1 + static_cast<int>(rng() % 6)));
      }
    }
    out.detail << " max Lambda_k=" << worst;
    out.require(worst <= 1.0 + 1e-12, "Lambda_k <= 1");

    // Every spectral run in this suite goes through the monotonicity assertion.
    const auto wf1 = build_kesten_walk(f, {}, 1);
    const bool monotone =
        spectral_radius_estimate(z.group(), wz.weights, 40, std::nullopt, z.group().standard_generators()).monotone &&
        spectral_radius_estimate(f.group(), wf1.weights, 6, std::nullopt, f.group().standard_generators()).monotone &&
        spectral_radius_estimate(l.group(), wl.weights, 12, 12, l.group().standard_generators()).monotone;
    out.require(monotone, "rho_hat monotone");
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
