#pragma once

// The Kesten side: the symmetrized word-weight measure m_n of a symmetric
// extension and its convolution operator on l^2(G), return-probability
// spectral radius estimates, co-growth counts and Folner set search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kesten/error.hpp"
#include "kesten/extension.hpp"
#include "kesten/groups.hpp"
#include "kesten/potential.hpp"
#include "kesten/sft.hpp"

namespace kesten {

template <GroupBackend G>
struct KestenWalk {
  using element = typename G::element;
  std::map<element, double> weights;  // m_n(g), sums to 1
  Word anchor;                        // a, with psi(a) = id
  Word xi;                            // xi is the periodic point (xi xi xi ...) in [a^dagger]
  int n = 0;
  double log_total = 0.0;             // log P_n(1)
  std::size_t words = 0;              // |W^n_{a, a^dagger}|

  double weight(const element& g) const {
    auto it = weights.find(g);
    return it == weights.end() ? 0.0 : it->second;
  }
};

/// Shortest closed word whose periodic repetition starts with `prefix`
/// (lexicographically least among the shortest).
inline Word default_periodic_point(const Shift& shift, const Word& prefix, int max_len = 64) {
  for (int len = 1; len <= max_len; ++len) {
    std::vector<Word> cands;
    if (len >= static_cast<int>(prefix.size())) {
      cands = shift.enumerate_words(len, prefix);
    } else {
      Word w(prefix.begin(), prefix.begin() + len);
      bool periodic = true;
      for (std::size_t i = 0; i < prefix.size(); ++i) periodic = periodic && prefix[i] == w[i % len];
      if (periodic && shift.admissible(w)) cands.push_back(w);
    }
    for (const Word& w : cands)
      if (shift.closed(w)) return w;
  }
  throw Error(ErrorKind::EmptyWordSet, "no periodic point found in the anchor's dagger cylinder");
}

/// m_n(g) = (1 / P_n(1)) sum over v in W^n_{a, a^dagger} with psi(v) = g of
/// pi(xi, v) = (Phi_n(tau_v xi) + Phi_n(tau_{iota v} xi)) / 2, where
/// iota(a v') = a v'^dagger.
template <GroupBackend G>
KestenWalk<G> build_kesten_walk(const ExtensionSystem<G>& ext, const Word& anchor, int n,
                                std::optional<Word> xi_word = std::nullopt) {
  using E = typename G::element;
  if (!ext.symmetric()) throw Error(ErrorKind::NotSymmetric, "Kesten walk needs an involution");
  const Shift& shift = ext.shift();
  const Involution& inv = *ext.involution();
  if (!shift.admissible(anchor)) throw Error(ErrorKind::InadmissibleWord, "anchor word");
  if (!anchor.empty() && !(psi_n(ext, anchor) == ext.group().identity()))
    throw Error(ErrorKind::NotSymmetric, "anchor must satisfy psi(a) = id");
  if (n <= static_cast<int>(anchor.size()) && !(anchor.empty() && n >= 1))
    throw Error(ErrorKind::InvalidArgument, "n must exceed the anchor length");
  const Word anchor_dag = dagger_word(inv, anchor);
  Word xi = xi_word ? *xi_word : default_periodic_point(shift, anchor_dag);
  if (!shift.closed(xi)) throw Error(ErrorKind::InadmissibleWord, "xi word must close up");
  for (std::size_t i = 0; i < anchor_dag.size(); ++i)
    if (xi[i % xi.size()] != anchor_dag[i])
      throw Error(ErrorKind::InvalidArgument, "xi must lie in the cylinder of a^dagger");

  const int k = ext.potential().memory();
  Word tail(std::max(k - 1, 0));
  for (std::size_t i = 0; i < tail.size(); ++i) tail[i] = xi[i % xi.size()];

  const auto words = shift.enumerate_words(n, anchor, xi[0]);
  if (words.empty()) throw Error(ErrorKind::EmptyWordSet, "W^n_{a,a^dagger} is empty");
  std::map<Word, double> phi;
  for (const Word& v : words) phi.emplace(v, birkhoff_log_weight(shift, ext.potential(), v, tail));

  auto iota = [&](const Word& v) {
    Word rest(v.begin() + static_cast<std::ptrdiff_t>(anchor.size()), v.end());
    Word out = anchor;
    const Word d = dagger_word(inv, rest);
    out.insert(out.end(), d.begin(), d.end());
    return out;
  };

  std::map<E, std::vector<double>> by_element;  // log pi values per psi(v)
  for (const Word& v : words) {
    const Word iv = iota(v);
    auto it = phi.find(iv);
    if (it == phi.end()) throw Error(ErrorKind::NotSymmetric, "iota does not preserve W^n_{a,a^dagger}");
    const double log_pi = log_add(phi.at(v), it->second) - std::log(2.0);
    by_element[psi_n(ext, v)].push_back(log_pi);
  }
  // Sorting before summation makes m_n(g) and m_n(g^-1) bitwise equal: iota
  // pairs their summands one to one with identical values.
  std::map<E, double> log_mass;
  double log_total = kNegInf;
  std::vector<double> all;
  for (auto& [g, vals] : by_element) {
    std::sort(vals.begin(), vals.end());
    double s = kNegInf;
    for (double x : vals) s = log_add(s, x);
    log_mass.emplace(g, s);
    all.push_back(s);
  }
  std::sort(all.begin(), all.end());
  for (double x : all) log_total = log_add(log_total, x);

  KestenWalk<G> walk;
  walk.anchor = anchor;
  walk.xi = xi;
  walk.n = n;
  walk.log_total = log_total;
  walk.words = words.size();
  for (const auto& [g, s] : log_mass) walk.weights.emplace(g, std::exp(s - log_total));
  return walk;
}

/// max over gamma, gamma* in the ball of |<1_gamma, P 1_gamma*> - <P 1_gamma, 1_gamma*>|
/// for P f(gamma) = sum_g f(gamma g^-1) m(g).
template <GroupBackend G>
double self_adjoint_check(const G& group, const std::map<typename G::element, double>& weights, int ball_radius,
                          const std::vector<typename G::element>& generators) {
  const auto elems = ball(group, ball_radius, generators);
  auto m = [&](const typename G::element& g) {
    auto it = weights.find(g);
    return it == weights.end() ? 0.0 : it->second;
  };
  double worst = 0.0;
  for (const auto& x : elems)
    for (const auto& y : elems) {
      const double lhs = m(group.multiply(group.inverse(y), x));  // <1_x, P 1_y> = (P 1_y)(x)
      const double rhs = m(group.multiply(group.inverse(x), y));  // <P 1_x, 1_y> = (P 1_x)(y)
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  return worst;
}

struct SpectralEstimate {
  std::vector<double> rho_hat;      // index k-1: <1_id, P^2k 1_id>^(1/2k)
  std::vector<double> ratio_bound;  // index k-1: sqrt(a_k / a_{k-1}), a_0 = 1
  double lower_bound = 0.0;         // certified lower bound for rho(P)
  bool monotone = true;
  std::string method;               // "ball", "exact" or "radial"
  double max_loss = 0.0;            // mass dropped by truncation at step k_max
};

namespace detail {

inline SpectralEstimate finish_spectral(const std::vector<double>& a, std::string method) {
  SpectralEstimate est;
  est.method = std::move(method);
  double prev = 0.0;
  for (std::size_t k = 1; k < a.size(); ++k) {
    const double rho = a[k] > 0.0 ? std::exp(std::log(a[k]) / (2.0 * static_cast<double>(k))) : 0.0;
    if (rho < prev * (1.0 - 1e-12)) est.monotone = false;
    prev = std::max(prev, rho);
    est.rho_hat.push_back(rho);
    est.ratio_bound.push_back(a[k - 1] > 0.0 ? std::sqrt(a[k] / a[k - 1]) : 0.0);
  }
  if (est.rho_hat.empty()) return est;
  // a_k / a_{k-1} increases to rho^2 only for untruncated powers.
  est.lower_bound = est.method == "ball" ? est.rho_hat.back() : std::max(est.rho_hat.back(), est.ratio_bound.back());
  return est;
}

}  // namespace detail

/// a_k = ||P^k 1_id||^2 = <1_id, P^2k 1_id> from convolution powers of m,
/// truncated to a word-length ball when a radius is given.
template <GroupBackend G>
SpectralEstimate spectral_radius_estimate(const G& group, const std::map<typename G::element, double>& weights,
                                          int k_max, std::optional<int> ball_radius,
                                          const std::vector<typename G::element>& generators,
                                          std::size_t cap = 5'000'000) {
  using E = typename G::element;
  if constexpr (std::is_same_v<G, FreeGroup>) {
    // Simple random walk on the free basis: exact word-length reduction.
    const int r = group.rank();
    bool srw = static_cast<int>(weights.size()) == 2 * r;
    for (const auto& [g, w] : weights)
      srw = srw && g.letters.size() == 1 && std::abs(w - 1.0 / (2.0 * r)) <= 1e-15;
    if (srw) {
      const auto returns = free_radial_returns(r, 2 * k_max);
      std::vector<double> a;
      for (int k = 0; k <= k_max; ++k) a.push_back(returns[2 * k]);
      return detail::finish_spectral(a, "radial");
    }
  }
  std::optional<DistanceMap<G>> in_ball;
  if (ball_radius) in_ball = ball_distances(group, *ball_radius, generators, cap);
  std::unordered_map<E, double> q{{group.identity(), 1.0}};
  std::vector<double> a{1.0};
  for (int k = 1; k <= k_max; ++k) {
    std::unordered_map<E, double> nxt;
    for (const auto& [h, v] : q)
      for (const auto& [g, w] : weights) {
        E x = group.multiply(h, g);
        if (in_ball && !in_ball->contains(x)) continue;
        nxt[std::move(x)] += v * w;
      }
    if (nxt.size() > cap) throw Error(ErrorKind::BallTooLarge, "convolution support exceeds cap");
    q = std::move(nxt);
    std::vector<std::pair<E, double>> ordered(q.begin(), q.end());
    std::sort(ordered.begin(), ordered.end());
    double s = 0.0;
    for (const auto& p : ordered) s += p.second * p.second;
    a.push_back(s);
  }
  SpectralEstimate est = detail::finish_spectral(a, ball_radius ? "ball" : "exact");
  double mass = 0.0;
  for (const auto& [h, v] : q) mass += v;
  est.max_loss = std::max(0.0, 1.0 - mass);
  return est;
}

template <GroupBackend G>
SpectralEstimate spectral_radius_estimate(const G& group, const KestenWalk<G>& walk, int k_max,
                                          std::optional<int> ball_radius,
                                          const std::vector<typename G::element>& generators) {
  return spectral_radius_estimate(group, walk.weights, k_max, ball_radius, generators);
}

/// c_n = number of freely reduced words of length n in F_r mapped to the
/// identity, n = 1..n_max (index n-1).
template <GroupBackend G>
std::vector<std::uint64_t> cogrowth_series(const Homomorphism<G>& hom, int n_max, std::size_t cap = 20'000'000) {
  using E = typename G::element;
  const G& target = hom.target();
  const int letters = 2 * hom.domain().rank();
  const E id = target.identity();
  // state (last letter, image) -> count
  std::vector<std::unordered_map<E, std::uint64_t>> cur(letters);
  for (int x = 0; x < letters; ++x) cur[x][hom.image(x)] += 1;
  std::vector<std::uint64_t> out;
  for (int n = 1; n <= n_max; ++n) {
    if (n > 1) {
      std::vector<std::unordered_map<E, std::uint64_t>> nxt(letters);
      std::size_t states = 0;
      for (int x = 0; x < letters; ++x)
        for (const auto& [g, c] : cur[x])
          for (int y = 0; y < letters; ++y) {
            if (y == hom.domain().inverse_letter(x)) continue;
            auto& slot = nxt[y][target.multiply(g, hom.image(y))];
            if (__builtin_add_overflow(slot, c, &slot))
              throw Error(ErrorKind::InvalidArgument, "co-growth count overflows 64 bits");
          }
      for (const auto& m : nxt) states += m.size();
      if (states > cap) throw Error(ErrorKind::BallTooLarge, "co-growth state count exceeds cap");
      cur = std::move(nxt);
    }
    std::uint64_t c = 0;
    for (int x = 0; x < letters; ++x) {
      auto it = cur[x].find(id);
      if (it != cur[x].end()) c += it->second;
    }
    out.push_back(c);
  }
  return out;
}

template <GroupBackend G>
struct FolnerCertificate {
  std::vector<typename G::element> set;
  std::vector<typename G::element> K;
  double defect = 0.0;  // sum_{h in K} |A h symdiff A| / |A|
  std::string family;
};

struct FolnerTraceRow {
  std::string family;
  std::size_t size = 0;
  double defect = 0.0;
};

template <GroupBackend G>
struct FolnerResult {
  bool found = false;
  FolnerCertificate<G> best;  // the certificate, or the best candidate seen
  std::size_t candidates = 0;
  std::vector<FolnerTraceRow> trace;  // every candidate in search order
};

struct FolnerBudget {
  std::size_t max_set_size = 200'000;
  int max_radius = 8;
  int greedy_steps = 256;
};

/// sum_{h in K} |A h symdiff A| / |A|; |A h| = |A| so each term is 2 |A h \ A|.
template <GroupBackend G>
double folner_defect(const G& group, const std::vector<typename G::element>& set,
                     const std::vector<typename G::element>& K) {
  if (set.empty()) throw Error(ErrorKind::InvalidArgument, "Folner set must be nonempty");
  std::unordered_set<typename G::element> in(set.begin(), set.end());
  std::size_t out = 0;
  for (const auto& a : set)
    for (const auto& h : K)
      if (!in.contains(group.multiply(a, h))) ++out;
  return 2.0 * static_cast<double>(out) / static_cast<double>(in.size());
}

namespace detail {

inline std::vector<ZdElement> zd_box(const ZdGroup& group, std::int64_t len) {
  const int d = group.dim();
  std::vector<ZdElement> box;
  std::vector<std::int64_t> c(d, 0);
  while (true) {
    box.push_back(group.make(c));
    int i = d - 1;
    while (i >= 0 && ++c[i] == len) c[i--] = 0;
    if (i < 0) break;
  }
  return box;
}

/// Defect of [0, len)^d: a + h leaves the box for len^d - prod (len - |h_i|)+ points a.
inline double zd_box_defect(const std::vector<ZdElement>& K, std::int64_t len) {
  double vol = 1.0;
  for (std::size_t i = 0; i < (K.empty() ? 0 : K[0].coords.size()); ++i) vol *= static_cast<double>(len);
  double out = 0.0;
  for (const auto& h : K) {
    double inside = 1.0;
    for (auto x : h.coords) inside *= static_cast<double>(std::max<std::int64_t>(len - (x < 0 ? -x : x), 0));
    out += vol - inside;
  }
  return 2.0 * out / vol;
}

/// Feeds lamplighter boxes or the whole finite group to `visit` until it
/// returns true or the budget ends.
template <GroupBackend G, class Visit>
void folner_boxes(const G& group, const FolnerBudget& budget, Visit visit) {
  if constexpr (std::is_same_v<G, LamplighterGroup>) {
    // {(f, t) : supp f in [0, L), t in [0, L)}
    for (int len = 1; len < 24; ++len) {
      const double size = static_cast<double>(len) * std::pow(2.0, len);
      if (size > static_cast<double>(budget.max_set_size)) break;
      std::vector<LampElement> box;
      for (std::uint32_t mask = 0; mask < (1u << len); ++mask) {
        std::vector<std::int64_t> lamps;
        for (int i = 0; i < len; ++i)
          if (mask & (1u << i)) lamps.push_back(i);
        for (int t = 0; t < len; ++t) box.push_back({lamps, t});
      }
      if (visit(std::move(box))) return;
    }
  } else if constexpr (std::is_same_v<G, FiniteGroup>) {
    visit(group.elements());
  }
}

inline std::string box_family_name(bool zd, bool lamp) {
  if (zd) return "box";
  if (lamp) return "lamp-box";
  return "whole-group";
}

}  // namespace detail

/// Searches boxes (Z^d intervals/boxes, lamplighter boxes, the whole finite
/// group), then word-length balls, then greedy boundary-minimizing growth.
template <GroupBackend G>
FolnerResult<G> folner_search(const G& group, const std::vector<typename G::element>& K, double epsilon,
                              const FolnerBudget& budget = {}) {
  using E = typename G::element;
  if (epsilon <= 0.0) throw Error(ErrorKind::InvalidArgument, "epsilon must be positive");
  if (!inverse_closed(group, K)) throw Error(ErrorKind::InvalidArgument, "K must be closed under inverses");
  FolnerResult<G> res;
  res.best.defect = std::numeric_limits<double>::infinity();
  res.best.K = K;
  auto consider = [&](std::vector<E> set, const std::string& family) {
    ++res.candidates;
    const double d = folner_defect(group, set, K);
    res.trace.push_back({family, set.size(), d});
    if (d < res.best.defect) {
      res.best.defect = d;
      res.best.set = std::move(set);
      res.best.family = family;
    }
    if (res.best.defect <= epsilon) res.found = true;
    return res.found;
  };

  const std::string box_name =
      detail::box_family_name(std::is_same_v<G, ZdGroup>, std::is_same_v<G, LamplighterGroup>);
  if constexpr (std::is_same_v<G, ZdGroup>) {
    // Box defects come from the closed form; only the chosen box is built and
    // its defect recomputed from elements.
    std::int64_t best_len = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t len = 1;; ++len) {
      const double size = std::pow(static_cast<double>(len), group.dim());
      if (size > static_cast<double>(budget.max_set_size)) break;
      const double d = detail::zd_box_defect(K, len);
      ++res.candidates;
      res.trace.push_back({box_name, static_cast<std::size_t>(size), d});
      if (d < best) {
        best = d;
        best_len = len;
      }
      if (d <= epsilon) break;
    }
    if (best_len > 0) {
      res.best.set = detail::zd_box(group, best_len);
      res.best.defect = folner_defect(group, res.best.set, K);
      res.best.family = box_name;
      if (res.best.defect <= epsilon) {
        res.found = true;
        return res;
      }
    }
  } else {
    detail::folner_boxes(group, budget, [&](std::vector<E> box) { return consider(std::move(box), box_name); });
    if (res.found) return res;
  }

  std::vector<E> gens;
  for (const auto& h : K)
    if (!(h == group.identity())) gens.push_back(h);
  std::size_t last_size = 0;
  for (int r = 0; r <= budget.max_radius; ++r) {
    std::vector<E> b;
    try {
      b = ball(group, r, gens, budget.max_set_size);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::BallTooLarge) throw;
      break;
    }
    if (b.size() == last_size && r > 0) break;  // ball stabilized (finite subgroup)
    last_size = b.size();
    if (consider(std::move(b), "ball")) return res;
  }

  // Greedy growth from {id}: add the boundary element that minimizes the
  // number of pairs (a, h) with a h outside the set; ties go to the smaller element.
  std::unordered_set<E> in{group.identity()};
  std::vector<E> order{group.identity()};
  std::size_t boundary = 0;
  for (const auto& h : K)
    if (!in.contains(group.multiply(group.identity(), h))) ++boundary;
  for (int step = 0; step < budget.greedy_steps && order.size() < budget.max_set_size; ++step) {
    std::vector<E> cands;
    for (const auto& a : order)
      for (const auto& h : K) {
        E x = group.multiply(a, h);
        if (!in.contains(x)) cands.push_back(std::move(x));
      }
    if (cands.empty()) break;
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    std::optional<E> pick;
    long long best_delta = 0;
    for (const auto& x : cands) {
      long long delta = 0;
      for (const auto& h : K) {
        const E xh = group.multiply(x, h);
        if (!(xh == x) && !in.contains(xh)) ++delta;
        if (in.contains(group.multiply(x, group.inverse(h)))) --delta;
      }
      if (!pick || delta < best_delta) {
        pick = x;
        best_delta = delta;
      }
    }
    in.insert(*pick);
    order.push_back(*pick);
    boundary = static_cast<std::size_t>(static_cast<long long>(boundary) + best_delta);
    const double d = 2.0 * static_cast<double>(boundary) / static_cast<double>(order.size());
    ++res.candidates;
    res.trace.push_back({"greedy", order.size(), d});
    if (d < res.best.defect) {
      res.best.defect = folner_defect(group, order, K);
      res.best.set = order;
      res.best.family = "greedy";
    }
    if (res.best.defect <= epsilon) {
      res.found = true;
      return res;
    }
  }
  return res;
}

template <GroupBackend G>
struct FolnerSequenceResult {
  std::vector<FolnerCertificate<G>> certificates;
  std::optional<int> failed_stage;  // 1-based
  double failed_best_defect = 0.0;
};

/// B_{i+1} is a (K_i u B_i, eps_i)-Folner set; the constraint set is closed
/// under inverses before each search.
template <GroupBackend G>
FolnerSequenceResult<G> folner_sequence(const G& group, const std::vector<std::vector<typename G::element>>& K_schedule,
                                        const std::vector<double>& eps_schedule, const FolnerBudget& budget = {}) {
  using E = typename G::element;
  if (K_schedule.size() != eps_schedule.size())
    throw Error(ErrorKind::InvalidArgument, "K and epsilon schedules differ in length");
  FolnerSequenceResult<G> out;
  std::vector<E> previous;
  for (std::size_t i = 0; i < K_schedule.size(); ++i) {
    std::vector<E> K = K_schedule[i];
    K.insert(K.end(), previous.begin(), previous.end());
    const std::size_t base = K.size();
    for (std::size_t j = 0; j < base; ++j) K.push_back(group.inverse(K[j]));
    std::sort(K.begin(), K.end());
    K.erase(std::unique(K.begin(), K.end()), K.end());
    auto res = folner_search(group, K, eps_schedule[i], budget);
    if (!res.found) {
      out.failed_stage = static_cast<int>(i) + 1;
      out.failed_best_defect = res.best.defect;
      return out;
    }
    previous = res.best.set;
    out.certificates.push_back(std::move(res.best));
  }
  return out;
}

}  // namespace kesten
