#pragma once

// Group extensions T(x, g) = (theta x, g psi(x)) of a Shift with a cocycle
// constant on 1-cylinders, and the transfer operator they induce on
// functions of (k-block, group element).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kesten/error.hpp"
#include "kesten/fit.hpp"
#include "kesten/groups.hpp"
#include "kesten/potential.hpp"
#include "kesten/sft.hpp"

namespace kesten {

template <GroupBackend G>
class ExtensionSystem {
 public:
  using element = typename G::element;

  ExtensionSystem(Shift shift, Potential potential, G group, std::vector<element> cocycle,
                  std::optional<Involution> involution = std::nullopt)
      : shift_(std::move(shift)),
        potential_(std::move(potential)),
        group_(std::move(group)),
        cocycle_(std::move(cocycle)),
        involution_(std::move(involution)) {
    if (static_cast<int>(cocycle_.size()) != shift_.alphabet_size())
      throw Error(ErrorKind::InvalidArgument, "cocycle must assign a group element to every letter");
    if (potential_.blocks().alphabet_size() != shift_.alphabet_size())
      throw Error(ErrorKind::InvalidArgument, "potential defined on a different alphabet");
    if (involution_) {
      for (int v = 0; v < shift_.alphabet_size(); ++v)
        if (!(cocycle_[(*involution_)(v)] == group_.inverse(cocycle_[v])))
          throw Error(ErrorKind::NotSymmetric,
                      "psi(v^dagger) != psi(v)^-1 at letter " + std::to_string(v));
    }
  }

  const Shift& shift() const noexcept { return shift_; }
  const Potential& potential() const noexcept { return potential_; }
  const G& group() const noexcept { return group_; }
  const std::vector<element>& cocycle() const noexcept { return cocycle_; }
  const element& psi(int letter) const { return cocycle_.at(letter); }
  const std::optional<Involution>& involution() const noexcept { return involution_; }
  bool symmetric() const noexcept { return involution_.has_value(); }

  /// The same extension with the potential replaced by its normalization.
  ExtensionSystem normalized() const {
    return ExtensionSystem(shift_, normalize(shift_, potential_), group_, cocycle_, involution_);
  }

  /// Cocycle values and their inverses, deduplicated and sorted; the
  /// generating set used for word-length balls.
  std::vector<element> generators() const {
    std::vector<element> gens;
    for (const auto& g : cocycle_) {
      if (g == group_.identity()) continue;
      gens.push_back(g);
      gens.push_back(group_.inverse(g));
    }
    std::sort(gens.begin(), gens.end());
    gens.erase(std::unique(gens.begin(), gens.end()), gens.end());
    return gens;
  }

 private:
  Shift shift_;
  Potential potential_;
  G group_;
  std::vector<element> cocycle_;
  std::optional<Involution> involution_;
};

/// psi(w_1) psi(w_2) ... psi(w_n).
template <GroupBackend G>
typename G::element psi_n(const ExtensionSystem<G>& ext, const Word& w) {
  if (!ext.shift().admissible(w)) throw Error(ErrorKind::InadmissibleWord, "psi_n needs an admissible word");
  auto g = ext.group().identity();
  for (int x : w) g = ext.group().multiply(g, ext.psi(x));
  return g;
}

namespace detail {

/// successors[v]: blocks u that follow v, i.e. u's (k-1)-prefix is v's suffix.
inline std::vector<std::vector<int>> block_successors(const Shift& shift, const BlockIndex& idx) {
  std::vector<std::vector<int>> out(idx.size());
  for (std::size_t v = 0; v < idx.size(); ++v) {
    Word next(idx.block(v).begin() + 1, idx.block(v).end());
    next.push_back(0);
    for (int c = 0; c < shift.alphabet_size(); ++c) {
      if (!shift.allowed(idx.block(v).back(), c)) continue;
      next.back() = c;
      out[v].push_back(idx.find(next));
    }
  }
  return out;
}

}  // namespace detail

/// log of sum over x in [a] with theta^n x = x and psi_n(x) = g of Phi_n(x).
/// With g = id this is the extension partition function. -inf when empty.
template <GroupBackend G>
double extension_partition_function(const ExtensionSystem<G>& ext, int a, const typename G::element& target, int n,
                                    std::size_t cap = 5'000'000) {
  using E = typename G::element;
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  const Potential& pot = ext.potential();
  const BlockIndex& idx = pot.blocks();
  const auto succ = detail::block_successors(ext.shift(), idx);
  double result = kNegInf;
  for (std::size_t start = 0; start < idx.size(); ++start) {
    if (idx.block(start)[0] != a) continue;
    // (group element, block) -> weight, scaled by exp(log_scale).
    std::map<std::pair<E, int>, double> cur{{{ext.group().identity(), static_cast<int>(start)}, 1.0}};
    double log_scale = 0.0;
    for (int step = 0; step < n && !cur.empty(); ++step) {
      std::map<std::pair<E, int>, double> nxt;
      for (const auto& [key, w] : cur) {
        const auto& [g, v] = key;
        const E h = ext.group().multiply(g, ext.psi(idx.block(v)[0]));
        const double wv = w * std::exp(pot.log_weight(v));
        for (int s : succ[v]) nxt[{h, s}] += wv;
      }
      if (nxt.size() > cap) throw Error(ErrorKind::BallTooLarge, "extension partition function state cap");
      double mx = 0.0;
      for (const auto& kv : nxt) mx = std::max(mx, kv.second);
      if (mx == 0.0) {
        cur.clear();
        break;
      }
      for (auto& kv : nxt) kv.second /= mx;
      log_scale += std::log(mx);
      cur = std::move(nxt);
    }
    auto it = cur.find({target, static_cast<int>(start)});
    if (it != cur.end() && it->second > 0.0) result = log_add(result, log_scale + std::log(it->second));
  }
  return result;
}

/// A function on (k-block, group element), finitely supported in the group.
template <GroupBackend G>
using BlockFunction = std::unordered_map<typename G::element, std::vector<double>>;

/// A function constant on each fibre X_g.
template <GroupBackend G>
using FibreFunction = std::map<typename G::element, double>;

/// The lifted transfer operator of a normalized extension, acting on block
/// functions:  (L F)(u, g) = sum_v M[u, v] F(v, g psi(v_0)^-1).
/// With a ball radius, values at elements outside the ball are discarded.
template <GroupBackend G>
class ExtensionOperator {
 public:
  using element = typename G::element;

  explicit ExtensionOperator(const ExtensionSystem<G>& ext, std::optional<int> ball_radius = std::nullopt,
                             std::size_t cap = 5'000'000)
      : ext_(&ext), gibbs_(ext.shift(), ext.potential()), cap_(cap) {
    const BlockIndex& idx = ext.potential().blocks();
    succ_ = detail::block_successors(ext.shift(), idx);
    for (std::size_t v = 0; v < idx.size(); ++v) weight_.push_back(std::exp(ext.potential().log_weight(v)));
    if (ball_radius) ball_ = ball_distances(ext.group(), *ball_radius, ext.generators(), cap);
  }

  std::size_t blocks() const noexcept { return weight_.size(); }
  std::span<const double> block_masses() const noexcept { return gibbs_.block_masses(); }
  bool truncated() const noexcept { return ball_.has_value(); }
  std::size_t ball_size() const noexcept { return ball_ ? ball_->size() : 0; }

  BlockFunction<G> lift(const FibreFunction<G>& f) const {
    BlockFunction<G> out;
    for (const auto& [g, v] : f) {
      if (v < 0.0) throw Error(ErrorKind::NegativeInput, "fibre function must be nonnegative");
      if (v != 0.0 && keep(g)) out.emplace(g, std::vector<double>(blocks(), v));
    }
    return out;
  }

  BlockFunction<G> apply(const BlockFunction<G>& f) const {
    BlockFunction<G> out;
    for (const auto& [g, vals] : f) {
      for (std::size_t v = 0; v < vals.size(); ++v) {
        if (vals[v] == 0.0) continue;
        const element h = ext_->group().multiply(g, ext_->psi(ext_->potential().blocks().block(v)[0]));
        if (!keep(h)) continue;
        auto it = out.find(h);
        if (it == out.end()) {
          it = out.emplace(h, std::vector<double>(blocks(), 0.0)).first;
          if (out.size() > cap_)
            throw Error(ErrorKind::BallTooLarge, "operator support exceeds " + std::to_string(cap_) + " elements");
        }
        const double w = vals[v] * weight_[v];
        for (int u : succ_[v]) it->second[u] += w;
      }
    }
    return out;
  }

  /// ||F(., g)||_1 with respect to the Gibbs measure.
  double fibre_l1(const BlockFunction<G>& f, const element& g) const {
    auto it = f.find(g);
    if (it == f.end()) return 0.0;
    double s = 0.0;
    auto nu = block_masses();
    for (std::size_t u = 0; u < nu.size(); ++u) s += nu[u] * std::abs(it->second[u]);
    return s;
  }

  /// [[F]]_1 = sqrt(sum_g ||F||_1^g ^2), summed in canonical element order.
  double hnorm_1(const BlockFunction<G>& f) const {
    std::vector<std::pair<element, double>> parts;
    for (const auto& [g, _] : f) parts.emplace_back(g, fibre_l1(f, g));
    std::sort(parts.begin(), parts.end());
    double s = 0.0;
    for (const auto& p : parts) s += p.second * p.second;
    return std::sqrt(s);
  }

  /// sum_g ||F||_1^g.
  double total_l1(const BlockFunction<G>& f) const {
    std::vector<std::pair<element, double>> parts;
    for (const auto& [g, _] : f) parts.emplace_back(g, fibre_l1(f, g));
    std::sort(parts.begin(), parts.end());
    double s = 0.0;
    for (const auto& p : parts) s += p.second;
    return s;
  }

 private:
  bool keep(const element& g) const { return !ball_ || ball_->contains(g); }

  const ExtensionSystem<G>* ext_;
  GibbsMeasure gibbs_;
  std::size_t cap_;
  std::vector<std::vector<int>> succ_;
  std::vector<double> weight_;
  std::optional<DistanceMap<G>> ball_;
};

/// [[f]]_1 for f constant on fibres: ||f||_1^g = |f(g)| for a probability measure.
template <GroupBackend G>
double hnorm_1(const FibreFunction<G>& f) {
  double s = 0.0;
  for (const auto& [g, v] : f) {
    if (v < 0.0) throw Error(ErrorKind::NegativeInput, "fibre function must be nonnegative");
    s += v * v;
  }
  return std::sqrt(s);
}

/// [[L^k f]]_1 / [[f]]_1 for nonnegative f constant on fibres.
template <GroupBackend G>
double lambda_k(const ExtensionOperator<G>& op, const FibreFunction<G>& f, int k) {
  BlockFunction<G> cur = op.lift(f);
  const double denom = op.hnorm_1(cur);
  if (denom == 0.0) throw Error(ErrorKind::InvalidArgument, "lambda_k of the zero function");
  for (int i = 0; i < k; ++i) cur = op.apply(cur);
  return op.hnorm_1(cur) / denom;
}

struct ReturnSample {
  int n = 0;
  double log_r = kNegInf;  // log mu(psi_n = id); a lower bound when loss > 0
  double loss = 0.0;       // mass discarded by ball truncation
};

struct ReturnSeries {
  std::vector<ReturnSample> samples;
  double estimate = 0.0;   // fitted exponential rate over [n_max/2, n_max]
  std::string method;      // "ball" or "radial"
};

inline double joint_rate(const std::vector<ReturnSample>& samples, int lo, int hi);

/// r_n = mu({psi_n = id}) = sum_u nu(u) (L^n 1_{X_id})(u, id) for n = 1..n_max.
template <GroupBackend G>
ReturnSeries return_weight_series(const ExtensionSystem<G>& ext, int n_max, std::optional<int> ball_radius,
                                  std::size_t cap = 5'000'000) {
  if (n_max < 1) throw Error(ErrorKind::InvalidArgument, "n_max must be >= 1");
  const ExtensionOperator<G> op(ext, ball_radius, cap);
  const auto id = ext.group().identity();
  BlockFunction<G> cur = op.lift(FibreFunction<G>{{id, 1.0}});
  ReturnSeries series;
  series.method = "ball";
  for (int n = 1; n <= n_max; ++n) {
    cur = op.apply(cur);
    ReturnSample s;
    s.n = n;
    const double r = op.fibre_l1(cur, id);
    s.log_r = r > 0.0 ? std::log(r) : kNegInf;
    s.loss = std::max(0.0, 1.0 - op.total_l1(cur));
    series.samples.push_back(s);
  }
  series.estimate = joint_rate(series.samples, std::max(1, n_max / 2), n_max);
  return series;
}

/// Return probabilities of the simple random walk on F_r, P(|X_n| = 0),
/// via the word-length chain 0 -> 1, d -> d+1 w.p. (2r-1)/2r, d -> d-1 w.p. 1/2r.
inline std::vector<double> free_radial_returns(int rank, int n_max) {
  if (rank < 1 || n_max < 0) throw Error(ErrorKind::InvalidArgument, "free_radial_returns");
  const double up = (2.0 * rank - 1.0) / (2.0 * rank), down = 1.0 / (2.0 * rank);
  std::vector<double> p(n_max + 2, 0.0), q(n_max + 2, 0.0), out{1.0};
  p[0] = 1.0;
  for (int n = 1; n <= n_max; ++n) {
    std::fill(q.begin(), q.end(), 0.0);
    q[1] += p[0];
    for (int d = 1; d <= n_max; ++d) {
      q[d + 1] += p[d] * up;
      q[d - 1] += p[d] * down;
    }
    std::swap(p, q);
    out.push_back(p[0]);
  }
  return out;
}

/// Exact return series for the extension of the full 2r-shift by F_r with the
/// letter-to-generator cocycle and constant potential 1/2r, where psi_n is the
/// simple random walk and no truncation is needed.
inline ReturnSeries radial_return_series(const ExtensionSystem<FreeGroup>& ext, int n_max) {
  const int r = ext.group().rank();
  const Shift& shift = ext.shift();
  if (shift.alphabet_size() != 2 * r)
    throw Error(ErrorKind::InvalidArgument, "radial series needs an alphabet of size 2r");
  for (int i = 0; i < 2 * r; ++i)
    for (int j = 0; j < 2 * r; ++j)
      if (!shift.allowed(i, j)) throw Error(ErrorKind::InvalidArgument, "radial series needs the full shift");
  std::vector<char> hit(2 * r, 0);
  for (int v = 0; v < 2 * r; ++v) {
    const auto& g = ext.psi(v);
    if (g.letters.size() != 1 || hit[g.letters[0]])
      throw Error(ErrorKind::InvalidArgument, "radial series needs psi to biject letters onto generators");
    hit[g.letters[0]] = 1;
  }
  const double target = -std::log(2.0 * r);
  for (double lw : ext.potential().log_weights())
    if (std::abs(lw - target) > 1e-12)
      throw Error(ErrorKind::InvalidArgument, "radial series needs the constant potential 1/2r");
  const auto returns = free_radial_returns(r, n_max);
  ReturnSeries series;
  series.method = "radial";
  for (int n = 1; n <= n_max; ++n)
    series.samples.push_back({n, returns[n] > 0.0 ? std::log(returns[n]) : kNegInf, 0.0});
  series.estimate = joint_rate(series.samples, std::max(1, n_max / 2), n_max);
  return series;
}

enum class VerdictKind { AmenableConsistent, PressureDrop, Inconclusive };

inline std::string to_string(VerdictKind v) {
  switch (v) {
    case VerdictKind::AmenableConsistent: return "amenable_consistent";
    case VerdictKind::PressureDrop: return "pressure_drop";
    case VerdictKind::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

struct Verdict {
  VerdictKind kind = VerdictKind::Inconclusive;
  double rate = 0.0;  // exponential rate from the joint fit
  FitResult exponential;  // log r ~ c + s n
  FitResult polynomial;   // log r ~ c + b log n
  FitResult joint;        // log r ~ c + s n + b log n
  int points = 0;
  double max_loss = 0.0;
};

namespace detail {

inline void window_points(const std::vector<ReturnSample>& samples, int lo, int hi, std::vector<double>& xs,
                          std::vector<double>& ys, double& max_loss) {
  max_loss = 0.0;
  for (const auto& s : samples) {
    if (s.n < lo || s.n > hi) continue;
    max_loss = std::max(max_loss, s.loss);
    if (s.log_r == kNegInf) continue;
    xs.push_back(s.n);
    ys.push_back(s.log_r);
  }
}

}  // namespace detail

/// Slope s of log r_n ~ c + s n + b log n over the window (0 with < 3 points).
inline double joint_rate(const std::vector<ReturnSample>& samples, int lo, int hi) {
  std::vector<double> xs, ys;
  double loss = 0.0;
  detail::window_points(samples, lo, hi, xs, ys, loss);
  if (xs.size() < 3) return xs.size() == 2 ? (ys[1] - ys[0]) / (xs[1] - xs[0]) : 0.0;
  return least_squares(xs, ys, one, ident, logarithm).coefficients[1];
}

/// Exponential versus subexponential decay of the return weights.
/// amenable_consistent: rate > -threshold and the polynomial fit is at least
/// as good as the exponential one; pressure_drop: rate < -threshold and the
/// exponential fit is strictly better; otherwise inconclusive.
inline Verdict amenability_verdict(const ReturnSeries& series, int lo, int hi, double threshold = 0.02,
                                   double max_loss_fraction = 0.05) {
  std::vector<double> xs, ys;
  Verdict v;
  detail::window_points(series.samples, lo, hi, xs, ys, v.max_loss);
  if (v.max_loss > max_loss_fraction)
    throw Error(ErrorKind::TruncationDominates, "escaped mass " + std::to_string(v.max_loss) +
                                                    " exceeds allowed fraction " + std::to_string(max_loss_fraction));
  v.points = static_cast<int>(xs.size());
  if (xs.size() < 4) return v;
  v.exponential = least_squares(xs, ys, one, ident);
  v.polynomial = least_squares(xs, ys, one, logarithm);
  v.joint = least_squares(xs, ys, one, ident, logarithm);
  v.rate = v.joint.coefficients[1];
  const double tie = 1e-12 * (1.0 + v.exponential.rss);
  if (v.rate > -threshold && v.polynomial.rss <= v.exponential.rss + tie)
    v.kind = VerdictKind::AmenableConsistent;
  else if (v.rate < -threshold && v.exponential.rss < v.polynomial.rss)
    v.kind = VerdictKind::PressureDrop;
  return v;
}

struct ConnectorReport {
  std::map<std::pair<int, int>, Word> connectors;  // the set J, keyed by (beta, beta')
  std::vector<std::pair<int, int>> missing;        // pairs without a connector within max_len
  int max_len = 0;
  bool established() const { return missing.empty(); }
};

/// For b.i.p. letters beta, beta': the shortest (then lexicographically least)
/// word w starting with beta with psi(w) = id and (w_n beta') admissible.
template <GroupBackend G>
ConnectorReport trivial_connectors(const ExtensionSystem<G>& ext, int max_len, std::size_t cap = 2'000'000) {
  using E = typename G::element;
  const Shift& shift = ext.shift();
  const BipReport bip = check_bip(shift);
  ConnectorReport rep;
  rep.max_len = max_len;
  const auto id = ext.group().identity();
  for (int beta : bip.witness) {
    // BFS over (last letter, element); first discovery is lexicographically least.
    struct Node {
      int last;
      E g;
      int parent;
    };
    std::vector<Node> nodes{{beta, ext.psi(beta), -1}};
    std::map<std::pair<int, E>, int> seen{{{beta, ext.psi(beta)}, 0}};
    std::vector<int> layer{0};
    std::map<int, int> found;  // beta' -> node
    auto word_of = [&](int node) {
      Word w;
      for (int i = node; i >= 0; i = nodes[i].parent) w.push_back(nodes[i].last);
      std::reverse(w.begin(), w.end());
      return w;
    };
    auto record = [&](const std::vector<int>& lay) {
      for (int i : lay)
        if (nodes[i].g == id)
          for (int b2 : bip.witness)
            if (!found.contains(b2) && shift.allowed(nodes[i].last, b2)) found[b2] = i;
    };
    record(layer);
    for (int len = 2; len <= max_len && found.size() < bip.witness.size(); ++len) {
      std::vector<int> next;
      for (int i : layer)
        for (int c = 0; c < shift.alphabet_size(); ++c) {
          if (!shift.allowed(nodes[i].last, c)) continue;
          E h = ext.group().multiply(nodes[i].g, ext.psi(c));
          if (seen.emplace(std::make_pair(c, h), static_cast<int>(nodes.size())).second) {
            nodes.push_back({c, std::move(h), i});
            next.push_back(static_cast<int>(nodes.size()) - 1);
            if (nodes.size() > cap) throw Error(ErrorKind::BallTooLarge, "connector search state cap");
          }
        }
      layer = std::move(next);
      record(layer);
    }
    for (int b2 : bip.witness) {
      if (found.contains(b2))
        rep.connectors[{beta, b2}] = word_of(found[b2]);
      else
        rep.missing.emplace_back(beta, b2);
    }
  }
  return rep;
}

}  // namespace kesten
