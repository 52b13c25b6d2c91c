#pragma once

// Locally constant potentials on a Shift, their Birkhoff sums, the Ruelle
// transfer operator restricted to k-cylinder functions, Gibbs/conformal data
// and pressure estimates. All weights are kept as logarithms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "kesten/error.hpp"
#include "kesten/fit.hpp"
#include "kesten/sft.hpp"

namespace kesten {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

/// Lexicographically ordered admissible k-blocks with O(1) lookup.
class BlockIndex {
 public:
  BlockIndex() = default;
  BlockIndex(const Shift& shift, int k) : m_(shift.alphabet_size()), k_(k) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "block length must be >= 1");
    double size = std::pow(static_cast<double>(m_), k);
    if (size > static_cast<double>(1 << 24))
      throw Error(ErrorKind::InvalidArgument, "memory too large for alphabet");
    lookup_.assign(static_cast<std::size_t>(size), -1);
    blocks_ = shift.enumerate_words(k);
    for (std::size_t i = 0; i < blocks_.size(); ++i) lookup_[code(blocks_[i])] = static_cast<int>(i);
  }

  int memory() const noexcept { return k_; }
  int alphabet_size() const noexcept { return m_; }
  std::size_t size() const noexcept { return blocks_.size(); }
  const Word& block(std::size_t i) const { return blocks_[i]; }
  const std::vector<Word>& blocks() const noexcept { return blocks_; }

  /// Index of the k letters starting at `first`, or -1 if inadmissible.
  template <class It>
  int find(It first) const {
    std::size_t c = 0;
    for (int i = 0; i < k_; ++i, ++first) {
      int x = *first;
      if (x < 0 || x >= m_) return -1;
      c = c * m_ + static_cast<std::size_t>(x);
    }
    return lookup_[c];
  }
  int find(const Word& w) const { return static_cast<int>(w.size()) == k_ ? find(w.begin()) : -1; }

 private:
  std::size_t code(const Word& w) const {
    std::size_t c = 0;
    for (int x : w) c = c * m_ + static_cast<std::size_t>(x);
    return c;
  }

  int m_ = 0;
  int k_ = 0;
  std::vector<Word> blocks_;
  std::vector<int> lookup_;
};

/// log(phi) as a function of the first `memory` coordinates.
class Potential {
 public:
  Potential() = default;

  /// Every admissible k-block must appear in `table`; values are log(phi).
  static Potential from_table(const Shift& shift, int memory, const std::map<Word, double>& table) {
    BlockIndex index(shift, memory);
    std::vector<double> lw(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
      auto it = table.find(index.block(i));
      if (it == table.end())
        throw Error(ErrorKind::InvalidArgument, "potential table misses an admissible block");
      lw[i] = it->second;
    }
    for (const auto& [w, v] : table)
      if (index.find(w) < 0)
        throw Error(ErrorKind::InvalidArgument, "potential table has an inadmissible block");
    return Potential(std::move(index), std::move(lw));
  }

  static Potential from_values(const Shift& shift, int memory, std::vector<double> log_weights) {
    BlockIndex index(shift, memory);
    if (log_weights.size() != index.size())
      throw Error(ErrorKind::InvalidArgument, "potential needs one value per admissible block");
    return Potential(std::move(index), std::move(log_weights));
  }

  /// Memory-1 potential with log(phi) = value on every letter.
  static Potential constant(const Shift& shift, double log_value) {
    return from_values(shift, 1, std::vector<double>(shift.alphabet_size(), log_value));
  }

  int memory() const noexcept { return index_.memory(); }
  const BlockIndex& blocks() const noexcept { return index_; }
  std::span<const double> log_weights() const noexcept { return log_weights_; }
  double log_weight(std::size_t block) const { return log_weights_[block]; }

  /// The same function viewed as a potential of larger memory.
  Potential lift(const Shift& shift, int memory) const {
    if (memory < this->memory()) throw Error(ErrorKind::InvalidArgument, "cannot lower memory");
    BlockIndex index(shift, memory);
    std::vector<double> lw(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) lw[i] = log_weights_[index_.find(index.block(i).begin())];
    return Potential(std::move(index), std::move(lw));
  }

  /// log(phi) of the k-block starting at `first`; throws on inadmissible blocks.
  template <class It>
  double at(It first) const {
    int i = index_.find(first);
    if (i < 0) throw Error(ErrorKind::InadmissibleContext, "k-block not admissible");
    return log_weights_[i];
  }

 private:
  Potential(BlockIndex index, std::vector<double> lw) : index_(std::move(index)), log_weights_(std::move(lw)) {
    for (double v : log_weights_)
      if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "log-weights must be finite");
  }

  BlockIndex index_;
  std::vector<double> log_weights_;
};

struct PeriodicClosure {};

/// log Phi_n(x) for x in [word] whose next k-1 symbols are `tail`.
inline double birkhoff_log_weight(const Shift& shift, const Potential& pot, const Word& word,
                                  const Word& tail) {
  const int k = pot.memory();
  if (word.empty()) throw Error(ErrorKind::InvalidArgument, "empty word");
  if (static_cast<int>(tail.size()) < k - 1)
    throw Error(ErrorKind::InadmissibleContext, "tail context shorter than memory - 1");
  Word x = word;
  x.insert(x.end(), tail.begin(), tail.begin() + (k - 1));
  if (!shift.admissible(x)) throw Error(ErrorKind::InadmissibleContext, "word + tail not admissible");
  double s = 0.0;
  for (std::size_t j = 0; j < word.size(); ++j) s += pot.at(x.begin() + static_cast<std::ptrdiff_t>(j));
  return s;
}

/// log Phi_n of the periodic point (word word word ...).
inline double birkhoff_log_weight(const Shift& shift, const Potential& pot, const Word& word,
                                  PeriodicClosure) {
  if (!shift.closed(word)) throw Error(ErrorKind::InadmissibleContext, "word does not close up");
  const int k = pot.memory();
  const std::size_t n = word.size();
  Word x(n + k - 1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = word[i % n];
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += pot.at(x.begin() + static_cast<std::ptrdiff_t>(j));
  return s;
}

/// Ruelle operator on functions of the first k coordinates:
/// (L f)(u) = sum_v M[u, v] f(v), M[u, v] = phi(v) when (v_0 u) is admissible
/// and v is its k-prefix.
struct TransferMatrix {
  BlockIndex blocks;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
};

inline TransferMatrix transfer_matrix(const Shift& shift, const Potential& pot) {
  const BlockIndex& idx = pot.blocks();
  const int k = pot.memory();
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t u = 0; u < idx.size(); ++u) {
    const Word& ub = idx.block(u);
    for (int b = 0; b < shift.alphabet_size(); ++b) {
      if (!shift.allowed(b, ub[0])) continue;
      Word v{b};
      v.insert(v.end(), ub.begin(), ub.begin() + (k - 1));
      int vi = idx.find(v);
      entries.emplace_back(static_cast<int>(u), vi, std::exp(pot.log_weight(vi)));
    }
  }
  TransferMatrix out{idx, {}};
  out.matrix.resize(static_cast<int>(idx.size()), static_cast<int>(idx.size()));
  out.matrix.setFromTriplets(entries.begin(), entries.end());
  return out;
}

struct EigenData {
  double lambda = 0.0;
  std::vector<double> right;  // h, M h = lambda h
  std::vector<double> left;   // nu, nu M = lambda nu, sum nu = 1, <nu, h> = 1
  int iterations = 0;
};

/// Power iteration for the Perron data of a primitive nonnegative matrix.
inline EigenData leading_eigen(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m, double tol = 1e-13,
                               int max_iter = 200000) {
  const Eigen::Index n = m.rows();
  if (n == 0 || m.cols() != n) throw Error(ErrorKind::InvalidArgument, "leading_eigen: bad matrix shape");
  Eigen::VectorXd h = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  Eigen::VectorXd nu = h;
  const Eigen::SparseMatrix<double, Eigen::RowMajor> mt = m.transpose();
  double lambda = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd mh = m * h;
    Eigen::VectorXd mnu = mt * nu;
    const double lh = mh.sum() / h.sum();
    const double ln = mnu.sum() / nu.sum();
    const double rh = (mh - lh * h).cwiseAbs().maxCoeff() / (lh * h.maxCoeff());
    const double rn = (mnu - ln * nu).cwiseAbs().maxCoeff() / (ln * nu.maxCoeff());
    h = mh / mh.sum();
    nu = mnu / mnu.sum();
    lambda = lh;
    if (rh <= tol && rn <= tol && std::abs(lh - ln) <= 10 * tol * lh) {
      if (h.minCoeff() <= 0.0 || nu.minCoeff() <= 0.0)
        throw Error(ErrorKind::NoConvergence, "Perron vectors not strictly positive (matrix not primitive)");
      h /= nu.dot(h);
      EigenData out;
      out.lambda = lambda;
      out.right.assign(h.data(), h.data() + n);
      out.left.assign(nu.data(), nu.data() + n);
      out.iterations = it;
      return out;
    }
  }
  throw Error(ErrorKind::NoConvergence, "power iteration did not reach tolerance in " +
                                            std::to_string(max_iter) + " iterations");
}

/// phi' = phi h / (lambda h o theta), so L_{phi'} 1 = 1. Memory-1 potentials
/// are lifted to memory 2 first: the eigenfunction depends on k-1 coordinates
/// only when k >= 2.
inline Potential normalize(const Shift& shift, const Potential& pot) {
  if (!shift.mixing()) throw Error(ErrorKind::NotMixing, "normalize requires a mixing shift");
  const Potential base = pot.memory() >= 2 ? pot : pot.lift(shift, 2);
  const TransferMatrix tm = transfer_matrix(shift, base);
  const EigenData eig = leading_eigen(tm.matrix);
  const BlockIndex& idx = base.blocks();
  std::vector<double> lw(idx.size());
  const double log_lambda = std::log(eig.lambda);
  for (std::size_t v = 0; v < idx.size(); ++v) {
    const Word& vb = idx.block(v);
    // h(theta x) for x in [v]: any block whose (k-1)-prefix is v's (k-1)-suffix.
    Word u(vb.begin() + 1, vb.end());
    int last = 0;
    while (!shift.allowed(u.back(), last)) ++last;
    u.push_back(last);
    const int ui = idx.find(u);
    lw[v] = base.log_weight(v) + std::log(eig.right[v]) - log_lambda - std::log(eig.right[ui]);
  }
  return Potential::from_values(shift, base.memory(), std::move(lw));
}

/// The conformal (and, for normalized potentials, invariant Gibbs) measure of
/// a normalized potential, evaluated exactly on cylinders from eigen data.
class GibbsMeasure {
 public:
  GibbsMeasure(const Shift& shift, const Potential& normalized, double lambda_tol = 1e-9)
      : shift_(&shift), pot_(normalized) {
    const TransferMatrix tm = transfer_matrix(shift, pot_);
    const EigenData eig = leading_eigen(tm.matrix);
    if (std::abs(eig.lambda - 1.0) > lambda_tol)
      throw Error(ErrorKind::InvalidArgument,
                  "potential is not normalized (leading eigenvalue " + std::to_string(eig.lambda) + ")");
    nu_ = eig.left;
    const int m = shift.alphabet_size();
    letter_mass_.assign(m, 0.0);
    for (std::size_t u = 0; u < nu_.size(); ++u) letter_mass_[pot_.blocks().block(u)[0]] += nu_[u];
  }

  const Potential& potential() const noexcept { return pot_; }
  std::span<const double> block_masses() const noexcept { return nu_; }

  /// mu([w]).
  double cylinder(const Word& w) const {
    if (w.empty() || !shift_->admissible(w)) throw Error(ErrorKind::InadmissibleWord, "cylinder word");
    const BlockIndex& idx = pot_.blocks();
    const int k = pot_.memory();
    double total = 0.0;
    if (static_cast<int>(w.size()) < k) {
      for (std::size_t u = 0; u < idx.size(); ++u)
        if (std::equal(w.begin(), w.end(), idx.block(u).begin())) total += nu_[u];
      return total;
    }
    for (std::size_t u = 0; u < idx.size(); ++u) {
      const Word& ub = idx.block(u);
      if (!shift_->allowed(w.back(), ub[0])) continue;
      Word tail(ub.begin(), ub.begin() + (k - 1));
      total += std::exp(birkhoff_log_weight(*shift_, pot_, w, tail)) * nu_[u];
    }
    return total;
  }

  /// mu(theta([a])), the mass of letters that may follow a.
  double image_of_letter(int a) const {
    double s = 0.0;
    for (int b = 0; b < shift_->alphabet_size(); ++b)
      if (shift_->allowed(a, b)) s += letter_mass_[b];
    return s;
  }

 private:
  const Shift* shift_;
  Potential pot_;
  std::vector<double> nu_;
  std::vector<double> letter_mass_;
};

inline double gibbs_cylinder_measure(const Shift& shift, const Potential& normalized, const Word& w) {
  return GibbsMeasure(shift, normalized).cylinder(w);
}

/// Admissible (k-1)-letter continuations of w, lexicographic.
inline std::vector<Word> tail_contexts(const Shift& shift, const Word& w, int memory) {
  if (memory <= 1) return {Word{}};
  std::vector<Word> out;
  for (int b = 0; b < shift.alphabet_size(); ++b) {
    if (!shift.allowed(w.back(), b)) continue;
    for (auto& t : shift.enumerate_words(memory - 1, Word{b})) out.push_back(std::move(t));
  }
  return out;
}

struct VariationReport {
  std::vector<double> log_c;  // index n-1: log C_n
  std::vector<double> log_d;  // index n-1: log D_n; empty without involution
};

/// log C_n = max_w sup_{x,y in [w]} log(Phi_n(x)/Phi_n(y)); log D_n pairs [w] with [w^dagger].
inline VariationReport variation_constants(const Shift& shift, const Potential& pot, const Involution* inv,
                                           int n_max, bool want_d = false) {
  if (want_d && inv == nullptr)
    throw Error(ErrorKind::InvolutionMissing, "D_n requested without an involution");
  VariationReport rep;
  const int k = pot.memory();
  for (int n = 1; n <= n_max; ++n) {
    double c = 0.0, d = kNegInf;
    const auto words = shift.enumerate_words(n);
    // Only the last k-1 blocks see the tail. Summing them separately keeps
    // C_n for n >= k bitwise equal to C_k.
    const std::size_t split = n > k - 1 ? static_cast<std::size_t>(n - (k - 1)) : 0;
    std::map<Word, std::pair<double, double>> range;  // word -> (min, max) log Phi_n
    for (const Word& w : words) {
      double fixed = 0.0;
      for (std::size_t j = 0; j < split; ++j) fixed += pot.at(w.begin() + static_cast<std::ptrdiff_t>(j));
      double lo = std::numeric_limits<double>::infinity(), hi = kNegInf;
      for (const Word& t : tail_contexts(shift, w, k)) {
        Word x(w.begin() + static_cast<std::ptrdiff_t>(split), w.end());
        x.insert(x.end(), t.begin(), t.end());
        double v = 0.0;
        for (std::size_t j = 0; j + split < w.size(); ++j) v += pot.at(x.begin() + static_cast<std::ptrdiff_t>(j));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      c = std::max(c, hi - lo);
      range.emplace(w, std::make_pair(fixed + lo, fixed + hi));
    }
    rep.log_c.push_back(c);
    if (inv != nullptr) {
      for (const Word& w : words) {
        const auto& r = range.at(w);
        const auto& rd = range.at(dagger_word(*inv, w));
        d = std::max(d, r.second - rd.first);
      }
      rep.log_d.push_back(d);
    }
  }
  return rep;
}

/// log Z_a^n = log sum over x in [a] with theta^n x = x of Phi_n(x), computed
/// as closed walks of length n in the k-block graph. -inf when there are none.
inline double partition_function(const Shift& shift, const Potential& pot, int a, int n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  if (a < 0 || a >= shift.alphabet_size()) throw Error(ErrorKind::InvalidArgument, "letter outside alphabet");
  const BlockIndex& idx = pot.blocks();
  // successors[v] = blocks that may follow v (shift by one letter).
  std::vector<std::vector<int>> successors(idx.size());
  for (std::size_t v = 0; v < idx.size(); ++v) {
    Word next(idx.block(v).begin() + 1, idx.block(v).end());
    next.push_back(0);
    for (int c = 0; c < shift.alphabet_size(); ++c) {
      if (!shift.allowed(idx.block(v).back(), c)) continue;
      next.back() = c;
      successors[v].push_back(idx.find(next));
    }
  }
  double result = kNegInf;
  std::vector<double> cur(idx.size()), nxt(idx.size());
  for (std::size_t start = 0; start < idx.size(); ++start) {
    if (idx.block(start)[0] != a) continue;
    std::fill(cur.begin(), cur.end(), 0.0);
    cur[start] = 1.0;
    double log_scale = 0.0;
    for (int step = 0; step < n; ++step) {
      std::fill(nxt.begin(), nxt.end(), 0.0);
      for (std::size_t v = 0; v < idx.size(); ++v) {
        if (cur[v] == 0.0) continue;
        const double w = cur[v] * std::exp(pot.log_weight(v));
        for (int s : successors[v]) nxt[s] += w;
      }
      const double mx = *std::max_element(nxt.begin(), nxt.end());
      if (mx == 0.0) break;
      for (double& x : nxt) x /= mx;
      log_scale += std::log(mx);
      std::swap(cur, nxt);
      if (step == n - 1 && cur[start] > 0.0) result = log_add(result, log_scale + std::log(cur[start]));
    }
  }
  return result;
}

struct PressureEstimate {
  std::vector<std::pair<int, double>> samples;  // (n, log Z_a^n / n), n with Z_a^n > 0
  double eigenvalue_pressure = 0.0;             // log lambda
  double orbit_slope = 0.0;                     // slope of log Z_a^n against n
  double orbit_intercept = 0.0;
  double discrepancy = 0.0;                     // |eigenvalue - slope|
  double extrapolated_value = 0.0;
  std::string method = "eigenvalue";
};

inline PressureEstimate pressure_estimate(const Shift& shift, const Potential& pot, int a, int n_lo, int n_hi) {
  if (n_lo < 1 || n_hi < n_lo) throw Error(ErrorKind::InvalidArgument, "empty n range");
  if (!shift.mixing()) throw Error(ErrorKind::NotMixing, "pressure estimate requires a mixing shift");
  PressureEstimate est;
  est.eigenvalue_pressure = std::log(leading_eigen(transfer_matrix(shift, pot).matrix).lambda);
  std::vector<double> xs, ys;
  for (int n = n_lo; n <= n_hi; ++n) {
    const double lz = partition_function(shift, pot, a, n);
    if (lz == kNegInf) continue;
    est.samples.emplace_back(n, lz / n);
    xs.push_back(n);
    ys.push_back(lz);
  }
  if (xs.size() >= 2) {
    const FitResult f = fit_line(xs, ys);
    est.orbit_intercept = f.coefficients[0];
    est.orbit_slope = f.coefficients[1];
  } else if (xs.size() == 1) {
    est.orbit_slope = ys[0] / xs[0];
  }
  est.discrepancy = std::abs(est.eigenvalue_pressure - est.orbit_slope);
  est.extrapolated_value = est.eigenvalue_pressure;
  return est;
}

struct ConformalReport {
  double max_ratio = 1.0;     // worst multiplicative deviation observed
  double bound = 1.0;         // the constant the deviation is compared against
  std::size_t violations = 0;
  std::size_t checked = 0;
};

/// mu([w]) / Phi_n(x) against mu(theta([w_n])), allowed distortion C_n, for
/// every admissible w with |w| <= n_max and every x in [w] (via tails).
inline ConformalReport conformal_check(const Shift& shift, const Potential& normalized, int n_max) {
  const GibbsMeasure mu(shift, normalized);
  const VariationReport var = variation_constants(shift, normalized, nullptr, n_max);
  ConformalReport rep;
  for (int n = 1; n <= n_max; ++n) {
    const double cn = std::exp(var.log_c[n - 1]);
    rep.bound = std::max(rep.bound, cn);
    for (const Word& w : shift.enumerate_words(n)) {
      const double mass = mu.cylinder(w);
      const double expected = mu.image_of_letter(w.back());
      for (const Word& t : tail_contexts(shift, w, normalized.memory())) {
        const double q = mass / std::exp(birkhoff_log_weight(shift, normalized, w, t));
        const double ratio = std::max(q / expected, expected / q);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
        if (ratio > cn * (1.0 + 1e-12)) ++rep.violations;
        ++rep.checked;
      }
    }
  }
  return rep;
}

/// B^{-1} <= mu([w]) / Phi_n(x) <= B for all |w| <= n_max. `bound` defaults
/// to C_k of the potential; max_ratio is the smallest B that works.
inline ConformalReport gibbs_check(const Shift& shift, const Potential& normalized, int n_max,
                                   std::optional<double> bound = std::nullopt) {
  const GibbsMeasure mu(shift, normalized);
  ConformalReport rep;
  if (bound) {
    rep.bound = *bound;
  } else {
    const int k = normalized.memory();
    rep.bound = std::exp(variation_constants(shift, normalized, nullptr, k).log_c[k - 1]);
  }
  for (int n = 1; n <= n_max; ++n) {
    for (const Word& w : shift.enumerate_words(n)) {
      const double mass = mu.cylinder(w);
      for (const Word& t : tail_contexts(shift, w, normalized.memory())) {
        const double q = mass / std::exp(birkhoff_log_weight(shift, normalized, w, t));
        const double ratio = std::max(q, 1.0 / q);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
        if (ratio > rep.bound * (1.0 + 1e-12)) ++rep.violations;
        ++rep.checked;
      }
    }
  }
  return rep;
}

}  // namespace kesten
