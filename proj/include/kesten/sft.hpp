#pragma once

// Finite-alphabet one-sided topological Markov chains.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "kesten/error.hpp"

namespace kesten {

/// A finite word over the alphabet {0, ..., m-1}.
using Word = std::vector<int>;

class Shift {
 public:
  /// Validates a 0/1 transition matrix and computes period and mixing.
  static Shift validate(const std::vector<std::vector<int>>& transitions) {
    const std::size_t m = transitions.size();
    if (m == 0) throw Error(ErrorKind::NotSquare, "empty transition matrix");
    std::vector<char> allowed(m * m, 0);
    for (std::size_t i = 0; i < m; ++i) {
      if (transitions[i].size() != m)
        throw Error(ErrorKind::NotSquare, "row " + std::to_string(i) + " has " +
                                              std::to_string(transitions[i].size()) +
                                              " entries, expected " + std::to_string(m));
      bool any = false;
      for (std::size_t j = 0; j < m; ++j) {
        const int e = transitions[i][j];
        if (e != 0 && e != 1)
          throw Error(ErrorKind::InvalidArgument, "transition entries must be 0 or 1");
        allowed[i * m + j] = static_cast<char>(e);
        any = any || e == 1;
      }
      if (!any) throw Error(ErrorKind::ZeroRow, "row " + std::to_string(i) + " has no allowed successor");
    }
    return Shift(static_cast<int>(m), std::move(allowed));
  }

  /// Full shift on m letters.
  static Shift full(int m) {
    return validate(std::vector<std::vector<int>>(m, std::vector<int>(m, 1)));
  }

  /// Shift on m letters with the listed 2-blocks forbidden.
  static Shift with_forbidden(int m, const std::vector<std::pair<int, int>>& forbidden) {
    std::vector<std::vector<int>> t(m, std::vector<int>(m, 1));
    for (auto [i, j] : forbidden) {
      if (i < 0 || j < 0 || i >= m || j >= m)
        throw Error(ErrorKind::InvalidArgument, "forbidden block outside alphabet");
      t[i][j] = 0;
    }
    return validate(t);
  }

  int alphabet_size() const noexcept { return m_; }
  bool allowed(int i, int j) const { return allowed_[static_cast<std::size_t>(i) * m_ + j] != 0; }
  int period() const noexcept { return period_; }
  bool transitive() const noexcept { return transitive_; }
  bool mixing() const noexcept { return transitive_ && period_ == 1; }

  std::vector<std::vector<int>> matrix() const {
    std::vector<std::vector<int>> out(m_, std::vector<int>(m_, 0));
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j) out[i][j] = allowed(i, j) ? 1 : 0;
    return out;
  }

  bool admissible(const Word& w) const {
    for (int x : w)
      if (x < 0 || x >= m_) return false;
    for (std::size_t i = 0; i + 1 < w.size(); ++i)
      if (!allowed(w[i], w[i + 1])) return false;
    return true;
  }

  /// w followed by itself is admissible (w_n w_1 allowed).
  bool closed(const Word& w) const { return !w.empty() && admissible(w) && allowed(w.back(), w.front()); }

  /// Admissible words of length n in lexicographic order, optionally
  /// restricted to a prefix and to words whose last letter may precede `end`.
  std::vector<Word> enumerate_words(int n, const Word& prefix = {},
                                    std::optional<int> end = std::nullopt) const {
    std::vector<Word> out;
    if (n < 1 || static_cast<int>(prefix.size()) > n || !admissible(prefix)) return out;
    if (end && (*end < 0 || *end >= m_)) return out;
    Word w = prefix;
    w.reserve(n);
    auto accept = [&](const Word& x) { return !end || allowed(x.back(), *end); };
    auto rec = [&](auto&& self) -> void {
      if (static_cast<int>(w.size()) == n) {
        if (accept(w)) out.push_back(w);
        return;
      }
      for (int x = 0; x < m_; ++x) {
        if (!w.empty() && !allowed(w.back(), x)) continue;
        w.push_back(x);
        self(self);
        w.pop_back();
      }
    };
    rec(rec);
    return out;
  }

 private:
  Shift(int m, std::vector<char> allowed) : m_(m), allowed_(std::move(allowed)) { analyse(); }

  // Tarjan-free SCC via forward/backward reachability from each vertex; the
  // alphabets here are small.
  void analyse() {
    auto reach = [&](int s, bool forward) {
      std::vector<char> seen(m_, 0);
      std::queue<int> q;
      q.push(s);
      seen[s] = 1;
      while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v = 0; v < m_; ++v) {
          bool e = forward ? allowed(u, v) : allowed(v, u);
          if (e && !seen[v]) {
            seen[v] = 1;
            q.push(v);
          }
        }
      }
      return seen;
    };
    std::vector<int> comp(m_, -1);
    int ncomp = 0;
    for (int s = 0; s < m_; ++s) {
      if (comp[s] >= 0) continue;
      auto f = reach(s, true), b = reach(s, false);
      for (int v = 0; v < m_; ++v)
        if (f[v] && b[v]) comp[v] = ncomp;
      ++ncomp;
    }
    transitive_ = ncomp == 1;

    // gcd of cycle lengths: within each component, BFS levels give
    // gcd over internal edges of level(u) + 1 - level(v).
    int g = 0;
    for (int c = 0; c < ncomp; ++c) {
      int root = static_cast<int>(std::find(comp.begin(), comp.end(), c) - comp.begin());
      std::vector<int> level(m_, -1);
      std::queue<int> q;
      q.push(root);
      level[root] = 0;
      while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v = 0; v < m_; ++v)
          if (comp[v] == c && allowed(u, v) && level[v] < 0) {
            level[v] = level[u] + 1;
            q.push(v);
          }
      }
      for (int u = 0; u < m_; ++u)
        for (int v = 0; v < m_; ++v)
          if (comp[u] == c && comp[v] == c && allowed(u, v))
            g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
    }
    period_ = g == 0 ? 1 : g;
  }

  int m_ = 0;
  std::vector<char> allowed_;
  int period_ = 1;
  bool transitive_ = false;
};

struct BipReport {
  bool mixing = false;
  std::vector<int> witness;  // the finite set I_bip, ascending
};

/// Big images and preimages. For a finite alphabet any set of letters that
/// meets every row and every column of A is a witness; the set is built
/// greedily, preferring the lowest letter index on ties.
inline BipReport check_bip(const Shift& shift) {
  if (!shift.mixing())
    throw Error(ErrorKind::NotMixing, "b.i.p. requires a topologically mixing chain (period " +
                                          std::to_string(shift.period()) + ")");
  const int m = shift.alphabet_size();
  std::vector<char> row_done(m, 0), col_done(m, 0);
  int remaining = 2 * m;
  BipReport report{true, {}};
  while (remaining > 0) {
    int best = -1, best_gain = 0;
    for (int beta = 0; beta < m; ++beta) {
      int gain = 0;
      for (int v = 0; v < m; ++v) {
        if (!row_done[v] && shift.allowed(v, beta)) ++gain;
        if (!col_done[v] && shift.allowed(beta, v)) ++gain;
      }
      if (gain > best_gain) {
        best_gain = gain;
        best = beta;
      }
    }
    for (int v = 0; v < m; ++v) {
      if (!row_done[v] && shift.allowed(v, best)) row_done[v] = 1, --remaining;
      if (!col_done[v] && shift.allowed(best, v)) col_done[v] = 1, --remaining;
    }
    report.witness.push_back(best);
  }
  std::sort(report.witness.begin(), report.witness.end());
  return report;
}

/// Letter involution w -> w^dagger compatible with the transition structure.
class Involution {
 public:
  /// Checks (w^dagger)^dagger = w and (vw) admissible iff (w^dagger v^dagger) admissible.
  static Involution validate(const Shift& shift, std::vector<int> dagger) {
    const int m = shift.alphabet_size();
    if (static_cast<int>(dagger.size()) != m)
      throw Error(ErrorKind::InvalidInvolution, "dagger must map every letter");
    for (int v = 0; v < m; ++v) {
      if (dagger[v] < 0 || dagger[v] >= m)
        throw Error(ErrorKind::InvalidInvolution, "dagger image outside alphabet");
      if (dagger[dagger[v]] != v)
        throw Error(ErrorKind::InvalidInvolution,
                    "dagger is not an involution at letter " + std::to_string(v));
    }
    for (int v = 0; v < m; ++v)
      for (int w = 0; w < m; ++w)
        if (shift.allowed(v, w) != shift.allowed(dagger[w], dagger[v]))
          throw Error(ErrorKind::InvalidInvolution, "admissibility of (" + std::to_string(v) + "," +
                                                        std::to_string(w) + ") not reversed by dagger");
    return Involution(std::move(dagger));
  }

  int operator()(int letter) const { return dagger_[letter]; }
  const std::vector<int>& table() const noexcept { return dagger_; }

 private:
  explicit Involution(std::vector<int> d) : dagger_(std::move(d)) {}
  std::vector<int> dagger_;
};

/// (w_1 ... w_n)^dagger = (w_n^dagger ... w_1^dagger).
inline Word dagger_word(const Involution& inv, const Word& w) {
  Word out(w.rbegin(), w.rend());
  for (int& x : out) x = inv(x);
  return out;
}

}  // namespace kesten
