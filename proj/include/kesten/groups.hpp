#pragma once

// Countable group backends with canonical element forms. Every backend
// exposes identity/multiply/inverse on a hashable, totally ordered element
// type, which is all the extension and walk machinery needs.

#include <algorithm>
#include <compare>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "kesten/error.hpp"

namespace kesten {

inline std::size_t hash_mix(std::size_t seed, std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
  v ^= v >> 30;
  v *= 0xbf58476d1ce4e5b9ULL;
  v ^= v >> 27;
  return seed ^ static_cast<std::size_t>(v);
}

struct FiniteElement {
  int index = 0;
  auto operator<=>(const FiniteElement&) const = default;
};

struct ZdElement {
  std::vector<std::int64_t> coords;
  auto operator<=>(const ZdElement&) const = default;
};

/// Reduced word; letter i < rank is generator i, letter i + rank its inverse.
struct FreeElement {
  std::vector<int> letters;
  auto operator<=>(const FreeElement&) const = default;
};

/// Lamplighter Z_2 wr Z: sorted positions of lit lamps and the lighter position.
struct LampElement {
  std::vector<std::int64_t> lamps;
  std::int64_t pos = 0;
  auto operator<=>(const LampElement&) const = default;
};

}  // namespace kesten

template <>
struct std::hash<kesten::FiniteElement> {
  std::size_t operator()(const kesten::FiniteElement& e) const noexcept {
    return kesten::hash_mix(0, static_cast<std::uint64_t>(e.index));
  }
};
template <>
struct std::hash<kesten::ZdElement> {
  std::size_t operator()(const kesten::ZdElement& e) const noexcept {
    std::size_t h = 1;
    for (auto c : e.coords) h = kesten::hash_mix(h, static_cast<std::uint64_t>(c));
    return h;
  }
};
template <>
struct std::hash<kesten::FreeElement> {
  std::size_t operator()(const kesten::FreeElement& e) const noexcept {
    std::size_t h = 2;
    for (auto c : e.letters) h = kesten::hash_mix(h, static_cast<std::uint64_t>(c));
    return h;
  }
};
template <>
struct std::hash<kesten::LampElement> {
  std::size_t operator()(const kesten::LampElement& e) const noexcept {
    std::size_t h = kesten::hash_mix(3, static_cast<std::uint64_t>(e.pos));
    for (auto c : e.lamps) h = kesten::hash_mix(h, static_cast<std::uint64_t>(c));
    return h;
  }
};

namespace kesten {

template <class G>
concept GroupBackend = requires(const G& g, const typename G::element& x) {
  { g.identity() } -> std::convertible_to<typename G::element>;
  { g.multiply(x, x) } -> std::convertible_to<typename G::element>;
  { g.inverse(x) } -> std::convertible_to<typename G::element>;
  { g.format(x) } -> std::convertible_to<std::string>;
  { std::hash<typename G::element>{}(x) } -> std::convertible_to<std::size_t>;
  { x < x } -> std::convertible_to<bool>;
};

/// A group given by its multiplication table; element i*j = table[i][j].
class FiniteGroup {
 public:
  using element = FiniteElement;

  static FiniteGroup from_table(std::vector<std::vector<int>> table) {
    const int n = static_cast<int>(table.size());
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "finite group: empty table");
    for (const auto& row : table) {
      if (static_cast<int>(row.size()) != n) throw Error(ErrorKind::NotSquare, "finite group table");
      std::vector<char> seen(n, 0);
      for (int x : row) {
        if (x < 0 || x >= n || seen[x]) throw Error(ErrorKind::InvalidArgument, "table is not a Latin square");
        seen[x] = 1;
      }
    }
    for (int j = 0; j < n; ++j) {
      std::vector<char> seen(n, 0);
      for (int i = 0; i < n; ++i) {
        if (seen[table[i][j]]) throw Error(ErrorKind::InvalidArgument, "table is not a Latin square");
        seen[table[i][j]] = 1;
      }
    }
    int id = -1;
    for (int e = 0; e < n && id < 0; ++e) {
      bool ok = true;
      for (int x = 0; x < n && ok; ++x) ok = table[e][x] == x && table[x][e] == x;
      if (ok) id = e;
    }
    if (id < 0) throw Error(ErrorKind::InvalidArgument, "table has no identity");
    auto assoc = [&](int a, int b, int c) { return table[table[a][b]][c] == table[a][table[b][c]]; };
    if (n <= 64) {
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c)
            if (!assoc(a, b, c)) throw Error(ErrorKind::InvalidArgument, "table is not associative");
    } else {
      std::mt19937_64 rng(0x5eed);
      std::uniform_int_distribution<int> pick(0, n - 1);
      for (int t = 0; t < 20000; ++t)
        if (!assoc(pick(rng), pick(rng), pick(rng)))
          throw Error(ErrorKind::InvalidArgument, "table is not associative");
    }
    std::vector<int> inv(n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (table[a][b] == id) inv[a] = b;
    return FiniteGroup(std::move(table), id, std::move(inv));
  }

  /// Z/n with table (i + j) mod n.
  static FiniteGroup cyclic(int n) {
    std::vector<std::vector<int>> t(n, std::vector<int>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) t[i][j] = (i + j) % n;
    return from_table(std::move(t));
  }

  int order() const noexcept { return static_cast<int>(table_.size()); }
  element identity() const { return {id_}; }
  element multiply(const element& a, const element& b) const {
    check(a);
    check(b);
    return {table_[a.index][b.index]};
  }
  element inverse(const element& a) const {
    check(a);
    return {inv_[a.index]};
  }
  element at(int i) const {
    check({i});
    return {i};
  }
  std::vector<element> elements() const {
    std::vector<element> out;
    for (int i = 0; i < order(); ++i) out.push_back({i});
    return out;
  }
  std::string format(const element& e) const { return std::to_string(e.index); }

 private:
  FiniteGroup(std::vector<std::vector<int>> t, int id, std::vector<int> inv)
      : table_(std::move(t)), id_(id), inv_(std::move(inv)) {}
  void check(const element& e) const {
    if (e.index < 0 || e.index >= order()) throw Error(ErrorKind::BackendMismatch, "element not in finite group");
  }

  std::vector<std::vector<int>> table_;
  int id_ = 0;
  std::vector<int> inv_;
};

class ZdGroup {
 public:
  using element = ZdElement;

  explicit ZdGroup(int dim) : dim_(dim) {
    if (dim < 1) throw Error(ErrorKind::InvalidArgument, "Z^d needs d >= 1");
  }

  int dim() const noexcept { return dim_; }
  element identity() const { return {std::vector<std::int64_t>(dim_, 0)}; }
  element multiply(const element& a, const element& b) const {
    check(a);
    check(b);
    element out = a;
    for (int i = 0; i < dim_; ++i) out.coords[i] += b.coords[i];
    return out;
  }
  element inverse(const element& a) const {
    check(a);
    element out = a;
    for (auto& c : out.coords) c = -c;
    return out;
  }
  element make(std::vector<std::int64_t> coords) const {
    element e{std::move(coords)};
    check(e);
    return e;
  }
  /// sign * e_axis.
  element unit(int axis, int sign = 1) const {
    element e = identity();
    e.coords.at(axis) = sign;
    return e;
  }
  /// {+e_1, -e_1, ..., +e_d, -e_d}.
  std::vector<element> standard_generators() const {
    std::vector<element> out;
    for (int i = 0; i < dim_; ++i) {
      out.push_back(unit(i, 1));
      out.push_back(unit(i, -1));
    }
    return out;
  }
  std::string format(const element& e) const {
    std::string s = "(";
    for (int i = 0; i < dim_; ++i) s += (i ? "," : "") + std::to_string(e.coords[i]);
    return s + ")";
  }

 private:
  void check(const element& e) const {
    if (static_cast<int>(e.coords.size()) != dim_)
      throw Error(ErrorKind::BackendMismatch, "element dimension differs from group dimension");
  }
  int dim_;
};

class FreeGroup {
 public:
  using element = FreeElement;

  explicit FreeGroup(int rank) : rank_(rank) {
    if (rank < 1) throw Error(ErrorKind::InvalidArgument, "free group needs rank >= 1");
  }

  int rank() const noexcept { return rank_; }
  int inverse_letter(int x) const { return x < rank_ ? x + rank_ : x - rank_; }
  element identity() const { return {}; }

  /// Freely reduces an arbitrary word over the 2r letters.
  element reduce(const std::vector<int>& word) const {
    element out;
    for (int x : word) {
      if (x < 0 || x >= 2 * rank_) throw Error(ErrorKind::BackendMismatch, "letter outside free group alphabet");
      if (!out.letters.empty() && out.letters.back() == inverse_letter(x))
        out.letters.pop_back();
      else
        out.letters.push_back(x);
    }
    return out;
  }
  element multiply(const element& a, const element& b) const {
    check(a);
    check(b);
    element out = a;
    std::size_t i = 0;
    while (i < b.letters.size() && !out.letters.empty() && out.letters.back() == inverse_letter(b.letters[i])) {
      out.letters.pop_back();
      ++i;
    }
    out.letters.insert(out.letters.end(), b.letters.begin() + static_cast<std::ptrdiff_t>(i), b.letters.end());
    return out;
  }
  element inverse(const element& a) const {
    check(a);
    element out;
    for (auto it = a.letters.rbegin(); it != a.letters.rend(); ++it) out.letters.push_back(inverse_letter(*it));
    return out;
  }
  element letter(int x) const { return reduce({x}); }
  /// {a_1, ..., a_r, a_1^-1, ..., a_r^-1}.
  std::vector<element> standard_generators() const {
    std::vector<element> out;
    for (int x = 0; x < 2 * rank_; ++x) out.push_back(letter(x));
    return out;
  }
  /// Lowercase letters for generators, uppercase for inverses; "e" for the identity.
  std::string format(const element& e) const {
    if (e.letters.empty()) return "e";
    std::string s;
    for (int x : e.letters) s += x < rank_ ? static_cast<char>('a' + x) : static_cast<char>('A' + x - rank_);
    return s;
  }
  element parse(const std::string& s) const {
    std::vector<int> w;
    if (s == "e" || s.empty()) return {};
    for (char c : s) {
      if (c >= 'a' && c < 'a' + rank_)
        w.push_back(c - 'a');
      else if (c >= 'A' && c < 'A' + rank_)
        w.push_back(c - 'A' + rank_);
      else
        throw Error(ErrorKind::Config, std::string("free group literal has unknown letter '") + c + "'");
    }
    return reduce(w);
  }

 private:
  void check(const element& e) const {
    for (std::size_t i = 0; i < e.letters.size(); ++i) {
      if (e.letters[i] < 0 || e.letters[i] >= 2 * rank_)
        throw Error(ErrorKind::BackendMismatch, "letter outside free group alphabet");
      if (i > 0 && e.letters[i] == inverse_letter(e.letters[i - 1]))
        throw Error(ErrorKind::InvalidArgument, "free group element is not reduced");
    }
  }
  int rank_;
};

/// (f, t)(g, s) = (f + g(. - t), t + s).
class LamplighterGroup {
 public:
  using element = LampElement;

  element identity() const { return {}; }
  element multiply(const element& a, const element& b) const {
    element out;
    out.pos = a.pos + b.pos;
    std::vector<std::int64_t> shifted(b.lamps);
    for (auto& x : shifted) x += a.pos;
    std::set_symmetric_difference(a.lamps.begin(), a.lamps.end(), shifted.begin(), shifted.end(),
                                  std::back_inserter(out.lamps));
    return out;
  }
  element inverse(const element& a) const {
    element out;
    out.pos = -a.pos;
    out.lamps = a.lamps;
    for (auto& x : out.lamps) x -= a.pos;
    return out;
  }
  element make(std::vector<std::int64_t> lamps, std::int64_t pos) const {
    std::sort(lamps.begin(), lamps.end());
    std::vector<std::int64_t> odd;
    for (std::size_t i = 0; i < lamps.size();) {
      std::size_t j = i;
      while (j < lamps.size() && lamps[j] == lamps[i]) ++j;
      if ((j - i) % 2 == 1) odd.push_back(lamps[i]);
      i = j;
    }
    return {std::move(odd), pos};
  }
  element toggle() const { return {{0}, 0}; }
  element step(int sign = 1) const { return {{}, sign}; }
  /// {toggle, step, step^-1}.
  std::vector<element> standard_generators() const { return {toggle(), step(1), step(-1)}; }
  std::string format(const element& e) const {
    std::string s = "{";
    for (std::size_t i = 0; i < e.lamps.size(); ++i) s += (i ? "," : "") + std::to_string(e.lamps[i]);
    return s + "}@" + std::to_string(e.pos);
  }
};

/// A homomorphism from the free group F_r, fixed by the images of the 2r
/// letters (images[i + r] must be the inverse of images[i]).
template <GroupBackend G>
class Homomorphism {
 public:
  using element = typename G::element;

  Homomorphism(int rank, G target, std::vector<element> generator_images)
      : domain_(rank), target_(std::move(target)) {
    if (static_cast<int>(generator_images.size()) == rank) {
      for (int i = 0; i < rank; ++i) generator_images.push_back(target_.inverse(generator_images[i]));
    }
    if (static_cast<int>(generator_images.size()) != 2 * rank)
      throw Error(ErrorKind::InvalidArgument, "homomorphism needs r or 2r images");
    for (int i = 0; i < rank; ++i)
      if (!(target_.inverse(generator_images[i]) == generator_images[i + rank]))
        throw Error(ErrorKind::InvalidArgument, "images[i + r] must invert images[i]");
    images_ = std::move(generator_images);
  }

  const FreeGroup& domain() const noexcept { return domain_; }
  const G& target() const noexcept { return target_; }
  const element& image(int letter) const { return images_.at(letter); }

  /// Letterwise product; reduction order is irrelevant by the universal property.
  element apply(const std::vector<int>& word) const {
    element out = target_.identity();
    for (int x : word) {
      if (x < 0 || x >= 2 * domain_.rank()) throw Error(ErrorKind::BackendMismatch, "letter outside F_r");
      out = target_.multiply(out, images_[x]);
    }
    return out;
  }
  element apply(const FreeElement& w) const { return apply(w.letters); }

 private:
  FreeGroup domain_;
  G target_;
  std::vector<element> images_;
};

template <GroupBackend G>
typename G::element product(const G& group, const std::vector<typename G::element>& factors) {
  typename G::element out = group.identity();
  for (const auto& f : factors) out = group.multiply(out, f);
  return out;
}

template <GroupBackend G>
bool inverse_closed(const G& group, const std::vector<typename G::element>& gens) {
  for (const auto& g : gens)
    if (std::find(gens.begin(), gens.end(), group.inverse(g)) == gens.end()) return false;
  return true;
}

/// Word-length ball: element -> distance from the identity.
template <GroupBackend G>
using DistanceMap = std::unordered_map<typename G::element, int>;

template <GroupBackend G>
DistanceMap<G> ball_distances(const G& group, int radius, const std::vector<typename G::element>& generators,
                              std::size_t cap = 5'000'000) {
  if (!inverse_closed(group, generators))
    throw Error(ErrorKind::InvalidArgument, "ball generators must be closed under inverses");
  DistanceMap<G> dist;
  std::vector<typename G::element> frontier{group.identity()};
  dist.emplace(group.identity(), 0);
  for (int r = 1; r <= radius && !frontier.empty(); ++r) {
    std::vector<typename G::element> next;
    for (const auto& g : frontier)
      for (const auto& s : generators) {
        auto h = group.multiply(g, s);
        if (dist.emplace(h, r).second) {
          next.push_back(std::move(h));
          if (dist.size() > cap)
            throw Error(ErrorKind::BallTooLarge,
                        "ball of radius " + std::to_string(radius) + " exceeds " + std::to_string(cap) + " elements");
        }
      }
    frontier = std::move(next);
  }
  return dist;
}

/// All elements of word length <= radius, ordered by (length, canonical form).
template <GroupBackend G>
std::vector<typename G::element> ball(const G& group, int radius, const std::vector<typename G::element>& generators,
                                      std::size_t cap = 5'000'000) {
  const auto dist = ball_distances(group, radius, generators, cap);
  std::vector<std::pair<int, typename G::element>> tmp;
  tmp.reserve(dist.size());
  for (const auto& [g, d] : dist) tmp.emplace_back(d, g);
  std::sort(tmp.begin(), tmp.end());
  std::vector<typename G::element> out;
  out.reserve(tmp.size());
  for (auto& p : tmp) out.push_back(std::move(p.second));
  return out;
}

}  // namespace kesten
