#pragma once

// Experiment configuration (JSON) and deterministic CSV/JSON writers.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "kesten/error.hpp"
#include "kesten/groups.hpp"
#include "kesten/potential.hpp"
#include "kesten/sft.hpp"

namespace kesten::config {

using json = nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::Config, path + ": " + what);
}

/// Letter names; words are written either as arrays of names or, when every
/// name is one character, as plain strings.
class Alphabet {
 public:
  Alphabet() = default;
  explicit Alphabet(std::vector<std::string> names) : names_(std::move(names)) {}

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }

  int index(const std::string& s, const std::string& path) const {
    for (int i = 0; i < size(); ++i)
      if (names_[i] == s) return i;
    fail(path, "unknown letter '" + s + "'");
  }

  int letter(const json& j, const std::string& path) const {
    if (j.is_number_integer()) {
      const int i = j.get<int>();
      if (i < 0 || i >= size()) fail(path, "letter index out of range");
      return i;
    }
    if (j.is_string()) return index(j.get<std::string>(), path);
    fail(path, "expected a letter name or index");
  }

  Word word(const json& j, const std::string& path) const {
    Word w;
    if (j.is_array()) {
      for (std::size_t i = 0; i < j.size(); ++i) w.push_back(letter(j[i], path + "/" + std::to_string(i)));
      return w;
    }
    if (!j.is_string()) fail(path, "expected a word");
    return split(j.get<std::string>(), path);
  }

  /// "a b A" splits on spaces; "abA" splits per character when names are single characters.
  Word split(const std::string& s, const std::string& path) const {
    Word w;
    if (s.find(' ') != std::string::npos) {
      std::istringstream in(s);
      std::string tok;
      while (in >> tok) w.push_back(index(tok, path));
      return w;
    }
    if (single_char()) {
      for (char c : s) w.push_back(index(std::string(1, c), path));
      return w;
    }
    w.push_back(index(s, path));
    return w;
  }

  std::string format(const Word& w) const {
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (i > 0 && !single_char()) out += ' ';
      out += names_.at(w[i]);
    }
    return out;
  }

 private:
  bool single_char() const {
    for (const auto& n : names_)
      if (n.size() != 1) return false;
    return true;
  }
  std::vector<std::string> names_;
};

using AnyGroup = std::variant<LamplighterGroup, FiniteGroup, ZdGroup, FreeGroup>;

struct GroupSpec {
  AnyGroup group;
  std::string type;           // finite | zd | free | lamplighter | quotient
  std::optional<int> rank;    // quotient: rank r of the free domain
  json images;                // quotient: element literals of the generator images
};

struct Params {
  int n_max = 40;
  int n_lo = 8, n_hi = 16;                 // periodic-orbit window
  std::optional<int> base_letter;
  std::optional<int> ball_radius;
  std::size_t ball_cap = 5'000'000;
  std::optional<std::pair<int, int>> window;  // verdict window; default [n_max/2, n_max]
  double threshold = 0.02;
  double max_loss_fraction = 0.05;
  std::string series_method = "auto";      // auto | ball | radial
  int walk_n = 1;
  int k_max = 60;
  int self_adjoint_radius = 4;
  int gibbs_n_max = 8;
  int variation_n_max = 8;
  int connector_max_len = 12;
  int lambda_samples = 20;
  int lambda_k = 8;
  double epsilon = 0.5;
  json folner_K;                           // element literals; default standard generators
  json folner_schedule;                    // [{ "K": [...], "epsilon": e }, ...]
  int folner_max_radius = 8;
  std::size_t folner_max_set = 200'000;
  int folner_greedy_steps = 256;
};

struct Experiment {
  json raw;
  std::filesystem::path base_dir;
  std::string task;
  Alphabet alphabet;
  std::optional<Shift> shift;
  std::optional<Potential> potential;
  std::optional<Involution> involution;
  std::optional<Error> involution_error;  // an involution was given but fails validation
  std::optional<GroupSpec> group;
  json cocycle;  // letter -> element literal, parsed against the backend on use
  std::optional<Word> anchor;
  std::optional<Word> xi;
  Params params;
};

namespace detail {

template <class T>
T get(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path + "/" + key, e.what());
  }
}

inline std::vector<std::vector<int>> int_matrix(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of rows");
  std::vector<std::vector<int>> rows;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array()) fail(path + "/" + std::to_string(i), "expected a row");
    std::vector<int> row;
    for (const auto& x : j[i]) {
      if (!x.is_number_integer()) fail(path + "/" + std::to_string(i), "expected integers");
      row.push_back(x.get<int>());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<std::vector<int>> csv_table(const std::filesystem::path& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) fail(path, "cannot read " + file.string());
  std::vector<std::vector<int>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<int> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stoi(cell));
      } catch (const std::exception&) {
        fail(path, "non-integer cell '" + cell + "' in " + file.string());
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Errors raised by library validation are re-tagged with the config field.
template <class F>
auto at_field(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.detail().starts_with('/')) throw;
    throw Error(e.kind(), path + ": " + e.detail());
  }
}

}  // namespace detail

inline Alphabet parse_alphabet(const json& shift, const std::string& path) {
  std::vector<std::string> names;
  if (shift.contains("alphabet")) {
    const json& a = shift.at("alphabet");
    if (!a.is_array() || a.empty()) fail(path + "/alphabet", "expected a nonempty list of names");
    for (const auto& n : a) {
      if (!n.is_string()) fail(path + "/alphabet", "letter names must be strings");
      names.push_back(n.get<std::string>());
    }
  } else if (shift.contains("size")) {
    const int m = detail::get<int>(shift, "size", path, 0);
    if (m < 1) fail(path + "/size", "alphabet size must be positive");
    for (int i = 0; i < m; ++i) names.push_back(std::to_string(i));
  } else {
    fail(path, "needs 'alphabet' or 'size'");
  }
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = i + 1; j < names.size(); ++j)
      if (names[i] == names[j]) fail(path + "/alphabet", "duplicate letter '" + names[i] + "'");
  return Alphabet(std::move(names));
}

inline Shift parse_shift(const json& j, const Alphabet& alpha, const std::string& path) {
  const int m = alpha.size();
  if (j.contains("matrix")) {
    auto rows = detail::int_matrix(j.at("matrix"), path + "/matrix");
    return detail::at_field(path + "/matrix", [&] { return Shift::validate(rows); });
  }
  std::vector<std::pair<int, int>> forbidden;
  if (j.contains("forbidden")) {
    const json& f = j.at("forbidden");
    if (!f.is_array()) fail(path + "/forbidden", "expected a list of 2-blocks");
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::string p = path + "/forbidden/" + std::to_string(i);
      const Word w = alpha.word(f[i], p);
      if (w.size() != 2) fail(p, "forbidden blocks have length 2");
      forbidden.emplace_back(w[0], w[1]);
    }
  }
  return detail::at_field(path, [&] { return Shift::with_forbidden(m, forbidden); });
}

inline Potential parse_potential(const json& j, const Shift& shift, const Alphabet& alpha, const std::string& path) {
  if (j.contains("constant")) {
    const double v = detail::get<double>(j, "constant", path, 1.0);
    if (!(v > 0.0)) fail(path + "/constant", "potential values must be positive");
    return Potential::constant(shift, std::log(v));
  }
  if (j.contains("log_constant")) return Potential::constant(shift, detail::get<double>(j, "log_constant", path, 0.0));
  const int k = detail::get<int>(j, "memory", path, 1);
  if (k < 1) fail(path + "/memory", "memory must be >= 1");
  const bool logs = j.contains("log_weights");
  if (!logs && !j.contains("weights")) fail(path, "needs 'constant', 'log_constant', 'log_weights' or 'weights'");
  const std::string key = logs ? "log_weights" : "weights";
  const json& table = j.at(key);
  if (!table.is_object()) fail(path + "/" + key, "expected a {block: value} map");
  std::map<Word, double> values;
  for (const auto& [block, v] : table.items()) {
    const std::string p = path + "/" + key + "/" + block;
    if (!v.is_number()) fail(p, "expected a number");
    const Word w = alpha.split(block, p);
    if (static_cast<int>(w.size()) != k) fail(p, "block length differs from memory");
    double x = v.get<double>();
    if (!logs) {
      if (!(x > 0.0)) fail(p, "potential values must be positive");
      x = std::log(x);
    }
    if (!std::isfinite(x)) fail(p, "log-weight must be finite");
    values[w] = x;
  }
  return detail::at_field(path + "/" + key, [&] { return Potential::from_table(shift, k, values); });
}

inline Involution parse_involution(const json& j, const Shift& shift, const Alphabet& alpha, const std::string& path) {
  if (!j.is_object()) fail(path, "expected a {letter: letter} map");
  std::vector<int> dagger(alpha.size(), -1);
  for (const auto& [from, to] : j.items()) {
    const int a = alpha.index(from, path + "/" + from);
    const int b = alpha.letter(to, path + "/" + from);
    dagger[a] = b;
    if (dagger[b] == -1) dagger[b] = a;
  }
  for (int i = 0; i < alpha.size(); ++i)
    if (dagger[i] == -1) fail(path, "no image for letter '" + alpha.name(i) + "'");
  return detail::at_field(path, [&] { return Involution::validate(shift, dagger); });
}

// Element literals: finite -> index; zd -> [x, y, ...]; free -> "aB" or "e";
// lamplighter -> {"lamps": [...], "pos": t} or one of "e", "toggle", "t", "T".
inline FiniteElement parse_element(const FiniteGroup& g, const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "finite group elements are table indices");
  return detail::at_field(path, [&] { return g.at(j.get<int>()); });
}

inline ZdElement parse_element(const ZdGroup& g, const json& j, const std::string& path) {
  if (!j.is_array() || static_cast<int>(j.size()) != g.dim())
    fail(path, "Z^d elements are integer arrays of length " + std::to_string(g.dim()));
  std::vector<std::int64_t> c;
  for (const auto& x : j) {
    if (!x.is_number_integer()) fail(path, "expected integers");
    c.push_back(x.get<std::int64_t>());
  }
  return g.make(std::move(c));
}

inline FreeElement parse_element(const FreeGroup& g, const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "free group elements are strings such as \"aB\"");
  return detail::at_field(path, [&] { return g.parse(j.get<std::string>()); });
}

inline LampElement parse_element(const LamplighterGroup& g, const json& j, const std::string& path) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "e") return g.identity();
    if (s == "toggle") return g.toggle();
    if (s == "t") return g.step(1);
    if (s == "T") return g.step(-1);
    fail(path, "unknown lamplighter literal '" + s + "'");
  }
  if (!j.is_object()) fail(path, "expected {\"lamps\": [...], \"pos\": t}");
  std::vector<std::int64_t> lamps;
  if (j.contains("lamps"))
    for (const auto& x : j.at("lamps")) lamps.push_back(x.get<std::int64_t>());
  return g.make(std::move(lamps), detail::get<std::int64_t>(j, "pos", path, 0));
}

inline AnyGroup parse_backend(const json& j, const std::filesystem::path& base, const std::string& path) {
  const std::string type = detail::get<std::string>(j, "type", path, "");
  if (type == "finite") {
    if (j.contains("table"))
      return detail::at_field(path + "/table",
                              [&] { return FiniteGroup::from_table(detail::int_matrix(j.at("table"), path + "/table")); });
    if (j.contains("table_csv")) {
      const auto file = base / detail::get<std::string>(j, "table_csv", path, "");
      return detail::at_field(path + "/table_csv",
                              [&] { return FiniteGroup::from_table(detail::csv_table(file, path + "/table_csv")); });
    }
    if (j.contains("cyclic")) return FiniteGroup::cyclic(detail::get<int>(j, "cyclic", path, 1));
    fail(path, "finite group needs 'table', 'table_csv' or 'cyclic'");
  }
  if (type == "zd") {
    const int d = detail::get<int>(j, "dim", path, 1);
    if (d < 1) fail(path + "/dim", "dimension must be positive");
    return ZdGroup(d);
  }
  if (type == "free") {
    const int r = detail::get<int>(j, "rank", path, 2);
    if (r < 1) fail(path + "/rank", "rank must be positive");
    return FreeGroup(r);
  }
  if (type == "lamplighter") return LamplighterGroup{};
  fail(path + "/type", "unknown group type '" + type + "'");
}

inline GroupSpec parse_group(const json& j, const std::filesystem::path& base, const std::string& path) {
  GroupSpec spec;
  spec.type = detail::get<std::string>(j, "type", path, "");
  if (spec.type == "quotient") {
    if (!j.contains("target")) fail(path, "quotient needs a 'target' group");
    spec.group = parse_backend(j.at("target"), base, path + "/target");
    spec.rank = detail::get<int>(j, "rank", path, 0);
    if (*spec.rank < 1) fail(path + "/rank", "rank must be positive");
    if (!j.contains("images") || !j.at("images").is_array()) fail(path + "/images", "expected a list of images");
    spec.images = j.at("images");
    const auto n = spec.images.size();
    if (n != static_cast<std::size_t>(*spec.rank) && n != 2 * static_cast<std::size_t>(*spec.rank))
      fail(path + "/images", "expected r or 2r images");
    return spec;
  }
  spec.group = parse_backend(j, base, path);
  return spec;
}

template <GroupBackend G>
std::vector<typename G::element> parse_elements(const G& g, const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of group elements");
  std::vector<typename G::element> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_element(g, j[i], path + "/" + std::to_string(i)));
  return out;
}

template <GroupBackend G>
Homomorphism<G> parse_homomorphism(const G& g, const GroupSpec& spec) {
  if (!spec.rank) fail("/group", "a homomorphism needs a group of type 'quotient'");
  auto images = parse_elements(g, spec.images, "/group/images");
  return detail::at_field("/group/images", [&] { return Homomorphism<G>(*spec.rank, g, images); });
}

template <GroupBackend G>
std::vector<typename G::element> parse_cocycle(const G& g, const Experiment& ex) {
  if (!ex.cocycle.is_object()) fail("/cocycle", "expected a {letter: element} map");
  std::vector<std::optional<typename G::element>> slots(ex.alphabet.size());
  for (const auto& [letter, value] : ex.cocycle.items()) {
    const int a = ex.alphabet.index(letter, "/cocycle/" + letter);
    slots[a] = parse_element(g, value, "/cocycle/" + letter);
  }
  std::vector<typename G::element> out;
  for (int i = 0; i < ex.alphabet.size(); ++i) {
    if (!slots[i]) fail("/cocycle", "no value for letter '" + ex.alphabet.name(i) + "'");
    out.push_back(*slots[i]);
  }
  return out;
}

inline Params parse_params(const json& j, const Alphabet& alpha, const std::string& path) {
  Params p;
  if (!j.is_object()) fail(path, "expected an object");
  p.n_max = detail::get(j, "n_max", path, p.n_max);
  p.n_lo = detail::get(j, "n_lo", path, p.n_lo);
  p.n_hi = detail::get(j, "n_hi", path, p.n_hi);
  if (j.contains("base_letter")) p.base_letter = alpha.letter(j.at("base_letter"), path + "/base_letter");
  if (j.contains("ball_radius")) p.ball_radius = detail::get<int>(j, "ball_radius", path, 0);
  p.ball_cap = detail::get(j, "ball_cap", path, p.ball_cap);
  if (j.contains("window")) {
    const auto w = detail::get<std::vector<int>>(j, "window", path, {});
    if (w.size() != 2 || w[0] > w[1]) fail(path + "/window", "expected [lo, hi] with lo <= hi");
    p.window = std::make_pair(w[0], w[1]);
  }
  p.threshold = detail::get(j, "threshold", path, p.threshold);
  p.max_loss_fraction = detail::get(j, "max_loss_fraction", path, p.max_loss_fraction);
  p.series_method = detail::get(j, "series_method", path, p.series_method);
  if (p.series_method != "auto" && p.series_method != "ball" && p.series_method != "radial")
    fail(path + "/series_method", "expected auto, ball or radial");
  p.walk_n = detail::get(j, "walk_n", path, p.walk_n);
  p.k_max = detail::get(j, "k_max", path, p.k_max);
  p.self_adjoint_radius = detail::get(j, "self_adjoint_radius", path, p.self_adjoint_radius);
  p.gibbs_n_max = detail::get(j, "gibbs_n_max", path, p.gibbs_n_max);
  p.variation_n_max = detail::get(j, "variation_n_max", path, p.variation_n_max);
  p.connector_max_len = detail::get(j, "connector_max_len", path, p.connector_max_len);
  p.lambda_samples = detail::get(j, "lambda_samples", path, p.lambda_samples);
  p.lambda_k = detail::get(j, "lambda_k", path, p.lambda_k);
  p.epsilon = detail::get(j, "epsilon", path, p.epsilon);
  if (j.contains("folner_K")) p.folner_K = j.at("folner_K");
  if (j.contains("folner_schedule")) p.folner_schedule = j.at("folner_schedule");
  p.folner_max_radius = detail::get(j, "folner_max_radius", path, p.folner_max_radius);
  p.folner_max_set = detail::get(j, "folner_max_set", path, p.folner_max_set);
  p.folner_greedy_steps = detail::get(j, "folner_greedy_steps", path, p.folner_greedy_steps);
  if (p.n_max < 1) fail(path + "/n_max", "must be >= 1");
  if (p.n_lo < 1 || p.n_hi < p.n_lo) fail(path + "/n_lo", "expected 1 <= n_lo <= n_hi");
  if (p.epsilon <= 0.0) fail(path + "/epsilon", "must be positive");
  return p;
}

inline Experiment parse(const json& raw, const std::filesystem::path& base_dir = ".") {
  if (!raw.is_object()) fail("", "config root must be an object");
  Experiment ex;
  ex.raw = raw;
  ex.base_dir = base_dir;
  ex.task = detail::get<std::string>(raw, "task", "", "");
  if (raw.contains("shift")) {
    const json& s = raw.at("shift");
    ex.alphabet = parse_alphabet(s, "/shift");
    ex.shift = parse_shift(s, ex.alphabet, "/shift");
  }
  if (raw.contains("potential")) {
    if (!ex.shift) fail("/potential", "a potential needs a shift");
    ex.potential = parse_potential(raw.at("potential"), *ex.shift, ex.alphabet, "/potential");
  }
  if (raw.contains("involution")) {
    if (!ex.shift) fail("/involution", "an involution needs a shift");
    try {
      ex.involution = parse_involution(raw.at("involution"), *ex.shift, ex.alphabet, "/involution");
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InvalidInvolution) throw;
      ex.involution_error = e;
    }
  }
  if (raw.contains("group")) ex.group = parse_group(raw.at("group"), base_dir, "/group");
  if (raw.contains("cocycle")) {
    if (!ex.shift || !ex.group) fail("/cocycle", "a cocycle needs a shift and a group");
    ex.cocycle = raw.at("cocycle");
    // Resolve eagerly so bad literals surface as validation errors.
    std::visit([&](const auto& g) { (void)parse_cocycle(g, ex); }, ex.group->group);
  }
  if (raw.contains("anchor")) ex.anchor = ex.alphabet.word(raw.at("anchor"), "/anchor");
  if (raw.contains("xi")) ex.xi = ex.alphabet.word(raw.at("xi"), "/xi");
  ex.params = parse_params(raw.value("params", json::object()), ex.alphabet, "/params");
  return ex;
}

inline Experiment load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(file.string(), "cannot open config");
  json raw;
  try {
    raw = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    fail(file.string(), e.what());
  }
  return parse(raw, file.parent_path());
}

// ---------------------------------------------------------------------------
// Output. Floats carry 17 significant digits so identical runs give identical bytes.

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

using Cell = std::variant<std::int64_t, std::uint64_t, double, std::string>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

inline std::string format_cell(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  if (const auto* u = std::get_if<std::uint64_t>(&c)) return std::to_string(*u);
  const std::string& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + format_cell(row[i]);
    out += '\n';
  }
  return out;
}

namespace detail {

inline void write_json(std::string& out, const json& j, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner + json(it.key()).dump() + ": ";
        write_json(out, it.value(), indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += inner;
        write_json(out, j[i], indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      // JSON has no infinities; they travel as strings.
      out += std::isfinite(x) ? format_double(x) : "\"" + format_double(x) + "\"";
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace detail

inline std::string to_json_text(const json& j) {
  std::string out;
  detail::write_json(out, j, 0);
  out += '\n';
  return out;
}

}  // namespace kesten::config
