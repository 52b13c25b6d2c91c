#pragma once

// Experiment tasks: each turns a parsed config into a JSON result plus CSV
// series. Shared by the command-line tool and the tests.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "kesten/amenability.hpp"
#include "kesten/config.hpp"
#include "kesten/error.hpp"
#include "kesten/extension.hpp"
#include "kesten/groups.hpp"
#include "kesten/potential.hpp"
#include "kesten/sft.hpp"

namespace kesten::run {

using config::Cell;
using config::Experiment;
using config::json;
using config::Table;

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kInternal = 1, kValidation = 2, kBudget = 3 };

inline int exit_code_for(const Error& e) { return e.is_budget() ? kBudget : kValidation; }

struct TaskOutput {
  json result = json::object();
  std::map<std::string, Table> csv;
  int status = kOk;
};

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"pressure", "extension-pressure", "kesten", "cogrowth",
                                              "folner",   "verify-symmetry",    "report"};
  return names;
}

namespace detail {

inline const Shift& need_shift(const Experiment& ex) {
  if (!ex.shift) config::fail("/shift", "this task needs a shift");
  return *ex.shift;
}

inline const Potential& need_potential(const Experiment& ex) {
  if (!ex.potential) config::fail("/potential", "this task needs a potential");
  return *ex.potential;
}

inline const config::GroupSpec& need_group(const Experiment& ex) {
  if (!ex.group) config::fail("/group", "this task needs a group");
  return *ex.group;
}

inline json error_json(const Error& e) { return {{"error", to_string(e.kind())}, {"message", e.what()}}; }

/// L_phi 1 = 1 on k-block functions, i.e. every row of the transfer matrix sums to 1.
inline bool is_normalized(const Shift& shift, const Potential& pot, double tol = 1e-12) {
  const auto tm = transfer_matrix(shift, pot);
  for (int r = 0; r < tm.matrix.outerSize(); ++r) {
    double s = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(tm.matrix, r); it; ++it) s += it.value();
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

inline Potential normalized_potential(const Shift& shift, const Potential& pot) {
  return is_normalized(shift, pot) ? pot : normalize(shift, pot);
}

template <class F>
decltype(auto) with_group(const Experiment& ex, F&& f) {
  return std::visit(std::forward<F>(f), need_group(ex).group);
}

template <GroupBackend G>
ExtensionSystem<G> make_extension(const G& group, const Experiment& ex, bool need_involution) {
  const Shift& shift = need_shift(ex);
  if (ex.cocycle.is_null()) config::fail("/cocycle", "this task needs a cocycle");
  if (need_involution && !ex.involution) config::fail("/involution", "this task needs an involution");
  auto cocycle = config::parse_cocycle(group, ex);
  return config::detail::at_field("/cocycle", [&] {
    return ExtensionSystem<G>(shift, normalized_potential(shift, need_potential(ex)), group, cocycle, ex.involution);
  });
}

inline json doubles(const std::vector<double>& v) { return json(v); }

inline std::pair<int, int> window(const config::Params& p) {
  return p.window ? *p.window : std::make_pair(std::max(1, p.n_max / 2), p.n_max);
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline TaskOutput task_pressure(const Experiment& ex) {
  const Shift& shift = detail::need_shift(ex);
  const Potential& pot = detail::need_potential(ex);
  const auto& p = ex.params;
  TaskOutput out;
  json& r = out.result;
  r["mixing"] = shift.mixing();
  r["transitive"] = shift.transitive();
  r["period"] = shift.period();
  if (!shift.mixing()) throw Error(ErrorKind::NotMixing, "/shift: pressure needs a mixing shift");
  json bip = json::array();
  for (int b : check_bip(shift).witness) bip.push_back(ex.alphabet.name(b));
  r["bip_witness"] = bip;

  const int a = p.base_letter.value_or(0);
  const PressureEstimate est = pressure_estimate(shift, pot, a, p.n_lo, p.n_hi);
  r["base_letter"] = ex.alphabet.name(a);
  r["pressure"] = est.eigenvalue_pressure;
  r["eigenvalue_pressure"] = est.eigenvalue_pressure;
  r["orbit_slope"] = est.orbit_slope;
  r["orbit_intercept"] = est.orbit_intercept;
  r["discrepancy"] = est.discrepancy;
  r["window"] = {p.n_lo, p.n_hi};
  json slopes = json::object();
  for (int b = 0; b < shift.alphabet_size(); ++b)
    slopes[ex.alphabet.name(b)] = pressure_estimate(shift, pot, b, p.n_lo, p.n_hi).orbit_slope;
  r["orbit_slope_by_letter"] = slopes;

  Table z{{"n", "log_z", "log_z_over_n"}, {}};
  for (int n = 1; n <= p.n_hi; ++n) {
    const double lz = partition_function(shift, pot, a, n);
    z.rows.push_back({std::int64_t{n}, lz, lz / n});
  }
  out.csv["pressure.csv"] = std::move(z);

  const Potential normed = normalize(shift, pot);
  r["normalized_memory"] = normed.memory();
  r["normalized_pressure"] = std::log(leading_eigen(transfer_matrix(shift, normed).matrix).lambda);
  const ConformalReport gibbs = gibbs_check(shift, normed, p.gibbs_n_max);
  const ConformalReport conf = conformal_check(shift, normed, p.gibbs_n_max);
  r["gibbs"] = {{"bound", gibbs.bound}, {"max_ratio", gibbs.max_ratio},
                {"violations", gibbs.violations}, {"checked", gibbs.checked}, {"n_max", p.gibbs_n_max}};
  r["conformal"] = {{"bound", conf.bound}, {"max_ratio", conf.max_ratio},
                    {"violations", conf.violations}, {"checked", conf.checked}, {"n_max", p.gibbs_n_max}};

  const Involution* inv = ex.involution ? &*ex.involution : nullptr;
  const VariationReport var = variation_constants(shift, pot, inv, p.variation_n_max, inv != nullptr);
  r["log_c"] = detail::doubles(var.log_c);
  if (inv) r["log_d"] = detail::doubles(var.log_d);
  Table vt{{"n", "log_c"}, {}};
  if (inv) vt.header.push_back("log_d");
  for (std::size_t i = 0; i < var.log_c.size(); ++i) {
    std::vector<Cell> row{static_cast<std::int64_t>(i + 1), var.log_c[i]};
    if (inv) row.emplace_back(var.log_d[i]);
    vt.rows.push_back(std::move(row));
  }
  out.csv["variation.csv"] = std::move(vt);
  return out;
}

namespace detail {

template <GroupBackend G>
ReturnSeries series_for(const ExtensionSystem<G>& ext, const config::Params& p) {
  if constexpr (std::is_same_v<G, FreeGroup>) {
    if (p.series_method == "radial" || (p.series_method == "auto" && !p.ball_radius)) {
      try {
        return radial_return_series(ext, p.n_max);
      } catch (const Error&) {
        if (p.series_method == "radial") throw;
      }
    }
  } else if (p.series_method == "radial") {
    throw Error(ErrorKind::Config, "/params/series_method: radial series needs a free group");
  }
  return return_weight_series(ext, p.n_max, p.ball_radius, p.ball_cap);
}

template <GroupBackend G>
void extension_task(const G& group, const Experiment& ex, std::uint64_t seed, TaskOutput& out) {
  const auto& p = ex.params;
  const ExtensionSystem<G> ext = make_extension(group, ex, false);
  json& r = out.result;
  r["symmetric"] = ext.symmetric();
  r["potential_memory"] = ext.potential().memory();

  const ReturnSeries series = series_for(ext, p);
  r["series_method"] = series.method;
  r["rate_estimate"] = series.estimate;
  Table rt{{"n", "log_r", "loss"}, {}};
  for (const auto& s : series.samples) rt.rows.push_back({std::int64_t{s.n}, s.log_r, s.loss});
  out.csv["returns.csv"] = std::move(rt);

  const auto [lo, hi] = window(p);
  try {
    const Verdict v = amenability_verdict(series, lo, hi, p.threshold, p.max_loss_fraction);
    r["verdict"] = {{"kind", to_string(v.kind)},
                    {"rate", v.rate},
                    {"window", {lo, hi}},
                    {"threshold", p.threshold},
                    {"points", v.points},
                    {"max_loss", v.max_loss},
                    {"exponential", {{"coefficients", v.exponential.coefficients}, {"rss", v.exponential.rss}}},
                    {"polynomial", {{"coefficients", v.polynomial.coefficients}, {"rss", v.polynomial.rss}}},
                    {"joint", {{"coefficients", v.joint.coefficients}, {"rss", v.joint.rss}}}};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::TruncationDominates) throw;
    r["verdict"] = error_json(e);
    out.status = kBudget;
  }

  // Extension partition functions at the identity against the base ones.
  const int a = p.base_letter.value_or(0);
  const int n_part = std::min(p.n_max, 12);
  Table pt{{"n", "log_z", "log_z_ext_id"}, {}};
  for (int n = 1; n <= n_part; ++n)
    pt.rows.push_back({std::int64_t{n}, partition_function(ext.shift(), ext.potential(), a, n),
                       extension_partition_function(ext, a, group.identity(), n, p.ball_cap)});
  out.csv["partition.csv"] = std::move(pt);

  if (ext.shift().mixing()) {
    const ConnectorReport conn = trivial_connectors(ext, p.connector_max_len);
    json list = json::array();
    for (const auto& [pair, w] : conn.connectors)
      list.push_back({{"from", ex.alphabet.name(pair.first)},
                      {"to", ex.alphabet.name(pair.second)},
                      {"word", ex.alphabet.format(w)}});
    json missing = json::array();
    for (const auto& [b, c] : conn.missing) missing.push_back({ex.alphabet.name(b), ex.alphabet.name(c)});
    r["connectors"] = {{"established", conn.established()}, {"max_len", conn.max_len},
                       {"words", list}, {"missing", missing}};
  }

  if (p.lambda_samples > 0) {
    // Lambda_k on random nonnegative functions constant on fibres.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const ExtensionOperator<G> op(ext, std::nullopt, p.ball_cap);
    const auto support = ball(group, 2, ext.generators(), p.ball_cap);
    double worst = 0.0;
    for (int i = 0; i < p.lambda_samples; ++i) {
      FibreFunction<G> f;
      for (const auto& g : support)
        if (unif(rng) < 0.5) f[g] = unif(rng);
      if (f.empty()) f[group.identity()] = 1.0;
      worst = std::max(worst, lambda_k(op, f, p.lambda_k));
    }
    r["lambda_check"] = {{"samples", p.lambda_samples}, {"k", p.lambda_k}, {"max_lambda", worst},
                         {"seed", seed}, {"support", support.size()}};
  }
}

template <GroupBackend G>
void kesten_task(const G& group, const Experiment& ex, TaskOutput& out) {
  const auto& p = ex.params;
  const ExtensionSystem<G> ext = make_extension(group, ex, true);
  const Word anchor = ex.anchor.value_or(Word{});
  const KestenWalk<G> walk = build_kesten_walk(ext, anchor, p.walk_n, ex.xi);
  json& r = out.result;
  r["anchor"] = ex.alphabet.format(walk.anchor);
  r["xi"] = ex.alphabet.format(walk.xi);
  r["n"] = walk.n;
  r["log_total"] = walk.log_total;
  r["words"] = walk.words;
  r["support"] = walk.weights.size();

  double asym = 0.0;
  Table wt{{"element", "weight"}, {}};
  for (const auto& [g, w] : walk.weights) {
    asym = std::max(asym, std::abs(w - walk.weight(group.inverse(g))));
    wt.rows.push_back({group.format(g), w});
  }
  out.csv["walk.csv"] = std::move(wt);
  r["symmetry_residual"] = asym;
  r["self_adjoint_residual"] = self_adjoint_check(group, walk.weights, p.self_adjoint_radius, ext.generators());
  r["self_adjoint_radius"] = p.self_adjoint_radius;

  const SpectralEstimate est =
      spectral_radius_estimate(group, walk.weights, p.k_max, p.ball_radius, ext.generators(), p.ball_cap);
  r["spectral"] = {{"method", est.method},
                   {"k_max", p.k_max},
                   {"rho_hat", est.rho_hat.empty() ? 0.0 : est.rho_hat.back()},
                   {"lower_bound", est.lower_bound},
                   {"monotone", est.monotone},
                   {"max_loss", est.max_loss}};
  Table st{{"k", "rho_hat", "ratio_bound"}, {}};
  for (std::size_t k = 0; k < est.rho_hat.size(); ++k)
    st.rows.push_back({static_cast<std::int64_t>(k + 1), est.rho_hat[k], est.ratio_bound[k]});
  out.csv["spectral.csv"] = std::move(st);
}

template <GroupBackend G>
std::vector<typename G::element> default_K(const G& group) {
  if constexpr (std::is_same_v<G, FiniteGroup>) {
    return group.elements();
  } else {
    return group.standard_generators();
  }
}

template <GroupBackend G>
json certificate_json(const G& group, const FolnerCertificate<G>& c) {
  (void)group;
  return {{"family", c.family}, {"size", c.set.size()}, {"defect", c.defect}};
}

template <GroupBackend G>
void folner_task(const G& group, const Experiment& ex, TaskOutput& out) {
  const auto& p = ex.params;
  FolnerBudget budget;
  budget.max_radius = p.folner_max_radius;
  budget.max_set_size = p.folner_max_set;
  budget.greedy_steps = p.folner_greedy_steps;
  const auto K = p.folner_K.is_null() ? default_K(group) : config::parse_elements(group, p.folner_K, "/params/folner_K");
  json& r = out.result;
  json kj = json::array();
  for (const auto& h : K) kj.push_back(group.format(h));
  r["K"] = kj;
  r["epsilon"] = p.epsilon;
  const FolnerResult<G> res = config::detail::at_field("/params/folner_K", [&] {
    return folner_search(group, K, p.epsilon, budget);
  });
  r["found"] = res.found;
  r["candidates"] = res.candidates;
  r["best"] = certificate_json(group, res.best);
  Table tt{{"index", "family", "size", "defect"}, {}};
  for (std::size_t i = 0; i < res.trace.size(); ++i)
    tt.rows.push_back({static_cast<std::int64_t>(i), res.trace[i].family,
                       static_cast<std::uint64_t>(res.trace[i].size), res.trace[i].defect});
  out.csv["folner.csv"] = std::move(tt);
  Table set{{"element"}, {}};
  for (const auto& g : res.best.set) set.rows.push_back({group.format(g)});
  out.csv["folner_set.csv"] = std::move(set);

  if (p.folner_schedule.is_array() && !p.folner_schedule.empty()) {
    std::vector<std::vector<typename G::element>> Ks;
    std::vector<double> eps;
    for (std::size_t i = 0; i < p.folner_schedule.size(); ++i) {
      const std::string path = "/params/folner_schedule/" + std::to_string(i);
      const json& stage = p.folner_schedule[i];
      Ks.push_back(stage.contains("K") ? config::parse_elements(group, stage.at("K"), path + "/K") : K);
      eps.push_back(config::detail::get<double>(stage, "epsilon", path, p.epsilon));
    }
    const auto seq = folner_sequence(group, Ks, eps, budget);
    json stages = json::array();
    Table sq{{"stage", "family", "size", "defect"}, {}};
    for (std::size_t i = 0; i < seq.certificates.size(); ++i) {
      stages.push_back(certificate_json(group, seq.certificates[i]));
      sq.rows.push_back({static_cast<std::int64_t>(i + 1), seq.certificates[i].family,
                         static_cast<std::uint64_t>(seq.certificates[i].set.size()), seq.certificates[i].defect});
    }
    r["sequence"] = {{"stages", stages}, {"completed", !seq.failed_stage.has_value()}};
    if (seq.failed_stage) {
      r["sequence"]["failed_stage"] = *seq.failed_stage;
      r["sequence"]["failed_best_defect"] = seq.failed_best_defect;
    }
    out.csv["folner_sequence.csv"] = std::move(sq);
  }
}

}  // namespace detail

inline TaskOutput task_extension_pressure(const Experiment& ex, std::uint64_t seed) {
  TaskOutput out;
  detail::with_group(ex, [&](const auto& g) { detail::extension_task(g, ex, seed, out); });
  return out;
}

inline TaskOutput task_kesten(const Experiment& ex) {
  TaskOutput out;
  detail::with_group(ex, [&](const auto& g) { detail::kesten_task(g, ex, out); });
  return out;
}

inline TaskOutput task_cogrowth(const Experiment& ex) {
  TaskOutput out;
  const auto& spec = detail::need_group(ex);
  detail::with_group(ex, [&](const auto& g) {
    const auto hom = config::parse_homomorphism(g, spec);
    const auto counts = cogrowth_series(hom, ex.params.n_max, ex.params.ball_cap);
    const int r = hom.domain().rank();
    Table t{{"n", "c_n", "growth", "log_c_over_n"}, {}};
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double n = static_cast<double>(i + 1);
      const double c = static_cast<double>(counts[i]);
      t.rows.push_back({static_cast<std::int64_t>(i + 1), counts[i], c > 0 ? std::pow(c, 1.0 / n) : 0.0,
                        c > 0 ? std::log(c) / n : kNegInf});
    }
    out.csv["cogrowth.csv"] = std::move(t);
    out.result["rank"] = r;
    out.result["free_growth"] = 2 * r - 1;
    out.result["counts"] = counts;
    const double last = counts.empty() ? 0.0 : static_cast<double>(counts.back());
    out.result["last_growth"] = last > 0 ? std::pow(last, 1.0 / static_cast<double>(counts.size())) : 0.0;
  });
  return out;
}

inline TaskOutput task_folner(const Experiment& ex) {
  TaskOutput out;
  detail::with_group(ex, [&](const auto& g) { detail::folner_task(g, ex, out); });
  return out;
}

/// The three symmetry properties, checked individually so a failing config
/// gets a full report.
inline TaskOutput task_verify_symmetry(const Experiment& ex) {
  const Shift& shift = detail::need_shift(ex);
  if (!ex.raw.contains("involution")) config::fail("/involution", "this task needs an involution");
  TaskOutput out;
  json& r = out.result;
  const int m = shift.alphabet_size();
  std::vector<int> dagger(m, -1);
  for (const auto& [from, to] : ex.raw.at("involution").items()) {
    const int a = ex.alphabet.index(from, "/involution/" + from);
    const int b = ex.alphabet.letter(to, "/involution/" + from);
    dagger[a] = b;
    if (dagger[b] == -1) dagger[b] = a;
  }
  bool p1 = true, p2 = true;
  json failures = json::array();
  for (int v = 0; v < m; ++v)
    if (dagger[v] < 0 || dagger[dagger[v]] != v) {
      p1 = false;
      failures.push_back("involutive at " + ex.alphabet.name(v));
    }
  if (p1)
    for (int v = 0; v < m; ++v)
      for (int w = 0; w < m; ++w)
        if (shift.allowed(v, w) != shift.allowed(dagger[w], dagger[v])) {
          p2 = false;
          failures.push_back("admissibility at " + ex.alphabet.name(v) + ex.alphabet.name(w));
        }
  r["involutive"] = p1;
  r["reverses_admissibility"] = p2;
  if (ex.group && !ex.cocycle.is_null() && p1) {
    bool p3 = true;
    detail::with_group(ex, [&](const auto& g) {
      const auto psi = config::parse_cocycle(g, ex);
      for (int v = 0; v < m; ++v)
        if (!(psi[dagger[v]] == g.inverse(psi[v]))) {
          p3 = false;
          failures.push_back("cocycle at " + ex.alphabet.name(v));
        }
    });
    r["inverts_cocycle"] = p3;
    p2 = p2 && p3;
  }
  if (ex.potential && p1 && r["reverses_admissibility"].get<bool>()) {
    const Involution inv = Involution::validate(shift, dagger);
    const auto var = variation_constants(shift, *ex.potential, &inv, ex.params.variation_n_max, true);
    r["log_d"] = detail::doubles(var.log_d);
    Table t{{"n", "log_d"}, {}};
    for (std::size_t i = 0; i < var.log_d.size(); ++i)
      t.rows.push_back({static_cast<std::int64_t>(i + 1), var.log_d[i]});
    out.csv["symmetry.csv"] = std::move(t);
  }
  r["failures"] = failures;
  r["all_pass"] = p1 && p2;
  if (!(p1 && p2)) out.status = kValidation;
  return out;
}

struct RunOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

inline TaskOutput run_task(const Experiment& ex, const std::string& task, const RunOptions& opt);

/// Tasks a config supports, in the fixed report order.
inline std::vector<std::string> applicable_tasks(const Experiment& ex) {
  std::vector<std::string> out;
  const bool ext = ex.shift && ex.potential && ex.group && !ex.cocycle.is_null();
  if (ex.shift && ex.potential) out.push_back("pressure");
  if (ex.shift && ex.raw.contains("involution")) out.push_back("verify-symmetry");
  if (ext) out.push_back("extension-pressure");
  if (ext && ex.raw.contains("involution")) out.push_back("kesten");
  if (ex.group && ex.group->rank) out.push_back("cogrowth");
  if (ex.group) out.push_back("folner");
  return out;
}

/// Runs every applicable task on a worker pool; results merge in task order,
/// so the output does not depend on the thread count.
inline TaskOutput task_report(const Experiment& ex, const RunOptions& opt) {
  const auto tasks = applicable_tasks(ex);
  std::vector<TaskOutput> results(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = run_task(ex, tasks[i], opt);
      } catch (const Error& e) {
        results[i].result = detail::error_json(e);
        results[i].status = exit_code_for(e);
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(tasks.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  TaskOutput out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    out.result[tasks[i]] = std::move(results[i].result);
    out.status = std::max(out.status, results[i].status);
    for (auto& [name, table] : results[i].csv) out.csv[name] = std::move(table);
  }
  out.result["tasks"] = tasks;
  return out;
}

inline TaskOutput run_task(const Experiment& ex, const std::string& task, const RunOptions& opt) {
  if (ex.involution_error && task != "verify-symmetry" && task != "report") throw *ex.involution_error;
  if (task == "pressure") return task_pressure(ex);
  if (task == "extension-pressure") return task_extension_pressure(ex, opt.seed);
  if (task == "kesten") return task_kesten(ex);
  if (task == "cogrowth") return task_cogrowth(ex);
  if (task == "folner") return task_folner(ex);
  if (task == "verify-symmetry") return task_verify_symmetry(ex);
  if (task == "report") return task_report(ex, opt);
  config::fail("/task", "unknown task '" + task + "'");
}

/// results.json plus one CSV per series.
inline void write_outputs(const std::filesystem::path& dir, const Experiment& ex, const std::string& task,
                          const TaskOutput& out) {
  std::filesystem::create_directories(dir);
  json doc{{"task", task},
           {"status", out.status},
           {"version", kVersion},
           {"config", ex.raw},
           {"results", out.result}};
  std::ofstream(dir / "results.json", std::ios::binary) << config::to_json_text(doc);
  for (const auto& [name, table] : out.csv) std::ofstream(dir / name, std::ios::binary) << config::to_csv(table);
}

}  // namespace kesten::run
