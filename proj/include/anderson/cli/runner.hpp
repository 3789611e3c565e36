#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "anderson/cli/config.hpp"
#include "anderson/decay.hpp"
#include "anderson/field_io.hpp"
#include "anderson/friedrichs.hpp"
#include "anderson/geometry.hpp"
#include "anderson/io.hpp"
#include "anderson/iteration.hpp"
#include "anderson/oracle.hpp"
#include "anderson/schwarz.hpp"
#include "anderson/spectra.hpp"
#include "anderson/start_block.hpp"

namespace anderson::cli {

namespace fs = std::filesystem;

struct RunOptions {
  fs::path out_dir;  // empty: resolved from the config and the environment
  int threads = 1;
  bool full = false;
};

struct RunResult {
  fs::path out_dir;
  json manifest;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"gen",          "geometry",    "assemble",   "oracle",  "pinvit",
                                              "block",        "green-decay", "eigen-decay", "gap-scan", "friedrichs",
                                              "spectra-compare", "fig1",     "fig2"};
  return names;
}

/// Output directory: --out, else the config's dir; relative paths are
/// placed under $ANDERSON_OUT_ROOT when it is set.
inline fs::path resolve_out_dir(const ExperimentConfig& cfg, const RunOptions& opt) {
  fs::path dir = opt.out_dir.empty() ? fs::path(cfg.output.dir) : opt.out_dir;
  if (dir.is_relative())
    if (const char* root = std::getenv("ANDERSON_OUT_ROOT"); root && *root) dir = fs::path(root) / dir;
  return dir;
}

/// Canned parameter shapes of the two figure pipelines.
inline ExperimentConfig canned_config(const std::string& command, ExperimentConfig cfg, bool full) {
  if (command == "fig1") {
    cfg.field.kind = "iid";
    cfg.field.d = 2;
    cfg.field.inv_eps = 64;
    cfg.field.alpha = 1.0;
    cfg.field.beta.reset();
    cfg.field.beta_scale = 4.0;
    cfg.field.p_beta = 0.5;
    cfg.subgrid.m = full ? 8 : 2;
    cfg.iteration.n_ev = 3;
  } else if (command == "fig2") {
    cfg.field.kind = "iid";
    cfg.field.d = 1;
    cfg.field.inv_eps = 256;
    cfg.field.alpha = 1.0;
    cfg.field.beta.reset();
    cfg.field.beta_scale = 8.0;
    cfg.field.p_beta = 0.5;
    cfg.subgrid.m = full ? 8 : 2;
    cfg.iteration.n_ev = 160;
  }
  return cfg;
}

namespace detail {

/// Writes artifacts and records their content hashes for the manifest.
class Artifacts {
 public:
  Artifacts(fs::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {}

  const std::string& hash() const { return hash_; }

  void text(const std::string& name, const std::string& content) {
    write_file(dir_ / name, content);
    outputs_[name] = content_hash(content);
  }
  void csv(const std::string& name, const CsvTable& t) { text(name, t.str()); }
  void json_file(const std::string& name, json j) {
    j["config_hash"] = hash_;
    text(name, j.dump(2) + "\n");
  }
  const std::map<std::string, std::string>& outputs() const { return outputs_; }

 private:
  fs::path dir_;
  std::string hash_;
  std::map<std::string, std::string> outputs_;
};

struct Context {
  const ExperimentConfig& cfg;
  const RunOptions& opt;
  Artifacts& out;

  PotentialField field() const { return make_field_from(cfg.field, cfg.seed); }
  SubgridSpec sub(const PotentialField& f) const { return SubgridSpec{f.grid, cfg.subgrid.m}; }
  AssembledSystem system(const PotentialField& f) const { return assemble(f, sub(f), cfg.subgrid.dof_limit); }
  Spectrum oracle(const AssembledSystem& sys, int n) const {
    return oracle_spectrum(sys, std::min<int>(n, static_cast<int>(sys.size())), cfg.output.dense_limit);
  }
  BuiltPreconditioner preconditioner(const AssembledSystem& sys, int L) const {
    SchwarzOptions so;
    so.mode = cfg.preconditioner.mode == "theoretical" ? ThetaMode::theoretical : ThetaMode::adaptive;
    so.c_L = cfg.preconditioner.c_L;
    so.target_gamma = cfg.preconditioner.target_gamma;
    so.k_inner = cfg.preconditioner.k_inner.value_or(1);
    so.lanczos_iters = cfg.preconditioner.lanczos_iters;
    so.threads = opt.threads;
    so.seed = cfg.seed;
    auto built = build_preconditioner(sys, L, so);
    if (cfg.preconditioner.k_inner) built.prec.k_inner = *cfg.preconditioner.k_inner;
    return built;
  }
  bool drawable(const PotentialField& f) const { return cfg.analysis.svg && f.grid.d <= 2; }
};

inline json coord_json(const Coord& c, int d) { return std::vector<int>(c.begin(), c.begin() + d); }

inline CsvTable spectrum_table(const Spectrum& s, const std::string& hash) {
  CsvTable t({{"index", "1"}, {"eigenvalue", "1/length^2"}, {"residual", "relative"}}, hash);
  for (int i = 0; i < s.size(); ++i) t.row({static_cast<double>(i + 1), s.values[i], s.residuals[i]});
  return t;
}

inline CsvTable iteration_table(const IterationState& st, const std::string& hash) {
  CsvTable t({{"step", "1"}, {"err", "energy norm"}, {"rate", "1"}, {"support_cells", "cells"}}, hash);
  const auto rates = st.rates();
  for (std::size_t k = 0; k < st.history.size(); ++k)
    t.row({static_cast<double>(k), st.history[k], k == 0 ? std::numeric_limits<double>::quiet_NaN() : rates[k - 1],
           static_cast<double>(st.support[k])});
  return t;
}

inline std::vector<double> as_doubles(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

inline int choose_K(const Context& ctx, const PotentialField& field, const Spectrum& s) {
  const auto& it = ctx.cfg.iteration;
  if (it.K_source == "user") return *it.K;
  if (it.K_source == "estimate") return static_cast<int>(estimate_K(analyze_geometry(field), it.ell));
  return gap_scan(s.values, s.size() - 1, it.gap_target).chosen_K;
}

// ---------------------------------------------------------------------------
// Pipelines

inline void run_gen(Context& ctx) {
  const auto field = ctx.field();
  ctx.out.text("field.json", field_to_json(field).dump(2) + "\n");
  if (ctx.drawable(field))
    ctx.out.text("field.svg", svg_heatmap(as_doubles(field.occupancy), field.grid.d, field.grid.inv_eps,
                                          "potential (black = beta)", ctx.out.hash()));
}

inline void run_geometry(Context& ctx) {
  const auto field = ctx.field();
  const auto st = analyze_geometry(field);
  json j;
  j["L"] = st.L;
  j["kappa"] = st.kappa;
  j["maximal_alpha_cubes"] = st.maximal_alpha_cubes.size();
  j["has_valleys"] = st.has_valleys;
  json counts = json::object(), aniso = json::object(), ks = json::object();
  for (auto [w, n] : st.valley_counts) counts[std::to_string(w)] = n;
  for (auto [w, r] : st.anisotropy) aniso[std::to_string(w)] = r;
  if (st.has_valleys)
    for (int ell = 1; ell < st.max_valley_width(); ++ell) ks[std::to_string(ell)] = estimate_K(st, ell);
  j["valley_counts"] = counts;
  j["anisotropy"] = aniso;
  j["estimate_K"] = ks;
  ctx.out.json_file("geometry.json", j);
  CsvTable cubes({{"anchor0", "cells"}, {"anchor1", "cells"}, {"anchor2", "cells"}, {"side", "cells"}},
                 ctx.out.hash());
  for (const auto& c : st.maximal_alpha_cubes)
    cubes.row({double(c.anchor[0]), double(c.anchor[1]), double(c.anchor[2]), double(c.side)});
  ctx.out.csv("maximal_cubes.csv", cubes);
}

inline void run_assemble(Context& ctx) {
  const auto field = ctx.field();
  const auto sys = ctx.system(field);
  const auto fh = field_hash(field);
  json j;
  j["n"] = sys.size();
  j["h"] = sys.sub.h();
  j["m"] = sys.sub.m;
  j["nnz_A"] = sys.A.nonZeros();
  j["field_hash"] = fh;
  ctx.out.json_file("system.json", j);
  if (ctx.cfg.analysis.dump_matrices) {
    for (auto [name, mat] : {std::pair{"A", &sys.A}, std::pair{"K", &sys.K}, std::pair{"M", &sys.M}}) {
      auto [body, side] = matrix_dump(*mat, sys.sub.h(), fh);
      ctx.out.text(std::string("matrix_") + name + ".txt", body);
      ctx.out.json_file(std::string("matrix_") + name + ".json", side);
    }
  }
}

inline void run_oracle(Context& ctx) {
  const auto field = ctx.field();
  const auto sys = ctx.system(field);
  const auto s = ctx.oracle(sys, ctx.cfg.iteration.n_ev);
  ctx.out.csv("spectrum.csv", spectrum_table(s, ctx.out.hash()));
  ctx.out.json_file("spectrum.json", {{"method", s.method}, {"tolerance", s.tolerance}, {"n_ev", s.size()},
                                      {"n", sys.size()}});
  ctx.out.csv("ground_state.csv", vector_table(s.vector(0), "u1", "1/sqrt(volume)", ctx.out.hash()));
  if (ctx.drawable(field))
    ctx.out.text("ground_state.svg", svg_heatmap(cell_masses(sys, s.vector(0)), field.grid.d, field.grid.inv_eps,
                                                 "ground state cell mass", ctx.out.hash()));
}

inline void run_pinvit(Context& ctx) {
  const auto field = ctx.field();
  const auto sys = ctx.system(field);
  const auto s = ctx.oracle(sys, 2);
  const Vec u1 = s.vector(0);
  const auto geo = analyze_geometry(field);
  const auto built = ctx.preconditioner(sys, geo.L);
  Vec v0;
  CellMask mask0;
  if (!field.valleys.empty()) {
    const auto block = build_start_valleys(field, sys, 1);
    v0 = block.vectors[0];
    mask0 = block.masks[0];
  } else {
    CounterRng rng(ctx.cfg.seed, 0x5a);
    v0.resize(static_cast<Eigen::Index>(sys.size()));
    for (auto& x : v0) x = rng.normal();
    mask0 = CellMask(field.grid, true);
  }
  const std::optional<double> E1 =
      ctx.cfg.iteration.scaling == "oracle" ? std::optional<double>(s.values[0]) : std::nullopt;
  const auto st = pinvit(built.prec, sys, E1, v0, mask0, ctx.cfg.iteration.steps, &u1);
  ctx.out.csv("pinvit_log.csv", iteration_table(st, ctx.out.hash()));
  json j;
  j["E1"] = s.values[0];
  j["gap"] = s.values[0] / s.values[1];
  j["gamma"] = built.contraction.gamma;
  j["k_inner"] = built.prec.k_inner;
  j["steps"] = ctx.cfg.iteration.steps;
  j["final_err"] = st.history.back();
  j["mask_cells"] = st.masks[0].count();
  j["start_cells"] = mask0.count();
  ctx.out.json_file("pinvit.json", j);
}

inline void run_block(Context& ctx) {
  const auto field = ctx.field();
  const auto sys = ctx.system(field);
  const auto& it = ctx.cfg.iteration;
  const auto s = ctx.oracle(sys, it.n_ev);
  const Vec u1 = s.vector(0);
  const int K = choose_K(ctx, field, s);
  require(K + 1 <= s.size(), "block: K + 1 exceeds the computed spectrum; raise iteration.n_ev");
  const double gap = s.values[0] / s.values[K];
  const auto start = build_start_valleys(field, sys, K, &s);
  json rep;
  rep["K"] = K;
  rep["K_source"] = it.K_source;
  rep["c_inv_norm"] = start.c_inv_norm;
  rep["max_rayleigh"] = *std::max_element(start.rayleigh.begin(), start.rayleigh.end());
  rep["gap"] = gap;
  ctx.out.json_file("start_block.json", rep);
  const auto exact = block_iteration(sys, s.values[0], start, it.steps, &u1, ctx.opt.threads);
  ctx.out.csv("block_log.csv", iteration_table(exact, ctx.out.hash()));
  if (!it.inexact) return;
  const auto geo = analyze_geometry(field);
  auto built = ctx.preconditioner(sys, geo.L);
  const int k = block_steps_for(it.tol, gap);
  if (!ctx.cfg.preconditioner.k_inner && !ctx.cfg.preconditioner.target_gamma)
    built.prec.k_inner = k_inner_for(built.contraction.gamma, gap, k);
  const std::optional<double> E1 = it.scaling == "oracle" ? std::optional<double>(s.values[0]) : std::nullopt;
  const auto res = inexact_block_iteration(built.prec, built.contraction.gamma, sys, E1, start, it.tol, gap, &u1);
  ctx.out.csv("inexact_log.csv", iteration_table(res.state, ctx.out.hash()));
  const double err0 = res.state.history.front();
  const double final_err = energy_norm(sys, res.v - u1);
  const CellMask supp = support_cells(sys.sub, res.v);
  json j;
  j["k"] = res.steps;
  j["k_inner"] = built.prec.k_inner;
  j["gamma"] = built.contraction.gamma;
  j["gamma_bar"] = res.gamma_bar;
  j["err0"] = err0;
  j["final_err"] = final_err;
  j["final_over_tol_err0"] = final_err / (it.tol * err0);
  j["support_cells"] = supp.count();
  j["allowed_cells"] = start.union_mask().dilated(res.steps * built.prec.k_inner).count();
  j["support_contained"] = supp.subset_of(start.union_mask().dilated(res.steps * built.prec.k_inner));
  ctx.out.json_file("inexact.json", j);
}

inline void run_green_decay(Context& ctx) {
  const auto field = ctx.field();
  const auto sys = ctx.system(field);
  const auto geo = analyze_geometry(field);
  const auto built = ctx.preconditioner(sys, geo.L);
  const auto source = static_cast<std::size_t>(ctx.cfg.analysis.source_cell.value_or(
      static_cast<int>(field.grid.num_cells() / 2)));
  const auto g = green_decay(sys, built.prec, built.contraction.gamma, source, ctx.cfg.analysis.k_max);
  CsvTable diag({{"step", "1"},
                 {"energy_error", "relative energy norm"},
                 {"residual_anorm", "energy norm"},
                 {"support_cells", "cells"},
                 {"gamma_running", "1"},
                 {"bound", "1"}},
                ctx.out.hash());
  for (std::size_t k = 0; k < g.error.size(); ++k)
    diag.row({double(k + 1), g.error[k], g.residual[k], double(g.support[k]),
              std::pow(g.error[k], 1.0 / double(k + 1)), g.bound[k]});
  ctx.out.csv("green_diagnostics.csv", diag);
  CsvTable ann({{"radius", "eps layers"}, {"annulus_energy", "energy norm"}}, ctx.out.hash());
  for (std::size_t k = 0; k < g.profile.radii.size(); ++k)
    ann.row({double(g.profile.radii[k]), g.profile.annulus_energies[k]});
  ctx.out.csv("green_annulus.csv", ann);
  json j;
  j["source_cell"] = source;
  j["gamma"] = built.contraction.gamma;
  j["theta"] = built.prec.theta;
  j["support_contained"] = g.support_contained;
  j["annulus_rate"] = g.profile.fitted_rate;
  j["annulus_r2"] = g.profile.fit_quality;
  j["error_rate"] = g.error_rate;
  j["error_r2"] = g.error_fit_quality;
  ctx.out.json_file("green.json", j);
}

inline json profile_json(const DecayProfile& p, int d) {
  json j;
  j["centers"] = json::array();
  for (const auto& c : p.centers) j["centers"].push_back(coord_json(c, d));
  j["rate"] = p.fitted_rate;
  j["r2"] = p.fit_quality;
  j["rate_k2"] = p.fitted_rate_k2;
  j["r2_k2"] = p.fit_quality_k2;
  j["degenerate"] = p.degenerate;
  j["total_energy"] = p.total_energy;
  return j;
}

inline CsvTable profile_table(const DecayProfile& p, const std::string& hash) {
  CsvTable t({{"radius", "eps layers"}, {"annulus_energy", "energy norm"}, {"relative", "1"}}, hash);
  for (std::size_t k = 0; k < p.radii.size(); ++k)
    t.row({double(p.radii[k]), p.annulus_energies[k], p.annulus_energies[k] / p.total_energy});
  return t;
}

inline void run_eigen_decay(Context& ctx) {
  const auto field = ctx.field();
  const auto sys = ctx.system(field);
  const auto s = ctx.oracle(sys, 1);
  const auto p = eigen_decay(sys, s.vector(0), std::nullopt, ctx.cfg.analysis.k_max,
                             static_cast<std::size_t>(ctx.cfg.analysis.max_centers));
  ctx.out.csv("decay.csv", profile_table(p, ctx.out.hash()));
  auto j = profile_json(p, field.grid.d);
  j["E1"] = s.values[0];
  ctx.out.json_file("decay.json", j);
  if (ctx.drawable(field))
    ctx.out.text("state.svg", svg_heatmap(cell_masses(sys, s.vector(0)), field.grid.d, field.grid.inv_eps,
                                          "ground state cell mass", ctx.out.hash()));
}

inline json gap_json(const GapReport& r) {
  return {{"chosen_K", r.chosen_K}, {"gap", r.gap}, {"target", r.target}, {"met", r.met}};
}

inline void run_gap_scan(Context& ctx) {
  const auto field = ctx.field();
  const auto sys = ctx.system(field);
  const auto s = ctx.oracle(sys, ctx.cfg.iteration.n_ev);
  const auto r = gap_scan(s.values, s.size() - 1, ctx.cfg.iteration.gap_target);
  CsvTable t({{"K", "1"}, {"gap", "1"}}, ctx.out.hash());
  for (std::size_t K = 0; K < r.gaps.size(); ++K) t.row({double(K + 1), r.gaps[K]});
  ctx.out.csv("gaps.csv", t);
  ctx.out.json_file("gap.json", gap_json(r));
}

inline void run_friedrichs(Context& ctx) {
  const auto field = ctx.field();
  const auto sys = ctx.system(field);
  const auto geo = analyze_geometry(field);
  const auto cut = build_cutoff(field, sys.sub);
  const auto rep = friedrichs_ratio(sys, cut, ctx.cfg.analysis.samples, geo.L, ctx.cfg.seed, ctx.cfg.analysis.smoothing);
  json j;
  j["L"] = rep.L;
  j["eps"] = rep.eps;
  j["max_ratio"] = rep.max_ratio;
  j["sup_ratio"] = rep.sup_ratio;
  j["max_over_eps_L"] = rep.max_over_eps_L();
  j["sup_over_eps_L"] = rep.sup_over_eps_L();
  j["samples"] = rep.samples;
  j["skipped"] = rep.skipped;
  j["max_cutoff_gradient"] = cut.max_gradient;
  j["cutoff_gradient_bound"] = cut.gradient_bound;
  ctx.out.json_file("friedrichs.json", j);
}

inline void emit_spectra(Context& ctx, const std::string& prefix, const Spectrum& a, const std::string& label_a,
                         const Spectrum& b, const std::string& label_b) {
  CsvTable t({{"index", "1"}, {"eigenvalue_" + label_a, "1/length^2"}, {"eigenvalue_" + label_b, "1/length^2"}},
             ctx.out.hash());
  const int n = std::min(a.size(), b.size());
  ScatterSeries sa{label_a, {}, {}, false}, sb{label_b, {}, {}, true};
  for (int i = 0; i < n; ++i) {
    t.row({double(i + 1), a.values[i], b.values[i]});
    sa.x.push_back(i + 1);
    sa.y.push_back(a.values[i]);
    sb.x.push_back(i + 1);
    sb.y.push_back(b.values[i]);
  }
  ctx.out.csv(prefix + ".csv", t);
  if (ctx.cfg.analysis.svg)
    ctx.out.text(prefix + ".svg", svg_scatter({sa, sb}, "spectra", "index", "eigenvalue", ctx.out.hash()));
  const double target = ctx.cfg.iteration.gap_target;
  ctx.out.json_file(prefix + ".json", {{label_a, gap_json(gap_scan(a.values, n - 1, target))},
                                       {label_b, gap_json(gap_scan(b.values, n - 1, target))}});
}

inline void run_spectra_compare(Context& ctx) {
  const auto a = ctx.field();
  FieldConfig fb = ctx.cfg.field;
  fb.kind = ctx.cfg.analysis.compare_kind;
  const auto b = make_field_from(fb, ctx.cfg.seed);
  const auto t = spectra_compare(a, b, ctx.sub(a), ctx.cfg.iteration.n_ev, ctx.cfg.output.dense_limit);
  emit_spectra(ctx, "spectra", t.a, ctx.cfg.field.kind, t.b, fb.kind);
}

inline void run_fig1(Context& ctx) {
  const auto field = ctx.field();
  const auto sys = ctx.system(field);
  const auto s = ctx.oracle(sys, ctx.cfg.iteration.n_ev);
  ctx.out.csv("fig1_spectrum.csv", spectrum_table(s, ctx.out.hash()));
  if (ctx.cfg.analysis.svg)
    ctx.out.text("fig1_field.svg", svg_heatmap(as_doubles(field.occupancy), 2, field.grid.inv_eps,
                                               "potential (black = beta)", ctx.out.hash()));
  json summary = json::array();
  for (int i = 0; i < s.size(); ++i) {
    const auto p = eigen_decay(sys, s.vector(i), std::nullopt, ctx.cfg.analysis.k_max,
                               static_cast<std::size_t>(ctx.cfg.analysis.max_centers));
    const std::string tag = "fig1_state" + std::to_string(i + 1);
    ctx.out.csv(tag + "_decay.csv", profile_table(p, ctx.out.hash()));
    if (ctx.cfg.analysis.svg)
      ctx.out.text(tag + ".svg", svg_heatmap(cell_masses(sys, s.vector(i)), 2, field.grid.inv_eps,
                                             "state " + std::to_string(i + 1) + " cell mass", ctx.out.hash()));
    auto j = profile_json(p, 2);
    j["eigenvalue"] = s.values[i];
    summary.push_back(j);
  }
  ctx.out.json_file("fig1.json", {{"states", summary}});
}

inline void run_fig2(Context& ctx) {
  FieldConfig fp = ctx.cfg.field;
  fp.kind = "periodic";
  const auto periodic = make_field_from(fp, ctx.cfg.seed);
  const auto random = ctx.field();
  const auto sp = assemble(periodic, ctx.sub(periodic), ctx.cfg.subgrid.dof_limit);
  const auto sr = ctx.system(random);
  const auto a = ctx.oracle(sp, ctx.cfg.iteration.n_ev);
  const auto b = ctx.oracle(sr, ctx.cfg.iteration.n_ev);
  emit_spectra(ctx, "fig2_spectra", a, "periodic", b, "random");
  for (auto [tag, sys, s] : {std::tuple{"periodic", &sp, &a}, std::tuple{"random", &sr, &b}}) {
    std::vector<CsvTable::Column> cols{{"node", "1"}, {"x", "length"}};
    for (int i = 1; i <= 4; ++i) cols.push_back({"u" + std::to_string(i), "1/sqrt(length)"});
    CsvTable t(cols, ctx.out.hash());
    for (std::size_t n = 0; n < sys->size(); ++n) {
      std::vector<double> row{double(n), double(n) * sys->sub.h()};
      for (int i = 0; i < 4; ++i) row.push_back(s->vectors(static_cast<Eigen::Index>(n), i));
      t.row(row);
    }
    ctx.out.csv(std::string("fig2_states_") + tag + ".csv", t);
  }
}

}  // namespace detail

/// Run one pipeline and write its artifacts plus manifest.json. Throws
/// InvalidArgument / NumericalFailure.
inline RunResult run(const std::string& command, ExperimentConfig cfg, const RunOptions& opt) {
  using namespace detail;
  static const std::map<std::string, std::function<void(Context&)>> table{
      {"gen", run_gen},
      {"geometry", run_geometry},
      {"assemble", run_assemble},
      {"oracle", run_oracle},
      {"pinvit", run_pinvit},
      {"block", run_block},
      {"green-decay", run_green_decay},
      {"eigen-decay", run_eigen_decay},
      {"gap-scan", run_gap_scan},
      {"friedrichs", run_friedrichs},
      {"spectra-compare", run_spectra_compare},
      {"fig1", run_fig1},
      {"fig2", run_fig2}};
  const auto entry = table.find(command);
  require(entry != table.end(), "unknown command '" + command + "'");
  require(opt.threads >= 1, "--threads must be >= 1");
  cfg = canned_config(command, std::move(cfg), opt.full);
  validate(cfg);
  RunResult res;
  res.out_dir = resolve_out_dir(cfg, opt);
  Artifacts out(res.out_dir, config_hash(cfg));
  Context ctx{cfg, opt, out};
  entry->second(ctx);
  json m;
  m["tool"] = "anderson";
  m["command"] = command;
  m["full"] = opt.full;
  m["threads"] = opt.threads;
  m["config_hash"] = out.hash();
  m["config"] = config_to_json(cfg);
  m["outputs"] = out.outputs();
  write_file(res.out_dir / "manifest.json", m.dump(2) + "\n");
  res.manifest = std::move(m);
  return res;
}

/// Manifest → (command, config, options) for a byte-identical rerun.
struct Rerun {
  std::string command;
  ExperimentConfig cfg;
  RunOptions opt;
};

inline Rerun load_manifest(const json& m) {
  try {
    Rerun r;
    r.command = m.at("command").get<std::string>();
    r.cfg = config_from_json(m.at("config"));
    r.opt.full = m.at("full").get<bool>();
    r.opt.threads = m.at("threads").get<int>();
    return r;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("manifest: ") + e.what());
  }
}

/// Run with exit-code mapping: 0 success, 2 configuration error, 3
/// numerical failure.
inline int run_main(const std::string& command, const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& err,
                    const std::string& context = "") {
  const std::string where = context.empty() ? "" : " (" + context + ")";
  try {
    run(command, cfg, opt);
    return 0;
  } catch (const InvalidArgument& e) {
    err << "configuration error" << where << ": " << e.what() << "\n";
    return 2;
  } catch (const NumericalFailure& e) {
    err << "numerical failure" << where << ": " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    err << "configuration error" << where << ": " << e.what() << "\n";
    return 2;
  }
}

}  // namespace anderson::cli
