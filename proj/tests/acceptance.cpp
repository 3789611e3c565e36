// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "anderson/cli/runner.hpp"

using namespace anderson;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

struct Criterion {
  int id;
  std::string name;
  double time_limit;  // seconds; <= 0 when none is required
  std::function<void(Outcome&)> body;
};

double beta_for(int inv_eps, double scale = 8.0) { return scale * inv_eps * inv_eps; }

PotentialField random_field(int d, int inv_eps, std::uint64_t seed) {
  return gen_iid(GridSpec{d, inv_eps, seed}, Amplitudes{1.0, beta_for(inv_eps)}, 0.5);
}

PotentialField periodic_field(int d, int inv_eps) {
  return gen_periodic(GridSpec{d, inv_eps, 0}, Amplitudes{1.0, beta_for(inv_eps)});
}

PotentialField single_valley(int d, int inv_eps, int L) {
  return plant_valleys(GridSpec{d, inv_eps, 0}, Amplitudes{1.0, beta_for(inv_eps)},
                       {Cuboid{{2, 2, 2}, {L, d > 1 ? L : 1, d > 2 ? L : 1}}});
}

/// Valleys of width L separated by single β-cells, packed around the torus.
PotentialField valley_array(int inv_eps, int L) {
  std::vector<Cuboid> valleys;
  for (int a = 0; a + L + 1 <= inv_eps; a += L + 1) valleys.push_back(Cuboid{{a + 1, 0, 0}, {L, 1, 1}});
  return plant_valleys(GridSpec{1, inv_eps, 0}, Amplitudes{1.0, beta_for(inv_eps)}, valleys);
}

PotentialField constant_field(int d, int inv_eps, double beta) {
  GridSpec g{d, inv_eps, 0};
  return make_field(g, Amplitudes{std::min(1.0, beta), beta}, std::vector<std::uint8_t>(g.num_cells(), 1));
}

Vec random_vec(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed, 0xacc);
  Vec v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = rng.normal();
  return v;
}

SchwarzPreconditioner bare_preconditioner(const AssembledSystem& sys) {
  SchwarzPreconditioner p;
  p.patches = build_patches(sys);
  return p;
}

// ---------------------------------------------------------------------------

void constant_potential(Outcome& o) {
  const double beta = 1024.0;
  auto field = constant_field(1, 8, beta);
  auto sys = assemble(field, SubgridSpec{field.grid, 4});
  auto s = oracle_spectrum(sys, 2);
  const double e2 = beta + 4 * std::numbers::pi * std::numbers::pi;
  o.detail << "E1-beta=" << s.values[0] - beta << " E2/expected=" << s.values[1] / e2 << " ";
  o.expect(std::abs(s.values[0] - beta) <= 1e-9 * beta, "E1 == beta");
  o.expect(std::abs(s.values[1] / e2 - 1.0) <= 0.02, "E2 within 2%");
}

void valley_sharpness(Outcome& o) {
  // εL fixed, L = 32 ε-cells wide; β = 8/ε².
  const int L = 32;
  for (int inv_eps : {16 * L, 8 * L}) {
    auto field = single_valley(1, inv_eps, L);
    auto sys = assemble(field, SubgridSpec{field.grid, 2});
    auto s = oracle_spectrum(sys, 1);
    const double width = double(L) / inv_eps;
    const double expected = 1.0 + std::numbers::pi * std::numbers::pi / (width * width);
    const double rel = s.values[0] / expected - 1.0;
    o.detail << "epsL=1/" << inv_eps / L << ": E1/expected-1=" << rel << " ";
    o.expect(std::abs(rel) <= 0.10, "within 10% at epsL=1/" + std::to_string(inv_eps / L));
  }
}

void spectral_equivalence(Outcome& o) {
  std::vector<PotentialField> fields{periodic_field(1, 16), random_field(1, 32, 1), periodic_field(2, 8),
                                     random_field(2, 16, 1)};
  for (const auto& field : fields) {
    auto sys = assemble(field, SubgridSpec{field.grid, 2});
    const auto prec = bare_preconditioner(sys);
    const double bound = std::ldexp(1.0, field.grid.d);
    double worst = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
      const Vec v = random_vec(sys.size(), 1000 + i);
      worst = std::max(worst, a_inner(sys, apply_P(prec, sys, v), v) / a_inner(sys, v, v));
    }
    o.detail << to_string(field.kind) << field.grid.d << "D max=" << worst << " ";
    o.expect(worst <= bound + 1e-10, "a(Pv,v)/a(v,v) <= 2^d");
  }
  // Smallest eigenvalue of P against the valley width.
  for (int d : {1, 2}) {
    std::vector<double> scaled;
    for (int L : {1, 2, 4}) {
      auto field = single_valley(d, d == 1 ? 32 : 16, L);
      o.expect(analyze_geometry(field).L == L, "planted width is L");
      auto sys = assemble(field, SubgridSpec{field.grid, 2});
      const auto est = estimate_contraction(bare_preconditioner(sys), sys, 300, 1);
      scaled.push_back(est.lambda_min * L * L);
    }
    const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
    o.detail << d << "D lmin*L^2={" << scaled[0] << "," << scaled[1] << "," << scaled[2]
             << "} spread=" << *hi / *lo << " vs-L1(L=4)=" << scaled[2] / scaled[0] << " ";
    // A constant C exists with C/3 <= lmin L² <= 3C.
    o.expect(*hi / *lo <= 9.0, "lmin within factor 3 of C/L^2 in " + std::to_string(d) + "D");
  }
}

void contraction(Outcome& o) {
  std::vector<PotentialField> fields{periodic_field(1, 16), random_field(1, 32, 1), periodic_field(2, 8),
                                     random_field(2, 16, 1)};
  for (int L : {1, 2, 4}) fields.push_back(single_valley(1, 32, L));
  double worst_adaptive = 0, worst_excess = -1;
  for (const auto& field : fields) {
    auto sys = assemble(field, SubgridSpec{field.grid, 2});
    const int L = analyze_geometry(field).L;
    SchwarzOptions adaptive;
    adaptive.lanczos_iters = 200;
    const auto a = build_preconditioner(sys, L, adaptive);
    worst_adaptive = std::max(worst_adaptive, a.contraction.gamma);

    SchwarzOptions theo = adaptive;
    theo.mode = ThetaMode::theoretical;
    theo.c_L = calibrate_c_L(1.0 / a.contraction.lambda_min, field.grid.d, L);
    const auto t = build_preconditioner(sys, L, theo);
    o.expect(t.contraction.gamma < 1.0, "theoretical gamma < 1");
    worst_excess = std::max(worst_excess, t.contraction.gamma - t.prec.constants.gamma_bound);
  }
  o.detail << "max adaptive gamma=" << worst_adaptive << " max(gamma - bound)=" << worst_excess << " ";
  o.expect(worst_adaptive < 1.0, "adaptive gamma < 1");
  o.expect(worst_excess <= 0.05, "calibrated gamma <= bound + 0.05");
}

void green_function(Outcome& o) {
  auto field = random_field(1, 64, 1);
  auto sys = assemble(field, SubgridSpec{field.grid, 4});
  const auto built = build_preconditioner(sys, analyze_geometry(field).L, SchwarzOptions{});
  const auto g = green_decay(sys, built.prec, built.contraction.gamma, 32, 20);
  double worst = 0;
  for (std::size_t k = 0; k < g.error.size(); ++k) worst = std::max(worst, g.error[k] / g.bound[k]);
  o.detail << "gamma=" << built.contraction.gamma << " max err/gamma^k=" << worst
           << " final err=" << g.error.back() << " ";
  o.expect(worst <= 2.0, "error <= 2 gamma^k");
  o.expect(g.support_contained, "support within k layers");
}

void inverse_power_rate(Outcome& o) {
  auto field = periodic_field(1, 4);
  auto sys = assemble(field, SubgridSpec{field.grid, 4});
  auto s = oracle_spectrum(sys, 3);
  const Vec u1 = s.vector(0);
  const double rho = s.values[0] / s.values[1];
  auto st = inverse_power(sys, s.values[0], random_vec(sys.size(), 2), 12, &u1);
  const auto rates = st.rates();
  double worst = 0;
  for (std::size_t k = 3; k < rates.size(); ++k) worst = std::max(worst, std::abs(rates[k] / rho - 1.0));
  o.detail << "rho=" << rho << " max |rate/rho-1|=" << worst << " ";
  o.expect(worst <= 0.10, "rate within 10% of E1/E2");
}

void pinvit_rate(Outcome& o) {
  auto field = random_field(1, 32, 1);
  auto sys = assemble(field, SubgridSpec{field.grid, 4});
  auto s = oracle_spectrum(sys, 2);
  const Vec u1 = s.vector(0);
  const double rho = s.values[0] / s.values[1];
  const auto built = build_preconditioner(sys, analyze_geometry(field).L, SchwarzOptions{});
  const double gamma = built.contraction.gamma;
  auto st = pinvit(built.prec, sys, s.values[0], random_vec(sys.size(), 5), CellMask(field.grid, true), 10, &u1);
  const auto rates = st.rates();
  const double worst = *std::max_element(rates.begin(), rates.end());
  o.detail << "rho=" << rho << " gamma=" << gamma << " max rate=" << worst << " ";
  o.expect(worst <= rho + gamma + 0.05, "rate <= rho + gamma + 0.05");
}

void inexact_block(Outcome& o) {
  const double tol = 1e-3;
  auto field = random_field(1, 64, 1);
  auto sys = assemble(field, SubgridSpec{field.grid, 4});
  auto s = oracle_spectrum(sys, 20);
  const Vec u1 = s.vector(0);
  const auto scan = gap_scan(s.values, s.size() - 1, 0.5);
  const int K = scan.chosen_K;
  const double gap = scan.gap;
  const auto start = build_start_valleys(field, sys, K, &s);
  auto built = build_preconditioner(sys, analyze_geometry(field).L, SchwarzOptions{});
  built.prec.k_inner = k_inner_for(built.contraction.gamma, gap, block_steps_for(tol, gap));
  const auto res = inexact_block_iteration(built.prec, built.contraction.gamma, sys, s.values[0], start, tol, gap, &u1);
  const double err0 = res.state.history.front();
  const double final_err = energy_norm(sys, res.v - u1);
  const auto allowed = start.union_mask().dilated(res.steps * built.prec.k_inner);
  o.detail << "K=" << K << " gap=" << gap << " k=" << res.steps << " k_inner=" << built.prec.k_inner
           << " final/(tol err0)=" << final_err / (tol * err0) << " ";
  o.expect(final_err <= 10 * tol * err0, "final error <= 10 tol err0");
  o.expect(support_cells(sys.sub, res.v).subset_of(allowed), "support within k k_inner layers");
}

void disorder_vs_order(Outcome& o) {
  const int inv_eps = 128, n_ev = 80;
  std::vector<int> chosen;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto field = random_field(1, inv_eps, seed);
    auto sys = assemble(field, SubgridSpec{field.grid, 2});
    const auto r = gap_scan(oracle_spectrum(sys, n_ev).values, n_ev - 1, 0.5);
    chosen.push_back(r.met ? r.chosen_K : n_ev);
  }
  std::sort(chosen.begin(), chosen.end());
  const double median = 0.5 * (chosen[9] + chosen[10]);
  auto periodic = periodic_field(1, inv_eps);
  auto psys = assemble(periodic, SubgridSpec{periodic.grid, 2});
  const auto pr = gap_scan(oracle_spectrum(psys, n_ev).values, n_ev - 1, 0.5);
  const int wells = inv_eps / 2;
  o.detail << "random median K=" << median << " (max " << chosen.back() << ") periodic K=" << pr.chosen_K
           << " (met=" << pr.met << ", wells=" << wells << ") ";
  o.expect(median <= 8, "random median K <= 8");
  o.expect(pr.met && pr.chosen_K >= wells / 2, "periodic K >= (2 eps)^-1 / 2");
}

void localization(Outcome& o) {
  // Radii stay below a quarter of the torus side so the shrinking outside
  // region does not mimic decay.
  const int inv_eps = 32, k_max = inv_eps / 4;
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto field = random_field(2, inv_eps, seed);
    auto sys = assemble(field, SubgridSpec{field.grid, 2});
    const auto p = eigen_decay(sys, oracle_spectrum(sys, 1).vector(0), std::nullopt, k_max);
    const bool ok = !p.degenerate && p.fitted_rate >= 0.2 && p.fit_quality >= 0.9;
    good += ok;
    o.detail << "seed" << seed << ":c=" << p.fitted_rate << ",R2=" << p.fit_quality << " ";
  }
  auto periodic = periodic_field(2, inv_eps);
  auto psys = assemble(periodic, SubgridSpec{periodic.grid, 2});
  const auto pp = eigen_decay(psys, oracle_spectrum(psys, 1).vector(0), std::nullopt, k_max);
  o.detail << "periodic:c=" << pp.fitted_rate << " ";
  o.expect(good >= 5, "c >= 0.2 and R2 >= 0.9 on at least 5 of 6 seeds (" + std::to_string(good) + ")");
  o.expect(std::abs(pp.fitted_rate) <= 0.05, "periodic |c| <= 0.05");
}

void friedrichs_scaling(Outcome& o) {
  // Mostly-valley field so that random samples actually probe the valleys.
  std::vector<double> sampled, exact;
  for (int L : {1, 2, 4}) {
    auto field = valley_array(60, L);
    o.expect(analyze_geometry(field).L == L, "planted width is L");
    auto sys = assemble(field, SubgridSpec{field.grid, 4});
    const auto rep = friedrichs_ratio(sys, build_cutoff(field, sys.sub), 50, L);
    sampled.push_back(rep.max_over_eps_L());
    exact.push_back(rep.sup_over_eps_L());
  }
  const auto [lo, hi] = std::minmax_element(sampled.begin(), sampled.end());
  o.detail << "max ratio/(eps L)={" << sampled[0] << "," << sampled[1] << "," << sampled[2] << "} spread=" << *hi / *lo
           << " growth(1->4)=" << sampled[2] * 4 / sampled[0] << " sup/(eps L)={" << exact[0] << "," << exact[1] << ","
           << exact[2] << "} ";
  o.expect(*hi / *lo <= 9.0, "ratio within factor 3 of linear in L");
  o.expect(sampled[0] < 2 * sampled[1] && sampled[1] < 2 * sampled[2], "ratio grows with L");

  const int inv_eps = 16;
  auto flat = constant_field(1, inv_eps, 1.0);
  auto sys = assemble(flat, SubgridSpec{flat.grid, 4});
  const auto rep = friedrichs_ratio(sys, build_cutoff(flat, sys.sub), 50, 1);
  o.detail << "constant beta: ratio/eps=" << rep.max_ratio * inv_eps << " ";
  o.expect(rep.max_ratio <= 1.5 / inv_eps, "constant beta ratio <= 1.5 eps");
}

void certificates(Outcome& o) {
  auto field = periodic_field(1, 16);
  auto sys = assemble(field, SubgridSpec{field.grid, 4});
  auto s = oracle_spectrum(sys, 40);
  const int N = 8;
  for (int ell : {1, 2}) {
    const auto c = valley_certificate(field, sys, s, N * ell);
    o.detail << "ell=" << ell << ": " << c.count_below << " below " << c.span_max << " ";
    o.expect(c.holds() && c.count_below >= N * ell, "certificate for ell=" + std::to_string(ell));
  }
}

void determinism(Outcome& o) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "anderson_acceptance";
  fs::remove_all(root);
  cli::ExperimentConfig cfg;
  cfg.field.d = 1;
  cfg.field.inv_eps = 32;
  cfg.subgrid.m = 4;
  cfg.iteration.n_ev = 10;
  cfg.iteration.steps = 4;
  cfg.analysis.samples = 10;
  cfg.analysis.k_max = 8;
  int identical = 0, files = 0;
  for (const auto& command : cli::commands()) {
    const auto first = cli::run(command, cfg, {root / command, 1, false});
    auto again = cli::load_manifest(json::parse(read_file(first.out_dir / "manifest.json")));
    again.opt.out_dir = root / (command + "_rerun");
    const auto second = cli::run(again.command, again.cfg, again.opt);
    bool same = read_file(first.out_dir / "manifest.json") == read_file(second.out_dir / "manifest.json");
    for (const auto& [name, hash] : first.manifest["outputs"].items()) {
      ++files;
      same = same && read_file(first.out_dir / name) == read_file(second.out_dir / name);
    }
    identical += same;
    o.expect(same, command + " rerun differs");
  }
  o.detail << identical << "/" << cli::commands().size() << " pipelines identical over " << files << " files ";
  fs::remove_all(root);
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "constant potential", 1.0, constant_potential},
      {2, "valley sharpness", 5.0, valley_sharpness},
      {3, "spectral equivalence", 30.0, spectral_equivalence},
      {4, "contraction", 0, contraction},
      {5, "Green's function decay", 0, green_function},
      {6, "inverse power rate", 0, inverse_power_rate},
      {7, "PINVIT rate", 0, pinvit_rate},
      {8, "inexact block iteration", 60.0, inexact_block},
      {9, "spectral gaps, disorder vs order", 120.0, disorder_vs_order},
      {10, "eigenstate localization", 0, localization},
      {11, "Friedrichs scaling", 0, friedrichs_scaling},
      {12, "min-max certificates", 0, certificates},
      {13, "determinism", 0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "] ";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit > 0 && secs > c.time_limit) {
      o.pass = false;
      o.detail << "[failed: runtime over " << c.time_limit << " s] ";
    }
    failures += !o.pass;
    std::printf("AC%02d %s  %s  (%.2f s) %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name.c_str(), secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
