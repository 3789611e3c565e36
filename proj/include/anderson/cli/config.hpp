#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/field_io.hpp"
#include "anderson/fem.hpp"
#include "anderson/hash.hpp"
#include "anderson/io.hpp"
#include "anderson/oracle.hpp"
#include "anderson/potential.hpp"

namespace anderson::cli {

struct FieldConfig {
  std::string kind = "iid";
  int d = 1;
  int inv_eps = 64;
  double alpha = 1.0;
  std::optional<double> beta;  // absolute value; otherwise beta_scale / ε²
  double beta_scale = 8.0;
  double p_beta = 0.5;       // iid
  double p_alpha_1d = 0.5;   // tensor
  std::vector<Cuboid> valleys;  // planted
  double level_decay = 0.5;  // domino
  int max_level = 8;

  double beta_value() const {
    const double eps = 1.0 / inv_eps;
    return beta ? *beta : beta_scale / (eps * eps);
  }
};

struct SubgridConfig {
  int m = 4;
  std::size_t dof_limit = kDefaultDofLimit;
};

struct PreconditionerConfig {
  std::string mode = "adaptive";
  double c_L = 1.0;
  std::optional<double> target_gamma;
  std::optional<int> k_inner;  // unset: chosen from the contraction where needed
  int lanczos_iters = 60;
};

struct IterationConfig {
  std::optional<int> K;
  std::string K_source = "gap_scan";  // user | estimate | gap_scan
  int ell = 1;                        // ℓ̃ for the geometric estimate
  double tol = 1e-3;
  int steps = 10;
  double gap_target = 0.5;
  int n_ev = 20;
  std::string scaling = "oracle";  // oracle | rayleigh
  bool inexact = true;
};

struct AnalysisConfig {
  int k_max = 16;
  std::optional<int> source_cell;
  int samples = 50;
  int smoothing = 2;
  int max_centers = 1;
  std::string compare_kind = "periodic";
  bool svg = true;
  bool dump_matrices = true;
};

struct OutputConfig {
  std::string dir = "out";
  std::size_t dense_limit = kDefaultDenseLimit;
};

struct ExperimentConfig {
  FieldConfig field;
  SubgridConfig subgrid;
  PreconditionerConfig preconditioner;
  IterationConfig iteration;
  AnalysisConfig analysis;
  OutputConfig output;
  std::uint64_t seed = 1;
};

namespace detail {

/// Reads keys of one JSON object and rejects unknown ones.
class SectionReader {
 public:
  SectionReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidArgument("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InvalidArgument("config: '" + path_ + "." + key + "' has the wrong type");
    }
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw InvalidArgument("config: unknown key '" + path_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void check_choice(const std::string& value, std::initializer_list<const char*> allowed, const std::string& path) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
  throw InvalidArgument("config: '" + path + "' must be one of " + list + " (got '" + value + "')");
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  using detail::check_choice;
  check_choice(c.field.kind, {"periodic", "iid", "tensor", "domino", "planted", "constant"}, "field.kind");
  GridSpec{c.field.d, c.field.inv_eps, c.seed}.validate();
  Amplitudes{c.field.alpha, c.field.beta_value()}.validate();
  require(c.field.p_beta >= 0 && c.field.p_beta <= 1, "config: 'field.p_beta' must lie in [0, 1]");
  require(c.field.p_alpha_1d >= 0 && c.field.p_alpha_1d <= 1, "config: 'field.p_alpha_1d' must lie in [0, 1]");
  require(c.subgrid.m >= 1, "config: 'subgrid.m' must be >= 1");
  check_choice(c.preconditioner.mode, {"adaptive", "theoretical"}, "preconditioner.mode");
  require(c.preconditioner.c_L > 0, "config: 'preconditioner.c_L' must be > 0");
  require(!c.preconditioner.k_inner || *c.preconditioner.k_inner >= 1, "config: 'preconditioner.k_inner' must be >= 1");
  if (c.preconditioner.target_gamma)
    require(*c.preconditioner.target_gamma > 0 && *c.preconditioner.target_gamma < 1,
            "config: 'preconditioner.target_gamma' must lie in (0, 1)");
  check_choice(c.iteration.K_source, {"user", "estimate", "gap_scan"}, "iteration.K_source");
  check_choice(c.iteration.scaling, {"oracle", "rayleigh"}, "iteration.scaling");
  require(!c.iteration.K || *c.iteration.K >= 1, "config: 'iteration.K' must be >= 1");
  require(c.iteration.K_source != "user" || c.iteration.K.has_value(),
          "config: 'iteration.K' is required when 'iteration.K_source' is 'user'");
  require(c.iteration.tol > 0 && c.iteration.tol <= 1, "config: 'iteration.tol' must lie in (0, 1]");
  require(c.iteration.steps >= 0, "config: 'iteration.steps' must be >= 0");
  require(c.iteration.n_ev >= 2, "config: 'iteration.n_ev' must be >= 2");
  require(c.analysis.k_max >= 1, "config: 'analysis.k_max' must be >= 1");
  require(c.analysis.samples >= 1, "config: 'analysis.samples' must be >= 1");
  require(c.analysis.max_centers >= 1, "config: 'analysis.max_centers' must be >= 1");
  check_choice(c.analysis.compare_kind, {"periodic", "iid", "tensor", "domino", "constant"}, "analysis.compare_kind");
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  detail::SectionReader top(j, "config");
  top.get("seed", c.seed);
  if (const json* f = top.sub("field")) {
    detail::SectionReader r(*f, "field");
    r.get("kind", c.field.kind);
    r.get("d", c.field.d);
    r.get("inv_eps", c.field.inv_eps);
    r.get("alpha", c.field.alpha);
    r.get("beta", c.field.beta);
    r.get("beta_scale", c.field.beta_scale);
    r.get("p_beta", c.field.p_beta);
    r.get("p_alpha_1d", c.field.p_alpha_1d);
    r.get("level_decay", c.field.level_decay);
    r.get("max_level", c.field.max_level);
    if (const json* v = r.sub("valleys")) {
      if (!v->is_array()) throw InvalidArgument("config: 'field.valleys' must be an array");
      for (const auto& box : *v) {
        detail::SectionReader b(box, "field.valleys[]");
        std::vector<int> anchor, extent;
        b.get("anchor", anchor);
        b.get("extent", extent);
        b.finish();
        require(static_cast<int>(anchor.size()) == c.field.d && static_cast<int>(extent.size()) == c.field.d,
                "config: 'field.valleys[]' anchor and extent need d entries");
        Cuboid cub;
        for (int a = 0; a < c.field.d; ++a) {
          cub.anchor[a] = anchor[static_cast<std::size_t>(a)];
          cub.extent[a] = extent[static_cast<std::size_t>(a)];
        }
        c.field.valleys.push_back(cub);
      }
    }
    r.finish();
  }
  if (const json* s = top.sub("subgrid")) {
    detail::SectionReader r(*s, "subgrid");
    r.get("m", c.subgrid.m);
    r.get("dof_limit", c.subgrid.dof_limit);
    r.finish();
  }
  if (const json* p = top.sub("preconditioner")) {
    detail::SectionReader r(*p, "preconditioner");
    r.get("mode", c.preconditioner.mode);
    r.get("c_L", c.preconditioner.c_L);
    r.get("target_gamma", c.preconditioner.target_gamma);
    r.get("k_inner", c.preconditioner.k_inner);
    r.get("lanczos_iters", c.preconditioner.lanczos_iters);
    r.finish();
  }
  if (const json* it = top.sub("iteration")) {
    detail::SectionReader r(*it, "iteration");
    r.get("K", c.iteration.K);
    r.get("K_source", c.iteration.K_source);
    r.get("ell", c.iteration.ell);
    r.get("tol", c.iteration.tol);
    r.get("steps", c.iteration.steps);
    r.get("gap_target", c.iteration.gap_target);
    r.get("n_ev", c.iteration.n_ev);
    r.get("scaling", c.iteration.scaling);
    r.get("inexact", c.iteration.inexact);
    r.finish();
  }
  if (const json* a = top.sub("analysis")) {
    detail::SectionReader r(*a, "analysis");
    r.get("k_max", c.analysis.k_max);
    r.get("source_cell", c.analysis.source_cell);
    r.get("samples", c.analysis.samples);
    r.get("smoothing", c.analysis.smoothing);
    r.get("max_centers", c.analysis.max_centers);
    r.get("compare_kind", c.analysis.compare_kind);
    r.get("svg", c.analysis.svg);
    r.get("dump_matrices", c.analysis.dump_matrices);
    r.finish();
  }
  if (const json* o = top.sub("output")) {
    detail::SectionReader r(*o, "output");
    r.get("dir", c.output.dir);
    r.get("dense_limit", c.output.dense_limit);
    r.finish();
  }
  top.finish();
  validate(c);
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  auto opt = [](const auto& o) -> json { return o ? json(*o) : json(nullptr); };
  json j;
  j["seed"] = c.seed;
  json& f = j["field"];
  f["kind"] = c.field.kind;
  f["d"] = c.field.d;
  f["inv_eps"] = c.field.inv_eps;
  f["alpha"] = c.field.alpha;
  f["beta"] = opt(c.field.beta);
  f["beta_scale"] = c.field.beta_scale;
  f["p_beta"] = c.field.p_beta;
  f["p_alpha_1d"] = c.field.p_alpha_1d;
  f["level_decay"] = c.field.level_decay;
  f["max_level"] = c.field.max_level;
  f["valleys"] = json::array();
  for (const auto& v : c.field.valleys)
    f["valleys"].push_back({{"anchor", std::vector<int>(v.anchor.begin(), v.anchor.begin() + c.field.d)},
                            {"extent", std::vector<int>(v.extent.begin(), v.extent.begin() + c.field.d)}});
  j["subgrid"] = {{"m", c.subgrid.m}, {"dof_limit", c.subgrid.dof_limit}};
  j["preconditioner"] = {{"mode", c.preconditioner.mode},
                         {"c_L", c.preconditioner.c_L},
                         {"target_gamma", opt(c.preconditioner.target_gamma)},
                         {"k_inner", opt(c.preconditioner.k_inner)},
                         {"lanczos_iters", c.preconditioner.lanczos_iters}};
  j["iteration"] = {{"K", opt(c.iteration.K)},         {"K_source", c.iteration.K_source},
                    {"ell", c.iteration.ell},           {"tol", c.iteration.tol},
                    {"steps", c.iteration.steps},       {"gap_target", c.iteration.gap_target},
                    {"n_ev", c.iteration.n_ev},         {"scaling", c.iteration.scaling},
                    {"inexact", c.iteration.inexact}};
  j["analysis"] = {{"k_max", c.analysis.k_max},
                   {"source_cell", opt(c.analysis.source_cell)},
                   {"samples", c.analysis.samples},
                   {"smoothing", c.analysis.smoothing},
                   {"max_centers", c.analysis.max_centers},
                   {"compare_kind", c.analysis.compare_kind},
                   {"svg", c.analysis.svg},
                   {"dump_matrices", c.analysis.dump_matrices}};
  j["output"] = {{"dir", c.output.dir}, {"dense_limit", c.output.dense_limit}};
  return j;
}

/// Hash of the resolved configuration; the output directory does not
/// enter, so reruns elsewhere carry the same hash.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j["output"].erase("dir");
  return content_hash(j.dump());
}

/// Build the potential described by the field section.
inline PotentialField make_field_from(const FieldConfig& f, std::uint64_t seed) {
  const GridSpec grid{f.d, f.inv_eps, seed};
  const Amplitudes amp{f.alpha, f.beta_value()};
  if (f.kind == "periodic") return gen_periodic(grid, amp);
  if (f.kind == "iid") return gen_iid(grid, amp, f.p_beta);
  if (f.kind == "tensor") return gen_tensor(grid, amp, f.p_alpha_1d);
  if (f.kind == "domino") {
    DominoParams p;
    p.level_decay = f.level_decay;
    p.max_level = f.max_level;
    return gen_domino(grid, amp, p);
  }
  if (f.kind == "planted") return plant_valleys(grid, amp, f.valleys);
  if (f.kind == "constant") return make_field(grid, amp, std::vector<std::uint8_t>(grid.num_cells(), 1));
  throw InvalidArgument("config: unknown field kind '" + f.kind + "'");
}

}  // namespace anderson::cli
