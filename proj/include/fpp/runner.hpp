#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "certificates.hpp"
#include "config.hpp"
#include "estimators.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "oracle.hpp"

#ifndef FPP_VERSION
#define FPP_VERSION "0.0.0"
#endif

namespace fpp {

using ojson = nlohmann::ordered_json;

class EmptyResults : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using LogFn = std::function<void(const std::string&)>;

struct RunOutput {
  ojson results;
  std::vector<std::pair<std::string, std::string>> files;  // name, content
};

namespace detail {

template <std::size_t D>
RealPoint<D> to_real_point(const std::vector<double>& v) {
  RealPoint<D> x{};
  for (std::size_t i = 0; i < D; ++i) x[i] = v.at(i);
  return x;
}

template <std::size_t D>
LatticePoint<D> to_lattice_point(const ojson& a) {
  LatticePoint<D> x{};
  for (std::size_t i = 0; i < D; ++i) x[i] = a.at(i).get<std::int64_t>();
  return x;
}

template <std::size_t D>
ojson json_point(const LatticePoint<D>& x) {
  ojson a = ojson::array();
  for (auto c : x) a.push_back(c);
  return a;
}

template <std::size_t D>
ojson json_point(const RealPoint<D>& x) {
  ojson a = ojson::array();
  for (auto c : x) a.push_back(c);
  return a;
}

inline ojson json_times(const std::vector<Time>& ts) {
  ojson a = ojson::array();
  for (const auto& t : ts) a.push_back(t.value());
  return a;
}

inline ojson json_bools(const std::vector<bool>& bs) {
  ojson a = ojson::array();
  for (bool b : bs) a.push_back(b);
  return a;
}

inline std::vector<std::int64_t> int_list(const ojson& a) {
  std::vector<std::int64_t> v;
  for (const auto& x : a) v.push_back(x.get<std::int64_t>());
  return v;
}

inline std::vector<double> number_list(const ojson& a) {
  std::vector<double> v;
  for (const auto& x : a) v.push_back(x.get<double>());
  return v;
}

inline ojson exponent_json(const ExponentEstimate& e) {
  return {{"status", e.status == FitStatus::ok ? "ok" : "degenerate"},
          {"statistic", e.statistic},
          {"factor", e.factor},
          {"exponent_hat", e.exponent_hat},
          {"ci_low", e.ci_low},
          {"ci_high", e.ci_high},
          {"scales", e.scales},
          {"statistic_values", e.statistic_values},
          {"log_scale", e.log_scale},
          {"log_statistic", e.log_statistic},
          {"slope", e.slope},
          {"intercept", e.intercept},
          {"bootstrap_rounds", e.bootstrap_rounds}};
}

inline ojson tail_json(const TailEstimate& t) {
  return {{"side", to_string(t.side)},
          {"N", t.N},
          {"magnitude_kind", t.magnitude.name()},
          {"magnitude", t.magnitude.value},
          {"mu_hat", t.mu_hat},
          {"threshold", t.threshold},
          {"hits", t.hits},
          {"n", t.n},
          {"p_hat", t.p_hat},
          {"ci_low", t.ci_low},
          {"ci_high", t.ci_high}};
}

template <std::size_t D>
struct Context {
  const ExperimentConfig& cfg;
  WeightField<D> base;
  RealPoint<D> u;
  Frame<D> frame;
  RunOptions opt;
  LogFn log;
};

template <std::size_t D>
Context<D> make_context(const ExperimentConfig& c, LogFn log) {
  const auto u = to_real_point<D>(c.direction);
  ShapeModel<D> model = c.shape == "l1" ? ShapeModel<D>{L1Ball{}} : ShapeModel<D>{EuclideanBall{}};
  return Context<D>{c, WeightField<D>(c.seed, c.distribution), u, make_frame(u, model), RunOptions{c.workers, c.budget},
                    std::move(log)};
}

// mu_ref from params, or the time-constant estimate at scale N.
template <std::size_t D>
double resolve_mu_ref(const Context<D>& ctx, std::int64_t N, ojson& out) {
  const ojson& p = ctx.cfg.params;
  if (p["mu_ref"].is_number()) {
    out["mu_ref"] = p["mu_ref"].get<double>();
    out["mu_ref_source"] = "given";
    return p["mu_ref"].get<double>();
  }
  const auto n = static_cast<std::size_t>(p["mu_samples"].get<std::int64_t>());
  ctx.log("estimating mu_ref at N=" + std::to_string(N) + " from " + std::to_string(n) + " samples");
  const auto est = estimate_time_constant(ctx.base, ctx.u, {N}, n, ctx.opt);
  out["mu_ref"] = est.mu_hat;
  out["mu_ref_source"] = "estimate";
  out["mu_ref_stderr"] = est.stderr_per_N.front();
  out["mu_ref_samples"] = n;
  return est.mu_hat;
}

template <std::size_t D>
WeightField<D> instance_field(const Context<D>& ctx, std::size_t i) {
  return ctx.base.reseed(derive_replica(ctx.base.replica(), Stream::certificate, 0, i));
}

template <std::size_t D>
ojson run_mu(const Context<D>& ctx) {
  const auto Ns = int_list(ctx.cfg.params["N_list"]);
  const auto e = estimate_time_constant(ctx.base, ctx.u, Ns, ctx.cfg.n_samples, ctx.opt);
  return {{"u", json_point(e.u)},
          {"N_list", e.N_list},
          {"mean_per_N", e.mean_per_N},
          {"stderr_per_N", e.stderr_per_N},
          {"n_samples", e.n_samples},
          {"nonrandom_fluctuation", e.nonrandom_fluctuation},
          {"mu_hat", e.mu_hat}};
}

template <std::size_t D>
ojson run_exponent(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  const auto Ns = int_list(p["N_list"]);
  const auto& kind = ctx.cfg.kind;
  if (kind == "chi") return exponent_json(estimate_fluctuation_exponent(ctx.base, ctx.u, Ns, ctx.cfg.n_samples, ctx.opt));
  if (kind == "xi") return exponent_json(estimate_wandering_exponent(ctx.base, ctx.u, Ns, ctx.cfg.n_samples, ctx.opt));
  ojson out;
  const double mu = resolve_mu_ref(ctx, Ns.back(), out);
  out["chi_probe"] = p["chi_probe"];
  out["fit"] = exponent_json(estimate_restricted_mean_excess(ctx.base, ctx.frame, p["chi_probe"].get<double>(), Ns,
                                                             ctx.cfg.n_samples, mu, ctx.opt));
  return out;
}

template <std::size_t D>
ojson run_tail(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  const auto N = p["N"].get<std::int64_t>();
  ojson out;
  const double mu = resolve_mu_ref(ctx, N, out);
  const Side side = p["side"] == "upper" ? Side::upper : Side::lower;
  const Magnitude m = p.contains("a") ? Magnitude{Magnitude::Kind::exponent, p["a"].get<double>()}
                                      : Magnitude{Magnitude::Kind::zeta, p["zeta"].get<double>()};
  out["estimate"] = tail_json(estimate_tail_probability(ctx.base, ctx.u, N, side, m, mu, ctx.cfg.n_samples, ctx.opt));
  return out;
}

template <std::size_t D>
ojson run_rate_curve(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  const auto N = p["N"].get<std::int64_t>();
  ojson out;
  const double mu = resolve_mu_ref(ctx, N, out);
  const Side side = p["side"] == "upper" ? Side::upper : Side::lower;
  const auto c =
      estimate_rate_curve(ctx.base, ctx.u, N, side, number_list(p["zeta_grid"]), mu, ctx.cfg.n_samples, ctx.opt);
  ojson pts = ojson::array();
  for (std::size_t j = 0; j < c.points.size(); ++j) {
    ojson t = tail_json(c.points[j]);
    t["neg_log_p_normalized"] = c.normalized_rate[j];
    t["reliable"] = static_cast<bool>(c.reliable[j]);
    pts.push_back(std::move(t));
  }
  out["side"] = to_string(side);
  out["N"] = N;
  out["normalizer"] = side == Side::upper ? "N^d" : "N";
  out["points"] = std::move(pts);
  out["informative"] = c.informative;
  out["power_hat"] = c.power_hat ? ojson(*c.power_hat) : ojson(nullptr);
  out["power_ci_low"] = c.power_ci_low;
  out["power_ci_high"] = c.power_ci_high;
  out["fit_intercept"] = c.fit_intercept;
  return out;
}

template <std::size_t D>
ojson run_exact(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  ExactInstance<D> inst;
  inst.lo = to_lattice_point<D>(p["box_lo"]);
  inst.hi = to_lattice_point<D>(p["box_hi"]);
  inst.source = to_lattice_point<D>(p.contains("source") ? p["source"] : p["box_lo"]);
  inst.target = to_lattice_point<D>(p.contains("target") ? p["target"] : p["box_hi"]);
  const auto law = std::get<TwoPoint>(ctx.cfg.distribution);
  const auto x = exact_tail_distribution(inst, law);
  return {{"box_lo", json_point(inst.lo)},
          {"box_hi", json_point(inst.hi)},
          {"source", json_point(inst.source)},
          {"target", json_point(inst.target)},
          {"edges", x.edges},
          {"simple_paths", x.paths},
          {"support", x.support},
          {"pmf", x.pmf},
          {"total_probability", x.total()},
          {"mean", x.mean()},
          {"variance", x.variance()}};
}

template <std::size_t D>
ojson run_slab(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  SlabParams<D> sp;
  sp.N = p["N"].get<std::int64_t>();
  sp.a = p["a"].get<double>();
  sp.M = static_cast<int>(p["M"].get<std::int64_t>());
  sp.eps = p["eps"].get<double>();
  sp.v = ctx.u;
  sp.frame = ctx.frame;
  sp.budget = ctx.opt.budget;
  ojson out;
  sp.mu_ref = resolve_mu_ref(ctx, sp.N, out);
  const auto n = static_cast<std::size_t>(p["instances"].get<std::int64_t>());
  std::vector<ojson> rows(n);
  parallel_for(n, ctx.opt.workers, [&](std::size_t i) {
    const auto f = instance_field(ctx, i);
    const auto o = slab_certificate(f, sp);
    ojson r{{"instance", i},
            {"replica", f.replica()},
            {"certified", o.certified()},
            {"direct_T", o.direct_time.value()},
            {"bound", o.bound},
            {"exceeds_bound", above(o.direct_time, o.bound)}};
    if (o.certificate) {
      const auto& c = *o.certificate;
      const auto v = verify_slab_certificate(f, sp, c);
      r["certificate"] = {{"m", c.m},
                          {"pair", to_string(c.pair)},
                          {"from_size", c.from_face.size()},
                          {"A_size", c.A.size()},
                          {"A", c.A},
                          {"to_size", c.to_face.size()},
                          {"covered", c.covered},
                          {"overshoot", c.overshoot},
                          {"from_fraction", c.from_fraction},
                          {"to_fraction", c.to_fraction},
                          {"time_threshold", c.time_threshold}};
      r["verification"] = {{"rechecked", v.rechecked}, {"recount", v.recount}};
    } else {
      r["verification"] = {{"rechecked", at_most(o.direct_time, o.bound)}};
    }
    rows[i] = std::move(r);
  });
  std::size_t certified = 0, exceed = 0, failures = 0;
  for (const auto& r : rows) {
    certified += r["certified"].get<bool>();
    exceed += r["exceeds_bound"].get<bool>();
    failures += !r["verification"]["rechecked"].get<bool>() || (r["exceeds_bound"].get<bool>() && !r["certified"].get<bool>());
  }
  out["instances"] = rows;
  out["certified"] = certified;
  out["exceeds_bound"] = exceed;
  out["failures"] = failures;
  return out;
}

template <std::size_t D>
ojson run_bad_scan(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  BadGridParams<D> g;
  g.N = p["N"].get<std::int64_t>();
  g.M = static_cast<int>(p["M"].get<std::int64_t>());
  g.m = static_cast<int>(p["m"].get<std::int64_t>());
  g.a = p["a"].get<double>();
  g.eps = p["eps"].get<double>();
  g.decimate = p["decimate"].get<bool>();
  g.workers = ctx.opt.workers;
  g.bad.b = p["b"].get<double>();
  g.bad.K = p["K"].get<double>();
  g.bad.v = ctx.u;
  g.bad.frame = ctx.frame;
  g.bad.chi_bar_eps = p["chi_bar_eps"].get<double>();
  g.bad.budget = ctx.opt.budget;
  ojson out;
  g.bad.mu_ref = resolve_mu_ref(ctx, g.N, out);
  const auto s = scan_bad_vertices(ctx.base, g);
  ojson ws = ojson::array();
  for (std::size_t i = 0; i < s.witnesses.size(); ++i) {
    const auto& w = s.witnesses[i];
    ws.push_back({{"z", json_point(w.z)},
                  {"y", json_point(w.y)},
                  {"y_prime", json_point(w.y_prime)},
                  {"restricted_time", w.restricted_time.value()},
                  {"threshold", w.threshold},
                  {"class", s.witness_class[i]},
                  {"verification", {{"rechecked", verify_bad_witness(ctx.base, g.bad, w)}}}});
  }
  out["grid_points"] = s.points;
  out["count"] = s.count;
  out["witnesses"] = std::move(ws);
  if (g.decimate) out["class_counts"] = s.class_counts;
  return out;
}

template <std::size_t D>
ojson run_dark_scan(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  DarkParams<D> dp;
  dp.b = p["b"].get<double>();
  dp.K_hat = p["K_hat"].get<double>();
  dp.A = p["A"].get<double>();
  dp.frame = ctx.frame;
  dp.budget = ctx.opt.budget;
  const auto N = p["N"].get<std::int64_t>();
  ojson out;
  dp.mu_ref = resolve_mu_ref(ctx, N, out);
  const auto s = scan_dark_blocks(ctx.base, N, dp, ctx.opt.workers);
  ojson blocks = ojson::array();
  for (const auto& b : s.trace.blocks) blocks.push_back(json_point(b));
  ojson ws = ojson::array();
  for (const auto& w : s.witnesses)
    ws.push_back({{"x", json_point(w.x)},
                  {"y", json_point(w.y)},
                  {"kind", to_string(w.kind)},
                  {"time", w.time.value()},
                  {"threshold", w.threshold},
                  {"verification", {{"rechecked", verify_dark_witness(ctx.base, dp, w)}}}});
  out["blocks"] = std::move(blocks);
  out["trace_connected"] = s.trace.connected;
  out["trace_volume_ok"] = s.trace.volume_ok;
  out["geodesic_vertices"] = s.trace.path_vertices;
  out["count"] = s.count;
  out["witnesses"] = std::move(ws);
  return out;
}

template <std::size_t D>
ojson run_face_profile(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  FaceProfileParams<D> fp;
  fp.N = p["N"].get<std::int64_t>();
  fp.K = p["K"].get<double>();
  fp.J = p["J"].get<std::int64_t>();
  fp.frame = ctx.frame;
  fp.b_grid = GridSpec{p["b_lo"].get<double>(), 1.0, p["L"].get<std::int64_t>()};
  if (p.contains("window")) fp.window = p["window"].get<double>();
  fp.budget = ctx.opt.budget;
  fp.workers = ctx.opt.workers;
  ojson out;
  fp.mu_ref = resolve_mu_ref(ctx, fp.N, out);
  const auto r = face_deficit_profile(ctx.base, fp);
  ojson bs = ojson::array();
  for (const auto& b : r.b_values) bs.push_back({{"num", b.num}, {"den", b.den}, {"value", b.value()}});
  out["times"] = json_times(r.times);
  out["b"] = std::move(bs);
  out["thresholds"] = r.thresholds;
  out["deficit_counts"] = r.deficit_counts;
  return out;
}

template <std::size_t D>
ojson run_block_upper(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  BlockEventParams bp;
  bp.N = p["N"].get<std::int64_t>();
  bp.zeta = p["zeta"].get<double>();
  bp.chi_hat = p["chi_hat"].get<double>();
  bp.eps = p["eps"].get<double>();
  bp.A = p["A"].get<double>();
  bp.budget = ctx.opt.budget;
  ojson out;
  bp.mu_ref = resolve_mu_ref(ctx, bp.N, out);
  const auto n = static_cast<std::size_t>(p["instances"].get<std::int64_t>());
  std::vector<ojson> rows(n);
  parallel_for(n, ctx.opt.workers, [&](std::size_t i) {
    const auto r = block_event_check(instance_field(ctx, i), bp);
    rows[i] = {{"instance", i},
               {"K_tilde", r.K_tilde},
               {"half_width", r.half_width},
               {"event_threshold", r.event_threshold},
               {"block_times", json_times(r.block_times)},
               {"events", json_bools(r.events)},
               {"all_events", r.all_events},
               {"confined", r.confined},
               {"implied_lower_bound", r.implied_lower_bound.value()},
               {"actual_T", r.actual_T.value()},
               {"hypotheses", r.hypotheses},
               {"chain_holds", r.chain_holds},
               {"violation", r.violation()}};
  });
  std::size_t hyp = 0, viol = 0;
  for (const auto& r : rows) {
    hyp += r["hypotheses"].get<bool>();
    viol += r["violation"].get<bool>();
  }
  out["instances"] = rows;
  out["hypotheses_held"] = hyp;
  out["vacuous"] = n - hyp;
  out["violations"] = viol;
  return out;
}

template <std::size_t D>
ojson run_block_lower(const Context<D>& ctx) {
  const ojson& p = ctx.cfg.params;
  LowerChainParams<D> lp;
  lp.N = p["N"].get<std::int64_t>();
  lp.magnitude = p.contains("a") ? Magnitude{Magnitude::Kind::exponent, p["a"].get<double>()}
                                 : Magnitude{Magnitude::Kind::zeta, p["zeta"].get<double>()};
  lp.chi_lower = p["chi_lower"].get<double>();
  lp.u = ctx.u;
  lp.budget = ctx.opt.budget;
  ojson out;
  lp.mu_ref = resolve_mu_ref(ctx, lp.N, out);
  const auto n = static_cast<std::size_t>(p["instances"].get<std::int64_t>());
  std::vector<ojson> rows(n);
  parallel_for(n, ctx.opt.workers, [&](std::size_t i) {
    const auto r = lower_tail_block_chain(instance_field(ctx, i), lp);
    rows[i] = {{"instance", i},
               {"J", r.J},
               {"K", r.K},
               {"event_threshold", r.event_threshold},
               {"block_times", json_times(r.block_times)},
               {"events", json_bools(r.events)},
               {"conjunction", r.conjunction},
               {"block_sum", r.block_sum.value()},
               {"actual_T", r.actual_T.value()},
               {"chain_deviation", r.chain_deviation},
               {"target_deviation", r.target_deviation},
               {"deviation_covers", r.deviation_covers},
               {"lower_tail_event", r.lower_tail_event},
               {"violation", r.violation()}};
  });
  std::size_t conj = 0, viol = 0;
  for (const auto& r : rows) {
    conj += r["conjunction"].get<bool>();
    viol += r["violation"].get<bool>();
  }
  out["instances"] = rows;
  out["conjunctions"] = conj;
  out["violations"] = viol;
  return out;
}

template <std::size_t D>
ojson run_kind(const ExperimentConfig& c, const LogFn& log) {
  const auto ctx = make_context<D>(c, log);
  const auto& k = c.kind;
  if (k == "mu") return run_mu(ctx);
  if (k == "chi" || k == "xi" || k == "chi_u_excess") return run_exponent(ctx);
  if (k == "tail") return run_tail(ctx);
  if (k == "rate_curve") return run_rate_curve(ctx);
  if (k == "exact_oracle") return run_exact(ctx);
  if (k == "slab_certify") return run_slab(ctx);
  if (k == "bad_scan") return run_bad_scan(ctx);
  if (k == "dark_scan") return run_dark_scan(ctx);
  if (k == "face_profile") return run_face_profile(ctx);
  if (k == "block_chain_upper") return run_block_upper(ctx);
  if (k == "block_chain_lower") return run_block_lower(ctx);
  throw ConfigError("unknown experiment kind '" + k + "'");
}

// Minimal log-log panel: points plus an optional fitted line.
inline std::string svg_loglog(const std::vector<double>& x, const std::vector<double>& y, const std::string& title,
                              const std::string& xlabel, const std::string& ylabel, std::optional<double> slope,
                              std::optional<double> intercept) {
  const double W = 480, H = 360, pad = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!x.empty()) {
    x0 = *std::min_element(x.begin(), x.end());
    x1 = *std::max_element(x.begin(), x.end());
    y0 = *std::min_element(y.begin(), y.end());
    y1 = *std::max_element(y.begin(), y.end());
  }
  if (x1 - x0 < 1e-12) x1 = x0 + 1;
  if (y1 - y0 < 1e-12) y1 = y0 + 1;
  auto sx = [&](double v) { return pad + (v - x0) / (x1 - x0) * (W - 2 * pad); };
  auto sy = [&](double v) { return H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad); };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"360\">\n";
  s += "<rect width=\"480\" height=\"360\" fill=\"white\"/>\n";
  s += "<text x=\"240\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
  s += "<line x1=\"50\" y1=\"310\" x2=\"430\" y2=\"310\" stroke=\"black\"/>\n";
  s += "<line x1=\"50\" y1=\"50\" x2=\"50\" y2=\"310\" stroke=\"black\"/>\n";
  s += "<text x=\"240\" y=\"345\" text-anchor=\"middle\" font-size=\"12\">" + xlabel + "</text>\n";
  s += "<text x=\"14\" y=\"180\" font-size=\"12\" transform=\"rotate(-90 14 180)\">" + ylabel + "</text>\n";
  if (slope && intercept && std::isfinite(*slope) && std::isfinite(*intercept))
    s += "<line x1=\"" + format_number(sx(x0)) + "\" y1=\"" + format_number(sy(*intercept + *slope * x0)) +
         "\" x2=\"" + format_number(sx(x1)) + "\" y2=\"" + format_number(sy(*intercept + *slope * x1)) +
         "\" stroke=\"steelblue\"/>\n";
  for (std::size_t i = 0; i < x.size(); ++i)
    s += "<circle cx=\"" + format_number(sx(x[i])) + "\" cy=\"" + format_number(sy(y[i])) + "\" r=\"3\"/>\n";
  return s + "</svg>\n";
}

inline double as_double(const ojson& v) {
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace detail

inline ojson config_echo(const ExperimentConfig& c) {
  ojson d = ojson::array();
  for (double x : c.direction) d.push_back(x);
  return {{"seed", c.seed},
          {"dimension", c.dimension},
          {"distribution", distribution_json(c.distribution)},
          {"direction", d},
          {"shape", c.shape},
          {"n_samples", c.n_samples},
          {"budget", c.budget ? ojson(*c.budget) : ojson(nullptr)},
          {"params", c.params}};
}

// Tidy CSVs (and optional SVG panels) derived from a results document.
inline std::vector<std::pair<std::string, std::string>> emit_plotdata(const ojson& results, bool svg = false) {
  using detail::as_double;
  if (!results.is_object() || !results.contains("result") || results["result"].is_null() ||
      results["result"].empty())
    throw EmptyResults("empty result set");
  const std::string kind = results.at("kind").get<std::string>();
  const ojson& r = results["result"];
  std::vector<std::pair<std::string, std::string>> files;
  auto add = [&](const std::string& name, const std::string& content) { files.emplace_back(name, content); };

  if (kind == "mu") {
    CsvTable t({"N", "mean_T_over_N", "stderr", "n_samples", "nonrandom_fluctuation"});
    for (std::size_t k = 0; k < r["N_list"].size(); ++k)
      t.row()
          .cell(r["N_list"][k].get<std::int64_t>())
          .cell(as_double(r["mean_per_N"][k]))
          .cell(as_double(r["stderr_per_N"][k]))
          .cell(r["n_samples"][k].get<std::uint64_t>())
          .cell(as_double(r["nonrandom_fluctuation"][k]));
    add("mu_per_scale.csv", t.str());
  } else if (kind == "chi" || kind == "xi" || kind == "chi_u_excess") {
    const ojson& fit = kind == "chi_u_excess" ? r["fit"] : r;
    const std::string stat = kind == "chi" ? "var" : (kind == "xi" ? "mean_deviation" : "mean_excess");
    CsvTable t({"log_N", "log_" + stat});
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < fit["log_scale"].size(); ++k) {
      xs.push_back(as_double(fit["log_scale"][k]));
      ys.push_back(as_double(fit["log_statistic"][k]));
      t.row().cell(xs.back()).cell(ys.back());
    }
    add(kind + "_loglog.csv", t.str());
    ojson side{{"status", fit["status"]},      {"slope", fit["slope"]},     {"intercept", fit["intercept"]},
               {"factor", fit["factor"]},      {"exponent_hat", fit["exponent_hat"]},
               {"ci_low", fit["ci_low"]},      {"ci_high", fit["ci_high"]}};
    add(kind + "_fit.json", side.dump(2) + "\n");
    if (svg)
      add(kind + "_loglog.svg", detail::svg_loglog(xs, ys, kind + " regression", "log N", "log " + stat,
                                                   as_double(fit["slope"]), as_double(fit["intercept"])));
  } else if (kind == "tail") {
    const ojson& e = r["estimate"];
    CsvTable t({"side", "N", "magnitude_kind", "magnitude", "threshold", "hits", "n", "p_hat", "ci_lo", "ci_hi"});
    t.row()
        .cell(e["side"].get<std::string>())
        .cell(e["N"].get<std::int64_t>())
        .cell(e["magnitude_kind"].get<std::string>())
        .cell(as_double(e["magnitude"]))
        .cell(as_double(e["threshold"]))
        .cell(e["hits"].get<std::uint64_t>())
        .cell(e["n"].get<std::uint64_t>())
        .cell(as_double(e["p_hat"]))
        .cell(as_double(e["ci_low"]))
        .cell(as_double(e["ci_high"]));
    add("tail.csv", t.str());
  } else if (kind == "rate_curve") {
    CsvTable t({"zeta", "p_hat", "ci_lo", "ci_hi", "neg_log_p_normalized"});
    std::vector<double> xs, ys;
    for (const auto& pt : r["points"]) {
      t.row()
          .cell(as_double(pt["magnitude"]))
          .cell(as_double(pt["p_hat"]))
          .cell(as_double(pt["ci_low"]))
          .cell(as_double(pt["ci_high"]))
          .cell(as_double(pt["neg_log_p_normalized"]));
      if (pt["reliable"].get<bool>()) {
        xs.push_back(std::log(as_double(pt["magnitude"])));
        ys.push_back(std::log(as_double(pt["neg_log_p_normalized"])));
      }
    }
    add("rate_curve.csv", t.str());
    ojson side{{"informative", r["informative"]}, {"power_hat", r["power_hat"]}, {"power_ci_low", r["power_ci_low"]},
               {"power_ci_high", r["power_ci_high"]}, {"intercept", r["fit_intercept"]}};
    add("rate_curve_fit.json", side.dump(2) + "\n");
    if (svg)
      add("rate_curve_loglog.svg",
          detail::svg_loglog(xs, ys, "normalized rate", "log zeta", "log rate", as_double(r["power_hat"]),
                             as_double(r["fit_intercept"])));
  } else if (kind == "exact_oracle") {
    CsvTable t({"time", "probability"});
    for (std::size_t k = 0; k < r["support"].size(); ++k)
      t.row().cell(as_double(r["support"][k])).cell(as_double(r["pmf"][k]));
    add("pmf.csv", t.str());
  } else if (kind == "slab_certify") {
    CsvTable t({"instance", "certified", "m", "pair", "A_size", "from_size", "covered", "to_size", "direct_T", "bound",
                "rechecked"});
    for (const auto& row : r["instances"]) {
      const bool c = row["certified"].get<bool>();
      t.row()
          .cell(row["instance"].get<std::uint64_t>())
          .cell(c)
          .cell(c ? row["certificate"]["m"].get<std::int64_t>() : std::int64_t{-1})
          .cell(c ? row["certificate"]["pair"].get<std::string>() : std::string("none"))
          .cell(c ? row["certificate"]["A_size"].get<std::uint64_t>() : std::uint64_t{0})
          .cell(c ? row["certificate"]["from_size"].get<std::uint64_t>() : std::uint64_t{0})
          .cell(c ? row["certificate"]["covered"].get<std::uint64_t>() : std::uint64_t{0})
          .cell(c ? row["certificate"]["to_size"].get<std::uint64_t>() : std::uint64_t{0})
          .cell(as_double(row["direct_T"]))
          .cell(as_double(row["bound"]))
          .cell(row["verification"]["rechecked"].get<bool>());
    }
    add("slab.csv", t.str());
  } else if (kind == "bad_scan") {
    CsvTable t({"z", "y", "y_prime", "restricted_time", "threshold", "class", "rechecked"});
    for (const auto& w : r["witnesses"])
      t.row()
          .cell(w["z"].dump())
          .cell(w["y"].dump())
          .cell(w["y_prime"].dump())
          .cell(as_double(w["restricted_time"]))
          .cell(as_double(w["threshold"]))
          .cell(w["class"].get<std::uint64_t>())
          .cell(w["verification"]["rechecked"].get<bool>());
    add("bad_witnesses.csv", t.str());
  } else if (kind == "dark_scan") {
    CsvTable t({"x", "y", "kind", "time", "threshold", "rechecked"});
    for (const auto& w : r["witnesses"])
      t.row()
          .cell(w["x"].dump())
          .cell(w["y"].dump())
          .cell(w["kind"].get<std::string>())
          .cell(as_double(w["time"]))
          .cell(as_double(w["threshold"]))
          .cell(w["verification"]["rechecked"].get<bool>());
    add("dark_witnesses.csv", t.str());
  } else if (kind == "face_profile") {
    CsvTable ft({"i", "time"});
    for (std::size_t i = 0; i < r["times"].size(); ++i)
      ft.row().cell(static_cast<std::uint64_t>(i)).cell(as_double(r["times"][i]));
    add("face_times.csv", ft.str());
    CsvTable dt({"b", "threshold", "deficit_count"});
    for (std::size_t k = 0; k < r["b"].size(); ++k)
      dt.row()
          .cell(as_double(r["b"][k]["value"]))
          .cell(as_double(r["thresholds"][k]))
          .cell(r["deficit_counts"][k].get<std::uint64_t>());
    add("face_deficits.csv", dt.str());
  } else if (kind == "block_chain_upper" || kind == "block_chain_lower") {
    const bool upper = kind == "block_chain_upper";
    CsvTable t({"instance", "block", "time", "event"});
    CsvTable s({"instance", upper ? "implied_lower_bound" : "block_sum", "actual_T",
                upper ? "hypotheses" : "conjunction", "violation"});
    for (const auto& row : r["instances"]) {
      const auto inst = row["instance"].get<std::uint64_t>();
      for (std::size_t i = 0; i < row["block_times"].size(); ++i)
        t.row()
            .cell(inst)
            .cell(static_cast<std::uint64_t>(upper ? i + 1 : i))
            .cell(as_double(row["block_times"][i]))
            .cell(row["events"][i].get<bool>());
      s.row()
          .cell(inst)
          .cell(as_double(row[upper ? "implied_lower_bound" : "block_sum"]))
          .cell(as_double(row["actual_T"]))
          .cell(row[upper ? "hypotheses" : "conjunction"].get<bool>())
          .cell(row["violation"].get<bool>());
    }
    add(kind + "_blocks.csv", t.str());
    add(kind + "_summary.csv", s.str());
  } else {
    throw EmptyResults("no plot data for kind '" + kind + "'");
  }
  return files;
}

// Computes a validated experiment. Throws BudgetExhausted, ConfigError or
// other exceptions for compute failures.
inline RunOutput run_experiment(const ExperimentConfig& c, const LogFn& log = [](const std::string&) {}) {
  RunOutput out;
  out.results = {{"schema_version", kSchemaVersion}, {"kind", c.kind}, {"tool_version", FPP_VERSION}};
  out.results["config"] = config_echo(c);
  log("running kind=" + c.kind + " d=" + std::to_string(c.dimension) + " workers=" + std::to_string(c.workers));
  switch (c.dimension) {
    case 2:
      out.results["result"] = detail::run_kind<2>(c, log);
      break;
    case 3:
      out.results["result"] = detail::run_kind<3>(c, log);
      break;
    case 4:
      out.results["result"] = detail::run_kind<4>(c, log);
      break;
    default:
      throw ConfigError("unsupported dimension");
  }
  out.files = emit_plotdata(out.results, c.svg);
  return out;
}

}  // namespace fpp
