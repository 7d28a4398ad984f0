#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "oracle.hpp"
#include "parallel.hpp"
#include "passage.hpp"
#include "stats.hpp"
#include "weight_field.hpp"

namespace fpp {

struct RunOptions {
  unsigned workers = 1;
  std::optional<std::uint64_t> budget;
};

// Substream tags; replica indices are derived from (base replica, tag,
// scale index, sample index).
enum class Stream : std::uint64_t {
  time_constant = 1,
  fluctuation = 2,
  wandering = 3,
  mean_excess = 4,
  tail = 5,
  rate_curve = 6,
  certificate = 7,
  bootstrap = 8,
};

inline std::uint64_t derive_replica(std::uint64_t base_replica, Stream stream, std::uint64_t scale,
                                    std::uint64_t sample) {
  return keyed_hash({base_replica, static_cast<std::uint64_t>(stream), scale, sample});
}

template <std::size_t D>
std::uint64_t bootstrap_seed(const WeightField<D>& base, Stream stream) {
  return keyed_hash({base.seed(), base.replica(), static_cast<std::uint64_t>(Stream::bootstrap),
                     static_cast<std::uint64_t>(stream)});
}

template <std::size_t D>
LatticePoint<D> scaled_point(const RealPoint<D>& u, double N) {
  RealPoint<D> x{};
  for (std::size_t i = 0; i < D; ++i) x[i] = N * u[i];
  return floor_point(x);
}

// Draws n values fn(field_i) on independent replicas field_i, stored by index.
template <std::size_t D, class Fn>
std::vector<double> draw_samples(const WeightField<D>& base, Stream stream, std::uint64_t scale, std::size_t n,
                                 const RunOptions& opt, Fn&& fn) {
  std::vector<double> out(n);
  parallel_for(n, opt.workers, [&](std::size_t i) {
    const auto f = base.reseed(derive_replica(base.replica(), stream, scale, i));
    out[i] = fn(f);
  });
  return out;
}

template <std::size_t D>
void check_scales(const std::vector<std::int64_t>& Ns) {
  if (Ns.empty()) throw std::invalid_argument("empty scale list");
  for (std::size_t i = 0; i < Ns.size(); ++i) {
    if (Ns[i] < 1) throw std::invalid_argument("scales must be positive");
    if (i && Ns[i] <= Ns[i - 1]) throw std::invalid_argument("scales must be strictly increasing");
  }
}

template <std::size_t D>
struct TimeConstantEstimate {
  RealPoint<D> u{};
  std::vector<std::int64_t> N_list;
  std::vector<double> mean_per_N;
  std::vector<double> stderr_per_N;
  std::vector<std::size_t> n_samples;
  // E T - N mu_hat per scale (diagnostic only).
  std::vector<double> nonrandom_fluctuation;
  double mu_hat = 0;
  // samples[k][i] = T_i / N_k
  std::vector<std::vector<double>> samples;
};

// mu_hat is the sample mean at the largest scale.
template <std::size_t D>
TimeConstantEstimate<D> estimate_time_constant(const WeightField<D>& base, const RealPoint<D>& u,
                                               const std::vector<std::int64_t>& Ns, std::size_t n_samples,
                                               const RunOptions& opt = {}) {
  check_scales<D>(Ns);
  if (n_samples < 2) throw std::invalid_argument("estimate_time_constant needs n_samples >= 2");
  TimeConstantEstimate<D> r;
  r.u = u;
  r.N_list = Ns;
  for (std::size_t k = 0; k < Ns.size(); ++k) {
    const auto target = scaled_point(u, static_cast<double>(Ns[k]));
    const double N = static_cast<double>(Ns[k]);
    auto xs = draw_samples(base, Stream::time_constant, k, n_samples, opt, [&](const WeightField<D>& f) {
      return point_time(f, LatticePoint<D>{}, target, Everything{}, opt.budget).value() / N;
    });
    r.mean_per_N.push_back(mean(xs));
    r.stderr_per_N.push_back(std::sqrt(sample_variance(xs) / static_cast<double>(n_samples)));
    r.n_samples.push_back(n_samples);
    r.samples.push_back(std::move(xs));
  }
  r.mu_hat = r.mean_per_N.back();
  for (std::size_t k = 0; k < Ns.size(); ++k)
    r.nonrandom_fluctuation.push_back(static_cast<double>(Ns[k]) * (r.mean_per_N[k] - r.mu_hat));
  return r;
}

enum class FitStatus { ok, degenerate };

struct ExponentEstimate {
  FitStatus status = FitStatus::ok;
  std::string statistic;
  double factor = 1;  // exponent = factor * slope
  double exponent_hat = std::numeric_limits<double>::quiet_NaN();
  double ci_low = std::numeric_limits<double>::quiet_NaN();
  double ci_high = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> scales;
  std::vector<double> statistic_values;
  std::vector<double> log_scale;
  std::vector<double> log_statistic;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  std::size_t bootstrap_rounds = 0;
};

enum class ScaleStatistic { variance, mean };

inline double scale_statistic(ScaleStatistic s, const std::vector<double>& xs) {
  return s == ScaleStatistic::variance ? sample_variance(xs) : mean(xs);
}

// Fits log(statistic) against log(scale) from given per-scale statistics;
// no interval (ci collapses to the point estimate).
inline ExponentEstimate fit_scaling_from_statistics(const std::vector<double>& scales,
                                                    const std::vector<double>& stats, double factor,
                                                    std::string name) {
  if (scales.size() != stats.size() || scales.size() < 2)
    throw std::invalid_argument("need matching scales and statistics, at least two");
  ExponentEstimate e;
  e.statistic = std::move(name);
  e.factor = factor;
  e.scales = scales;
  e.statistic_values = stats;
  for (double s : stats) {
    if (!(s > 0) || !std::isfinite(s)) {
      e.status = FitStatus::degenerate;
      return e;
    }
  }
  for (std::size_t k = 0; k < scales.size(); ++k) {
    e.log_scale.push_back(std::log(scales[k]));
    e.log_statistic.push_back(std::log(stats[k]));
  }
  const LineFit f = fit_line(e.log_scale, e.log_statistic);
  e.slope = f.slope;
  e.intercept = f.intercept;
  e.exponent_hat = factor * f.slope;
  e.ci_low = e.ci_high = e.exponent_hat;
  return e;
}

// Per-scale samples -> statistic -> log-log slope, with a percentile
// bootstrap that resamples within each scale.
inline ExponentEstimate fit_scaling(const std::vector<double>& scales, const std::vector<std::vector<double>>& samples,
                                    ScaleStatistic stat, double factor, std::string name, std::uint64_t boot_seed,
                                    std::size_t rounds = 1000) {
  if (samples.size() != scales.size()) throw std::invalid_argument("fit_scaling: size mismatch");
  std::vector<double> stats;
  for (const auto& xs : samples) stats.push_back(scale_statistic(stat, xs));
  ExponentEstimate e = fit_scaling_from_statistics(scales, stats, factor, std::move(name));
  if (e.status != FitStatus::ok || rounds == 0) return e;
  std::vector<double> boot;
  std::vector<double> ly(scales.size());
  std::vector<double> xs;
  for (std::size_t b = 0; b < rounds; ++b) {
    bool ok = true;
    for (std::size_t k = 0; k < scales.size() && ok; ++k) {
      const auto& src = samples[k];
      xs.resize(src.size());
      for (std::size_t i = 0; i < src.size(); ++i) xs[i] = src[resample_index(boot_seed, b, k, i, src.size())];
      const double s = scale_statistic(stat, xs);
      ok = s > 0 && std::isfinite(s);
      if (ok) ly[k] = std::log(s);
    }
    if (ok) boot.push_back(factor * fit_line(e.log_scale, ly).slope);
  }
  e.bootstrap_rounds = boot.size();
  if (!boot.empty()) {
    e.ci_low = std::min(quantile_of(boot, 0.025), e.exponent_hat);
    e.ci_high = std::max(quantile_of(boot, 0.975), e.exponent_hat);
  }
  return e;
}

// chi: half the slope of log Var T(0, Nu) against log N.
inline ExponentEstimate fluctuation_exponent_from_samples(const std::vector<double>& scales,
                                                          const std::vector<std::vector<double>>& times,
                                                          std::uint64_t boot_seed, std::size_t rounds = 1000) {
  return fit_scaling(scales, times, ScaleStatistic::variance, 0.5, "variance", boot_seed, rounds);
}

// xi: slope of log E[max transversal deviation] against log N.
inline ExponentEstimate wandering_exponent_from_samples(const std::vector<double>& scales,
                                                        const std::vector<std::vector<double>>& deviations,
                                                        std::uint64_t boot_seed, std::size_t rounds = 1000) {
  return fit_scaling(scales, deviations, ScaleStatistic::mean, 1.0, "mean_max_deviation", boot_seed, rounds);
}

// Slope of log E[(T_Cyl - N mu)_+] against log N.
inline ExponentEstimate excess_exponent_from_samples(const std::vector<double>& scales,
                                                     const std::vector<std::vector<double>>& excesses,
                                                     std::uint64_t boot_seed, std::size_t rounds = 1000) {
  return fit_scaling(scales, excesses, ScaleStatistic::mean, 1.0, "mean_excess", boot_seed, rounds);
}

inline std::vector<double> as_doubles(const std::vector<std::int64_t>& Ns) {
  return std::vector<double>(Ns.begin(), Ns.end());
}

template <std::size_t D>
ExponentEstimate estimate_fluctuation_exponent(const WeightField<D>& base, const RealPoint<D>& u,
                                               const std::vector<std::int64_t>& Ns, std::size_t n_samples,
                                               const RunOptions& opt = {}) {
  check_scales<D>(Ns);
  if (Ns.size() < 3) throw std::invalid_argument("fluctuation exponent needs at least 3 scales");
  if (n_samples < 30) throw std::invalid_argument("fluctuation exponent needs n_samples >= 30");
  std::vector<std::vector<double>> times;
  for (std::size_t k = 0; k < Ns.size(); ++k) {
    const auto target = scaled_point(u, static_cast<double>(Ns[k]));
    times.push_back(draw_samples(base, Stream::fluctuation, k, n_samples, opt, [&](const WeightField<D>& f) {
      return point_time(f, LatticePoint<D>{}, target, Everything{}, opt.budget).value();
    }));
  }
  return fluctuation_exponent_from_samples(as_doubles(Ns), times, bootstrap_seed(base, Stream::fluctuation));
}

template <std::size_t D>
ExponentEstimate estimate_wandering_exponent(const WeightField<D>& base, const RealPoint<D>& u,
                                             const std::vector<std::int64_t>& Ns, std::size_t n_samples,
                                             const RunOptions& opt = {}) {
  check_scales<D>(Ns);
  if (Ns.size() < 3) throw std::invalid_argument("wandering exponent needs at least 3 scales");
  if (n_samples < 30) throw std::invalid_argument("wandering exponent needs n_samples >= 30");
  std::vector<std::vector<double>> devs;
  for (std::size_t k = 0; k < Ns.size(); ++k) {
    const auto target = scaled_point(u, static_cast<double>(Ns[k]));
    devs.push_back(draw_samples(base, Stream::wandering, k, n_samples, opt, [&](const WeightField<D>& f) {
      auto path = geodesic(f, point_query<D>(LatticePoint<D>{}, target, Everything{}, opt.budget));
      return max_transversal_deviation(path, RealPoint<D>{}, u);
    }));
  }
  return wandering_exponent_from_samples(as_doubles(Ns), devs, bootstrap_seed(base, Stream::wandering));
}

// Cyl_{0,u}(R, N^{(1+chi)/2}) in the given frame.
template <std::size_t D>
Cylinder<D> probe_cylinder(const Frame<D>& frame, double N, double chi_probe) {
  Cylinder<D> c;
  c.frame = frame;
  c.axis = frame.u;
  c.height = std::pow(N, (1 + chi_probe) / 2);
  return c;
}

template <std::size_t D>
ExponentEstimate estimate_restricted_mean_excess(const WeightField<D>& base, const Frame<D>& frame, double chi_probe,
                                                 const std::vector<std::int64_t>& Ns, std::size_t n_samples,
                                                 std::optional<double> mu_hat, const RunOptions& opt = {}) {
  if (!mu_hat || !std::isfinite(*mu_hat) || *mu_hat <= 0)
    throw std::invalid_argument("restricted mean excess needs a positive mu_hat");
  check_scales<D>(Ns);
  if (n_samples < 2) throw std::invalid_argument("restricted mean excess needs n_samples >= 2");
  std::vector<std::vector<double>> ex;
  for (std::size_t k = 0; k < Ns.size(); ++k) {
    const double N = static_cast<double>(Ns[k]);
    const auto target = scaled_point(frame.u, N);
    const Region<D> cyl = probe_cylinder(frame, N, chi_probe);
    ex.push_back(draw_samples(base, Stream::mean_excess, k, n_samples, opt, [&](const WeightField<D>& f) {
      const double t = point_time(f, LatticePoint<D>{}, target, cyl, opt.budget).value();
      return std::max(0.0, t - N * *mu_hat);
    }));
  }
  return excess_exponent_from_samples(as_doubles(Ns), ex, bootstrap_seed(base, Stream::mean_excess));
}

// Deviation size: N^a (exponent) or zeta * N.
struct Magnitude {
  enum class Kind { exponent, zeta } kind = Kind::exponent;
  double value = 0;

  double deviation(double N) const { return kind == Kind::exponent ? std::pow(N, value) : value * N; }
  const char* name() const { return kind == Kind::exponent ? "a" : "zeta"; }
};

struct TailEstimate {
  Side side = Side::upper;
  std::int64_t N = 0;
  Magnitude magnitude;
  double mu_hat = 0;
  double threshold = 0;
  std::uint64_t hits = 0;
  std::uint64_t n = 0;
  double p_hat = 0;
  double ci_low = 0;
  double ci_high = 0;
};

inline double tail_threshold(Side side, double N, double mu_hat, const Magnitude& m) {
  return side == Side::upper ? N * mu_hat + m.deviation(N) : N * mu_hat - m.deviation(N);
}

// Counts {T > threshold} or {T < threshold} among passage times.
inline TailEstimate tail_from_times(const std::vector<Time>& times, Side side, double threshold) {
  if (times.empty()) throw std::invalid_argument("tail estimate needs samples");
  TailEstimate t;
  t.side = side;
  t.threshold = threshold;
  t.n = times.size();
  for (const Time& x : times) t.hits += side == Side::upper ? above(x, threshold) : below(x, threshold);
  t.p_hat = static_cast<double>(t.hits) / static_cast<double>(t.n);
  const Interval ci = wilson_interval(t.hits, t.n);
  t.ci_low = ci.low;
  t.ci_high = ci.high;
  return t;
}

// Exact passage-time samples T(source, target) on independent replicas.
template <std::size_t D, class Fn>
std::vector<Time> draw_times(const WeightField<D>& base, Stream stream, std::uint64_t scale, std::size_t n,
                             const RunOptions& opt, Fn&& fn) {
  std::vector<Time> out(n);
  parallel_for(n, opt.workers, [&](std::size_t i) {
    const auto f = base.reseed(derive_replica(base.replica(), stream, scale, i));
    out[i] = fn(f);
  });
  return out;
}

template <std::size_t D>
std::vector<Time> axis_times(const WeightField<D>& base, const RealPoint<D>& u, std::int64_t N, Stream stream,
                             std::size_t n, const RunOptions& opt) {
  const auto target = scaled_point(u, static_cast<double>(N));
  return draw_times(base, stream, 0, n, opt, [&](const WeightField<D>& f) {
    return point_time(f, LatticePoint<D>{}, target, Everything{}, opt.budget);
  });
}

template <std::size_t D>
TailEstimate estimate_tail_probability(const WeightField<D>& base, const RealPoint<D>& u, std::int64_t N, Side side,
                                       const Magnitude& magnitude, double mu_hat, std::size_t n_samples,
                                       const RunOptions& opt = {}) {
  if (n_samples < 1) throw std::invalid_argument("tail estimate needs n_samples >= 1");
  const auto times = axis_times(base, u, N, Stream::tail, n_samples, opt);
  TailEstimate t = tail_from_times(times, side, tail_threshold(side, static_cast<double>(N), mu_hat, magnitude));
  t.N = N;
  t.magnitude = magnitude;
  t.mu_hat = mu_hat;
  return t;
}

struct RateCurve {
  Side side = Side::upper;
  std::int64_t N = 0;
  std::size_t dimension = 2;
  double mu_hat = 0;
  std::vector<double> zeta;
  std::vector<TailEstimate> points;
  // -log p_hat / N^d (upper) or / N (lower); NaN where p_hat is 0.
  std::vector<double> normalized_rate;
  std::vector<bool> reliable;
  bool informative = false;
  std::optional<double> power_hat;
  double power_ci_low = std::numeric_limits<double>::quiet_NaN();
  double power_ci_high = std::numeric_limits<double>::quiet_NaN();
  double fit_intercept = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr double kReliableHits = 10;

inline double rate_normalizer(Side side, double N, std::size_t d) {
  return side == Side::upper ? std::pow(N, static_cast<double>(d)) : N;
}

inline void check_zeta_grid(const std::vector<double>& zeta) {
  if (zeta.empty()) throw std::invalid_argument("empty zeta grid");
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    if (!(zeta[i] > 0)) throw std::invalid_argument("zeta values must be positive");
    if (i && zeta[i] <= zeta[i - 1]) throw std::invalid_argument("zeta grid must be ascending");
  }
}

// Rate curve from one batch of passage times, thresholds N mu -+ zeta N.
inline RateCurve rate_curve_from_times(const std::vector<Time>& times, std::int64_t N, std::size_t d, Side side,
                                       const std::vector<double>& zeta, double mu_hat, std::uint64_t boot_seed,
                                       std::size_t rounds = 1000) {
  check_zeta_grid(zeta);
  RateCurve c;
  c.side = side;
  c.N = N;
  c.dimension = d;
  c.mu_hat = mu_hat;
  c.zeta = zeta;
  const double Nd = static_cast<double>(N);
  const double norm = rate_normalizer(side, Nd, d);
  std::vector<double> lx, ly;
  std::vector<std::size_t> fit_idx;
  for (std::size_t j = 0; j < zeta.size(); ++j) {
    const Magnitude m{Magnitude::Kind::zeta, zeta[j]};
    TailEstimate t = tail_from_times(times, side, tail_threshold(side, Nd, mu_hat, m));
    t.N = N;
    t.magnitude = m;
    t.mu_hat = mu_hat;
    c.informative = c.informative || t.hits > 0;
    const double rate = t.hits > 0 ? -std::log(t.p_hat) / norm : std::numeric_limits<double>::quiet_NaN();
    const bool ok = static_cast<double>(t.hits) >= kReliableHits && t.hits < t.n;
    c.normalized_rate.push_back(rate);
    c.reliable.push_back(ok);
    if (ok) {
      lx.push_back(std::log(zeta[j]));
      ly.push_back(std::log(rate));
      fit_idx.push_back(j);
    }
    c.points.push_back(t);
  }
  if (lx.size() >= 2) {
    const LineFit f = fit_line(lx, ly);
    c.power_hat = f.slope;
    c.fit_intercept = f.intercept;
    std::vector<double> boot, by(lx.size());
    for (std::size_t b = 0; b < rounds; ++b) {
      std::vector<std::uint64_t> hits(fit_idx.size(), 0);
      for (std::size_t i = 0; i < times.size(); ++i) {
        const Time& x = times[resample_index(boot_seed, b, 0, i, times.size())];
        for (std::size_t q = 0; q < fit_idx.size(); ++q) {
          const double thr = c.points[fit_idx[q]].threshold;
          hits[q] += side == Side::upper ? above(x, thr) : below(x, thr);
        }
      }
      bool ok = true;
      for (std::size_t q = 0; q < fit_idx.size() && ok; ++q) {
        ok = hits[q] > 0 && hits[q] < times.size();
        if (ok) by[q] = std::log(-std::log(static_cast<double>(hits[q]) / static_cast<double>(times.size())) / norm);
      }
      if (ok) boot.push_back(fit_line(lx, by).slope);
    }
    if (!boot.empty()) {
      c.power_ci_low = std::min(quantile_of(boot, 0.025), *c.power_hat);
      c.power_ci_high = std::max(quantile_of(boot, 0.975), *c.power_hat);
    }
  }
  return c;
}

template <std::size_t D>
RateCurve estimate_rate_curve(const WeightField<D>& base, const RealPoint<D>& u, std::int64_t N, Side side,
                              const std::vector<double>& zeta, double mu_hat, std::size_t n_samples,
                              const RunOptions& opt = {}) {
  check_zeta_grid(zeta);
  if (n_samples < 1) throw std::invalid_argument("rate curve needs n_samples >= 1");
  const auto times = axis_times(base, u, N, Stream::rate_curve, n_samples, opt);
  return rate_curve_from_times(times, N, D, side, zeta, mu_hat, bootstrap_seed(base, Stream::rate_curve));
}

// Exact normalized rates -log P / N^d (or / N) from an enumerated law.
inline std::vector<double> exact_normalized_rates(const ExactDistribution& law, std::int64_t N, std::size_t d,
                                                  Side side, const std::vector<double>& zeta, double mu) {
  std::vector<double> out;
  const double Nd = static_cast<double>(N);
  for (double z : zeta) {
    const double p = law.tail(side, tail_threshold(side, Nd, mu, Magnitude{Magnitude::Kind::zeta, z}));
    out.push_back(p > 0 ? -std::log(p) / rate_normalizer(side, Nd, d) : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

// Counts of samples beyond mean +- 2 sd.
struct TwoSidedExceedance {
  double mean = 0;
  double sd = 0;
  std::size_t above = 0;
  std::size_t below = 0;
};

inline TwoSidedExceedance two_sd_exceedances(const std::vector<double>& xs) {
  TwoSidedExceedance r;
  r.mean = mean(xs);
  r.sd = std::sqrt(sample_variance(xs));
  for (double x : xs) {
    r.above += x > r.mean + 2 * r.sd;
    r.below += x < r.mean - 2 * r.sd;
  }
  return r;
}

}  // namespace fpp
