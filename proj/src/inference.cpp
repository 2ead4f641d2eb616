#include "sri/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sri/assignment_space.hpp"
#include "sri/error.hpp"
#include "sri/parallel.hpp"

namespace sri {

std::string method_name(PValueMethod m) {
  switch (m) {
    case PValueMethod::Naive:
      return "naive";
    case PValueMethod::Split:
      return "split";
    case PValueMethod::SelectiveExact:
      return "selective_exact";
    case PValueMethod::SelectiveRejection:
      return "selective_rejection";
    case PValueMethod::SelectiveRwm:
      return "selective_rwm";
  }
  return "unknown";
}

PValueMethod method_from_name(const std::string& name) {
  if (name == "naive") return PValueMethod::Naive;
  if (name == "split") return PValueMethod::Split;
  if (name == "selective_exact" || name == "exact") return PValueMethod::SelectiveExact;
  if (name == "selective_rejection" || name == "rejection") return PValueMethod::SelectiveRejection;
  if (name == "selective_rwm" || name == "rwm") return PValueMethod::SelectiveRwm;
  throw Error(ErrorCode::UsageError, "unknown p-value method '" + name + "'");
}

double mc_pvalue(std::uint64_t hits, std::size_t m) {
  return static_cast<double>(1 + hits) / static_cast<double>(1 + m);
}

double mc_pvalue(std::span<const double> stat_values, double observed, Direction direction) {
  std::uint64_t hits = 0;
  for (double v : stat_values)
    if (direction_counts(direction, v, observed)) ++hits;
  return mc_pvalue(hits, stat_values.size());
}

double binomial_se(double p, std::size_t m) {
  if (m == 0) return 0.0;
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(m));
}

double batch_means_se(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return 0.0;
  const std::size_t b = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const std::size_t len = n / b;
  double grand = 0.0;
  std::vector<double> means(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < len; ++j) s += x[i * len + j];
    means[i] = s / static_cast<double>(len);
    grand += means[i];
  }
  grand /= static_cast<double>(b);
  double s2 = 0.0;
  for (double m : means) s2 += (m - grand) * (m - grand);
  s2 /= static_cast<double>(b - 1);
  return std::sqrt(s2 / static_cast<double>(b));
}

PValueResult selective_pvalue_exact(const TrialSpec& spec, const TrialRecord& rec,
                                    const Hypothesis& hyp, const StatisticSpec& stat,
                                    std::uint64_t cap) {
  Workspace ws(spec, rec, hyp);
  ExactSupport sup = exact_conditional_support(ws, cap);
  CompiledStatistic cs(ws, stat);
  const double observed = cs.observed_value();
  double p = 0.0;
  for (std::size_t i = 0; i < sup.states.size(); ++i)
    if (direction_counts(stat.direction, cs.eval(sup.states[i]), observed)) p += sup.prob[i];
  PValueResult out;
  out.estimate = p;
  out.method = PValueMethod::SelectiveExact;
  out.num_samples = sup.states.size();
  return out;
}

PValueResult selective_pvalue_rejection(const TrialSpec& spec, const TrialRecord& rec,
                                        const Hypothesis& hyp, const StatisticSpec& stat,
                                        std::size_t m, std::uint64_t max_attempts, Rng rng) {
  Workspace ws(spec, rec, hyp);
  CompiledStatistic cs(ws, stat);
  const double observed = cs.observed_value();
  std::uint64_t hits = 0;
  PValueResult out;
  rejection_run(
      ws, m, max_attempts, rng,
      [&](const Assignment& z) {
        if (direction_counts(stat.direction, cs.eval(z), observed)) ++hits;
      },
      &out.diagnostics);
  out.estimate = mc_pvalue(hits, m);
  out.method = PValueMethod::SelectiveRejection;
  out.mc_standard_error = binomial_se(out.estimate, m);
  out.num_samples = m;
  return out;
}

PValueResult selective_pvalue_rwm(const TrialSpec& spec, const TrialRecord& rec,
                                  const Hypothesis& hyp, const StatisticSpec& stat,
                                  const RwmConfig& cfg, Rng rng) {
  Workspace ws(spec, rec, hyp);
  CompiledStatistic cs(ws, stat);
  const double observed = cs.observed_value();
  std::vector<double> indicators;
  indicators.reserve(cfg.length);
  PValueResult out;
  rwm_run(
      ws, cfg, rng,
      [&](const Assignment& z) {
        indicators.push_back(direction_counts(stat.direction, cs.eval(z), observed) ? 1.0 : 0.0);
      },
      &out.diagnostics);
  std::uint64_t hits = 0;
  for (double v : indicators) hits += v > 0.5 ? 1 : 0;
  out.estimate = mc_pvalue(hits, indicators.size());
  out.method = PValueMethod::SelectiveRwm;
  out.mc_standard_error = batch_means_se(indicators);
  out.num_samples = indicators.size();
  return out;
}

PValueResult naive_pvalue(const TrialSpec& spec, const TrialRecord& rec, const Hypothesis& hyp,
                          const StatisticSpec& stat, std::size_t m, Rng rng) {
  Workspace ws(spec, rec, hyp);
  CompiledStatistic cs(ws, stat);
  const double observed = cs.observed_value();
  std::uint64_t hits = 0;
  for (std::size_t t = 0; t < m; ++t) {
    Assignment z = draw_unconditional(ws, rng);
    if (direction_counts(stat.direction, cs.eval(z), observed)) ++hits;
  }
  PValueResult out;
  out.estimate = mc_pvalue(hits, m);
  out.method = PValueMethod::Naive;
  out.mc_standard_error = binomial_se(out.estimate, m);
  out.num_samples = m;
  return out;
}

PValueResult split_pvalue(const TrialSpec& spec, const TrialRecord& rec, const Hypothesis& hyp,
                          const StatisticSpec& stat, std::size_t m, Rng rng) {
  PValueResult out;
  out.method = PValueMethod::Split;
  if (rec.num_stages() < 2) {
    out.estimate = 1.0;
    return out;
  }
  Workspace ws(spec, rec, hyp);
  StatisticSpec second = stat;
  second.stage_min = std::max(stat.stage_min, 2);
  CompiledStatistic cs(ws, second);
  const double observed = cs.observed_value();
  Assignment z = ws.observed();
  std::uint64_t hits = 0;
  for (std::size_t t = 0; t < m; ++t) {
    for (int k = 1; k < rec.num_stages(); ++k)
      draw_stage(spec, rec, k, ws.observed_s()[k - 1], rng, z.stages[k]);
    if (direction_counts(second.direction, cs.eval(z), observed)) ++hits;
  }
  out.estimate = mc_pvalue(hits, m);
  out.mc_standard_error = binomial_se(out.estimate, m);
  out.num_samples = m;
  return out;
}

RwmConfig make_rwm_config(const TrialRecord& rec, const InferenceOptions& opt) {
  RwmConfig cfg;
  cfg.window = opt.window;
  if (cfg.window.empty()) {
    for (const auto& st : rec.stages) {
      int n = static_cast<int>(st.units.size());
      cfg.window.push_back(std::min(n, std::max(2, n / 10)));
    }
  }
  cfg.length = opt.samples;
  cfg.burn_in = opt.burn_in;
  cfg.thin = opt.thin;
  return cfg;
}

PValueResult compute_pvalue(const TrialSpec& spec, const TrialRecord& rec, const Hypothesis& hyp,
                            const StatisticSpec& stat, const InferenceOptions& opt, Rng rng) {
  switch (opt.method) {
    case PValueMethod::Naive:
      return naive_pvalue(spec, rec, hyp, stat, opt.samples, rng);
    case PValueMethod::Split:
      return split_pvalue(spec, rec, hyp, stat, opt.samples, rng);
    case PValueMethod::SelectiveExact:
      return selective_pvalue_exact(spec, rec, hyp, stat, opt.enum_cap);
    case PValueMethod::SelectiveRejection: {
      std::uint64_t budget = opt.max_attempts > 0
                                 ? opt.max_attempts
                                 : static_cast<std::uint64_t>(1000) * opt.samples;
      return selective_pvalue_rejection(spec, rec, hyp, stat, opt.samples, budget, rng);
    }
    case PValueMethod::SelectiveRwm:
      return selective_pvalue_rwm(spec, rec, hyp, stat, make_rwm_config(rec, opt), rng);
  }
  throw Error(ErrorCode::InvalidConfig, "unhandled p-value method");
}

std::vector<double> GridSpec::values() const {
  if (step <= 0.0) throw Error(ErrorCode::InvalidConfig, "grid step must be positive");
  if (hi < lo) throw Error(ErrorCode::InvalidConfig, "grid upper end below lower end");
  std::vector<double> out;
  for (int i = 0;; ++i) {
    double v = lo + step * i;
    if (v > hi + step * 1e-9) break;
    out.push_back(v);
  }
  return out;
}

std::vector<std::pair<double, double>> intervals_above(const std::vector<GridPointResult>& curve,
                                                       double alpha) {
  std::vector<std::pair<double, double>> out;
  bool open = false;
  double start = 0.0, last = 0.0;
  for (const auto& pt : curve) {
    if (!pt.failed && pt.p > alpha) {
      if (!open) {
        open = true;
        start = pt.tau;
      }
      last = pt.tau;
    } else if (open) {
      out.emplace_back(start, last);
      open = false;
    }
  }
  if (open) out.emplace_back(start, last);
  return out;
}

ConfidenceSet confidence_set(const TrialSpec& spec, const TrialRecord& rec, const Hypothesis& base,
                             const StatisticSpec& stat, const GridSpec& grid, double alpha,
                             const InferenceOptions& opt, Rng rng, int threads) {
  ConfidenceSet out;
  out.alpha = alpha;
  out.grid = grid;
  std::vector<double> taus = grid.values();
  out.p_curve.resize(taus.size());
  parallel_for(taus.size(), threads, [&](std::size_t i) {
    GridPointResult& pt = out.p_curve[i];
    pt.tau = taus[i];
    try {
      PValueResult r = compute_pvalue(spec, rec, base.with_tau(taus[i]), stat, opt, rng.fork(i));
      pt.p = r.estimate;
      pt.se = r.mc_standard_error;
    } catch (const Error& e) {
      pt.failed = true;
      pt.error = e.what();
    }
  });
  out.intervals = intervals_above(out.p_curve, alpha);
  return out;
}

double lower_bound_bisect(const std::function<double(double)>& pvalue_at, double lo, double hi,
                          double alpha, double tol, bool check_endpoints) {
  if (!(tol > 0.0) || !(lo < hi))
    throw Error(ErrorCode::InvalidConfig, "bisection needs lo < hi and a positive tolerance");
  if (check_endpoints) {
    if (pvalue_at(lo) > alpha)
      throw Error(ErrorCode::NoBracket, "p-value already above alpha at the lower bracket end");
    if (pvalue_at(hi) <= alpha)
      throw Error(ErrorCode::NoBracket, "p-value not above alpha at the upper bracket end");
  }
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    if (pvalue_at(mid) > alpha)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

double hl_estimate(const std::vector<GridPointResult>& curve) {
  double below = -std::numeric_limits<double>::infinity();
  double above = std::numeric_limits<double>::infinity();
  bool has_below = false, has_above = false;
  for (const auto& pt : curve) {
    if (pt.failed) continue;
    if (pt.p < 0.5) {
      has_below = true;
      below = std::max(below, pt.tau);
    } else if (pt.p > 0.5) {
      has_above = true;
      above = std::min(above, pt.tau);
    }
  }
  if (!has_below)
    throw Error(ErrorCode::Undefined, "p-curve never falls below 1/2 on the grid (sup side empty)");
  if (!has_above)
    throw Error(ErrorCode::Undefined, "p-curve never rises above 1/2 on the grid (inf side empty)");
  return 0.5 * (below + above);
}

}  // namespace sri
