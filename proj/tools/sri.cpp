// Command-line front end. Thin orchestration only: flags -> library calls ->
// artifacts. Exit codes: 0 ok, 2 usage, 3 data, 4 spec, 5 computation.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sri/error.hpp"
#include "sri/inference.hpp"
#include "sri/io.hpp"
#include "sri/selection.hpp"
#include "sri/simharness.hpp"

using namespace sri;

namespace {

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::UsageError:
    case ErrorCode::InvalidConfig:
      return 2;
    case ErrorCode::DataSchemaError:
    case ErrorCode::InsufficientUnits:
      return 3;
    case ErrorCode::SpecParseError:
      return 4;
    default:
      return 5;  // computation failed (budget, enumeration cap, degeneracies)
  }
}

// One machine-readable line on stderr per failure.
void emit_error(const Error& e) {
  nlohmann::json j;
  j["error"] = error_tag(e.code());
  std::string msg = e.what();
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  j["message"] = msg;
  if (const auto* ds = dynamic_cast<const DataSchemaError*>(&e)) {
    j["row"] = ds->row();
    j["column"] = ds->column();
  }
  std::cerr << j.dump() << "\n";
}

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UsageError, what + ": '" + text + "' is not a number");
  }
}

GridSpec parse_grid(const std::string& text) {
  auto parts = split_on(text, ':');
  if (parts.size() != 3)
    throw Error(ErrorCode::UsageError, "grid '" + text + "' must have the form lo:hi:step");
  GridSpec g;
  g.lo = parse_number(parts[0], "grid lower end");
  g.hi = parse_number(parts[1], "grid upper end");
  g.step = parse_number(parts[2], "grid step");
  return g;
}

std::vector<std::string> parse_groups(const std::string& text) {
  std::vector<std::string> out;
  for (const std::string& g : split_on(text, ','))
    if (!g.empty()) out.push_back(g);
  return out;
}

int default_threads() {
  const char* env = std::getenv("SRI_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1 || v > 4096)
    throw Error(ErrorCode::UsageError,
                std::string("SRI_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<int>(v);
}

// A single --window value applies to every stage; otherwise one per stage.
std::vector<int> expand_window(const std::vector<int>& window, int num_stages) {
  if (window.size() == 1 && num_stages > 1)
    return std::vector<int>(static_cast<std::size_t>(num_stages), window[0]);
  return window;
}

std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p = dir.empty() ? std::filesystem::path(".") : std::filesystem::path(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec)
    throw Error(ErrorCode::UsageError,
                "cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

// The record CSV carries no selection column; labels always come from the rule.
TrialRecord load_record(const TrialSpec& spec, const std::string& path) {
  TrialRecord rec = load_trial_record(path);
  rec.selection = observed_selection(spec, rec);
  return rec;
}

// --- flag bundles shared between verbs ---------------------------------------

struct DataArgs {
  std::string spec_path;
  std::string data_path;
};

struct NullArgs {
  std::string groups;
  double tau = 0.0;
  double background_tau = 0.0;
  CLI::Option* background_opt = nullptr;
};

struct StatArgs {
  std::string id = "standardized_ate";
  std::string direction = "le";
  int stage_min = 1;
  int stage_max = 0;  // 0 = unbounded
};

struct SamplerArgs {
  std::string sampler = "rwm";
  std::size_t samples = 1000;
  std::size_t burn_in = 0;  // 0 = samples/10
  std::size_t thin = 1;
  std::vector<int> window;        // empty = per-stage default
  std::uint64_t max_attempts = 0;  // 0 = 1000 * samples
  std::uint64_t enum_cap = std::uint64_t{1} << 22;
};

struct ScenarioArgs {
  int n1_low = 50;
  int n1_high = 50;
  int n2 = 40;
  double tau_low = 0.0;
  double tau_high = 0.0;
  bool select_on_stage2 = false;
};

void add_data_opts(CLI::App* c, DataArgs& d) {
  c->add_option("--spec", d.spec_path, "trial design JSON")->required();
  c->add_option("--data", d.data_path, "trial record CSV")->required();
}

void add_null_opts(CLI::App* c, NullArgs& n, bool with_tau) {
  c->add_option("--groups", n.groups,
                "comma-separated groups covered by the tested null (default: every unit)");
  if (with_tau) c->add_option("--tau", n.tau, "hypothesized effect (default 0)");
  n.background_opt =
      c->add_option("--background-tau", n.background_tau,
                    "pin units outside --groups at this effect; omitted, their "
                    "assignments are frozen into the conditioning event");
}

void add_stat_opts(CLI::App* c, StatArgs& s) {
  c->add_option("--statistic", s.id, "test statistic (default standardized_ate)")
      ->check(CLI::IsMember({"standardized_ate", "mean_difference", "relative_risk"}));
  c->add_option("--direction", s.direction,
                "which tail counts as extreme: le (small) or ge (large); default le")
      ->check(CLI::IsMember({"le", "ge"}));
  c->add_option("--stage-min", s.stage_min, "first stage the statistic reads (1-based)");
  c->add_option("--stage-max", s.stage_max, "last stage the statistic reads (0 = all)");
}

void add_sampler_opts(CLI::App* c, SamplerArgs& a) {
  c->add_option("--sampler", a.sampler, "p-value method (default rwm)")
      ->check(CLI::IsMember({"rwm", "rejection", "exact", "naive", "split", "selective_rwm",
                             "selective_rejection", "selective_exact"}));
  c->add_option("--samples", a.samples, "Monte Carlo draws / retained chain states");
  c->add_option("--burn-in", a.burn_in, "discarded chain states (0 = samples/10)");
  c->add_option("--thin", a.thin, "keep every thin-th chain state");
  c->add_option("--window", a.window,
                "random-walk window per stage; one value broadcasts to all stages");
  c->add_option("--max-attempts", a.max_attempts,
                "rejection-sampling proposal budget (0 = 1000 x samples)");
  c->add_option("--enum-cap", a.enum_cap, "exact-mode enumeration cap");
}

void add_scenario_opts(CLI::App* c, ScenarioArgs& sc) {
  c->add_option("--n1-low", sc.n1_low, "stage-1 low-group recruits");
  c->add_option("--n1-high", sc.n1_high, "stage-1 high-group recruits");
  c->add_option("--n2", sc.n2, "stage-2 recruits from the selected group(s)");
  c->add_option("--tau-low", sc.tau_low, "true effect in the low group");
  c->add_option("--tau-high", sc.tau_high, "true effect in the high group");
  c->add_flag("--select-on-stage2", sc.select_on_stage2,
              "recompute the final selection label from both stages (drops the hold-out)");
}

Hypothesis build_hypothesis(const NullArgs& n) {
  Hypothesis hyp;
  hyp.primary.groups = parse_groups(n.groups);
  hyp.primary.tau = n.tau;
  if (n.background_opt != nullptr && n.background_opt->count() > 0)
    hyp.background = NullSpec{{}, 1, 0, n.background_tau};
  return hyp;
}

StatisticSpec build_stat(const StatArgs& s) {
  StatisticSpec stat;
  stat.id = s.id;
  stat.direction = s.direction == "ge" ? Direction::Ge : Direction::Le;
  stat.stage_min = s.stage_min;
  if (s.stage_max > 0) stat.stage_max = s.stage_max;
  return stat;
}

InferenceOptions build_options(const SamplerArgs& a, int num_stages) {
  InferenceOptions opt;
  opt.method = method_from_name(a.sampler);
  opt.samples = a.samples;
  opt.burn_in = a.burn_in;
  opt.thin = a.thin;
  opt.window = expand_window(a.window, num_stages);
  opt.max_attempts = a.max_attempts;
  opt.enum_cap = a.enum_cap;
  return opt;
}

EnrichmentScenario build_scenario(const ScenarioArgs& sc) {
  EnrichmentScenario out;
  out.n1_low = sc.n1_low;
  out.n1_high = sc.n1_high;
  out.n2 = sc.n2;
  out.tau_low = sc.tau_low;
  out.tau_high = sc.tau_high;
  out.select_on_stage2 = sc.select_on_stage2;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"selective randomization inference for adaptive multi-stage experiments"};
  app.require_subcommand(1);

  // test: one p-value
  struct {
    DataArgs data;
    NullArgs null;
    StatArgs stat;
    SamplerArgs sampler;
    std::uint64_t seed = 1;
  } test_cmd;
  {
    auto* c = app.add_subcommand("test", "p-value for one hypothesized effect");
    add_data_opts(c, test_cmd.data);
    add_null_opts(c, test_cmd.null, true);
    add_stat_opts(c, test_cmd.stat);
    add_sampler_opts(c, test_cmd.sampler);
    c->add_option("--seed", test_cmd.seed, "RNG seed");
  }

  // ci: confidence set by test inversion
  struct {
    DataArgs data;
    NullArgs null;
    StatArgs stat;
    SamplerArgs sampler;
    std::string grid;
    double alpha = 0.1;
    std::string curve_out = "p_curve.csv";
    std::uint64_t seed = 1;
    int threads = 0;
  } ci_cmd;
  {
    auto* c = app.add_subcommand("ci", "confidence set over a tau grid");
    add_data_opts(c, ci_cmd.data);
    add_null_opts(c, ci_cmd.null, false);
    add_stat_opts(c, ci_cmd.stat);
    add_sampler_opts(c, ci_cmd.sampler);
    c->add_option("--tau-grid", ci_cmd.grid, "lo:hi:step")->required();
    c->add_option("--alpha", ci_cmd.alpha, "level (default 0.1)");
    c->add_option("--curve-out", ci_cmd.curve_out, "p-curve CSV path (default p_curve.csv)");
    c->add_option("--seed", ci_cmd.seed, "RNG seed");
    c->add_option("--threads", ci_cmd.threads, "workers (default: SRI_THREADS or 1)");
  }

  // estimate: p-curve midpoint crossing 1/2
  struct {
    DataArgs data;
    NullArgs null;
    StatArgs stat;
    SamplerArgs sampler;
    std::string grid;
    std::string curve_out;
    std::uint64_t seed = 1;
    int threads = 0;
  } est_cmd;
  {
    auto* c = app.add_subcommand("estimate", "point estimate from the p-curve");
    add_data_opts(c, est_cmd.data);
    add_null_opts(c, est_cmd.null, false);
    add_stat_opts(c, est_cmd.stat);
    add_sampler_opts(c, est_cmd.sampler);
    c->add_option("--tau-grid", est_cmd.grid, "lo:hi:step")->required();
    c->add_option("--curve-out", est_cmd.curve_out, "optional p-curve CSV path");
    c->add_option("--seed", est_cmd.seed, "RNG seed");
    c->add_option("--threads", est_cmd.threads, "workers (default: SRI_THREADS or 1)");
  }

  // simulate: rejection-probability study on synthetic enrichment trials
  struct {
    ScenarioArgs scenario;
    int replications = 400;
    std::string grid = "-1:1:0.2";
    double alpha = 0.1;
    std::size_t samples = 1000;
    std::uint64_t max_attempts = 100000;
    std::vector<int> window;
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    int threads = 0;
  } sim_cmd;
  {
    auto* c = app.add_subcommand("simulate",
                                 "rejection probabilities of all methods on synthetic trials");
    add_scenario_opts(c, sim_cmd.scenario);
    c->add_option("--replications", sim_cmd.replications, "generated trials");
    c->add_option("--tau-grid", sim_cmd.grid, "tested nulls, lo:hi:step");
    c->add_option("--alpha", sim_cmd.alpha, "level (default 0.1)");
    c->add_option("--samples", sim_cmd.samples, "Monte Carlo draws per p-value");
    c->add_option("--max-attempts", sim_cmd.max_attempts, "rejection-sampling budget");
    c->add_option("--window", sim_cmd.window, "random-walk window per stage");
    c->add_option("--out-dir", sim_cmd.out_dir, "artifact directory (default .)");
    c->add_option("--seed", sim_cmd.seed, "RNG seed");
    c->add_option("--threads", sim_cmd.threads, "workers (default: SRI_THREADS or 1)");
  }

  // coverage: lower confidence bounds on synthetic enrichment trials
  struct {
    ScenarioArgs scenario;
    int replications = 400;
    double alpha = 0.1;
    std::size_t samples = 1000;
    std::uint64_t max_attempts = 100000;
    std::vector<int> window;
    double bracket_lo = -1.25;
    double bracket_hi = 2.0;
    double bracket_tol = 0.0125;
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    int threads = 0;
  } cov_cmd;
  {
    auto* c = app.add_subcommand("coverage", "lower-bound coverage of all methods");
    add_scenario_opts(c, cov_cmd.scenario);
    c->add_option("--replications", cov_cmd.replications, "generated trials");
    c->add_option("--alpha", cov_cmd.alpha, "level (default 0.1)");
    c->add_option("--samples", cov_cmd.samples, "Monte Carlo draws per p-value");
    c->add_option("--max-attempts", cov_cmd.max_attempts, "rejection-sampling budget");
    c->add_option("--window", cov_cmd.window, "random-walk window per stage");
    c->add_option("--bracket-lo", cov_cmd.bracket_lo, "bisection bracket lower end");
    c->add_option("--bracket-hi", cov_cmd.bracket_hi, "bisection bracket upper end");
    c->add_option("--bracket-tol", cov_cmd.bracket_tol, "bisection tolerance");
    c->add_option("--out-dir", cov_cmd.out_dir, "artifact directory (default .)");
    c->add_option("--seed", cov_cmd.seed, "RNG seed");
    c->add_option("--threads", cov_cmd.threads, "workers (default: SRI_THREADS or 1)");
  }

  // holdout: exact p-curves with and without hold-out selection
  struct {
    ScenarioArgs scenario{4, 4, 8, 0.0, 1.0, false};
    int datasets = 20;
    std::string grid = "-2:3:0.25";
    std::uint64_t enum_cap = std::uint64_t{1} << 22;
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    int threads = 0;
  } hold_cmd;
  {
    auto* c = app.add_subcommand("holdout", "exact p-curve smoothing comparison");
    add_scenario_opts(c, hold_cmd.scenario);
    c->add_option("--datasets", hold_cmd.datasets, "generated datasets");
    c->add_option("--tau-grid", hold_cmd.grid, "curve grid, lo:hi:step");
    c->add_option("--enum-cap", hold_cmd.enum_cap, "enumeration cap per design");
    c->add_option("--out-dir", hold_cmd.out_dir, "artifact directory (default .)");
    c->add_option("--seed", hold_cmd.seed, "RNG seed");
    c->add_option("--threads", hold_cmd.threads, "workers (default: SRI_THREADS or 1)");
  }

  // placebo: subsampled two-stage trials from a completed dataset
  struct {
    std::string pool_path;
    std::string emit_pool;
    std::string protocol = "placebo";
    int trials = 200;
    int max_trials = 1600;
    std::string target_group = "ge80";
    int n1 = 2000;
    int n2 = 200;
    std::size_t samples = 1000;
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    int threads = 0;
  } plac_cmd;
  {
    auto* c = app.add_subcommand(
        "placebo", "p-value distributions over subsampled two-stage trials");
    c->add_option("--pool", plac_cmd.pool_path,
                  "pool CSV (unit_id,group,treatment,outcome); default: built-in surrogate");
    c->add_option("--emit-pool", plac_cmd.emit_pool, "also write the pool used to this path");
    c->add_option("--protocol", plac_cmd.protocol,
                  "placebo fabricates Bernoulli(1/2) arms; power keeps recorded arms")
        ->check(CLI::IsMember({"placebo", "power"}));
    c->add_option("--trials", plac_cmd.trials, "kept trials with the target selection");
    c->add_option("--max-trials", plac_cmd.max_trials, "generation cap");
    c->add_option("--target-group", plac_cmd.target_group, "selection label to keep");
    c->add_option("--n1", plac_cmd.n1, "stage-1 subsample size");
    c->add_option("--n2", plac_cmd.n2, "stage-2 subsample size");
    c->add_option("--samples", plac_cmd.samples, "Monte Carlo draws per p-value");
    c->add_option("--out-dir", plac_cmd.out_dir, "artifact directory (default .)");
    c->add_option("--seed", plac_cmd.seed, "RNG seed");
    c->add_option("--threads", plac_cmd.threads, "workers (default: SRI_THREADS or 1)");
  }

  // tune-window: pilot-run proposal width selection
  struct {
    DataArgs data;
    NullArgs null;
    std::vector<std::string> candidates;
    std::size_t pilot_length = 200;
    std::uint64_t seed = 1;
  } tune_cmd;
  {
    auto* c = app.add_subcommand("tune-window", "pick the random-walk window by pilot runs");
    add_data_opts(c, tune_cmd.data);
    add_null_opts(c, tune_cmd.null, true);
    c->add_option("--candidates", tune_cmd.candidates,
                  "window candidates, e.g. 2 5 10 or per-stage 5:3")
        ->required();
    c->add_option("--pilot-length", tune_cmd.pilot_length, "chain states per pilot");
    c->add_option("--seed", tune_cmd.seed, "RNG seed");
  }

  // validate: structural + selection-consistency report
  struct {
    DataArgs data;
  } val_cmd;
  {
    auto* c = app.add_subcommand("validate", "check a record against its design");
    add_data_opts(c, val_cmd.data);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error(Error(ErrorCode::UsageError, e.what()));
    return 2;
  }

  try {
    if (app.got_subcommand("test")) {
      TrialSpec spec = load_trial_spec(test_cmd.data.spec_path);
      TrialRecord rec = load_record(spec, test_cmd.data.data_path);
      PValueResult res =
          compute_pvalue(spec, rec, build_hypothesis(test_cmd.null), build_stat(test_cmd.stat),
                         build_options(test_cmd.sampler, rec.num_stages()), Rng(test_cmd.seed));
      std::cout << pvalue_json(res);
      return 0;
    }

    if (app.got_subcommand("ci")) {
      TrialSpec spec = load_trial_spec(ci_cmd.data.spec_path);
      TrialRecord rec = load_record(spec, ci_cmd.data.data_path);
      InferenceOptions opt = build_options(ci_cmd.sampler, rec.num_stages());
      ConfidenceSet cs = confidence_set(spec, rec, build_hypothesis(ci_cmd.null),
                                        build_stat(ci_cmd.stat), parse_grid(ci_cmd.grid),
                                        ci_cmd.alpha, opt, Rng(ci_cmd.seed),
                                        ci_cmd.threads > 0 ? ci_cmd.threads : default_threads());
      if (!ci_cmd.curve_out.empty())
        write_text_file(ci_cmd.curve_out, p_curve_csv(cs, opt.method));
      std::cout << confidence_set_json(cs, opt.method);
      return 0;
    }

    if (app.got_subcommand("estimate")) {
      TrialSpec spec = load_trial_spec(est_cmd.data.spec_path);
      TrialRecord rec = load_record(spec, est_cmd.data.data_path);
      InferenceOptions opt = build_options(est_cmd.sampler, rec.num_stages());
      GridSpec grid = parse_grid(est_cmd.grid);
      ConfidenceSet cs = confidence_set(spec, rec, build_hypothesis(est_cmd.null),
                                        build_stat(est_cmd.stat), grid, 0.5, opt,
                                        Rng(est_cmd.seed),
                                        est_cmd.threads > 0 ? est_cmd.threads : default_threads());
      if (!est_cmd.curve_out.empty())
        write_text_file(est_cmd.curve_out, p_curve_csv(cs, opt.method));
      double est = hl_estimate(cs.p_curve);
      nlohmann::json j;
      j["estimate"] = est;
      j["method"] = method_name(opt.method);
      j["grid"] = {{"lo", grid.lo}, {"hi", grid.hi}, {"step", grid.step}};
      j["samples"] = opt.samples;
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (app.got_subcommand("simulate")) {
      StudyConfig cfg;
      cfg.replications = sim_cmd.replications;
      cfg.scenario = build_scenario(sim_cmd.scenario);
      cfg.tau_grid = parse_grid(sim_cmd.grid).values();
      cfg.alpha = sim_cmd.alpha;
      cfg.samples = sim_cmd.samples;
      cfg.max_attempts = sim_cmd.max_attempts;
      if (!sim_cmd.window.empty()) cfg.window = expand_window(sim_cmd.window, 2);
      cfg.seed = sim_cmd.seed;
      cfg.threads = sim_cmd.threads > 0 ? sim_cmd.threads : default_threads();
      StudyReport rep = run_rejection_study(cfg);
      auto dir = ensure_dir(sim_cmd.out_dir);
      write_text_file((dir / "rejection_pvalues.csv").string(), pvalue_rows_csv(rep));
      write_text_file((dir / "rejection_summary.json").string(), study_summary_json(rep));
      write_text_file((dir / "rejection_timings.csv").string(), timings_csv(rep));
      std::cout << study_summary_json(rep);
      return 0;
    }

    if (app.got_subcommand("coverage")) {
      StudyConfig cfg;
      cfg.replications = cov_cmd.replications;
      cfg.scenario = build_scenario(cov_cmd.scenario);
      cfg.alpha = cov_cmd.alpha;
      cfg.samples = cov_cmd.samples;
      cfg.max_attempts = cov_cmd.max_attempts;
      if (!cov_cmd.window.empty()) cfg.window = expand_window(cov_cmd.window, 2);
      cfg.bracket_lo = cov_cmd.bracket_lo;
      cfg.bracket_hi = cov_cmd.bracket_hi;
      cfg.bracket_tol = cov_cmd.bracket_tol;
      cfg.seed = cov_cmd.seed;
      cfg.threads = cov_cmd.threads > 0 ? cov_cmd.threads : default_threads();
      StudyReport rep = run_coverage_study(cfg);
      auto dir = ensure_dir(cov_cmd.out_dir);
      write_text_file((dir / "coverage_bounds.csv").string(), bound_rows_csv(rep));
      write_text_file((dir / "coverage_summary.json").string(), study_summary_json(rep));
      write_text_file((dir / "coverage_timings.csv").string(), timings_csv(rep));
      std::cout << study_summary_json(rep);
      return 0;
    }

    if (app.got_subcommand("holdout")) {
      HoldoutConfig cfg;
      cfg.datasets = hold_cmd.datasets;
      cfg.scenario = build_scenario(hold_cmd.scenario);
      cfg.grid = parse_grid(hold_cmd.grid);
      cfg.enum_cap = hold_cmd.enum_cap;
      cfg.seed = hold_cmd.seed;
      cfg.threads = hold_cmd.threads > 0 ? hold_cmd.threads : default_threads();
      HoldoutReport rep = run_holdout_study(cfg);
      auto dir = ensure_dir(hold_cmd.out_dir);
      write_text_file((dir / "holdout_curves.csv").string(), holdout_curves_csv(rep));
      write_text_file((dir / "holdout_summary.json").string(), holdout_summary_json(rep));
      std::cout << holdout_summary_json(rep);
      return 0;
    }

    if (app.got_subcommand("placebo")) {
      std::vector<PoolRow> pool =
          plac_cmd.pool_path.empty() ? make_surrogate_pool() : load_pool(plac_cmd.pool_path);
      if (!plac_cmd.emit_pool.empty())
        write_text_file(plac_cmd.emit_pool, serialize_pool(pool));
      PlaceboConfig cfg;
      cfg.target_trials = plac_cmd.trials;
      cfg.max_trials = plac_cmd.max_trials;
      cfg.target_group = plac_cmd.target_group;
      cfg.n1 = plac_cmd.n1;
      cfg.n2 = plac_cmd.n2;
      cfg.samples = plac_cmd.samples;
      cfg.fabricate_arms = plac_cmd.protocol == "placebo";
      cfg.seed = plac_cmd.seed;
      cfg.threads = plac_cmd.threads > 0 ? plac_cmd.threads : default_threads();
      PlaceboReport rep = run_placebo_study(pool, cfg);
      auto dir = ensure_dir(plac_cmd.out_dir);
      write_text_file((dir / (plac_cmd.protocol + "_rows.csv")).string(), placebo_rows_csv(rep));
      write_text_file((dir / (plac_cmd.protocol + "_summary.json")).string(),
                      placebo_summary_json(rep));
      std::cout << placebo_summary_json(rep);
      return 0;
    }

    if (app.got_subcommand("tune-window")) {
      TrialSpec spec = load_trial_spec(tune_cmd.data.spec_path);
      TrialRecord rec = load_record(spec, tune_cmd.data.data_path);
      Workspace ws(spec, rec, build_hypothesis(tune_cmd.null));
      std::vector<std::vector<int>> candidates;
      for (const std::string& text : tune_cmd.candidates) {
        std::vector<int> cand;
        for (const std::string& part : split_on(text, ':')) {
          try {
            cand.push_back(std::stoi(part));
          } catch (const std::exception&) {
            throw Error(ErrorCode::UsageError,
                        "window candidate '" + text + "' is not an integer list");
          }
        }
        candidates.push_back(expand_window(cand, rec.num_stages()));
      }
      std::vector<WindowScore> scores;
      Rng rng(tune_cmd.seed);
      std::vector<int> best = tune_window(ws, candidates, tune_cmd.pilot_length, rng, &scores);
      nlohmann::json j;
      j["window"] = best;
      nlohmann::json arr = nlohmann::json::array();
      for (const WindowScore& s : scores) {
        nlohmann::json row;
        row["window"] = s.window;
        row["msejd"] = s.msejd;
        row["acceptance_rate"] = s.acceptance_rate;
        arr.push_back(std::move(row));
      }
      j["scores"] = std::move(arr);
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (app.got_subcommand("validate")) {
      TrialSpec spec = load_trial_spec(val_cmd.data.spec_path);
      TrialRecord rec = load_trial_record(val_cmd.data.data_path);
      // structure first; only a sound record is safe to run the rule on, and
      // only with recomputed labels can label-dependent plans be checked
      std::vector<ValidationIssue> issues = validate_record(spec, rec);
      if (issues.empty()) {
        std::vector<ValidationIssue> more = validate_selection_consistency(spec, rec);
        issues.insert(issues.end(), more.begin(), more.end());
        if (issues.empty()) {
          rec.selection = observed_selection(spec, rec);
          std::vector<ValidationIssue> labeled = validate_record(spec, rec);
          issues.insert(issues.end(), labeled.begin(), labeled.end());
        }
      }
      nlohmann::json j;
      j["ok"] = issues.empty();
      nlohmann::json arr = nlohmann::json::array();
      for (const ValidationIssue& issue : issues) {
        nlohmann::json row;
        row["code"] = issue.code;
        row["message"] = issue.message;
        arr.push_back(std::move(row));
      }
      j["issues"] = std::move(arr);
      std::cout << j.dump(2) << "\n";
      return issues.empty() ? 0 : 3;
    }

    throw Error(ErrorCode::UsageError, "no verb selected");
  } catch (const Error& e) {
    emit_error(e);
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    emit_error(Error(ErrorCode::Undefined, e.what()));
    return 5;
  }
}
