#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "activeid/design.hpp"
#include "activeid/error.hpp"
#include "activeid/identification.hpp"
#include "activeid/lti.hpp"

namespace activeid {

/// Parses "ce", "oracle", "isotropic" or "offline", optionally followed by
/// ":rho=<const<c>|inv_k|inv_k_sq|exp_decay|oracle_rule>" and ":eta=<x>".
/// "offline" is a fixed sequence filled in by run_experiment with the oracle
/// design over the whole experiment length.
inline StrategyConfig parse_strategy(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  detail::require(!parts.empty() && !parts[0].empty(), "empty strategy");
  StrategyConfig s;
  s.label = text;
  const std::string& kind = parts[0];
  if (kind == "ce")
    s.kind = StrategyKind::certainty_equivalence;
  else if (kind == "oracle")
    s.kind = StrategyKind::oracle_optimal;
  else if (kind == "isotropic")
    s.kind = StrategyKind::isotropic;
  else if (kind == "offline")
    s.kind = StrategyKind::fixed_sequence;
  else
    throw std::invalid_argument("unknown strategy kind '" + kind + "' in '" + text + "'");
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    detail::require(eq != std::string::npos, "strategy option '" + parts[i] + "' is not key=value");
    const std::string key = parts[i].substr(0, eq);
    const std::string val = parts[i].substr(eq + 1);
    try {
      if (key == "eta") {
        s.eta = std::stod(val);
      } else if (key == "rho") {
        if (val == "inv_k")
          s.rho = {RhoSchedule::Kind::inv_k, 0.0};
        else if (val == "inv_k_sq")
          s.rho = {RhoSchedule::Kind::inv_k_sq, 0.0};
        else if (val == "exp_decay")
          s.rho = {RhoSchedule::Kind::exp_decay, 0.0};
        else if (val == "oracle_rule")
          s.rho = {RhoSchedule::Kind::oracle_rule, 0.0};
        else if (val.rfind("const", 0) == 0)
          s.rho = RhoSchedule::constant(std::stod(val.substr(5)));
        else
          throw std::invalid_argument("unknown rho schedule '" + val + "'");
      } else {
        throw std::invalid_argument("unknown strategy option '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("bad strategy '" + text + "': " + e.what());
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("bad strategy '" + text + "': value out of range");
    }
  }
  s.validate();
  return s;
}

struct ExperimentSpec {
  std::string scenario_name;
  Scenario scenario;
  std::vector<StrategyConfig> strategies;
  int tau = 15;
  int episodes = 5;
  double delta = 0.05;
  int mc_runs = 100;
  std::uint64_t base_seed = 42;
  /// 0 means one worker per hardware thread.
  unsigned threads = 0;
  /// Curves need every episode; set to stop runs at their declaration.
  bool stop_on_declare = false;
  DesignOptions design{};
};

/// One row per (strategy, run, episode).
struct RunRow {
  std::string scenario;
  std::string strategy;
  std::size_t strategy_index = 0;
  std::uint64_t seed = 0;
  int episode = 0;
  double likelihood_true = 0.0;
  double posterior_true = 0.0;
  bool declared = false;
  long declared_index = -1;
  double rho_used = 0.0;
  double plan_energy = 0.0;
  std::string error;
};

inline std::vector<RunRow> run_experiment(const ExperimentSpec& spec) {
  detail::require(spec.mc_runs >= 1, "mc_runs must be >= 1");
  detail::require(spec.episodes >= 1, "episodes must be >= 1");
  detail::require(!spec.strategies.empty(), "no strategies given");

  std::vector<StrategyConfig> strategies = spec.strategies;
  bool needs_designer = false;
  for (auto& s : strategies) {
    if (s.kind == StrategyKind::fixed_sequence && s.fixed_inputs.size() == 0) {
      const ExcitationPlan plan = design_oracle_input(spec.scenario, spec.tau * spec.episodes, spec.design);
      s.fixed_inputs = unstack(plan.U, spec.scenario.n_u());
    }
    needs_designer |= s.kind == StrategyKind::oracle_optimal || s.kind == StrategyKind::certainty_equivalence;
  }
  std::unique_ptr<ExcitationDesigner> designer;
  if (needs_designer) designer = std::make_unique<ExcitationDesigner>(spec.scenario, spec.tau, spec.design);

  const std::size_t runs = static_cast<std::size_t>(spec.mc_runs);
  const std::size_t jobs = strategies.size() * runs;
  std::vector<std::vector<RunRow>> out(jobs);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t job; (job = next.fetch_add(1)) < jobs;) {
      const std::size_t si = job / runs;
      const std::uint64_t seed = spec.base_seed ^ static_cast<std::uint64_t>(job % runs);
      const StrategyConfig& s = strategies[si];
      RunRow base;
      base.scenario = spec.scenario_name;
      base.strategy = s.label.empty() ? to_string(s.kind) : s.label;
      base.strategy_index = si;
      base.seed = seed;
      try {
        RunOptions ro;
        ro.stop_on_declare = spec.stop_on_declare;
        ro.designer = designer.get();
        ro.design = spec.design;
        const IdentificationResult res =
            run_identification(spec.scenario, s, spec.tau, spec.delta, spec.episodes, seed, ro);
        for (const auto& e : res.episodes) {
          RunRow r = base;
          r.episode = e.k;
          r.likelihood_true = e.likelihood_true_raw;
          r.posterior_true = e.posterior_true;
          r.declared = e.terminated;
          r.declared_index = e.declared ? static_cast<long>(*e.declared) : -1;
          r.rho_used = e.rho_used;
          r.plan_energy = e.plan_energy;
          out[job].push_back(std::move(r));
        }
      } catch (const std::exception& ex) {
        RunRow r = base;
        r.likelihood_true = r.posterior_true = r.rho_used = r.plan_energy = std::numeric_limits<double>::quiet_NaN();
        r.error = ex.what();
        out[job] = {r};
      }
    }
  };

  unsigned n_threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, jobs));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<RunRow> rows;
  for (auto& v : out)
    for (auto& r : v) rows.push_back(std::move(r));
  std::stable_sort(rows.begin(), rows.end(), [](const RunRow& a, const RunRow& b) {
    if (a.strategy_index != b.strategy_index) return a.strategy_index < b.strategy_index;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.episode < b.episode;
  });
  return rows;
}

struct SummaryRow {
  std::string strategy;
  int episode = 0;
  std::size_t n = 0;
  double likelihood_mean = 0.0;
  double likelihood_std = 0.0;
  double posterior_mean = 0.0;
  double posterior_std = 0.0;
};

/// Per-(strategy, episode) mean and population standard deviation, with an
/// episode-0 row at the uniform prior 1/n_candidates. Error rows are skipped.
inline std::vector<SummaryRow> summarize(const std::vector<RunRow>& rows, std::size_t n_candidates) {
  detail::require(n_candidates >= 1, "n_candidates must be positive");
  struct Acc {
    std::string label;
    std::vector<double> lik;
    std::vector<double> post;
  };
  std::map<std::pair<std::size_t, int>, Acc> acc;
  std::map<std::size_t, std::pair<std::string, std::size_t>> runs;  // strategy -> (label, runs at episode 1)
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    auto& a = acc[{r.strategy_index, r.episode}];
    a.label = r.strategy;
    a.lik.push_back(r.likelihood_true);
    a.post.push_back(r.posterior_true);
    auto& rc = runs[r.strategy_index];
    rc.first = r.strategy;
    if (r.episode == 1) ++rc.second;
  }
  auto stats = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(ss / static_cast<double>(v.size()))};
  };
  std::vector<SummaryRow> out;
  const double prior = 1.0 / static_cast<double>(n_candidates);
  for (const auto& [si, rc] : runs)
    out.push_back({rc.first, 0, rc.second, prior, 0.0, prior, 0.0});
  for (const auto& [key, a] : acc) {
    const auto [lm, ls] = stats(a.lik);
    const auto [pm, ps] = stats(a.post);
    out.push_back({a.label, key.second, a.lik.size(), lm, ls, pm, ps});
  }
  std::map<std::string, std::size_t> order;
  for (const auto& [si, rc] : runs) order[rc.first] = si;
  std::stable_sort(out.begin(), out.end(), [&](const SummaryRow& a, const SummaryRow& b) {
    const auto ia = order[a.strategy];
    const auto ib = order[b.strategy];
    return ia != ib ? ia < ib : a.episode < b.episode;
  });
  return out;
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace detail

inline void write_rows_csv(std::ostream& os, const std::vector<RunRow>& rows) {
  os << "scenario,strategy,seed,episode,likelihood_true,posterior_true,declared,declared_index,rho_used,plan_energy,"
        "error\n";
  for (const auto& r : rows) {
    os << detail::csv_field(r.scenario) << ',' << detail::csv_field(r.strategy) << ',' << r.seed << ',' << r.episode
       << ',' << detail::fmt17(r.likelihood_true) << ',' << detail::fmt17(r.posterior_true) << ','
       << (r.declared ? 1 : 0) << ',' << r.declared_index << ',' << detail::fmt17(r.rho_used) << ','
       << detail::fmt17(r.plan_energy) << ',' << detail::csv_field(r.error) << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "strategy,episode,n,likelihood_mean,likelihood_std,posterior_mean,posterior_std\n";
  for (const auto& r : rows)
    os << detail::csv_field(r.strategy) << ',' << r.episode << ',' << r.n << ',' << detail::fmt17(r.likelihood_mean)
       << ',' << detail::fmt17(r.likelihood_std) << ',' << detail::fmt17(r.posterior_mean) << ','
       << detail::fmt17(r.posterior_std) << '\n';
}

}  // namespace activeid
