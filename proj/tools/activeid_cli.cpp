#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "activeid/activeid.hpp"

namespace {

using namespace activeid;
using nlohmann::json;

enum Exit { kOk = 0, kUsage = 1, kSolver = 2, kIo = 3 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_file(const std::string& s) { return s.size() > 5 && s.substr(s.size() - 5) == ".json"; }

Scenario load(std::string name, double f2_std) {
  // --f2-std fills in the perturbation argument of appendix_f2(seed).
  if (f2_std > 0.0 && name.rfind("appendix_f2", 0) == 0 && name.find(',') == std::string::npos) {
    const auto open = name.find('(');
    const std::string seed = open == std::string::npos ? "0" : name.substr(open + 1, name.find(')') - open - 1);
    name = "appendix_f2(" + seed + "," + activeid::detail::fmt17(f2_std) + ")";
  }
  try {
    return resolve_scenario(name);
  } catch (const ScenarioError& e) {
    if (is_file(name)) throw IoError(e.what());
    throw std::invalid_argument(e.what());
  }
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector read_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<double> vals;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    try {
      vals = json::parse(text).get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw IoError("cannot parse '" + path + "': " + e.what());
    }
  } else {
    std::stringstream ss(text);
    for (double x; ss >> x;) vals.push_back(x);
    if (!ss.eof()) throw IoError("cannot parse '" + path + "' as numbers");
  }
  return Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) throw IoError("cannot write '" + out + "'");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write to '" + out + "' failed");
}

std::string summary_path(const std::string& out) {
  const auto dot = out.rfind('.');
  const auto slash = out.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return out + "_summary.csv";
  return out.substr(0, dot) + "_summary" + out.substr(dot);
}

struct RunArgs {
  std::string scenario = "section5";
  std::string strategies = "ce:rho=const0:eta=0.01,isotropic,oracle";
  int tau = 15;
  int episodes = 5;
  double delta = 0.05;
  int mc = 100;
  std::uint64_t seed = 42;
  std::string out = "results.csv";
  std::string summary;
  unsigned threads = 0;
  bool stop = false;
  double f2_std = 0.0;
};

int cmd_run(const RunArgs& a) {
  ExperimentSpec spec{.scenario_name = a.scenario, .scenario = load(a.scenario, a.f2_std)};
  std::stringstream ss(a.strategies);
  for (std::string s; std::getline(ss, s, ',');)
    if (!s.empty()) spec.strategies.push_back(parse_strategy(s));
  spec.tau = a.tau;
  spec.episodes = a.episodes;
  spec.delta = a.delta;
  spec.mc_runs = a.mc;
  spec.base_seed = a.seed;
  spec.threads = a.threads;
  spec.stop_on_declare = a.stop;

  const auto rows = run_experiment(spec);
  const auto summary = summarize(rows, spec.scenario.size());
  const std::string sp = a.summary.empty() ? summary_path(a.out) : a.summary;
  {
    std::ofstream f(a.out);
    if (!f) throw IoError("cannot write '" + a.out + "'");
    write_rows_csv(f, rows);
    if (!f) throw IoError("write to '" + a.out + "' failed");
  }
  {
    std::ofstream f(sp);
    if (!f) throw IoError("cannot write '" + sp + "'");
    write_summary_csv(f, summary);
    if (!f) throw IoError("write to '" + sp + "' failed");
  }
  std::size_t errors = 0;
  for (const auto& r : rows) errors += !r.error.empty();
  std::cerr << "wrote " << rows.size() << " rows to " << a.out << " and summary to " << sp;
  if (errors) std::cerr << " (" << errors << " failed runs)";
  std::cerr << '\n';
  return errors ? kSolver : kOk;
}

int cmd_analyze(const std::string& name, int tau, double f2_std, const std::string& out) {
  const Scenario s = load(name, f2_std);
  const BenefitDiagnostic b = benefit(s, tau);
  const PECoefficients pr = pe_random(s, tau);
  const PECoefficients po = pe_optimal(s, tau);
  const double sigma_u2 = s.gamma_u() * s.gamma_u() / static_cast<double>(s.n_u());
  json j;
  j["scenario"] = name;
  j["tau"] = tau;
  j["benefit"] = {{"c_opt", b.c_opt}, {"c_rand", b.c_rand}, {"ratio", b.ratio}, {"noise_floor", b.noise_floor}};
  j["pe"] = {{"random", {{"c_u", pr.c_u}, {"c_w", pr.c_w}}}, {"optimal", {{"c_u", po.c_u}, {"c_w", po.c_w}}}};
  json hz = json::array();
  for (double d : {0.1, 0.05, 0.01}) {
    hz.push_back({{"delta", d},
                  {"threshold", threshold(d)},
                  {"optimal", min_horizon(s, InputKind::optimal, d)},
                  {"isotropic", min_horizon(s, InputKind::isotropic, d)}});
  }
  j["min_horizon"] = hz;
  j["eta_bound"] = eta_bound(s, tau, sigma_u2);
  emit(j, out);
  return kOk;
}

int cmd_design(const std::string& name, int tau, long estimate, const std::string& x0_path, double f2_std,
               const std::string& out) {
  const Scenario s = load(name, f2_std);
  Vector x0 = Vector::Zero(s.n_x());
  if (!x0_path.empty()) x0 = read_vector(x0_path);
  const std::size_t ref = estimate < 0 ? s.true_index() : static_cast<std::size_t>(estimate);
  const ExcitationPlan p = design_ce_input(s, ref, tau, x0);
  json j;
  j["scenario"] = name;
  j["tau"] = p.tau;
  j["reference"] = p.reference;
  j["U"] = vec_json(p.U);
  j["inputs"] = json::array();
  const Matrix u = unstack(p.U, s.n_u());
  for (Eigen::Index t = 0; t < u.cols(); ++t) j["inputs"].push_back(vec_json(u.col(t)));
  j["energy"] = p.energy;
  j["budget"] = s.gamma_u() * s.gamma_u() * tau;
  j["achieved_minimum"] = p.achieved_minimum;
  j["upper_bound"] = p.upper_bound;
  j["gap"] = p.upper_bound - p.achieved_minimum;
  j["method"] = to_string(p.method);
  j["mixture"] = {{"p", vec_json(p.p)}, {"value", p.mixture_value}, {"certified_gap", p.mixture_gap}};
  emit(j, out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active identification of linear systems from a finite candidate set"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Monte Carlo identification experiment, written as CSV");
  run->add_option("--scenario", ra.scenario, "built-in name or scenario .json file")->capture_default_str();
  run->add_option("--strategies", ra.strategies, "comma-separated strategies")->capture_default_str();
  run->add_option("--tau", ra.tau, "episode length")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--episodes", ra.episodes, "episodes per run")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--delta", ra.delta, "confidence level")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  run->add_option("--mc", ra.mc, "Monte Carlo runs per strategy")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--seed", ra.seed, "base seed; run r uses seed ^ r")->capture_default_str();
  run->add_option("--out", ra.out, "per-episode CSV")->capture_default_str();
  run->add_option("--summary", ra.summary, "summary CSV (default: <out>_summary.csv)");
  run->add_option("--threads", ra.threads, "worker threads, 0 = all cores")->capture_default_str();
  run->add_flag("--stop-on-declare", ra.stop, "end each run at its first declaration");
  run->add_option("--f2-std", ra.f2_std, "perturbation std for appendix_f2");

  std::string scen = "section5";
  int tau = 15;
  double f2_std = 0.0;
  std::string out;
  auto* analyze = app.add_subcommand("analyze", "PE coefficients, lower-bound horizons and eta bound as JSON");
  analyze->add_option("--scenario", scen, "built-in name or scenario .json file")->capture_default_str();
  analyze->add_option("--tau", tau, "block length")->capture_default_str()->check(CLI::PositiveNumber);
  analyze->add_option("--f2-std", f2_std, "perturbation std for appendix_f2");
  analyze->add_option("--out", out, "output file (default stdout)");

  long estimate = -1;
  std::string x0_path;
  auto* design = app.add_subcommand("design", "excitation plan for one episode as JSON");
  design->add_option("--scenario", scen, "built-in name or scenario .json file")->capture_default_str();
  design->add_option("--tau", tau, "block length")->capture_default_str()->check(CLI::PositiveNumber);
  design->add_option("--estimate", estimate, "candidate treated as the truth (default: true index)");
  design->add_option("--x0", x0_path, "initial state file (JSON array or whitespace-separated numbers)");
  design->add_option("--f2-std", f2_std, "perturbation std for appendix_f2");
  design->add_option("--out", out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(ra);
    if (*analyze) return cmd_analyze(scen, tau, f2_std, out);
    if (*design) return cmd_design(scen, tau, estimate, x0_path, f2_std, out);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolver;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolver;
  }
  return kUsage;
}
