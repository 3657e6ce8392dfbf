#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "activeid/design.hpp"
#include "activeid/error.hpp"
#include "activeid/geometry.hpp"
#include "activeid/linalg.hpp"
#include "activeid/lti.hpp"
#include "activeid/random.hpp"

namespace activeid {

enum class StrategyKind { oracle_optimal, certainty_equivalence, isotropic, fixed_sequence };

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::oracle_optimal:
      return "oracle";
    case StrategyKind::certainty_equivalence:
      return "ce";
    case StrategyKind::isotropic:
      return "isotropic";
    case StrategyKind::fixed_sequence:
      return "fixed";
  }
  return "?";
}

struct RhoSchedule {
  enum class Kind { constant, inv_k, inv_k_sq, exp_decay, oracle_rule };
  Kind kind = Kind::constant;
  double c = 0.0;

  static RhoSchedule constant(double c) { return {Kind::constant, c}; }
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::isotropic;
  RhoSchedule rho{};
  double eta = 0.01;
  /// fixed_sequence only: n_u x L inputs, sliced per episode.
  Matrix fixed_inputs;
  std::string label;

  void validate() const {
    detail::require(eta > 0.0 && std::isfinite(eta), "eta must be positive");
    if (rho.kind == RhoSchedule::Kind::constant)
      detail::require(rho.c >= 0.0 && rho.c <= 1.0, "constant rho must lie in [0, 1]");
  }
};

struct EpisodeRecord {
  int k = 0;
  /// Accumulated prediction errors after this episode, one per candidate.
  Vector eps;
  Vector weights;
  Vector posterior;
  /// exp(-eps/2) normalised, at the true index.
  double likelihood_true_raw = 0.0;
  /// posterior at the true index.
  double posterior_true = 0.0;
  /// Estimate sampled for the certainty-equivalence design, -1 otherwise.
  int drawn_estimate = -1;
  double rho_used = 0.0;
  /// |U|^2 of the applied input block.
  double plan_energy = 0.0;
  bool terminated = false;
  std::optional<std::size_t> declared;
};

struct IdentificationResult {
  std::vector<EpisodeRecord> episodes;
  std::optional<std::size_t> declared;
  std::optional<int> stop_episode;
  bool correct = false;
  Trajectory trajectory;
};

/// Index j whose accumulated error beats every other by more than
/// 2 log(N / delta), if any.
inline std::optional<std::size_t> termination_check(const Vector& eps, std::size_t n_alt, double delta) {
  detail::require(eps.size() == static_cast<Eigen::Index>(n_alt) + 1,
                  "eps has " + std::to_string(eps.size()) + " entries, expected N+1=" + std::to_string(n_alt + 1));
  detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  const double thr = 2.0 * std::log(static_cast<double>(n_alt) / delta);
  Eigen::Index j = 0;
  eps.minCoeff(&j);
  for (Eigen::Index i = 0; i < eps.size(); ++i)
    if (i != j && !(eps(i) - eps(j) > thr)) return std::nullopt;
  return static_cast<std::size_t>(j);
}

struct ExpWeights {
  Vector weights;
  Vector posterior;
};

/// w(i) = exp(-eta * eps(i)), scaled by exp(eta * min eps) to stay finite.
inline ExpWeights exp_weights(const Vector& eps, double eta) {
  detail::require(eps.size() >= 1, "eps must be non-empty");
  detail::require(eta > 0.0, "eta must be positive");
  const double lo = eps.minCoeff();
  ExpWeights out;
  out.weights = (-eta * (eps.array() - lo)).exp().matrix();
  out.posterior = out.weights / out.weights.sum();
  return out;
}

inline Vector half_likelihood(const Vector& eps) { return exp_weights(eps, 0.5).posterior; }

/// Mixing weight of the random component at 0-based episode index k.
inline double rho_value(const RhoSchedule& s, int k, const Vector& posterior, double c_opt, double c_rand) {
  detail::require(k >= 0, "episode index must be nonnegative");
  switch (s.kind) {
    case RhoSchedule::Kind::constant:
      return s.c;
    case RhoSchedule::Kind::inv_k:
      return 1.0 / (1.0 + k);
    case RhoSchedule::Kind::inv_k_sq:
      return 1.0 / ((1.0 + k) * (1.0 + k));
    case RhoSchedule::Kind::exp_decay:
      return std::exp(-static_cast<double>(k));
    case RhoSchedule::Kind::oracle_rule: {
      // Probability of a wrong estimate is not observable; use 1 - max mass.
      const double p_err = 1.0 - posterior.maxCoeff();
      return (1.0 - p_err) * c_opt >= c_rand ? 0.0 : 1.0;
    }
  }
  return 0.0;
}

struct EpisodeInput {
  Matrix inputs;
  int drawn_estimate = -1;
  double rho = 0.0;
  double plan_energy = 0.0;
};

/// Per-run context shared by all episodes.
struct DesignContext {
  const ExcitationDesigner* designer = nullptr;
  double c_opt = 0.0;
  double c_rand = 0.0;
};

/// Input block for 1-based episode k. `posterior` holds the weights computed
/// from all data before the episode.
template <NormalSource G>
EpisodeInput design_episode_input(const Scenario& scenario, const StrategyConfig& strategy, int k, int tau,
                                  const Vector& posterior, const Vector& x_start, const DesignContext& ctx,
                                  G& input_rng, Rng& sampling_rng) {
  detail::require(k >= 1, "episode index must be >= 1");
  detail::require_dim(x_start.size() == scenario.n_x(), "x_start dimension " + std::to_string(x_start.size()) +
                                                            " does not match n_x=" + std::to_string(scenario.n_x()));
  const Eigen::Index nu = scenario.n_u();
  EpisodeInput out;
  switch (strategy.kind) {
    case StrategyKind::isotropic:
      out.rho = 1.0;
      out.inputs = sample_isotropic_input(scenario.gamma_u(), nu, tau, input_rng);
      break;
    case StrategyKind::fixed_sequence: {
      const Eigen::Index need = static_cast<Eigen::Index>(k) * tau;
      detail::require_dim(strategy.fixed_inputs.rows() == nu, "fixed input sequence has wrong channel count");
      detail::require(strategy.fixed_inputs.cols() >= need, "fixed input sequence has " +
                                                                std::to_string(strategy.fixed_inputs.cols()) +
                                                                " steps, episode " + std::to_string(k) + " needs " +
                                                                std::to_string(need));
      out.inputs = strategy.fixed_inputs.middleCols(need - tau, tau);
      break;
    }
    case StrategyKind::oracle_optimal:
    case StrategyKind::certainty_equivalence: {
      detail::require(ctx.designer != nullptr, "design strategies need an excitation designer");
      std::size_t ref = scenario.true_index();
      if (strategy.kind == StrategyKind::certainty_equivalence) {
        const std::vector<double> w(posterior.data(), posterior.data() + posterior.size());
        ref = sampling_rng.categorical(w);
        out.drawn_estimate = static_cast<int>(ref);
      }
      out.rho = rho_value(strategy.rho, k - 1, posterior, ctx.c_opt, ctx.c_rand);
      // The random part is always drawn so rho = 1 reproduces isotropic exactly.
      const Matrix u_eta = sample_isotropic_input(scenario.gamma_u(), nu, tau, input_rng);
      if (out.rho >= 1.0) {
        out.inputs = u_eta;
      } else {
        const ExcitationPlan plan = ctx.designer->design(ref, x_start);
        out.inputs = std::sqrt(1.0 - out.rho) * unstack(plan.U, nu) + std::sqrt(out.rho) * u_eta;
      }
      break;
    }
  }
  out.plan_energy = out.inputs.squaredNorm();
  return out;
}

struct RunOptions {
  /// Stop at the first declaration; otherwise keep running all episodes
  /// (the declaration is still latched at its first occurrence).
  bool stop_on_declare = true;
  /// Designer to reuse across runs; built on demand when null.
  const ExcitationDesigner* designer = nullptr;
  DesignOptions design{};
  /// Initial state, zero when empty.
  Vector x0;
};

/// Sequential identification: excite, observe, update the accumulated
/// prediction errors of every candidate, stop once one of them wins by the
/// log-likelihood-ratio margin.
inline IdentificationResult run_identification(const Scenario& scenario, const StrategyConfig& strategy, int tau,
                                               double delta, int max_episodes, RunStreams& streams,
                                               const RunOptions& opt = {}) {
  detail::require(tau >= 1, "tau must be >= 1, got " + std::to_string(tau));
  detail::require(max_episodes >= 1, "max_episodes must be >= 1, got " + std::to_string(max_episodes));
  detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  strategy.validate();

  DesignContext ctx;
  std::unique_ptr<ExcitationDesigner> own;
  const bool designs =
      strategy.kind == StrategyKind::oracle_optimal || strategy.kind == StrategyKind::certainty_equivalence;
  if (designs) {
    if (opt.designer) {
      detail::require(opt.designer->tau() == tau, "shared designer was built for a different tau");
      ctx.designer = opt.designer;
    } else {
      own = std::make_unique<ExcitationDesigner>(scenario, tau, opt.design);
      ctx.designer = own.get();
    }
    if (strategy.rho.kind == RhoSchedule::Kind::oracle_rule) {
      ctx.c_opt = ctx.designer->mixture(scenario.true_index()).value;
      ctx.c_rand = pe_random(scenario, tau).c_u;
    }
  }

  const Eigen::Index nx = scenario.n_x();
  const std::size_t n_sys = scenario.size();
  Vector x = opt.x0.size() ? opt.x0 : Vector::Zero(nx);
  detail::require_dim(x.size() == nx, "x0 dimension does not match n_x");

  IdentificationResult res;
  res.trajectory.states.resize(nx, 1);
  res.trajectory.states.col(0) = x;
  res.trajectory.inputs.resize(scenario.n_u(), 0);

  Vector eps = Vector::Zero(static_cast<Eigen::Index>(n_sys));
  for (int k = 1; k <= max_episodes; ++k) {
    const ExpWeights prior = exp_weights(eps, strategy.eta);
    const EpisodeInput in =
        design_episode_input(scenario, strategy, k, tau, prior.posterior, x, ctx, streams.input, streams.sampling);
    const Trajectory seg = simulate(scenario.truth(), scenario.noise(), in.inputs, x, streams.noise);
    for (std::size_t i = 0; i < n_sys; ++i)
      eps(static_cast<Eigen::Index>(i)) += prediction_error(seg, scenario.system(i), scenario.noise());
    x = seg.states.col(tau);

    auto& tr = res.trajectory;
    const Eigen::Index t0 = tr.inputs.cols();
    tr.inputs.conservativeResize(Eigen::NoChange, t0 + tau);
    tr.inputs.rightCols(tau) = in.inputs;
    tr.states.conservativeResize(Eigen::NoChange, t0 + tau + 1);
    tr.states.rightCols(tau) = seg.states.rightCols(tau);

    EpisodeRecord rec;
    rec.k = k;
    rec.eps = eps;
    const ExpWeights post = exp_weights(eps, strategy.eta);
    rec.weights = post.weights;
    rec.posterior = post.posterior;
    const auto ti = static_cast<Eigen::Index>(scenario.true_index());
    rec.likelihood_true_raw = half_likelihood(eps)(ti);
    rec.posterior_true = post.posterior(ti);
    rec.drawn_estimate = in.drawn_estimate;
    rec.rho_used = in.rho;
    rec.plan_energy = in.plan_energy;
    if (!res.declared) {
      if (auto w = termination_check(eps, scenario.alternatives(), delta)) {
        res.declared = w;
        res.stop_episode = k;
      }
    }
    rec.terminated = res.declared.has_value();
    rec.declared = res.declared;
    res.episodes.push_back(std::move(rec));
    if (res.declared && opt.stop_on_declare) break;
  }
  res.correct = res.declared && *res.declared == scenario.true_index();
  return res;
}

inline IdentificationResult run_identification(const Scenario& scenario, const StrategyConfig& strategy, int tau,
                                               double delta, int max_episodes, std::uint64_t seed,
                                               const RunOptions& opt = {}) {
  RunStreams streams(seed);
  return run_identification(scenario, strategy, tau, delta, max_episodes, streams, opt);
}

}  // namespace activeid
