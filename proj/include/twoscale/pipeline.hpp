#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "catalog.hpp"
#include "direct.hpp"

namespace twoscale {

/// Everything a run needs; filled from catalog defaults and then from the
/// config file and command line.
struct RunConfig {
  std::string problem = "well-1d";
  Params params;                  ///< numeric overrides of catalog parameters
  double L = 12.0;
  int M = 2001;
  int K = 64;
  double target = -0.76;
  double radius = 0.4;
  int order = 4;
  std::vector<double> eps{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  int points_per_period = 32;
  bool richardson = true;         ///< also solve on 2M−1 nodes and extrapolate λ0
  bool allow_high_order = false;
  double identity_tol = 1e-6;
  double group_tol = 1e-6;
  double degenerate_tol = 1e-8;
  double route_tol = 1e-5;
  double solvability_tol = 1e-5;
  double cell_residual_tol = 1e-9;
  double eigen_residual_tol = 1e-10;
  unsigned long long seed = 0x7e57c0de;
};

/// Config preloaded with the tuned settings of a catalog problem.
inline RunConfig defaults_for(const std::string& problem) {
  const CatalogEntry& e = catalog_entry(problem);
  RunConfig c;
  c.problem = e.name;
  c.L = e.defaults.L;
  c.M = e.defaults.M;
  c.K = e.defaults.K;
  c.target = e.defaults.target;
  c.radius = e.defaults.radius;
  c.order = e.defaults.order;
  c.eps = e.defaults.eps;
  c.points_per_period = e.defaults.points_per_period;
  c.richardson = build_problem(e.name).d == 1;
  return c;
}

/// Owns the chain validate → correctors → H0 → cluster → ledger for one
/// problem on one grid pair.  Stages run lazily and in order.
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
    spec_ = build_problem(cfg_.problem, cfg_.params);
    require(cfg_.order <= 4 || cfg_.allow_high_order, ErrorCode::OrderLimit,
            "order " + std::to_string(cfg_.order) + " exceeds 4; pass --allow-high-order");
    sg_ = SpatialGrid(spec_.d, cfg_.L, cfg_.M);
    cg_ = CellGrid(spec_.periods, cfg_.K);
  }

  const RunConfig& config() const { return cfg_; }
  const ProblemSpec& spec() const { return spec_; }
  const SpatialGrid& spatial() const { return sg_; }
  const CellGrid& cell() const { return cg_; }

  const ValidatedProblem& validated() {
    if (!validated_) validated_ = validate_problem(spec_, sg_, cg_);
    return *validated_;
  }

  const TwoScaleOps& ops() {
    if (!ops_) {
      validated();
      ops_ = std::make_unique<TwoScaleOps>(spec_, sg_, cg_);
    }
    return *ops_;
  }

  const CellSolver& solver() {
    if (!solver_) {
      CellSolveOptions o;
      o.residual_tol = cfg_.cell_residual_tol;
      solver_ = std::make_unique<CellSolver>(ops(), o);
    }
    return *solver_;
  }

  const CellSolution& cells() {
    if (!cells_) cells_ = std::make_unique<CellSolution>(compute_correctors(ops(), solver()));
    return *cells_;
  }

  const IdentityReport& identities() {
    if (!identities_) identities_ = identity_residuals(ops(), cells());
    return *identities_;
  }

  const HomogenizedOperator& homogenized() {
    if (!hom_) hom_ = std::make_unique<HomogenizedOperator>(homogenize(ops(), cells()));
    return *hom_;
  }

  const EigenCluster& cluster() {
    if (!cluster_) {
      ClusterOptions o;
      o.group_tol = cfg_.group_tol;
      o.eig.residual_tol = cfg_.eigen_residual_tol;
      o.eig.seed = cfg_.seed;
      cluster_ = std::make_unique<EigenCluster>(
          eigen_cluster(homogenized().H0, spec_.n, sg_.cell_volume(), cfg_.target, cfg_.radius, o));
    }
    return *cluster_;
  }

  /// λ0 on 2M−1 nodes combined with the M-node value to cancel the h²
  /// term of the discretization error.
  double richardson_lambda0() {
    if (!lambda0_fine_) {
      RunConfig c = cfg_;
      c.M = 2 * cfg_.M - 1;
      c.richardson = false;
      Pipeline finer(c);
      lambda0_fine_ = finer.cluster().lambda0;
    }
    return (4.0 * *lambda0_fine_ - cluster().lambda0) / 3.0;
  }

  std::optional<double> lambda0_fine() const { return lambda0_fine_; }

  CorrectionEngine& engine() {
    if (!engine_) {
      CorrectionOptions o;
      o.max_order = std::max(cfg_.order, 1);
      o.degenerate_tol = cfg_.degenerate_tol;
      o.route_tol = cfg_.route_tol;
      o.solvability_tol = cfg_.solvability_tol;
      engine_ = std::make_unique<CorrectionEngine>(ops(), solver(), cells(), homogenized().H0, cluster(), o);
    }
    return *engine_;
  }

  /// Ledger through the configured order.
  const CorrectionLedger& ledger() {
    CorrectionEngine& eng = engine();
    if (eng.ledger().order < cfg_.order || eng.ledger().lambda.empty()) {
      run_corrections(eng, cfg_.order);
      if (cfg_.richardson) eng.ledger().lambda0_extrapolated = richardson_lambda0();
    }
    return eng.ledger();
  }

  SweepReport sweep() {
    ledger();
    SweepOptions o;
    o.points_per_period = cfg_.points_per_period;
    o.eig.residual_tol = cfg_.eigen_residual_tol;
    o.eig.seed = cfg_.seed;
    o.radius = std::min(cfg_.radius, 0.5 * cluster().gap);
    return run_sweep(engine(), cfg_.eps, cfg_.order, o);
  }

 private:
  RunConfig cfg_;
  ProblemSpec spec_;
  SpatialGrid sg_;
  CellGrid cg_;
  std::optional<ValidatedProblem> validated_;
  std::unique_ptr<TwoScaleOps> ops_;
  std::unique_ptr<CellSolver> solver_;
  std::unique_ptr<CellSolution> cells_;
  std::optional<IdentityReport> identities_;
  std::unique_ptr<HomogenizedOperator> hom_;
  std::unique_ptr<EigenCluster> cluster_;
  std::unique_ptr<CorrectionEngine> engine_;
  std::optional<double> lambda0_fine_;
};

}  // namespace twoscale
