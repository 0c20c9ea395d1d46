//! Dinkelbach outer loop around alternating BS / RIS block training.
//!
//! Each outer iteration fixes the ratio `eta` and minimizes
//! `-min(C, D)(1 - xi) + eta P_T + kappa Omega` by block-wise Adam; the next
//! ratio is the penalty-adjusted utility per watt of the new deployment. The
//! first stage runs without penalty, the second with `kappa` scaled to the
//! stage-one utility.

mod loss;
mod objective;
mod train;

pub use loss::{loss_terms, penalty_omega, Constraints, LossTerms};
pub use objective::{Coupling, Objective};
pub use train::{train_with, BlockOutcome};

use serde::{Deserialize, Serialize};

use crate::baselines::warm_start;
use crate::capacity::{capacity_field, total_power, CapacityKind, PowerModel};
use crate::error::{Error, Result};
use crate::grad::AdamConfig;
use crate::metrics::Metrics;
use crate::params::{BlockId, Bounds};
use crate::propagation::{Deployment, PropagationParams};
use crate::traffic::{AreaGrid, TrafficField};

/// Everything that defines one deployment problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: AreaGrid,
    pub traffic: TrafficField,
    pub n_bs: usize,
    pub n_ris: usize,
    pub n_t_bs: usize,
    pub n_t_ris: usize,
    pub propagation: PropagationParams,
    pub power: PowerModel,
    pub zeta_min: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.traffic.len() != self.grid.len() {
            return Err(Error::invalid("traffic field does not match the grid"));
        }
        if self.n_bs == 0 || self.n_t_bs == 0 {
            return Err(Error::invalid("need at least one BS with one antenna"));
        }
        if self.n_ris > 0 && self.n_t_ris == 0 {
            return Err(Error::invalid("RIS needs at least one element"));
        }
        if !(0.0..=1.0).contains(&self.zeta_min) {
            return Err(Error::invalid("zeta_min must lie in [0, 1]"));
        }
        self.propagation.validate()
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            extent_m: self.grid.extent_m(),
            p_max: self.power.p_max,
            b_max: self.power.b_max,
        }
    }

    pub fn constraints(&self) -> Constraints {
        Constraints {
            zeta_min: self.zeta_min,
            p_max: self.power.p_max,
            b_max: self.power.b_max,
        }
    }

    /// Same scenario with different element counts.
    pub fn with_counts(&self, n_bs: usize, n_ris: usize) -> Scenario {
        Scenario {
            n_bs,
            n_ris,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub inner_iters_bs: usize,
    pub inner_iters_ris: usize,
    /// Stage-two penalty weight as a multiple of the stage-one utility.
    pub kappa_factor: f64,
    /// Explicit stage-two penalty weight, overriding `kappa_factor`.
    pub kappa_stage2: Option<f64>,
    /// Outer stopping tolerance on `|L|`, relative to total traffic.
    pub dinkelbach_eps: f64,
    /// Outer iterations over both stages.
    pub max_outer_iters: usize,
    pub adam: AdamConfig,
    /// Central-difference step for locations, meters.
    pub fd_step_m: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            inner_iters_bs: 300,
            inner_iters_ris: 300,
            kappa_factor: 10.0,
            kappa_stage2: None,
            dinkelbach_eps: 1e-3,
            max_outer_iters: 20,
            adam: AdamConfig::default(),
            fd_step_m: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 {
            return Err(Error::validation("max_outer_iters", "must be positive"));
        }
        if !(self.dinkelbach_eps > 0.0) {
            return Err(Error::validation("dinkelbach_eps", "must be positive"));
        }
        if !(self.kappa_factor >= 0.0) || self.kappa_stage2.is_some_and(|k| !(k >= 0.0)) {
            return Err(Error::validation("kappa", "must be non-negative"));
        }
        if !(self.fd_step_m > 0.0) {
            return Err(Error::validation("fd_step_m", "must be positive"));
        }
        if !(self.adam.step_size > 0.0) {
            return Err(Error::validation("step_size", "must be positive"));
        }
        Ok(())
    }
}

/// Which blocks the inner loop trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// BS block then RIS block, the other block's parameters held fixed.
    Alternating,
    BsOnly,
    RisOnly,
    /// All parameters at once with every link coupled.
    EndToEnd,
}

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub stage: u8,
    pub eta: f64,
    pub loss: f64,
    pub xi: f64,
    pub c_tot: f64,
    pub p_t: f64,
    pub csat: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub records: Vec<IterRecord>,
    pub deployment: Deployment,
    /// Metrics of the final deployment with the Shannon capacity.
    pub metrics: Metrics,
    pub converged: bool,
}

impl SolveTrace {
    pub fn etas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eta).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Shannon-capacity metrics of a deployment.
pub fn evaluate_metrics(scenario: &Scenario, dep: &Deployment) -> Result<Metrics> {
    let cap = capacity_field(
        dep,
        &scenario.grid,
        &scenario.propagation,
        &scenario.power,
        scenario.seed,
        CapacityKind::Total,
    )?;
    Metrics::evaluate(
        cap.values(),
        scenario.traffic.values(),
        total_power(dep, &scenario.power),
    )
}

/// IREE of a deployment with the Shannon capacity.
pub fn update_iree(dep: &Deployment, scenario: &Scenario) -> Result<f64> {
    Ok(evaluate_metrics(scenario, dep)?.iree)
}

/// Training loss of a deployment at ratio `eta` and penalty weight `kappa`.
pub fn loss_err(dep: &Deployment, scenario: &Scenario, eta: f64, kappa: f64) -> Result<f64> {
    let mut obj = Objective::new(scenario, dep.bs.len(), dep.ris.len(), 1e-4);
    obj.eta = eta;
    obj.kappa = kappa;
    Ok(obj.loss(dep)?.loss)
}

/// Trains one block from `dep` at fixed `eta` and `kappa`.
pub fn train_block(
    dep: &Deployment,
    block: BlockId,
    scenario: &Scenario,
    eta: f64,
    kappa: f64,
    iters: usize,
    adam: AdamConfig,
) -> Result<Deployment> {
    let mut obj = Objective::new(scenario, dep.bs.len(), dep.ris.len(), 1e-4);
    obj.eta = eta;
    obj.kappa = kappa;
    Ok(train_with(&obj, dep, block, Coupling::Full, iters, adam)?.deployment)
}

fn inner_solve(obj: &Objective<'_>, dep: &Deployment, schedule: Schedule, config: &SolverConfig) -> Result<Deployment> {
    let has_ris = !dep.ris.is_empty();
    let run = |d: &Deployment, block, iters| {
        train_with(obj, d, block, Coupling::Full, iters, config.adam).map(|o| o.deployment)
    };
    match schedule {
        Schedule::Alternating => {
            let d = run(dep, BlockId::Bs, config.inner_iters_bs)?;
            if has_ris {
                run(&d, BlockId::Ris, config.inner_iters_ris)
            } else {
                Ok(d)
            }
        }
        Schedule::BsOnly => run(dep, BlockId::Bs, config.inner_iters_bs),
        Schedule::RisOnly if has_ris => run(dep, BlockId::Ris, config.inner_iters_ris),
        Schedule::RisOnly => Ok(dep.clone()),
        Schedule::EndToEnd => {
            let block = if has_ris { BlockId::Joint } else { BlockId::Bs };
            let iters = config.inner_iters_bs.max(config.inner_iters_ris);
            run(dep, block, iters)
        }
    }
}

/// Runs Dinkelbach iterations of one stage; returns iterations used and whether it met the tolerance.
fn run_stage(
    obj: &mut Objective<'_>,
    dep: &mut Deployment,
    records: &mut Vec<IterRecord>,
    budget: usize,
    stage: u8,
    schedule: Schedule,
    config: &SolverConfig,
) -> Result<(usize, bool)> {
    let tol = config.dinkelbach_eps * obj.scenario.traffic.d_tot();
    let mut terms = obj.loss(dep)?;
    for k in 0..budget {
        obj.eta = terms.ratio(obj.kappa);
        let next = inner_solve(obj, dep, schedule, config)?;
        let t = obj.loss(&next)?;
        records.push(IterRecord {
            iter: records.len() + 1,
            stage,
            eta: obj.eta,
            loss: t.loss,
            xi: t.xi,
            c_tot: t.c_tot,
            p_t: t.p_t,
            csat: t.csat,
            penalty: t.penalty,
        });
        *dep = next;
        terms = t;
        if t.loss.abs() <= tol {
            return Ok((k + 1, true));
        }
    }
    Ok((budget, false))
}

/// Two-stage Dinkelbach optimization starting from `init`.
pub fn optimize_from(
    scenario: &Scenario,
    config: &SolverConfig,
    init: Deployment,
    schedule: Schedule,
) -> Result<SolveTrace> {
    scenario.validate()?;
    config.validate()?;
    init.validate()?;
    let mut obj = Objective::new(scenario, init.bs.len(), init.ris.len(), config.fd_step_m);
    let mut dep = init;
    let mut records = Vec::new();

    let total = config.max_outer_iters;
    let first_budget = total.saturating_sub(1).max(1);
    let (used, _) = run_stage(&mut obj, &mut dep, &mut records, first_budget, 1, schedule, config)?;

    obj.eta = 0.0;
    let utility = obj.loss(&dep)?.utility;
    obj.kappa = config.kappa_stage2.unwrap_or(config.kappa_factor * utility.abs());
    let (_, met) = run_stage(&mut obj, &mut dep, &mut records, total - used, 2, schedule, config)?;
    let feasible = obj.loss(&dep)?.penalty == 0.0;

    Ok(SolveTrace {
        records,
        metrics: evaluate_metrics(scenario, &dep)?,
        deployment: dep,
        converged: met && feasible,
    })
}

/// The full alternating optimizer from the clustering warm start.
pub fn optimize(scenario: &Scenario, config: &SolverConfig) -> Result<SolveTrace> {
    let init = warm_start(scenario)?;
    optimize_from(scenario, config, init, Schedule::Alternating)
}

/// The same loop, but training all parameters jointly with every link coupled.
pub fn optimize_end_to_end(scenario: &Scenario, config: &SolverConfig) -> Result<SolveTrace> {
    let init = warm_start(scenario)?;
    optimize_from(scenario, config, init, Schedule::EndToEnd)
}

/// Loss trajectories of alternating and end-to-end training on the first subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingComparison {
    pub eta: f64,
    /// Loss after each round, the shared starting loss first.
    pub alternating: Vec<f64>,
    pub end_to_end: Vec<f64>,
}

/// Trains the first Dinkelbach subproblem (initial ratio, no penalty) both ways.
pub fn compare_training(scenario: &Scenario, config: &SolverConfig, rounds: usize) -> Result<TrainingComparison> {
    scenario.validate()?;
    config.validate()?;
    let init = warm_start(scenario)?;
    let mut obj = Objective::new(scenario, init.bs.len(), init.ris.len(), config.fd_step_m);
    let start = obj.loss(&init)?;
    obj.eta = start.ratio(0.0);
    let start_loss = obj.loss(&init)?.loss;
    let mut out = TrainingComparison {
        eta: obj.eta,
        alternating: vec![start_loss],
        end_to_end: vec![start_loss],
    };
    let mut alt = init.clone();
    let mut joint = init;
    for _ in 0..rounds {
        alt = inner_solve(&obj, &alt, Schedule::Alternating, config)?;
        out.alternating.push(obj.loss(&alt)?.loss);
        joint = inner_solve(&obj, &joint, Schedule::EndToEnd, config)?;
        out.end_to_end.push(obj.loss(&joint)?.loss);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{capacity_field, CapacityKind};
    use crate::metrics::{iree, js_divergence};
    use crate::traffic::{build_grid, synth_traffic, TrafficProfile};
    use approx::assert_relative_eq;

    fn small(n_side: usize, d_tot: f64, seed: u64) -> Scenario {
        let grid = build_grid(1500.0, n_side).unwrap();
        let traffic = synth_traffic(&grid, &TrafficProfile::urban(d_tot), seed).unwrap();
        Scenario {
            grid,
            traffic,
            n_bs: 2,
            n_ris: 2,
            n_t_bs: 2,
            n_t_ris: 4,
            propagation: PropagationParams::reference(),
            power: PowerModel::reference(),
            zeta_min: 0.0,
            seed,
        }
    }

    fn quick() -> SolverConfig {
        SolverConfig {
            inner_iters_bs: 15,
            inner_iters_ris: 10,
            max_outer_iters: 6,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn uniform_toy_start_is_a_fixed_point() {
        let grid = build_grid(200.0, 2).unwrap();
        let s = Scenario {
            traffic: TrafficField::from_values(vec![2.5e17; 4]).unwrap(),
            grid,
            n_bs: 1,
            n_ris: 0,
            n_t_bs: 1,
            n_t_ris: 1,
            propagation: PropagationParams {
                shadow_sigma_db: 0.0,
                ..PropagationParams::reference()
            },
            power: PowerModel::reference(),
            zeta_min: 0.0,
            seed: 0,
        };
        let cfg = quick();
        let t = optimize(&s, &cfg).unwrap();
        assert!(t.records.len() <= 2, "{} records", t.records.len());
        assert!(t.converged);
        let etas = t.etas();
        let tol = cfg.dinkelbach_eps * s.traffic.d_tot();
        for w in etas.windows(2) {
            assert!((w[1] - w[0]).abs() * t.metrics.p_t <= tol);
        }
    }

    #[test]
    fn ratio_sequence_never_decreases() {
        for seed in [1, 2] {
            let s = small(10, 5e10, seed);
            let t = optimize(&s, &quick()).unwrap();
            assert!(!t.records.is_empty());
            for w in t.etas().windows(2) {
                assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{} after {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn stage_two_follows_stage_one() {
        let s = small(8, 5e10, 3);
        let t = optimize(&s, &quick()).unwrap();
        let stages: Vec<u8> = t.records.iter().map(|r| r.stage).collect();
        assert!(stages.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*stages.last().unwrap(), 2);
        assert!(t.records.len() <= quick().max_outer_iters);
    }

    #[test]
    fn loss_err_matches_composition_oracle() {
        let s = Scenario {
            zeta_min: 0.8,
            ..small(8, 5e10, 4)
        };
        let dep = crate::baselines::warm_start(&s).unwrap();
        let (eta, kappa) = (2e7, 3e9);
        let got = loss_err(&dep, &s, eta, kappa).unwrap();
        let cap = capacity_field(
            &dep,
            &s.grid,
            &s.propagation,
            &s.power,
            s.seed,
            CapacityKind::LowerBound,
        )
        .unwrap();
        let xi = js_divergence(cap.values(), s.traffic.values()).unwrap();
        let p_t = total_power(&dep, &s.power);
        let omega = penalty_omega(&dep, cap.values(), s.traffic.values(), &s.constraints()).unwrap();
        let oracle = -cap.c_tot().min(s.traffic.d_tot()) * (1.0 - xi) + eta * p_t + kappa * omega;
        assert_relative_eq!(got, oracle, max_relative = 1e-12);
    }

    #[test]
    fn update_iree_matches_metric() {
        let s = small(8, 5e10, 5);
        let dep = crate::baselines::warm_start(&s).unwrap();
        let cap = capacity_field(&dep, &s.grid, &s.propagation, &s.power, s.seed, CapacityKind::Total).unwrap();
        let expect = iree(cap.values(), s.traffic.values(), total_power(&dep, &s.power)).unwrap();
        assert_relative_eq!(update_iree(&dep, &s).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn zero_iterations_leave_deployment_unchanged() {
        let s = small(6, 5e10, 6);
        let dep = crate::baselines::warm_start(&s).unwrap();
        let out = train_block(&dep, BlockId::Joint, &s, 1e7, 0.0, 0, AdamConfig::default()).unwrap();
        assert_eq!(out, dep);
    }

    #[test]
    fn comparison_starts_from_shared_loss() {
        let s = small(6, 5e10, 7);
        let c = compare_training(&s, &quick(), 2).unwrap();
        assert_eq!(c.alternating.len(), 3);
        assert_eq!(c.alternating[0], c.end_to_end[0]);
        assert!(c.eta > 0.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let s = small(4, 1e10, 0);
        let bad = SolverConfig {
            max_outer_iters: 0,
            ..quick()
        };
        assert!(optimize(&s, &bad).is_err());
    }
}
