//! Sampled-data closed loop `x^{k+1} = ψ(x^k, u^k)`, `u^{k+1} = T_ε(u^k, y^{k+1})`.
//!
//! At each sample the loop measures, then updates, then holds: `y^{k+1}` is
//! read from the state reached under `u^k`, the relaxed operator produces
//! `u^{k+1}`, and `u^{k+1}` is held over the next period. Sample `k` of the log
//! holds `x^k`, `u^k`, `w^k = w(t^k)` and `y^k = g(x^k, w^k)`.

mod checks;
mod log;

use std::sync::Arc;

use thiserror::Error;

use crate::algorithms::{check_relaxation, relaxed_step, AlgorithmError, AlgorithmOperator};
use crate::equilibrium::{solve_offline, solve_offline_from, EquilibriumError, EquilibriumProblem};
use crate::linalg;
use crate::plant::{integrate_hold_dense, DisturbanceSignal, PlantError, PlantModel};
use crate::scalar::{cast, from_usize, to_f64, Scalar};

pub use checks::{check_iss, check_lemma1, IssReport, RecursionReport};
pub use log::{DenseRow, Sample, TrajectoryLog};

/// Tolerance of the per-sample solution oracle.
pub const ORACLE_TOL: f64 = 1e-10;
/// Iteration cap of the per-sample solution oracle.
pub const ORACLE_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid closed-loop configuration: {0}")]
    Config(String),
    #[error("integration diverged in sample interval {sample} (t = {time})")]
    IntegrationDiverged { sample: usize, time: f64 },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error("solution oracle failed: {0}")]
    Oracle(#[from] EquilibriumError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopConfig<S> {
    pub tau: S,
    pub eps: S,
    /// Number of updates `K`; the log holds `K + 1` samples.
    pub horizon: usize,
    pub substeps: usize,
    pub u0: Vec<S>,
    pub x0: Vec<S>,
    pub t0: S,
    pub log_intersample: bool,
}

impl<S: Scalar> ClosedLoopConfig<S> {
    pub fn new(tau: S, eps: S, horizon: usize, u0: Vec<S>, x0: Vec<S>) -> Self {
        Self {
            tau,
            eps,
            horizon,
            substeps: crate::plant::DEFAULT_SUBSTEPS,
            u0,
            x0,
            t0: S::zero(),
            log_intersample: false,
        }
    }

    pub fn validate(&self, plant: &PlantModel<S>) -> Result<(), SimError> {
        if !(self.tau > S::zero() && self.tau.is_finite()) {
            return Err(SimError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        check_relaxation(self.eps).map_err(|_| SimError::Config(format!("eps must lie in (0, 1], got {}", self.eps)))?;
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be at least 1".into()));
        }
        if self.substeps == 0 {
            return Err(SimError::Config("substeps must be at least 1".into()));
        }
        if self.x0.len() != plant.state_dim() {
            return Err(SimError::Config(format!("x0 has {} entries, plant has {} states", self.x0.len(), plant.state_dim())));
        }
        if self.u0.len() != plant.input_dim() || !plant.input_set().contains_tol(&self.u0, S::feasibility_tol()) {
            return Err(SimError::Config("u0 must lie in the input set".into()));
        }
        Ok(())
    }

    /// Sampling instant `t^k`.
    pub fn time(&self, k: usize) -> S {
        self.t0 + self.tau * from_usize::<S>(k)
    }
}

type SolveFn<S> = Arc<dyn Fn(&[S], Option<&[S]>) -> Result<Vec<S>, EquilibriumError> + Send + Sync>;
type SteadyFn<S> = Arc<dyn Fn(&[S], &[S]) -> Vec<S> + Send + Sync>;

/// Reference solution `w ↦ (u*(w), y*(w))` used for the tracking-error columns.
#[derive(Clone)]
pub struct SolutionOracle<S> {
    solve: SolveFn<S>,
    steady_output: SteadyFn<S>,
}

impl<S: Scalar> SolutionOracle<S> {
    /// Prox-grad fixed-point iteration to tolerance [`ORACLE_TOL`], with `h` the
    /// plant's own steady-state output map.
    pub fn fixed_point(problem: EquilibriumProblem<S>, plant: &PlantModel<S>, gamma: S) -> Self {
        let p = plant.clone();
        Self::fixed_point_with(problem, Arc::new(move |u: &[S], w: &[S]| p.steady_output_unchecked(u, w)), gamma)
    }

    /// Fixed-point oracle for an arbitrary steady-state map `h(u, w)`.
    pub fn fixed_point_with(problem: EquilibriumProblem<S>, h: SteadyFn<S>, gamma: S) -> Self {
        let h2 = h.clone();
        let solve: SolveFn<S> = Arc::new(move |w: &[S], warm: Option<&[S]>| {
            let hw = |u: &[S]| h2(u, w);
            let tol = cast::<S>(ORACLE_TOL);
            let sol = match warm {
                Some(u0) => solve_offline_from(&problem, &hw, gamma, u0, tol, ORACLE_MAX_ITERS)?,
                None => solve_offline(&problem, &hw, gamma, tol, ORACLE_MAX_ITERS)?,
            };
            Ok(sol.u)
        });
        Self { solve, steady_output: h }
    }

    /// Oracle from a closed-form or externally computed solution map.
    pub fn from_fn(
        solve: impl Fn(&[S]) -> Vec<S> + Send + Sync + 'static,
        steady_output: impl Fn(&[S], &[S]) -> Vec<S> + Send + Sync + 'static,
    ) -> Self {
        Self { solve: Arc::new(move |w: &[S], _warm: Option<&[S]>| Ok(solve(w))), steady_output: Arc::new(steady_output) }
    }

    /// Oracle from a warm-startable solver.
    pub fn from_solver(
        solve: impl Fn(&[S], Option<&[S]>) -> Result<Vec<S>, EquilibriumError> + Send + Sync + 'static,
        steady_output: impl Fn(&[S], &[S]) -> Vec<S> + Send + Sync + 'static,
    ) -> Self {
        Self { solve: Arc::new(solve), steady_output: Arc::new(steady_output) }
    }

    pub fn solve(&self, w: &[S], warm: Option<&[S]>) -> Result<(Vec<S>, Vec<S>), EquilibriumError> {
        let u = (self.solve)(w, warm)?;
        let y = (self.steady_output)(&u, w);
        Ok((u, y))
    }
}

impl<S> std::fmt::Debug for SolutionOracle<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SolutionOracle")
    }
}

/// Input rule of a loop: the relaxed operator, the oracle fed with a measured
/// disturbance, or an arbitrary output-feedback controller.
enum Policy<'a, S> {
    Feedback { op: &'a AlgorithmOperator<S>, eps: S },
    Feedforward { oracle: &'a SolutionOracle<S>, measured: &'a DisturbanceSignal<S> },
    Controller(&'a mut Controller<'a, S>),
}

/// Output-feedback rule `(k, u^k, y^{k+1}) ↦ u^{k+1}` for [`run_controller`].
pub type Controller<'a, S> = dyn FnMut(usize, &[S], &[S]) -> Vec<S> + 'a;

struct LoopState<S> {
    log: TrajectoryLog<S>,
    oracle_warm: Option<Vec<S>>,
}

impl<S: Scalar> LoopState<S> {
    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        plant: &PlantModel<S>,
        oracle: &SolutionOracle<S>,
        w: &DisturbanceSignal<S>,
        cfg: &ClosedLoopConfig<S>,
        k: usize,
        x: &[S],
        u: &[S],
        y: Vec<S>,
    ) -> Result<(), SimError> {
        let t = cfg.time(k);
        let wk = w.value(t);
        let (u_star, y_star) = oracle.solve(&wk, self.oracle_warm.as_deref())?;
        self.oracle_warm = Some(u_star.clone());
        let x_ss = plant.steady_state(u, &wk);
        let lyapunov = plant.lyapunov_value(x, u, &wk).map(|v| v.max(S::zero()).sqrt());
        self.log.samples.push(Sample {
            k,
            t,
            x: x.to_vec(),
            u: u.to_vec(),
            dx: linalg::sub(x, &x_ss),
            du: linalg::sub(u, &u_star),
            dy: linalg::sub(&y, &y_star),
            y,
            z: w.rate_bound(t, t + cfg.tau),
            w: wk,
            u_star,
            y_star,
            lyapunov,
            envelope: None,
        });
        Ok(())
    }
}

/// Discrete plant map `(k, x^k, u^k) ↦ x^{k+1}`; dense points go to the sink.
pub type DiscreteStep<'a, S> = dyn FnMut(usize, &[S], &[S], &mut Vec<(S, Vec<S>)>) -> Result<Vec<S>, SimError> + 'a;

fn run_loop<S: Scalar>(
    plant: &PlantModel<S>,
    policy: Policy<'_, S>,
    w: &DisturbanceSignal<S>,
    oracle: &SolutionOracle<S>,
    cfg: &ClosedLoopConfig<S>,
    step: &mut DiscreteStep<'_, S>,
) -> Result<TrajectoryLog<S>, SimError> {
    cfg.validate(plant)?;
    if w.dim() != plant.disturbance_dim() {
        return Err(SimError::Config(format!(
            "disturbance signal has dimension {}, plant expects {}",
            w.dim(),
            plant.disturbance_dim()
        )));
    }
    if let Policy::Feedback { op, .. } = &policy {
        if op.input_dim() != plant.input_dim() || op.output_dim() != plant.output_dim() {
            return Err(SimError::Config("operator and plant dimensions differ".into()));
        }
    }
    let d = plant.dims();
    let mut state = LoopState { log: TrajectoryLog::new(d.state, d.input, d.output, d.disturbance), oracle_warm: None };
    let choose_ff = |oracle: &SolutionOracle<S>, measured: &DisturbanceSignal<S>, k: usize| -> Result<Vec<S>, SimError> {
        let (u, _) = oracle.solve(&measured.value(cfg.time(k)), None)?;
        Ok(plant.input_set().project(&u))
    };
    let mut policy = policy;
    let mut x = cfg.x0.clone();
    let mut u = match &policy {
        Policy::Feedforward { oracle, measured } => choose_ff(oracle, measured, 0)?,
        _ => cfg.u0.clone(),
    };
    let y0 = plant.output(&x, &u, &w.value(cfg.t0));
    state.record(plant, oracle, w, cfg, 0, &x, &u, y0)?;
    let mut dense = Vec::new();
    for k in 0..cfg.horizon {
        dense.clear();
        let x_next = step(k, &x, &u, &mut dense)?;
        if cfg.log_intersample {
            for (t, xd) in dense.drain(..) {
                let wd = w.value(t);
                let yd = plant.output(&xd, &u, &wd);
                state.log.dense.push(DenseRow { interval: k, t, x: xd, u: u.clone(), y: yd, w: wd });
            }
        }
        let t_next = cfg.time(k + 1);
        let y_next = plant.output(&x_next, &u, &w.value(t_next));
        let u_next = match &mut policy {
            Policy::Feedback { op, eps } => relaxed_step(op, *eps, &u, &y_next)?,
            Policy::Feedforward { oracle, measured } => choose_ff(oracle, measured, k + 1)?,
            Policy::Controller(c) => {
                let next = c(k, &u, &y_next);
                if next.len() != u.len() {
                    return Err(SimError::Config("controller returned an input of the wrong dimension".into()));
                }
                next
            }
        };
        x = x_next;
        u = u_next;
        state.record(plant, oracle, w, cfg, k + 1, &x, &u, y_next)?;
    }
    Ok(state.log)
}

/// Sampled-data loop with `ψ` given by RK4 under zero-order hold.
pub fn run_sampled_data<S: Scalar>(
    plant: &PlantModel<S>,
    op: &AlgorithmOperator<S>,
    w: &DisturbanceSignal<S>,
    oracle: &SolutionOracle<S>,
    cfg: &ClosedLoopConfig<S>,
) -> Result<TrajectoryLog<S>, SimError> {
    let mut step = hold_step(plant, w, cfg);
    run_loop(plant, Policy::Feedback { op, eps: cfg.eps }, w, oracle, cfg, &mut step)
}

/// Sampled-data loop under an arbitrary output-feedback controller (e.g. a
/// rule-based baseline), RK4 under zero-order hold.
pub fn run_controller<'a, S: Scalar>(
    plant: &PlantModel<S>,
    controller: &'a mut Controller<'a, S>,
    w: &DisturbanceSignal<S>,
    oracle: &SolutionOracle<S>,
    cfg: &ClosedLoopConfig<S>,
) -> Result<TrajectoryLog<S>, SimError> {
    let mut step = hold_step(plant, w, cfg);
    run_loop(plant, Policy::Controller(controller), w, oracle, cfg, &mut step)
}

/// The loop with a user-supplied discrete plant map `ψ(k, x, u)`.
pub fn run_discrete<S: Scalar>(
    plant: &PlantModel<S>,
    psi: impl FnMut(usize, &[S], &[S]) -> Result<Vec<S>, SimError>,
    op: &AlgorithmOperator<S>,
    w: &DisturbanceSignal<S>,
    oracle: &SolutionOracle<S>,
    cfg: &ClosedLoopConfig<S>,
) -> Result<TrajectoryLog<S>, SimError> {
    let mut psi = psi;
    let mut step = move |k: usize, x: &[S], u: &[S], _dense: &mut Vec<(S, Vec<S>)>| psi(k, x, u);
    run_loop(plant, Policy::Feedback { op, eps: cfg.eps }, w, oracle, cfg, &mut step)
}

/// `ψ` as RK4 over one hold interval, for use with [`run_discrete`].
pub fn hold_step<'a, S: Scalar>(
    plant: &'a PlantModel<S>,
    w: &'a DisturbanceSignal<S>,
    cfg: &'a ClosedLoopConfig<S>,
) -> impl FnMut(usize, &[S], &[S], &mut Vec<(S, Vec<S>)>) -> Result<Vec<S>, SimError> + 'a {
    move |k, x, u, dense| {
        let observe = |t: S, xs: &[S]| dense.push((t, xs.to_vec()));
        integrate_hold_dense(plant, x, u, w, cfg.time(k), cfg.tau, cfg.substeps, observe).map_err(|e| match e {
            PlantError::IntegrationDiverged { time } => SimError::IntegrationDiverged { sample: k, time },
            other => SimError::Plant(other),
        })
    }
}

/// Feedforward baseline `u^k = Π_𝒰 u*_model(w_measured(t^k))`.
///
/// The plant is driven by `w_plant`; tracking errors are taken against the
/// reference oracle evaluated on `w_plant`.
pub fn run_feedforward_baseline<S: Scalar>(
    plant: &PlantModel<S>,
    model: &SolutionOracle<S>,
    w_measured: &DisturbanceSignal<S>,
    w_plant: &DisturbanceSignal<S>,
    reference: &SolutionOracle<S>,
    cfg: &ClosedLoopConfig<S>,
) -> Result<TrajectoryLog<S>, SimError> {
    let mut step = hold_step(plant, w_plant, cfg);
    run_loop(plant, Policy::Feedforward { oracle: model, measured: w_measured }, w_plant, reference, cfg, &mut step)
}

/// Largest value of `values` over the final `fraction` of entries.
pub fn tail_max<S: Scalar>(values: &[S], fraction: f64) -> S {
    let n = values.len();
    let keep = ((n as f64 * fraction).ceil() as usize).min(n).max(1.min(n));
    values[n - keep..].iter().copied().fold(S::zero(), S::max)
}

/// True when `values` never decreases and ends strictly above its start.
pub fn is_monotone_growth<S: Scalar>(values: &[S]) -> bool {
    values.windows(2).all(|p| p[1] >= p[0]) && values.last() > values.first()
}

/// Final time of a log in `f64`, for reporting.
pub fn final_time<S: Scalar>(log: &TrajectoryLog<S>) -> f64 {
    log.last().map(|s| to_f64(s.t)).unwrap_or(0.0)
}
