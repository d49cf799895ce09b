//! Parameterized generalized equations `0 ∈ F(u, y) + B(u)`, `y = h(u, w)`.
//!
//! The set-valued part `B` is represented by its resolvent (a proximal map or a
//! projection). Two constructors cover the shipped instances: the pseudo-gradient
//! of a feedback-optimization problem and the stacked pseudo-gradient of a
//! monotone game.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::linalg::{self, dot, Matrix};
use crate::plant::BoxSet;
use crate::scalar::{cast, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeError { what: String, expected: usize, got: usize },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("step size {gamma} outside (0, {upper})")]
    StepSizeOutOfRange { gamma: f64, upper: f64 },
    #[error("no convergence after {iterations} iterations (last step {last_step})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn shape(what: impl Into<String>, expected: usize, got: usize) -> Result<(), EquilibriumError> {
    if expected == got {
        Ok(())
    } else {
        Err(EquilibriumError::ShapeError { what: what.into(), expected, got })
    }
}

/// Single-valued part `F(u, y)`.
pub type PseudoGradient<S> = Arc<dyn Fn(&[S], &[S]) -> Vec<S> + Send + Sync>;
/// Resolvent `(v, γ) ↦ (I + γB)⁻¹ v`.
pub type Resolvent<S> = Arc<dyn Fn(&[S], S) -> Vec<S> + Send + Sync>;
/// Per-agent gradient `(u_i, y) ↦ ∇J_i`.
pub type LocalGradient<S> = Arc<dyn Fn(&[S], &[S]) -> Vec<S> + Send + Sync>;
/// Jacobian of a steady-state map in its own input block.
pub type LocalJacobian<S> = Arc<dyn Fn(&[S]) -> Matrix<S> + Send + Sync>;

/// `B = 0`.
pub fn identity_resolvent<S: Scalar>() -> Resolvent<S> {
    Arc::new(|v: &[S], _gamma: S| v.to_vec())
}

/// `B = N_𝒰` for a box `𝒰`: the projection, independent of `γ`.
pub fn box_resolvent<S: Scalar>(set: BoxSet<S>) -> Resolvent<S> {
    Arc::new(move |v: &[S], _gamma: S| set.project(v))
}

/// Certificate constants of an equilibrium problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemConstants<S> {
    /// ℓ: Lipschitz constant of `u ↦ F(u, h(u, w))`.
    pub lipschitz_f: S,
    /// m: strong monotonicity modulus of `u ↦ F(u, h(u, w))`.
    pub strong_monotonicity: S,
    /// ℓ_{u*}: Lipschitz constant of the solution map `w ↦ u*(w)`.
    pub lipschitz_solution: S,
    /// Lipschitz constant of `F` in its output argument.
    pub lipschitz_output: S,
}

#[derive(Clone)]
pub struct EquilibriumProblem<S> {
    input_dim: usize,
    output_dim: usize,
    f: PseudoGradient<S>,
    resolvent: Resolvent<S>,
    pub constants: ProblemConstants<S>,
}

impl<S: Scalar> EquilibriumProblem<S> {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        f: PseudoGradient<S>,
        resolvent: Resolvent<S>,
        constants: ProblemConstants<S>,
    ) -> Result<Self, EquilibriumError> {
        let c = &constants;
        if !(c.strong_monotonicity > S::zero() && c.lipschitz_f.is_finite()) {
            return Err(EquilibriumError::InvalidParameter("strong monotonicity must be positive".into()));
        }
        if c.strong_monotonicity > c.lipschitz_f {
            return Err(EquilibriumError::InvalidParameter(format!(
                "strong monotonicity {} exceeds Lipschitz constant {}",
                c.strong_monotonicity, c.lipschitz_f
            )));
        }
        if c.lipschitz_solution < S::zero() || c.lipschitz_output < S::zero() {
            return Err(EquilibriumError::InvalidParameter("Lipschitz constants must be nonnegative".into()));
        }
        let probe = f(&vec![S::zero(); input_dim], &vec![S::zero(); output_dim]);
        shape("F(u, y)", input_dim, probe.len())?;
        Ok(Self { input_dim, output_dim, f, resolvent, constants })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn f(&self, u: &[S], y: &[S]) -> Vec<S> {
        (self.f)(u, y)
    }

    pub fn resolve(&self, v: &[S], gamma: S) -> Vec<S> {
        (self.resolvent)(v, gamma)
    }

    pub fn pseudo_gradient(&self) -> &PseudoGradient<S> {
        &self.f
    }

    pub fn resolvent(&self) -> &Resolvent<S> {
        &self.resolvent
    }

    /// `F̃(u) = F(u, h(u))` for a steady-state map with frozen disturbance.
    pub fn reduced(&self, u: &[S], h: &dyn Fn(&[S]) -> Vec<S>) -> Vec<S> {
        self.f(u, &h(u))
    }

    /// Open step-size interval `(0, 2m/ℓ²)` of the proximal-gradient method.
    pub fn max_step(&self) -> S {
        let c = &self.constants;
        cast::<S>(2.0) * c.strong_monotonicity / (c.lipschitz_f * c.lipschitz_f)
    }
}

impl<S> fmt::Debug for EquilibriumProblem<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EquilibriumProblem")
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish_non_exhaustive()
    }
}

/// Assignment of input and output blocks to the agents of a game.
#[derive(Clone, Debug, PartialEq)]
pub struct GamePartition<S> {
    agent_dims: Vec<usize>,
    output_blocks: Vec<Range<usize>>,
    output_dim: usize,
    boxes: Vec<BoxSet<S>>,
}

impl<S: Scalar> GamePartition<S> {
    pub fn new(
        agent_dims: Vec<usize>,
        output_blocks: Vec<Range<usize>>,
        output_dim: usize,
        boxes: Vec<BoxSet<S>>,
    ) -> Result<Self, EquilibriumError> {
        let n = agent_dims.len();
        if n == 0 || agent_dims.contains(&0) {
            return Err(EquilibriumError::InvalidParameter("every agent needs a nonempty input block".into()));
        }
        shape("output blocks", n, output_blocks.len())?;
        shape("local boxes", n, boxes.len())?;
        for (i, (b, &d)) in boxes.iter().zip(&agent_dims).enumerate() {
            shape(format!("box of agent {i}"), d, b.dim())?;
        }
        if let Some(r) = output_blocks.iter().find(|r| r.end > output_dim || r.is_empty()) {
            return Err(EquilibriumError::InvalidParameter(format!("output block {r:?} outside 0..{output_dim}")));
        }
        Ok(Self { agent_dims, output_blocks, output_dim, boxes })
    }

    /// Agents with equal input size and consecutive output blocks of the same size.
    pub fn uniform(agents: usize, dim: usize, local_box: BoxSet<S>) -> Result<Self, EquilibriumError> {
        Self::new(
            vec![dim; agents],
            (0..agents).map(|i| i * dim..(i + 1) * dim).collect(),
            agents * dim,
            vec![local_box; agents],
        )
    }

    pub fn agents(&self) -> usize {
        self.agent_dims.len()
    }

    pub fn agent_dims(&self) -> &[usize] {
        &self.agent_dims
    }

    pub fn input_dim(&self) -> usize {
        self.agent_dims.iter().sum()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn input_range(&self, i: usize) -> Range<usize> {
        let start: usize = self.agent_dims[..i].iter().sum();
        start..start + self.agent_dims[i]
    }

    pub fn output_range(&self, i: usize) -> Range<usize> {
        self.output_blocks[i].clone()
    }

    pub fn local_box(&self, i: usize) -> &BoxSet<S> {
        &self.boxes[i]
    }

    /// The product set `𝒰 = ∏ 𝒰_i`.
    pub fn joint_box(&self) -> BoxSet<S> {
        let lo = self.boxes.iter().flat_map(|b| b.lower().iter().copied()).collect();
        let hi = self.boxes.iter().flat_map(|b| b.upper().iter().copied()).collect();
        BoxSet::new(lo, hi).expect("local boxes are valid")
    }
}

/// `F(u, y) = ∇_u φ₁(u, y) + ∇h_u(u)ᵀ ∇_y φ₁(u, y)` for the optimization
/// problem `min φ₁(u, h(u, w)) + φ₂(u)` with `h = h_u(u) + h_w(w)`.
///
/// The supplied maps are evaluated once at the origin to validate shapes.
pub fn fo_pseudo_gradient<S: Scalar>(
    input_dim: usize,
    output_dim: usize,
    grad_u_phi1: impl Fn(&[S], &[S]) -> Vec<S> + Send + Sync + 'static,
    grad_y_phi1: impl Fn(&[S], &[S]) -> Vec<S> + Send + Sync + 'static,
    jac_h_u: impl Fn(&[S]) -> Matrix<S> + Send + Sync + 'static,
) -> Result<PseudoGradient<S>, EquilibriumError> {
    let (u0, y0) = (vec![S::zero(); input_dim], vec![S::zero(); output_dim]);
    shape("∇_u φ₁", input_dim, grad_u_phi1(&u0, &y0).len())?;
    shape("∇_y φ₁", output_dim, grad_y_phi1(&u0, &y0).len())?;
    let j = jac_h_u(&u0);
    shape("∇h_u rows", output_dim, j.rows())?;
    shape("∇h_u columns", input_dim, j.cols())?;
    Ok(Arc::new(move |u: &[S], y: &[S]| {
        let gy = grad_y_phi1(u, y);
        linalg::add(&grad_u_phi1(u, y), &jac_h_u(u).tr_mul_vec(&gy))
    }))
}

/// Stacked pseudo-gradient `F = [F_i]` with
/// `F_i(u_i, y) = ∇_{u_i} J_i(u_i, y) + ∇_{u_i} h_i(u_i)ᵀ ∇_{y_i} J_i(u_i, y)`.
pub fn game_pseudo_gradient<S: Scalar>(
    partition: &GamePartition<S>,
    grad_ui: Vec<LocalGradient<S>>,
    grad_yi: Vec<LocalGradient<S>>,
    jac_hi: Vec<LocalJacobian<S>>,
) -> Result<PseudoGradient<S>, EquilibriumError> {
    let n = partition.agents();
    shape("∇_{u_i} J_i per agent", n, grad_ui.len())?;
    shape("∇_{y_i} J_i per agent", n, grad_yi.len())?;
    shape("∇h_i per agent", n, jac_hi.len())?;
    let y0 = vec![S::zero(); partition.output_dim()];
    for i in 0..n {
        let ni = partition.agent_dims()[i];
        let yi = partition.output_range(i).len();
        let ui = vec![S::zero(); ni];
        shape(format!("∇_u J_{i}"), ni, grad_ui[i](&ui, &y0).len())?;
        shape(format!("∇_y J_{i}"), yi, grad_yi[i](&ui, &y0).len())?;
        let j = jac_hi[i](&ui);
        shape(format!("∇h_{i} rows"), yi, j.rows())?;
        shape(format!("∇h_{i} columns"), ni, j.cols())?;
    }
    let partition = partition.clone();
    Ok(Arc::new(move |u: &[S], y: &[S]| {
        let mut out = Vec::with_capacity(u.len());
        for i in 0..partition.agents() {
            let ui = &u[partition.input_range(i)];
            let direct = grad_ui[i](ui, y);
            let through_output = jac_hi[i](ui).tr_mul_vec(&grad_yi[i](ui, y));
            out.extend(direct.iter().zip(&through_output).map(|(&a, &b)| a + b));
        }
        out
    }))
}

/// `(½ dist(y, [lo, hi])², d/dy)`.
pub fn dist_to_interval_grad<S: Scalar>(y: S, lo: S, hi: S) -> Result<(S, S), EquilibriumError> {
    if !(lo <= hi) {
        return Err(EquilibriumError::InvalidInterval { lo: lo.to_f64().unwrap_or(f64::NAN), hi: hi.to_f64().unwrap_or(f64::NAN) });
    }
    let half = cast::<S>(0.5);
    Ok(if y > hi {
        (half * (y - hi) * (y - hi), y - hi)
    } else if y < lo {
        (half * (y - lo) * (y - lo), y - lo)
    } else {
        (S::zero(), S::zero())
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineSolution<S> {
    pub u: Vec<S>,
    pub iterations: usize,
    /// `‖u_{k+1} − u_k‖` at termination.
    pub last_step: S,
}

fn check_step<S: Scalar>(problem: &EquilibriumProblem<S>, gamma: S) -> Result<(), EquilibriumError> {
    let upper = problem.max_step();
    if gamma > S::zero() && gamma < upper {
        Ok(())
    } else {
        Err(EquilibriumError::StepSizeOutOfRange {
            gamma: gamma.to_f64().unwrap_or(f64::NAN),
            upper: upper.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// Fixed point of `u ↦ R(u − γF(u, h(u)), γ)` from the default start `R(0, γ)`.
pub fn solve_offline<S: Scalar>(
    problem: &EquilibriumProblem<S>,
    h: &dyn Fn(&[S]) -> Vec<S>,
    gamma: S,
    tol: S,
    max_iters: usize,
) -> Result<OfflineSolution<S>, EquilibriumError> {
    let u0 = problem.resolve(&vec![S::zero(); problem.input_dim()], gamma);
    solve_offline_from(problem, h, gamma, &u0, tol, max_iters)
}

/// [`solve_offline`] with a warm start.
pub fn solve_offline_from<S: Scalar>(
    problem: &EquilibriumProblem<S>,
    h: &dyn Fn(&[S]) -> Vec<S>,
    gamma: S,
    u0: &[S],
    tol: S,
    max_iters: usize,
) -> Result<OfflineSolution<S>, EquilibriumError> {
    check_step(problem, gamma)?;
    shape("initial point", problem.input_dim(), u0.len())?;
    let mut u = u0.to_vec();
    let mut last = S::infinity();
    for k in 1..=max_iters {
        let next = prox_grad_iterate(problem, h, gamma, &u);
        last = linalg::dist(&next, &u);
        u = next;
        if last <= tol {
            return Ok(OfflineSolution { u, iterations: k, last_step: last });
        }
        if !linalg::all_finite(&u) {
            break;
        }
    }
    Err(EquilibriumError::NoConvergence { iterations: max_iters, last_step: last.to_f64().unwrap_or(f64::NAN) })
}

fn prox_grad_iterate<S: Scalar>(
    problem: &EquilibriumProblem<S>,
    h: &dyn Fn(&[S]) -> Vec<S>,
    gamma: S,
    u: &[S],
) -> Vec<S> {
    let g = problem.reduced(u, h);
    problem.resolve(&linalg::axpy(u, -gamma, &g), gamma)
}

/// The first `count` iterates `u_1, …, u_count` of the offline iteration from `u0`.
pub fn offline_iterates<S: Scalar>(
    problem: &EquilibriumProblem<S>,
    h: &dyn Fn(&[S]) -> Vec<S>,
    gamma: S,
    u0: &[S],
    count: usize,
) -> Result<Vec<Vec<S>>, EquilibriumError> {
    check_step(problem, gamma)?;
    let mut u = u0.to_vec();
    Ok((0..count)
        .map(|_| {
            u = prox_grad_iterate(problem, h, gamma, &u);
            u.clone()
        })
        .collect())
}

/// Smallest observed `(F̃(u) − F̃(v))ᵀ(u − v) / ‖u − v‖²` over random pairs in `set`.
pub fn probe_strong_monotonicity<S: Scalar, R: Rng + ?Sized>(
    problem: &EquilibriumProblem<S>,
    h: &dyn Fn(&[S]) -> Vec<S>,
    set: &BoxSet<S>,
    pairs: usize,
    rng: &mut R,
) -> S {
    let mut best = S::infinity();
    for _ in 0..pairs {
        let (u, v) = (set.sample(rng), set.sample(rng));
        let d = linalg::sub(&u, &v);
        let dd = dot(&d, &d);
        if dd > S::zero() {
            let df = linalg::sub(&problem.reduced(&u, h), &problem.reduced(&v, h));
            best = best.min(dot(&df, &d) / dd);
        }
    }
    best
}

/// Largest observed `‖F̃(u) − F̃(v)‖ / ‖u − v‖` over random pairs in `set`.
pub fn probe_lipschitz<S: Scalar, R: Rng + ?Sized>(
    problem: &EquilibriumProblem<S>,
    h: &dyn Fn(&[S]) -> Vec<S>,
    set: &BoxSet<S>,
    pairs: usize,
    rng: &mut R,
) -> S {
    let mut best = S::zero();
    for _ in 0..pairs {
        let (u, v) = (set.sample(rng), set.sample(rng));
        let du = linalg::dist(&u, &v);
        if du > S::zero() {
            best = best.max(linalg::dist(&problem.reduced(&u, h), &problem.reduced(&v, h)) / du);
        }
    }
    best
}

/// Largest observed `‖R(a) − R(b)‖ / ‖a − b‖` for random points in `set`.
pub fn probe_resolvent_nonexpansive<S: Scalar, R: Rng + ?Sized>(
    problem: &EquilibriumProblem<S>,
    gamma: S,
    set: &BoxSet<S>,
    pairs: usize,
    rng: &mut R,
) -> S {
    let mut best = S::zero();
    for _ in 0..pairs {
        let (a, b) = (set.sample(rng), set.sample(rng));
        let d = linalg::dist(&a, &b);
        if d > S::zero() {
            best = best.max(linalg::dist(&problem.resolve(&a, gamma), &problem.resolve(&b, gamma)) / d);
        }
    }
    best
}

/// Largest observed `‖u*(w) − u*(w')‖ / ‖w − w'‖` over random disturbance pairs.
#[allow(clippy::too_many_arguments)]
pub fn probe_solution_lipschitz<S: Scalar, R: Rng + ?Sized>(
    problem: &EquilibriumProblem<S>,
    h: &dyn Fn(&[S], &[S]) -> Vec<S>,
    disturbances: &BoxSet<S>,
    gamma: S,
    tol: S,
    max_iters: usize,
    pairs: usize,
    rng: &mut R,
) -> Result<S, EquilibriumError> {
    let mut best = S::zero();
    for _ in 0..pairs {
        let (w1, w2) = (disturbances.sample(rng), disturbances.sample(rng));
        let dw = linalg::dist(&w1, &w2);
        if dw == S::zero() {
            continue;
        }
        let s1 = solve_offline(problem, &|u: &[S]| h(u, &w1), gamma, tol, max_iters)?;
        let s2 = solve_offline_from(problem, &|u: &[S]| h(u, &w2), gamma, &s1.u, tol, max_iters)?;
        best = best.max(linalg::dist(&s1.u, &s2.u) / dw);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constants(l: f64, m: f64) -> ProblemConstants<f64> {
        ProblemConstants { lipschitz_f: l, strong_monotonicity: m, lipschitz_solution: 1.0, lipschitz_output: 0.0 }
    }

    fn affine_problem(shift: f64, resolvent: Resolvent<f64>) -> EquilibriumProblem<f64> {
        EquilibriumProblem::new(1, 1, Arc::new(move |u: &[f64], _y: &[f64]| vec![u[0] - shift]), resolvent, constants(1.0, 1.0))
            .unwrap()
    }

    #[test]
    fn dist_gradient_cases() {
        assert_eq!(dist_to_interval_grad(22.0, 20.0, 25.0).unwrap(), (0.0, 0.0));
        assert_eq!(dist_to_interval_grad(27.0, 20.0, 25.0).unwrap(), (2.0, 2.0));
        assert_eq!(dist_to_interval_grad(19.0, 20.0, 25.0).unwrap(), (0.5, -1.0));
        assert!(matches!(dist_to_interval_grad(0.0, 1.0, 0.0), Err(EquilibriumError::InvalidInterval { .. })));
    }

    #[test]
    fn fo_gradient_quadratic_without_coupling() {
        let f = fo_pseudo_gradient(
            2,
            1,
            |u: &[f64], _y: &[f64]| u.to_vec(),
            |_u: &[f64], _y: &[f64]| vec![0.0],
            |_u: &[f64]| Matrix::zeros(1, 2),
        )
        .unwrap();
        assert_eq!(f(&[1.5, -2.0], &[9.0]), vec![1.5, -2.0]);
    }

    #[test]
    fn fo_gradient_chain_rule() {
        // φ₁ = ½‖y‖², h_u(u) = 2u ⇒ F = 2y
        let f = fo_pseudo_gradient(
            1,
            1,
            |_u: &[f64], _y: &[f64]| vec![0.0],
            |_u: &[f64], y: &[f64]| y.to_vec(),
            |_u: &[f64]| Matrix::from_row_slice(1, 1, &[2.0]),
        )
        .unwrap();
        assert_eq!(f(&[0.3], &[1.25]), vec![2.5]);
    }

    #[test]
    fn fo_gradient_shape_error() {
        let err = fo_pseudo_gradient(
            2,
            1,
            |u: &[f64], _y: &[f64]| u.to_vec(),
            |_u: &[f64], _y: &[f64]| vec![0.0],
            |_u: &[f64]| Matrix::zeros(2, 2),
        );
        assert!(matches!(err, Err(EquilibriumError::ShapeError { .. })));
    }

    #[test]
    fn decoupled_quadratic_game_is_identity() {
        let part = GamePartition::uniform(2, 2, BoxSet::cube(2, -1.0, 1.0).unwrap()).unwrap();
        let g: LocalGradient<f64> = Arc::new(|ui: &[f64], _y: &[f64]| ui.to_vec());
        let gy: LocalGradient<f64> = Arc::new(|_ui: &[f64], _y: &[f64]| vec![0.0, 0.0]);
        let j: LocalJacobian<f64> = Arc::new(|_ui: &[f64]| Matrix::identity(2));
        let f = game_pseudo_gradient(&part, vec![g.clone(), g], vec![gy.clone(), gy], vec![j.clone(), j]).unwrap();
        let u = [0.1, -0.2, 0.3, 0.4];
        assert_eq!(f(&u, &[0.0; 4]), u.to_vec());
    }

    #[test]
    fn single_agent_game_matches_optimization() {
        let grad_u = |u: &[f64], _y: &[f64]| vec![2.0 * u[0]];
        let grad_y = |_u: &[f64], y: &[f64]| vec![y[0] - 1.0];
        let jac = |_u: &[f64]| Matrix::from_row_slice(1, 1, &[3.0]);
        let fo = fo_pseudo_gradient(1, 1, grad_u, grad_y, jac).unwrap();
        let part = GamePartition::uniform(1, 1, BoxSet::cube(1, -1.0, 1.0).unwrap()).unwrap();
        let game = game_pseudo_gradient(&part, vec![Arc::new(grad_u)], vec![Arc::new(grad_y)], vec![Arc::new(jac)]).unwrap();
        for (u, y) in [(0.2, 0.7), (-1.0, 3.0), (0.0, 0.0)] {
            assert_eq!(fo(&[u], &[y]), game(&[u], &[y]));
        }
    }

    #[test]
    fn zero_of_affine_map() {
        let p = affine_problem(5.0, identity_resolvent());
        let sol = solve_offline(&p, &|_u: &[f64]| vec![0.0], 1.0, 1e-12, 100).unwrap();
        assert!((sol.u[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn projected_zero_on_box() {
        let set = BoxSet::cube(1, 1.0, 2.0).unwrap();
        let p = affine_problem(0.0, box_resolvent(set));
        let sol = solve_offline(&p, &|_u: &[f64]| vec![0.0], 0.5, 1e-12, 1000).unwrap();
        // grid search oracle: minimize ½u² over [1, 2]
        let grid_min = (0..=1000)
            .map(|i| 1.0 + i as f64 / 1000.0)
            .min_by(|a, b| (a * a).partial_cmp(&(b * b)).unwrap())
            .unwrap();
        assert!((sol.u[0] - grid_min).abs() < 1e-12);
    }

    #[test]
    fn step_size_is_checked() {
        let p = affine_problem(0.0, identity_resolvent());
        assert!(matches!(
            solve_offline(&p, &|_u: &[f64]| vec![0.0], 2.0, 1e-9, 10),
            Err(EquilibriumError::StepSizeOutOfRange { .. })
        ));
    }

    #[test]
    fn non_convergence_is_reported() {
        let p = EquilibriumProblem::new(
            1,
            1,
            Arc::new(|u: &[f64], _y: &[f64]| vec![0.01 * u[0] - 1.0]),
            identity_resolvent(),
            constants(0.01, 0.01),
        )
        .unwrap();
        assert!(matches!(
            solve_offline(&p, &|_u: &[f64]| vec![0.0], 1.0, 1e-12, 5),
            Err(EquilibriumError::NoConvergence { iterations: 5, .. })
        ));
    }

    #[test]
    fn monotonicity_and_lipschitz_probes() {
        // F̃(u) = diag(1, 3) u
        let p = EquilibriumProblem::new(
            2,
            1,
            Arc::new(|u: &[f64], _y: &[f64]| vec![u[0], 3.0 * u[1]]),
            identity_resolvent(),
            constants(3.0, 1.0),
        )
        .unwrap();
        let set = BoxSet::cube(2, -1.0, 1.0).unwrap();
        let h = |_u: &[f64]| vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = probe_strong_monotonicity(&p, &h, &set, 1000, &mut rng);
        let l = probe_lipschitz(&p, &h, &set, 1000, &mut rng);
        assert!((1.0 - 1e-12..1.2).contains(&m));
        assert!(l <= 3.0 + 1e-12 && l > 2.8);
        assert!(probe_resolvent_nonexpansive(&p, 0.1, &set, 100, &mut rng) <= 1.0 + 1e-12);
    }

    #[test]
    fn partition_validation() {
        let b = BoxSet::cube(2, -1.0, 1.0).unwrap();
        assert!(GamePartition::new(vec![2, 0], vec![0..2, 2..4], 4, vec![b.clone(), b.clone()]).is_err());
        assert!(GamePartition::new(vec![2], vec![0..2, 2..4], 4, vec![b.clone()]).is_err());
        let p = GamePartition::new(vec![2, 2], vec![0..2, 2..5], 5, vec![b.clone(), b]).unwrap();
        assert_eq!(p.input_dim(), 4);
        assert_eq!(p.input_range(1), 2..4);
        assert_eq!(p.joint_box().dim(), 4);
    }
}
