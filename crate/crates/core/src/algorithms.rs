//! Iteration rules `u⁺ = T(u, y)` with their certificate metadata.
//!
//! Every operator carries a contraction factor `c_T` in the `P`-norm, the
//! Lipschitz constant `ℓ_T` of `T` in the measured output, and the metric `P`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::equilibrium::{EquilibriumProblem, GamePartition};
use crate::linalg::{self, dot, Matrix};
use crate::plant::BoxSet;
use crate::scalar::{cast, to_f64, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgorithmError {
    #[error("step size {gamma} outside (0, {upper})")]
    StepSizeOutOfRange { gamma: f64, upper: f64 },
    #[error("relaxation {0} outside (0, 1]")]
    RelaxationOutOfRange(f64),
    #[error("best response of agent {agent} failed: {reason}")]
    BestResponseFailed { agent: usize, reason: String },
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid operator metadata: {0}")]
    InvalidMetadata(String),
}

pub type StepFn<S> = Arc<dyn Fn(&[S], &[S]) -> Result<Vec<S>, AlgorithmError> + Send + Sync>;

#[derive(Clone)]
pub struct AlgorithmOperator<S> {
    name: String,
    input_dim: usize,
    output_dim: usize,
    step: StepFn<S>,
    c_t: S,
    ell_t: S,
    p: Matrix<S>,
    p_eigen: (S, S),
}

impl<S: Scalar> AlgorithmOperator<S> {
    /// Validates `c_T ∈ [0, 1)`, `ℓ_T ≥ 0` and `P ≻ 0` symmetric.
    pub fn new(
        name: impl Into<String>,
        input_dim: usize,
        output_dim: usize,
        step: StepFn<S>,
        c_t: S,
        ell_t: S,
        p: Matrix<S>,
    ) -> Result<Self, AlgorithmError> {
        if !(c_t >= S::zero() && c_t < S::one()) {
            return Err(AlgorithmError::InvalidMetadata(format!("c_T = {c_t} is not in [0, 1)")));
        }
        if !(ell_t >= S::zero() && ell_t.is_finite()) {
            return Err(AlgorithmError::InvalidMetadata(format!("ell_T = {ell_t} must be nonnegative")));
        }
        if p.rows() != input_dim || !p.is_symmetric(S::feasibility_tol()) {
            return Err(AlgorithmError::InvalidMetadata("P must be symmetric of input dimension".into()));
        }
        let ev = p.symmetric_eigenvalues();
        let (lo, hi) = (ev.first().copied().unwrap_or(S::one()), ev.last().copied().unwrap_or(S::one()));
        if !(lo > S::zero()) {
            return Err(AlgorithmError::InvalidMetadata("P must be positive definite".into()));
        }
        Ok(Self { name: name.into(), input_dim, output_dim, step, c_t, ell_t, p, p_eigen: (lo, hi) })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn c_t(&self) -> S {
        self.c_t
    }

    pub fn ell_t(&self) -> S {
        self.ell_t
    }

    pub fn p(&self) -> &Matrix<S> {
        &self.p
    }

    pub fn lambda_min_p(&self) -> S {
        self.p_eigen.0
    }

    pub fn lambda_max_p(&self) -> S {
        self.p_eigen.1
    }

    /// `T(u, y)`.
    pub fn step(&self, u: &[S], y: &[S]) -> Result<Vec<S>, AlgorithmError> {
        if u.len() != self.input_dim {
            return Err(AlgorithmError::DimensionMismatch { what: "input", expected: self.input_dim, got: u.len() });
        }
        if y.len() != self.output_dim {
            return Err(AlgorithmError::DimensionMismatch { what: "output", expected: self.output_dim, got: y.len() });
        }
        (self.step)(u, y)
    }

    /// `‖v‖_P = √(vᵀPv)`.
    pub fn p_norm(&self, v: &[S]) -> S {
        dot(v, &self.p.mul_vec(v)).max(S::zero()).sqrt()
    }

    /// φ(ε) = 1 − ε(1 − c_T), the contraction factor of `T_ε`.
    pub fn relaxed_contraction(&self, eps: S) -> S {
        S::one() - eps * (S::one() - self.c_t)
    }
}

impl<S> fmt::Debug for AlgorithmOperator<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlgorithmOperator")
            .field("name", &self.name)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish_non_exhaustive()
    }
}

pub fn check_relaxation<S: Scalar>(eps: S) -> Result<(), AlgorithmError> {
    if eps > S::zero() && eps <= S::one() {
        Ok(())
    } else {
        Err(AlgorithmError::RelaxationOutOfRange(to_f64(eps)))
    }
}

/// `T_ε(u, y) = (1 − ε)u + εT(u, y)`.
pub fn relaxed_step<S: Scalar>(op: &AlgorithmOperator<S>, eps: S, u: &[S], y: &[S]) -> Result<Vec<S>, AlgorithmError> {
    check_relaxation(eps)?;
    let t = op.step(u, y)?;
    if eps == S::one() {
        return Ok(t);
    }
    Ok(linalg::lerp(u, &t, eps))
}

/// `T(u, y) = R(u − γF(u, y), γ)` with `c_T = √(1 − γ(2m − γℓ²))`, `ℓ_T = γ ℓ_y`, `P = I`.
pub fn prox_grad_operator<S: Scalar>(problem: &EquilibriumProblem<S>, gamma: S) -> Result<AlgorithmOperator<S>, AlgorithmError> {
    let upper = problem.max_step();
    if !(gamma > S::zero() && gamma < upper) {
        return Err(AlgorithmError::StepSizeOutOfRange { gamma: to_f64(gamma), upper: to_f64(upper) });
    }
    let c = &problem.constants;
    let l = c.lipschitz_f;
    let c_t = (S::one() - gamma * (cast::<S>(2.0) * c.strong_monotonicity - gamma * l * l)).max(S::zero()).sqrt();
    let ell_t = gamma * c.lipschitz_output;
    let n = problem.input_dim();
    let pr = problem.clone();
    let step: StepFn<S> = Arc::new(move |u: &[S], y: &[S]| {
        let g = pr.f(u, y);
        Ok(pr.resolve(&linalg::axpy(u, -gamma, &g), gamma))
    });
    AlgorithmOperator::new("proximal-gradient", n, problem.output_dim(), step, c_t, ell_t, Matrix::identity(n))
}

/// Proximal gradient when `F(·, h(·, w))` is the gradient of an `m`-strongly
/// convex, `ℓ`-smooth potential. Cocoercivity widens the step range to
/// `(0, 2/ℓ)` with `c_T = max(|1 − γm|, |1 − γℓ|)`.
///
/// The caller vouches for the potential structure; general monotone `F` must
/// use [`prox_grad_operator`].
pub fn prox_grad_potential_operator<S: Scalar>(
    problem: &EquilibriumProblem<S>,
    gamma: S,
) -> Result<AlgorithmOperator<S>, AlgorithmError> {
    let c = &problem.constants;
    let upper = cast::<S>(2.0) / c.lipschitz_f;
    if !(gamma > S::zero() && gamma < upper) {
        return Err(AlgorithmError::StepSizeOutOfRange { gamma: to_f64(gamma), upper: to_f64(upper) });
    }
    let c_t = (S::one() - gamma * c.strong_monotonicity).abs().max((S::one() - gamma * c.lipschitz_f).abs());
    let ell_t = gamma * c.lipschitz_output;
    let n = problem.input_dim();
    let pr = problem.clone();
    let step: StepFn<S> = Arc::new(move |u: &[S], y: &[S]| {
        let g = pr.f(u, y);
        Ok(pr.resolve(&linalg::axpy(u, -gamma, &g), gamma))
    });
    AlgorithmOperator::new("proximal-gradient (potential)", n, problem.output_dim(), step, c_t, ell_t, Matrix::identity(n))
}

/// Per-agent minimizer of the local cost `J̃_i(ξ, y)` over the local box.
#[derive(Clone)]
pub enum LocalSolver<S> {
    /// Unconstrained minimizer `y ↦ ξ_i(y)`, clamped onto the local box.
    ///
    /// Exact whenever the local Hessian is a multiple of the identity.
    ClosedForm(Arc<dyn Fn(&[S]) -> Vec<S> + Send + Sync>),
    /// Projected gradient on `∇_ξ J̃_i(ξ, y)`, warm-started at the current `u_i`.
    ProjectedGradient {
        gradient: Arc<dyn Fn(&[S], &[S]) -> Vec<S> + Send + Sync>,
        step: S,
        tol: S,
        max_iters: usize,
    },
}

impl<S: Scalar> LocalSolver<S> {
    /// Projected-gradient solver with tolerance `1e-10` and at most `10⁵` iterations.
    pub fn projected_gradient(gradient: impl Fn(&[S], &[S]) -> Vec<S> + Send + Sync + 'static, step: S) -> Self {
        Self::ProjectedGradient { gradient: Arc::new(gradient), step, tol: cast(1e-10), max_iters: 100_000 }
    }

    fn solve(&self, agent: usize, ui: &[S], y: &[S], set: &BoxSet<S>) -> Result<Vec<S>, AlgorithmError> {
        match self {
            Self::ClosedForm(f) => {
                let xi = f(y);
                if xi.len() != set.dim() {
                    return Err(AlgorithmError::BestResponseFailed {
                        agent,
                        reason: format!("minimizer has dimension {}, expected {}", xi.len(), set.dim()),
                    });
                }
                Ok(set.project(&xi))
            }
            Self::ProjectedGradient { gradient, step, tol, max_iters } => {
                let mut xi = set.project(ui);
                for _ in 0..*max_iters {
                    let next = set.project(&linalg::axpy(&xi, -*step, &gradient(&xi, y)));
                    let moved = linalg::dist(&next, &xi);
                    xi = next;
                    if !linalg::all_finite(&xi) {
                        break;
                    }
                    if moved <= *tol {
                        return Ok(xi);
                    }
                }
                Err(AlgorithmError::BestResponseFailed {
                    agent,
                    reason: format!("inner loop did not reach tolerance in {max_iters} iterations"),
                })
            }
        }
    }
}

impl<S> fmt::Debug for LocalSolver<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ClosedForm(_) => f.write_str("ClosedForm"),
            Self::ProjectedGradient { max_iters, .. } => write!(f, "ProjectedGradient(max_iters = {max_iters})"),
        }
    }
}

/// Simultaneous (Jacobi) best response `T = [T_i]`.
///
/// `c_t` and `ell_t` are supplied by the caller, who knows the game structure;
/// `P = I`.
pub fn best_response_operator<S: Scalar>(
    partition: &GamePartition<S>,
    solvers: Vec<LocalSolver<S>>,
    c_t: S,
    ell_t: S,
) -> Result<AlgorithmOperator<S>, AlgorithmError> {
    if solvers.len() != partition.agents() {
        return Err(AlgorithmError::DimensionMismatch {
            what: "local solvers",
            expected: partition.agents(),
            got: solvers.len(),
        });
    }
    let n = partition.input_dim();
    let part = partition.clone();
    let step: StepFn<S> = Arc::new(move |u: &[S], y: &[S]| {
        let mut out = Vec::with_capacity(u.len());
        for (i, solver) in solvers.iter().enumerate() {
            out.extend(solver.solve(i, &u[part.input_range(i)], y, part.local_box(i))?);
        }
        Ok(out)
    });
    AlgorithmOperator::new("best-response", n, partition.output_dim(), step, c_t, ell_t, Matrix::identity(n))
}

/// Largest observed `‖T̃_ε(u) − u*‖_P / ‖u − u*‖_P` over random `u` in `set`,
/// where `T̃_ε(u) = T_ε(u, h(u))`.
pub fn probe_contraction<S: Scalar, R: Rng + ?Sized>(
    op: &AlgorithmOperator<S>,
    eps: S,
    h: &dyn Fn(&[S]) -> Vec<S>,
    u_star: &[S],
    set: &BoxSet<S>,
    trials: usize,
    rng: &mut R,
) -> Result<S, AlgorithmError> {
    let mut worst = S::zero();
    for _ in 0..trials {
        let u = set.sample(rng);
        let before = op.p_norm(&linalg::sub(&u, u_star));
        if before == S::zero() {
            continue;
        }
        let next = relaxed_step(op, eps, &u, &h(&u))?;
        worst = worst.max(op.p_norm(&linalg::sub(&next, u_star)) / before);
    }
    Ok(worst)
}

/// Largest observed `‖T(u, y) − T(u, y′)‖ / ‖y − y′‖` over random samples.
pub fn probe_output_lipschitz<S: Scalar, R: Rng + ?Sized>(
    op: &AlgorithmOperator<S>,
    inputs: &BoxSet<S>,
    outputs: &BoxSet<S>,
    trials: usize,
    rng: &mut R,
) -> Result<S, AlgorithmError> {
    let mut worst = S::zero();
    for _ in 0..trials {
        let u = inputs.sample(rng);
        let (y1, y2) = (outputs.sample(rng), outputs.sample(rng));
        let dy = linalg::dist(&y1, &y2);
        if dy > S::zero() {
            worst = worst.max(linalg::dist(&op.step(&u, &y1)?, &op.step(&u, &y2)?) / dy);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{box_resolvent, identity_resolvent, solve_offline, ProblemConstants};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic(m: f64, l: f64) -> EquilibriumProblem<f64> {
        // F(u, y) = diag(m, l) u
        EquilibriumProblem::new(
            2,
            1,
            Arc::new(move |u: &[f64], _y: &[f64]| vec![m * u[0], l * u[1]]),
            identity_resolvent(),
            ProblemConstants { lipschitz_f: l, strong_monotonicity: m, lipschitz_solution: 0.0, lipschitz_output: 0.0 },
        )
        .unwrap()
    }

    #[test]
    fn prox_grad_one_step_convergence() {
        let p = EquilibriumProblem::new(
            1,
            1,
            Arc::new(|u: &[f64], _y: &[f64]| u.to_vec()),
            identity_resolvent(),
            ProblemConstants { lipschitz_f: 1.0, strong_monotonicity: 1.0, lipschitz_solution: 0.0, lipschitz_output: 0.0 },
        )
        .unwrap();
        let op = prox_grad_operator(&p, 1.0).unwrap();
        assert_eq!(op.c_t(), 0.0);
        assert_eq!(op.step(&[3.0], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn prox_grad_contraction_constant() {
        let op = prox_grad_operator(&quadratic(1.0, 2.0), 0.25).unwrap();
        assert!((op.c_t() - 0.75f64.sqrt()).abs() < 1e-12);
        let tiny = prox_grad_operator(&quadratic(1.0, 2.0), 1e-9).unwrap();
        assert!(tiny.c_t() > 1.0 - 1e-8);
    }

    #[test]
    fn prox_grad_step_range() {
        let p = quadratic(1.0, 2.0);
        for gamma in [0.0, -0.1, 0.5, 0.7] {
            assert!(matches!(prox_grad_operator(&p, gamma), Err(AlgorithmError::StepSizeOutOfRange { .. })));
        }
    }

    #[test]
    fn potential_step_rate() {
        let p = quadratic(1.0, 4.0);
        // γ = 2/(m + ℓ) balances both ends: c_T = (ℓ − m)/(ℓ + m)
        let op = prox_grad_potential_operator(&p, 0.4).unwrap();
        assert!((op.c_t() - 0.6).abs() < 1e-12);
        let u = op.step(&[1.0, 1.0], &[0.0]).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-12 && (u[1] + 0.6).abs() < 1e-12);
        for gamma in [0.0, 0.5, 0.6] {
            assert!(matches!(prox_grad_potential_operator(&p, gamma), Err(AlgorithmError::StepSizeOutOfRange { .. })));
        }
        // the monotone rule would reject this step
        assert!(prox_grad_operator(&p, 0.4).is_err());
    }

    #[test]
    fn relaxation_cases() {
        let p = EquilibriumProblem::new(
            1,
            1,
            Arc::new(|u: &[f64], _y: &[f64]| u.to_vec()),
            identity_resolvent(),
            ProblemConstants { lipschitz_f: 1.0, strong_monotonicity: 1.0, lipschitz_solution: 0.0, lipschitz_output: 0.0 },
        )
        .unwrap();
        let op = prox_grad_operator(&p, 1.0).unwrap();
        assert_eq!(relaxed_step(&op, 1.0, &[4.0], &[0.0]).unwrap(), op.step(&[4.0], &[0.0]).unwrap());
        assert_eq!(relaxed_step(&op, 0.5, &[4.0], &[0.0]).unwrap(), vec![2.0]);
        for eps in [0.0, 1.5, -0.2] {
            assert!(matches!(relaxed_step(&op, eps, &[4.0], &[0.0]), Err(AlgorithmError::RelaxationOutOfRange(_))));
        }
    }

    #[test]
    fn relaxed_contraction_probe() {
        // F(u) = u on ℝ, γ chosen so that c_T = 0.2: 1 − γ(2 − γ) = 0.04 ⇒ γ = 0.8
        let p = EquilibriumProblem::new(
            1,
            1,
            Arc::new(|u: &[f64], _y: &[f64]| u.to_vec()),
            identity_resolvent(),
            ProblemConstants { lipschitz_f: 1.0, strong_monotonicity: 1.0, lipschitz_solution: 0.0, lipschitz_output: 0.0 },
        )
        .unwrap();
        let op = prox_grad_operator(&p, 0.8).unwrap();
        assert!((op.c_t() - 0.2).abs() < 1e-12);
        assert!((op.relaxed_contraction(0.5) - 0.6).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = BoxSet::cube(1, -10.0, 10.0).unwrap();
        let ratio = probe_contraction(&op, 0.5, &|_u: &[f64]| vec![0.0], &[0.0], &set, 500, &mut rng).unwrap();
        assert!(ratio <= 0.6 + 1e-9);
    }

    #[test]
    fn contraction_holds_with_projection() {
        let set = BoxSet::cube(2, 0.5, 3.0).unwrap();
        let base = quadratic(1.0, 3.0);
        let p = EquilibriumProblem::new(2, 1, base.pseudo_gradient().clone(), box_resolvent(set.clone()), base.constants).unwrap();
        let op = prox_grad_operator(&p, 0.15).unwrap();
        let h = |_u: &[f64]| vec![0.0];
        let u_star = solve_offline(&p, &h, 0.15, 1e-12, 10_000).unwrap().u;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ratio = probe_contraction(&op, 1.0, &h, &u_star, &BoxSet::cube(2, -5.0, 5.0).unwrap(), 500, &mut rng).unwrap();
        assert!(ratio <= op.c_t() + 1e-9);
        assert!(op.step(&u_star, &[0.0]).unwrap().iter().zip(&u_star).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    fn two_agent_partition() -> GamePartition<f64> {
        GamePartition::uniform(2, 2, BoxSet::new(vec![-5.0, -6.0], vec![10.0, 6.0]).unwrap()).unwrap()
    }

    #[test]
    fn closed_form_best_response_clamps() {
        let part = two_agent_partition();
        let far: LocalSolver<f64> = LocalSolver::ClosedForm(Arc::new(|_y: &[f64]| vec![12.0, 0.0]));
        let op = best_response_operator(&part, vec![far.clone(), far], 0.5, 0.0).unwrap();
        assert_eq!(op.step(&[0.0; 4], &[0.0; 4]).unwrap(), vec![10.0, 0.0, 10.0, 0.0]);
    }

    #[test]
    fn projected_gradient_matches_closed_form() {
        // J(ξ, y) = ‖ξ − a‖² + 0.25‖ξ − y_other‖², minimizer (2a + 0.5 y_other)/2.5
        let part = two_agent_partition();
        let a = [[1.0, 2.0], [-3.0, 0.5]];
        let make_pg = |i: usize| {
            let other = 1 - i;
            let ai = a[i];
            LocalSolver::projected_gradient(
                move |xi: &[f64], y: &[f64]| {
                    let yo = &y[2 * other..2 * other + 2];
                    (0..2).map(|d| 2.0 * (xi[d] - ai[d]) + 0.5 * (xi[d] - yo[d])).collect()
                },
                0.2,
            )
        };
        let make_cf = |i: usize| {
            let other = 1 - i;
            let ai = a[i];
            LocalSolver::ClosedForm(Arc::new(move |y: &[f64]| {
                (0..2).map(|d| (2.0 * ai[d] + 0.5 * y[2 * other + d]) / 2.5).collect()
            }))
        };
        let pg = best_response_operator(&part, vec![make_pg(0), make_pg(1)], 0.2, 0.2).unwrap();
        let cf = best_response_operator(&part, vec![make_cf(0), make_cf(1)], 0.2, 0.2).unwrap();
        let (u, y) = ([0.0, 0.0, 1.0, 1.0], [0.3, -0.7, 4.0, 2.0]);
        let (a1, b1) = (pg.step(&u, &y).unwrap(), cf.step(&u, &y).unwrap());
        assert!(linalg::dist(&a1, &b1) < 1e-8);
    }

    #[test]
    fn stalled_inner_loop_reports_failure() {
        let part = GamePartition::uniform(1, 1, BoxSet::cube(1, -1e6, 1e6).unwrap()).unwrap();
        let bad = LocalSolver::ProjectedGradient {
            gradient: Arc::new(|xi: &[f64], _y: &[f64]| vec![xi[0] - 1e5]),
            step: 1e-6,
            tol: 1e-12,
            max_iters: 10,
        };
        let op = best_response_operator(&part, vec![bad], 0.5, 0.0).unwrap();
        assert!(matches!(op.step(&[0.0], &[0.0]), Err(AlgorithmError::BestResponseFailed { agent: 0, .. })));
    }

    #[test]
    fn metadata_is_validated() {
        let step: StepFn<f64> = Arc::new(|u: &[f64], _y: &[f64]| Ok(u.to_vec()));
        assert!(AlgorithmOperator::new("x", 1, 1, step.clone(), 1.0, 0.0, Matrix::identity(1)).is_err());
        assert!(AlgorithmOperator::new("x", 1, 1, step.clone(), 0.5, -1.0, Matrix::identity(1)).is_err());
        assert!(AlgorithmOperator::new("x", 1, 1, step.clone(), 0.5, 0.0, Matrix::from_diagonal(&[-1.0])).is_err());
        let op = AlgorithmOperator::new("x", 2, 1, Arc::new(|u: &[f64], _y: &[f64]| Ok(u.to_vec())), 0.5, 0.0, Matrix::from_diagonal(&[4.0, 1.0]))
            .unwrap();
        assert_eq!(op.p_norm(&[1.0, 0.0]), 2.0);
        assert_eq!((op.lambda_min_p(), op.lambda_max_p()), (1.0, 4.0));
    }

    #[test]
    fn output_lipschitz_probe_for_prox_grad() {
        // F(u, y) = u + 2y ⇒ ℓ_T = 2γ
        let p = EquilibriumProblem::new(
            1,
            1,
            Arc::new(|u: &[f64], y: &[f64]| vec![u[0] + 2.0 * y[0]]),
            identity_resolvent(),
            ProblemConstants { lipschitz_f: 1.0, strong_monotonicity: 1.0, lipschitz_solution: 0.0, lipschitz_output: 2.0 },
        )
        .unwrap();
        let op = prox_grad_operator(&p, 0.5).unwrap();
        let set = BoxSet::cube(1, -3.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = probe_output_lipschitz(&op, &set, &set, 200, &mut rng).unwrap();
        assert!((l - op.ell_t()).abs() < 1e-9);
    }
}
