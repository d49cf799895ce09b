//! Diagonal stable LTI plants with a quadratic feedback-optimization problem.
//!
//! Plant `ẋ = −diag(a) x + B u + E w`, `y = C x`, so `x_ss = diag(a)⁻¹(Bu + Ew)`
//! and `h(u, w) = G u + K w` with `G = C diag(a)⁻¹ B`, `K = C diag(a)⁻¹ E`.
//! Cost `½uᵀHu + cᵀu + (q/2)‖y‖²` over a box gives `F(u, y) = Hu + c + q Gᵀy`.
//! With `V = δxᵀ diag(ω) δx` all certificate constants are explicit.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{prox_grad_operator, AlgorithmOperator};
use crate::certificates::CertificateBundle;
use crate::equilibrium::{box_resolvent, EquilibriumProblem, ProblemConstants};
use crate::linalg::{self, Matrix};
use crate::plant::{BoxSet, DisturbanceSignal, KFunction, LyapunovCertificate, PlantDims, PlantModel};
use crate::simulator::{ClosedLoopConfig, SolutionOracle};

use super::ScenarioError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtiScenario {
    /// Decay rates `a_i > 0`.
    pub decay: Vec<f64>,
    /// `B`, row-major `n_x × n_u`.
    pub b: Vec<f64>,
    /// `E`, row-major `n_x × n_w`.
    pub e: Vec<f64>,
    /// `C`, row-major `n_y × n_x`.
    pub c: Vec<f64>,
    pub n_u: usize,
    pub n_w: usize,
    pub n_y: usize,
    /// `H`, row-major `n_u × n_u`, symmetric positive definite.
    pub cost_h: Vec<f64>,
    pub cost_c: Vec<f64>,
    pub output_weight: f64,
    /// Input box; `null` entries are unbounded.
    #[serde(with = "super::bounds::lower")]
    pub input_lower: Vec<f64>,
    #[serde(with = "super::bounds::upper")]
    pub input_upper: Vec<f64>,
    pub disturbance_lower: Vec<f64>,
    pub disturbance_upper: Vec<f64>,
    /// Diagonal Lyapunov weights `ω`; `None` means `ω = 1`.
    #[serde(default)]
    pub lyapunov_weights: Option<Vec<f64>>,
    /// Prox-grad step; `None` picks `m/ℓ²`.
    #[serde(default)]
    pub step: Option<f64>,
}

impl LtiScenario {
    /// Scalar plant `ẋ = −a x + b u + w`, `y = x`, cost `½h u² + c u + (q/2) y²`.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(a: f64, b: f64, h: f64, c: f64, q: f64, u_box: (f64, f64), w_box: (f64, f64)) -> Self {
        Self {
            decay: vec![a],
            b: vec![b],
            e: vec![1.0],
            c: vec![1.0],
            n_u: 1,
            n_w: 1,
            n_y: 1,
            cost_h: vec![h],
            cost_c: vec![c],
            output_weight: q,
            input_lower: vec![u_box.0],
            input_upper: vec![u_box.1],
            disturbance_lower: vec![w_box.0],
            disturbance_upper: vec![w_box.1],
            lyapunov_weights: None,
            step: None,
        }
    }

    /// Random instance with `n_x, n_u ≤ 10`, used for randomized property checks.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let n_x = rng.gen_range(1..=6);
        let n_u = rng.gen_range(1..=4);
        let n_w = rng.gen_range(1..=3);
        let mut mat = |r: usize, c: usize, s: f64| (0..r * c).map(|_| rng.gen_range(-s..=s)).collect::<Vec<f64>>();
        let b = mat(n_x, n_u, 1.0);
        let e = mat(n_x, n_w, 1.0);
        let c = mat(n_x, n_x, 1.0);
        let root = mat(n_u, n_u, 1.0);
        let cost_c = mat(n_u, 1, 1.0);
        let decay = (0..n_x).map(|_| rng.gen_range(0.5..3.0)).collect();
        let r = Matrix::from_row_slice(n_u, n_u, &root);
        let mut h = r.transpose().mul(&r);
        for i in 0..n_u {
            h[(i, i)] += rng.gen_range(0.5..2.0);
        }
        let h = (0..n_u).flat_map(|i| (0..n_u).map(move |j| (i, j))).map(|(i, j)| h[(i, j)]).collect();
        Self {
            decay,
            b,
            e,
            c,
            n_u,
            n_w,
            n_y: n_x,
            cost_h: h,
            cost_c,
            output_weight: rng.gen_range(0.1..1.0),
            input_lower: vec![-3.0; n_u],
            input_upper: vec![3.0; n_u],
            disturbance_lower: vec![-2.0; n_w],
            disturbance_upper: vec![2.0; n_w],
            lyapunov_weights: None,
            step: None,
        }
    }

    pub fn n_x(&self) -> usize {
        self.decay.len()
    }
}

pub struct LtiSetup {
    pub plant: PlantModel<f64>,
    pub problem: EquilibriumProblem<f64>,
    pub operator: AlgorithmOperator<f64>,
    pub bundle: CertificateBundle<f64>,
    pub oracle: SolutionOracle<f64>,
    /// `h_u = G`.
    pub g: Matrix<f64>,
    /// `h_w = K`.
    pub k: Matrix<f64>,
    pub step: f64,
    /// Largest decay rate, which sets the RK4 substep.
    pub fastest_decay: f64,
}

/// Largest `a h` per RK4 substep; keeps the stiff modes accurate as well as stable.
pub const MAX_DECAY_STEP: f64 = 0.5;

impl LtiSetup {
    /// Loop configuration starting at rest at the origin (projected into the box).
    ///
    /// Substeps grow with `τ` so that `h · max a ≤ MAX_DECAY_STEP`.
    pub fn config(&self, tau: f64, eps: f64, horizon: usize) -> ClosedLoopConfig<f64> {
        let u0 = self.plant.input_set().project(&vec![0.0; self.plant.input_dim()]);
        let mut cfg = ClosedLoopConfig::new(tau, eps, horizon, u0, vec![0.0; self.plant.state_dim()]);
        let needed = (tau * self.fastest_decay / MAX_DECAY_STEP).ceil();
        if needed.is_finite() && needed > cfg.substeps as f64 {
            cfg.substeps = needed as usize;
        }
        cfg
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), ScenarioError> {
    if expected == got {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(format!("{what}: expected {expected} entries, got {got}")))
    }
}

pub fn build_lti(scn: &LtiScenario) -> Result<LtiSetup, ScenarioError> {
    let (n_x, n_u, n_w, n_y) = (scn.n_x(), scn.n_u, scn.n_w, scn.n_y);
    if n_x == 0 || n_u == 0 || n_y == 0 {
        return Err(ScenarioError::Invalid("dimensions must be positive".into()));
    }
    if let Some(a) = scn.decay.iter().find(|a| !(**a > 0.0)) {
        return Err(ScenarioError::UnstableOpenLoop(format!("decay rate {a} is not positive")));
    }
    check_len("B", n_x * n_u, scn.b.len())?;
    check_len("E", n_x * n_w, scn.e.len())?;
    check_len("C", n_y * n_x, scn.c.len())?;
    check_len("H", n_u * n_u, scn.cost_h.len())?;
    check_len("c", n_u, scn.cost_c.len())?;
    let weights = scn.lyapunov_weights.clone().unwrap_or_else(|| vec![1.0; n_x]);
    check_len("Lyapunov weights", n_x, weights.len())?;
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(ScenarioError::Invalid("Lyapunov weights must be positive".into()));
    }
    if !(scn.output_weight >= 0.0) {
        return Err(ScenarioError::Invalid("output weight must be nonnegative".into()));
    }

    let a = scn.decay.clone();
    let b = Matrix::from_row_slice(n_x, n_u, &scn.b);
    let e = Matrix::from_row_slice(n_x, n_w, &scn.e);
    let c = Matrix::from_row_slice(n_y, n_x, &scn.c);
    let a_inv = Matrix::from_diagonal(&a.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let s_u = a_inv.mul(&b);
    let s_w = a_inv.mul(&e);
    let g = c.mul(&s_u);
    let k = c.mul(&s_w);
    let input_set = BoxSet::new(scn.input_lower.clone(), scn.input_upper.clone())?;
    let dist_set = BoxSet::new(scn.disturbance_lower.clone(), scn.disturbance_upper.clone())?;

    let (a1, b1, e1, c1, su, sw, w1) = (a.clone(), b.clone(), e.clone(), c.clone(), s_u.clone(), s_w.clone(), weights.clone());
    let x_ss = move |u: &[f64], w: &[f64]| linalg::add(&su.mul_vec(u), &sw.mul_vec(w));
    let x_ss_v = x_ss.clone();
    let plant = PlantModel::new(
        PlantDims { state: n_x, input: n_u, disturbance: n_w, output: n_y },
        move |x: &[f64], u: &[f64], w: &[f64]| {
            let drive = linalg::add(&b1.mul_vec(u), &e1.mul_vec(w));
            (0..x.len()).map(|i| -a1[i] * x[i] + drive[i]).collect()
        },
        move |x: &[f64], _w: &[f64]| c1.mul_vec(x),
        x_ss,
        input_set.clone(),
        dist_set,
    )?
    .with_lyapunov(move |x: &[f64], u: &[f64], w: &[f64]| {
        let d = linalg::sub(x, &x_ss_v(u, w));
        d.iter().zip(&w1).map(|(v, o)| o * v * v).sum()
    });

    let h = Matrix::from_row_slice(n_u, n_u, &scn.cost_h);
    if !h.is_symmetric(1e-12) {
        return Err(ScenarioError::Invalid("H must be symmetric".into()));
    }
    let q = scn.output_weight;
    let mut reduced = g.transpose().mul(&g);
    for i in 0..n_u {
        for j in 0..n_u {
            reduced[(i, j)] = h[(i, j)] + q * reduced[(i, j)];
        }
    }
    let ev = reduced.symmetric_eigenvalues();
    let (m, l) = (ev[0], ev[n_u - 1]);
    if !(m > 0.0) {
        return Err(ScenarioError::Invalid("reduced cost is not strongly convex".into()));
    }
    let g_norm = g.spectral_norm();
    let constants = ProblemConstants {
        lipschitz_f: l,
        strong_monotonicity: m,
        // ℓ_w / m with ℓ_w = q‖GᵀK‖
        lipschitz_solution: q * g.transpose().mul(&k).spectral_norm() / m,
        lipschitz_output: q * g_norm,
    };
    let (h1, cc, g1) = (h.clone(), scn.cost_c.clone(), g.clone());
    let f = Arc::new(move |u: &[f64], y: &[f64]| {
        let hu = linalg::add(&h1.mul_vec(u), &cc);
        linalg::axpy(&hu, q, &g1.tr_mul_vec(y))
    });
    let problem = EquilibriumProblem::new(n_u, n_y, f, box_resolvent(input_set), constants)?;
    let step = scn.step.unwrap_or(m / (l * l));
    let operator = prox_grad_operator(&problem, step)?;

    // V̇ ≤ −2 a_min V + 2‖Ω^{1/2}δx‖‖Ω^{1/2} S_w ẇ‖ ≤ −a_min V + ‖Ω^{1/2}S_w‖² z²/a_min
    let a_min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let sqrt_w = Matrix::from_diagonal(&weights.iter().map(|w| w.sqrt()).collect::<Vec<_>>());
    let sw_gain = sqrt_w.mul(&s_w).spectral_norm().powi(2) / a_min;
    let sigma_c = if sw_gain > 0.0 { KFunction::quadratic(sw_gain) } else { KFunction::quadratic(1e-12) };
    let cert = LyapunovCertificate {
        mu: a_min,
        alpha1: weights.iter().copied().fold(f64::INFINITY, f64::min),
        alpha2: weights.iter().copied().fold(0.0, f64::max),
        ell_g: c.spectral_norm(),
        ell_x: s_u.spectral_norm().max(1e-12),
        sigma_c,
    };
    cert.validate()?;
    let bundle = CertificateBundle::new(&cert, constants.lipschitz_solution, &operator)?;
    let oracle = SolutionOracle::fixed_point(problem.clone(), &plant, m / (l * l));
    let fastest_decay = scn.decay.iter().copied().fold(0.0, f64::max);
    Ok(LtiSetup { plant, problem, operator, bundle, oracle, g, k, step, fastest_decay })
}

/// Sinusoidal disturbance inside the box of `scn`, one frequency per channel.
pub fn sinusoidal_disturbance(scn: &LtiScenario, amplitude: f64, omega: &[f64]) -> Result<DisturbanceSignal<f64>, ScenarioError> {
    let n = scn.n_w;
    let offset: Vec<f64> = (0..n).map(|i| 0.5 * (scn.disturbance_lower[i] + scn.disturbance_upper[i])).collect();
    let half: Vec<f64> = (0..n).map(|i| 0.5 * (scn.disturbance_upper[i] - scn.disturbance_lower[i])).collect();
    let amp = half.iter().map(|h| amplitude.min(*h)).collect();
    let om = (0..n).map(|i| omega[i % omega.len().max(1)]).collect();
    Ok(DisturbanceSignal::sinusoid(offset, amp, om, vec![0.0; n])?)
}

/// Slow plant with a fast inverse-response mode, run with the longest admissible
/// step. `G = 1/0.2 − 50/20 = 2.5`, `m = 1`, `ℓ = 1 + G² = 7.25`, `γ = 1.99 m/ℓ²`.
/// At `τ = 0.05`, `ε = 1` the sampled loop has a real eigenvalue near 1.148;
/// the certified region starts at `τ̲ = ln(100)/0.2 ≈ 23`.
pub fn instability_demo() -> LtiScenario {
    let (h, g) = (1.0, 2.5);
    let l = h + g * g;
    LtiScenario {
        decay: vec![0.2, 20.0],
        b: vec![1.0, 1.0],
        e: vec![1.0, 0.0],
        c: vec![1.0, -50.0],
        n_u: 1,
        n_w: 1,
        n_y: 1,
        cost_h: vec![h],
        cost_c: vec![-1.0],
        output_weight: 1.0,
        input_lower: vec![f64::NEG_INFINITY],
        input_upper: vec![f64::INFINITY],
        disturbance_lower: vec![0.0],
        disturbance_upper: vec![0.0],
        // V = δx₁² + 100 δx₂² puts τ̲ = ln(100)/μ ≫ τ
        lyapunov_weights: Some(vec![1.0, 100.0]),
        step: Some(1.99 * h / (l * l)),
    }
}
