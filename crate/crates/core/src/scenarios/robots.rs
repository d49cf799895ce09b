//! Unicycle robots playing a quadratic tracking/connectivity game.
//!
//! Agent `i` steers toward its position command `u_i` with the inner law
//! `v = k₁‖r − u‖cos φ`, `p = −k₁ cos φ sin φ − k₂ φ`, so that in closed loop the
//! distance decays as `ρ̇ = −k₁ρ cos²φ` and the heading error as `φ̇ = −k₂φ`.
//! The steady-state map is `h(u) = u`. Agent costs are
//! `J_i = ‖r_i − r̄_i‖² + c Σ_{j≠i} ‖r_i − r_j‖²`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algorithms::{best_response_operator, AlgorithmOperator, LocalSolver};
use crate::certificates::CertificateBundle;
use crate::equilibrium::{
    box_resolvent, game_pseudo_gradient, EquilibriumProblem, GamePartition, LocalGradient, LocalJacobian,
    ProblemConstants,
};
use crate::linalg::Matrix;
use crate::plant::{BoxSet, KFunction, LyapunovCertificate, PlantDims, PlantModel};
use crate::simulator::{ClosedLoopConfig, SolutionOracle};

use super::ScenarioError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotScenario {
    pub targets: Vec<[f64; 2]>,
    /// Initial `(a, b, θ)` per agent; the initial command is the initial position.
    pub initial: Vec<[f64; 3]>,
    pub k1: f64,
    pub k2: f64,
    /// Weight `c` of the pairwise connectivity term.
    pub coupling: f64,
    pub box_lower: [f64; 2],
    pub box_upper: [f64; 2],
    pub tau: f64,
    pub eps: f64,
}

impl Default for RobotScenario {
    fn default() -> Self {
        Self {
            targets: vec![[4.0, 0.0], [-4.0, 0.0], [0.0, 4.0], [0.0, -4.0]],
            initial: vec![[-2.0, -3.0, 0.0], [3.0, 2.0, 1.0], [-1.0, 4.5, -2.0], [2.0, -4.0, 2.5]],
            k1: 1.0,
            k2: 0.5,
            coupling: 0.25,
            box_lower: [-5.0, -6.0],
            box_upper: [10.0, 6.0],
            tau: 0.5,
            eps: 1.0,
        }
    }
}

pub struct RobotSetup {
    pub plant: PlantModel<f64>,
    pub problem: EquilibriumProblem<f64>,
    pub operator: AlgorithmOperator<f64>,
    /// Nominal bundle: position-only quadratic `V = Σ‖r_i − u_i‖²` with `μ = 2k₁`.
    pub bundle: CertificateBundle<f64>,
    pub oracle: SolutionOracle<f64>,
    pub partition: GamePartition<f64>,
    /// Unconstrained equilibrium `u_i = (r̄_i + c N r̄_mean)/(1 + cN)`.
    pub equilibrium: Vec<f64>,
    pub config: ClosedLoopConfig<f64>,
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Heading error `φ = π + θ − atan2(b − u_b, a − u_a)`, wrapped.
pub fn heading_error(state: &[f64], command: &[f64]) -> f64 {
    wrap_angle(PI + state[2] - (state[1] - command[1]).atan2(state[0] - command[0]))
}

/// Inner-loop unicycle vector field for one agent.
pub fn unicycle_field(state: &[f64], command: &[f64], k1: f64, k2: f64) -> [f64; 3] {
    let phi = heading_error(state, command);
    let dist = ((state[0] - command[0]).powi(2) + (state[1] - command[1]).powi(2)).sqrt();
    let v = k1 * dist * phi.cos();
    let p = -k1 * phi.cos() * phi.sin() - k2 * phi;
    [v * state[2].cos(), v * state[2].sin(), p]
}

/// Closed-form equilibrium of the unconstrained game.
pub fn closed_form_equilibrium(targets: &[[f64; 2]], coupling: f64) -> Vec<f64> {
    let n = targets.len() as f64;
    let sum = targets.iter().fold([0.0, 0.0], |acc, t| [acc[0] + t[0], acc[1] + t[1]]);
    // stationarity: (1 + cN) u_i − c Σu = r̄_i and Σu = Σr̄
    targets
        .iter()
        .flat_map(|t| (0..2).map(move |d| (t[d] + coupling * sum[d]) / (1.0 + coupling * n)))
        .collect()
}

pub fn build_robots(scn: &RobotScenario) -> Result<RobotSetup, ScenarioError> {
    let n = scn.targets.len();
    if n == 0 || scn.initial.len() != n {
        return Err(ScenarioError::Invalid("need one initial state per target".into()));
    }
    if !(scn.k1 > 0.0 && scn.k2 > 0.0 && scn.coupling >= 0.0) {
        return Err(ScenarioError::Invalid("gains must be positive and coupling nonnegative".into()));
    }
    let local = BoxSet::new(scn.box_lower.to_vec(), scn.box_upper.to_vec())?;
    let partition = GamePartition::uniform(n, 2, local.clone())?;
    let joint = partition.joint_box();
    let (k1, k2, c) = (scn.k1, scn.k2, scn.coupling);

    let plant = PlantModel::new(
        PlantDims { state: 3 * n, input: 2 * n, disturbance: 0, output: 2 * n },
        move |x: &[f64], u: &[f64], _w: &[f64]| {
            (0..n).flat_map(|i| unicycle_field(&x[3 * i..3 * i + 3], &u[2 * i..2 * i + 2], k1, k2)).collect()
        },
        move |x: &[f64], _w: &[f64]| (0..n).flat_map(|i| [x[3 * i], x[3 * i + 1]]).collect(),
        move |u: &[f64], _w: &[f64]| (0..n).flat_map(|i| [u[2 * i], u[2 * i + 1], PI]).collect(),
        joint.clone(),
        BoxSet::empty(),
    )?
    .with_lyapunov(move |x: &[f64], u: &[f64], _w: &[f64]| {
        (0..n).map(|i| (x[3 * i] - u[2 * i]).powi(2) + (x[3 * i + 1] - u[2 * i + 1]).powi(2)).sum()
    });

    let targets = scn.targets.clone();
    let mut grad_u: Vec<LocalGradient<f64>> = Vec::with_capacity(n);
    let mut grad_y: Vec<LocalGradient<f64>> = Vec::with_capacity(n);
    let mut jac: Vec<LocalJacobian<f64>> = Vec::with_capacity(n);
    let mut solvers = Vec::with_capacity(n);
    for i in 0..n {
        let ti = targets[i];
        grad_u.push(Arc::new(|_ui: &[f64], _y: &[f64]| vec![0.0, 0.0]));
        grad_y.push(Arc::new(move |_ui: &[f64], y: &[f64]| {
            (0..2)
                .map(|d| {
                    let own = y[2 * i + d];
                    let pull: f64 = (0..n).filter(|&j| j != i).map(|j| own - y[2 * j + d]).sum();
                    2.0 * (own - ti[d]) + 2.0 * c * pull
                })
                .collect()
        }));
        jac.push(Arc::new(|_ui: &[f64]| Matrix::identity(2)));
        solvers.push(LocalSolver::ClosedForm(Arc::new(move |y: &[f64]| {
            (0..2)
                .map(|d| {
                    let others: f64 = (0..n).filter(|&j| j != i).map(|j| y[2 * j + d]).sum();
                    (ti[d] + c * others) / (1.0 + c * (n as f64 - 1.0))
                })
                .collect()
        })));
    }
    let f = game_pseudo_gradient(&partition, grad_u, grad_y, jac)?;
    // F̃(u) = ((2 + 2cN) I − 2c 11ᵀ) u − 2r̄: eigenvalues 2 and 2 + 2cN
    let nf = n as f64;
    let constants = ProblemConstants {
        lipschitz_f: 2.0 + 2.0 * c * nf,
        strong_monotonicity: 2.0,
        lipschitz_solution: 0.0,
        lipschitz_output: 2.0 + 2.0 * c * nf,
    };
    let problem = EquilibriumProblem::new(2 * n, 2 * n, f, box_resolvent(joint), constants)?;

    let modulus = 1.0 + c * (nf - 1.0);
    let c_t = c * (nf - 1.0) / modulus;
    // implicit-function bound per agent, stacked over N agents
    let ell_t = nf.sqrt() * c * (nf - 1.0).sqrt() / modulus;
    let operator = best_response_operator(&partition, solvers, c_t, ell_t)?;

    let nominal = LyapunovCertificate {
        mu: 2.0 * k1,
        alpha1: 1.0,
        alpha2: 1.0,
        ell_g: 1.0,
        ell_x: 1.0,
        sigma_c: KFunction::quadratic(1.0),
    };
    let bundle = CertificateBundle::new(&nominal, 0.0, &operator)?;
    let gamma = constants.strong_monotonicity / constants.lipschitz_f.powi(2);
    let oracle = SolutionOracle::fixed_point(problem.clone(), &plant, gamma);

    let x0: Vec<f64> = scn.initial.iter().flatten().copied().collect();
    let u0: Vec<f64> = scn.initial.iter().flat_map(|s| [s[0], s[1]]).collect();
    let config = ClosedLoopConfig::new(scn.tau, scn.eps, 60, u0, x0);
    Ok(RobotSetup {
        plant,
        problem,
        operator,
        bundle,
        oracle,
        partition,
        equilibrium: closed_form_equilibrium(&scn.targets, c),
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::plant::{integrate_hold, DisturbanceSignal};
    use crate::simulator::run_sampled_data;

    #[test]
    fn equilibrium_of_shipped_targets() {
        let ne = closed_form_equilibrium(&RobotScenario::default().targets, 0.25);
        assert_eq!(ne, vec![2.0, 0.0, -2.0, 0.0, 0.0, 2.0, 0.0, -2.0]);
        let unit = closed_form_equilibrium(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], 0.25);
        assert_eq!(unit, vec![0.5, 0.0, -0.5, 0.0, 0.0, 0.5, 0.0, -0.5]);
    }

    #[test]
    fn single_agent_tracks_clamped_target() {
        let scn = RobotScenario {
            targets: vec![[12.0, 1.0]],
            initial: vec![[0.0, 0.0, 0.0]],
            coupling: 0.0,
            ..RobotScenario::default()
        };
        let setup = build_robots(&scn).unwrap();
        let (u, _) = setup.oracle.solve(&[], None).unwrap();
        assert!(linalg::dist(&u, &[10.0, 1.0]) < 1e-8);
        assert_eq!(setup.operator.step(&[0.0, 0.0], &[3.0, 3.0]).unwrap(), vec![10.0, 1.0]);
    }

    #[test]
    fn best_response_of_agent_one() {
        let scn = RobotScenario {
            targets: vec![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
            ..RobotScenario::default()
        };
        let setup = build_robots(&scn).unwrap();
        let y = [9.0, 9.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0];
        let t = setup.operator.step(&[0.0; 8], &y).unwrap();
        assert!((t[0] - 1.5 / 3.5).abs() < 1e-12 && t[1].abs() < 1e-12);
        // grid refinement oracle for argmin ‖ξ − r̄₁‖² + 0.25 Σ‖ξ − r_j‖²
        let cost = |a: f64, b: f64| {
            (a - 1.0).powi(2) + b * b + 0.25 * ((a + 1.0).powi(2) + b * b + a * a + (b - 1.0).powi(2) + a * a + (b + 1.0).powi(2))
        };
        let (mut best, mut center, mut width) = ((0.0, 0.0), (0.0, 0.0), 2.0);
        for _ in 0..30 {
            let mut bc = f64::INFINITY;
            for i in -10..=10 {
                for j in -10..=10 {
                    let p = (center.0 + width * i as f64 / 10.0, center.1 + width * j as f64 / 10.0);
                    if cost(p.0, p.1) < bc {
                        bc = cost(p.0, p.1);
                        best = p;
                    }
                }
            }
            center = best;
            width *= 0.3;
        }
        // a flat minimum limits the grid to about √ε_mach
        assert!((best.0 - t[0]).abs() < 1e-6 && (best.1 - t[1]).abs() < 1e-6);
    }

    #[test]
    fn all_others_at_target_gives_target() {
        let setup = build_robots(&RobotScenario::default()).unwrap();
        let y = [4.0, 0.0, 4.0, 0.0, 4.0, 0.0, 4.0, 0.0];
        let t = setup.operator.step(&[0.0; 8], &y).unwrap();
        assert!((t[0] - 4.0).abs() < 1e-12 && t[1].abs() < 1e-12);
    }

    #[test]
    fn best_response_and_prox_grad_share_the_equilibrium() {
        let setup = build_robots(&RobotScenario::default()).unwrap();
        let (u_pg, _) = setup.oracle.solve(&[], None).unwrap();
        let mut u = vec![0.0; 8];
        for _ in 0..200 {
            u = setup.operator.step(&u, &u).unwrap();
        }
        assert!(linalg::dist(&u, &u_pg) < 1e-6);
        assert!(linalg::dist(&u, &setup.equilibrium) < 1e-6);
    }

    #[test]
    fn agent_at_command_with_aligned_heading_stays() {
        let setup = build_robots(&RobotScenario::default()).unwrap();
        let u = [1.0, 2.0, -3.0, 0.5, 0.0, 0.0, 4.0, -4.0];
        let x0 = setup.plant.steady_state(&u, &[]);
        let x = integrate_hold(&setup.plant, &x0, &u, &DisturbanceSignal::constant(vec![]), 0.0, 5.0, 100).unwrap();
        assert!(linalg::dist(&x, &x0) < 1e-12);
    }

    #[test]
    fn inner_loop_converges_under_constant_command() {
        let setup = build_robots(&RobotScenario::default()).unwrap();
        let u = [2.0, 0.0, -2.0, 0.0, 0.0, 2.0, 0.0, -2.0];
        let x = integrate_hold(&setup.plant, &setup.config.x0, &u, &DisturbanceSignal::constant(vec![]), 0.0, 30.0, 3000)
            .unwrap();
        for i in 0..4 {
            let pos = [x[3 * i], x[3 * i + 1]];
            // heading error is ill-conditioned once ρ ≈ 0, so only positions are checked
            assert!(linalg::dist(&pos, &u[2 * i..2 * i + 2]) < 1e-4, "agent {i}");
        }
    }

    #[test]
    fn closed_loop_reaches_equilibrium() {
        let setup = build_robots(&RobotScenario::default()).unwrap();
        let log = run_sampled_data(&setup.plant, &setup.operator, &DisturbanceSignal::constant(vec![]), &setup.oracle, &setup.config)
            .unwrap();
        let last = log.last().unwrap();
        assert!(linalg::dist(&last.u, &setup.equilibrium) < 1e-3, "‖δu‖ = {}", last.du_norm());
    }

    #[test]
    fn wrap_angle_range() {
        for a in [-10.0, -PI, 0.0, PI, 3.5 * PI, 7.0] {
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            assert!(((a - w) / (2.0 * PI)).fract().abs() < 1e-12 || ((a - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-12);
        }
    }
}
