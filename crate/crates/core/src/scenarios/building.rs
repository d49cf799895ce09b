//! Reduced-order thermal model of a small office building.
//!
//! Rooms exchange heat with layered exterior walls, the ground, the ambient air
//! and each other. In hours, Wh/K and W the heat balance is
//! `C ẋ = −L(u_a) x + B u + E(u_a) w`, where the air flow `u_a` enters
//! bilinearly through `u_a g_v (T_amb − T_room)`. Inputs are normalized to
//! `[0, 1]`: radiators per room, then AHU air flow, heating and cooling.
//! Disturbances are `[solar, T_amb, T_ground, occupant gains per room]`;
//! measurements are room temperatures plus ambient and ground.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algorithms::{prox_grad_operator, prox_grad_potential_operator, AlgorithmOperator};
use crate::certificates::CertificateBundle;
use crate::equilibrium::{
    box_resolvent, dist_to_interval_grad, solve_offline_from, EquilibriumError, EquilibriumProblem, ProblemConstants,
};
use crate::linalg;
use crate::plant::{BoxSet, DisturbanceSignal, KFunction, LyapunovCertificate, PlantDims, PlantModel};
use crate::simulator::{ClosedLoopConfig, SolutionOracle, ORACLE_TOL};

use super::occupancy::{sample_occupancy, OccupancyConfig, OccupancyRealization};
use super::ScenarioError;

/// Specific heat of air, J/(kg K), i.e. W per (kg/s · K).
pub const AIR_HEAT_CAPACITY: f64 = 1005.0;

/// Points of the air-flow grid used for suprema over `u_a ∈ [0, 1]`.
const AIRFLOW_GRID: usize = 201;

/// Relative margin added to grid suprema.
const GRID_MARGIN: f64 = 1.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weather {
    pub ambient_mean: f64,
    pub ambient_amplitude: f64,
    /// Hour of the daily ambient maximum.
    pub ambient_peak_hour: f64,
    /// Peak horizontal solar flux, W/m².
    pub solar_peak: f64,
    pub sunrise: f64,
    pub sunset: f64,
    pub ground: f64,
}

impl Default for Weather {
    /// A clear spring day in central Europe.
    fn default() -> Self {
        Self {
            ambient_mean: 11.0,
            ambient_amplitude: 6.0,
            ambient_peak_hour: 15.0,
            solar_peak: 650.0,
            sunrise: 6.0,
            sunset: 20.0,
            ground: 10.0,
        }
    }
}

impl Weather {
    pub fn ambient(&self, t: f64) -> (f64, f64) {
        let om = 2.0 * PI / 24.0;
        let arg = om * (t - self.ambient_peak_hour);
        (self.ambient_mean + self.ambient_amplitude * arg.cos(), -self.ambient_amplitude * om * arg.sin())
    }

    /// Half-sine solar flux between sunrise and sunset.
    pub fn solar(&self, t: f64) -> (f64, f64) {
        let h = t.rem_euclid(24.0);
        let len = self.sunset - self.sunrise;
        if len <= 0.0 || h <= self.sunrise || h >= self.sunset {
            return (0.0, 0.0);
        }
        let om = PI / len;
        let arg = om * (h - self.sunrise);
        (self.solar_peak * arg.sin(), self.solar_peak * om * arg.cos())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildingScenario {
    pub rooms: usize,
    /// Thermal layers per exterior wall.
    pub wall_layers: usize,
    /// Room air plus furniture, Wh/K.
    pub room_capacitance: f64,
    /// Per wall layer, Wh/K.
    pub wall_capacitance: f64,
    /// Conductances in W/K.
    pub room_wall_conductance: f64,
    pub wall_layer_conductance: f64,
    pub wall_ambient_conductance: f64,
    pub room_ambient_conductance: f64,
    pub room_ground_conductance: f64,
    pub room_room_conductance: f64,
    /// Pairs of rooms sharing an interior wall.
    pub adjacency: Vec<[usize; 2]>,
    /// Floor area per room, m².
    pub floor_area: Vec<f64>,
    /// Radiator heat gain at full scale, W/m².
    pub radiator_flux: f64,
    /// kg/s at full scale.
    pub max_airflow: f64,
    /// Fraction of the supply-air enthalpy exchange reaching the rooms (one minus heat recovery).
    pub ventilation_effectiveness: f64,
    /// W at full scale.
    pub ahu_heating: f64,
    pub ahu_cooling: f64,
    /// Effective window area per room, m².
    pub window_area: Vec<f64>,
    /// Effective solar-absorbing area of each exterior wall, m².
    pub wall_solar_area: f64,
    pub comfort: [f64; 2],
    /// The controller penalizes distance to the comfort band shrunk by this
    /// margin on both sides, K. Metrics always use the full band.
    pub comfort_backoff: f64,
    /// Diagonal of `H` in `½(Hu + c)ᵀu`, per normalized input.
    pub cost_h: Vec<f64>,
    pub cost_c: Vec<f64>,
    pub eta: f64,
    /// Air flow (normalized) at which the steady-state sensitivity is linearized.
    pub nominal_airflow: f64,
    /// Disturbance at which the air-flow sensitivity is linearized.
    pub nominal_disturbance: Vec<f64>,
    pub weather: Weather,
    pub occupancy: OccupancyConfig,
    /// Admissible disturbance box.
    pub disturbance_lower: Vec<f64>,
    pub disturbance_upper: Vec<f64>,
    pub initial_temperature: f64,
    /// Hours per model time unit; `τ` and all rates are expressed in this unit.
    pub time_unit: f64,
    /// RK4 substeps per sampling interval.
    pub substeps: usize,
    pub tau: f64,
    pub eps: f64,
    pub hours: f64,
    pub step_rule: StepRule,
    /// Prox-grad step; `None` picks the rule's default.
    pub step: Option<f64>,
}

/// Step-size rule of the proximal-gradient controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// General strongly monotone `F`: `γ ∈ (0, 2m/ℓ²)`, default `m/ℓ²`.
    Monotone,
    /// `F` is the gradient of the (linearized) reduced cost: `γ ∈ (0, 2/ℓ)`, default `1/ℓ`.
    Potential,
}

impl Default for BuildingScenario {
    fn default() -> Self {
        Self {
            rooms: 5,
            wall_layers: 2,
            room_capacitance: 900.0,
            wall_capacitance: 1200.0,
            room_wall_conductance: 120.0,
            wall_layer_conductance: 60.0,
            wall_ambient_conductance: 120.0,
            room_ambient_conductance: 25.0,
            room_ground_conductance: 15.0,
            room_room_conductance: 40.0,
            adjacency: vec![[0, 1], [1, 2], [2, 3], [3, 4]],
            floor_area: vec![25.0, 20.0, 30.0, 20.0, 25.0],
            radiator_flux: 50.0,
            max_airflow: 1.0,
            ventilation_effectiveness: 0.4,
            ahu_heating: 1000.0,
            ahu_cooling: 100.0,
            window_area: vec![2.0, 1.0, 1.5, 1.0, 2.0],
            wall_solar_area: 3.0,
            comfort: [20.0, 25.0],
            comfort_backoff: 0.25,
            cost_h: vec![2.0; 8],
            cost_c: vec![1.25, 1.0, 1.5, 1.0, 1.25, 0.3, 1.0, 0.3],
            eta: 20.0,
            nominal_airflow: 0.3,
            nominal_disturbance: vec![200.0, 11.0, 10.0, 300.0, 300.0, 300.0, 300.0, 300.0],
            weather: Weather::default(),
            occupancy: OccupancyConfig::default(),
            disturbance_lower: vec![0.0, -10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            disturbance_upper: vec![1000.0, 35.0, 20.0, 1500.0, 1500.0, 1500.0, 1500.0, 1500.0],
            initial_temperature: 21.0,
            time_unit: 1.0 / 60.0,
            substeps: 2,
            tau: 0.05,
            eps: 1.0,
            hours: 24.0,
            step_rule: StepRule::Potential,
            step: None,
        }
    }
}

impl BuildingScenario {
    pub fn state_dim(&self) -> usize {
        self.rooms * (1 + self.wall_layers)
    }

    pub fn input_dim(&self) -> usize {
        self.rooms + 3
    }

    pub fn disturbance_dim(&self) -> usize {
        3 + self.rooms
    }

    pub fn output_dim(&self) -> usize {
        self.rooms + 2
    }

    pub fn airflow_index(&self) -> usize {
        self.rooms
    }

    pub fn horizon(&self) -> usize {
        (self.hours / (self.tau * self.time_unit)).round() as usize
    }

    /// Model time of an hour-of-day offset.
    pub fn to_model_time(&self, hours: f64) -> f64 {
        hours / self.time_unit
    }

    /// Ventilation conductance per room at full air flow, W/K.
    pub fn ventilation_conductance(&self) -> f64 {
        self.ventilation_effectiveness * self.max_airflow * AIR_HEAT_CAPACITY / self.rooms as f64
    }

    fn wall_index(&self, room: usize, layer: usize) -> usize {
        self.rooms + room * self.wall_layers + layer
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        let r = self.rooms;
        if r == 0 || self.wall_layers == 0 {
            return bad("need at least one room and one wall layer".into());
        }
        for (name, v) in [("floor_area", self.floor_area.len()), ("window_area", self.window_area.len())] {
            if v != r {
                return bad(format!("{name} has {v} entries, expected {r}"));
            }
        }
        if self.cost_c.len() != self.input_dim() || self.cost_h.len() != self.input_dim() {
            return bad(format!("cost vectors need {} entries", self.input_dim()));
        }
        let nw = self.disturbance_dim();
        for (name, v) in [
            ("nominal_disturbance", &self.nominal_disturbance),
            ("disturbance_lower", &self.disturbance_lower),
            ("disturbance_upper", &self.disturbance_upper),
        ] {
            if v.len() != nw {
                return bad(format!("{name} has {} entries, expected {nw}", v.len()));
            }
        }
        if self.adjacency.iter().any(|[a, b]| a >= &r || b >= &r || a == b) {
            return bad("adjacency refers to a missing room or a self-loop".into());
        }
        let caps = [self.room_capacitance, self.wall_capacitance];
        if caps.iter().any(|c| !(*c > 0.0)) {
            return bad("capacitances must be positive".into());
        }
        if !(self.comfort[0] < self.comfort[1]) {
            return bad("comfort band must satisfy T_min < T_max".into());
        }
        if !(self.comfort_backoff >= 0.0 && 2.0 * self.comfort_backoff < self.comfort[1] - self.comfort[0]) {
            return bad("comfort back-off must be nonnegative and leave a nonempty band".into());
        }
        if self.cost_h.iter().any(|h| !(*h > 0.0)) || !(self.eta > 0.0) {
            return bad("H must be positive definite and η positive".into());
        }
        if !(self.tau > 0.0) || !(self.eps > 0.0 && self.eps <= 1.0) || !(self.hours > 0.0) {
            return bad("need τ > 0, 0 < ε ≤ 1 and a positive horizon".into());
        }
        if !(self.time_unit > 0.0) || self.substeps == 0 {
            return bad("time unit and substeps must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.nominal_airflow) {
            return bad("nominal air flow must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Assembled linear-algebra data of the RC network.
#[derive(Clone, Debug)]
pub struct RcNetwork {
    pub rooms: usize,
    pub n: usize,
    /// Capacitances, Wh/K.
    pub capacitance: DVector<f64>,
    /// Conductance matrix at zero air flow.
    pub l0: DMatrix<f64>,
    /// Ventilation conductance per room at full air flow.
    pub g_v: f64,
    /// Heat input per unit of each normalized input (air-flow column zero).
    pub b: DMatrix<f64>,
    /// Heat input per unit disturbance at zero air flow.
    pub e0: DMatrix<f64>,
    /// Hours per model time unit.
    pub time_unit: f64,
}

impl RcNetwork {
    pub fn new(scn: &BuildingScenario) -> Result<Self, ScenarioError> {
        scn.validate()?;
        let (r, n) = (scn.rooms, scn.state_dim());
        let mut cap = DVector::from_element(n, scn.wall_capacitance);
        for i in 0..r {
            cap[i] = scn.room_capacitance;
        }
        let mut l0 = DMatrix::zeros(n, n);
        let mut link = |a: usize, b: usize, g: f64| {
            l0[(a, a)] += g;
            l0[(b, b)] += g;
            l0[(a, b)] -= g;
            l0[(b, a)] -= g;
        };
        for i in 0..r {
            link(i, scn.wall_index(i, 0), scn.room_wall_conductance);
            for l in 1..scn.wall_layers {
                link(scn.wall_index(i, l - 1), scn.wall_index(i, l), scn.wall_layer_conductance);
            }
        }
        for [a, b] in &scn.adjacency {
            link(*a, *b, scn.room_room_conductance);
        }
        let (nu, nw) = (scn.input_dim(), scn.disturbance_dim());
        let mut b = DMatrix::zeros(n, nu);
        let mut e0 = DMatrix::zeros(n, nw);
        for i in 0..r {
            let outer = scn.wall_index(i, scn.wall_layers - 1);
            // boundary conductances
            l0[(i, i)] += scn.room_ambient_conductance + scn.room_ground_conductance;
            l0[(outer, outer)] += scn.wall_ambient_conductance;
            e0[(i, 1)] += scn.room_ambient_conductance;
            e0[(i, 2)] += scn.room_ground_conductance;
            e0[(outer, 1)] += scn.wall_ambient_conductance;
            // solar through windows and on the wall surface
            e0[(i, 0)] += scn.window_area[i];
            e0[(outer, 0)] += scn.wall_solar_area;
            e0[(i, 3 + i)] = 1.0;
            b[(i, i)] = scn.radiator_flux * scn.floor_area[i];
            b[(i, r + 1)] = scn.ahu_heating / r as f64;
            b[(i, r + 2)] = -scn.ahu_cooling / r as f64;
        }
        if scn.room_wall_conductance < 0.0
            || scn.wall_layer_conductance < 0.0
            || scn.wall_ambient_conductance < 0.0
            || scn.room_ambient_conductance < 0.0
            || scn.room_ground_conductance < 0.0
            || scn.room_room_conductance < 0.0
            || scn.ventilation_effectiveness < 0.0
        {
            return Err(ScenarioError::UnstableOpenLoop("negative conductance".into()));
        }
        let net = Self { rooms: r, n, capacitance: cap, l0, g_v: scn.ventilation_conductance(), b, e0, time_unit: scn.time_unit };
        let slowest = net.slowest_rate();
        if !(slowest > 1e-12) {
            return Err(ScenarioError::UnstableOpenLoop(format!(
                "slowest thermal mode has rate {slowest:e}; the network must reach ambient or ground"
            )));
        }
        Ok(net)
    }

    /// `L(u_a)`.
    pub fn l(&self, ua: f64) -> DMatrix<f64> {
        let mut l = self.l0.clone();
        for i in 0..self.rooms {
            l[(i, i)] += ua * self.g_v;
        }
        l
    }

    /// `E(u_a)`.
    pub fn e(&self, ua: f64) -> DMatrix<f64> {
        let mut e = self.e0.clone();
        for i in 0..self.rooms {
            e[(i, 1)] += ua * self.g_v;
        }
        e
    }

    /// Scaled conductance `C^{-1/2} L(u_a) C^{-1/2}`.
    fn scaled_l(&self, ua: f64) -> DMatrix<f64> {
        let l = self.l(ua);
        DMatrix::from_fn(self.n, self.n, |i, j| l[(i, j)] / (self.capacitance[i] * self.capacitance[j]).sqrt())
    }

    /// Smallest decay rate `λ_min(C^{-1/2} L(0) C^{-1/2})` per model time unit.
    pub fn slowest_rate(&self) -> f64 {
        self.scaled_l(0.0).symmetric_eigenvalues().min() * self.time_unit
    }

    /// Largest eigenvalue of `−C^{-1} L(u_a)` per model time unit (negative when Hurwitz).
    pub fn spectral_abscissa(&self, ua: f64) -> f64 {
        -self.scaled_l(ua).symmetric_eigenvalues().min() * self.time_unit
    }

    fn solve(&self, ua: f64, rhs: &DVector<f64>) -> DVector<f64> {
        self.l(ua).cholesky().expect("conductance matrix is positive definite").solve(rhs)
    }

    pub fn steady_state(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        let ua = u[self.rooms];
        let rhs = &self.b * DVector::from_column_slice(u) + self.e(ua) * DVector::from_column_slice(w);
        self.solve(ua, &rhs).as_slice().to_vec()
    }

    /// `ẋ` per model time unit. Written out without temporaries: it is the RK4 hot path.
    pub fn dynamics(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        let ua = u[self.rooms];
        (0..self.n)
            .map(|i| {
                let mut q = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    q -= self.l0[(i, j)] * xj;
                }
                for (j, uj) in u.iter().enumerate() {
                    q += self.b[(i, j)] * uj;
                }
                for (j, wj) in w.iter().enumerate() {
                    q += self.e0[(i, j)] * wj;
                }
                if i < self.rooms {
                    q += ua * self.g_v * (w[1] - x[i]);
                }
                q * self.time_unit / self.capacitance[i]
            })
            .collect()
    }

    /// `∂x_ss/∂u` at `(u, w)`, exact including the bilinear air-flow column.
    pub fn input_sensitivity(&self, u: &[f64], w: &[f64]) -> DMatrix<f64> {
        let ua = u[self.rooms];
        let chol = self.l(ua).cholesky().expect("conductance matrix is positive definite");
        let mut s = chol.solve(&self.b);
        let xs = self.steady_state(u, w);
        let mut rhs = DVector::zeros(self.n);
        for i in 0..self.rooms {
            rhs[i] = self.g_v * (w[1] - xs[i]);
        }
        s.set_column(self.rooms, &chol.solve(&rhs));
        s
    }

    /// `∂x_ss/∂w = L(u_a)^{-1} E(u_a)`.
    pub fn disturbance_sensitivity(&self, ua: f64) -> DMatrix<f64> {
        self.l(ua).cholesky().expect("conductance matrix is positive definite").solve(&self.e(ua))
    }
}

/// Built building scenario.
pub struct BuildingSetup {
    pub scenario: BuildingScenario,
    pub network: RcNetwork,
    pub plant: PlantModel<f64>,
    pub problem: EquilibriumProblem<f64>,
    pub operator: AlgorithmOperator<f64>,
    pub bundle: CertificateBundle<f64>,
    pub lyapunov: LyapunovCertificate<f64>,
    pub oracle: SolutionOracle<f64>,
    /// Linearized room-temperature sensitivity `∂T_rooms/∂u` used in `F`.
    pub g_rooms: DMatrix<f64>,
    pub step: f64,
    pub occupancy: OccupancyRealization,
}

/// `φ₁(u, y) = ½(Hu + c)ᵀu + (η/2) Σ dist(y_i, 𝒯)²` over the room outputs.
pub fn building_cost(scn: &BuildingScenario, u: &[f64], y: &[f64]) -> f64 {
    let energy: f64 = (0..u.len()).map(|i| 0.5 * (scn.cost_h[i] * u[i] + scn.cost_c[i]) * u[i]).sum();
    let comfort: f64 = y[..scn.rooms].iter().map(|t| comfort_violation(scn, *t).powi(2)).sum();
    energy + 0.5 * scn.eta * comfort
}

/// `dist(T, 𝒯)`.
pub fn comfort_violation(scn: &BuildingScenario, t: f64) -> f64 {
    (scn.comfort[0] - t).max(t - scn.comfort[1]).max(0.0)
}

/// Weather plus occupancy on the `[solar, T_amb, T_ground, occupancy…]` layout.
pub fn building_disturbance(scn: &BuildingScenario, occupancy: &OccupancyRealization) -> DisturbanceSignal<f64> {
    compose_disturbance(&scn.weather, occupancy.signal(), scn.time_unit, true)
}

/// As [`building_disturbance`] with the solar channel optionally suppressed
/// (e.g. a disturbance model that does not see solar gains).
/// `unit` converts model time to hours.
pub fn compose_disturbance(weather: &Weather, occ: DisturbanceSignal<f64>, unit: f64, solar: bool) -> DisturbanceSignal<f64> {
    let (w1, w2) = (weather.clone(), weather.clone());
    let (o1, o2) = (occ.clone(), occ);
    let gate = if solar { 1.0 } else { 0.0 };
    let dim = 3 + o1.dim();
    DisturbanceSignal::from_fn(dim, move |t| {
        let h = t * unit;
        let mut v = vec![gate * w1.solar(h).0, w1.ambient(h).0, w1.ground];
        v.extend(o1.value(h));
        v
    })
    .with_derivative(move |t| {
        let h = t * unit;
        let mut v = vec![gate * w2.solar(h).1, w2.ambient(h).1, 0.0];
        v.extend(o2.derivative(h));
        v.iter().map(|d| d * unit).collect()
    })
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Upper bound on `‖(T_amb − T_i^{ss})_i‖` over the input and disturbance box at fixed air flow.
fn ventilation_gap_bound(net: &RcNetwork, ua: f64, d_lo: &[f64], d_hi: &[f64]) -> f64 {
    // T_amb − x_ss,i is affine in (u without air flow, w): bound each row by centre + Σ|coef|·half-width
    let sb = net.l(ua).cholesky().expect("positive definite").solve(&net.b);
    let se = net.disturbance_sensitivity(ua);
    let r = net.rooms;
    (0..r)
        .map(|i| {
            let mut center = 0.0;
            let mut spread = 0.0;
            for j in 0..net.b.ncols() {
                if j == r {
                    continue;
                }
                let c = -sb[(i, j)];
                center += c * 0.5;
                spread += c.abs() * 0.5;
            }
            for j in 0..se.ncols() {
                let c = if j == 1 { 1.0 - se[(i, j)] } else { -se[(i, j)] };
                center += c * 0.5 * (d_lo[j] + d_hi[j]);
                spread += c.abs() * 0.5 * (d_hi[j] - d_lo[j]);
            }
            (center.abs() + spread).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

pub fn build_building(scn: &BuildingScenario) -> Result<BuildingSetup, ScenarioError> {
    let net = RcNetwork::new(scn)?;
    let (r, n, nu, nw, ny) = (scn.rooms, net.n, scn.input_dim(), scn.disturbance_dim(), scn.output_dim());
    let input_set = BoxSet::cube(nu, 0.0, 1.0)?;
    let dist_set = BoxSet::new(scn.disturbance_lower.clone(), scn.disturbance_upper.clone())?;

    let (n1, n2, n3) = (net.clone(), net.clone(), net.clone());
    let cap = net.capacitance.clone();
    let plant = PlantModel::new(
        PlantDims { state: n, input: nu, disturbance: nw, output: ny },
        move |x: &[f64], u: &[f64], w: &[f64]| n1.dynamics(x, u, w),
        move |x: &[f64], w: &[f64]| {
            let mut y = x[..r].to_vec();
            y.extend_from_slice(&w[1..3]);
            y
        },
        move |u: &[f64], w: &[f64]| n2.steady_state(u, w),
        input_set.clone(),
        dist_set,
    )?
    .with_lyapunov(move |x: &[f64], u: &[f64], w: &[f64]| {
        let xs = n3.steady_state(u, w);
        x.iter().zip(&xs).zip(cap.iter()).map(|((a, b), c)| c * (a - b) * (a - b)).sum()
    });

    // Lyapunov certificate for V = δxᵀCδx: C ẋ = −L δx − C S_w ẇ with L ≽ λ C.
    let lambda = net.slowest_rate();
    let grid: Vec<f64> = (0..AIRFLOW_GRID).map(|i| i as f64 / (AIRFLOW_GRID - 1) as f64).collect();
    let sqrt_c = DMatrix::from_diagonal(&net.capacitance.map(f64::sqrt));
    let sw_sup = grid.iter().map(|&ua| spectral_norm(&(&sqrt_c * net.disturbance_sensitivity(ua)))).fold(0.0, f64::max);
    let sigma_gain = GRID_MARGIN * sw_sup * sw_sup / lambda;
    let ell_x = GRID_MARGIN
        * grid
            .iter()
            .map(|&ua| {
                let mut sb = net.l(ua).cholesky().expect("positive definite").solve(&net.b);
                sb.set_column(r, &DVector::zeros(n));
                let mut dv = DMatrix::zeros(n, r);
                for i in 0..r {
                    dv[(i, i)] = net.g_v;
                }
                let vent = spectral_norm(&net.l(ua).cholesky().expect("positive definite").solve(&dv));
                let gap = ventilation_gap_bound(&net, ua, &scn.disturbance_lower, &scn.disturbance_upper);
                (spectral_norm(&sb).powi(2) + (vent * gap).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
    let cmin = net.capacitance.min();
    let cmax = net.capacitance.max();
    let lyapunov = LyapunovCertificate {
        mu: lambda,
        alpha1: cmin,
        alpha2: cmax,
        ell_g: 1.0,
        ell_x,
        sigma_c: KFunction::quadratic(sigma_gain),
    };
    lyapunov.validate()?;

    // FO problem with the sensitivity linearized at the nominal operating point.
    let mut u_nom = vec![0.0; nu];
    u_nom[r] = scn.nominal_airflow;
    let g_full = net.input_sensitivity(&u_nom, &scn.nominal_disturbance);
    let g_rooms = g_full.rows(0, r).into_owned();
    let h = DMatrix::from_diagonal(&DVector::from_column_slice(&scn.cost_h));
    let gtg = g_rooms.transpose() * &g_rooms;
    let reduced = &h + scn.eta * &gtg;
    let m = h.diagonal().min();
    let l = reduced.symmetric_eigenvalues().max();
    let g_norm = spectral_norm(&g_rooms);
    // F̃ depends on w through the room temperatures: ℓ_w = η‖G‖‖∂T_rooms/∂w‖
    let k_sup = grid
        .iter()
        .map(|&ua| spectral_norm(&net.disturbance_sensitivity(ua).rows(0, r).into_owned()))
        .fold(0.0, f64::max);
    let constants = ProblemConstants {
        lipschitz_f: l,
        strong_monotonicity: m,
        lipschitz_solution: GRID_MARGIN * scn.eta * g_norm * k_sup / m,
        lipschitz_output: scn.eta * g_norm,
    };
    let gt: Vec<f64> = g_rooms.transpose().iter().copied().collect();
    let gt = DMatrix::from_column_slice(nu, r, &gt);
    let (lo, hi) = (scn.comfort[0] + scn.comfort_backoff, scn.comfort[1] - scn.comfort_backoff);
    let (hd, cc, eta) = (scn.cost_h.clone(), scn.cost_c.clone(), scn.eta);
    let f = Arc::new(move |u: &[f64], y: &[f64]| {
        let dist: DVector<f64> = DVector::from_iterator(
            r,
            y[..r].iter().map(|t| dist_to_interval_grad(*t, lo, hi).map(|(_, g)| g).unwrap_or(f64::NAN)),
        );
        let coupling = &gt * dist;
        // ∇_u ½(Hu + c)ᵀu = Hu + c/2 for symmetric H
        (0..u.len()).map(|i| hd[i] * u[i] + 0.5 * cc[i] + eta * coupling[i]).collect::<Vec<f64>>()
    });
    let problem = EquilibriumProblem::new(nu, ny, f, box_resolvent(input_set), constants)?;
    let operator = match scn.step_rule {
        StepRule::Monotone => prox_grad_operator(&problem, scn.step.unwrap_or(m / (l * l)))?,
        StepRule::Potential => prox_grad_potential_operator(&problem, scn.step.unwrap_or(1.0 / l))?,
    };
    let step = scn.step.unwrap_or(match scn.step_rule {
        StepRule::Monotone => m / (l * l),
        StepRule::Potential => 1.0 / l,
    });
    let bundle = CertificateBundle::new(&lyapunov, constants.lipschitz_solution, &operator)?;

    let plant2 = plant.clone();
    let problem2 = problem.clone();
    let safe = m / (l * l);
    let fast = 1.0 / l;
    let solve = move |w: &[f64], warm: Option<&[f64]>| -> Result<Vec<f64>, EquilibriumError> {
        let h = |u: &[f64]| plant2.steady_output_unchecked(u, w);
        let start = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; nu]);
        // Fixed points do not depend on the step: accelerated long steps with
        // gradient restarts first, then plain iterations to confirm.
        let mut u = start.clone();
        let mut v = start.clone();
        let mut t = 1.0f64;
        for _ in 0..20_000 {
            let g = problem2.reduced(&v, &h);
            let next = problem2.resolve(&linalg::axpy(&v, -fast, &g), fast);
            let moved = linalg::dist(&next, &v);
            let restart = (0..nu).map(|i| (v[i] - next[i]) * (next[i] - u[i])).sum::<f64>() > 0.0;
            if restart {
                t = 1.0;
                v = next.clone();
            } else {
                let t1 = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                v = (0..nu).map(|i| next[i] + (t - 1.0) / t1 * (next[i] - u[i])).collect();
                t = t1;
            }
            u = next;
            if moved <= ORACLE_TOL * 1e-2 {
                let mut plain = u.clone();
                for _ in 0..1000 {
                    let g = problem2.reduced(&plain, &h);
                    let next = problem2.resolve(&linalg::axpy(&plain, -fast, &g), fast);
                    let moved = linalg::dist(&next, &plain);
                    plain = next;
                    if moved <= ORACLE_TOL * 1e-2 {
                        return Ok(solve_offline_from(&problem2, &h, safe, &plain, ORACLE_TOL, 100_000)?.u);
                    }
                }
            }
        }
        Ok(solve_offline_from(&problem2, &h, safe, &start, ORACLE_TOL, 10_000_000)?.u)
    };
    let plant3 = plant.clone();
    let oracle = SolutionOracle::from_solver(solve, move |u: &[f64], w: &[f64]| plant3.steady_output_unchecked(u, w));
    let occupancy = sample_occupancy(r, &scn.occupancy, (scn.hours / 24.0).ceil().max(1.0) as usize)?;
    Ok(BuildingSetup {
        scenario: scn.clone(),
        network: net,
        plant,
        problem,
        operator,
        bundle,
        lyapunov,
        oracle,
        g_rooms,
        step,
        occupancy,
    })
}

impl BuildingSetup {
    pub fn disturbance(&self) -> DisturbanceSignal<f64> {
        building_disturbance(&self.scenario, &self.occupancy)
    }

    /// The disturbance as seen by a feedforward planner that cannot measure solar gains.
    pub fn disturbance_without_solar(&self) -> DisturbanceSignal<f64> {
        compose_disturbance(&self.scenario.weather, self.occupancy.signal(), self.scenario.time_unit, false)
    }

    /// Feedforward baseline `u^k = u*(ŵ(t^k))` planned on the solar-blind
    /// disturbance; errors are measured against `u*` of the true one.
    pub fn feedforward(&self, cfg: &ClosedLoopConfig<f64>) -> Result<crate::simulator::TrajectoryLog<f64>, crate::simulator::SimError> {
        let measured = self.disturbance_without_solar();
        crate::simulator::run_feedforward_baseline(&self.plant, &self.oracle, &measured, &self.disturbance(), &self.oracle, cfg)
    }

    /// Loop configuration: all states at the initial temperature, inputs off.
    pub fn config(&self) -> ClosedLoopConfig<f64> {
        let s = &self.scenario;
        let mut cfg = ClosedLoopConfig::new(
            s.tau,
            s.eps,
            s.horizon(),
            vec![0.0; s.input_dim()],
            vec![s.initial_temperature; s.state_dim()],
        );
        cfg.substeps = s.substeps;
        cfg
    }
}
