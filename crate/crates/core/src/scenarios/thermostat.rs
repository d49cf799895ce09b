//! Hysteresis thermostat baseline and building performance metrics.
//!
//! Radiators switch per room; the AHU heater and cooler switch on the mean room
//! temperature. With midpoint `m = (T_min + T_max)/2`: heating turns on at
//! `T ≤ m − 2` and off at `T ≥ m`; cooling turns on at `T ≥ m + 2` and off at
//! `T ≤ m`. Switched actuators run at full scale; the air flow is held at the
//! scenario's nominal value.

use crate::simulator::{run_controller, ClosedLoopConfig, SimError, TrajectoryLog};
use crate::plant::DisturbanceSignal;

use super::building::{building_cost, comfort_violation, BuildingScenario, BuildingSetup};

/// Hysteresis memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThermostatState {
    pub radiators: Vec<bool>,
    pub heater: bool,
    pub cooler: bool,
}

impl ThermostatState {
    pub fn off(rooms: usize) -> Self {
        Self { radiators: vec![false; rooms], heater: false, cooler: false }
    }
}

fn hysteresis(on: bool, t: f64, on_at_or_below: f64, off_at_or_above: f64) -> bool {
    if t <= on_at_or_below {
        true
    } else if t >= off_at_or_above {
        false
    } else {
        on
    }
}

/// Updates the switches from the room temperatures and returns the input.
pub fn thermostat_step(scn: &BuildingScenario, state: &mut ThermostatState, rooms: &[f64]) -> Vec<f64> {
    let mid = 0.5 * (scn.comfort[0] + scn.comfort[1]);
    for (on, t) in state.radiators.iter_mut().zip(rooms) {
        *on = hysteresis(*on, *t, mid - 2.0, mid);
    }
    let mean = rooms.iter().sum::<f64>() / rooms.len() as f64;
    state.heater = hysteresis(state.heater, mean, mid - 2.0, mid);
    // cooling: on at ≥ m + 2, off at ≤ m
    state.cooler = !hysteresis(!state.cooler, mean, mid, mid + 2.0);
    let mut u: Vec<f64> = state.radiators.iter().map(|on| if *on { 1.0 } else { 0.0 }).collect();
    u.push(scn.nominal_airflow);
    u.push(if state.heater { 1.0 } else { 0.0 });
    u.push(if state.cooler { 1.0 } else { 0.0 });
    u
}

/// Runs the thermostat on the building. The first input is chosen from the
/// initial room temperatures.
pub fn thermostat_baseline(
    setup: &BuildingSetup,
    w: &DisturbanceSignal<f64>,
    cfg: &ClosedLoopConfig<f64>,
) -> Result<TrajectoryLog<f64>, SimError> {
    let scn = setup.scenario.clone();
    let r = scn.rooms;
    let mut state = ThermostatState::off(r);
    let mut cfg = cfg.clone();
    cfg.u0 = thermostat_step(&scn, &mut state, &cfg.x0[..r]);
    let mut controller = move |_k: usize, _u: &[f64], y: &[f64]| thermostat_step(&scn, &mut state, &y[..r]);
    run_controller(&setup.plant, &mut controller, w, &setup.oracle, &cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildingMetrics {
    /// `∫ φ₁(u, y) dt` with `t` in hours, left Riemann sum over samples.
    pub total_cost: f64,
    /// Energy part `∫ ½(Hu + c)ᵀu dt`.
    pub energy_cost: f64,
    /// Room-hours with the room temperature outside the comfort band.
    pub violation_hours: f64,
    /// `∫ Σ dist(T_i, 𝒯) dt`, K·h.
    pub violation_degree_hours: f64,
}

pub fn building_metrics(scn: &BuildingScenario, log: &TrajectoryLog<f64>) -> BuildingMetrics {
    let mut m = BuildingMetrics { total_cost: 0.0, energy_cost: 0.0, violation_hours: 0.0, violation_degree_hours: 0.0 };
    let n = log.samples.len();
    for pair in log.samples.windows(2).take(n.saturating_sub(1)) {
        let (s, dt) = (&pair[0], (pair[1].t - pair[0].t) * scn.time_unit);
        let total = building_cost(scn, &s.u, &s.y);
        let energy = building_cost(scn, &s.u, &vec![scn.comfort[0]; s.y.len()]);
        m.total_cost += total * dt;
        m.energy_cost += energy * dt;
        for t in &s.y[..scn.rooms] {
            let d = comfort_violation(scn, *t);
            if d > 0.0 {
                m.violation_hours += dt;
                m.violation_degree_hours += d * dt;
            }
        }
    }
    m
}

/// Percentage reduction of `ours` relative to `baseline` (positive is better).
pub fn reduction_percent(ours: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        100.0 * (baseline - ours) / baseline
    }
}
