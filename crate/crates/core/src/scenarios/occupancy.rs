//! Seeded occupancy process: per-occupant Markov chains over rooms and "away".
//!
//! Each occupant is away outside working hours and during lunch. While at
//! work they sit in a home room and wander to a uniformly random room with a
//! time-dependent probability per step, returning home with a fixed
//! probability. Room presence is smoothed by short linear ramps so the heat
//! gain signal has a finite, analytic derivative.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::plant::DisturbanceSignal;

use super::ScenarioError;

/// Work-day schedule in hours of the day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkDay {
    pub arrival: f64,
    pub lunch_start: f64,
    pub lunch_hours: f64,
    /// Working hours excluding lunch.
    pub work_hours: f64,
}

impl Default for WorkDay {
    fn default() -> Self {
        Self { arrival: 8.0, lunch_start: 12.0, lunch_hours: 1.5, work_hours: 8.0 }
    }
}

impl WorkDay {
    pub fn departure(&self) -> f64 {
        self.arrival + self.work_hours + self.lunch_hours
    }

    pub fn lunch_end(&self) -> f64 {
        self.lunch_start + self.lunch_hours
    }

    /// Whether occupants are forced to be in the building at hour-of-day `h`.
    pub fn present(&self, h: f64) -> bool {
        h >= self.arrival && h < self.departure() && !(h >= self.lunch_start && h < self.lunch_end())
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let ok = self.work_hours >= 0.0
            && self.lunch_hours >= 0.0
            && self.lunch_start >= self.arrival
            && self.lunch_end() <= self.departure()
            && self.departure() <= 24.0
            && self.arrival >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(format!("inconsistent work day {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccupancyConfig {
    pub occupants: usize,
    /// Heat gain per present occupant, W.
    pub wattage: f64,
    pub schedule: WorkDay,
    /// Chain time step, hours.
    pub step: f64,
    /// Probability per step of leaving the home room during the morning and afternoon peaks.
    pub wander: f64,
    /// Probability per step of returning home while wandering.
    pub return_home: f64,
    /// Duration of the presence ramps, hours.
    pub ramp: f64,
    pub seed: u64,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self {
            occupants: 15,
            wattage: 100.0,
            schedule: WorkDay::default(),
            step: 1.0 / 12.0,
            wander: 0.15,
            return_home: 0.5,
            ramp: 1.0 / 60.0,
            seed: 7,
        }
    }
}

/// A sampled realization: `rooms[o][s]` is occupant `o`'s room in chain step `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyRealization {
    pub rooms: usize,
    pub step: f64,
    pub ramp: f64,
    pub wattage: f64,
    pub days: usize,
    pub location: Vec<Vec<Option<usize>>>,
}

impl OccupancyRealization {
    pub fn steps(&self) -> usize {
        self.location.first().map_or(0, Vec::len)
    }

    /// Occupant-steps spent in `room`.
    pub fn visits(&self, room: usize) -> usize {
        self.location.iter().flatten().filter(|l| **l == Some(room)).count()
    }

    /// Expected integral of the heat-gain signal over the realization, Wh.
    pub fn energy(&self) -> f64 {
        (0..self.rooms).map(|r| self.visits(r) as f64).sum::<f64>() * self.step * self.wattage
    }

    /// Heat-gain signal, one channel per room, covering `days` days from `t = 0`.
    /// The value is periodic in days beyond the sampled range.
    pub fn signal(&self) -> DisturbanceSignal<f64> {
        let me = Arc::new(self.clone());
        let dim = self.rooms;
        let m2 = me.clone();
        DisturbanceSignal::from_fn(dim, move |t| me.eval(t).0).with_derivative(move |t| m2.eval(t).1)
    }

    /// Value and derivative at time `t`. A switch at `t_s` ramps linearly over `[t_s, t_s + ramp]`.
    fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let mut value = vec![0.0; self.rooms];
        let mut rate = vec![0.0; self.rooms];
        let n = self.steps();
        if n == 0 {
            return (value, rate);
        }
        let span = n as f64 * self.step;
        let t = t.rem_euclid(span);
        let s = ((t / self.step).floor() as usize).min(n - 1);
        let into = t - s as f64 * self.step;
        let (frac, slope) = if self.ramp > 0.0 && into < self.ramp {
            (into / self.ramp, 1.0 / self.ramp)
        } else {
            (1.0, 0.0)
        };
        let prev = if s == 0 { n - 1 } else { s - 1 };
        for path in &self.location {
            let (from, to) = (path[prev], path[s]);
            if from == to {
                if let Some(r) = to {
                    value[r] += self.wattage;
                }
                continue;
            }
            if let Some(r) = to {
                value[r] += self.wattage * frac;
                rate[r] += self.wattage * slope;
            }
            if let Some(r) = from {
                value[r] += self.wattage * (1.0 - frac);
                rate[r] -= self.wattage * slope;
            }
        }
        (value, rate)
    }
}

/// Samples one realization covering `days` full days.
pub fn sample_occupancy(rooms: usize, cfg: &OccupancyConfig, days: usize) -> Result<OccupancyRealization, ScenarioError> {
    cfg.schedule.validate()?;
    if rooms == 0 || !(cfg.step > 0.0) || !(cfg.ramp >= 0.0 && cfg.ramp < cfg.step) || !(cfg.wattage >= 0.0) {
        return Err(ScenarioError::Invalid("occupancy needs rooms ≥ 1, step > 0, 0 ≤ ramp < step, wattage ≥ 0".into()));
    }
    for (name, p) in [("wander", cfg.wander), ("return_home", cfg.return_home)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(ScenarioError::Invalid(format!("{name} must be a probability, got {p}")));
        }
    }
    let per_day = (24.0 / cfg.step).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let location = (0..cfg.occupants)
        .map(|o| {
            let home = o % rooms;
            let mut here: Option<usize> = None;
            (0..per_day * days)
                .map(|s| {
                    let hour = (s % per_day) as f64 * cfg.step;
                    here = if !cfg.schedule.present(hour) {
                        None
                    } else {
                        match here {
                            None => Some(home),
                            Some(r) if r == home => {
                                // more wandering right after arrival and lunch
                                let since = (hour - cfg.schedule.arrival).min((hour - cfg.schedule.lunch_end()).abs());
                                let p = if since < 1.0 { cfg.wander } else { 0.5 * cfg.wander };
                                if rng.gen_bool(p) {
                                    Some(rng.gen_range(0..rooms))
                                } else {
                                    Some(r)
                                }
                            }
                            Some(r) => {
                                if rng.gen_bool(cfg.return_home) {
                                    Some(home)
                                } else {
                                    Some(r)
                                }
                            }
                        }
                    };
                    here
                })
                .collect()
        })
        .collect();
    Ok(OccupancyRealization { rooms, step: cfg.step, ramp: cfg.ramp, wattage: cfg.wattage, days, location })
}

/// Per-room heat-gain signal of a sampled realization.
pub fn occupancy_process(rooms: usize, cfg: &OccupancyConfig, days: usize) -> Result<DisturbanceSignal<f64>, ScenarioError> {
    Ok(sample_occupancy(rooms, cfg, days)?.signal())
}
