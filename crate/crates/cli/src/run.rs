//! Command implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use fes_core::certificates::sweep_point;
use fes_core::plant::DisturbanceSignal;
use fes_core::scenarios::building::{build_building, BuildingScenario, BuildingSetup};
use fes_core::scenarios::lti::{build_lti, sinusoidal_disturbance, LtiSetup};
use fes_core::scenarios::robots::{build_robots, RobotScenario, RobotSetup};
use fes_core::scenarios::thermostat::{building_metrics, reduction_percent, thermostat_baseline, BuildingMetrics};
use fes_core::simulator::{run_sampled_data, tail_max, SimError};
use fes_core::{Bundle, Log, LoopConfig};

use crate::config::{CustomScenario, RunConfig, ScenarioKind, SweepConfig};
use crate::svg::{Band, Cell, Heatmap, LinePlot, Series};

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Diverged { sample: usize, time: f64 },
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Runtime(_) => 2,
            Failure::Diverged { .. } => 3,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::IntegrationDiverged { sample, time } => Failure::Diverged { sample, time },
            other => Failure::Runtime(other.into()),
        }
    }
}

/// Exit status of a successful command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    NotCertified,
}

type CmdResult = std::result::Result<Outcome, Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

/// A built scenario.
pub enum Loaded {
    Building(Box<BuildingSetup>),
    Robots(Box<RobotSetup>, RobotScenario),
    Custom(Box<LtiSetup>, Box<CustomScenario>),
}

const CUSTOM_TAU: f64 = 0.1;
const CUSTOM_HORIZON: usize = 400;

impl Loaded {
    pub fn build(run: &RunConfig) -> Result<Self> {
        let f = &run.file;
        Ok(match f.scenario {
            ScenarioKind::Building => {
                let mut scn = f.building.clone().unwrap_or_default();
                if let Some(t) = run.tau {
                    scn.tau = t;
                }
                if let Some(e) = run.eps {
                    scn.eps = e;
                }
                if let Some(s) = run.seed {
                    scn.occupancy.seed = s;
                }
                if let Some(s) = f.substeps {
                    scn.substeps = s;
                }
                Loaded::Building(Box::new(build_building(&scn)?))
            }
            ScenarioKind::Robots => {
                let mut scn = f.robots.clone().unwrap_or_default();
                if let Some(t) = run.tau {
                    scn.tau = t;
                }
                if let Some(e) = run.eps {
                    scn.eps = e;
                }
                Loaded::Robots(Box::new(build_robots(&scn)?), scn)
            }
            ScenarioKind::Custom => {
                let c = f.custom.clone().ok_or_else(|| anyhow!("missing \"custom\" section"))?;
                Loaded::Custom(Box::new(build_lti(&c.plant)?), Box::new(c))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loaded::Building(_) => "building",
            Loaded::Robots(..) => "robots",
            Loaded::Custom(..) => "custom",
        }
    }

    pub fn bundle(&self) -> &Bundle {
        match self {
            Loaded::Building(s) => &s.bundle,
            Loaded::Robots(s, _) => &s.bundle,
            Loaded::Custom(s, _) => &s.bundle,
        }
    }

    /// `(τ, ε)` after overrides.
    pub fn params(&self, run: &RunConfig) -> (f64, f64) {
        match self {
            Loaded::Building(s) => (s.scenario.tau, s.scenario.eps),
            Loaded::Robots(_, scn) => (scn.tau, scn.eps),
            Loaded::Custom(..) => (run.tau.unwrap_or(CUSTOM_TAU), run.eps.unwrap_or(1.0)),
        }
    }

    pub fn disturbance(&self) -> Result<DisturbanceSignal<f64>> {
        Ok(match self {
            Loaded::Building(s) => s.disturbance(),
            Loaded::Robots(..) => DisturbanceSignal::constant(vec![]),
            Loaded::Custom(_, c) => sinusoidal_disturbance(&c.plant, c.amplitude, &c.omega)?,
        })
    }

    /// Loop configuration at `(τ, ε)` with `horizon` updates.
    pub fn loop_config(&self, run: &RunConfig, tau: f64, eps: f64, horizon: Option<usize>) -> Result<LoopConfig> {
        let mut cfg = match self {
            Loaded::Building(s) => s.config(),
            Loaded::Robots(s, _) => s.config.clone(),
            Loaded::Custom(s, c) => {
                let mut cfg = s.config(tau, eps, CUSTOM_HORIZON);
                if let Some(x0) = &c.initial_state {
                    cfg.x0 = x0.clone();
                }
                if let Some(u0) = &c.initial_input {
                    cfg.u0 = u0.clone();
                }
                cfg
            }
        };
        cfg.tau = tau;
        cfg.eps = eps;
        if let Loaded::Building(s) = self {
            // the building horizon is a duration in hours
            cfg.horizon = (s.scenario.hours / (tau * s.scenario.time_unit)).round() as usize;
        }
        if let Some(h) = horizon.or(run.horizon) {
            cfg.horizon = h;
        }
        if let Some(s) = run.file.substeps {
            cfg.substeps = s;
        }
        if cfg.horizon == 0 {
            bail!("horizon must be positive");
        }
        Ok(cfg)
    }

    pub fn simulate(&self, w: &DisturbanceSignal<f64>, cfg: &LoopConfig) -> std::result::Result<Log, SimError> {
        match self {
            Loaded::Building(s) => run_sampled_data(&s.plant, &s.operator, w, &s.oracle, cfg),
            Loaded::Robots(s, _) => run_sampled_data(&s.plant, &s.operator, w, &s.oracle, cfg),
            Loaded::Custom(s, _) => run_sampled_data(&s.plant, &s.operator, w, &s.oracle, cfg),
        }
    }

    fn record_every(&self, run: &RunConfig) -> usize {
        match (self, run.file.record_every) {
            (_, Some(n)) => n,
            // one row per simulated minute of building time by default
            (Loaded::Building(s), None) => ((1.0 / (s.scenario.tau * s.scenario.time_unit * 60.0)).round() as usize).max(1),
            _ => 1,
        }
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn prepare_output(run: &RunConfig) -> std::result::Result<(), Failure> {
    fs::create_dir_all(&run.output_dir)
        .with_context(|| format!("cannot create output directory {}", run.output_dir.display()))
        .map_err(config_err)
}

fn thinned(log: &Log, every: usize) -> Log {
    let last = log.samples.last().map(|s| s.k);
    let mut out = log.clone();
    out.samples.retain(|s| s.k % every == 0 || Some(s.k) == last);
    let kept: std::collections::BTreeSet<usize> = out.samples.iter().map(|s| s.k).collect();
    out.dense.retain(|d| kept.contains(&d.interval));
    out
}

fn attach_envelope(log: &mut Log, bundle: &Bundle, tau: f64, eps: f64) {
    if !bundle.is_certified(tau, eps) {
        return;
    }
    let Some(first) = log.samples.first() else { return };
    let init = (first.dx_norm(), first.du_norm());
    log.attach_envelope(|k, z_sup| bundle.iss_envelope(tau, eps, init, z_sup, k).unwrap_or(f64::NAN));
}

fn error_plot(log: &Log, time_label: &str, time_scale: f64) -> LinePlot {
    let pick = |f: &dyn Fn(&fes_core::simulator::Sample<f64>) -> f64| {
        log.samples.iter().map(|s| (s.t * time_scale, f(s))).collect::<Vec<_>>()
    };
    let mut series = vec![
        Series::new("‖δu‖", pick(&|s| s.du_norm()), 0),
        Series::new("‖δx‖", pick(&|s| s.dx_norm()), 1),
        Series::new("‖δy‖", pick(&|s| s.dy_norm()), 2),
    ];
    if log.samples.iter().any(|s| s.envelope.is_some()) {
        series.push(Series::new("ISS envelope", pick(&|s| s.envelope.unwrap_or(f64::NAN)), 3).dashed());
    }
    LinePlot {
        title: "Tracking errors".into(),
        x_label: time_label.into(),
        y_label: "norm".into(),
        series,
        log_y: true,
        ..LinePlot::default()
    }
}

fn room_plot(scn: &BuildingScenario, logs: &[(&str, &Log)], mean_only: bool) -> LinePlot {
    let hours = |t: f64| t * scn.time_unit;
    let mut series = Vec::new();
    for (li, (name, log)) in logs.iter().enumerate() {
        if mean_only {
            let pts = log.samples.iter().map(|s| (hours(s.t), s.y[..scn.rooms].iter().sum::<f64>() / scn.rooms as f64)).collect();
            series.push(Series::new(format!("{name} mean"), pts, li));
        } else {
            for r in 0..scn.rooms {
                let pts = log.samples.iter().map(|s| (hours(s.t), s.y[r])).collect();
                series.push(Series::new(format!("room {}", r + 1), pts, r));
            }
        }
    }
    LinePlot {
        title: "Room temperatures".into(),
        x_label: "time [h]".into(),
        y_label: "temperature [°C]".into(),
        series,
        bands: vec![Band { lo: scn.comfort[0], hi: scn.comfort[1], label: "comfort band".into() }],
        ..LinePlot::default()
    }
}

fn input_plot(log: &Log, names: &[String], time_label: &str, time_scale: f64) -> LinePlot {
    let series = names
        .iter()
        .enumerate()
        .map(|(i, n)| Series::new(n.clone(), log.samples.iter().map(|s| (s.t * time_scale, s.u[i])).collect(), i))
        .collect();
    LinePlot { title: "Inputs".into(), x_label: time_label.into(), y_label: "u".into(), series, ..LinePlot::default() }
}

fn robot_plot(log: &Log, scn: &RobotScenario) -> LinePlot {
    let mut series = Vec::new();
    for i in 0..scn.targets.len() {
        let pts = log.samples.iter().map(|s| (s.x[3 * i], s.x[3 * i + 1])).collect();
        series.push(Series::new(format!("robot {}", i + 1), pts, i));
        let t = scn.targets[i];
        let last = log.samples.last().map(|s| (s.x[3 * i], s.x[3 * i + 1])).unwrap_or((t[0], t[1]));
        series.push(Series::new(format!("target {}", i + 1), vec![last, (t[0], t[1])], i).dashed());
    }
    LinePlot {
        title: "Robot positions".into(),
        x_label: "a".into(),
        y_label: "b".into(),
        series,
        equal_aspect: true,
        ..LinePlot::default()
    }
}

pub fn simulate(run: &RunConfig) -> CmdResult {
    let loaded = Loaded::build(run).map_err(config_err)?;
    let (tau, eps) = loaded.params(run);
    let cfg = loaded.loop_config(run, tau, eps, None).map_err(config_err)?;
    let w = loaded.disturbance().map_err(config_err)?;
    let mut log = loaded.simulate(&w, &cfg)?;
    attach_envelope(&mut log, loaded.bundle(), tau, eps);
    prepare_output(run)?;
    let every = loaded.record_every(run);
    write_file(&run.output_dir, "trajectory.csv", &thinned(&log, every).to_csv()).map_err(Failure::Runtime)?;

    let du = log.du_norms();
    println!("scenario {} with tau = {tau}, eps = {eps}, {} updates", loaded.name(), cfg.horizon);
    println!("final |du| = {:e}, tail max |du| = {:e}", du.last().copied().unwrap_or(0.0), tail_max(&du, 0.1));
    println!("certified: {}", loaded.bundle().is_certified(tau, eps));
    if let Loaded::Building(s) = &loaded {
        print_metrics("FO", &building_metrics(&s.scenario, &log));
    }
    if run.plot {
        let thin = thinned(&log, every);
        let plots: Vec<(&str, LinePlot)> = match &loaded {
            Loaded::Building(s) => {
                let scn = &s.scenario;
                let mut names: Vec<String> = (1..=scn.rooms).map(|r| format!("radiator {r}")).collect();
                names.extend(["AHU air flow", "AHU heating", "AHU cooling"].map(String::from));
                vec![
                    ("rooms.svg", room_plot(scn, &[("FO", &thin)], false)),
                    ("inputs.svg", input_plot(&thin, &names, "time [h]", scn.time_unit)),
                    ("errors.svg", error_plot(&thin, "time [h]", scn.time_unit)),
                ]
            }
            Loaded::Robots(_, scn) => vec![("plane.svg", robot_plot(&thin, scn)), ("errors.svg", error_plot(&thin, "time", 1.0))],
            Loaded::Custom(s, _) => {
                let names: Vec<String> = (0..s.plant.input_dim()).map(|i| format!("u_{i}")).collect();
                vec![("inputs.svg", input_plot(&thin, &names, "time", 1.0)), ("errors.svg", error_plot(&thin, "time", 1.0))]
            }
        };
        for (name, plot) in plots {
            write_file(&run.output_dir, name, &plot.render()).map_err(Failure::Runtime)?;
        }
    }
    Ok(Outcome::Ok)
}

fn fmt_matrix(m: &[[f64; 2]; 2]) -> String {
    format!("[[{}, {}], [{}, {}]]", m[0][0], m[0][1], m[1][0], m[1][1])
}

pub fn certify(run: &RunConfig) -> CmdResult {
    let loaded = Loaded::build(run).map_err(config_err)?;
    let (tau, eps) = loaded.params(run);
    let b = loaded.bundle();
    let verdict = b.verdict(tau, eps).map_err(config_err)?;
    println!("scenario: {}", loaded.name());
    println!("tau = {tau}");
    println!("eps = {eps}");
    println!("tau_min = {}", b.tau_min());
    match b.eps_max(tau) {
        Ok(e) => println!("eps_max(tau) = {e}"),
        Err(_) => println!("eps_max(tau) = undefined (tau <= tau_min)"),
    }
    let m = b.build_m(tau, eps).map_err(config_err)?;
    println!("M = {}", fmt_matrix(&m));
    match b.rho(tau, eps) {
        Ok(r) => println!("rho(M) = {r}"),
        Err(e) => println!("rho(M) = undefined ({e})"),
    }
    println!("verdict: {}", verdict.describe());
    Ok(if verdict.is_certified() { Outcome::Ok } else { Outcome::NotCertified })
}

/// Worker count from `FES_LAB_WORKERS`, defaulting to the available parallelism.
pub fn workers() -> Result<usize> {
    match std::env::var("FES_LAB_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("FES_LAB_WORKERS must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(usize::from).unwrap_or(1)),
    }
}

/// Empirical divergence: the integrator blew up, or `‖δu‖` ended `10³` times above where it started.
fn diverges(loaded: &Loaded, run: &RunConfig, w: &DisturbanceSignal<f64>, tau: f64, eps: f64, horizon: usize) -> Result<bool> {
    let cfg = loaded.loop_config(run, tau, eps, Some(horizon))?;
    match loaded.simulate(w, &cfg) {
        Err(SimError::IntegrationDiverged { .. }) => Ok(true),
        Err(e) => Err(e.into()),
        Ok(log) => {
            let du = log.du_norms();
            let (first, last) = (du.first().copied().unwrap_or(0.0), du.last().copied().unwrap_or(0.0));
            Ok(!last.is_finite() || last > 1e3 * first.max(1e-9))
        }
    }
}

pub fn sweep(run: &RunConfig) -> CmdResult {
    let sc: &SweepConfig = run.file.sweep.as_ref().ok_or_else(|| config_err(anyhow!("sweep needs a \"sweep\" section")))?;
    let taus = sc.tau.values().map_err(config_err)?;
    let epss = sc.eps.values().map_err(config_err)?;
    if epss.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(config_err(anyhow!("sweep grids need tau > 0 and eps in (0, 1]")));
    }
    let loaded = Loaded::build(run).map_err(config_err)?;
    let w = loaded.disturbance().map_err(config_err)?;
    let n = workers().map_err(config_err)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Failure::Runtime(e.into()))?;
    let grid: Vec<(f64, f64)> = epss.iter().flat_map(|e| taus.iter().map(move |t| (*t, *e))).collect();
    type Row = (f64, f64, f64, bool, Option<bool>);
    let rows: Vec<Result<Row>> = pool.install(|| {
        grid.par_iter()
            .map(|&(tau, eps)| {
                let p = sweep_point(loaded.bundle(), tau, eps)?;
                let diverged = if sc.simulate { Some(diverges(&loaded, run, &w, tau, eps, sc.horizon)?) } else { None };
                Ok((tau, eps, p.rho, p.certified, diverged))
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>().map_err(Failure::Runtime)?;
    prepare_output(run)?;
    let mut csv = String::from("tau,eps,rho,certified,diverged\n");
    for (tau, eps, rho, cert, div) in &rows {
        let d = div.map(|d| if d { "1" } else { "0" }).unwrap_or("");
        let _ = writeln!(csv, "{tau},{eps},{rho},{},{d}", u8::from(*cert));
    }
    write_file(&run.output_dir, "sweep.csv", &csv).map_err(Failure::Runtime)?;
    let map = Heatmap {
        title: format!("Certified region ({})", loaded.name()),
        x_label: if sc.tau.log { "tau (log scale)".into() } else { "tau".into() },
        y_label: "eps".into(),
        xs: taus,
        ys: epss,
        cells: rows.iter().map(|r| Cell { value: r.2, certified: r.3, diverged: r.4 }).collect(),
    };
    write_file(&run.output_dir, "sweep.svg", &map.render()).map_err(Failure::Runtime)?;
    let certified = rows.iter().filter(|r| r.3).count();
    let diverged = rows.iter().filter(|r| r.4 == Some(true)).count();
    let certified_and_diverged = rows.iter().filter(|r| r.3 && r.4 == Some(true)).count();
    println!("{} grid points, {certified} certified, tau_min = {}", rows.len(), loaded.bundle().tau_min());
    if sc.simulate {
        println!("{diverged} diverged in simulation ({certified_and_diverged} of them certified)");
    }
    Ok(Outcome::Ok)
}

fn print_metrics(name: &str, m: &BuildingMetrics) {
    println!(
        "{name:<12} total cost {:>10.4}  energy {:>10.4}  violation {:>8.4} room-h  {:>8.4} K·h",
        m.total_cost, m.energy_cost, m.violation_hours, m.violation_degree_hours
    );
}

/// FO, thermostat and feedforward results of one building day.
pub struct Comparison {
    pub fo: BuildingMetrics,
    pub thermostat: BuildingMetrics,
    pub feedforward: BuildingMetrics,
    /// Tail maxima of `‖y − y*(w)‖` over the final quarter.
    pub fo_tail_dy: f64,
    pub feedforward_tail_dy: f64,
    pub logs: [Log; 3],
}

pub fn compare_building(setup: &BuildingSetup, cfg: &LoopConfig) -> std::result::Result<Comparison, SimError> {
    let w = setup.disturbance();
    let fo = run_sampled_data(&setup.plant, &setup.operator, &w, &setup.oracle, cfg)?;
    let th = thermostat_baseline(setup, &w, cfg)?;
    let ff = setup.feedforward(cfg)?;
    let tail_dy = |log: &Log| tail_max(&log.samples.iter().map(|s| s.dy_norm()).collect::<Vec<_>>(), 0.25);
    let scn = &setup.scenario;
    Ok(Comparison {
        fo: building_metrics(scn, &fo),
        thermostat: building_metrics(scn, &th),
        feedforward: building_metrics(scn, &ff),
        fo_tail_dy: tail_dy(&fo),
        feedforward_tail_dy: tail_dy(&ff),
        logs: [fo, th, ff],
    })
}

pub fn compare(run: &RunConfig) -> CmdResult {
    let loaded = Loaded::build(run).map_err(config_err)?;
    let Loaded::Building(setup) = &loaded else {
        return Err(config_err(anyhow!("compare needs the building scenario, got {}", loaded.name())));
    };
    let (tau, eps) = loaded.params(run);
    let cfg = loaded.loop_config(run, tau, eps, None).map_err(config_err)?;
    let c = compare_building(setup, &cfg)?;
    prepare_output(run)?;
    let mut csv = String::from("controller,total_cost,energy_cost,violation_hours,violation_degree_hours,tail_dy\n");
    for (name, m, tail) in [
        ("fo", &c.fo, Some(c.fo_tail_dy)),
        ("thermostat", &c.thermostat, None),
        ("feedforward", &c.feedforward, Some(c.feedforward_tail_dy)),
    ] {
        let t = tail.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{name},{},{},{},{},{t}", m.total_cost, m.energy_cost, m.violation_hours, m.violation_degree_hours);
    }
    write_file(&run.output_dir, "compare.csv", &csv).map_err(Failure::Runtime)?;
    print_metrics("FO", &c.fo);
    print_metrics("thermostat", &c.thermostat);
    print_metrics("feedforward", &c.feedforward);
    println!(
        "FO vs thermostat: cost reduction {:.2}%, violation-time reduction {:.2}%",
        reduction_percent(c.fo.total_cost, c.thermostat.total_cost),
        reduction_percent(c.fo.violation_hours, c.thermostat.violation_hours)
    );
    println!("tail max |dy|: FO {:.4}, feedforward without solar measurement {:.4}", c.fo_tail_dy, c.feedforward_tail_dy);
    if run.plot {
        let every = loaded.record_every(run);
        let [fo, th, ff] = &c.logs;
        let (fo, th, ff) = (thinned(fo, every), thinned(th, every), thinned(ff, every));
        let plot = room_plot(&setup.scenario, &[("FO", &fo), ("thermostat", &th), ("feedforward", &ff)], true);
        write_file(&run.output_dir, "compare.svg", &plot.render()).map_err(Failure::Runtime)?;
    }
    Ok(Outcome::Ok)
}
