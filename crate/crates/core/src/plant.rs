//! Continuous-time plants under zero-order-hold inputs.
//!
//! A [`PlantModel`] bundles the vector field `ẋ = f(x, u, w)`, the output map
//! `y = g(x, w)`, the steady-state map `x_ss(u, w)` and the admissible input and
//! disturbance boxes. [`integrate_hold`] advances the plant over one sampling
//! period with the input frozen, using classical fixed-step RK4.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::linalg::{self, all_finite, axpy, norm};
use crate::scalar::{cast, from_usize, to_f64, Scalar};

/// Number of RK4 substeps per sampling period when none is configured.
pub const DEFAULT_SUBSTEPS: usize = 50;

/// Grid resolution used to bound `sup ‖ẇ‖` over an interval.
pub const RATE_GRID_POINTS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("integration diverged at t = {time}")]
    IntegrationDiverged { time: f64 },
    #[error("input outside the admissible set")]
    InputOutOfRange,
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid box: lower bound exceeds upper bound in coordinate {0}")]
    InvalidBox(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type VectorField<S> = Arc<dyn Fn(&[S], &[S], &[S]) -> Vec<S> + Send + Sync>;
pub type InputMap<S> = Arc<dyn Fn(&[S], &[S]) -> Vec<S> + Send + Sync>;
pub type LyapunovFn<S> = Arc<dyn Fn(&[S], &[S], &[S]) -> S + Send + Sync>;

/// Componentwise box `{v : lo ≤ v ≤ hi}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet<S> {
    lo: Vec<S>,
    hi: Vec<S>,
}

impl<S: Scalar> BoxSet<S> {
    pub fn new(lo: Vec<S>, hi: Vec<S>) -> Result<Self, PlantError> {
        if lo.len() != hi.len() {
            return Err(PlantError::DimensionMismatch { what: "box bounds", expected: lo.len(), got: hi.len() });
        }
        if let Some(i) = lo.iter().zip(&hi).position(|(l, h)| !(l <= h)) {
            return Err(PlantError::InvalidBox(i));
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^dim`
    pub fn cube(dim: usize, lo: S, hi: S) -> Result<Self, PlantError> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    /// Zero-dimensional box (plants without disturbance or state).
    pub fn empty() -> Self {
        Self { lo: Vec::new(), hi: Vec::new() }
    }

    /// Unbounded box of the given dimension.
    pub fn unbounded(dim: usize) -> Self {
        Self { lo: vec![S::neg_infinity(); dim], hi: vec![S::infinity(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lower(&self) -> &[S] {
        &self.lo
    }

    pub fn upper(&self) -> &[S] {
        &self.hi
    }

    pub fn contains(&self, v: &[S]) -> bool {
        self.contains_tol(v, S::feasibility_tol())
    }

    pub fn contains_tol(&self, v: &[S], tol: S) -> bool {
        v.len() == self.dim()
            && v.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&x, (&l, &h))| {
                let slack = tol * (S::one() + x.abs());
                x >= l - slack && x <= h + slack
            })
    }

    /// Euclidean projection (componentwise clamp).
    pub fn project(&self, v: &[S]) -> Vec<S> {
        v.iter().zip(self.lo.iter().zip(&self.hi)).map(|(&x, (&l, &h))| x.max(l).min(h)).collect()
    }

    pub fn center(&self) -> Vec<S> {
        let two = cast::<S>(2.0);
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| match (l.is_finite(), h.is_finite()) {
                (true, true) => (l + h) / two,
                (true, false) => l,
                (false, true) => h,
                (false, false) => S::zero(),
            })
            .collect()
    }

    /// Uniform sample; unbounded sides are replaced by a unit interval around the center.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<S> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let (l, h) = (to_f64(l), to_f64(h));
                let (l, h) = match (l.is_finite(), h.is_finite()) {
                    (true, true) => (l, h),
                    (true, false) => (l, l + 1.0),
                    (false, true) => (h - 1.0, h),
                    (false, false) => (-1.0, 1.0),
                };
                if h > l {
                    cast(rng.gen_range(l..=h))
                } else {
                    cast(l)
                }
            })
            .collect()
    }
}

/// Scalar comparison function of class 𝒦, stored as an evaluable handle.
#[derive(Clone)]
pub struct KFunction<S> {
    f: Arc<dyn Fn(S) -> S + Send + Sync>,
    label: String,
}

impl<S: Scalar> KFunction<S> {
    pub fn new(label: impl Into<String>, f: impl Fn(S) -> S + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), label: label.into() }
    }

    /// `z ↦ gain · z²`
    pub fn quadratic(gain: S) -> Self {
        Self::new(format!("{gain}*z^2"), move |z| gain * z * z)
    }

    /// `z ↦ gain · z`
    pub fn linear(gain: S) -> Self {
        Self::new(format!("{gain}*z"), move |z| gain * z)
    }

    pub fn eval(&self, z: S) -> S {
        (self.f)(z)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Pointwise square root `z ↦ √f(z)`.
    pub fn sqrt(&self) -> Self {
        let f = self.f.clone();
        Self::new(format!("sqrt({})", self.label), move |z| f(z).max(S::zero()).sqrt())
    }

    /// Checks `f(0) = 0` and strict increase on `points` samples of `(0, z_max]`.
    pub fn is_class_k_on(&self, z_max: S, points: usize) -> bool {
        if self.eval(S::zero()).abs() > S::epsilon() {
            return false;
        }
        let mut prev = self.eval(S::zero());
        (1..=points).all(|i| {
            let z = z_max * from_usize::<S>(i) / from_usize::<S>(points);
            let v = self.eval(z);
            let ok = v > prev;
            prev = v;
            ok
        })
    }
}

impl<S> fmt::Debug for KFunction<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("KFunction").field(&self.label).finish()
    }
}

/// Dimensions of a plant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlantDims {
    pub state: usize,
    pub input: usize,
    pub disturbance: usize,
    pub output: usize,
}

/// Continuous-time plant `ẋ = f(x,u,w)`, `y = g(x,w)` with steady-state map `x_ss`.
#[derive(Clone)]
pub struct PlantModel<S> {
    dims: PlantDims,
    dynamics: VectorField<S>,
    // measurement as a function of (x, u, w); dynamic plants ignore u
    measure: VectorField<S>,
    steady_state: InputMap<S>,
    input_set: BoxSet<S>,
    disturbance_set: BoxSet<S>,
    lyapunov: Option<LyapunovFn<S>>,
}

impl<S: Scalar> PlantModel<S> {
    pub fn new(
        dims: PlantDims,
        dynamics: impl Fn(&[S], &[S], &[S]) -> Vec<S> + Send + Sync + 'static,
        output_map: impl Fn(&[S], &[S]) -> Vec<S> + Send + Sync + 'static,
        steady_state: impl Fn(&[S], &[S]) -> Vec<S> + Send + Sync + 'static,
        input_set: BoxSet<S>,
        disturbance_set: BoxSet<S>,
    ) -> Result<Self, PlantError> {
        if dims.input == 0 || dims.output == 0 {
            return Err(PlantError::InvalidParameter("plants need at least one input and one output".into()));
        }
        check_dim("input set", dims.input, input_set.dim())?;
        check_dim("disturbance set", dims.disturbance, disturbance_set.dim())?;
        Ok(Self {
            dims,
            dynamics: Arc::new(dynamics),
            measure: Arc::new(move |x: &[S], _u: &[S], w: &[S]| output_map(x, w)),
            steady_state: Arc::new(steady_state),
            input_set,
            disturbance_set,
            lyapunov: None,
        })
    }

    /// Memoryless plant `y = h(u, w)` with an empty state.
    pub fn static_map(
        output_dim: usize,
        map: impl Fn(&[S], &[S]) -> Vec<S> + Send + Sync + 'static,
        input_set: BoxSet<S>,
        disturbance_set: BoxSet<S>,
    ) -> Self {
        let dims = PlantDims {
            state: 0,
            input: input_set.dim(),
            disturbance: disturbance_set.dim(),
            output: output_dim,
        };
        Self {
            dims,
            dynamics: Arc::new(|_x: &[S], _u: &[S], _w: &[S]| Vec::new()),
            measure: Arc::new(move |_x: &[S], u: &[S], w: &[S]| map(u, w)),
            steady_state: Arc::new(|_u: &[S], _w: &[S]| Vec::new()),
            input_set,
            disturbance_set,
            lyapunov: None,
        }
    }

    /// Registers a Lyapunov function `V(x, u, w)` used for `W = √V` logging and checks.
    pub fn with_lyapunov(mut self, v: impl Fn(&[S], &[S], &[S]) -> S + Send + Sync + 'static) -> Self {
        self.lyapunov = Some(Arc::new(v));
        self
    }

    pub fn dims(&self) -> PlantDims {
        self.dims
    }

    pub fn state_dim(&self) -> usize {
        self.dims.state
    }

    pub fn input_dim(&self) -> usize {
        self.dims.input
    }

    pub fn disturbance_dim(&self) -> usize {
        self.dims.disturbance
    }

    pub fn output_dim(&self) -> usize {
        self.dims.output
    }

    pub fn input_set(&self) -> &BoxSet<S> {
        &self.input_set
    }

    pub fn disturbance_set(&self) -> &BoxSet<S> {
        &self.disturbance_set
    }

    pub fn lyapunov(&self) -> Option<&LyapunovFn<S>> {
        self.lyapunov.as_ref()
    }

    pub fn is_static(&self) -> bool {
        self.dims.state == 0
    }

    pub fn dynamics(&self, x: &[S], u: &[S], w: &[S]) -> Vec<S> {
        (self.dynamics)(x, u, w)
    }

    /// Measured output at state `x` while `u` is applied.
    pub fn output(&self, x: &[S], u: &[S], w: &[S]) -> Vec<S> {
        (self.measure)(x, u, w)
    }

    pub fn steady_state(&self, u: &[S], w: &[S]) -> Vec<S> {
        (self.steady_state)(u, w)
    }

    /// `h(u, w) = g(x_ss(u, w), w)` without the admissibility check.
    pub fn steady_output_unchecked(&self, u: &[S], w: &[S]) -> Vec<S> {
        let xs = self.steady_state(u, w);
        self.output(&xs, u, w)
    }

    /// Lyapunov value `V(x, u, w)` if one is registered.
    pub fn lyapunov_value(&self, x: &[S], u: &[S], w: &[S]) -> Option<S> {
        self.lyapunov.as_ref().map(|v| v(x, u, w))
    }
}

impl<S> fmt::Debug for PlantModel<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel").field("dims", &self.dims).finish_non_exhaustive()
    }
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), PlantError> {
    if expected == got {
        Ok(())
    } else {
        Err(PlantError::DimensionMismatch { what, expected, got })
    }
}

/// Steady-state input-output map `h(u, w) = g(x_ss(u, w), w)`.
pub fn steady_output<S: Scalar>(plant: &PlantModel<S>, u: &[S], w: &[S]) -> Result<Vec<S>, PlantError> {
    check_dim("input", plant.input_dim(), u.len())?;
    check_dim("disturbance", plant.disturbance_dim(), w.len())?;
    if !plant.input_set().contains(u) {
        return Err(PlantError::InputOutOfRange);
    }
    Ok(plant.steady_output_unchecked(u, w))
}

/// Quadratic-in-deviation Lyapunov constants for the frozen-input plant.
#[derive(Clone, Debug)]
pub struct LyapunovCertificate<S> {
    /// Decay rate μ (1/time).
    pub mu: S,
    pub alpha1: S,
    pub alpha2: S,
    /// Lipschitz constant of the output map in `x`.
    pub ell_g: S,
    /// Lipschitz constant of `x_ss` in `u`.
    pub ell_x: S,
    /// Gain σ_c of the disturbance rate.
    pub sigma_c: KFunction<S>,
}

impl<S: Scalar> LyapunovCertificate<S> {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [("mu", self.mu), ("alpha1", self.alpha1), ("alpha2", self.alpha2), ("ell_x", self.ell_x)];
        for (name, v) in positive {
            if !(v > S::zero() && v.is_finite()) {
                return Err(PlantError::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.ell_g >= S::zero() && self.ell_g.is_finite()) {
            return Err(PlantError::InvalidParameter(format!("ell_g must be nonnegative, got {}", self.ell_g)));
        }
        if self.alpha1 > self.alpha2 {
            return Err(PlantError::InvalidParameter("alpha1 must not exceed alpha2".into()));
        }
        if !self.sigma_c.is_class_k_on(cast(10.0), 64) {
            return Err(PlantError::InvalidParameter("sigma_c is not a class-K function".into()));
        }
        Ok(())
    }
}

/// Exogenous disturbance `w(t)` with an optional analytic derivative.
#[derive(Clone)]
pub struct DisturbanceSignal<S> {
    dim: usize,
    value: Arc<dyn Fn(S) -> Vec<S> + Send + Sync>,
    derivative: Option<Arc<dyn Fn(S) -> Vec<S> + Send + Sync>>,
    rate_bound: Option<Arc<dyn Fn(S, S) -> S + Send + Sync>>,
}

impl<S: Scalar> DisturbanceSignal<S> {
    pub fn from_fn(dim: usize, value: impl Fn(S) -> Vec<S> + Send + Sync + 'static) -> Self {
        Self { dim, value: Arc::new(value), derivative: None, rate_bound: None }
    }

    pub fn constant(w: Vec<S>) -> Self {
        let dim = w.len();
        let zero = vec![S::zero(); dim];
        Self {
            dim,
            value: Arc::new(move |_| w.clone()),
            derivative: Some(Arc::new(move |_| zero.clone())),
            rate_bound: Some(Arc::new(|_, _| S::zero())),
        }
    }

    /// `w_i(t) = offset_i + amplitude_i · sin(omega_i t + phase_i)` with analytic derivative.
    pub fn sinusoid(offset: Vec<S>, amplitude: Vec<S>, omega: Vec<S>, phase: Vec<S>) -> Result<Self, PlantError> {
        let dim = offset.len();
        for (what, v) in [("amplitude", &amplitude), ("omega", &omega), ("phase", &phase)] {
            check_dim(what, dim, v.len())?;
        }
        let (a2, o2, p2) = (amplitude.clone(), omega.clone(), phase.clone());
        Ok(Self {
            dim,
            value: Arc::new(move |t| {
                (0..dim).map(|i| offset[i] + amplitude[i] * (omega[i] * t + phase[i]).sin()).collect()
            }),
            derivative: Some(Arc::new(move |t| (0..dim).map(|i| a2[i] * o2[i] * (o2[i] * t + p2[i]).cos()).collect())),
            rate_bound: None,
        })
    }

    pub fn with_derivative(mut self, d: impl Fn(S) -> Vec<S> + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    /// Overrides the interval rate bound (e.g. a finite surrogate for switching signals).
    pub fn with_rate_bound(mut self, bound: impl Fn(S, S) -> S + Send + Sync + 'static) -> Self {
        self.rate_bound = Some(Arc::new(bound));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, t: S) -> Vec<S> {
        (self.value)(t)
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// `ẇ(t)`, analytic when available, otherwise a central difference.
    pub fn derivative(&self, t: S) -> Vec<S> {
        match &self.derivative {
            Some(d) => d(t),
            None => {
                let h = cast::<S>(1e-6) * (S::one() + t.abs());
                let a = self.value(t + h);
                let b = self.value(t - h);
                a.iter().zip(&b).map(|(&x, &y)| (x - y) / (h + h)).collect()
            }
        }
    }

    /// `z = sup_{t ∈ [t0, t1]} ‖ẇ(t)‖`.
    ///
    /// Uses the override if one is set; otherwise the analytic derivative on a
    /// dense grid, or forward differences over [`RATE_GRID_POINTS`] intervals.
    pub fn rate_bound(&self, t0: S, t1: S) -> S {
        if let Some(b) = &self.rate_bound {
            return b(t0, t1);
        }
        if self.dim == 0 || !(t1 > t0) {
            return S::zero();
        }
        let n = RATE_GRID_POINTS;
        let h = (t1 - t0) / from_usize::<S>(n);
        match &self.derivative {
            Some(d) => (0..=n).map(|i| norm(&d(t0 + h * from_usize::<S>(i)))).fold(S::zero(), S::max),
            None => {
                let mut prev = self.value(t0);
                let mut best = S::zero();
                for i in 1..=n {
                    let cur = self.value(t0 + h * from_usize::<S>(i));
                    best = best.max(linalg::dist(&cur, &prev) / h);
                    prev = cur;
                }
                best
            }
        }
    }

    /// Pointwise sum of two signals of equal dimension.
    pub fn add(&self, other: &Self) -> Result<Self, PlantError> {
        check_dim("disturbance sum", self.dim, other.dim)?;
        let (a, b) = (self.value.clone(), other.value.clone());
        let derivative = match (&self.derivative, &other.derivative) {
            (Some(da), Some(db)) => {
                let (da, db) = (da.clone(), db.clone());
                Some(Arc::new(move |t: S| linalg::add(&da(t), &db(t))) as Arc<dyn Fn(S) -> Vec<S> + Send + Sync>)
            }
            _ => None,
        };
        let (sa, sb) = (self.clone(), other.clone());
        Ok(Self {
            dim: self.dim,
            value: Arc::new(move |t| linalg::add(&a(t), &b(t))),
            derivative,
            // triangle inequality
            rate_bound: Some(Arc::new(move |t0, t1| sa.rate_bound(t0, t1) + sb.rate_bound(t0, t1))),
        })
    }

    /// Checks `w(t) ∈ set` on `points` samples of `[t0, t1]`.
    pub fn stays_within(&self, set: &BoxSet<S>, t0: S, t1: S, points: usize) -> bool {
        (0..=points).all(|i| {
            let t = t0 + (t1 - t0) * from_usize::<S>(i) / from_usize::<S>(points.max(1));
            set.contains(&self.value(t))
        })
    }
}

impl<S> fmt::Debug for DisturbanceSignal<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DisturbanceSignal")
            .field("dim", &self.dim)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

/// One classical RK4 step of `ẋ = f(x, u, w(t))`.
fn rk4_step<S: Scalar>(plant: &PlantModel<S>, x: &[S], u: &[S], w: &DisturbanceSignal<S>, t: S, h: S) -> Vec<S> {
    let two = cast::<S>(2.0);
    let six = cast::<S>(6.0);
    let half = h / two;
    let w_mid = w.value(t + half);
    let k1 = plant.dynamics(x, u, &w.value(t));
    let k2 = plant.dynamics(&axpy(x, half, &k1), u, &w_mid);
    let k3 = plant.dynamics(&axpy(x, half, &k2), u, &w_mid);
    let k4 = plant.dynamics(&axpy(x, h, &k3), u, &w.value(t + h));
    x.iter()
        .enumerate()
        .map(|(i, &xi)| xi + h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect()
}

/// State reached after holding `u` over `[t0, t0 + tau]` (the sampled map ψ).
pub fn integrate_hold<S: Scalar>(
    plant: &PlantModel<S>,
    x0: &[S],
    u: &[S],
    w: &DisturbanceSignal<S>,
    t0: S,
    tau: S,
    substeps: usize,
) -> Result<Vec<S>, PlantError> {
    integrate_hold_dense(plant, x0, u, w, t0, tau, substeps, |_, _| {})
}

/// Like [`integrate_hold`], calling `observe(t, x)` after every substep.
#[allow(clippy::too_many_arguments)]
pub fn integrate_hold_dense<S: Scalar>(
    plant: &PlantModel<S>,
    x0: &[S],
    u: &[S],
    w: &DisturbanceSignal<S>,
    t0: S,
    tau: S,
    substeps: usize,
    mut observe: impl FnMut(S, &[S]),
) -> Result<Vec<S>, PlantError> {
    if !(tau > S::zero()) {
        return Err(PlantError::InvalidParameter(format!("sampling period must be positive, got {tau}")));
    }
    if substeps == 0 {
        return Err(PlantError::InvalidParameter("substeps must be at least 1".into()));
    }
    check_dim("state", plant.state_dim(), x0.len())?;
    check_dim("input", plant.input_dim(), u.len())?;
    check_dim("disturbance signal", plant.disturbance_dim(), w.dim())?;
    let h = tau / from_usize::<S>(substeps);
    let mut x = x0.to_vec();
    for i in 0..substeps {
        let t = t0 + h * from_usize::<S>(i);
        if !x.is_empty() {
            x = rk4_step(plant, &x, u, w, t, h);
        }
        if !all_finite(&x) {
            return Err(PlantError::IntegrationDiverged { time: to_f64(t + h) });
        }
        observe(t + h, &x);
    }
    Ok(x)
}

/// Settings for [`probe_lyapunov_decay`].
#[derive(Clone, Debug)]
pub struct DecayProbe<S> {
    pub trials: usize,
    /// Simulated time per trial.
    pub horizon: S,
    /// RK4 steps per trial; the decay inequality is checked at each step.
    pub steps: usize,
    /// Half-width of the random initial offset from the steady state.
    pub perturbation: S,
    pub disturbance: DisturbanceSignal<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport<S> {
    /// Largest observed `V̇ + μV − σ_c(‖ẇ‖)`; positive means the claimed decay is violated.
    pub worst_margin: S,
    pub violations: usize,
    pub evaluations: usize,
}

/// Checks `V̇ ≤ −μV + σ_c(‖ẇ‖)` along constant-input trajectories from random
/// initial conditions. `V̇` is a central difference along the flow, exact for
/// quadratic `V`.
pub fn probe_lyapunov_decay<S: Scalar, R: Rng + ?Sized>(
    plant: &PlantModel<S>,
    cert: &LyapunovCertificate<S>,
    v: &LyapunovFn<S>,
    probe: &DecayProbe<S>,
    rng: &mut R,
) -> DecayReport<S> {
    let mut report = DecayReport { worst_margin: S::neg_infinity(), violations: 0, evaluations: 0 };
    let w = &probe.disturbance;
    let dt = probe.horizon / from_usize::<S>(probe.steps.max(1));
    let fd = cast::<S>(1e-5) * dt.min(S::one());
    for _ in 0..probe.trials {
        let u = plant.input_set().sample(rng);
        let xs = plant.steady_state(&u, &w.value(S::zero()));
        let mut x: Vec<S> = xs
            .iter()
            .map(|&xi| xi + probe.perturbation * cast::<S>(rng.gen_range(-1.0..=1.0)))
            .collect();
        let mut t = S::zero();
        for _ in 0..=probe.steps {
            let wt = w.value(t);
            let f = plant.dynamics(&x, &u, &wt);
            let vp = v(&axpy(&x, fd, &f), &u, &w.value(t + fd));
            let vm = v(&axpy(&x, -fd, &f), &u, &w.value(t - fd));
            let vdot = (vp - vm) / (fd + fd);
            let val = v(&x, &u, &wt);
            let margin = vdot + cert.mu * val - cert.sigma_c.eval(norm(&w.derivative(t)));
            let tol = cast::<S>(1e-7) * (S::one() + val.abs() + vdot.abs());
            if margin > tol {
                report.violations += 1;
            }
            report.worst_margin = report.worst_margin.max(margin);
            report.evaluations += 1;
            x = rk4_step(plant, &x, &u, w, t, dt);
            t = t + dt;
            if !all_finite(&x) {
                break;
            }
        }
    }
    report
}

/// Largest `‖f(x_ss(u,w), u, w)‖` over random `(u, w) ∈ 𝒰 × 𝒲`.
pub fn steady_state_residual<S: Scalar, R: Rng + ?Sized>(plant: &PlantModel<S>, probes: usize, rng: &mut R) -> S {
    (0..probes)
        .map(|_| {
            let u = plant.input_set().sample(rng);
            let w = plant.disturbance_set().sample(rng);
            let xs = plant.steady_state(&u, &w);
            norm(&plant.dynamics(&xs, &u, &w))
        })
        .fold(S::zero(), S::max)
}

/// Sampled lower estimate of the Lipschitz constant of `g` in `x`, probing
/// states within `radius` of random steady states.
pub fn estimate_output_lipschitz<S: Scalar, R: Rng + ?Sized>(
    plant: &PlantModel<S>,
    probes: usize,
    radius: S,
    rng: &mut R,
) -> S {
    let mut best = S::zero();
    for _ in 0..probes {
        let u = plant.input_set().sample(rng);
        let w = plant.disturbance_set().sample(rng);
        let xs = plant.steady_state(&u, &w);
        let mut jitter = |c: S| c + radius * cast::<S>(rng.gen_range(-1.0..=1.0));
        let a: Vec<S> = xs.iter().map(|&c| jitter(c)).collect();
        let b: Vec<S> = xs.iter().map(|&c| jitter(c)).collect();
        let dx = linalg::dist(&a, &b);
        if dx > S::zero() {
            let dy = linalg::dist(&plant.output(&a, &u, &w), &plant.output(&b, &u, &w));
            best = best.max(dy / dx);
        }
    }
    best
}

/// Sampled lower estimate of the Lipschitz constant of `x_ss` in `u`.
pub fn estimate_steady_state_lipschitz<S: Scalar, R: Rng + ?Sized>(
    plant: &PlantModel<S>,
    probes: usize,
    rng: &mut R,
) -> S {
    let mut best = S::zero();
    for _ in 0..probes {
        let w = plant.disturbance_set().sample(rng);
        let u1 = plant.input_set().sample(rng);
        let u2 = plant.input_set().sample(rng);
        let du = linalg::dist(&u1, &u2);
        if du > S::zero() {
            let dx = linalg::dist(&plant.steady_state(&u1, &w), &plant.steady_state(&u2, &w));
            best = best.max(dx / du);
        }
    }
    best
}
