//! Post-hoc checks of simulated logs against the certificate bounds.

use crate::certificates::{envelope_with, CertificateBundle, CertificateError};
use crate::linalg;
use crate::scalar::{cast, Scalar};

use super::log::TrajectoryLog;
use super::tail_max;

/// Absolute slack allowed when comparing a log against a bound.
pub const CHECK_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RecursionReport<S> {
    pub steps: usize,
    /// Smallest `rhs − W^{k+1}` over all steps (negative means violated).
    pub worst_margin: S,
    /// Number of steps with margin below `−slack`.
    pub violations: usize,
    pub slack: S,
}

/// Evaluates `W^{k+1} ≤ c_W W^k + c_W ℓ_W ‖u^{k+1} − u^k‖ + √τ σ(z^k)` along a log.
///
/// Returns `None` when the log carries no Lyapunov values.
pub fn check_lemma1<S: Scalar>(
    log: &TrajectoryLog<S>,
    bundle: &CertificateBundle<S>,
    tau: S,
    slack: S,
) -> Result<Option<RecursionReport<S>>, CertificateError> {
    let mut worst = S::infinity();
    let mut violations = 0;
    let mut steps = 0;
    for pair in log.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (Some(wa), Some(wb)) = (a.lyapunov, b.lyapunov) else {
            return Ok(None);
        };
        let rhs = bundle.recursion_rhs(tau, wa, linalg::dist(&b.u, &a.u), a.z)?;
        let margin = rhs - wb;
        worst = worst.min(margin);
        if margin < -slack {
            violations += 1;
        }
        steps += 1;
    }
    Ok(Some(RecursionReport { steps, worst_margin: worst, violations, slack }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IssReport<S> {
    /// `η₁ c_M^k ‖(δx⁰, δu⁰)‖ + γ(sup_{s<k} z^s)` per sample.
    pub envelope: Vec<S>,
    /// Smallest `envelope(k) − ‖(δx^k, δu^k)‖`.
    pub worst_envelope_margin: S,
    pub envelope_violations: usize,
    /// Largest `‖δy^k‖` over the tail window.
    pub tail_dy_max: S,
    /// Largest `z^k` over the tail window.
    pub tail_z_max: S,
    /// `γ_a(tail_z_max)`.
    pub tail_gain: S,
    pub tail_fraction: f64,
}

impl<S: Scalar> IssReport<S> {
    pub fn envelope_ok(&self) -> bool {
        self.envelope_violations == 0
    }

    pub fn tail_ok(&self) -> bool {
        self.tail_dy_max <= self.tail_gain + cast::<S>(CHECK_SLACK)
    }
}

/// Compares a log with the ISS envelope and the asymptotic gain.
///
/// Errors when `(τ, ε)` is not certified.
pub fn check_iss<S: Scalar>(
    log: &TrajectoryLog<S>,
    bundle: &CertificateBundle<S>,
    tau: S,
    eps: S,
    tail_fraction: f64,
) -> Result<IssReport<S>, CertificateError> {
    let c = bundle.iss_constants(tau, eps)?;
    let slack = cast::<S>(CHECK_SLACK);
    let first = log.samples.first();
    let init = first.map(|s| (linalg::norm(&s.dx), linalg::norm(&s.du))).unwrap_or((S::zero(), S::zero()));
    let mut envelope = Vec::with_capacity(log.len());
    let mut worst = S::infinity();
    let mut violations = 0;
    let mut z_sup = S::zero();
    for s in &log.samples {
        let e = envelope_with(bundle, &c, tau, init, z_sup, s.k);
        let margin = e - s.joint_norm();
        worst = worst.min(margin);
        if margin < -slack {
            violations += 1;
        }
        envelope.push(e);
        z_sup = z_sup.max(s.z);
    }
    let dy: Vec<S> = log.samples.iter().map(|s| s.dy_norm()).collect();
    let z: Vec<S> = log.samples.iter().map(|s| s.z).collect();
    let tail_z_max = tail_max(&z, tail_fraction);
    let tail_gain = bundle.asymptotic_gain(tau, eps, tail_z_max)?;
    Ok(IssReport {
        envelope,
        worst_envelope_margin: worst,
        envelope_violations: violations,
        tail_dy_max: tail_max(&dy, tail_fraction),
        tail_z_max,
        tail_gain,
        tail_fraction,
    })
}
