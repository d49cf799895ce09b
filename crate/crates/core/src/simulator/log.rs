//! Trajectory records and their CSV form.

use std::fmt::Write as _;

use crate::linalg::norm;
use crate::scalar::Scalar;

/// One logged sample `k` of the closed loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<S> {
    pub k: usize,
    pub t: S,
    pub x: Vec<S>,
    pub u: Vec<S>,
    pub y: Vec<S>,
    pub w: Vec<S>,
    /// `sup ‖ẇ‖` over `[t^k, t^k + τ]`.
    pub z: S,
    pub u_star: Vec<S>,
    pub y_star: Vec<S>,
    /// `x^k − x_ss(u^k, w^k)`.
    pub dx: Vec<S>,
    /// `u^k − u*(w^k)`.
    pub du: Vec<S>,
    /// `y^k − y*(w^k)`.
    pub dy: Vec<S>,
    /// `W^k = √V(x^k, u^k, w^k)` when the plant registers `V`.
    pub lyapunov: Option<S>,
    /// ISS envelope value, filled by [`TrajectoryLog::attach_envelope`].
    pub envelope: Option<S>,
}

impl<S: Scalar> Sample<S> {
    pub fn dx_norm(&self) -> S {
        norm(&self.dx)
    }

    pub fn du_norm(&self) -> S {
        norm(&self.du)
    }

    pub fn dy_norm(&self) -> S {
        norm(&self.dy)
    }

    /// `‖(δx^k, δu^k)‖`.
    pub fn joint_norm(&self) -> S {
        crate::linalg::stacked_norm(&self.dx, &self.du)
    }
}

/// Dense inter-sample point recorded between `t^k` and `t^{k+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseRow<S> {
    /// Index of the sample interval the row belongs to.
    pub interval: usize,
    pub t: S,
    pub x: Vec<S>,
    pub u: Vec<S>,
    pub y: Vec<S>,
    pub w: Vec<S>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog<S> {
    pub samples: Vec<Sample<S>>,
    pub dense: Vec<DenseRow<S>>,
    /// `(n_x, n_u, n_y, n_w)`, fixed at construction so empty logs still have a header.
    pub dims: (usize, usize, usize, usize),
}

impl<S: Scalar> TrajectoryLog<S> {
    pub fn new(n_x: usize, n_u: usize, n_y: usize, n_w: usize) -> Self {
        Self { samples: Vec::new(), dense: Vec::new(), dims: (n_x, n_u, n_y, n_w) }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample<S>> {
        self.samples.last()
    }

    /// Samples in the final `fraction` of the log (at least one).
    pub fn tail(&self, fraction: f64) -> &[Sample<S>] {
        let n = self.samples.len();
        let keep = ((n as f64 * fraction).ceil() as usize).clamp(1.min(n), n);
        &self.samples[n - keep..]
    }

    pub fn du_norms(&self) -> Vec<S> {
        self.samples.iter().map(Sample::du_norm).collect()
    }

    /// Fills `envelope` for every sample from a closure `(k, running sup of z^{0..k−1}) ↦ value`.
    pub fn attach_envelope(&mut self, mut envelope: impl FnMut(usize, S) -> S) {
        let mut z_sup = S::zero();
        for s in &mut self.samples {
            s.envelope = Some(envelope(s.k, z_sup));
            z_sup = z_sup.max(s.z);
        }
    }

    /// Header `t,k,x_0..,u_0..,y_0..,w_0..,du_norm,dx_norm,dy_norm,W,envelope,z`.
    pub fn csv_header(&self) -> String {
        let (nx, nu, ny, nw) = self.dims;
        let mut cols = vec!["t".to_string(), "k".to_string()];
        for (prefix, n) in [("x", nx), ("u", nu), ("y", ny), ("w", nw)] {
            cols.extend((0..n).map(|i| format!("{prefix}_{i}")));
        }
        cols.extend(["du_norm", "dx_norm", "dy_norm", "W", "envelope", "z"].map(String::from));
        cols.join(",")
    }

    /// CSV text: one row per sample, dense rows (`k = -1`) after the sample that opens their interval.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        let mut dense = self.dense.iter().peekable();
        for s in &self.samples {
            write_row(&mut out, s.t, &s.k.to_string(), [&s.x, &s.u, &s.y, &s.w]);
            let opt = |v: Option<S>| v.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                ",{},{},{},{},{},{}",
                s.du_norm(),
                s.dx_norm(),
                s.dy_norm(),
                opt(s.lyapunov),
                opt(s.envelope),
                s.z
            );
            while let Some(d) = dense.next_if(|d| d.interval == s.k) {
                write_row(&mut out, d.t, "-1", [&d.x, &d.u, &d.y, &d.w]);
                out.push_str(",,,,,,\n");
            }
        }
        out
    }
}

fn write_row<S: Scalar>(out: &mut String, t: S, k: &str, blocks: [&Vec<S>; 4]) {
    let _ = write!(out, "{t},{k}");
    for b in blocks {
        for v in b {
            let _ = write!(out, ",{v}");
        }
    }
}
