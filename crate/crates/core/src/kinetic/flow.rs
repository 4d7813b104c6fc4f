//! Backward particle characteristics and the velocity-flow Jacobian.
//!
//! Along a characteristic the velocity obeys `dv/ds = u(s, x) - v`, so the
//! backward map from `(t, x, v)` to the initial velocity `V(0)` expands
//! volume in `v`: with `u = 0` it is exactly `V(0) = v e^t` and the Jacobian
//! determinant is `e^{3t}`.  The determinant enters the change of variables
//! that pushes weighted velocity averages back to the initial density, so it
//! must stay computable from stored field history alone.
//!
//! [`FieldHistory`] keeps snapshots of the fluid velocity on a shared grid
//! and interpolates linearly in time between them; [`CharacteristicsFlow`]
//! integrates the characteristic backwards with the same frozen-field
//! exponential update used by the forward pusher, evaluated at a midpoint
//! predictor.  [`flow_jacobian`] differentiates the backward velocity map by
//! central differences and guards against catastrophic cancellation when the
//! step is too small for the arithmetic.

use super::interpolate_vector;
use crate::spectral::RealField;
use crate::{Error, Result};

/// Time-ordered snapshots of a vector field on a fixed grid.
#[derive(Debug, Clone)]
pub struct FieldHistory {
    times: Vec<f64>,
    fields: Vec<RealField>,
}

impl FieldHistory {
    pub fn new() -> Self {
        Self { times: Vec::new(), fields: Vec::new() }
    }

    /// Appends a snapshot; times must increase strictly and all snapshots
    /// must share one grid.
    pub fn push(&mut self, time: f64, field: RealField) -> Result<()> {
        if !time.is_finite() {
            return Err(Error::NonFinite("history time".into()));
        }
        if field.ncomp() != 3 {
            return Err(Error::ShapeMismatch("field history holds vector fields".into()));
        }
        if let Some(last) = self.fields.last() {
            if last.grid() != field.grid() {
                return Err(Error::ShapeMismatch("history grids differ".into()));
            }
            if time <= *self.times.last().expect("nonempty") {
                return Err(Error::InvalidArgument(format!(
                    "history times must increase: {time} after {}",
                    self.times.last().expect("nonempty")
                )));
            }
        }
        self.times.push(time);
        self.fields.push(field);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn end_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Field value at `(time, pos)`, linear in time between snapshots.
    /// Times outside the recorded range by more than `1e-9` are rejected.
    pub fn sample(&self, time: f64, pos: [f64; 3]) -> Result<[f64; 3]> {
        let (first, last) = match (self.start_time(), self.end_time()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InvalidArgument("empty field history".into())),
        };
        if time < first - 1e-9 || time > last + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "history sample time {time} outside [{first}, {last}]"
            )));
        }
        let t = time.clamp(first, last);
        // Last interval containing t: times[k] <= t <= times[k+1].
        let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).expect("finite time")) {
            Ok(i) => i.min(self.times.len() - 1),
            Err(i) => i - 1,
        };
        if k + 1 >= self.times.len() {
            let u = interpolate_vector(&self.fields[k], &[pos])?;
            return Ok(u[0]);
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let theta = (t - t0) / (t1 - t0);
        let u0 = interpolate_vector(&self.fields[k], &[pos])?[0];
        let u1 = interpolate_vector(&self.fields[k + 1], &[pos])?[0];
        let mut out = [0.0; 3];
        for a in 0..3 {
            out[a] = (1.0 - theta) * u0[a] + theta * u1[a];
        }
        Ok(out)
    }
}

impl Default for FieldHistory {
    fn default() -> Self {
        Self::new()
    }
}

/// Backward integrator for the drag characteristic over a field history.
#[derive(Debug, Clone, Copy)]
pub struct CharacteristicsFlow<'a> {
    history: &'a FieldHistory,
    step: f64,
}

impl<'a> CharacteristicsFlow<'a> {
    pub fn new(history: &'a FieldHistory, step: f64) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::InvalidArgument("empty field history".into()));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidArgument(format!("backward step {step} must be positive")));
        }
        Ok(Self { history, step })
    }

    /// Integrates the characteristic from `(time, x, v)` back to the start
    /// of the recorded history and returns the initial `(X(0), V(0))`.
    ///
    /// Each substep of size `h` freezes the field at a midpoint predictor
    /// `u* = u(s - h/2, x - (h/2) v)` and applies the exact drag solution
    /// run in reverse: `v_prev = u* + (v - u*) e^h` and
    /// `x_prev = x - u* h - (v - u*)(e^h - 1)`.
    pub fn backward_state(&self, time: f64, x: [f64; 3], v: [f64; 3]) -> Result<([f64; 3], [f64; 3])> {
        let start = self.history.start_time().expect("nonempty");
        let end = self.history.end_time().expect("nonempty");
        if !(time >= start - 1e-9 && time <= end + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "backward start time {time} outside history [{start}, {end}]"
            )));
        }
        let mut s = time.clamp(start, end);
        let mut x = x;
        let mut v = v;
        while s > start + 1e-14 {
            let h = self.step.min(s - start);
            let mut x_pred = [0.0; 3];
            for a in 0..3 {
                x_pred[a] = x[a] - 0.5 * h * v[a];
            }
            let u_star = self.history.sample(s - 0.5 * h, x_pred)?;
            let growth = h.exp_m1(); // e^h - 1
            for a in 0..3 {
                let rel = v[a] - u_star[a];
                v[a] = u_star[a] + rel * (growth + 1.0);
                x[a] -= u_star[a] * h + rel * growth;
            }
            if !(v.iter().all(|c| c.is_finite()) && x.iter().all(|c| c.is_finite())) {
                return Err(Error::NonFinite("backward characteristic state".into()));
            }
            s -= h;
        }
        Ok((x, v))
    }
}

/// Jacobian determinant `|det dV(0)/dv|` of the backward velocity map at
/// `(time, x, v)`, by central differences with stencil half-width `fd_eps`.
///
/// Fails if the three finite-difference columns are so small relative to the
/// map value that the difference has lost more than about three digits to
/// cancellation, which signals an unusable `fd_eps`.
pub fn flow_jacobian(
    flow: &CharacteristicsFlow<'_>,
    time: f64,
    x: [f64; 3],
    v: [f64; 3],
    fd_eps: f64,
) -> Result<f64> {
    if !(fd_eps.is_finite() && fd_eps > 0.0) {
        return Err(Error::InvalidArgument(format!("fd_eps = {fd_eps} must be positive")));
    }
    let (_, center) = flow.backward_state(time, x, v)?;
    let scale = 1.0 + center.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut jac = [[0.0f64; 3]; 3]; // jac[b][a] = d Gamma_b / d v_a
    for a in 0..3 {
        let mut vp = v;
        let mut vm = v;
        vp[a] += fd_eps;
        vm[a] -= fd_eps;
        let (_, gp) = flow.backward_state(time, x, vp)?;
        let (_, gm) = flow.backward_state(time, x, vm)?;
        let max_diff = (0..3).fold(0.0f64, |m, b| m.max((gp[b] - gm[b]).abs()));
        if max_diff < 1e3 * f64::EPSILON * scale {
            return Err(Error::InvalidArgument(format!(
                "fd_eps = {fd_eps} too small: velocity differences cancel to rounding"
            )));
        }
        for b in 0..3 {
            jac[b][a] = (gp[b] - gm[b]) / (2.0 * fd_eps);
        }
    }
    let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
        - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
        + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
    Ok(det.abs())
}
