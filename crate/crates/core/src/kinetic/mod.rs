//! Particle phase: weighted ensemble, pushes, interpolation, deposition.
//!
//! The kinetic distribution is carried by `n` weighted particles `(x_i, v_i,
//! w_i)` with fixed weights summing to one.  Particles obey the drag
//! characteristics `dX/dt = V`, `dV/dt = u(X) - V`; one step freezes the
//! fluid velocity at a midpoint position and applies the exact solution of
//! the frozen-field system, so the push is exact whenever `u` is constant.
//!
//! Grid coupling uses cloud-in-cell (trilinear) weights, and interpolation
//! and deposition share the same kernel, so the two operations are adjoint:
//! the box integral of any deposited moment equals the particle sum exactly,
//! and the grid integral of `rho * u` equals the particle sum of interpolated
//! `u`, which is what keeps the discrete momentum exchange between the two
//! phases honest.

mod flow;
mod sampling;

pub use flow::{flow_jacobian, CharacteristicsFlow, FieldHistory};
pub use sampling::InitialDensity;

use crate::spectral::{Grid3, RealField};
use crate::{Error, Result};

/// Weighted particle ensemble on a periodic box of edge `box_length`.
///
/// Weights are fixed at construction and never mutated afterwards; mass
/// conservation is therefore exact by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    box_length: f64,
    pos: Vec<[f64; 3]>,
    vel: Vec<[f64; 3]>,
    weight: Vec<f64>,
}

impl ParticleEnsemble {
    /// Builds an ensemble from raw arrays.  Positions are wrapped into the
    /// box; weights must be finite and nonnegative.
    pub fn from_parts(
        box_length: f64,
        pos: Vec<[f64; 3]>,
        vel: Vec<[f64; 3]>,
        weight: Vec<f64>,
    ) -> Result<Self> {
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "box_length = {box_length} must be positive"
            )));
        }
        if pos.len() != vel.len() || pos.len() != weight.len() {
            return Err(Error::ShapeMismatch(format!(
                "particle arrays disagree: {} positions, {} velocities, {} weights",
                pos.len(),
                vel.len(),
                weight.len()
            )));
        }
        if pos.is_empty() {
            return Err(Error::InvalidArgument("ensemble must hold at least one particle".into()));
        }
        for p in &pos {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite("particle position".into()));
            }
        }
        for v in &vel {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite("particle velocity".into()));
            }
        }
        if weight.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and >= 0".into()));
        }
        let pos = pos
            .into_iter()
            .map(|p| [wrap(p[0], box_length), wrap(p[1], box_length), wrap(p[2], box_length)])
            .collect();
        Ok(Self { box_length, pos, vel, weight })
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.pos
    }

    pub fn velocities(&self) -> &[[f64; 3]] {
        &self.vel
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Sum of weights (the total kinetic mass).
    pub fn total_weight(&self) -> f64 {
        self.weight.iter().sum()
    }

    /// Total kinetic momentum `sum_i w_i v_i`.
    pub fn momentum(&self) -> [f64; 3] {
        let mut p = [0.0; 3];
        for (v, w) in self.vel.iter().zip(&self.weight) {
            for c in 0..3 {
                p[c] += w * v[c];
            }
        }
        p
    }

    /// Kinetic energy `1/2 sum_i w_i |v_i|^2`.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self
            .vel
            .iter()
            .zip(&self.weight)
            .map(|(v, w)| w * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
            .sum::<f64>()
    }
}

#[inline]
fn wrap(x: f64, length: f64) -> f64 {
    let r = x.rem_euclid(length);
    // rem_euclid can return `length` itself when x is a tiny negative number.
    if r >= length {
        r - length
    } else {
        r
    }
}

/// Cloud-in-cell stencil for one position: base node, wrapped next node, and
/// the fractional offsets along each axis.
#[inline]
fn cic_stencil(grid: &Grid3, pos: [f64; 3]) -> ([usize; 3], [usize; 3], [f64; 3]) {
    let n = grid.n();
    let dx = grid.dx();
    let mut base = [0usize; 3];
    let mut next = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let s = wrap(pos[a], grid.length()) / dx;
        let cell = s.floor() as usize;
        // Guard against s == n from rounding at the upper box edge.
        let cell = cell.min(n - 1);
        base[a] = cell;
        next[a] = (cell + 1) % n;
        frac[a] = s - cell as f64;
    }
    (base, next, frac)
}

/// Trilinear interpolation of a vector field at a batch of positions.
///
/// Exact for fields affine on a cell; at grid nodes it reproduces nodal
/// values exactly.  Positions are wrapped periodically.  A non-finite input
/// or field value aborts with an error.
pub fn interpolate_vector(field: &RealField, positions: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
    if field.ncomp() != 3 {
        return Err(Error::InvalidArgument("interpolate_vector needs a 3-component field".into()));
    }
    positions
        .iter()
        .map(|p| {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite("interpolation position".into()));
            }
            let v = interp_vector_one(field, *p);
            if v.iter().all(|c| c.is_finite()) {
                Ok(v)
            } else {
                Err(Error::NonFinite("interpolated field value".into()))
            }
        })
        .collect()
}

/// Trilinear interpolation of a scalar field at a batch of positions.
pub fn interpolate_scalar(field: &RealField, positions: &[[f64; 3]]) -> Result<Vec<f64>> {
    if field.ncomp() != 1 {
        return Err(Error::InvalidArgument("interpolate_scalar needs a scalar field".into()));
    }
    positions
        .iter()
        .map(|p| {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite("interpolation position".into()));
            }
            let v = interp_slab_one(&field.grid(), field.slab(0), *p);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite("interpolated field value".into()))
            }
        })
        .collect()
}

#[inline]
pub(crate) fn interp_vector_one(field: &RealField, pos: [f64; 3]) -> [f64; 3] {
    let grid = field.grid();
    [
        interp_slab_one(&grid, field.slab(0), pos),
        interp_slab_one(&grid, field.slab(1), pos),
        interp_slab_one(&grid, field.slab(2), pos),
    ]
}

#[inline]
pub(crate) fn interp_slab_one(grid: &Grid3, slab: &[f64], pos: [f64; 3]) -> f64 {
    let (base, next, frac) = cic_stencil(grid, pos);
    let (fx, fy, fz) = (frac[0], frac[1], frac[2]);
    let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
    let mut acc = 0.0;
    for (wi, i) in [(gx, base[0]), (fx, next[0])] {
        for (wj, j) in [(gy, base[1]), (fy, next[1])] {
            let w2 = wi * wj;
            acc += w2 * gz * slab[grid.idx(i, j, base[2])];
            acc += w2 * fz * slab[grid.idx(i, j, next[2])];
        }
    }
    acc
}

/// Grid moments of the ensemble, deposited with cloud-in-cell weights and
/// normalized per unit volume (dividing by `(L/N)^3`).
///
/// Box integrals reproduce particle sums exactly: `integral(rho) = sum w_i`,
/// `integral(current) = sum w_i v_i`, `integral(m_p) = sum w_i |v_i|^p`.
#[derive(Debug, Clone)]
pub struct MomentFields {
    /// Mass density `rho`.
    pub rho: RealField,
    /// Momentum density `j = rho * mean velocity`.
    pub current: RealField,
    /// Absolute velocity moments `m_p`, keyed by the requested order `p`.
    pub abs_moments: Vec<(f64, RealField)>,
}

/// Largest absolute-moment order accepted by [`deposit_moments`].
pub const MAX_MOMENT_ORDER: f64 = 16.0;

/// Deposits mass, current, and the requested `|v|^p` moments on `grid`.
pub fn deposit_moments(
    ensemble: &ParticleEnsemble,
    grid: Grid3,
    abs_orders: &[f64],
) -> Result<MomentFields> {
    for &p in abs_orders {
        if !(p.is_finite() && (0.0..=MAX_MOMENT_ORDER).contains(&p)) {
            return Err(Error::InvalidArgument(format!(
                "moment order {p} outside supported range [0, {MAX_MOMENT_ORDER}]"
            )));
        }
    }
    if (ensemble.box_length - grid.length()).abs() > 1e-12 * grid.length() {
        return Err(Error::ShapeMismatch(format!(
            "ensemble box {} vs grid box {}",
            ensemble.box_length,
            grid.length()
        )));
    }
    let mut rho = RealField::zeros(grid, 1)?;
    let mut current = RealField::zeros(grid, 3)?;
    let mut abs: Vec<(f64, RealField)> =
        abs_orders.iter().map(|&p| (p, RealField::zeros(grid, 1).expect("scalar"))).collect();

    for idx in 0..ensemble.len() {
        let (base, next, frac) = cic_stencil(&grid, ensemble.pos[idx]);
        let w = ensemble.weight[idx];
        let v = ensemble.vel[idx];
        let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let (fx, fy, fz) = (frac[0], frac[1], frac[2]);
        let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
        for (wi, i) in [(gx, base[0]), (fx, next[0])] {
            for (wj, j) in [(gy, base[1]), (fy, next[1])] {
                for (wk, m) in [(gz, base[2]), (fz, next[2])] {
                    let cw = w * wi * wj * wk;
                    let node = grid.idx(i, j, m);
                    rho.slab_mut(0)[node] += cw;
                    for c in 0..3 {
                        current.slab_mut(c)[node] += cw * v[c];
                    }
                    for (p, field) in abs.iter_mut() {
                        field.slab_mut(0)[node] += cw * speed.powf(*p);
                    }
                }
            }
        }
    }

    let inv_vol = 1.0 / grid.cell_volume();
    for v in rho.data_mut() {
        *v *= inv_vol;
    }
    for v in current.data_mut() {
        *v *= inv_vol;
    }
    for (_, field) in abs.iter_mut() {
        for v in field.data_mut() {
            *v *= inv_vol;
        }
    }
    Ok(MomentFields { rho, current, abs_moments: abs })
}

/// One exponential drag push of every particle through time `dt` in the
/// nodal velocity field `field`.
///
/// Per particle the fluid velocity is frozen at `u* = u(x_mid)`, where
/// `x_mid` is the exact half-step position under the first interpolation;
/// the update is then the exact solution of `X' = V, V' = u* - V`:
///
/// ```text
/// V+ = u* + (V - u*) exp(-dt)
/// X+ = X + u* dt + (V - u*) (1 - exp(-dt))
/// ```
///
/// The step rejects (state unchanged) if any displacement exceeds half a
/// grid cell, so deposition stencils never skip cells between steps.
pub fn push_particles(
    ensemble: &ParticleEnsemble,
    field: &RealField,
    dt: f64,
) -> Result<ParticleEnsemble> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("push dt = {dt} must be positive")));
    }
    if field.ncomp() != 3 {
        return Err(Error::InvalidArgument("push needs a 3-component velocity field".into()));
    }
    let grid = field.grid();
    if (ensemble.box_length - grid.length()).abs() > 1e-12 * grid.length() {
        return Err(Error::ShapeMismatch(format!(
            "ensemble box {} vs field box {}",
            ensemble.box_length,
            grid.length()
        )));
    }
    let length = ensemble.box_length;
    let decay = (-dt).exp();
    let growth = -(-dt).exp_m1(); // 1 - exp(-dt), accurately for small dt
    let half_growth = -(-0.5 * dt).exp_m1();
    let max_disp = 0.5 * grid.dx();

    let mut pos = Vec::with_capacity(ensemble.len());
    let mut vel = Vec::with_capacity(ensemble.len());
    for idx in 0..ensemble.len() {
        let x = ensemble.pos[idx];
        let v = ensemble.vel[idx];
        let u1 = interp_vector_one(field, x);
        // Exact half-step position with u frozen at the particle's own node.
        let mut x_mid = [0.0; 3];
        for c in 0..3 {
            x_mid[c] = x[c] + 0.5 * dt * u1[c] + (v[c] - u1[c]) * half_growth;
        }
        let u_star = interp_vector_one(field, x_mid);
        let mut xn = [0.0; 3];
        let mut vn = [0.0; 3];
        let mut disp2 = 0.0;
        for c in 0..3 {
            let rel = v[c] - u_star[c];
            vn[c] = u_star[c] + rel * decay;
            let d = u_star[c] * dt + rel * growth;
            disp2 += d * d;
            xn[c] = wrap(x[c] + d, length);
        }
        if !(vn.iter().all(|c| c.is_finite()) && xn.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite(format!("particle {idx} after push")));
        }
        if disp2.sqrt() > max_disp {
            return Err(Error::Cfl(format!(
                "particle {idx} displacement {:.3e} exceeds dx/2 = {:.3e} (dt = {dt})",
                disp2.sqrt(),
                max_disp
            )));
        }
        pos.push(xn);
        vel.push(vn);
    }
    Ok(ParticleEnsemble {
        box_length: length,
        pos,
        vel,
        weight: ensemble.weight.clone(),
    })
}
