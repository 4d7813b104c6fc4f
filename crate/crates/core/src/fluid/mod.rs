//! Incompressible fluid phase: pseudo-spectral step and divergence-free state.
//!
//! The velocity obeys unit-viscosity Navier-Stokes with an external force,
//! `du/dt + P div(u (x) u) = Lap(u) + P F`, advanced in Fourier space by an
//! integrating-factor midpoint scheme: writing `E_t = exp(-|k|^2 t)` for the
//! exact heat semigroup,
//!
//! ```text
//! k1    = N(u_n) + P F
//! u_mid = E_{dt/2} (u_n + dt/2 k1)
//! u_new = E_dt u_n + dt E_{dt/2} (N(u_mid) + P F)
//! ```
//!
//! where `N(u) = -P dealias[div(u (x) u)]` is the Galerkin-truncated
//! advection term.  With the nonlinearity and force off the scheme reduces to
//! the exact heat flow, and the truncated advection conserves energy exactly,
//! so all dissipation is either genuinely viscous or O(dt^2) quadrature.
//!
//! The force is frozen over the step (callers pass its midpoint value), which
//! keeps the splitting against the particle phase second order.
//!
//! [`FluidState`] wraps a coefficient field and maintains two invariants:
//! divergence-free to rounding and supported inside the dealiasing band.

use crate::spectral::{
    apply_dealias, derivative_wavenumbers, leray_project, FourierField, Grid3, RealField,
};
use crate::{Error, Result};
use num_complex::Complex64;

/// Kinematic viscosity of the fluid phase.  The exponential factors hardcode
/// this value; the constant exists so formulas elsewhere read dimensionally.
pub const VISCOSITY: f64 = 1.0;

/// Largest relative divergence admitted by [`FluidState::from_velocity`].
pub const DIVERGENCE_TOL: f64 = 1e-10;

/// Advective CFL bound enforced by [`ns_step`]: `dt * max|u| / dx <= 1/2`.
pub const CFL_LIMIT: f64 = 0.5;

/// Divergence-free, dealiased velocity coefficients of the fluid phase.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    velocity: FourierField,
}

impl FluidState {
    /// Wraps coefficients that are already divergence-free; rejects fields
    /// whose relative divergence exceeds [`DIVERGENCE_TOL`].  The dealiasing
    /// mask is applied (it cannot create divergence).
    pub fn from_velocity(mut hat: FourierField) -> Result<Self> {
        if hat.ncomp() != 3 {
            return Err(Error::InvalidArgument("fluid state needs a vector field".into()));
        }
        if !hat.is_finite() {
            return Err(Error::NonFinite("fluid velocity coefficients".into()));
        }
        apply_dealias(&mut hat);
        let div = hat.max_relative_divergence()?;
        if div > DIVERGENCE_TOL {
            return Err(Error::InvalidArgument(format!(
                "velocity field has relative divergence {div:.3e} > {DIVERGENCE_TOL:.0e}; \
                 project it first"
            )));
        }
        Ok(Self { velocity: hat })
    }

    /// Projects arbitrary coefficients onto the admissible set (Leray
    /// projection plus dealiasing) and wraps the result.
    pub fn project(hat: FourierField) -> Result<Self> {
        let mut hat = leray_project(&hat)?;
        apply_dealias(&mut hat);
        if !hat.is_finite() {
            return Err(Error::NonFinite("fluid velocity coefficients".into()));
        }
        Ok(Self { velocity: hat })
    }

    pub fn grid(&self) -> Grid3 {
        self.velocity.grid()
    }

    pub fn velocity(&self) -> &FourierField {
        &self.velocity
    }

    pub fn into_velocity(self) -> FourierField {
        self.velocity
    }

    /// Nodal velocity field (inverse transform of the coefficients).
    pub fn nodal_velocity(&self) -> RealField {
        self.velocity.to_real()
    }

    /// Fluid kinetic energy `1/2 |u|_{L^2}^2`.
    pub fn energy(&self) -> f64 {
        let n = self.velocity.l2_norm();
        0.5 * n * n
    }
}

/// Largest pointwise speed `max_x |u(x)|` of a nodal vector field.
pub fn max_speed(field: &RealField) -> Result<f64> {
    if field.ncomp() != 3 {
        return Err(Error::InvalidArgument("max_speed needs a vector field".into()));
    }
    let (ux, uy, uz) = (field.slab(0), field.slab(1), field.slab(2));
    let mut worst = 0.0f64;
    for i in 0..ux.len() {
        worst = worst.max(ux[i] * ux[i] + uy[i] * uy[i] + uz[i] * uz[i]);
    }
    Ok(worst.sqrt())
}

/// Galerkin-truncated advection term `N(u) = -P dealias[div(u (x) u)]` from
/// velocity coefficients.  The zero mode is exactly zero and the result is
/// orthogonal to `u` in the energy inner product.
pub fn nonlinear_term(hat: &FourierField) -> Result<FourierField> {
    if hat.ncomp() != 3 {
        return Err(Error::InvalidArgument("nonlinear term needs a vector field".into()));
    }
    let nodal = hat.to_real();
    nonlinear_from_nodal(&nodal)
}

/// Advection term computed from an already available nodal velocity.
fn nonlinear_from_nodal(nodal: &RealField) -> Result<FourierField> {
    let grid = nodal.grid();
    let n = grid.n();
    let kd = derivative_wavenumbers(grid);
    let mut out = FourierField::zeros(grid, 3)?;
    // Six distinct entries of the symmetric tensor u_a u_b.
    for a in 0..3 {
        for b in a..3 {
            let mut prod = RealField::zeros(grid, 1)?;
            {
                let (ua, ub) = (nodal.slab(a), nodal.slab(b));
                let dst = prod.slab_mut(0);
                for i in 0..dst.len() {
                    dst[i] = ua[i] * ub[i];
                }
            }
            let tab = FourierField::from_real(&prod);
            for i in 0..n {
                for j in 0..n {
                    let row = (i * n + j) * n;
                    for m in 0..n {
                        let k = [kd[i], kd[j], kd[m]];
                        let node = row + m;
                        let t = tab.slab(0)[node];
                        // -(i k_a) T_ab feeds component b, and symmetrically.
                        out.slab_mut(b)[node] += Complex64::new(0.0, -k[a]) * t;
                        if a != b {
                            out.slab_mut(a)[node] += Complex64::new(0.0, -k[b]) * t;
                        }
                    }
                }
            }
        }
    }
    let mut out = leray_project(&out)?;
    apply_dealias(&mut out);
    Ok(out)
}

/// One integrating-factor midpoint step of the forced fluid equation.
///
/// `force` is held fixed over the step; pass its midpoint value for second
/// order.  With `nonlinear` off and no force the step is the exact heat
/// semigroup.  Rejects steps violating the advective CFL bound
/// `dt max|u| / dx <= 1/2` (only meaningful, and only checked, when the
/// nonlinearity is active).
pub fn ns_step(
    state: &FluidState,
    force: Option<&FourierField>,
    dt: f64,
    nonlinear: bool,
) -> Result<FluidState> {
    // Project and dealias the supplied force once; both stages reuse it.
    let fixed = match force {
        Some(f) => {
            if f.ncomp() != 3 {
                return Err(Error::InvalidArgument("force must be a vector field".into()));
            }
            if f.grid() != state.grid() {
                return Err(Error::ShapeMismatch("force grid differs from state grid".into()));
            }
            let mut g = leray_project(f)?;
            apply_dealias(&mut g);
            Some(g)
        }
        None => None,
    };
    step_core(state, fixed, None, dt, nonlinear)
}

/// Kinetic moments that enter the drag force, frozen over one fluid step.
#[derive(Debug, Clone, Copy)]
pub struct DragMoments<'a> {
    /// Deposited mass density (scalar field).
    pub rho: &'a RealField,
    /// Deposited momentum density (vector field).
    pub current: &'a RealField,
}

/// One integrating-factor midpoint step with the drag force
/// `F = current - rho u` evaluated from the evolving velocity at each stage.
///
/// Freezing only the moments (not the full force) keeps the step genuinely
/// second order in the coupled system: the `rho u` part tracks the stage
/// velocities instead of lagging a half step behind.
pub fn ns_step_drag(
    state: &FluidState,
    moments: DragMoments<'_>,
    dt: f64,
    nonlinear: bool,
) -> Result<FluidState> {
    let grid = state.grid();
    if moments.rho.ncomp() != 1 || moments.current.ncomp() != 3 {
        return Err(Error::InvalidArgument(
            "drag moments need scalar rho and vector current".into(),
        ));
    }
    if moments.rho.grid() != grid || moments.current.grid() != grid {
        return Err(Error::ShapeMismatch("drag moment grids differ from state grid".into()));
    }
    step_core(state, None, Some(moments), dt, nonlinear)
}

fn step_core(
    state: &FluidState,
    fixed: Option<FourierField>,
    drag: Option<DragMoments<'_>>,
    dt: f64,
    nonlinear: bool,
) -> Result<FluidState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("fluid dt = {dt} must be positive")));
    }
    let grid = state.grid();
    let hat = &state.velocity;

    let rhs = |h: &FourierField, pre: Option<&RealField>| -> Result<FourierField> {
        let mut acc = FourierField::zeros(grid, 3)?;
        if nonlinear || drag.is_some() {
            let owned;
            let nodal = match pre {
                Some(r) => r,
                None => {
                    owned = h.to_real();
                    &owned
                }
            };
            if nonlinear {
                acc = nonlinear_from_nodal(nodal)?;
            }
            if let Some(m) = &drag {
                let mut f = RealField::zeros(grid, 3)?;
                for c in 0..3 {
                    let (cur, rho, un) = (m.current.slab(c), m.rho.slab(0), nodal.slab(c));
                    let dst = f.slab_mut(c);
                    for i in 0..dst.len() {
                        dst[i] = cur[i] - rho[i] * un[i];
                    }
                }
                let mut fh = leray_project(&FourierField::from_real(&f))?;
                apply_dealias(&mut fh);
                add_assign(&mut acc, &fh);
            }
        }
        if let Some(f) = &fixed {
            add_assign(&mut acc, f);
        }
        Ok(acc)
    };

    let nodal_n = if nonlinear || drag.is_some() { Some(hat.to_real()) } else { None };
    if nonlinear {
        let speed = max_speed(nodal_n.as_ref().expect("nodal computed"))?;
        if dt * speed / grid.dx() > CFL_LIMIT {
            return Err(Error::Cfl(format!(
                "advective CFL {:.3} exceeds {CFL_LIMIT} (max speed {speed:.3e}, dt {dt})",
                dt * speed / grid.dx()
            )));
        }
    }

    let k1 = rhs(hat, nodal_n.as_ref())?;

    // u_mid = E_{dt/2} (u_n + dt/2 k1)
    let mut mid = hat.clone();
    axpy(&mut mid, 0.5 * dt, &k1);
    scale_by_heat(&mut mid, 0.5 * dt);

    let mut k2 = rhs(&mid, None)?;

    // u_new = E_dt u_n + dt E_{dt/2} k2
    scale_by_heat(&mut k2, 0.5 * dt);
    let mut new = hat.clone();
    scale_by_heat(&mut new, dt);
    axpy(&mut new, dt, &k2);

    if !new.is_finite() {
        return Err(Error::NonFinite("fluid velocity after step".into()));
    }
    // Inputs were divergence-free and dealiased and every operation above
    // preserves both, so wrap without re-validating.
    Ok(FluidState { velocity: new })
}

/// `dst += a * src` over all coefficients.
fn axpy(dst: &mut FourierField, a: f64, src: &FourierField) {
    for c in 0..dst.ncomp() {
        let d = dst.slab_mut(c);
        let s = src.slab(c);
        for i in 0..d.len() {
            d[i] += a * s[i];
        }
    }
}

fn add_assign(dst: &mut FourierField, src: &FourierField) {
    axpy(dst, 1.0, src);
}

/// Multiplies coefficients by the heat factor `exp(-|k|^2 t)`, evaluated
/// separably along the axes.
fn scale_by_heat(hat: &mut FourierField, t: f64) {
    let grid = hat.grid();
    let n = grid.n();
    let axis: Vec<f64> = (0..n)
        .map(|i| {
            let k = grid.wavenumber(i);
            (-k * k * t).exp()
        })
        .collect();
    for c in 0..hat.ncomp() {
        let slab = hat.slab_mut(c);
        for i in 0..n {
            for j in 0..n {
                let pij = axis[i] * axis[j];
                let row = (i * n + j) * n;
                for m in 0..n {
                    slab[row + m] *= pij * axis[m];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests;
