//! Coupled kinetic-fluid system: drag force assembly, Strang stepping,
//! conserved totals, and binary checkpoints.
//!
//! One step of size `dt` advances the pair `(u, particles)` symmetrically:
//!
//! 1. half drag push of the particles through `u_n`;
//! 2. deposit `rho` and `j` from the midpoint particles;
//! 3. advance the fluid a full step with the drag force `F = j - rho u`,
//!    the moments frozen at their midpoint values;
//! 4. half drag push through the new velocity `u_{n+1}`.
//!
//! Both sub-integrators are second order and the composition is symmetric,
//! so the split step is second order overall.  Because interpolation and
//! deposition share one kernel, the momentum the particles lose to drag is
//! the momentum the force hands the fluid, up to time-discretization error;
//! total momentum drift is a solver diagnostic, not a modeling artifact.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint};

use crate::fluid::{max_speed, ns_step_drag, DragMoments, FluidState};
use crate::kinetic::{deposit_moments, push_particles, MomentFields, ParticleEnsemble};
use crate::spectral::{FourierField, Grid3, RealField};
use crate::{Error, Result};

/// Full state of the coupled system at one instant.
#[derive(Debug, Clone)]
pub struct SystemState {
    time: f64,
    fluid: FluidState,
    particles: ParticleEnsemble,
}

impl SystemState {
    pub fn new(time: f64, fluid: FluidState, particles: ParticleEnsemble) -> Result<Self> {
        if !time.is_finite() {
            return Err(Error::NonFinite("system time".into()));
        }
        let box_len = fluid.grid().length();
        if (particles.box_length() - box_len).abs() > 1e-12 * box_len {
            return Err(Error::ShapeMismatch(format!(
                "particle box {} vs fluid box {box_len}",
                particles.box_length()
            )));
        }
        Ok(Self { time, fluid, particles })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn grid(&self) -> Grid3 {
        self.fluid.grid()
    }

    pub fn fluid(&self) -> &FluidState {
        &self.fluid
    }

    pub fn particles(&self) -> &ParticleEnsemble {
        &self.particles
    }

    /// Sum of fluid and particle momentum, `integral(u) + sum_i w_i v_i`.
    pub fn total_momentum(&self) -> [f64; 3] {
        let volume = self.grid().volume();
        let mut total = self.particles.momentum();
        for c in 0..3 {
            total[c] += self.fluid.velocity().mean_value(c) * volume;
        }
        total
    }

    /// Total energy `1/2 |u|^2 + 1/2 sum_i w_i |v_i|^2`.
    pub fn total_energy(&self) -> f64 {
        self.fluid.energy() + self.particles.kinetic_energy()
    }
}

/// Drag force and its ingredients on the grid.
#[derive(Debug, Clone)]
pub struct BrinkmanField {
    /// Nodal force `F = j - rho u`.
    pub nodal: RealField,
    /// Its Fourier coefficients (unprojected; the fluid step projects).
    pub hat: FourierField,
}

/// Assembles the drag force `F = j - rho u` from deposited moments and a
/// nodal fluid velocity.
pub fn assemble_brinkman(moments: &MomentFields, fluid_nodal: &RealField) -> Result<BrinkmanField> {
    let grid = fluid_nodal.grid();
    if fluid_nodal.ncomp() != 3 {
        return Err(Error::InvalidArgument("fluid velocity must be a vector field".into()));
    }
    if moments.rho.grid() != grid || moments.current.grid() != grid {
        return Err(Error::ShapeMismatch("moment grids differ from velocity grid".into()));
    }
    let mut nodal = RealField::zeros(grid, 3)?;
    for c in 0..3 {
        let (j, rho, u) = (moments.current.slab(c), moments.rho.slab(0), fluid_nodal.slab(c));
        let dst = nodal.slab_mut(c);
        for i in 0..dst.len() {
            dst[i] = j[i] - rho[i] * u[i];
        }
    }
    let hat = FourierField::from_real(&nodal);
    Ok(BrinkmanField { nodal, hat })
}

/// Advances the coupled system by one Strang step of size `dt`.
pub fn step_system(state: &SystemState, dt: f64, nonlinear: bool) -> Result<SystemState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("system dt = {dt} must be positive")));
    }
    let grid = state.grid();

    let u_n = state.fluid.nodal_velocity();
    let half = push_particles(&state.particles, &u_n, 0.5 * dt)?;

    let moments = deposit_moments(&half, grid, &[])?;
    let fluid_new = ns_step_drag(
        &state.fluid,
        DragMoments { rho: &moments.rho, current: &moments.current },
        dt,
        nonlinear,
    )?;

    let u_new = fluid_new.nodal_velocity();
    let particles_new = push_particles(&half, &u_new, 0.5 * dt)?;

    Ok(SystemState { time: state.time + dt, fluid: fluid_new, particles: particles_new })
}

/// Largest admissible step at `state` under both stability limits: the
/// advective CFL of the fluid and the half-cell displacement bound of the
/// particle push.  Useful for validating configured steps up front.
pub fn stable_dt_bound(state: &SystemState) -> Result<f64> {
    let grid = state.grid();
    let u = state.fluid.nodal_velocity();
    let fluid_speed = max_speed(&u)?;
    let particle_speed = state
        .particles
        .velocities()
        .iter()
        .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        .fold(0.0f64, f64::max)
        .max(fluid_speed);
    let dx = grid.dx();
    let advective = if fluid_speed > 0.0 { 0.5 * dx / fluid_speed } else { f64::INFINITY };
    // Push displacement is bounded by speed * dt; the half pushes use dt/2.
    let displacement =
        if particle_speed > 0.0 { dx / particle_speed } else { f64::INFINITY };
    Ok(advective.min(displacement))
}
