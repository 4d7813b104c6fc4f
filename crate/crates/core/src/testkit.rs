//! Deterministic synthetic fields and states used across the test suite.
//!
//! Everything here is seeded explicitly, so any test built on these helpers
//! is reproducible bit for bit.

use crate::spectral::{apply_dealias, leray_project, FourierField, Grid3, RealField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Stream-cipher RNG with a fixed algorithm; `seed` fully determines output.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Nodal field with iid uniform values in `[-amplitude, amplitude]`.
pub fn random_real_field(grid: Grid3, ncomp: usize, amplitude: f64, seed: u64) -> RealField {
    let mut rng = seeded_rng(seed);
    let mut field = RealField::zeros(grid, ncomp).expect("valid ncomp");
    for v in field.data_mut() {
        *v = rng.gen_range(-amplitude..amplitude);
    }
    field
}

/// Random band-limited coefficients: white nodal noise transformed forward
/// and cut by the grid's dealias mask.
pub fn random_band_limited(grid: Grid3, ncomp: usize, amplitude: f64, seed: u64) -> FourierField {
    let mut field = FourierField::from_real(&random_real_field(grid, ncomp, amplitude, seed));
    apply_dealias(&mut field);
    field
}

/// Random band-limited divergence-free velocity coefficients.
pub fn random_div_free(grid: Grid3, amplitude: f64, seed: u64) -> FourierField {
    leray_project(&random_band_limited(grid, 3, amplitude, seed)).expect("vector field")
}

/// Classical two-dimensional cellular vortex embedded in 3D:
/// `u = A (sin(kx) cos(ky), -cos(kx) sin(ky), 0)` with `k = 2*pi/L`.
/// Divergence-free with zero mean; its self-advection is a pure gradient.
pub fn cellular_vortex(grid: Grid3, amplitude: f64) -> RealField {
    let k = 2.0 * std::f64::consts::PI / grid.length();
    RealField::from_fn(grid, 3, |x, y, _z| {
        vec![
            amplitude * (k * x).sin() * (k * y).cos(),
            -amplitude * (k * x).cos() * (k * y).sin(),
            0.0,
        ]
    })
    .expect("valid ncomp")
}

/// Relative gap `|a - b| / max(|a|, |b|, floor)` used in tolerance asserts.
pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Largest relative coefficient difference between two Fourier fields.
pub fn max_rel_coef_diff(a: &FourierField, b: &FourierField) -> f64 {
    let scale = a
        .data()
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0f64, f64::max)
        / scale
}
