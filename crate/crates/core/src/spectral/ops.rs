//! Operators on spectral fields: projection, heat flow, norms, dealiasing.

use super::fft;
use super::{FourierField, Grid3};
use crate::{Error, Result};
use num_complex::Complex64;

/// Wavenumbers per storage index for differentiation.  The Nyquist index
/// (`n/2`) has no conjugate partner, so its derivative contribution is zeroed
/// to keep derivatives of real fields real.
pub(crate) fn derivative_wavenumbers(grid: Grid3) -> Vec<f64> {
    let n = grid.n();
    (0..n)
        .map(|i| if i == n / 2 { 0.0 } else { grid.wavenumber(i) })
        .collect()
}

/// Leray projection onto divergence-free fields:
/// `u_hat(k) -> u_hat(k) - k (k . u_hat(k)) / |k|^2`, zero mode untouched.
///
/// The projection is idempotent and orthogonal: it annihilates gradients and
/// leaves divergence-free fields unchanged.
pub fn leray_project(field: &FourierField) -> Result<FourierField> {
    if field.ncomp() != 3 {
        return Err(Error::InvalidArgument("leray_project needs a vector field".into()));
    }
    let g = field.grid();
    let n = g.n();
    let len = g.slab_len();
    let mut out = field.clone();
    for i in 0..n {
        let ki = g.wavenumber(i);
        for j in 0..n {
            let kj = g.wavenumber(j);
            for m in 0..n {
                let km = g.wavenumber(m);
                let k2 = ki * ki + kj * kj + km * km;
                if k2 == 0.0 {
                    continue;
                }
                let idx = g.idx(i, j, m);
                let dot = ki * out.data[idx]
                    + kj * out.data[len + idx]
                    + km * out.data[2 * len + idx];
                let factor = dot / k2;
                out.data[idx] -= ki * factor;
                out.data[len + idx] -= kj * factor;
                out.data[2 * len + idx] -= km * factor;
            }
        }
    }
    Ok(out)
}

/// Exact heat flow `u_hat(k) -> exp(-|k|^2 t) u_hat(k)` (unit viscosity).
pub fn heat_evolve(field: &FourierField, t: f64) -> Result<FourierField> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("heat_evolve time {t} must be >= 0")));
    }
    let g = field.grid();
    let n = g.n();
    let mut out = field.clone();
    let len = g.slab_len();
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                let factor = (-g.k_squared(i, j, m) * t).exp();
                let idx = g.idx(i, j, m);
                for c in 0..field.ncomp() {
                    out.data[c * len + idx] *= factor;
                }
            }
        }
    }
    Ok(out)
}

/// Sobolev norm of order `s`.
///
/// `s = 0` is the plain `L^2` norm (zero mode included).  For `s != 0` the
/// norm is homogeneous: the `k = 0` mode is excluded and the value is
/// `sqrt(sum_{k != 0} |k|^{2s} |u_hat|^2)`.
pub fn sobolev_norm(field: &FourierField, s: f64) -> f64 {
    if s == 0.0 {
        return field.l2_norm();
    }
    let g = field.grid();
    let n = g.n();
    let len = g.slab_len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                let k2 = g.k_squared(i, j, m);
                if k2 == 0.0 {
                    continue;
                }
                let idx = g.idx(i, j, m);
                let mut mag = 0.0;
                for c in 0..field.ncomp() {
                    mag += field.data[c * len + idx].norm_sqr();
                }
                sum += k2.powf(s) * mag;
            }
        }
    }
    sum.sqrt()
}

/// Energy in modes with `|k| <= radius` (inclusive, all components).
pub fn low_mode_energy(field: &FourierField, radius: f64) -> Result<f64> {
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("low-mode radius {radius} must be >= 0")));
    }
    let g = field.grid();
    let n = g.n();
    let len = g.slab_len();
    let r2 = radius * radius;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                if g.k_squared(i, j, m) <= r2 {
                    let idx = g.idx(i, j, m);
                    for c in 0..field.ncomp() {
                        sum += field.data[c * len + idx].norm_sqr();
                    }
                }
            }
        }
    }
    Ok(sum)
}

/// Zeroes all modes outside the grid's dealias mask.
pub fn apply_dealias(field: &mut FourierField) {
    let g = field.grid();
    let n = g.n();
    let len = g.slab_len();
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                if !g.dealias_keep(i, j, m) {
                    let idx = g.idx(i, j, m);
                    for c in 0..field.ncomp() {
                        field.data[c * len + idx] = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }
}

/// Nodal values of all nine partial derivatives of a vector field.
///
/// `slab(a, b)` holds `d u_b / d x_a`.  Derivatives are spectral, so they are
/// exact for band-limited fields.
pub struct GradientTensor {
    grid: Grid3,
    slabs: Vec<Vec<f64>>,
}

impl GradientTensor {
    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    /// Nodal slab of `d u_b / d x_a`.
    pub fn slab(&self, a: usize, b: usize) -> &[f64] {
        &self.slabs[a * 3 + b]
    }

    /// Frobenius norm of the tensor at one node.
    pub fn frobenius_at(&self, idx: usize) -> f64 {
        self.slabs.iter().map(|s| s[idx] * s[idx]).sum::<f64>().sqrt()
    }
}

/// One derivative slab `d u_b / d x_a` in nodal values.
fn derivative_nodal(field: &FourierField, b: usize, a: usize) -> Vec<f64> {
    let g = field.grid();
    let n = g.n();
    let kvals = derivative_wavenumbers(g);
    let mut scratch = field.slab(b).to_vec();
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                let k = kvals[[i, j, m][a]];
                let idx = g.idx(i, j, m);
                scratch[idx] *= Complex64::new(0.0, k);
            }
        }
    }
    fft::transform_slab(&mut scratch, n, fft::Direction::Inverse);
    let scale = 1.0 / g.length().powf(1.5);
    scratch.iter().map(|v| v.re * scale).collect()
}

/// Computes all nine derivative slabs of a vector field.
pub fn gradient_tensor(field: &FourierField) -> Result<GradientTensor> {
    if field.ncomp() != 3 {
        return Err(Error::InvalidArgument("gradient_tensor needs a vector field".into()));
    }
    let mut slabs = Vec::with_capacity(9);
    for a in 0..3 {
        for b in 0..3 {
            slabs.push(derivative_nodal(field, b, a));
        }
    }
    Ok(GradientTensor { grid: field.grid(), slabs })
}

/// Sup over grid nodes of the Frobenius norm of the velocity gradient,
/// `max_x |grad u(x)|_F` with spectral derivatives.
pub fn grad_sup_norm(field: &FourierField) -> Result<f64> {
    if field.ncomp() != 3 {
        return Err(Error::InvalidArgument("grad_sup_norm needs a vector field".into()));
    }
    let len = field.grid().slab_len();
    let mut acc = vec![0.0f64; len];
    for a in 0..3 {
        for b in 0..3 {
            let slab = derivative_nodal(field, b, a);
            for (dst, v) in acc.iter_mut().zip(&slab) {
                *dst += v * v;
            }
        }
    }
    Ok(acc.iter().fold(0.0f64, |best, v| best.max(*v)).sqrt())
}

/// Gradient part of the fluid dissipation: `sum_k |k|^2 |u_hat|^2`,
/// i.e. the squared homogeneous H^1 norm.
pub fn grad_l2_squared(field: &FourierField) -> f64 {
    let s = sobolev_norm(field, 1.0);
    s * s
}

