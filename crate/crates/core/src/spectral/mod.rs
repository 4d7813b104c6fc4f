//! Periodic-box spectral substrate.
//!
//! All fields live on a cubic box `[0, L)^3` sampled on an `N^3` collocation
//! grid (`N` a power of two, at least 8).  A field is either a scalar
//! (`ncomp = 1`) or a vector (`ncomp = 3`) and exists in two representations:
//!
//! - [`RealField`]: values at grid nodes `x_j = j * L / N`,
//! - [`FourierField`]: coefficients on wavenumbers `k = (2*pi/L) * n` with
//!   integer `n` in the symmetric range `-N/2+1 ..= N/2`.
//!
//! The transform pair is normalized so that the discrete Plancherel identity
//! holds exactly: `sum_x |u(x)|^2 * (L/N)^3 = sum_k |u_hat(k)|^2`.  With that
//! convention `sum_k |u_hat|^2` *is* the squared `L^2(box)` norm, and all
//! energy bookkeeping downstream reads directly off coefficient sums.
//!
//! Storage layout is row-major `[comp][ix][iy][iz]`, one contiguous slab of
//! `N^3` entries per component.

mod fft;
mod ops;

pub use ops::{
    apply_dealias, grad_l2_squared, grad_sup_norm, gradient_tensor, heat_evolve, leray_project,
    low_mode_energy, sobolev_norm, GradientTensor,
};
pub(crate) use ops::derivative_wavenumbers;

use crate::{Error, Result};
use num_complex::Complex64;

/// Cubic periodic grid: box edge `length`, `n` nodes per axis.
///
/// `dealias_fraction` fixes which wavenumbers survive quadratic products:
/// modes with any `|n_axis| > floor(dealias_fraction * n / 2)` are zeroed by
/// [`apply_dealias`].  The default 2/3 keeps products of retained modes free
/// of aliasing on this grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    n: usize,
    length: f64,
    dealias_fraction: f64,
}

/// Default dealias fraction (the classical 2/3 rule).
pub const DEFAULT_DEALIAS_FRACTION: f64 = 2.0 / 3.0;

impl Grid3 {
    /// Validates and builds a grid.  `n` must be a power of two `>= 8`;
    /// `length` positive and finite; `dealias_fraction` in `(0, 1]`.
    pub fn new(n: usize, length: f64, dealias_fraction: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two >= 8"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length = {length} must be positive")));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "dealias_fraction = {dealias_fraction} must lie in (0, 1]"
            )));
        }
        Ok(Self { n, length, dealias_fraction })
    }

    /// Grid with the standard 2/3 dealias rule.
    pub fn with_default_dealias(n: usize, length: f64) -> Result<Self> {
        Self::new(n, length, DEFAULT_DEALIAS_FRACTION)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Number of nodes (or modes) in one component slab.
    pub fn slab_len(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Node spacing `L / N`.
    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Volume `(L/N)^3` of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(3)
    }

    /// Box volume `L^3`.
    pub fn volume(&self) -> f64 {
        self.length.powi(3)
    }

    /// Signed integer frequency for storage index `i`: `0..=N/2` then negative.
    pub fn signed_index(&self, i: usize) -> i64 {
        debug_assert!(i < self.n);
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Physical wavenumber along one axis for storage index `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.length * self.signed_index(i) as f64
    }

    /// `|k|^2` for the mode at storage indices `(i, j, m)`.
    pub fn k_squared(&self, i: usize, j: usize, m: usize) -> f64 {
        let base = 2.0 * std::f64::consts::PI / self.length;
        let (a, b, c) = (
            self.signed_index(i) as f64,
            self.signed_index(j) as f64,
            self.signed_index(m) as f64,
        );
        base * base * (a * a + b * b + c * c)
    }

    /// Whether the mode at `(i, j, m)` survives the dealias mask.
    pub fn dealias_keep(&self, i: usize, j: usize, m: usize) -> bool {
        let cutoff = (self.dealias_fraction * (self.n as f64) / 2.0).floor() as i64;
        self.signed_index(i).abs() <= cutoff
            && self.signed_index(j).abs() <= cutoff
            && self.signed_index(m).abs() <= cutoff
    }

    /// Node coordinate along one axis.
    pub fn node(&self, i: usize) -> f64 {
        self.dx() * i as f64
    }

    /// Flat index within one component slab.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, m: usize) -> usize {
        (i * self.n + j) * self.n + m
    }
}

fn check_ncomp(ncomp: usize) -> Result<()> {
    if ncomp == 1 || ncomp == 3 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "ncomp = {ncomp}; only scalar (1) and vector (3) fields are supported"
        )))
    }
}

/// Nodal values of a scalar or vector field on a [`Grid3`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid3,
    ncomp: usize,
    data: Vec<f64>,
}

impl RealField {
    pub fn zeros(grid: Grid3, ncomp: usize) -> Result<Self> {
        check_ncomp(ncomp)?;
        Ok(Self { grid, ncomp, data: vec![0.0; ncomp * grid.slab_len()] })
    }

    /// Fills a field by evaluating `f(x, y, z)` at every node.  `f` returns
    /// one value per component.
    pub fn from_fn<F>(grid: Grid3, ncomp: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, f64, f64) -> Vec<f64>,
    {
        let mut field = Self::zeros(grid, ncomp)?;
        let n = grid.n();
        for i in 0..n {
            for j in 0..n {
                for m in 0..n {
                    let vals = f(grid.node(i), grid.node(j), grid.node(m));
                    assert_eq!(vals.len(), ncomp, "component count mismatch from closure");
                    for (c, v) in vals.iter().enumerate() {
                        field.data[c * grid.slab_len() + grid.idx(i, j, m)] = *v;
                    }
                }
            }
        }
        Ok(field)
    }

    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// One component slab, length `N^3`.
    pub fn slab(&self, comp: usize) -> &[f64] {
        let len = self.grid.slab_len();
        &self.data[comp * len..(comp + 1) * len]
    }

    pub fn slab_mut(&mut self, comp: usize) -> &mut [f64] {
        let len = self.grid.slab_len();
        &mut self.data[comp * len..(comp + 1) * len]
    }

    #[inline]
    pub fn get(&self, comp: usize, i: usize, j: usize, m: usize) -> f64 {
        self.data[comp * self.grid.slab_len() + self.grid.idx(i, j, m)]
    }

    #[inline]
    pub fn set(&mut self, comp: usize, i: usize, j: usize, m: usize, v: f64) {
        self.data[comp * self.grid.slab_len() + self.grid.idx(i, j, m)] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `L^2(box)` norm by grid quadrature: `sqrt(sum |u|^2 * (L/N)^3)`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.data.iter().map(|v| v * v).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// `L^p(box)` norm of the pointwise magnitude (all components combined).
    pub fn lp_norm(&self, p: f64) -> f64 {
        let len = self.grid.slab_len();
        let mut s = 0.0;
        for idx in 0..len {
            let mut m2 = 0.0;
            for c in 0..self.ncomp {
                let v = self.data[c * len + idx];
                m2 += v * v;
            }
            s += m2.sqrt().powf(p);
        }
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    /// Sup norm of the pointwise magnitude.
    pub fn linf_norm(&self) -> f64 {
        let len = self.grid.slab_len();
        let mut best = 0.0f64;
        for idx in 0..len {
            let mut m2 = 0.0;
            for c in 0..self.ncomp {
                let v = self.data[c * len + idx];
                m2 += v * v;
            }
            best = best.max(m2);
        }
        best.sqrt()
    }

    /// Box integral of each component (`sum * cell_volume`).
    pub fn integral(&self) -> Vec<f64> {
        (0..self.ncomp)
            .map(|c| self.slab(c).iter().sum::<f64>() * self.grid.cell_volume())
            .collect()
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Fourier coefficients of a scalar or vector field.
///
/// Coefficients of fields that came from real data satisfy the Hermitian
/// symmetry `u_hat(-k) = conj(u_hat(k))`; the inverse transform assumes it and
/// returns the real part.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    grid: Grid3,
    ncomp: usize,
    data: Vec<Complex64>,
}

impl FourierField {
    pub fn zeros(grid: Grid3, ncomp: usize) -> Result<Self> {
        check_ncomp(ncomp)?;
        Ok(Self { grid, ncomp, data: vec![Complex64::new(0.0, 0.0); ncomp * grid.slab_len()] })
    }

    /// Forward transform of nodal values, Plancherel-normalized.
    pub fn from_real(field: &RealField) -> Self {
        let grid = field.grid;
        let len = grid.slab_len();
        // Forward scale L^{3/2} / N^3 makes sum_k |u_hat|^2 the L^2 norm squared.
        let scale = grid.length().powf(1.5) / len as f64;
        let mut data = vec![Complex64::new(0.0, 0.0); field.ncomp * len];
        for c in 0..field.ncomp {
            let slab = &mut data[c * len..(c + 1) * len];
            for (dst, src) in slab.iter_mut().zip(field.slab(c)) {
                *dst = Complex64::new(*src, 0.0);
            }
            fft::transform_slab(slab, grid.n(), fft::Direction::Forward);
            for v in slab.iter_mut() {
                *v *= scale;
            }
        }
        Self { grid, ncomp: field.ncomp, data }
    }

    /// Inverse transform back to nodal values (real part; the imaginary
    /// residue of Hermitian data is at rounding level and is dropped).
    pub fn to_real(&self) -> RealField {
        let grid = self.grid;
        let len = grid.slab_len();
        let scale = 1.0 / grid.length().powf(1.5);
        let mut out = RealField::zeros(grid, self.ncomp).expect("ncomp validated at construction");
        let mut scratch = vec![Complex64::new(0.0, 0.0); len];
        for c in 0..self.ncomp {
            scratch.copy_from_slice(self.slab(c));
            fft::transform_slab(&mut scratch, grid.n(), fft::Direction::Inverse);
            for (dst, src) in out.slab_mut(c).iter_mut().zip(&scratch) {
                *dst = src.re * scale;
            }
        }
        out
    }

    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn slab(&self, comp: usize) -> &[Complex64] {
        let len = self.grid.slab_len();
        &self.data[comp * len..(comp + 1) * len]
    }

    pub fn slab_mut(&mut self, comp: usize) -> &mut [Complex64] {
        let len = self.grid.slab_len();
        &mut self.data[comp * len..(comp + 1) * len]
    }

    #[inline]
    pub fn get(&self, comp: usize, i: usize, j: usize, m: usize) -> Complex64 {
        self.data[comp * self.grid.slab_len() + self.grid.idx(i, j, m)]
    }

    #[inline]
    pub fn set(&mut self, comp: usize, i: usize, j: usize, m: usize, v: Complex64) {
        self.data[comp * self.grid.slab_len() + self.grid.idx(i, j, m)] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Coefficient of the `k = 0` mode for one component.
    pub fn zero_mode(&self, comp: usize) -> Complex64 {
        self.data[comp * self.grid.slab_len()]
    }

    /// Box-average value of one component: `u_hat(0) / L^{3/2}`.
    pub fn mean_value(&self, comp: usize) -> f64 {
        (self.zero_mode(comp) / self.grid.length().powf(1.5)).re
    }

    /// `L^2(box)` norm via Plancherel: `sqrt(sum_k |u_hat|^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// True if every coefficient is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Largest relative divergence `|k . u_hat| / (|k| |u_hat|)` over modes,
    /// 0 for a field with no active modes.  Vector fields only.
    pub fn max_relative_divergence(&self) -> Result<f64> {
        if self.ncomp != 3 {
            return Err(Error::InvalidArgument(
                "divergence is defined for vector fields only".into(),
            ));
        }
        let g = self.grid;
        let n = g.n();
        let len = g.slab_len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for m in 0..n {
                    let idx = g.idx(i, j, m);
                    let k = [g.wavenumber(i), g.wavenumber(j), g.wavenumber(m)];
                    let knorm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
                    if knorm == 0.0 {
                        continue;
                    }
                    let mut dot = Complex64::new(0.0, 0.0);
                    let mut mag2 = 0.0;
                    for c in 0..3 {
                        let v = self.data[c * len + idx];
                        dot += Complex64::new(k[c], 0.0) * v;
                        mag2 += v.norm_sqr();
                    }
                    if mag2 > 0.0 {
                        worst = worst.max(dot.norm() / (knorm * mag2.sqrt()));
                    }
                }
            }
        }
        Ok(worst)
    }
}
