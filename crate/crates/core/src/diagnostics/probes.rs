//! Inequality probes, identity residuals, monitors, and decay fits.
//!
//! Probes compare measured quantities against the bounds the estimates
//! promise.  Ratios are reported raw; pass/fail verdicts exist only where a
//! constant-free comparison is available (identities, declared slack, or
//! user-supplied thresholds).

use crate::kinetic::{interp_slab_one, interp_vector_one, ParticleEnsemble};
use crate::spectral::{gradient_tensor, sobolev_norm, FourierField, RealField};
use crate::{Error, Result};

use super::DiagnosticsRecord;

/// Outcome of one probe evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs` (or the relative residual for identity probes).
    pub ratio: f64,
    pub pass: bool,
    pub note: String,
}

impl ProbeReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{}: {} (lhs {:.6e}, rhs {:.6e}, ratio {:.6e}) {}",
            self.name,
            if self.pass { "pass" } else { "FAIL" },
            self.lhs,
            self.rhs,
            self.ratio,
            self.note,
        )
    }
}

/// Maximum over samples of the relative energy-balance defect
/// `|E(t) + integral_0^t D - E(0)| / E(0)` (absolute defect when `E(0) = 0`),
/// with the dissipation integral by trapezoid on the sample grid.
pub fn energy_balance_residual(records: &[DiagnosticsRecord], tol: f64) -> Result<ProbeReport> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument(
            "energy balance needs at least two samples".into(),
        ));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let e0 = records[0].e;
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let mut dissipated = 0.0;
    let mut worst = 0.0f64;
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if !(a.d.is_finite() && b.d.is_finite() && b.e.is_finite()) {
            return Err(Error::NonFinite("dissipation column in energy balance".into()));
        }
        dissipated += 0.5 * (b.t - a.t) * (a.d + b.d);
        worst = worst.max((b.e + dissipated - e0).abs() / scale);
    }
    Ok(ProbeReport {
        name: "energy-balance".into(),
        lhs: worst,
        rhs: tol,
        ratio: worst / tol,
        pass: worst <= tol,
        note: format!("{} samples", records.len()),
    })
}

/// Running integral `integral_0^t D(tau) (1 + tau)^alpha dtau` on the sample
/// grid; returns the cumulative curve (first entry 0).
pub fn weighted_dissipation_integral(
    times: &[f64],
    values: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.5) {
        return Err(Error::InvalidArgument(format!(
            "dissipation weight alpha = {alpha} must lie in (0, 3/2)"
        )));
    }
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "weighted integral needs matching series of length >= 2, got {} and {}",
            times.len(),
            values.len()
        )));
    }
    let mut out = Vec::with_capacity(times.len());
    out.push(0.0);
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        if h <= 0.0 {
            return Err(Error::InvalidArgument("sample times must increase".into()));
        }
        let fa = values[k - 1] * (1.0 + times[k - 1]).powf(alpha);
        let fb = values[k] * (1.0 + times[k]).powf(alpha);
        if !(fa.is_finite() && fb.is_finite()) {
            return Err(Error::NonFinite("weighted dissipation integrand".into()));
        }
        out.push(out[k - 1] + 0.5 * h * (fa + fb));
    }
    Ok(out)
}

/// Model for [`decay_fit`]: power law in `1 + t` or plain exponential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    /// `value ~ C (1 + t)^exponent`; fits `log value` against `log(1 + t)`.
    PowerLaw,
    /// `value ~ C exp(exponent * t)`; fits `log value` against `t`.
    Exponential,
}

/// Least-squares decay fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Fitted slope: power-law exponent or exponential rate.
    pub exponent: f64,
    pub r2: f64,
    /// Samples entering the fit.
    pub used: usize,
    /// Nonpositive or non-finite samples dropped before fitting.
    pub dropped: usize,
}

/// Fits the decay of a positive series for `t >= t_min`.
pub fn decay_fit(times: &[f64], values: &[f64], t_min: f64, kind: FitKind) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs matching series, got {} times and {} values",
            times.len(),
            values.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0usize;
    for (&t, &v) in times.iter().zip(values) {
        if t < t_min {
            continue;
        }
        if !(v.is_finite() && v > 0.0) {
            dropped += 1;
            continue;
        }
        let x = match kind {
            FitKind::PowerLaw => (1.0 + t).ln(),
            FitKind::Exponential => t,
        };
        xs.push(x);
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least 10 usable samples past t = {t_min}, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("decay fit needs spread in sample times".into()));
    }
    let slope = sxy / sxx;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit { exponent: slope, r2, used: n, dropped })
}

/// Checks the strong-existence smallness statistic
/// `|u_0|^2_{H^{1/2}} + C* integral |F|^2_{H^{-1/2}} < 1 / C*^2`
/// over the whole record series.
pub fn strong_existence_monitor(records: &[DiagnosticsRecord], c_star: f64) -> Result<ProbeReport> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("monitor needs at least one sample".into()));
    }
    if !(c_star.is_finite() && c_star > 0.0) {
        return Err(Error::InvalidArgument(format!("C* = {c_star} must be positive")));
    }
    let worst = records.iter().map(|r| r.strong_stat).fold(f64::NEG_INFINITY, f64::max);
    let threshold = 1.0 / (c_star * c_star);
    Ok(ProbeReport {
        name: "strong-existence".into(),
        lhs: worst,
        rhs: threshold,
        ratio: worst / threshold,
        pass: worst.is_finite() && worst < threshold,
        note: format!("C* = {c_star}"),
    })
}

/// Checks the running `integral |grad u|_inf` against the smallness budget
/// `delta0` and reports the first crossing time, if any.
pub fn bootstrap_monitor(records: &[DiagnosticsRecord], delta0: f64) -> Result<ProbeReport> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("monitor needs at least one sample".into()));
    }
    if !(delta0.is_finite() && delta0 > 0.0) {
        return Err(Error::InvalidArgument(format!("delta0 = {delta0} must be positive")));
    }
    let last = records.last().expect("nonempty");
    let mut crossing = None;
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.grad_inf_int < delta0 && b.grad_inf_int >= delta0 {
            let span = b.grad_inf_int - a.grad_inf_int;
            let frac = if span > 0.0 { (delta0 - a.grad_inf_int) / span } else { 1.0 };
            crossing = Some(a.t + frac * (b.t - a.t));
            break;
        }
    }
    if crossing.is_none() && !records.is_empty() && records[0].grad_inf_int >= delta0 {
        crossing = Some(records[0].t);
    }
    Ok(ProbeReport {
        name: "gradient-budget".into(),
        lhs: last.grad_inf_int,
        rhs: delta0,
        ratio: last.grad_inf_int / delta0,
        pass: last.grad_inf_int < delta0,
        note: match crossing {
            Some(t) => format!("budget crossed at t = {t:.6}"),
            None => "budget never crossed".into(),
        },
    })
}

/// Interpolation-inequality ratio variants.  Each ratio is homogeneous of
/// degree zero in the field amplitude; all norms act on the mean-free part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GnVariant {
    /// `|u|_inf / (|Lap u|_{L^2}^{3/4} |u|_{L^2}^{1/4})`.
    SupInterpolation,
    /// `|u|_inf / (|Lap u|_{L^p}^{th} |u|_{L^2}^{1-th})`, `th = 3p/(7p-6)`.
    SupFromLaplacianLp { p: f64 },
    /// `|grad u|_{L^p} / (|Lap u|_{L^p}^{th} |u|_{L^2}^{1-th})`, `th = (5p-6)/(7p-6)`.
    GradLpFromLaplacianLp { p: f64 },
    /// `|grad u|_inf / (|Lap u|_{L^p}^{th} |u|_{L^2}^{1-th})`, `th = 5p/(7p-6)`.
    GradSupFromLaplacianLp { p: f64 },
}

/// Evaluates an interpolation-inequality ratio on a vector field.
///
/// Returns NaN when the field has no fluctuation (the bound is vacuous).
pub fn gn_ratio(field: &FourierField, variant: GnVariant) -> Result<f64> {
    if field.ncomp() != 3 {
        return Err(Error::InvalidArgument("interpolation ratio needs a vector field".into()));
    }
    if let GnVariant::SupFromLaplacianLp { p }
    | GnVariant::GradLpFromLaplacianLp { p }
    | GnVariant::GradSupFromLaplacianLp { p } = variant
    {
        if !(p.is_finite() && p > 3.0) {
            return Err(Error::InvalidArgument(format!(
                "interpolation ratio requires p > 3, got {p}"
            )));
        }
    }

    // Mean-free L^2 norm via Plancherel.
    let l2 = sobolev_norm(field, 0.0);
    let volume = field.grid().volume();
    let mean_sq: f64 = (0..3).map(|c| field.mean_value(c).powi(2)).sum();
    let fluct_l2 = (l2 * l2 - volume * mean_sq).max(0.0).sqrt();
    if fluct_l2 == 0.0 {
        return Ok(f64::NAN);
    }

    let (lhs, den) = match variant {
        GnVariant::SupInterpolation => {
            let lap = sobolev_norm(field, 2.0);
            (sup_of_fluctuation(field)?, lap.powf(0.75) * fluct_l2.powf(0.25))
        }
        GnVariant::SupFromLaplacianLp { p } => {
            let th = 3.0 * p / (7.0 * p - 6.0);
            let lap = laplacian_lp(field, p)?;
            (sup_of_fluctuation(field)?, lap.powf(th) * fluct_l2.powf(1.0 - th))
        }
        GnVariant::GradLpFromLaplacianLp { p } => {
            let th = (5.0 * p - 6.0) / (7.0 * p - 6.0);
            let lap = laplacian_lp(field, p)?;
            (gradient_lp(field, p)?, lap.powf(th) * fluct_l2.powf(1.0 - th))
        }
        GnVariant::GradSupFromLaplacianLp { p } => {
            let th = 5.0 * p / (7.0 * p - 6.0);
            let lap = laplacian_lp(field, p)?;
            (crate::spectral::grad_sup_norm(field)?, lap.powf(th) * fluct_l2.powf(1.0 - th))
        }
    };
    if den > 0.0 {
        Ok(lhs / den)
    } else {
        Ok(f64::NAN)
    }
}

/// Sup norm of the field minus its box mean.
fn sup_of_fluctuation(field: &FourierField) -> Result<f64> {
    let mean = [field.mean_value(0), field.mean_value(1), field.mean_value(2)];
    let nodal = field.to_real();
    let len = nodal.grid().slab_len();
    let mut best = 0.0f64;
    for idx in 0..len {
        let mut m2 = 0.0;
        for c in 0..3 {
            let v = nodal.slab(c)[idx] - mean[c];
            m2 += v * v;
        }
        best = best.max(m2);
    }
    Ok(best.sqrt())
}

/// `L^p` norm of the (spectral) Laplacian of the field.
fn laplacian_lp(field: &FourierField, p: f64) -> Result<f64> {
    let g = field.grid();
    let n = g.n();
    let len = g.slab_len();
    let mut lap = field.clone();
    let data = lap.data_mut();
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                let k2 = g.k_squared(i, j, m);
                let idx = g.idx(i, j, m);
                for c in 0..3 {
                    data[c * len + idx] *= -k2;
                }
            }
        }
    }
    Ok(lap.to_real().lp_norm(p))
}

/// `L^p` norm of the Frobenius magnitude of the velocity gradient.
fn gradient_lp(field: &FourierField, p: f64) -> Result<f64> {
    let tensor = gradient_tensor(field)?;
    let g = field.grid();
    let len = g.slab_len();
    let mut s = 0.0;
    for idx in 0..len {
        s += tensor.frobenius_at(idx).powf(p);
    }
    Ok((s * g.cell_volume()).powf(1.0 / p))
}

/// Weight profile for the drag-dissipation identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiSpec {
    /// `phi(s) = 1`.
    One,
    /// `phi(s) = (1 + s)^(p gamma)`.
    Power { gamma: f64 },
}

impl PhiSpec {
    fn phi(&self, p: f64, s: f64) -> f64 {
        match self {
            PhiSpec::One => 1.0,
            PhiSpec::Power { gamma } => (1.0 + s).powf(p * gamma),
        }
    }

    fn dphi(&self, p: f64, s: f64) -> f64 {
        match self {
            PhiSpec::One => 0.0,
            PhiSpec::Power { gamma } => p * gamma * (1.0 + s).powf(p * gamma - 1.0),
        }
    }
}

/// Streaming residual of the weighted drag-dissipation identity
///
/// ```text
/// int phi D_p = (1/p) int phi' D_p - int phi Mixed - [phi D_p / p]_0^t
/// ```
///
/// Push `(t, D_p(t), Mixed(t))` samples in time order; `Mixed` is the
/// advective coupling term from [`dp_mixed_term`] (identically 0 for a
/// resting fluid).  All integrals use trapezoid quadrature.
#[derive(Debug, Clone)]
pub struct DpIdentityAccumulator {
    p: f64,
    phi: PhiSpec,
    samples: usize,
    first: Option<(f64, f64)>,
    last: Option<(f64, f64, f64)>,
    lhs_int: f64,
    dphi_int: f64,
    mixed_int: f64,
}

impl DpIdentityAccumulator {
    pub fn new(p: f64, phi: PhiSpec) -> Result<Self> {
        if !(p.is_finite() && p >= 2.0) {
            return Err(Error::InvalidArgument(format!("identity order p = {p} must be >= 2")));
        }
        if let PhiSpec::Power { gamma } = phi {
            if !(gamma.is_finite() && gamma >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "weight exponent gamma = {gamma} must be >= 0"
                )));
            }
        }
        Ok(Self {
            p,
            phi,
            samples: 0,
            first: None,
            last: None,
            lhs_int: 0.0,
            dphi_int: 0.0,
            mixed_int: 0.0,
        })
    }

    pub fn push(&mut self, t: f64, dp: f64, mixed: f64) -> Result<()> {
        if !(t.is_finite() && dp.is_finite() && mixed.is_finite()) {
            return Err(Error::NonFinite("identity sample".into()));
        }
        if let Some((tp, dpp, mp)) = self.last {
            if t <= tp {
                return Err(Error::InvalidArgument(format!(
                    "identity samples must advance in time: {t} after {tp}"
                )));
            }
            let h = t - tp;
            let p = self.p;
            self.lhs_int +=
                0.5 * h * (self.phi.phi(p, tp) * dpp + self.phi.phi(p, t) * dp);
            self.dphi_int +=
                0.5 * h * (self.phi.dphi(p, tp) * dpp + self.phi.dphi(p, t) * dp);
            self.mixed_int +=
                0.5 * h * (self.phi.phi(p, tp) * mp + self.phi.phi(p, t) * mixed);
        } else {
            self.first = Some((t, dp));
        }
        self.last = Some((t, dp, mixed));
        self.samples += 1;
        Ok(())
    }

    /// Relative residual of the identity over the pushed window.
    pub fn report(&self, tol: f64) -> Result<ProbeReport> {
        if self.samples < 3 {
            return Err(Error::InvalidArgument(format!(
                "identity residual needs at least 3 samples, got {}",
                self.samples
            )));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
        }
        let (t0, dp0) = self.first.expect("samples > 0");
        let (t1, dp1, _) = self.last.expect("samples > 0");
        let p = self.p;
        let boundary = (self.phi.phi(p, t1) * dp1 - self.phi.phi(p, t0) * dp0) / p;
        let lhs = self.lhs_int;
        let rhs = self.dphi_int / p - self.mixed_int - boundary;
        let scale = lhs.abs().max(rhs.abs()).max(1e-300);
        let residual = (lhs - rhs).abs() / scale;
        Ok(ProbeReport {
            name: format!("drag-identity-p{p}"),
            lhs,
            rhs,
            ratio: residual,
            pass: residual <= tol,
            note: format!("{} samples over [{t0}, {t1}]", self.samples),
        })
    }
}

/// Advective coupling term of the drag-dissipation identity,
///
/// ```text
/// Mixed = sum_i w_i [ du/ds + (v_i . grad) u ](x_i) . (v_i - u(x_i)) |v_i - u(x_i)|^(p-2)
/// ```
///
/// with `du/ds` the centred difference of the bracketing snapshots and the
/// gradient spectral.  `span` is the time separation of `u_prev` and `u_next`.
pub fn dp_mixed_term(
    ens: &ParticleEnsemble,
    u_prev: &RealField,
    u_now: &RealField,
    u_next: &RealField,
    span: f64,
    p: f64,
) -> Result<f64> {
    if !(p.is_finite() && p >= 2.0) {
        return Err(Error::InvalidArgument(format!("identity order p = {p} must be >= 2")));
    }
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::InvalidArgument(format!("snapshot span {span} must be positive")));
    }
    let grid = u_now.grid();
    for f in [u_prev, u_next] {
        if f.grid() != grid || f.ncomp() != 3 || u_now.ncomp() != 3 {
            return Err(Error::InvalidArgument(
                "snapshots must share one grid and be 3-component".into(),
            ));
        }
    }
    if (grid.length() - ens.box_length()).abs() > 1e-12 * grid.length() {
        return Err(Error::InvalidArgument(
            "ensemble box does not match the snapshot grid".into(),
        ));
    }
    let tensor = gradient_tensor(&FourierField::from_real(u_now))?;
    let inv_span = 1.0 / span;
    let mut acc = 0.0;
    for ((pos, vel), w) in ens.positions().iter().zip(ens.velocities()).zip(ens.weights()) {
        let u_here = interp_vector_one(u_now, *pos);
        let before = interp_vector_one(u_prev, *pos);
        let after = interp_vector_one(u_next, *pos);
        let mut rel2 = 0.0;
        let mut dot = 0.0;
        for b in 0..3 {
            // (v . grad) u_b at the particle.
            let mut conv = 0.0;
            for a in 0..3 {
                conv += vel[a] * interp_slab_one(&grid, tensor.slab(a, b), *pos);
            }
            let along = (after[b] - before[b]) * inv_span + conv;
            let rel = vel[b] - u_here[b];
            rel2 += rel * rel;
            dot += along * rel;
        }
        acc += w * dot * rel2.powf(0.5 * p - 1.0);
    }
    Ok(acc)
}
