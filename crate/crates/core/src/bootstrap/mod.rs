//! Decay-exponent bootstrap and the Gronwall-type bound checker.
//!
//! The bootstrap sharpens a pair of decay exponents by feeding each bound
//! back into the estimate that produced it.  A first coarse pass yields the
//! kinetic-energy exponent `beta_1 = 1/2` (with weighted-dissipation exponent
//! `alpha_1 = 1`); one application of the sharpening map upgrades this to
//! `beta_2 = 1 - eps`, and iterating
//!
//! ```text
//! alpha_{n+1} = (beta_n + 3/2) (1 + eps) / 2
//! beta_{n+1}  = (beta_n + 3/2) (1 - eps) / 2
//! ```
//!
//! drives the pair to its fixed point `beta = (3/2)(1-eps)/(1+eps)`,
//! `alpha = 3/2`, geometrically at ratio `(1 - eps)/2`.
//!
//! The Gronwall checker is the discrete counterpart of the differential
//! inequality `y' <= -gtilde^2 y + beta`: [`verify_gronwall`] first tests the
//! integral-form hypothesis on every sample pair, then tests the solution
//! against the closed-form bound produced by [`gronwall_bound`].

use crate::diagnostics::ProbeReport;
use crate::{Error, Result};

/// Relative slack for both Gronwall checks (quadrature rounding allowance).
const GRONWALL_REL_TOL: f64 = 1e-8;

/// The exponent pair sequence produced by [`iterate_exponents`].
///
/// Entries are 1-based in the math ("stage n"), 0-based in the vectors:
/// `beta()[0]` is stage 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSequence {
    eps: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl BootstrapSequence {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Weighted-dissipation exponents `alpha_1, ..., alpha_{n_max}`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Energy-decay exponents `beta_1, ..., beta_{n_max}`.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Fixed point of the beta recursion, `(3/2)(1 - eps)/(1 + eps)`.
    pub fn beta_limit(&self) -> f64 {
        1.5 * (1.0 - self.eps) / (1.0 + self.eps)
    }

    /// Limit of the alpha sequence; the sharpening loses nothing here.
    pub fn alpha_limit(&self) -> f64 {
        1.5
    }
}

/// Runs the sharpening recursion for `n_max` stages from the coarse seed
/// `beta_1 = 1/2`, `alpha_1 = 1`.
pub fn iterate_exponents(eps: f64, n_max: usize) -> Result<BootstrapSequence> {
    if !(eps.is_finite() && eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "loss parameter eps = {eps} must lie in (0, 1)"
        )));
    }
    if n_max == 0 {
        return Err(Error::InvalidArgument("need at least one bootstrap stage".into()));
    }
    let mut alpha = Vec::with_capacity(n_max);
    let mut beta = Vec::with_capacity(n_max);
    alpha.push(1.0);
    beta.push(0.5);
    for n in 1..n_max {
        let prev = beta[n - 1];
        alpha.push((prev + 1.5) * (1.0 + eps) / 2.0);
        beta.push((prev + 1.5) * (1.0 - eps) / 2.0);
    }
    Ok(BootstrapSequence { eps, alpha, beta })
}

/// Validates one series bundle for the Gronwall routines.
fn check_series(times: &[f64], series: &[(&str, &[f64])]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Gronwall grid needs at least 2 samples, got {}",
            times.len()
        )));
    }
    for pair in times.windows(2) {
        if !(pair[1].is_finite() && pair[1] > pair[0]) {
            return Err(Error::InvalidArgument(format!(
                "Gronwall grid must strictly increase: {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    for (name, values) in series {
        if values.len() != times.len() {
            return Err(Error::InvalidArgument(format!(
                "{name} has {} samples but the grid has {}",
                values.len(),
                times.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name} sample")));
        }
    }
    Ok(())
}

/// Integral bound for `y' <= -gtilde^2 y + beta`, `y(0) = y0`:
///
/// ```text
/// bound(t) = y0 exp(-G(t)) + integral_0^t exp(G(tau) - G(t)) beta(tau) dtau
/// ```
///
/// with `G(t) = integral_0^t gtilde^2`.  All integrals are trapezoid sums on
/// the given grid; the returned curve matches `times` sample for sample.
pub fn gronwall_bound(
    times: &[f64],
    y0: f64,
    gtilde_sq: &[f64],
    beta: &[f64],
) -> Result<Vec<f64>> {
    check_series(times, &[("gtilde_sq", gtilde_sq), ("beta", beta)])?;
    if !(y0.is_finite() && y0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("y0 = {y0} must be finite and >= 0")));
    }
    if gtilde_sq.iter().any(|g| *g < 0.0) {
        return Err(Error::InvalidArgument("damping rate gtilde^2 must be >= 0".into()));
    }
    let n = times.len();
    let mut bound = Vec::with_capacity(n);
    // Running G(t) and I(t) = integral exp(G) beta; then
    // bound = exp(-G) (y0 + I), evaluated stably with one decay factor.
    let mut big_g = 0.0;
    let mut forced = 0.0;
    let mut prev_rate = gtilde_sq[0];
    let mut prev_load = beta[0]; // exp(G(0)) = 1
    bound.push(y0);
    for k in 1..n {
        let h = times[k] - times[k - 1];
        big_g += 0.5 * h * (prev_rate + gtilde_sq[k]);
        let load = big_g.exp() * beta[k];
        forced += 0.5 * h * (prev_load + load);
        bound.push((-big_g).exp() * (y0 + forced));
        prev_rate = gtilde_sq[k];
        prev_load = load;
    }
    Ok(bound)
}

/// Checks a measured series against the Gronwall inequality.
///
/// Two stages, both with relative slack `1e-8`:
/// 1. hypothesis: `y(t) + integral_s^t gtilde^2 y <= y(s) + integral_s^t beta`
///    for every ordered sample pair `(s, t)` (equivalently, `y - B + A` is
///    nonincreasing, checked against its running minimum);
/// 2. conclusion: `y <= bound` pointwise with the bound from
///    [`gronwall_bound`] seeded at `y0 = y[0]`.
pub fn verify_gronwall(
    times: &[f64],
    y: &[f64],
    gtilde_sq: &[f64],
    beta: &[f64],
) -> Result<ProbeReport> {
    check_series(times, &[("y", y), ("gtilde_sq", gtilde_sq), ("beta", beta)])?;
    if y.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument("Gronwall check needs y >= 0".into()));
    }

    let n = times.len();
    // Cumulative A = integral gtilde^2 y and B = integral beta.
    let mut damp = 0.0;
    let mut load = 0.0;
    let mut drift = y[0]; // y - B + A at the current sample
    let mut running_min = drift;
    let mut scale = y[0].abs();
    let mut worst_hypothesis = 0.0f64;
    for k in 1..n {
        let h = times[k] - times[k - 1];
        damp += 0.5 * h * (gtilde_sq[k - 1] * y[k - 1] + gtilde_sq[k] * y[k]);
        load += 0.5 * h * (beta[k - 1] + beta[k]);
        drift = y[k] - load + damp;
        scale = scale.max(y[k].abs()).max(damp.abs()).max(load.abs());
        worst_hypothesis = worst_hypothesis.max(drift - running_min);
        running_min = running_min.min(drift);
    }
    let slack = GRONWALL_REL_TOL * scale.max(1e-300);
    let hypothesis_ok = worst_hypothesis <= slack;

    let bound = gronwall_bound(times, y[0], gtilde_sq, beta)?;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_at = times[0];
    for k in 0..n {
        let gap = y[k] - bound[k];
        if gap > worst_gap {
            worst_gap = gap;
            worst_at = times[k];
        }
    }
    let conclusion_ok = worst_gap <= slack;

    let pass = hypothesis_ok && conclusion_ok;
    Ok(ProbeReport {
        name: "gronwall".into(),
        lhs: worst_gap,
        rhs: slack,
        ratio: worst_gap / scale.max(1e-300),
        pass,
        note: if !hypothesis_ok {
            format!(
                "differential hypothesis violated (drift {worst_hypothesis:.3e} > slack {slack:.3e})"
            )
        } else if !conclusion_ok {
            format!("bound exceeded at t = {worst_at:.6}")
        } else {
            format!("{n} samples within slack {slack:.3e}")
        },
    })
}
