use super::*;
use crate::coupling::{step_system, SystemState};
use crate::fluid::{ns_step, FluidState};
use crate::kinetic::{deposit_moments, InitialDensity, ParticleEnsemble};
use crate::spectral::{FourierField, Grid3, RealField};
use crate::testkit::{random_div_free, rel_gap, seeded_rng};
use crate::Error;

const TWO_THIRDS: f64 = 2.0 / 3.0;

fn grid(n: usize, length: f64) -> Grid3 {
    Grid3::new(n, length, TWO_THIRDS).unwrap()
}

fn uniform_fluid(g: Grid3, mean: [f64; 3]) -> FluidState {
    // Exact coefficients: only the zero mode carries the mean.
    let mut hat = FourierField::zeros(g, 3).unwrap();
    let boost = g.length().powf(1.5);
    for c in 0..3 {
        hat.slab_mut(c)[0] = num_complex::Complex64::new(mean[c] * boost, 0.0);
    }
    FluidState::from_velocity(hat).unwrap()
}

fn coupled_state(g: Grid3, amp: f64, count: usize, sigma: f64, seed: u64) -> SystemState {
    let l = g.length();
    let fluid = FluidState::from_velocity(random_div_free(g, amp, seed)).unwrap();
    let density = InitialDensity::new(
        [0.5 * l, 0.5 * l, 0.5 * l],
        0.3 * l,
        sigma,
        [0.05, -0.02, 0.01],
    )
    .unwrap();
    let particles = density.sample(count, l, seed ^ 0x5eed, false).unwrap();
    SystemState::new(0.0, fluid, particles).unwrap()
}

fn blank_record(t: f64) -> DiagnosticsRecord {
    DiagnosticsRecord {
        t,
        e: f64::NAN,
        d: f64::NAN,
        d_fluid: f64::NAN,
        d_kin: f64::NAN,
        d3: f64::NAN,
        d4: f64::NAN,
        w1: f64::NAN,
        mod_e: f64::NAN,
        low_mode: f64::NAN,
        grad_inf: f64::NAN,
        grad_inf_int: f64::NAN,
        f_h12_int: f64::NAN,
        mp3_sup: f64::NAN,
        split_ratio: f64::NAN,
        brink_p2: f64::NAN,
        brink_p3: f64::NAN,
        brink_p4: f64::NAN,
        gn_u_inf: f64::NAN,
        strong_stat: f64::NAN,
    }
}

// ---------------------------------------------------------------- schedule

#[test]
fn schedule_closed_forms_hold() {
    let s = SplittingSchedule::new(1.0, 1.0).unwrap();
    assert!(rel_gap(s.g2(0.0), 0.4) < 1e-15);
    assert!(rel_gap(s.g2(10.0), 0.2) < 1e-15);
    assert!(rel_gap(s.g_tilde2(0.0), 0.1) < 1e-15);
    assert!(rel_gap(s.g_bar2(5.0), s.g2(5.0) / 8.0) < 1e-15);
    assert!(rel_gap(s.radius(0.0), 0.4f64.sqrt()) < 1e-15);
}

#[test]
fn schedule_growth_factor_matches_quadrature() {
    // exp(integral g_tilde^2) against Simpson quadrature of alpha/(10+tau).
    for alpha in [0.5, 1.0, 1.4] {
        let s = SplittingSchedule::new(alpha, 2.0).unwrap();
        let t = 5.0;
        let n = 4096usize;
        let h = t / n as f64;
        let f = |tau: f64| alpha / (10.0 + tau);
        let mut simpson = f(0.0) + f(t);
        for k in 1..n {
            simpson += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        simpson *= h / 3.0;
        assert!(rel_gap(s.growth_factor(t), simpson.exp()) < 1e-12);
        assert!(rel_gap(s.integrated_g_tilde2(t), simpson) < 1e-12);
    }
}

#[test]
fn schedule_regulates_radius_and_rejects_bad_input() {
    // The radius-to-damping margin holds for every admissible alpha.
    let s = SplittingSchedule::new(1.49, 7.0).unwrap();
    assert!(s.g2(0.0) / (1.0 + s.c0()) <= 0.5);
    for (alpha, c0) in [(0.0, 1.0), (1.5, 1.0), (-1.0, 1.0), (f64::NAN, 1.0), (1.0, -0.1)] {
        assert!(matches!(
            SplittingSchedule::new(alpha, c0),
            Err(Error::InvalidArgument(_))
        ));
    }
}

// ------------------------------------------------- pointwise functionals

#[test]
fn equilibrium_state_measures_zero() {
    let g = grid(16, 2.0 * std::f64::consts::PI);
    let mean = [0.3, -0.2, 0.1];
    let fluid = uniform_fluid(g, mean);
    let density =
        InitialDensity::new([3.0, 3.0, 3.0], 1.2, 0.0, mean).unwrap();
    let particles = density.sample(500, g.length(), 7, false).unwrap();
    let state = SystemState::new(0.0, fluid, particles).unwrap();

    let d = dissipation(&state).unwrap();
    assert!(d.fluid.abs() < 1e-20);
    assert!(d.kinetic.abs() < 1e-20);
    assert!(modulated_energy(&state) < 1e-12);

    let speed = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
    assert!(rel_gap(wasserstein_v(state.particles()), speed) < 1e-12);

    let expected_energy =
        0.5 * speed * speed * g.volume() + 0.5 * speed * speed;
    assert!(rel_gap(energy(&state), expected_energy) < 1e-12);
}

#[test]
fn second_moment_equals_kinetic_dissipation() {
    let state = coupled_state(grid(16, 2.0 * std::f64::consts::PI), 0.2, 800, 0.4, 11);
    let nodal = state.fluid().nodal_velocity();
    let d2 = higher_dissipation(state.particles(), &nodal, 2.0).unwrap();
    let dk = kinetic_dissipation(state.particles(), &nodal).unwrap();
    assert_eq!(d2.to_bits(), dk.to_bits());
}

#[test]
fn higher_dissipation_hand_value_and_order_guard() {
    let g = grid(8, 4.0);
    let zero = RealField::zeros(g, 3).unwrap();
    let ens =
        ParticleEnsemble::from_parts(4.0, vec![[1.0, 2.0, 3.0]], vec![[2.0, 0.0, 0.0]], vec![0.5])
            .unwrap();
    let d3 = higher_dissipation(&ens, &zero, 3.0).unwrap();
    assert!(rel_gap(d3, 4.0) < 1e-15, "w |v|^3 = 0.5 * 8, got {d3}");
    assert!(matches!(
        higher_dissipation(&ens, &zero, 1.5),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn velocity_cost_obeys_cauchy_schwarz() {
    let state = coupled_state(grid(16, 2.0 * std::f64::consts::PI), 0.2, 600, 0.5, 13);
    let ens = state.particles();
    let w1 = wasserstein_v(ens);
    let bound = (2.0 * ens.kinetic_energy() * ens.total_weight()).sqrt();
    assert!(w1 <= bound * (1.0 + 1e-12), "w1 {w1} vs bound {bound}");

    // Single particle saturates the inequality.
    let one = ParticleEnsemble::from_parts(
        4.0,
        vec![[1.0, 1.0, 1.0]],
        vec![[0.0, 3.0, 0.0]],
        vec![0.25],
    )
    .unwrap();
    let lhs = wasserstein_v(&one);
    let rhs = (2.0 * one.kinetic_energy() * one.total_weight()).sqrt();
    assert!(rel_gap(lhs, rhs) < 1e-14);
}

#[test]
fn modulated_energy_ignores_common_drift() {
    let g = grid(16, 2.0 * std::f64::consts::PI);
    let state = coupled_state(g, 0.15, 700, 0.3, 17);
    let base = modulated_energy(&state);

    let shift = [0.4, -0.3, 0.2];
    let mut hat = state.fluid().velocity().clone();
    let boost = g.length().powf(1.5);
    for c in 0..3 {
        hat.slab_mut(c)[0] += num_complex::Complex64::new(shift[c] * boost, 0.0);
    }
    let fluid = FluidState::from_velocity(hat).unwrap();
    let vel = state
        .particles()
        .velocities()
        .iter()
        .map(|v| [v[0] + shift[0], v[1] + shift[1], v[2] + shift[2]])
        .collect();
    let particles = ParticleEnsemble::from_parts(
        g.length(),
        state.particles().positions().to_vec(),
        vel,
        state.particles().weights().to_vec(),
    )
    .unwrap();
    let shifted = SystemState::new(0.0, fluid, particles).unwrap();
    assert!(rel_gap(modulated_energy(&shifted), base) < 1e-10);
}

#[test]
fn moment_sup_of_single_particle_at_node() {
    let g = grid(8, 4.0);
    let ens = ParticleEnsemble::from_parts(
        4.0,
        vec![[1.0, 1.5, 2.0]],
        vec![[0.0, 2.0, 0.0]],
        vec![1.0],
    )
    .unwrap();
    let moments = deposit_moments(&ens, g, &[3.0]).unwrap();
    let sup = mp_sup(&moments, 3.0).unwrap();
    assert!(rel_gap(sup, 8.0 / g.cell_volume()) < 1e-12);
    assert!(matches!(mp_sup(&moments, 4.0), Err(Error::InvalidArgument(_))));
}

// ------------------------------------------------------- balance and fits

#[test]
fn energy_balance_accepts_exact_series_and_flags_defect() {
    let d = |t: f64| 0.3 + 0.1 * t.sin();
    let mut records = Vec::new();
    let e0 = 2.0;
    let mut integral = 0.0;
    let mut prev_t: Option<f64> = None;
    for k in 0..=100 {
        let t = 0.05 * k as f64;
        if let Some(tp) = prev_t {
            integral += 0.5 * (t - tp) * (d(tp) + d(t));
        }
        prev_t = Some(t);
        let mut r = blank_record(t);
        r.e = e0 - integral;
        r.d = d(t);
        records.push(r);
    }
    let report = energy_balance_residual(&records, 1e-10).unwrap();
    assert!(report.pass, "{}", report.summary_line());
    assert!(report.lhs < 1e-12);

    records.last_mut().unwrap().e += 0.01 * e0;
    let bad = energy_balance_residual(&records, 5e-3).unwrap();
    assert!(!bad.pass);
    assert!((bad.lhs - 0.01).abs() < 1e-12);

    assert!(energy_balance_residual(&records[..1], 0.1).is_err());
}

#[test]
fn weighted_dissipation_integral_closed_form() {
    // D = 1, alpha = 1: integral (1 + tau) over [0, 1] is exactly 3/2 and the
    // integrand is linear, so trapezoid reproduces it to rounding.
    let times: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
    let values = vec![1.0; times.len()];
    let curve = weighted_dissipation_integral(&times, &values, 1.0).unwrap();
    assert_eq!(curve.len(), times.len());
    assert!((curve[0] - 0.0).abs() < 1e-15);
    assert!(rel_gap(*curve.last().unwrap(), 1.5) < 1e-13);

    assert!(weighted_dissipation_integral(&times, &values, 0.0).is_err());
    assert!(weighted_dissipation_integral(&times, &values, 1.5).is_err());
    assert!(weighted_dissipation_integral(&times[..3], &values, 1.0).is_err());
}

#[test]
fn decay_fit_recovers_power_law_and_exponential() {
    let times: Vec<f64> = (0..200).map(|k| 0.05 * k as f64).collect();
    let power: Vec<f64> = times.iter().map(|t| 2.0 * (1.0 + t).powf(-1.5)).collect();
    let fit = decay_fit(&times, &power, 0.0, FitKind::PowerLaw).unwrap();
    assert!((fit.exponent + 1.5).abs() < 1e-6, "exponent {}", fit.exponent);
    assert!(fit.r2 >= 0.999999);
    assert_eq!(fit.used, 200);
    assert_eq!(fit.dropped, 0);

    let exp: Vec<f64> = times.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
    let fit = decay_fit(&times, &exp, 1.0, FitKind::Exponential).unwrap();
    assert!((fit.exponent + 0.7).abs() < 1e-9);
    assert!(fit.r2 >= 0.999999);

    // Nonpositive samples are dropped, not fitted.
    let mut with_holes = power.clone();
    with_holes[20] = 0.0;
    with_holes[21] = -1.0;
    with_holes[22] = f64::NAN;
    let fit = decay_fit(&times, &with_holes, 0.0, FitKind::PowerLaw).unwrap();
    assert_eq!(fit.dropped, 3);
    assert_eq!(fit.used, 197);

    assert!(decay_fit(&times[..5], &power[..5], 0.0, FitKind::PowerLaw).is_err());
    assert!(decay_fit(&times, &power[..50], 0.0, FitKind::PowerLaw).is_err());
}

// --------------------------------------------------------------- monitors

#[test]
fn gradient_budget_monitor_finds_crossing() {
    // Synthetic records with grad_inf = 0.1 give a running integral 0.1 t,
    // which crosses 0.5 at t = 5.
    let mut records = Vec::new();
    for k in 0..=100 {
        let t = 0.1 * k as f64;
        let mut r = blank_record(t);
        r.grad_inf = 0.1;
        r.grad_inf_int = 0.1 * t;
        records.push(r);
    }
    let report = bootstrap_monitor(&records, 0.5).unwrap();
    assert!(!report.pass, "budget exceeded by the end of the run");
    assert!(report.note.contains("t = 5.000000"), "note: {}", report.note);

    let relaxed = bootstrap_monitor(&records, 2.0).unwrap();
    assert!(relaxed.pass);
    assert!(relaxed.note.contains("never"));

    assert!(bootstrap_monitor(&records, 0.0).is_err());
    assert!(bootstrap_monitor(&[], 0.5).is_err());
}

#[test]
fn strong_existence_monitor_thresholds_on_c_star() {
    let mut records = Vec::new();
    for k in 0..=10 {
        let t = 0.1 * k as f64;
        let mut r = blank_record(t);
        r.strong_stat = 0.8 * (t / 1.0).min(1.0);
        records.push(r);
    }
    let ok = strong_existence_monitor(&records, 1.0).unwrap();
    assert!(ok.pass && (ok.lhs - 0.8).abs() < 1e-15);
    let tight = strong_existence_monitor(&records, 2.0).unwrap();
    assert!(!tight.pass, "threshold 1/4 is below the statistic");
    assert!(strong_existence_monitor(&[], 1.0).is_err());
}

// ------------------------------------------------------------- gn ratios

#[test]
fn interpolation_ratios_are_amplitude_invariant() {
    let g = grid(16, 2.0 * std::f64::consts::PI);
    let u = random_div_free(g, 0.8, 23);
    let mut scaled = u.clone();
    for v in scaled.data_mut() {
        *v *= 2.5;
    }
    for variant in [
        GnVariant::SupInterpolation,
        GnVariant::SupFromLaplacianLp { p: 4.0 },
        GnVariant::GradLpFromLaplacianLp { p: 4.0 },
        GnVariant::GradSupFromLaplacianLp { p: 4.0 },
    ] {
        let a = gn_ratio(&u, variant).unwrap();
        let b = gn_ratio(&scaled, variant).unwrap();
        assert!(rel_gap(a, b) < 1e-12, "{variant:?}: {a} vs {b}");
        assert!(a.is_finite() && a > 0.0);
    }
}

#[test]
fn interpolation_ratio_exact_on_single_mode() {
    // u = A (sin y, 0, 0): the Laplacian is -u, so the denominator collapses
    // to the L^2 norm and the ratio is A / |u|_2.
    let g = grid(16, 2.0 * std::f64::consts::PI);
    let amp = 0.7;
    let nodal = RealField::from_fn(g, 3, |_, y, _| vec![amp * y.sin(), 0.0, 0.0]).unwrap();
    let u = FourierField::from_real(&nodal);
    let l2 = amp * (g.volume() / 2.0).sqrt();
    let got = gn_ratio(&u, GnVariant::SupInterpolation).unwrap();
    assert!(rel_gap(got, amp / l2) < 1e-12, "got {got}, want {}", amp / l2);
}

#[test]
fn interpolation_ratio_rejects_low_p_and_degenerate_fields() {
    let g = grid(16, 2.0 * std::f64::consts::PI);
    let u = random_div_free(g, 0.5, 29);
    for p in [3.0, 2.0, 1.0, f64::NAN] {
        assert!(gn_ratio(&u, GnVariant::SupFromLaplacianLp { p }).is_err());
    }
    // A constant field has no fluctuation: the ratio is vacuous.
    let flat = uniform_fluid(g, [0.4, 0.0, 0.0]);
    assert!(gn_ratio(flat.velocity(), GnVariant::SupInterpolation).unwrap().is_nan());
}

// ----------------------------------------------------- drag identity probe

#[test]
fn drag_identity_closed_form_for_resting_fluid() {
    // With u = 0 the dissipation obeys D_p(t) = D_p(0) e^{-pt} and the
    // identity reduces to integral D_p = (D_p(0)/p)(1 - e^{-pt}).
    let p = 3.0;
    let d0 = 1.7;
    let mut acc = DpIdentityAccumulator::new(p, PhiSpec::One).unwrap();
    let h = 5e-5;
    let steps = 20_000usize;
    for k in 0..=steps {
        let t = k as f64 * h;
        acc.push(t, d0 * (-p * t).exp(), 0.0).unwrap();
    }
    let report = acc.report(1e-8).unwrap();
    assert!(report.pass, "{}", report.summary_line());
    let t_end = steps as f64 * h;
    let closed = d0 / p * (1.0 - (-p * t_end).exp());
    assert!(rel_gap(report.rhs, closed) < 1e-8);
}

#[test]
fn drag_identity_holds_for_consistent_weighted_series() {
    // Any smooth D_p with Mixed = -(D_p' + p D_p)/p satisfies the identity
    // for every weight phi; check a time-dependent profile under
    // phi = (1+s)^{p gamma}.
    let p = 3.0;
    let dp = |t: f64| (-t).exp() * (2.0 + t.sin());
    let dp_prime = |t: f64| (-t).exp() * (t.cos() - 2.0 - t.sin());
    let mixed = |t: f64| -(dp_prime(t) + p * dp(t)) / p;
    let mut acc = DpIdentityAccumulator::new(p, PhiSpec::Power { gamma: 0.5 }).unwrap();
    let h = 1e-4;
    for k in 0..=10_000 {
        let t = k as f64 * h;
        acc.push(t, dp(t), mixed(t)).unwrap();
    }
    let report = acc.report(1e-6).unwrap();
    assert!(report.pass, "{}", report.summary_line());
}

#[test]
fn drag_identity_rejects_bad_usage() {
    assert!(DpIdentityAccumulator::new(1.0, PhiSpec::One).is_err());
    assert!(DpIdentityAccumulator::new(2.0, PhiSpec::Power { gamma: -1.0 }).is_err());

    let mut acc = DpIdentityAccumulator::new(2.0, PhiSpec::One).unwrap();
    acc.push(0.0, 1.0, 0.0).unwrap();
    assert!(acc.push(0.0, 1.0, 0.0).is_err(), "time must advance");
    assert!(acc.report(1e-8).is_err(), "needs at least 3 samples");
    acc.push(0.1, 1.0, 0.0).unwrap();
    acc.push(0.2, 1.0, 0.0).unwrap();
    assert!(acc.report(0.0).is_err(), "tolerance must be positive");
    assert!(acc.report(1e-8).is_ok());
}

#[test]
fn mixed_term_vanishes_for_steady_uniform_flow() {
    let g = grid(8, 4.0);
    let u = RealField::from_fn(g, 3, |_, _, _| vec![0.3, -0.1, 0.2]).unwrap();
    let ens = ParticleEnsemble::from_parts(
        4.0,
        vec![[0.5, 1.0, 1.5], [2.0, 2.5, 3.0]],
        vec![[1.0, 0.0, 0.0], [0.0, -1.0, 0.5]],
        vec![0.5, 0.5],
    )
    .unwrap();
    let mixed = dp_mixed_term(&ens, &u, &u, &u, 0.2, 3.0).unwrap();
    assert!(mixed.abs() < 1e-15);
}

#[test]
fn mixed_term_matches_hand_values() {
    let g = grid(8, 4.0);
    let base = [0.3, -0.1, 0.2];
    let rate = [0.5, 0.2, -0.4];
    let h = 0.05;
    let field_at = |dt: f64| {
        RealField::from_fn(g, 3, |_, _, _| {
            vec![base[0] + rate[0] * dt, base[1] + rate[1] * dt, base[2] + rate[2] * dt]
        })
        .unwrap()
    };
    let v = [1.0, 0.5, -0.2];
    let w = 0.7;
    let ens =
        ParticleEnsemble::from_parts(4.0, vec![[1.0, 2.0, 3.0]], vec![v], vec![w]).unwrap();
    let p = 3.0;
    let mixed =
        dp_mixed_term(&ens, &field_at(-h), &field_at(0.0), &field_at(h), 2.0 * h, p).unwrap();
    // Uniform-in-space field: the convective part vanishes and
    // Mixed = w * (du/dt . (v - u)) |v - u|^{p-2}.
    let rel = [v[0] - base[0], v[1] - base[1], v[2] - base[2]];
    let rel_norm2 = rel.iter().map(|r| r * r).sum::<f64>();
    let dot: f64 = (0..3).map(|c| rate[c] * rel[c]).sum();
    let want = w * dot * rel_norm2.powf(0.5 * p - 1.0);
    assert!(rel_gap(mixed, want) < 1e-12, "got {mixed}, want {want}");
}

#[test]
fn mixed_term_convective_part_exact_at_node() {
    // Steady u = (sin y, 0, 0) sampled at a grid node: spectral gradient and
    // interpolation are both exact there, so Mixed has a closed form.
    let length = 2.0 * std::f64::consts::PI;
    let g = grid(16, length);
    let nodal = RealField::from_fn(g, 3, |_, y, _| vec![y.sin(), 0.0, 0.0]).unwrap();
    let node = [g.node(3), g.node(5), g.node(7)];
    let v = [0.4, 0.9, -0.3];
    let w = 0.6;
    let ens = ParticleEnsemble::from_parts(length, vec![node], vec![v], vec![w]).unwrap();
    let mixed = dp_mixed_term(&ens, &nodal, &nodal, &nodal, 1.0, 2.0).unwrap();
    // (v . grad) u = (v_y cos y, 0, 0); Mixed = w * v_y cos y * (v_x - sin y).
    let want = w * v[1] * node[1].cos() * (v[0] - node[1].sin());
    assert!(rel_gap(mixed, want) < 1e-12, "got {mixed}, want {want}");
}

#[test]
fn mixed_term_rejects_mismatched_input() {
    let g = grid(8, 4.0);
    let other = grid(16, 4.0);
    let u = RealField::zeros(g, 3).unwrap();
    let u_other = RealField::zeros(other, 3).unwrap();
    let ens = ParticleEnsemble::from_parts(
        4.0,
        vec![[1.0, 1.0, 1.0]],
        vec![[0.0, 0.0, 0.0]],
        vec![1.0],
    )
    .unwrap();
    assert!(dp_mixed_term(&ens, &u_other, &u, &u, 0.1, 2.0).is_err());
    assert!(dp_mixed_term(&ens, &u, &u, &u, 0.0, 2.0).is_err());
    assert!(dp_mixed_term(&ens, &u, &u, &u, 0.1, 1.0).is_err());
}

// ---------------------------------------------------------------- sampler

#[test]
fn sampler_streams_coupled_run_consistently() {
    let g = grid(16, 2.0 * std::f64::consts::PI);
    let schedule = SplittingSchedule::new(1.0, 1.0).unwrap();
    let mut sampler = Sampler::new(schedule, 1.0, true).unwrap();
    let mut state = coupled_state(g, 0.1, 1500, 0.4, 31);
    let dt = 0.01;
    sampler
        .sample(SampleInput {
            time: state.time(),
            fluid_hat: state.fluid().velocity(),
            particles: Some(state.particles()),
        })
        .unwrap();
    for _ in 0..10 {
        state = step_system(&state, dt, true).unwrap();
        sampler
            .sample(SampleInput {
                time: state.time(),
                fluid_hat: state.fluid().velocity(),
                particles: Some(state.particles()),
            })
            .unwrap();
    }
    let records = sampler.records();
    assert_eq!(records.len(), 11);
    let mass = state.particles().total_weight();
    for pair in records.windows(2) {
        assert!(pair[1].t > pair[0].t);
        assert!(pair[1].strong_stat >= pair[0].strong_stat);
        assert!(pair[1].grad_inf_int >= pair[0].grad_inf_int);
    }
    for r in records {
        assert!(rel_gap(r.d, r.d_fluid + r.d_kin) < 1e-14);
        assert!(r.mod_e.is_finite() && r.mod_e >= 0.0);
        assert!(r.split_ratio.is_nan(), "splitting ratio is a large-box quantity");
        assert!(r.w1 <= (2.0 * r.e * mass).sqrt() * (1.0 + 1e-12));
        for ratio in [r.brink_p2, r.brink_p3, r.brink_p4] {
            assert!(ratio.is_finite() && ratio > 0.0 && ratio <= 1.05, "ratio {ratio}");
        }
        assert!(r.mp3_sup.is_finite() && r.mp3_sup > 0.0);
        assert!(r.gn_u_inf.is_finite() && r.gn_u_inf > 0.0);
    }

    // Time must advance between samples.
    let bad = SampleInput {
        time: records.last().unwrap().t,
        fluid_hat: state.fluid().velocity(),
        particles: Some(state.particles()),
    };
    assert!(sampler.sample(bad).is_err());
}

#[test]
fn sampler_fluid_only_run_marks_kinetic_columns() {
    // Pure heat flow in a large box: kinetic columns are NaN and the
    // low-frequency energy never exceeds its splitting bound.
    let g = grid(16, 40.0);
    let schedule = SplittingSchedule::new(1.0, 1.0).unwrap();
    let mut sampler = Sampler::new(schedule, 1.0, false).unwrap();
    let mut fluid = FluidState::from_velocity(random_div_free(g, 0.05, 37)).unwrap();
    let dt = 0.5;
    for k in 0..=8 {
        sampler
            .sample(SampleInput {
                time: k as f64 * dt,
                fluid_hat: fluid.velocity(),
                particles: None,
            })
            .unwrap();
        fluid = ns_step(&fluid, None, dt, false).unwrap();
    }
    for r in sampler.records() {
        assert!(r.e.is_finite() && r.d.is_finite());
        assert!(r.d_kin.is_nan() && r.d3.is_nan() && r.w1.is_nan() && r.mod_e.is_nan());
        assert!(r.brink_p2.is_nan() && r.mp3_sup.is_nan());
        assert!(
            r.split_ratio.is_finite() && r.split_ratio <= 1.0 + 1e-12,
            "heat flow low modes are bounded by the evolved initial data, got {}",
            r.split_ratio
        );
        assert!(rel_gap(r.d, r.d_fluid) < 1e-15);
    }
}

#[test]
fn csv_schema_is_frozen() {
    assert_eq!(CSV_PREAMBLE, "# vns-diag v1");
    assert_eq!(csv_header().split(',').count(), 20);
    let mut r = blank_record(0.25);
    r.e = 1.5;
    let line = r.csv_line();
    assert_eq!(line.split(',').count(), 20);
    assert!(line.starts_with("0.25,1.5,NaN,"));
    // Column order is part of the schema.
    assert!(csv_header().starts_with("t,E,D,D_fluid,D_kin,"));
    assert!(csv_header().ends_with("gn_u_inf,strong_stat"));
}

// ------------------------------------------------------------ properties

mod properties {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// The weighted dissipation curve is nondecreasing for nonnegative D.
        #[test]
        fn weighted_integral_monotone(alpha in 0.1f64..1.4, seed in 0u64..500) {
            let mut rng = seeded_rng(seed);
            let times: Vec<f64> = (0..40).map(|k| 0.1 * k as f64).collect();
            let values: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..2.0)).collect();
            let curve = weighted_dissipation_integral(&times, &values, alpha).unwrap();
            for pair in curve.windows(2) {
                prop_assert!(pair[1] >= pair[0] - 1e-15);
            }
        }

        /// Power-law fits are exact on exact power laws, whatever the rate.
        #[test]
        fn decay_fit_exact_on_power_laws(rate in -3.0f64..-0.1, scale in 0.1f64..10.0) {
            let times: Vec<f64> = (0..50).map(|k| 0.2 * k as f64).collect();
            let values: Vec<f64> =
                times.iter().map(|t| scale * (1.0 + t).powf(rate)).collect();
            let fit = decay_fit(&times, &values, 0.0, FitKind::PowerLaw).unwrap();
            prop_assert!((fit.exponent - rate).abs() < 1e-6);
            prop_assert!(fit.r2 > 0.999999);
        }

        /// The equilibrium gauge of the modulated energy: adding one common
        /// drift to fluid and particles never changes it.
        #[test]
        fn modulated_energy_gauge(sx in -0.5f64..0.5, sy in -0.5f64..0.5) {
            let g = Grid3::new(16, 2.0 * std::f64::consts::PI, TWO_THIRDS).unwrap();
            let state = coupled_state(g, 0.1, 200, 0.3, 41);
            let base = modulated_energy(&state);
            let shift = [sx, sy, 0.1];
            let mut hat = state.fluid().velocity().clone();
            let boost = g.length().powf(1.5);
            for c in 0..3 {
                hat.slab_mut(c)[0] += num_complex::Complex64::new(shift[c] * boost, 0.0);
            }
            let fluid = FluidState::from_velocity(hat).unwrap();
            let vel = state
                .particles()
                .velocities()
                .iter()
                .map(|v| [v[0] + shift[0], v[1] + shift[1], v[2] + shift[2]])
                .collect();
            let particles = ParticleEnsemble::from_parts(
                g.length(),
                state.particles().positions().to_vec(),
                vel,
                state.particles().weights().to_vec(),
            )
            .unwrap();
            let shifted = SystemState::new(0.0, fluid, particles).unwrap();
            prop_assert!(rel_gap(modulated_energy(&shifted), base) < 1e-9);
        }
    }
}
