use super::*;
use crate::spectral::heat_evolve;
use crate::testkit::{cellular_vortex, max_rel_coef_diff, random_div_free};
use proptest::prelude::*;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn grid(n: usize) -> Grid3 {
    Grid3::with_default_dealias(n, TWO_PI).expect("valid grid")
}

/// Energy inner product of two coefficient fields (Plancherel form).
fn coef_inner(a: &FourierField, b: &FourierField) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x * y.conj()).re).sum()
}

#[test]
fn state_construction_enforces_invariants() {
    let g = grid(16);
    let raw = crate::testkit::random_band_limited(g, 3, 1.0, 2);
    // A generic field is not divergence-free and must be rejected.
    assert!(FluidState::from_velocity(raw.clone()).is_err());
    let projected = FluidState::project(raw.clone()).expect("project");
    assert!(projected.velocity().max_relative_divergence().expect("div") < 1e-12);
    // Projection is idempotent: re-wrapping the projected coefficients is a no-op.
    let again = FluidState::from_velocity(projected.velocity().clone()).expect("wrap");
    assert!(max_rel_coef_diff(projected.velocity(), again.velocity()) < 1e-15);

    let scalar = FourierField::zeros(g, 1).expect("scalar");
    assert!(FluidState::project(scalar).is_err());

    // Coefficients outside the dealias band are stripped by construction.
    let mut spiky = FourierField::zeros(g, 3).expect("field");
    let hi = g.idx(7, 0, 0); // |signed| = 7 > cutoff 5 for n = 16
    spiky.slab_mut(0)[hi] = num_complex::Complex64::new(1.0, 0.0);
    let cleaned = FluidState::project(spiky).expect("project");
    assert_eq!(cleaned.velocity().slab(0)[hi].norm(), 0.0);
}

#[test]
fn linear_step_reproduces_the_heat_semigroup() {
    let g = grid(16);
    let state = FluidState::project(random_div_free(g, 1.0, 7)).expect("state");
    let dt = 0.3;
    let stepped = ns_step(&state, None, dt, false).expect("step");
    let exact = heat_evolve(state.velocity(), dt).expect("heat");
    assert!(max_rel_coef_diff(stepped.velocity(), &exact) < 1e-13);
    assert!(stepped.energy() <= state.energy());
}

#[test]
fn advection_term_matches_hand_computed_oracle() {
    // u = (sin y, 0, sin x) gives div(u x u) = (0, 0, cos x sin y), which is
    // already divergence-free, so the advection term is its negative.
    let g = grid(16);
    let u = RealField::from_fn(g, 3, |x, y, _z| vec![y.sin(), 0.0, x.sin()]).expect("field");
    let hat = FourierField::from_real(&u);
    let advection = nonlinear_term(&hat).expect("term");
    let expected_nodal =
        RealField::from_fn(g, 3, |x, y, _z| vec![0.0, 0.0, -(x.cos() * y.sin())])
            .expect("field");
    let expected = FourierField::from_real(&expected_nodal);
    assert!(max_rel_coef_diff(&advection, &expected) < 1e-12);
}

#[test]
fn cellular_vortex_advection_is_a_pure_gradient() {
    // The classical vortex transports itself along its own streamlines:
    // div(u x u) is a gradient, so the projected advection term vanishes.
    let g = grid(16);
    let hat = FourierField::from_real(&cellular_vortex(g, 1.0));
    let advection = nonlinear_term(&hat).expect("term");
    assert!(advection.l2_norm() < 1e-12, "residual {:.3e}", advection.l2_norm());
}

#[test]
fn advection_is_orthogonal_to_the_velocity() {
    let g = grid(16);
    let hat = random_div_free(g, 0.8, 3);
    let advection = nonlinear_term(&hat).expect("term");
    let inner = coef_inner(&advection, &hat);
    let scale = advection.l2_norm() * hat.l2_norm();
    assert!(inner.abs() < 1e-12 * scale.max(1.0), "energy leak {inner:.3e}");
    for c in 0..3 {
        assert_eq!(advection.zero_mode(c).norm(), 0.0, "zero mode fed by advection");
    }
}

#[test]
fn forced_step_tracks_a_manufactured_solution_at_second_order() {
    // Manufactured velocity: time-modulated cellular vortex plus a transverse
    // wave, chosen so every term of the balance has a closed form.
    //   u(t) = a(t) (sin x cos y, -cos x sin y, 0) + b(t) (0, sin z, 0)
    // The projected convective derivative reduces to the divergence-free
    // cross term -a b (sin x sin y sin z, cos x cos y sin z, 0), so the
    // balancing force is
    //   S = (a' + 2a) TG + (b' + b) W - a b (sin x sin y sin z, cos x cos y sin z, 0).
    let g = grid(16);
    let a = |t: f64| 1.0 + 0.5 * t.sin();
    let da = |t: f64| 0.5 * t.cos();
    let b = |t: f64| 0.7 + 0.3 * (2.0 * t).cos();
    let db = |t: f64| -0.6 * (2.0 * t).sin();

    let exact_nodal = |t: f64| -> RealField {
        RealField::from_fn(g, 3, |x, y, z| {
            vec![
                a(t) * x.sin() * y.cos(),
                -a(t) * x.cos() * y.sin() + b(t) * z.sin(),
                0.0,
            ]
        })
        .expect("field")
    };
    let source = |t: f64| -> FourierField {
        let (at, bt) = (a(t), b(t));
        let (ca, cb) = (da(t) + 2.0 * at, db(t) + bt);
        let nodal = RealField::from_fn(g, 3, |x, y, z| {
            vec![
                ca * x.sin() * y.cos() - at * bt * x.sin() * y.sin() * z.sin(),
                -ca * x.cos() * y.sin() + cb * z.sin() - at * bt * x.cos() * y.cos() * z.sin(),
                0.0,
            ]
        })
        .expect("field");
        FourierField::from_real(&nodal)
    };

    let horizon = 0.5;
    let run = |steps: usize| -> f64 {
        let dt = horizon / steps as f64;
        let mut state =
            FluidState::project(FourierField::from_real(&exact_nodal(0.0))).expect("state");
        for k in 0..steps {
            let force = source((k as f64 + 0.5) * dt);
            state = ns_step(&state, Some(&force), dt, true).expect("step");
        }
        let exact = FourierField::from_real(&exact_nodal(horizon));
        let mut diff = state.into_velocity();
        for (d, e) in diff.data_mut().iter_mut().zip(exact.data()) {
            *d -= e;
        }
        diff.l2_norm() / exact.l2_norm()
    };

    let e1 = run(20);
    let e2 = run(40);
    let order = (e1 / e2).log2();
    assert!(
        (1.7..2.3).contains(&order),
        "order {order:.2} from errors {e1:.3e} -> {e2:.3e}"
    );
}

#[test]
fn mean_velocity_integrates_the_mean_force_exactly() {
    let g = grid(16);
    let mean_force = [0.3, -0.1, 0.2];
    let force_nodal = RealField::from_fn(g, 3, |x, _y, _z| {
        vec![mean_force[0] + 0.1 * x.sin(), mean_force[1], mean_force[2]]
    })
    .expect("field");
    let force = FourierField::from_real(&force_nodal);
    let mut state = FluidState::project(random_div_free(g, 0.2, 9)).expect("state");
    let before: Vec<f64> = (0..3).map(|c| state.velocity().mean_value(c)).collect();
    let dt = 0.02;
    let steps = 25;
    for _ in 0..steps {
        state = ns_step(&state, Some(&force), dt, true).expect("step");
    }
    let elapsed = dt * steps as f64;
    for c in 0..3 {
        let got = state.velocity().mean_value(c);
        let want = before[c] + elapsed * mean_force[c];
        assert!(
            (got - want).abs() < 1e-13 * (1.0 + want.abs()),
            "component {c}: {got} vs {want}"
        );
    }
}

#[test]
fn unforced_turbulence_dissipates_energy_monotonically() {
    let g = grid(16);
    let mut state = FluidState::project(random_div_free(g, 0.5, 17)).expect("state");
    let mut energy = state.energy();
    for _ in 0..20 {
        state = ns_step(&state, None, 0.01, true).expect("step");
        let next = state.energy();
        assert!(next <= energy * (1.0 + 1e-12), "energy grew: {energy} -> {next}");
        energy = next;
    }
}

#[test]
fn step_rejects_invalid_requests() {
    let g = grid(16);
    let state = FluidState::project(random_div_free(g, 1.0, 4)).expect("state");
    assert!(ns_step(&state, None, 0.0, false).is_err());
    assert!(ns_step(&state, None, -0.1, false).is_err());
    assert!(ns_step(&state, None, f64::NAN, false).is_err());

    let fast = FluidState::project(random_div_free(g, 50.0, 5)).expect("state");
    match ns_step(&fast, None, 0.1, true) {
        Err(Error::Cfl(_)) => {}
        other => panic!("expected CFL rejection, got {other:?}"),
    }

    let scalar = FourierField::zeros(g, 1).expect("scalar");
    assert!(ns_step(&state, Some(&scalar), 0.01, false).is_err());
    let other_grid = FourierField::zeros(grid(8), 3).expect("field");
    assert!(ns_step(&state, Some(&other_grid), 0.01, false).is_err());
}

#[test]
fn max_speed_matches_direct_scan() {
    let g = grid(8);
    let u = RealField::from_fn(g, 3, |x, y, _z| vec![x.sin(), y.cos(), 0.5]).expect("field");
    let got = max_speed(&u).expect("speed");
    let mut want = 0.0f64;
    for i in 0..g.slab_len() {
        let s = u.slab(0)[i].powi(2) + u.slab(1)[i].powi(2) + u.slab(2)[i].powi(2);
        want = want.max(s.sqrt());
    }
    assert!((got - want).abs() < 1e-15);
    let scalar = RealField::zeros(g, 1).expect("scalar");
    assert!(max_speed(&scalar).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Without forcing the linear step never increases the energy norm,
    /// whatever the step size.
    #[test]
    fn prop_linear_step_contracts(seed in 0u64..500, dt in 0.01f64..0.5) {
        let g = grid(8);
        let state = FluidState::project(random_div_free(g, 1.0, seed)).expect("state");
        let stepped = ns_step(&state, None, dt, false).expect("step");
        prop_assert!(stepped.energy() <= state.energy() * (1.0 + 1e-12));
    }

    /// The truncated advection term never feeds energy into the field.
    #[test]
    fn prop_advection_stays_orthogonal(seed in 0u64..500) {
        let g = grid(8);
        let hat = random_div_free(g, 0.6, seed);
        let advection = nonlinear_term(&hat).expect("term");
        let inner = coef_inner(&advection, &hat);
        let scale = (advection.l2_norm() * hat.l2_norm()).max(1.0);
        prop_assert!(inner.abs() < 1e-12 * scale);
    }
}
