//! End-to-end orchestrator tests: artifacts on disk, CSV schema round trips,
//! byte-level determinism, checkpoint/resume equivalence, abort behavior.

use std::fs;
use std::path::PathBuf;

use vns_core::config::{
    FluidConfig, FluidInit, GridConfig, Mode, MonitorsConfig, OutputConfig, ParticlesConfig,
    RunConfig, ScheduleConfig, TimeConfig, SCHEMA_VERSION,
};
use vns_core::run::{analyze, parse_csv, resume, run, CONFIG_FILE, CSV_FILE, PROBES_FILE, SUMMARY_FILE};
use vns_core::Error;

const TAU: f64 = 2.0 * std::f64::consts::PI;

fn torus_coupled(dir: PathBuf) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        mode: Mode::Torus,
        grid: GridConfig { length: TAU, n: 16, dealias: 2.0 / 3.0 },
        particles: Some(ParticlesConfig {
            count: 3000,
            sigma_v: 0.3,
            mean_velocity: [0.1, 0.0, 0.0],
            bump_center: [0.5 * TAU; 3],
            bump_radius: 1.5,
            seed: 9,
            center_velocities: false,
        }),
        fluid: FluidConfig::Solve {
            nonlinear: true,
            init: FluidInit::Uniform { velocity: [0.05, 0.0, 0.0] },
        },
        time: TimeConfig { dt: 5e-3, t_end: 0.25, sample_every: 5 },
        schedule: ScheduleConfig::default(),
        monitors: MonitorsConfig::default(),
        output: OutputConfig { dir, checkpoint_every: 0 },
    }
}

#[test]
fn coupled_run_writes_consistent_artifacts_and_repeats_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");

    let summary = run(&torus_coupled(dir_a.clone())).unwrap();
    assert_eq!(summary.steps, 50);
    assert_eq!(summary.records.len(), 11);
    assert!((summary.final_time - 0.25).abs() < 1e-12);

    for name in [CONFIG_FILE, CSV_FILE, PROBES_FILE, SUMMARY_FILE] {
        assert!(dir_a.join(name).exists(), "missing {name}");
    }
    // The CSV parses back into exactly the records the run returned.
    let (rows, stats) = analyze(&dir_a.join(CSV_FILE)).unwrap();
    assert_eq!(rows.len(), summary.records.len());
    for (a, b) in rows.iter().zip(&summary.records) {
        assert_eq!(a.t.to_bits(), b.t.to_bits());
        assert_eq!(a.e.to_bits(), b.e.to_bits());
    }
    assert_eq!(stats.rows, 11);
    assert!(stats.final_energy < stats.initial_energy);

    // Energy balance and the drag-force bounds hold on this warm cloud.
    let balance = summary.reports.iter().find(|r| r.name == "energy-balance").unwrap();
    assert!(balance.pass, "{}", balance.summary_line());
    for p in ["p2", "p3", "p4"] {
        let r = summary
            .reports
            .iter()
            .find(|r| r.name == format!("drag-force-bound-{p}"))
            .unwrap();
        assert!(r.pass, "{}", r.summary_line());
    }

    // Identical config and seeds give identical bytes.
    run(&torus_coupled(dir_b.clone())).unwrap();
    assert_eq!(fs::read(dir_a.join(CSV_FILE)).unwrap(), fs::read(dir_b.join(CSV_FILE)).unwrap());
}

#[test]
fn resumed_run_matches_uninterrupted_run_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_full = tmp.path().join("full");
    let dir_split = tmp.path().join("split");

    let mut full = torus_coupled(dir_full.clone());
    full.time.t_end = 0.2;
    full.output.checkpoint_every = 10;
    run(&full).unwrap();

    // First leg: stop halfway, leaving a checkpoint at the final step.
    let mut first = full.clone();
    first.time.t_end = 0.1;
    first.output.dir = dir_split.clone();
    run(&first).unwrap();

    // Extend the horizon in the run directory's config and resume.
    let mut extended = first.clone();
    extended.time.t_end = 0.2;
    fs::write(dir_split.join(CONFIG_FILE), extended.to_toml().unwrap()).unwrap();
    let summary = resume(&dir_split).unwrap();
    assert_eq!(summary.steps, 40);
    assert!((summary.final_time - 0.2).abs() < 1e-12);
    assert_eq!(summary.records.len(), 9);

    let full_csv = fs::read(dir_full.join(CSV_FILE)).unwrap();
    let split_csv = fs::read(dir_split.join(CSV_FILE)).unwrap();
    assert_eq!(full_csv, split_csv, "resumed run diverged from uninterrupted run");
}

#[test]
fn resume_rejects_missing_or_inconsistent_state() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let config = torus_coupled(dir.clone());
    run(&config).unwrap();
    // No checkpoint was requested, so resume has nothing to continue from.
    assert!(resume(&dir).is_err());

    let dir2 = tmp.path().join("fluid-only");
    let mut fluid_only = torus_coupled(dir2.clone());
    fluid_only.particles = None;
    fluid_only.fluid =
        FluidConfig::Solve { nonlinear: false, init: FluidInit::Random { amplitude: 0.01, seed: 3 } };
    run(&fluid_only).unwrap();
    let err = resume(&dir2).unwrap_err();
    assert!(matches!(err, Error::Schema(_)), "{err}");
}

#[test]
fn fluid_only_decay_run_passes_all_monitors() {
    let tmp = tempfile::tempdir().unwrap();
    let config = RunConfig {
        schema_version: SCHEMA_VERSION,
        mode: Mode::LargeBox,
        grid: GridConfig { length: 40.0, n: 16, dealias: 2.0 / 3.0 },
        particles: None,
        fluid: FluidConfig::Solve {
            nonlinear: false,
            init: FluidInit::GaussianBump { amplitude: 0.05, width: 2.0, remove_mean: true },
        },
        time: TimeConfig { dt: 0.25, t_end: 2.5, sample_every: 2 },
        schedule: ScheduleConfig::default(),
        monitors: MonitorsConfig::default(),
        output: OutputConfig { dir: tmp.path().join("heat"), checkpoint_every: 0 },
    };
    let summary = run(&config).unwrap();
    assert!(summary.all_passed(), "{:#?}", summary.reports);
    // Kinetic columns are inapplicable and stay NaN all the way through.
    for r in &summary.records {
        assert!(r.d_kin.is_nan() && r.w1.is_nan() && r.brink_p3.is_nan());
        assert!(r.split_ratio <= 1.0 + 1e-9);
    }
    // No drag-identity probes without particles.
    assert!(summary.reports.iter().all(|r| !r.name.contains("drag-identity")));
}

#[test]
fn resting_fluid_run_reports_exact_drag_identities() {
    let tmp = tempfile::tempdir().unwrap();
    let config = RunConfig {
        schema_version: SCHEMA_VERSION,
        mode: Mode::Torus,
        grid: GridConfig { length: TAU, n: 16, dealias: 2.0 / 3.0 },
        particles: Some(ParticlesConfig {
            count: 256,
            sigma_v: 0.5,
            mean_velocity: [0.2, 0.0, 0.0],
            bump_center: [0.5 * TAU; 3],
            bump_radius: 1.5,
            seed: 17,
            center_velocities: false,
        }),
        fluid: FluidConfig::Off,
        time: TimeConfig { dt: 5e-5, t_end: 0.05, sample_every: 40 },
        schedule: ScheduleConfig::default(),
        monitors: MonitorsConfig::default(),
        output: OutputConfig { dir: tmp.path().join("drag"), checkpoint_every: 0 },
    };
    let summary = run(&config).unwrap();

    let identities: Vec<_> =
        summary.reports.iter().filter(|r| r.name.starts_with("drag-identity")).collect();
    // Orders {2, 3} each with the constant and one power weight.
    assert_eq!(identities.len(), 4);
    for r in &identities {
        assert!(r.pass, "{}", r.summary_line());
    }
    let balance = summary.reports.iter().find(|r| r.name == "energy-balance").unwrap();
    assert!(balance.pass, "{}", balance.summary_line());
    // The resting fluid contributes nothing: D equals the kinetic part.
    for r in &summary.records {
        assert_eq!(r.d.to_bits(), r.d_kin.to_bits());
        assert_eq!(r.d_fluid, 0.0);
    }
}

#[test]
fn prescribed_field_run_closes_the_identity_within_scheme_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = RunConfig {
        schema_version: SCHEMA_VERSION,
        mode: Mode::Torus,
        grid: GridConfig { length: TAU, n: 16, dealias: 2.0 / 3.0 },
        particles: Some(ParticlesConfig {
            count: 500,
            sigma_v: 0.3,
            mean_velocity: [0.1, 0.0, 0.0],
            bump_center: [0.5 * TAU; 3],
            bump_radius: 1.5,
            seed: 31,
            center_velocities: false,
        }),
        fluid: FluidConfig::Manufactured { amp_primary: 0.2, amp_secondary: 0.1 },
        time: TimeConfig { dt: 0.01, t_end: 0.5, sample_every: 5 },
        schedule: ScheduleConfig::default(),
        monitors: MonitorsConfig::default(),
        output: OutputConfig { dir: tmp.path().join("mms"), checkpoint_every: 0 },
    };
    let summary = run(&config).unwrap();
    let identities: Vec<_> =
        summary.reports.iter().filter(|r| r.name.starts_with("drag-identity")).collect();
    assert_eq!(identities.len(), 4);
    for r in &identities {
        assert!(r.pass, "{}", r.summary_line());
    }
    // Prescribed fields do not conserve energy, so no balance probe.
    assert!(summary.reports.iter().all(|r| r.name != "energy-balance"));
}

#[test]
fn unstable_step_aborts_but_keeps_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("abort");
    let mut config = torus_coupled(dir.clone());
    // A uniform carrier this fast moves particles more than half a cell per
    // step, which the push rejects.
    config.fluid = FluidConfig::Solve {
        nonlinear: true,
        init: FluidInit::Uniform { velocity: [5.0, 0.0, 0.0] },
    };
    config.time = TimeConfig { dt: 0.05, t_end: 1.0, sample_every: 1 };
    let err = run(&config).unwrap_err();
    assert!(matches!(err, Error::Cfl(_)), "{err}");

    // The initial sample and the abort note survive.
    let rows = parse_csv(&fs::read_to_string(dir.join(CSV_FILE)).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    let note = fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap();
    assert!(note.contains("aborted"), "{note}");
}
