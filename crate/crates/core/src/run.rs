//! Run orchestration: initial data, the step loop, artifacts, resume.
//!
//! [`run`] takes a validated [`RunConfig`] and drives one simulation to its
//! horizon, streaming diagnostics rows into `diag.csv` and finishing with
//! `probes.txt` (one pass/fail line per monitor) and `summary.txt`.  Coupled
//! runs can checkpoint (`checkpoint.bin` plus the sampler sidecar
//! `sampler.bin`); [`resume`] continues such a run bitwise identically to an
//! uninterrupted one, which is what makes restart a safe operation rather
//! than a fresh experiment.  A non-finite value or a stability rejection
//! aborts the run with an error while keeping every artifact written so far.

use crate::config::{FluidConfig, FluidInit, Mode, RunConfig};
use crate::coupling::{read_checkpoint, step_system, write_checkpoint, SystemState};
use crate::diagnostics::{
    bootstrap_monitor, csv_header, decay_fit, dp_mixed_term, energy_balance_residual,
    higher_dissipation, strong_existence_monitor, DecayFit, DiagnosticsRecord,
    DpIdentityAccumulator, FitKind, PhiSpec, ProbeReport, SampleInput, Sampler, SamplerState,
    SplittingSchedule, CSV_PREAMBLE,
};
use crate::fluid::{ns_step, FluidState};
use crate::kinetic::{push_particles, InitialDensity, ParticleEnsemble};
use crate::spectral::{FourierField, Grid3, RealField};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// Relative tolerance on the cumulative energy balance `E(t) + int D = E(0)`.
pub const ENERGY_BALANCE_TOL: f64 = 0.05;
/// Multiplicative slack allowed on the drag-force bound per sample.
pub const BRINKMAN_SLACK: f64 = 1.05;
/// Samples with `D_p` at or below this are skipped by the drag-force probe:
/// the bound is vacuously true there and the ratio is pure roundoff.
pub const BRINKMAN_DISSIPATION_FLOOR: f64 = 1e-24;
/// Residual tolerance for the drag-dissipation identity when the particle
/// push is exact (resting fluid): quadrature error only.
pub const DRAG_IDENTITY_TOL_EXACT: f64 = 1e-8;
/// Same, for the time-weighted variants of the exact case.
pub const DRAG_IDENTITY_TOL_WEIGHTED: f64 = 1e-6;
/// Residual tolerance against a prescribed field, where the particle
/// trajectories themselves carry `O(dt^2)` error.
pub const DRAG_IDENTITY_TOL_MANUFACTURED: f64 = 0.05;

pub const CONFIG_FILE: &str = "config.toml";
pub const CSV_FILE: &str = "diag.csv";
pub const PROBES_FILE: &str = "probes.txt";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SAMPLER_FILE: &str = "sampler.bin";

const SAMPLER_MAGIC: &[u8; 8] = b"VNSSAMP1";
const SAMPLER_VERSION: u32 = 1;

/// What a finished (or resumed-and-finished) run hands back.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub steps: u64,
    pub final_time: f64,
    pub records: Vec<DiagnosticsRecord>,
    pub reports: Vec<ProbeReport>,
    /// Mass and momentum bookkeeping; present for coupled runs only.
    pub conservation: Option<ConservationReport>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

/// Mass and momentum ledger for a coupled run, observed at every sample.
///
/// `max_drift_rate` is the worst over samples of
/// `max_c |P_c(t) - P_c(t0)| / (scale * (t - t0))` where the scale is the
/// larger of the initial momentum magnitude and the particle mass (the
/// momentum of the ensemble moving at unit speed), so zero-momentum data
/// still gets a meaningful denominator.
#[derive(Debug, Clone, Copy)]
pub struct ConservationReport {
    pub mass_initial: f64,
    pub mass_final: f64,
    /// True when every sampled total weight reproduced the initial bits.
    pub mass_exact: bool,
    pub momentum_initial: [f64; 3],
    pub momentum_final: [f64; 3],
    pub max_drift_rate: f64,
}

/// Streaming accumulator behind [`ConservationReport`].
#[derive(Debug, Clone, Copy)]
struct ConservationTracker {
    t0: f64,
    mass0: f64,
    p0: [f64; 3],
    mass_exact: bool,
    mass_last: f64,
    p_last: [f64; 3],
    max_drift_rate: f64,
}

impl ConservationTracker {
    fn new(time: f64, state: &SystemState) -> Self {
        let mass = state.particles().total_weight();
        let p = state.total_momentum();
        Self {
            t0: time,
            mass0: mass,
            p0: p,
            mass_exact: true,
            mass_last: mass,
            p_last: p,
            max_drift_rate: 0.0,
        }
    }

    fn observe(&mut self, time: f64, state: &SystemState) {
        let mass = state.particles().total_weight();
        let p = state.total_momentum();
        self.mass_exact &= mass.to_bits() == self.mass0.to_bits();
        self.mass_last = mass;
        self.p_last = p;
        let span = time - self.t0;
        if span > 0.0 {
            let drift =
                (0..3).map(|c| (p[c] - self.p0[c]).abs()).fold(0.0f64, f64::max);
            let scale = self.p0.iter().fold(self.mass0.abs(), |m, c| m.max(c.abs()));
            self.max_drift_rate =
                self.max_drift_rate.max(drift / scale.max(1e-300) / span);
        }
    }

    fn report(&self) -> ConservationReport {
        ConservationReport {
            mass_initial: self.mass0,
            mass_final: self.mass_last,
            mass_exact: self.mass_exact,
            momentum_initial: self.p0,
            momentum_final: self.p_last,
            max_drift_rate: self.max_drift_rate,
        }
    }
}

/// The prescribed analytic velocity used by `fluid.kind = "manufactured"`:
/// a planar cellular vortex plus a transverse shear wave, both on the
/// fundamental wavenumber, with bounded non-monotone amplitudes
///
/// ```text
/// u(t,x) = a(t) (sin kx cos ky, -cos kx sin ky, 0) + b(t) (0, 0, sin kx)
/// a(t) = amp_primary (0.8 + 0.2 cos t),  b(t) = amp_secondary (0.9 + 0.1 sin 2t)
/// ```
///
/// The field is divergence-free and mean-free for every `t`, and exactly
/// representable on any grid, so interpolation and spectral derivatives of
/// it carry no truncation error.
pub fn manufactured_velocity(
    grid: Grid3,
    amp_primary: f64,
    amp_secondary: f64,
    t: f64,
) -> Result<RealField> {
    let k = 2.0 * std::f64::consts::PI / grid.length();
    let a = amp_primary * (0.8 + 0.2 * t.cos());
    let b = amp_secondary * (0.9 + 0.1 * (2.0 * t).sin());
    RealField::from_fn(grid, 3, |x, y, _| {
        vec![
            a * (k * x).sin() * (k * y).cos(),
            -a * (k * x).cos() * (k * y).sin(),
            b * (k * x).sin(),
        ]
    })
}

/// Builds the initial fluid state for a solved run.
fn build_initial_fluid(grid: Grid3, init: &FluidInit) -> Result<FluidState> {
    match init {
        FluidInit::Zero => FluidState::from_velocity(FourierField::zeros(grid, 3)?),
        FluidInit::Uniform { velocity } => {
            let mut hat = FourierField::zeros(grid, 3)?;
            // A constant is exactly the zero mode; writing it directly keeps
            // the other modes at exact zero (a transform would scatter
            // roundoff into them).
            let boost = grid.volume().sqrt();
            for c in 0..3 {
                hat.slab_mut(c)[0] = Complex64::new(velocity[c] * boost, 0.0);
            }
            FluidState::from_velocity(hat)
        }
        FluidInit::GaussianBump { amplitude, width, remove_mean } => {
            let length = grid.length();
            let center = 0.5 * length;
            let inv = 1.0 / (2.0 * width * width);
            let nodal = RealField::from_fn(grid, 3, |x, y, z| {
                let mut r2 = 0.0;
                for d in [x - center, y - center, z - center] {
                    let d = d - length * (d / length).round();
                    r2 += d * d;
                }
                let v = amplitude * (-r2 * inv).exp();
                vec![v, v, v]
            })?;
            let mut hat = FourierField::from_real(&nodal);
            if *remove_mean {
                for c in 0..3 {
                    hat.slab_mut(c)[0] = Complex64::new(0.0, 0.0);
                }
            }
            FluidState::project(hat)
        }
        FluidInit::Random { amplitude, seed } => {
            let mut nodal = RealField::zeros(grid, 3)?;
            if *amplitude > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                for v in nodal.data_mut() {
                    *v = rng.gen_range(-amplitude..*amplitude);
                }
            }
            let mut hat = FourierField::from_real(&nodal);
            // Zero net momentum: noise should decay, not drift.
            for c in 0..3 {
                hat.slab_mut(c)[0] = Complex64::new(0.0, 0.0);
            }
            FluidState::project(hat)
        }
    }
}

/// The advancing state of a run, by fluid kind.
enum Engine {
    /// Two-way coupled system (Strang split step).
    Coupled { state: SystemState, nonlinear: bool },
    /// Fluid alone.
    FluidOnly { fluid: FluidState, time: f64, nonlinear: bool },
    /// Particles in a resting fluid (`u = 0`): pure exponential drag.
    Resting {
        particles: ParticleEnsemble,
        time: f64,
        zero_nodal: RealField,
        zero_hat: FourierField,
    },
    /// Particles in the prescribed analytic field (no back-reaction).
    Prescribed {
        particles: ParticleEnsemble,
        time: f64,
        amp_primary: f64,
        amp_secondary: f64,
        grid: Grid3,
    },
}

impl Engine {
    fn time(&self) -> f64 {
        match self {
            Engine::Coupled { state, .. } => state.time(),
            Engine::FluidOnly { time, .. }
            | Engine::Resting { time, .. }
            | Engine::Prescribed { time, .. } => *time,
        }
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        match self {
            Engine::Coupled { state, nonlinear } => {
                *state = step_system(state, dt, *nonlinear)?;
            }
            Engine::FluidOnly { fluid, time, nonlinear } => {
                *fluid = ns_step(fluid, None, dt, *nonlinear)?;
                *time += dt;
            }
            Engine::Resting { particles, time, zero_nodal, .. } => {
                *particles = push_particles(particles, zero_nodal, dt)?;
                *time += dt;
            }
            Engine::Prescribed { particles, time, amp_primary, amp_secondary, grid } => {
                // Freezing the field at the midpoint time keeps the push
                // second order in the prescribed flow.
                let mid = manufactured_velocity(*grid, *amp_primary, *amp_secondary, *time + 0.5 * dt)?;
                *particles = push_particles(particles, &mid, dt)?;
                *time += dt;
            }
        }
        Ok(())
    }
}

/// One drag-identity accumulator with its label and pinned tolerance.
struct IdentityProbe {
    label: String,
    p: f64,
    tol: f64,
    acc: DpIdentityAccumulator,
}

fn sample_engine(engine: &Engine, sampler: &mut Sampler) -> Result<DiagnosticsRecord> {
    let record = match engine {
        Engine::Coupled { state, .. } => sampler.sample(SampleInput {
            time: state.time(),
            fluid_hat: state.fluid().velocity(),
            particles: Some(state.particles()),
        })?,
        Engine::FluidOnly { fluid, time, .. } => sampler.sample(SampleInput {
            time: *time,
            fluid_hat: fluid.velocity(),
            particles: None,
        })?,
        Engine::Resting { particles, time, zero_hat, .. } => sampler.sample(SampleInput {
            time: *time,
            fluid_hat: zero_hat,
            particles: Some(particles),
        })?,
        Engine::Prescribed { particles, time, amp_primary, amp_secondary, grid } => {
            let nodal = manufactured_velocity(*grid, *amp_primary, *amp_secondary, *time)?;
            let hat = FourierField::from_real(&nodal);
            sampler.sample(SampleInput {
                time: *time,
                fluid_hat: &hat,
                particles: Some(particles),
            })?
        }
    };
    if !record.e.is_finite() {
        return Err(Error::NonFinite(format!("total energy at t = {}", record.t)));
    }
    Ok(*record)
}

/// Feeds the drag-identity accumulators at step `k` of `n_steps`.
///
/// Resting runs push every step (the dissipation is a plain particle sum);
/// prescribed runs push interior steps only, because the mixed term needs a
/// centered difference in time.
fn accumulate_identity(
    engine: &Engine,
    probes: &mut [IdentityProbe],
    dt: f64,
    k: u64,
    n_steps: u64,
) -> Result<()> {
    if probes.is_empty() {
        return Ok(());
    }
    match engine {
        Engine::Resting { particles, time, .. } => {
            let mut cache: Vec<(f64, f64)> = Vec::new();
            for probe in probes.iter_mut() {
                let dp = match cache.iter().find(|(p, _)| *p == probe.p) {
                    Some((_, dp)) => *dp,
                    None => {
                        let dp = resting_dissipation(particles, probe.p);
                        cache.push((probe.p, dp));
                        dp
                    }
                };
                probe.acc.push(*time, dp, 0.0)?;
            }
        }
        Engine::Prescribed { particles, time, amp_primary, amp_secondary, grid } => {
            if k == 0 || k >= n_steps {
                return Ok(());
            }
            let u_prev = manufactured_velocity(*grid, *amp_primary, *amp_secondary, *time - dt)?;
            let u_now = manufactured_velocity(*grid, *amp_primary, *amp_secondary, *time)?;
            let u_next = manufactured_velocity(*grid, *amp_primary, *amp_secondary, *time + dt)?;
            let mut cache: Vec<(f64, f64, f64)> = Vec::new();
            for probe in probes.iter_mut() {
                let (dp, mixed) = match cache.iter().find(|(p, ..)| *p == probe.p) {
                    Some((_, dp, mixed)) => (*dp, *mixed),
                    None => {
                        let dp = higher_dissipation(particles, &u_now, probe.p)?;
                        let mixed =
                            dp_mixed_term(particles, &u_prev, &u_now, &u_next, 2.0 * dt, probe.p)?;
                        cache.push((probe.p, dp, mixed));
                        (dp, mixed)
                    }
                };
                probe.acc.push(*time, dp, mixed)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// `sum_i w_i |v_i|^p` (the drag dissipation against a resting fluid).
fn resting_dissipation(particles: &ParticleEnsemble, p: f64) -> f64 {
    particles
        .velocities()
        .iter()
        .zip(particles.weights())
        .map(|(v, w)| {
            let d2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            w * d2.powf(0.5 * p)
        })
        .sum()
}

struct Driver {
    config: RunConfig,
    out_dir: PathBuf,
    engine: Engine,
    sampler: Sampler,
    probes: Vec<IdentityProbe>,
    csv: BufWriter<File>,
    records: Vec<DiagnosticsRecord>,
    n_steps: u64,
    conservation: Option<ConservationTracker>,
}

impl Driver {
    fn step_loop(&mut self, start_step: u64, skip_first_sample: bool) -> Result<u64> {
        let dt = self.config.time.dt;
        let every = self.config.time.sample_every as u64;
        let ckpt_every = self.config.output.checkpoint_every as u64;
        if let Engine::Coupled { state, .. } = &self.engine {
            self.conservation = Some(ConservationTracker::new(state.time(), state));
        }
        for k in start_step..=self.n_steps {
            let due = k % every == 0 || k == self.n_steps;
            if due && !(skip_first_sample && k == start_step) {
                let record = sample_engine(&self.engine, &mut self.sampler)?;
                writeln!(self.csv, "{}", record.csv_line())?;
                self.csv.flush()?;
                self.records.push(record);
                if let (Some(tracker), Engine::Coupled { state, .. }) =
                    (self.conservation.as_mut(), &self.engine)
                {
                    tracker.observe(state.time(), state);
                }
            }
            if ckpt_every > 0 && k > start_step && k % ckpt_every == 0 {
                self.write_checkpoint_pair(k)?;
            }
            accumulate_identity(&self.engine, &mut self.probes, dt, k, self.n_steps)?;
            if k < self.n_steps {
                self.engine.advance(dt)?;
            }
        }
        Ok(self.n_steps)
    }

    fn write_checkpoint_pair(&self, step: u64) -> Result<()> {
        let state = match &self.engine {
            Engine::Coupled { state, .. } => state,
            _ => return Ok(()), // validation rules this out; belt and braces
        };
        let ckpt = self.out_dir.join(CHECKPOINT_FILE);
        let tmp = ckpt.with_extension("tmp");
        write_checkpoint(&tmp, state)?;
        fs::rename(&tmp, &ckpt)?;

        let sidecar = self.out_dir.join(SAMPLER_FILE);
        let tmp = sidecar.with_extension("tmp");
        write_sampler_state(&tmp, step, &self.sampler.save_state())?;
        fs::rename(&tmp, &sidecar)?;
        Ok(())
    }

    fn finish(mut self) -> Result<RunSummary> {
        let mut reports = Vec::new();
        let balance_applies =
            matches!(self.config.fluid, FluidConfig::Solve { .. } | FluidConfig::Off);
        if balance_applies && self.records.len() >= 2 {
            reports.push(energy_balance_residual(&self.records, ENERGY_BALANCE_TOL)?);
        }
        reports.push(strong_existence_monitor(&self.records, self.config.monitors.c_star)?);
        reports.push(bootstrap_monitor(&self.records, self.config.monitors.delta0)?);
        if self.config.particles.is_some() {
            reports.extend(brinkman_reports(&self.records));
        }
        for probe in &self.probes {
            let mut report = probe.acc.report(probe.tol)?;
            report.name = format!("{}-{}", report.name, probe.label);
            reports.push(report);
        }

        let mut probe_text = String::new();
        for r in &reports {
            probe_text.push_str(&r.summary_line());
            probe_text.push('\n');
        }
        fs::write(self.out_dir.join(PROBES_FILE), probe_text)?;

        let conservation = self.conservation.map(|t| t.report());
        let passed = reports.iter().filter(|r| r.pass).count();
        let first = self.records.first();
        let last = self.records.last();
        let mut summary_text = format!(
            "mode: {}\nsteps: {} (dt = {}, horizon t = {})\nsamples: {}\n\
             energy: {} -> {}\nprobes passed: {}/{}\n",
            match self.config.mode {
                Mode::Torus => "torus",
                Mode::LargeBox => "large-box",
            },
            self.n_steps,
            self.config.time.dt,
            self.engine.time(),
            self.records.len(),
            first.map_or(f64::NAN, |r| r.e),
            last.map_or(f64::NAN, |r| r.e),
            passed,
            reports.len(),
        );
        if let Some(c) = &conservation {
            summary_text.push_str(&format!(
                "particle mass: {} -> {} ({})\nmomentum drift rate: {:.3e}\n",
                c.mass_initial,
                c.mass_final,
                if c.mass_exact { "bit-exact" } else { "CHANGED" },
                c.max_drift_rate,
            ));
        }
        fs::write(self.out_dir.join(SUMMARY_FILE), summary_text)?;
        self.csv.flush()?;

        Ok(RunSummary {
            out_dir: self.out_dir,
            steps: self.n_steps,
            final_time: self.engine.time(),
            records: self.records,
            reports,
            conservation,
        })
    }
}

/// Worst-case drag-force bound ratios over the run, one report per order.
fn brinkman_reports(records: &[DiagnosticsRecord]) -> Vec<ProbeReport> {
    let mut out = Vec::new();
    for (name, ratio_of, dissipation_of) in [
        (
            "drag-force-bound-p2",
            (|r: &DiagnosticsRecord| r.brink_p2) as fn(&DiagnosticsRecord) -> f64,
            (|r: &DiagnosticsRecord| r.d_kin) as fn(&DiagnosticsRecord) -> f64,
        ),
        ("drag-force-bound-p3", |r| r.brink_p3, |r| r.d3),
        ("drag-force-bound-p4", |r| r.brink_p4, |r| r.d4),
    ] {
        let mut worst = f64::NEG_INFINITY;
        let mut used = 0usize;
        for r in records {
            let ratio = ratio_of(r);
            if dissipation_of(r) <= BRINKMAN_DISSIPATION_FLOOR || !ratio.is_finite() {
                continue;
            }
            used += 1;
            worst = worst.max(ratio);
        }
        let (lhs, pass, note) = if used == 0 {
            (f64::NAN, true, "no samples above the dissipation floor".to_string())
        } else {
            (worst, worst <= BRINKMAN_SLACK, format!("worst of {used} samples"))
        };
        out.push(ProbeReport {
            name: name.to_string(),
            lhs,
            rhs: BRINKMAN_SLACK,
            ratio: lhs / BRINKMAN_SLACK,
            pass,
            note,
        });
    }
    out
}

fn build_engine(config: &RunConfig, grid: Grid3) -> Result<Engine> {
    let particles = match &config.particles {
        Some(p) => {
            let density =
                InitialDensity::new(p.bump_center, p.bump_radius, p.sigma_v, p.mean_velocity)?;
            Some(density.sample(p.count, config.grid.length, p.seed, p.center_velocities)?)
        }
        None => None,
    };
    match (&config.fluid, particles) {
        (FluidConfig::Solve { nonlinear, init }, Some(particles)) => {
            let fluid = build_initial_fluid(grid, init)?;
            Ok(Engine::Coupled {
                state: SystemState::new(0.0, fluid, particles)?,
                nonlinear: *nonlinear,
            })
        }
        (FluidConfig::Solve { nonlinear, init }, None) => Ok(Engine::FluidOnly {
            fluid: build_initial_fluid(grid, init)?,
            time: 0.0,
            nonlinear: *nonlinear,
        }),
        (FluidConfig::Off, Some(particles)) => Ok(Engine::Resting {
            particles,
            time: 0.0,
            zero_nodal: RealField::zeros(grid, 3)?,
            zero_hat: FourierField::zeros(grid, 3)?,
        }),
        (FluidConfig::Manufactured { amp_primary, amp_secondary }, Some(particles)) => {
            Ok(Engine::Prescribed {
                particles,
                time: 0.0,
                amp_primary: *amp_primary,
                amp_secondary: *amp_secondary,
                grid,
            })
        }
        _ => Err(Error::Config("particles: nothing to evolve".into())),
    }
}

fn build_identity_probes(config: &RunConfig) -> Result<Vec<IdentityProbe>> {
    if !matches!(config.fluid, FluidConfig::Off | FluidConfig::Manufactured { .. }) {
        return Ok(Vec::new());
    }
    let manufactured = matches!(config.fluid, FluidConfig::Manufactured { .. });
    let mut probes = Vec::new();
    let mut seen = Vec::new();
    for &p in &config.monitors.ps {
        if seen.contains(&p) {
            continue;
        }
        seen.push(p);
        let mut variants = vec![("phi-const".to_string(), PhiSpec::One, false)];
        for &gamma in &config.monitors.gammas {
            variants.push((format!("phi-power-{gamma}"), PhiSpec::Power { gamma }, true));
        }
        for (label, phi, weighted) in variants {
            let tol = if manufactured {
                DRAG_IDENTITY_TOL_MANUFACTURED
            } else if weighted {
                DRAG_IDENTITY_TOL_WEIGHTED
            } else {
                DRAG_IDENTITY_TOL_EXACT
            };
            probes.push(IdentityProbe {
                label,
                p,
                tol,
                acc: DpIdentityAccumulator::new(p, phi)?,
            });
        }
    }
    Ok(probes)
}

fn step_count(dt: f64, t_end: f64) -> u64 {
    // The horizon rounds to the nearest whole step.
    ((t_end / dt).round() as u64).max(1)
}

/// Executes one run from scratch.  Artifacts land in `config.output.dir`;
/// an existing directory is reused and its artifacts overwritten.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let grid = Grid3::new(config.grid.n, config.grid.length, config.grid.dealias)?;
    let out_dir = config.output.dir.clone();
    fs::create_dir_all(&out_dir)?;
    // Stale checkpoints from an earlier run in the same directory must not
    // survive: resuming over them would splice two different experiments.
    let _ = fs::remove_file(out_dir.join(CHECKPOINT_FILE));
    let _ = fs::remove_file(out_dir.join(SAMPLER_FILE));
    fs::write(out_dir.join(CONFIG_FILE), config.to_toml()?)?;

    let engine = build_engine(config, grid)?;
    let schedule = SplittingSchedule::new(config.schedule.alpha, config.schedule.c0)?;
    let sampler =
        Sampler::new(schedule, config.monitors.c_star, config.mode == Mode::Torus)?;
    let probes = build_identity_probes(config)?;

    let mut csv = BufWriter::new(File::create(out_dir.join(CSV_FILE))?);
    writeln!(csv, "{CSV_PREAMBLE}")?;
    writeln!(csv, "{}", csv_header())?;

    let mut driver = Driver {
        config: config.clone(),
        out_dir,
        engine,
        sampler,
        probes,
        csv,
        records: Vec::new(),
        n_steps: step_count(config.time.dt, config.time.t_end),
        conservation: None,
    };
    match driver.step_loop(0, false) {
        Ok(_) => driver.finish(),
        Err(e) => {
            let _ = fs::write(
                driver.out_dir.join(SUMMARY_FILE),
                format!("aborted at t = {}: {e}\n", driver.engine.time()),
            );
            Err(e)
        }
    }
}

/// Continues a checkpointed coupled run found in `run_dir`.
///
/// The directory's `config.toml` is re-read, so editing its `time.t_end`
/// before resuming extends the horizon.  Diagnostics rows past the
/// checkpoint (written by an aborted attempt) are dropped; everything the
/// resumed run appends is bitwise identical to an uninterrupted run.
pub fn resume(run_dir: &Path) -> Result<RunSummary> {
    let config_text = fs::read_to_string(run_dir.join(CONFIG_FILE))?;
    let config = RunConfig::from_toml(&config_text)?;
    let nonlinear = match config.fluid {
        FluidConfig::Solve { nonlinear, .. } => nonlinear,
        _ => {
            return Err(Error::Schema(
                "resume needs a coupled run (fluid.kind = solve with particles)".into(),
            ))
        }
    };
    if config.particles.is_none() {
        return Err(Error::Schema("resume needs a coupled run with particles".into()));
    }

    let state = read_checkpoint(&run_dir.join(CHECKPOINT_FILE))?;
    let grid = Grid3::new(config.grid.n, config.grid.length, config.grid.dealias)?;
    if state.grid() != grid {
        return Err(Error::Schema("checkpoint grid differs from config.toml grid".into()));
    }
    let (step0, sampler_state) = read_sampler_state(&run_dir.join(SAMPLER_FILE))?;
    let dt = config.time.dt;
    let expect = step0 as f64 * dt;
    if (state.time() - expect).abs() > 1e-9 * expect.abs().max(1.0) {
        return Err(Error::Schema(format!(
            "checkpoint at t = {} does not sit on step {} of dt = {dt}",
            state.time(),
            step0
        )));
    }
    let n_steps = step_count(dt, config.time.t_end);
    if step0 > n_steps {
        return Err(Error::Schema(format!(
            "checkpoint step {step0} lies beyond the configured horizon ({n_steps} steps)"
        )));
    }

    let records = truncate_csv(&run_dir.join(CSV_FILE), state.time(), dt)?;
    let schedule = SplittingSchedule::new(config.schedule.alpha, config.schedule.c0)?;
    let sampler = Sampler::restore(
        schedule,
        config.monitors.c_star,
        config.mode == Mode::Torus,
        sampler_state,
    )?;
    let csv = BufWriter::new(OpenOptions::new().append(true).open(run_dir.join(CSV_FILE))?);

    let mut driver = Driver {
        config: config.clone(),
        out_dir: run_dir.to_path_buf(),
        engine: Engine::Coupled { state, nonlinear },
        sampler,
        probes: Vec::new(),
        csv,
        records,
        n_steps,
        conservation: None,
    };
    match driver.step_loop(step0, true) {
        Ok(_) => driver.finish(),
        Err(e) => {
            let _ = fs::write(
                driver.out_dir.join(SUMMARY_FILE),
                format!("aborted at t = {}: {e}\n", driver.engine.time()),
            );
            Err(e)
        }
    }
}

/// Drops CSV rows past the checkpoint time, keeping surviving rows byte
/// identical, and returns the parsed survivors.
fn truncate_csv(path: &Path, t_ckpt: f64, dt: f64) -> Result<Vec<DiagnosticsRecord>> {
    let text = fs::read_to_string(path)?;
    let cutoff = t_ckpt + 0.25 * dt;
    let mut kept = String::new();
    let mut body = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i < 2 || line.is_empty() {
            kept.push_str(line);
            kept.push('\n');
            continue;
        }
        let t: f64 = line
            .split(',')
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Schema(format!("unparseable time on line {}", i + 1)))?;
        if t <= cutoff {
            kept.push_str(line);
            kept.push('\n');
            body.push(line.to_string());
        }
    }
    let records = parse_csv(&kept)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, kept)?;
    fs::rename(&tmp, path)?;
    Ok(records)
}

/// Parses a diagnostics CSV, verifying the preamble, the exact header, the
/// column count of every row, and monotone sample times.  Errors name the
/// offending row and column.
pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l == CSV_PREAMBLE => {}
        Some(l) => {
            return Err(Error::Schema(format!(
                "preamble is '{l}', expected '{CSV_PREAMBLE}'"
            )))
        }
        None => return Err(Error::Schema("empty file".into())),
    }
    let header = lines.next().ok_or_else(|| Error::Schema("missing header row".into()))?;
    let names: Vec<&str> = csv_header().split(',').collect();
    if header != csv_header() {
        let got: Vec<&str> = header.split(',').collect();
        if got.len() != names.len() {
            return Err(Error::Schema(format!(
                "header has {} columns, expected {}",
                got.len(),
                names.len()
            )));
        }
        for (i, (g, w)) in got.iter().zip(&names).enumerate() {
            if g != w {
                return Err(Error::Schema(format!(
                    "header column {} is '{g}', expected '{w}'",
                    i + 1
                )));
            }
        }
        return Err(Error::Schema("header differs from the current schema".into()));
    }

    let mut records: Vec<DiagnosticsRecord> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 3;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::Schema(format!(
                "row at line {line_no} has {} columns, expected {}",
                fields.len(),
                names.len()
            )));
        }
        let mut v = [0.0f64; 20];
        for (j, field) in fields.iter().enumerate() {
            v[j] = field.trim().parse().map_err(|_| {
                Error::Schema(format!(
                    "line {line_no}, column {} ({}): unparseable value '{field}'",
                    j + 1,
                    names[j]
                ))
            })?;
        }
        if let Some(prev) = records.last() {
            // Negated on purpose: a NaN time must also fail this gate.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(v[0] > prev.t) {
                return Err(Error::Schema(format!(
                    "time does not increase at line {line_no}: {} after {}",
                    v[0], prev.t
                )));
            }
        }
        records.push(DiagnosticsRecord {
            t: v[0],
            e: v[1],
            d: v[2],
            d_fluid: v[3],
            d_kin: v[4],
            d3: v[5],
            d4: v[6],
            w1: v[7],
            mod_e: v[8],
            low_mode: v[9],
            grad_inf: v[10],
            grad_inf_int: v[11],
            f_h12_int: v[12],
            mp3_sup: v[13],
            split_ratio: v[14],
            brink_p2: v[15],
            brink_p3: v[16],
            brink_p4: v[17],
            gn_u_inf: v[18],
            strong_stat: v[19],
        });
    }
    Ok(records)
}

/// Quick statistics extracted by [`analyze`].
#[derive(Debug, Clone)]
pub struct CsvSummary {
    pub rows: usize,
    pub t_first: f64,
    pub t_last: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Power-law fit of the energy over the second half of the run, when
    /// enough positive samples exist.
    pub energy_fit: Option<DecayFit>,
}

/// Reads and validates a diagnostics CSV, returning its rows and summary
/// statistics.
pub fn analyze(path: &Path) -> Result<(Vec<DiagnosticsRecord>, CsvSummary)> {
    let text = fs::read_to_string(path)?;
    let records = parse_csv(&text)?;
    if records.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    let t_first = records[0].t;
    let t_last = records[records.len() - 1].t;
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let energies: Vec<f64> = records.iter().map(|r| r.e).collect();
    let t_min = t_first + 0.5 * (t_last - t_first);
    let energy_fit = decay_fit(&times, &energies, t_min, FitKind::PowerLaw).ok();
    let summary = CsvSummary {
        rows: records.len(),
        t_first,
        t_last,
        initial_energy: records[0].e,
        final_energy: records[records.len() - 1].e,
        energy_fit,
    };
    Ok((records, summary))
}

// ---------------------------------------------------------------------------
// Sampler sidecar serialization (little-endian, raw IEEE bits).

fn write_sampler_state(path: &Path, step: u64, state: &SamplerState) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(SAMPLER_MAGIC)?;
    w.write_all(&SAMPLER_VERSION.to_le_bytes())?;
    w.write_all(&step.to_le_bytes())?;
    for v in [
        state.h12_initial,
        state.grad_inf_int,
        state.f_h12_int,
        state.u_l2_int,
        state.f_l1_int,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    match &state.prev {
        Some(prev) => {
            w.write_all(&[1u8])?;
            for v in prev {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        None => w.write_all(&[0u8])?,
    }
    match &state.initial_hat {
        Some(hat) => {
            w.write_all(&[1u8])?;
            let grid = hat.grid();
            w.write_all(&(grid.n() as u64).to_le_bytes())?;
            w.write_all(&grid.length().to_le_bytes())?;
            w.write_all(&grid.dealias_fraction().to_le_bytes())?;
            for v in hat.data() {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
        None => w.write_all(&[0u8])?,
    }
    w.flush()?;
    Ok(())
}

fn read_sampler_state(path: &Path) -> Result<(u64, SamplerState)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Schema("sampler sidecar truncated".into()))?;
    if &magic != SAMPLER_MAGIC {
        return Err(Error::Schema("sampler sidecar magic mismatch".into()));
    }
    let version = read_u32(&mut r)?;
    if version != SAMPLER_VERSION {
        return Err(Error::Schema(format!("unsupported sampler sidecar version {version}")));
    }
    let step = read_u64(&mut r)?;
    let h12_initial = read_f64(&mut r)?;
    let grad_inf_int = read_f64(&mut r)?;
    let f_h12_int = read_f64(&mut r)?;
    let u_l2_int = read_f64(&mut r)?;
    let f_l1_int = read_f64(&mut r)?;
    let prev = match read_u8(&mut r)? {
        0 => None,
        1 => {
            let mut p = [0.0f64; 5];
            for v in p.iter_mut() {
                *v = read_f64(&mut r)?;
            }
            Some(p)
        }
        other => return Err(Error::Schema(format!("bad prev flag {other}"))),
    };
    let initial_hat = match read_u8(&mut r)? {
        0 => None,
        1 => {
            let n = read_u64(&mut r)? as usize;
            let length = read_f64(&mut r)?;
            let dealias = read_f64(&mut r)?;
            let grid = Grid3::new(n, length, dealias)?;
            let mut hat = FourierField::zeros(grid, 3)?;
            for v in hat.data_mut() {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                *v = Complex64::new(re, im);
            }
            Some(hat)
        }
        other => return Err(Error::Schema(format!("bad field flag {other}"))),
    };
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Schema("trailing bytes after sampler sidecar".into()));
    }
    Ok((
        step,
        SamplerState {
            initial_hat,
            h12_initial,
            grad_inf_int,
            f_h12_int,
            u_l2_int,
            f_l1_int,
            prev,
        },
    ))
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf).map_err(|_| Error::Schema("sampler sidecar truncated".into()))?;
    Ok(buf[0])
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::Schema("sampler sidecar truncated".into()))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| Error::Schema("sampler sidecar truncated".into()))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| Error::Schema("sampler sidecar truncated".into()))?;
    Ok(f64::from_le_bytes(buf))
}
