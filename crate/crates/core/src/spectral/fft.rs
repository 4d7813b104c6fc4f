//! Three-dimensional complex FFT built from cached 1D rustfft plans.
//!
//! A slab of `n^3` coefficients is transformed in place by sweeping the three
//! axes.  The z axis is contiguous and processed as one batched call; the y
//! and x axes gather each strided line into a scratch buffer, transform it,
//! and scatter it back.  Transforms are unnormalized here; callers apply the
//! Plancherel scaling.

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Inverse,
}

type PlanCache = HashMap<(usize, Direction), Arc<dyn Fft<f64>>>;

static PLANS: Lazy<Mutex<PlanCache>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    let mut cache = PLANS.lock().expect("fft plan cache poisoned");
    cache
        .entry((n, dir))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            match dir {
                Direction::Forward => planner.plan_fft(n, FftDirection::Forward),
                Direction::Inverse => planner.plan_fft(n, FftDirection::Inverse),
            }
        })
        .clone()
}

/// In-place 3D transform of one `n^3` slab laid out as `[ix][iy][iz]`.
pub fn transform_slab(data: &mut [Complex64], n: usize, dir: Direction) {
    assert_eq!(data.len(), n * n * n, "slab length must be n^3");
    let fft = plan(n, dir);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    // z axis: n^2 contiguous lines, batched in one call.
    fft.process_with_scratch(data, &mut scratch);

    // y axis: stride n within each (ix, iz) pair.
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for ix in 0..n {
        let plane = &mut data[ix * n * n..(ix + 1) * n * n];
        for iz in 0..n {
            for iy in 0..n {
                line[iy] = plane[iy * n + iz];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for iy in 0..n {
                plane[iy * n + iz] = line[iy];
            }
        }
    }

    // x axis: stride n^2.
    let n2 = n * n;
    for iy in 0..n {
        for iz in 0..n {
            let base = iy * n + iz;
            for ix in 0..n {
                line[ix] = data[ix * n2 + base];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for ix in 0..n {
                data[ix * n2 + base] = line[ix];
            }
        }
    }
}
