//! Binary checkpoints: bit-exact save and restore of a [`SystemState`].
//!
//! Layout (all little-endian): an 8-byte magic, a format version, the grid
//! parameters, the time, the raw fluid coefficients, and the particle
//! arrays.  Floats are stored as raw IEEE bits, so a restored run continues
//! bitwise identically to an uninterrupted one.

use super::SystemState;
use crate::fluid::FluidState;
use crate::kinetic::ParticleEnsemble;
use crate::spectral::{FourierField, Grid3};
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"VNSCKPT1";
const VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, state: &SystemState) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;

    let grid = state.grid();
    w.write_all(&(grid.n() as u64).to_le_bytes())?;
    w.write_all(&grid.length().to_le_bytes())?;
    w.write_all(&grid.dealias_fraction().to_le_bytes())?;
    w.write_all(&state.time().to_le_bytes())?;

    let hat = state.fluid().velocity();
    for v in hat.data() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }

    let particles = state.particles();
    w.write_all(&(particles.len() as u64).to_le_bytes())?;
    for x in particles.positions() {
        for c in x {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for v in particles.velocities() {
        for c in v {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for wt in particles.weights() {
        w.write_all(&wt.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<SystemState> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| truncated())?;
    if &magic != MAGIC {
        return Err(Error::Schema("checkpoint magic mismatch".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Schema(format!("unsupported checkpoint version {version}")));
    }

    let n = read_u64(&mut r)? as usize;
    let length = read_f64(&mut r)?;
    let dealias = read_f64(&mut r)?;
    let time = read_f64(&mut r)?;
    let grid = Grid3::new(n, length, dealias)?;

    let mut hat = FourierField::zeros(grid, 3)?;
    for c in 0..3 {
        let slab = hat.slab_mut(c);
        for v in slab.iter_mut() {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            *v = num_complex::Complex64::new(re, im);
        }
    }
    let fluid = FluidState::from_velocity(hat)?;

    let count = read_u64(&mut r)? as usize;
    if count == 0 || count > (1 << 32) {
        return Err(Error::Schema(format!("implausible particle count {count}")));
    }
    let mut pos = vec![[0.0f64; 3]; count];
    for x in pos.iter_mut() {
        for c in x.iter_mut() {
            *c = read_f64(&mut r)?;
        }
    }
    let mut vel = vec![[0.0f64; 3]; count];
    for v in vel.iter_mut() {
        for c in v.iter_mut() {
            *c = read_f64(&mut r)?;
        }
    }
    let mut weight = vec![0.0f64; count];
    for w in weight.iter_mut() {
        *w = read_f64(&mut r)?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Schema("trailing bytes after checkpoint payload".into()));
    }
    let particles = ParticleEnsemble::from_parts(length, pos, vel, weight)?;
    SystemState::new(time, fluid, particles)
}

fn truncated() -> Error {
    Error::Schema("checkpoint truncated".into())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| truncated())?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| truncated())?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| truncated())?;
    Ok(f64::from_le_bytes(buf))
}
