//! Trajectory (de)serialization: a columnar binary container and CSV export.
//!
//! Binary layout (all little-endian): an 8-byte magic `MSDETRJ1`, the four
//! state/noise dimensions as u32, a flags word (bit 0: ΔW recorded, bit 1:
//! ΔB recorded), `n_steps` and `seed` as u64, then `t_end`, `eps`, `delta`
//! as f64, followed by one f64 column per state coordinate ((n+1) entries)
//! and, when recorded, one column per noise coordinate (n entries). Values
//! are stored as f64 regardless of the in-memory scalar type.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Dims, EpsilonPair};
use crate::num::Real;

use super::{scale_warnings, TimeGrid, Trajectory};

const MAGIC: &[u8; 8] = b"MSDETRJ1";

fn write_f64_column<T: Real, W: Write>(w: &mut W, data: &[T], stride: usize, col: usize) -> Result<()> {
    for row in data.chunks_exact(stride) {
        w.write_all(&row[col].to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

/// Write the columnar binary container.
pub fn write_trajectory<T: Real>(traj: &Trajectory<T>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let d = traj.dims();
    w.write_all(MAGIC)?;
    for v in [d.slow as u32, d.fast as u32, d.w as u32, d.b as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let flags: u32 = (traj.dw.is_some() as u32) | ((traj.db.is_some() as u32) << 1);
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(traj.n_steps() as u64).to_le_bytes())?;
    w.write_all(&traj.seed().to_le_bytes())?;
    for v in [traj.grid().t_end(), traj.eps().eps, traj.eps().delta] {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    for col in 0..d.slow {
        write_f64_column(&mut w, &traj.x, d.slow, col)?;
    }
    for col in 0..d.fast {
        write_f64_column(&mut w, &traj.y, d.fast, col)?;
    }
    if let Some(dw) = &traj.dw {
        for col in 0..d.w {
            write_f64_column(&mut w, dw, d.w, col)?;
        }
    }
    if let Some(db) = &traj.db {
        for col in 0..d.b {
            write_f64_column(&mut w, db, d.b, col)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_exact_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_exact_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64_column<T: Real, R: Read>(r: &mut R, data: &mut [T], stride: usize, col: usize) -> Result<()> {
    let rows = data.len() / stride;
    for k in 0..rows {
        data[k * stride + col] = T::from_f64_lossy(read_exact_f64(r)?);
    }
    Ok(())
}

/// Read a trajectory container back.
pub fn read_trajectory<T: Real>(path: &Path) -> Result<Trajectory<T>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: not a trajectory container", path.display())));
    }
    let slow = read_exact_u32(&mut r)? as usize;
    let fast = read_exact_u32(&mut r)? as usize;
    let w = read_exact_u32(&mut r)? as usize;
    let b = read_exact_u32(&mut r)? as usize;
    let flags = read_exact_u32(&mut r)?;
    let n = read_exact_u64(&mut r)? as usize;
    let seed = read_exact_u64(&mut r)?;
    let t_end = read_exact_f64(&mut r)?;
    let eps = read_exact_f64(&mut r)?;
    let delta = read_exact_f64(&mut r)?;
    if slow == 0 || fast == 0 || w == 0 || b == 0 || n == 0 {
        return Err(Error::Format("trajectory header has zero dimension".into()));
    }

    let dims = Dims { slow, fast, w, b, param: 0 };
    let grid = TimeGrid::new(T::from_f64_lossy(t_end), n)?;
    let eps = EpsilonPair::new(T::from_f64_lossy(eps), T::from_f64_lossy(delta))?;

    let mut x = vec![T::zero(); (n + 1) * slow];
    for col in 0..slow {
        read_f64_column(&mut r, &mut x, slow, col)?;
    }
    let mut y = vec![T::zero(); (n + 1) * fast];
    for col in 0..fast {
        read_f64_column(&mut r, &mut y, fast, col)?;
    }
    let dw = if flags & 1 != 0 {
        let mut dw = vec![T::zero(); n * w];
        for col in 0..w {
            read_f64_column(&mut r, &mut dw, w, col)?;
        }
        Some(dw)
    } else {
        None
    };
    let db = if flags & 2 != 0 {
        let mut db = vec![T::zero(); n * b];
        for col in 0..b {
            read_f64_column(&mut r, &mut db, b, col)?;
        }
        Some(db)
    } else {
        None
    };

    let warnings = scale_warnings(&eps, &grid);
    Ok(Trajectory { grid, dims, x, y, dw, db, eps, seed, warnings })
}

/// CSV export: a `#`-prefixed header row carrying dims and the (ϵ, δ) pair,
/// a column header `t,x_0..,y_0..[,dw_0..,db_0..]`, then one row per grid
/// node. Increment columns are empty on the final row (there are n
/// increments for n+1 states).
pub fn export_trajectory_csv<T: Real>(traj: &Trajectory<T>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let d = traj.dims();
    writeln!(
        w,
        "# dim_slow={} dim_fast={} dim_w={} dim_b={} eps={} delta={} seed={} n_steps={} t_end={}",
        d.slow,
        d.fast,
        d.w,
        d.b,
        traj.eps().eps.to_f64_lossy(),
        traj.eps().delta.to_f64_lossy(),
        traj.seed(),
        traj.n_steps(),
        traj.grid().t_end().to_f64_lossy()
    )?;
    let mut header = String::from("t");
    for i in 0..d.slow {
        header.push_str(&format!(",x_{i}"));
    }
    for i in 0..d.fast {
        header.push_str(&format!(",y_{i}"));
    }
    let with_noise = traj.has_noise();
    if with_noise {
        for i in 0..d.w {
            header.push_str(&format!(",dw_{i}"));
        }
        for i in 0..d.b {
            header.push_str(&format!(",db_{i}"));
        }
    }
    writeln!(w, "{header}")?;
    let n = traj.n_steps();
    for k in 0..=n {
        let mut line = format!("{}", traj.grid().t_at(k).to_f64_lossy());
        for v in traj.x_at(k) {
            line.push_str(&format!(",{}", v.to_f64_lossy()));
        }
        for v in traj.y_at(k) {
            line.push_str(&format!(",{}", v.to_f64_lossy()));
        }
        if with_noise {
            if k < n {
                for v in traj.dw_at(k).unwrap() {
                    line.push_str(&format!(",{}", v.to_f64_lossy()));
                }
                for v in traj.db_at(k).unwrap() {
                    line.push_str(&format!(",{}", v.to_f64_lossy()));
                }
            } else {
                for _ in 0..d.w + d.b {
                    line.push(',');
                }
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
