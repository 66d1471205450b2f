//! Artifact formats: flat binary field snapshots, CSV tables, JSON
//! reports, and the per-run manifest indexing every emitted file.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::functionals::RadialProfile;
use crate::grid::{Field, GridSpec, ThinField, WeightedGrid};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SGNR";
const VERSION: u32 = 1;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Write one field with its time stamp.  Header: magic, version, n, a,
/// nx, ny, grading, half_width, height, periodic flag, time; payload:
/// node values row-major (thin index outer, y inner), f64 little-endian.
pub fn write_snapshot(path: &Path, field: &Field, time: f64) -> Result<()> {
    let g = &field.grid;
    let s = &g.spec;
    let mut buf = Vec::with_capacity(64 + 8 * field.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(s.n as u32).to_le_bytes());
    buf.extend_from_slice(&s.a.to_le_bytes());
    buf.extend_from_slice(&(s.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(s.ny as u32).to_le_bytes());
    buf.extend_from_slice(&s.grading.to_le_bytes());
    buf.extend_from_slice(&s.half_width.to_le_bytes());
    buf.extend_from_slice(&s.height.to_le_bytes());
    buf.extend_from_slice(&(s.periodic_x as u32).to_le_bytes());
    buf.extend_from_slice(&time.to_le_bytes());
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.at + k > self.data.len() {
            return Err(Error::Snapshot(format!(
                "truncated at byte {} of {}",
                self.at,
                self.data.len()
            )));
        }
        let s = &self.data[self.at..self.at + k];
        self.at += k;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_snapshot(path: &Path) -> Result<(Field, f64)> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, at: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let n = c.u32()? as usize;
    let a = c.f64()?;
    let nx = c.u32()? as usize;
    let ny = c.u32()? as usize;
    let grading = c.f64()?;
    let half_width = c.f64()?;
    let height = c.f64()?;
    let periodic_x = c.u32()? != 0;
    let time = c.f64()?;
    let grid = WeightedGrid::build(GridSpec {
        n,
        a,
        half_width,
        height,
        nx,
        ny,
        grading,
        periodic_x,
    })?;
    let nodes = grid.num_nodes();
    let expect = c.at + 8 * nodes;
    if data.len() != expect {
        return Err(Error::Snapshot(format!(
            "payload is {} bytes, header implies {}",
            data.len() - c.at,
            8 * nodes
        )));
    }
    let mut field = Field::zeros(&grid);
    for v in field.values.iter_mut() {
        *v = c.f64()?;
    }
    Ok((field, time))
}

fn open_out(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Node table: x coordinates, y, value.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let g = &field.grid;
    let mut out = open_out(path)?;
    if g.n() == 1 {
        writeln!(out, "x,y,value")?;
    } else {
        writeln!(out, "x0,x1,y,value")?;
    }
    for fx in 0..g.num_thin() {
        let pos = g.thin_pos(fx);
        for iy in 0..g.ny() {
            let v = field.values[g.idx(fx, iy)];
            if g.n() == 1 {
                writeln!(out, "{},{},{}", pos[0], g.ys[iy], v)?;
            } else {
                writeln!(out, "{},{},{},{}", pos[0], pos[1], g.ys[iy], v)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_thin_csv(path: &Path, tf: &ThinField) -> Result<()> {
    let g = &tf.grid;
    let mut out = open_out(path)?;
    if g.n() == 1 {
        writeln!(out, "x,value")?;
    } else {
        writeln!(out, "x0,x1,value")?;
    }
    for fx in 0..g.num_thin() {
        let pos = g.thin_pos(fx);
        if g.n() == 1 {
            writeln!(out, "{},{}", pos[0], tf.values[fx])?;
        } else {
            writeln!(out, "{},{},{}", pos[0], pos[1], tf.values[fx])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Radial profile table with the monotone quantities.
pub fn write_profile_csv(
    path: &Path,
    p: &RadialProfile,
    phi_delta: &[f64],
    w_k0: &[f64],
    w_0: &[f64],
) -> Result<()> {
    let mut out = open_out(path)?;
    writeln!(out, "r,H,G,D,I,N,Phi_delta,W_k0,W_0,quad_err")?;
    for (k, r) in p.radii.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r,
            p.h[k],
            p.g[k],
            p.d[k],
            p.i_surf[k],
            p.n_freq[k],
            phi_delta[k],
            w_k0[k],
            w_0[k],
            p.quad_err[k]
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    path: String,
    bytes: u64,
}

/// Index of one run: config hash, code version, outputs, timings.
#[derive(Serialize)]
pub struct Manifest {
    config_sha256: String,
    version: String,
    outputs: Vec<ManifestEntry>,
    timings_s: Vec<(String, f64)>,
}

impl Manifest {
    pub fn new(config: &Config) -> Manifest {
        Manifest {
            config_sha256: sha256_hex(&config.canonical_bytes()),
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
            timings_s: Vec::new(),
        }
    }

    /// Register an artifact; the file must already exist.
    pub fn record(&mut self, name: &str, path: &Path) -> Result<()> {
        let meta = std::fs::metadata(path)?;
        self.outputs.push(ManifestEntry {
            name: name.into(),
            path: path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            bytes: meta.len(),
        });
        Ok(())
    }

    pub fn timing(&mut self, name: &str, seconds: f64) {
        self.timings_s.push((name.into(), seconds));
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let value = serde_json::to_value(self).expect("manifest serializes");
        write_json(&path, &value)?;
        Ok(path)
    }
}
