//! On-disk persistence: one JSON header line followed by little-endian f64
//! arrays. Band tables and reference solutions share the format.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bloch::{compute_lattice_table, BlochError, LatticeTable};
use crate::lattice::{Grid, PeriodicPotential};
use crate::scalar::{lit, machine_epsilon, to_f64, Complex, Real};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "bdsg-cache";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o: {0}")]
    Io(#[from] io::Error),
    #[error("cache header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("not a cache file or unsupported version")]
    Format,
    #[error("payload has {found} values, header promises {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("cached entry does not match the request: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Bloch(#[from] BlochError),
}

#[derive(Serialize, Deserialize)]
struct Envelope<H> {
    magic: String,
    version: u32,
    values: usize,
    header: H,
}

/// Writes `header` and the concatenated payload atomically (temp file + rename).
pub fn write_blob<H: Serialize>(path: &Path, header: &H, payload: &[f64]) -> Result<(), CacheError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let envelope = Envelope {
        magic: MAGIC.to_string(),
        version: FORMAT_VERSION,
        values: payload.len(),
        header,
    };
    let mut bytes = serde_json::to_vec(&envelope)?;
    bytes.push(b'\n');
    bytes.reserve(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Reads a file written by [`write_blob`].
pub fn read_blob<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f64>), CacheError> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let envelope: Envelope<H> = serde_json::from_slice(&line)?;
    if envelope.magic != MAGIC || envelope.version != FORMAT_VERSION {
        return Err(CacheError::Format);
    }
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    if raw.len() != envelope.values * 8 {
        return Err(CacheError::Truncated {
            expected: envelope.values,
            found: raw.len() / 8,
        });
    }
    let payload = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((envelope.header, payload))
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn content_key<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_vec(value).expect("cache keys serialize");
    hex::encode(Sha256::digest(json))
}

/// Header of a persisted band table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub epsilon: f64,
    pub cells: usize,
    pub points_per_cell: usize,
    pub bands: usize,
    pub potential: String,
}

/// Layout: energies (`L·M`) then `χ̂` as interleaved re/im (`2·L·R·M`).
pub fn save_table<T: Real>(path: &Path, table: &LatticeTable<T>) -> Result<(), CacheError> {
    let grid = table.grid();
    let header = TableHeader {
        epsilon: to_f64(grid.epsilon()),
        cells: grid.cells(),
        points_per_cell: grid.points_per_cell(),
        bands: table.bands(),
        potential: table.potential_id().to_string(),
    };
    let mut payload: Vec<f64> = table.energies().iter().map(|&e| to_f64(e)).collect();
    for c in table.chi_hat() {
        payload.push(to_f64(c.re));
        payload.push(to_f64(c.im));
    }
    write_blob(path, &header, &payload)
}

pub fn load_table<T: Real>(path: &Path, grid: &Grid<T>) -> Result<LatticeTable<T>, CacheError> {
    let (header, payload): (TableHeader, Vec<f64>) = read_blob(path)?;
    if header.cells != grid.cells() || header.points_per_cell != grid.points_per_cell() {
        return Err(CacheError::Mismatch(format!(
            "file holds L={} R={}, grid has L={} R={}",
            header.cells,
            header.points_per_cell,
            grid.cells(),
            grid.points_per_cell()
        )));
    }
    let (l, r, m) = (header.cells, header.points_per_cell, header.bands);
    let expected = l * m + 2 * l * r * m;
    if payload.len() != expected {
        return Err(CacheError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let energies = payload[..l * m].iter().map(|&e| lit(e)).collect();
    let chi = payload[l * m..]
        .chunks_exact(2)
        .map(|c| Complex::new(lit(c[0]), lit(c[1])))
        .collect();
    Ok(LatticeTable::from_parts(grid, m, header.potential, energies, chi)?)
}

/// Directory of cached band tables and reference solutions.
#[derive(Clone, Debug)]
pub struct CacheDir {
    root: PathBuf,
}

impl CacheDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CacheDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// File name keyed by (potential id, L, R, M).
    pub fn table_path(&self, potential: &str, cells: usize, points_per_cell: usize, bands: usize) -> PathBuf {
        let key = content_key(&(potential, cells, points_per_cell, bands));
        self.root.join(format!("bands-{}.bin", &key[..24]))
    }

    /// Loads the band table if cached, otherwise computes it and, in double
    /// precision, stores it.
    pub fn table<T: Real>(
        &self,
        potential: &PeriodicPotential<T>,
        grid: &Grid<T>,
        bands: usize,
    ) -> Result<LatticeTable<T>, CacheError> {
        let path = self.table_path(&potential.id(), grid.cells(), grid.points_per_cell(), bands);
        if path.exists() {
            match load_table(&path, grid) {
                Ok(t) if t.potential_id() == potential.id() && t.bands() == bands => return Ok(t),
                Ok(_) => log::warn!("stale band cache {}, recomputing", path.display()),
                Err(e) => log::warn!("unreadable band cache {}: {e}, recomputing", path.display()),
            }
        }
        let table = compute_lattice_table(potential, grid, bands)?;
        if machine_epsilon::<T>() <= f64::EPSILON {
            save_table(&path, &table)?;
        }
        Ok(table)
    }
}
