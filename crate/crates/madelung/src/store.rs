//! On-disk eigenbasis cache (`MADELUNG_CACHE_DIR`).

use std::path::{Path, PathBuf};

use madelung_core::scenarios::{BasisStore, EigenCache};
use madelung_core::spectral::{EigenBasis, Potential};
use madelung_core::{Grid1D, ScalarField};

use crate::formats::{read_json, read_table, write_eigenbasis};

pub const CACHE_ENV: &str = "MADELUNG_CACHE_DIR";

/// Bases stored as `basis-<key>.json` + `basis-<key>.csv` in one directory.
/// Unreadable or mismatched entries are treated as misses; write failures
/// are ignored (the cache is an optimisation only).
#[derive(Debug, Clone)]
pub struct DiskStore {
    dir: PathBuf,
}

impl DiskStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DiskStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn stem(key: u64) -> String {
        format!("basis-{key:016x}")
    }

    fn read(&self, key: u64, potential: &Potential, grid: Grid1D) -> Option<EigenBasis<Grid1D>> {
        let stem = Self::stem(key);
        let meta = read_json(&self.dir.join(format!("{stem}.json"))).ok()?;
        let g = meta.get("grid")?.get(0)?;
        let stored = Grid1D::new(g["min"].as_f64()?, g["max"].as_f64()?, g["n"].as_u64()? as usize).ok()?;
        if stored != grid {
            return None;
        }
        let energies: Vec<f64> = meta["energies"].as_array()?.iter().map(|e| e.as_f64()).collect::<Option<_>>()?;
        let table = read_table(&self.dir.join(meta["states_csv"].as_str()?)).ok()?;
        if table.rows.len() != grid.len() || table.headers.len() != energies.len() + 1 {
            return None;
        }
        let states = (0..energies.len())
            .map(|k| {
                let v: Option<Vec<f64>> = table.rows.iter().map(|r| r[k + 1]).collect();
                ScalarField::new(grid, v?).ok()
            })
            .collect::<Option<Vec<_>>>()?;
        EigenBasis::numerical_from_parts(potential, grid, energies, states).ok()
    }
}

impl BasisStore for DiskStore {
    fn load(&mut self, key: u64, potential: &Potential, grid: Grid1D) -> Option<EigenBasis<Grid1D>> {
        self.read(key, potential, grid)
    }

    fn save(&mut self, key: u64, basis: &EigenBasis<Grid1D>) {
        let _ = write_eigenbasis(&self.dir, &Self::stem(key), basis);
    }
}

/// In-memory cache, backed by `MADELUNG_CACHE_DIR` when that is set.
pub fn cache_from_env() -> EigenCache {
    match std::env::var_os(CACHE_ENV) {
        Some(d) if !d.is_empty() => EigenCache::with_store(Box::new(DiskStore::new(d))),
        _ => EigenCache::new(),
    }
}
