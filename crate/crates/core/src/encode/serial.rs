//! Hash-grid checkpoint serialization.

use super::hashgrid::{HashGrid, HashGridConfig, MAX_DIM};
use crate::checkpoint as ckpt;
use crate::error::Result;
use crate::scalar::Real;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

impl<S: Real> HashGrid<S> {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        ckpt::write_header(w, ckpt::Kind::HashGrid)?;
        let c = &self.cfg;
        for v in [
            c.dim,
            c.levels,
            c.features_per_level,
            c.table_size_log2 as usize,
            c.base_resolution,
            c.max_resolution,
            c.time_resolution,
        ] {
            ckpt::write_u32(w, v as u32)?;
        }
        for a in 0..MAX_DIM {
            ckpt::write_f64(w, c.lo[a])?;
            ckpt::write_f64(w, c.hi[a])?;
        }
        ckpt::write_f64(w, c.init_scale)?;
        for table in &self.tables {
            ckpt::write_params(w, table)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        ckpt::read_header(r, ckpt::Kind::HashGrid)?;
        let mut u = || -> Result<usize> { Ok(ckpt::read_u32(r)? as usize) };
        let (dim, levels, features_per_level, table_size_log2, base, max, time) =
            (u()?, u()?, u()?, u()?, u()?, u()?, u()?);
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for a in 0..MAX_DIM {
            lo[a] = ckpt::read_f64(r)?;
            hi[a] = ckpt::read_f64(r)?;
        }
        let init_scale = ckpt::read_f64(r)?;
        let cfg = HashGridConfig {
            dim,
            levels,
            features_per_level,
            table_size_log2: table_size_log2 as u32,
            base_resolution: base,
            max_resolution: max,
            time_resolution: time,
            lo,
            hi,
            init_scale,
        };
        let mut grid = HashGrid::new(cfg, 0)?;
        for table in grid.tables.iter_mut() {
            let loaded: Vec<S> = ckpt::read_params(r)?;
            if loaded.len() != table.len() {
                return Err(crate::error::Error::Checkpoint(format!(
                    "table length {} != expected {}",
                    loaded.len(),
                    table.len()
                )));
            }
            *table = loaded;
        }
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}
