//! Binary kernel-table files: magic, format version, parameters, little-endian payload.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::table::{KernelTable, TableInfo};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;

const MAGIC: &[u8; 8] = b"LLBKTAB\0";
const VERSION: u32 = 1;

/// Hex digest identifying a table by field, channel count, grid, quadrature order and tolerance.
pub fn cache_key(b: f64, m_max: usize, grid: &UniformGrid, quadrature_order: usize, tol: f64) -> String {
    let mut h = Sha256::new();
    h.update(VERSION.to_le_bytes());
    h.update(b.to_bits().to_le_bytes());
    h.update((m_max as u64).to_le_bytes());
    h.update(grid.fingerprint().as_bytes());
    h.update((quadrature_order as u64).to_le_bytes());
    h.update(tol.to_bits().to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_table(path: &Path, t: &KernelTable) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_f64(&mut buf, t.b)?;
    put_u64(&mut buf, t.m_max as u64)?;
    put_f64(&mut buf, t.grid.z_max())?;
    put_u64(&mut buf, t.grid.len() as u64)?;
    put_u64(&mut buf, t.info.quadrature_order as u64)?;
    put_u64(&mut buf, t.info.refinement as u64)?;
    put_u64(&mut buf, t.info.nodes as u64)?;
    put_f64(&mut buf, t.info.achieved_tol)?;
    put_f64(&mut buf, t.info.requested_tol)?;
    for row in t.single.iter().chain(&t.pair) {
        for &v in row {
            put_f64(&mut buf, v)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<KernelTable> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Cache(format!("{} is not a kernel table", path.display())));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != VERSION {
        return Err(Error::Cache(format!("unsupported table version {version}")));
    }
    let b = get_f64(&mut r)?;
    let m_max = get_u64(&mut r)? as usize;
    let z_max = get_f64(&mut r)?;
    let n = get_u64(&mut r)? as usize;
    let grid = UniformGrid::new(z_max, n).map_err(|e| Error::Cache(e.to_string()))?;
    let info = TableInfo {
        quadrature_order: get_u64(&mut r)? as usize,
        refinement: get_u64(&mut r)? as usize,
        nodes: get_u64(&mut r)? as usize,
        achieved_tol: get_f64(&mut r)?,
        requested_tol: get_f64(&mut r)?,
    };
    let mut read_rows = |count: usize| -> Result<Vec<Vec<f64>>> {
        (0..count)
            .map(|_| (0..n).map(|_| get_f64(&mut r)).collect())
            .collect()
    };
    let single = read_rows(m_max + 1)?;
    let pair = read_rows((m_max + 1) * (m_max + 2) / 2)?;
    Ok(KernelTable {
        b,
        m_max,
        grid,
        single,
        pair,
        info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_kernel_table;

    #[test]
    fn roundtrip_is_bit_exact() {
        let g = UniformGrid::new(2.0, 9).unwrap();
        let t = build_kernel_table(2.0, 2, &g, 16, 1e-10).unwrap();
        let dir = std::env::temp_dir().join(format!("llband-cache-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.bin");
        write_table(&path, &t).unwrap();
        let back = read_table(&path).unwrap();
        assert_eq!(back, t);
        std::fs::remove_dir_all(dir).ok();
        assert_ne!(cache_key(2.0, 2, &g, 16, 1e-10), cache_key(2.0, 3, &g, 16, 1e-10));
    }
}
