//! Content-addressed store for NtD matrices.
//!
//! Keys hash everything the matrix depends on: mesh, boundary layout, load
//! mode, the coefficient field and ω. Files start with a magic tag and a
//! format version; any mismatch is treated as a miss.

use std::path::{Path, PathBuf};

use elastomono::forward::NtdMatrix;
use elastomono::model::MaterialField;
use elastomono::recon::Problem;
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::artifacts::write_atomic;
use crate::error::{CliError, CliResult};

const MAGIC: &[u8; 6] = b"EMNTD\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn ntd_key(problem: &Problem, field: &MaterialField) -> String {
    let s = problem.scenario();
    let mut h = Sha256::new();
    h.update(b"elastomono-ntd");
    h.update(FORMAT_VERSION.to_le_bytes());
    for v in s.mesh.extent_m {
        h.update(v.to_bits().to_le_bytes());
    }
    for r in s.mesh.resolution {
        h.update((r as u64).to_le_bytes());
    }
    for side in problem.layout().dirichlet_sides() {
        h.update([*side as u8]);
    }
    h.update([0xff]);
    for p in s.boundary.patch_grid {
        h.update((p as u64).to_le_bytes());
    }
    h.update([problem.loads().mode as u8]);
    h.update(problem.omega().to_bits().to_le_bytes());
    for values in [&field.lambda, &field.mu, &field.rho] {
        h.update((values.len() as u64).to_le_bytes());
        for v in values.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct NtdCache {
    dir: PathBuf,
}

impl NtdCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        NtdCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.ntd"))
    }

    pub fn load(&self, key: &str) -> Option<NtdMatrix> {
        let bytes = std::fs::read(self.path(key)).ok()?;
        decode(&bytes)
    }

    pub fn store(&self, key: &str, m: &NtdMatrix) -> CliResult<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        write_atomic(&self.path(key), &encode(m))
    }

    /// Cached matrix for `key`, computing and storing it on a miss.
    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> CliResult<NtdMatrix>,
    ) -> CliResult<NtdMatrix> {
        if let Some(m) = self.load(key) {
            log::info!("cache hit: {key}");
            return Ok(m);
        }
        log::info!("cache miss: {key}");
        let m = compute()?;
        self.store(key, &m)?;
        Ok(m)
    }
}

fn encode(ntd: &NtdMatrix) -> Vec<u8> {
    let m = &ntd.matrix;
    let mut out = Vec::with_capacity(34 + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    out.extend_from_slice(&ntd.asymmetry.to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<const N: usize>(bytes: &[u8]) -> Option<([u8; N], &[u8])> {
    let (head, rest) = bytes.split_at_checked(N)?;
    Some((head.try_into().ok()?, rest))
}

fn decode(bytes: &[u8]) -> Option<NtdMatrix> {
    let rest = bytes.strip_prefix(MAGIC.as_slice())?;
    let (version, rest) = take::<4>(rest)?;
    if u32::from_le_bytes(version) != FORMAT_VERSION {
        return None;
    }
    let (rows, rest) = take::<8>(rest)?;
    let (cols, rest) = take::<8>(rest)?;
    let (asymmetry, data) = take::<8>(rest)?;
    let rows = u64::from_le_bytes(rows) as usize;
    let cols = u64::from_le_bytes(cols) as usize;
    if data.len() != rows.checked_mul(cols)?.checked_mul(8)? {
        return None;
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect::<Vec<_>>();
    Some(NtdMatrix {
        matrix: DMatrix::from_vec(rows, cols, values),
        asymmetry: f64::from_le_bytes(asymmetry),
    })
}
