//! Result files. Every write goes to a temporary file in the target
//! directory first and is renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use elastomono::model::VoxelGrid;
use elastomono::noise::NoisySpec;
use elastomono::recon::{Method, ReconResult, ThresholdChoice};
use elastomono::scenario::Scenario;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Provenance block embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Scenario,
    /// The resolved scenario as a config file; running it again reproduces
    /// the artifact.
    pub config_toml: String,
}

impl Metadata {
    pub fn new(command: &str, config: &Scenario) -> CliResult<Self> {
        Ok(Metadata {
            tool: "elastomono",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: config.clone(),
            config_toml: crate::config::to_toml(config)?,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct ReconArtifact<'a> {
    pub resolution: [usize; 3],
    pub accepted: Vec<[usize; 3]>,
    pub filled: Vec<[usize; 3]>,
    pub method: Method,
    pub m_cap: usize,
    pub threshold: &'a ThresholdChoice,
    pub noise: NoisySpec,
    pub delta_used: f64,
    pub settings: &'a [[f64; 3]],
    pub metadata: &'a Metadata,
}

impl<'a> ReconArtifact<'a> {
    pub fn new(
        result: &'a ReconResult,
        grid: &VoxelGrid,
        threshold: &'a ThresholdChoice,
        metadata: &'a Metadata,
    ) -> Self {
        let coords = |ids: &[usize]| ids.iter().map(|&v| grid.voxel_coords(v)).collect();
        ReconArtifact {
            resolution: result.resolution,
            accepted: coords(&result.accepted),
            filled: coords(&result.filled),
            method: result.method,
            m_cap: result.m_cap,
            threshold,
            noise: result.noise,
            delta_used: result.delta_used,
            settings: &result.settings,
            metadata,
        }
    }
}

/// One row per voxel: coordinates, count per contrast setting, minimum and
/// verdicts.
pub fn counts_csv(result: &ReconResult, grid: &VoxelGrid) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["voxel", "i", "j", "k"].map(String::from).to_vec();
    header.extend((0..result.settings.len()).map(|s| format!("count_{s}")));
    header.extend(["min_count", "accepted", "filled"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    let accepted = result.accepted_mask();
    let filled = result.filled_mask();
    for v in &result.verdicts {
        let [i, j, k] = grid.voxel_coords(v.voxel);
        let mut row = vec![v.voxel.to_string(), i.to_string(), j.to_string(), k.to_string()];
        row.extend(v.counts.iter().map(|c| c.to_string()));
        row.push(v.min_count().to_string());
        row.push(u8::from(accepted[v.voxel]).to_string());
        row.push(u8::from(filled[v.voxel]).to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Internal(format!("csv: {e}"))
}

/// Legacy ASCII VTK structured points with one cell per voxel, in the
/// mesh's native axis order.
pub fn vtk(result: &ReconResult, extent: [f64; 3]) -> String {
    let [nx, ny, nz] = result.resolution;
    let n = nx * ny * nz;
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "elastomono {} reconstruction", result.method.name());
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nz + 1);
    let _ = writeln!(out, "ORIGIN 0 0 0");
    let _ = writeln!(
        out,
        "SPACING {} {} {}",
        extent[0] / nx as f64,
        extent[1] / ny as f64,
        extent[2] / nz as f64
    );
    let _ = writeln!(out, "CELL_DATA {n}");
    let fields: [(&str, Vec<usize>); 3] = [
        ("filled", result.filled_mask().into_iter().map(usize::from).collect()),
        ("accepted", result.accepted_mask().into_iter().map(usize::from).collect()),
        ("min_count", result.verdicts.iter().map(|v| v.min_count()).collect()),
    ];
    for (name, values) in fields {
        let _ = writeln!(out, "SCALARS {name} int 1");
        let _ = writeln!(out, "LOOKUP_TABLE default");
        for row in values.chunks(nx) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

/// Dense matrix as CSV without header, one matrix row per line.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
