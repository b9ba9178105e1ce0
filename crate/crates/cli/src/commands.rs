//! Command orchestration.

use std::path::{Path, PathBuf};

use elastomono::forward::{NtdMatrix, VoxelGram};
use elastomono::model::MaterialField;
use elastomono::noise::spectral_norm;
use elastomono::recon::{m_delta_sweep, standard_reference, Method, NoiseRequest, Problem, Session, TestBank};
use elastomono::scenario::{wavelengths, Scenario, WaveReport};
use elastomono::spectral::{EigenReport, ModeCount};
use serde::Serialize;

use crate::args::{parse_voxel, Cli, Command};
use crate::artifacts::{counts_csv, matrix_csv, vtk, write_atomic, write_json, Metadata, ReconArtifact};
use crate::cache::{ntd_key, NtdCache};
use crate::config::{apply_overrides, load_scenario};
use crate::error::{CliError, CliResult};

pub const CACHE_ENV: &str = "ELASTOMONO_CACHE";

/// Runs one command, on a dedicated thread pool when `--threads` is given.
pub fn run(cli: &Cli) -> CliResult<()> {
    let stale = cli.options.out.join("error.json");
    if stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
    }
    match cli.options.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let path = cli
        .options
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut scenario = load_scenario(path)?;
    let is_sweep = matches!(cli.command, Command::Sweep { .. });
    let eta_list = apply_overrides(&mut scenario, &cli.options, is_sweep)?;
    let cache = cli
        .options
        .cache
        .clone()
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
        .map(NtdCache::new);
    let ctx = Context {
        scenario,
        cache,
        out: cli.options.out.clone(),
    };
    match &cli.command {
        Command::Forward => ctx.forward(),
        Command::ReconstructStandard => ctx.reconstruct(Method::Standard),
        Command::ReconstructLinearized => ctx.reconstruct(Method::Linearized),
        Command::Sweep { method } => {
            let etas = eta_list.unwrap_or_else(|| vec![ctx.scenario.noise.eta]);
            ctx.sweep((*method).into(), &etas)
        }
        Command::Spectra { method, voxels } => ctx.spectra((*method).into(), voxels),
    }
}

struct Context {
    scenario: Scenario,
    cache: Option<NtdCache>,
    out: PathBuf,
}

#[derive(Serialize)]
struct ForwardReport<'a> {
    n_loads: usize,
    n_free_dofs: usize,
    measured_norm: f64,
    measured_asymmetry: f64,
    background_norm: f64,
    background_asymmetry: f64,
    waves: WaveReport,
    mode_count: ModeCount,
    metadata: &'a Metadata,
}

#[derive(Serialize)]
struct SweepArtifact<'a> {
    report: &'a elastomono::SweepReport,
    metadata: &'a Metadata,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn ntd(&self, problem: &Problem, field: &MaterialField) -> CliResult<NtdMatrix> {
        let compute = || -> CliResult<NtdMatrix> {
            let fact = problem.factorize(field)?;
            Ok(elastomono::forward::ntd_matrix(&fact, problem.loads())?)
        };
        match &self.cache {
            Some(cache) => cache.get_or_compute(&ntd_key(problem, field), compute),
            None => compute(),
        }
    }

    fn session(&self) -> CliResult<Session> {
        let problem = Problem::new(&self.scenario)?;
        let measured = self.ntd(&problem, &problem.truth_field()?)?;
        Ok(Session { problem, measured })
    }

    fn forward(&self) -> CliResult<()> {
        let session = self.session()?;
        let problem = &session.problem;
        let background = self.ntd(
            problem,
            &MaterialField::uniform(problem.mesh().n_elements(), problem.background()),
        )?;
        let bg = self.scenario.background;
        let meta = Metadata::new("forward", &self.scenario)?;
        let report = ForwardReport {
            n_loads: problem.loads().len(),
            n_free_dofs: elastomono::forward::DofMap::new(problem.layout()).n_free(),
            measured_norm: spectral_norm(&session.measured.matrix),
            measured_asymmetry: session.measured.asymmetry,
            background_norm: spectral_norm(&background.matrix),
            background_asymmetry: background.asymmetry,
            waves: wavelengths(bg.lambda_pa, bg.mu_pa, bg.rho_kg_m3, self.scenario.omega_rad_s.abs())?,
            mode_count: problem.mode_count(true)?,
            metadata: &meta,
        };
        write_atomic(&self.path("ntd.csv"), matrix_csv(&session.measured.matrix).as_bytes())?;
        write_atomic(&self.path("ntd_background.csv"), matrix_csv(&background.matrix).as_bytes())?;
        write_json(&self.path("forward.json"), &report)
    }

    fn reconstruct(&self, method: Method) -> CliResult<()> {
        let session = self.session()?;
        let bank = session.bank(method)?;
        let choice = session.threshold(&bank, self.scenario.threshold)?;
        let result = session.reconstruct(&bank, NoiseRequest::from_scenario(&self.scenario), choice.m_cap)?;
        let command = format!("reconstruct-{}", method.name());
        let meta = Metadata::new(&command, &self.scenario)?;
        let grid = session.problem.grid();
        let name = method.name();
        write_json(
            &self.path(&format!("recon_{name}.json")),
            &ReconArtifact::new(&result, grid, &choice, &meta),
        )?;
        write_atomic(&self.path(&format!("counts_{name}.csv")), &counts_csv(&result, grid)?)?;
        write_atomic(
            &self.path(&format!("recon_{name}.vtk")),
            vtk(&result, self.scenario.mesh.extent_m).as_bytes(),
        )?;
        log::info!(
            "{name}: {} accepted, {} after fill, threshold {}",
            result.accepted.len(),
            result.filled.len(),
            result.m_cap
        );
        Ok(())
    }

    fn sweep(&self, method: Method, etas: &[f64]) -> CliResult<()> {
        if etas.is_empty() {
            return Err(CliError::Config("sweep needs at least one noise level".into()));
        }
        let session = self.session()?;
        let bank = session.bank(method)?;
        let report = m_delta_sweep(
            &bank,
            &session.problem,
            &session.measured.matrix,
            etas,
            self.scenario.noise.seed,
            self.scenario.noise.symmetric,
        )?;
        let meta = Metadata::new(&format!("sweep-{}", method.name()), &self.scenario)?;
        let name = method.name();
        write_atomic(&self.path(&format!("sweep_{name}.csv")), report.to_csv().as_bytes())?;
        write_json(
            &self.path(&format!("sweep_{name}.json")),
            &SweepArtifact {
                report: &report,
                metadata: &meta,
            },
        )?;
        // rows are reported in the order given; the lowest level decides
        let lowest = report
            .rows
            .iter()
            .min_by(|a, b| a.eta.total_cmp(&b.eta))
            .expect("nonempty sweep");
        if !lowest.feasible {
            return Err(CliError::InfeasibleSweep {
                eta: lowest.eta,
                m_min: lowest.m_min,
                m_max: lowest.m_max,
            });
        }
        Ok(())
    }

    fn spectra(&self, method: Method, voxel_specs: &[String]) -> CliResult<()> {
        let session = self.session()?;
        let problem = &session.problem;
        let grid = problem.grid();
        let voxels: Vec<usize> = if voxel_specs.is_empty() {
            (0..grid.n_voxels()).filter(|&v| problem.inside()[v]).collect()
        } else {
            voxel_specs
                .iter()
                .map(|s| parse_voxel(s, grid.resolution()).map(|c| grid.voxel_id(c)))
                .collect::<CliResult<_>>()?
        };
        if voxels.is_empty() {
            return Err(CliError::Config("no voxels selected; pass --voxel i,j,k".into()));
        }
        let (noisy, _, delta) = NoiseRequest::from_scenario(&self.scenario).realize(&session.measured.matrix)?;
        let name = method.name();
        let dir = self.path(&format!("spectra_{name}"));
        let background = match method {
            Method::Linearized => Some(problem.background_solve()?),
            Method::Standard => None,
        };
        let settings = match method {
            Method::Standard => self.scenario.standard_settings(),
            Method::Linearized => self.scenario.linearized_settings(),
        };
        for &v in &voxels {
            let [i, j, k] = grid.voxel_coords(v);
            let references: Vec<_> = match &background {
                None => settings
                    .iter()
                    .map(|&a| standard_reference(problem, v, a))
                    .collect::<Result<_, _>>()?,
                Some((bank0, ntd0)) => {
                    let gram = VoxelGram::compute(bank0, problem.mesh(), problem.assembler(), grid, &[v])?;
                    let one = TestBank::from_grams(&[gram], &ntd0.matrix, &settings, problem.omega());
                    (0..settings.len()).map(|s| one.reference(0, s).clone()).collect()
                }
            };
            for (s, reference) in references.iter().enumerate() {
                let label = format!("{name} voxel ({i},{j},{k}) alpha {:?}", settings[s]);
                let report = EigenReport::new(label, &(reference - &noisy), -delta)?;
                write_atomic(&dir.join(format!("v{i}_{j}_{k}_s{s}.csv")), report.to_csv().as_bytes())?;
            }
        }
        Ok(())
    }
}

/// Writes the error record for a failed run; failures here are only logged.
pub fn write_error_record(out: &Path, err: &CliError) {
    if let Err(e) = write_json(&out.join("error.json"), &err.record()) {
        log::error!("could not write error record: {e}");
    }
}
