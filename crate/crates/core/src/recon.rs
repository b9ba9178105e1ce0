//! Standard and linearized monotonicity reconstructions, the enclosed
//! component fill, threshold selection and noise sweeps.
//!
//! Both methods compare a reference operator `R_B` per test region `B` with
//! the measured `Λ^δ` and count eigenvalues of `R_B − Λ^δ` below `−δ`:
//!
//! * standard: `R_B = Λ^♭` from a forward solve with test coefficients,
//! * linearized: `R_B = Λ₀ + Λ′₀[α₁χ_B, α₂χ_B, −α₃χ_B]`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_loads, Assembler, LoadSet};
use crate::error::{invalid, Result};
use crate::forward::{factorize_system, ntd_from_bank, NtdMatrix, SolutionBank, SystemFactorization, VoxelGram};
use crate::model::{
    build_mesh, make_material_field, make_test_coefficients, partition_boundary, voxel_grid, Background,
    BoundaryLayout, InclusionSpec, MaterialField, Mesh, VoxelGrid,
};
use crate::noise::{perturb_with, spectral_norm, NoisySpec};
use crate::scenario::{alpha_settings, Scenario, ThresholdPolicy};
use crate::spectral::{background_mode_count, count_eigenvalues_below, ModeCount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Standard,
    Linearized,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::Linearized => "linearized",
        }
    }
}

/// Acceptance rule: `count ≤ M̃` for the standard test, `count < M̃` for the
/// linearized one.
pub fn accepts(method: Method, count: usize, m_cap: usize) -> bool {
    match method {
        Method::Standard => count <= m_cap,
        Method::Linearized => count < m_cap,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub count: usize,
    pub accepted: bool,
}

fn negative_count(reference: &DMatrix<f64>, noisy: &DMatrix<f64>, delta: f64) -> Result<usize> {
    if reference.shape() != noisy.shape() {
        return invalid(format!(
            "test matrix is {:?} but measured matrix is {:?}",
            reference.shape(),
            noisy.shape()
        ));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return invalid(format!("delta must be nonnegative, got {delta}"));
    }
    let diff = reference - noisy;
    count_eigenvalues_below(&((&diff + diff.transpose()) * 0.5), -delta)
}

/// Counts eigenvalues of `Λ^♭ − Λ^δ` below `−δ`.
pub fn standard_test(
    ntd_noisy: &DMatrix<f64>,
    ntd_test: &DMatrix<f64>,
    delta: f64,
    m_cap: usize,
) -> Result<TestOutcome> {
    let count = negative_count(ntd_test, ntd_noisy, delta)?;
    Ok(TestOutcome {
        count,
        accepted: accepts(Method::Standard, count, m_cap),
    })
}

/// Counts eigenvalues of `Λ₀ + Λ′₀[·] − Λ^δ` below `−δ`.
pub fn linearized_test(
    ntd0: &DMatrix<f64>,
    frechet: &DMatrix<f64>,
    ntd_noisy: &DMatrix<f64>,
    delta: f64,
    m_cap: usize,
) -> Result<TestOutcome> {
    if ntd0.shape() != frechet.shape() {
        return invalid("background NtD and Fréchet matrices differ in size");
    }
    let count = negative_count(&(ntd0 + frechet), ntd_noisy, delta)?;
    Ok(TestOutcome {
        count,
        accepted: accepts(Method::Linearized, count, m_cap),
    })
}

/// `accepted` plus every component of its complement that cannot reach the
/// boundary through face-adjacent non-accepted voxels.
pub fn fill_enclosed(accepted: &[bool], grid: &VoxelGrid) -> Result<Vec<bool>> {
    let n = grid.n_voxels();
    if accepted.len() != n {
        return invalid(format!("voxel mask has {} entries, grid has {n}", accepted.len()));
    }
    let boundary = grid.boundary_node();
    let mut reached = vec![false; n + 1];
    reached[boundary] = true;
    let mut queue = VecDeque::from([boundary]);
    while let Some(node) = queue.pop_front() {
        for &next in grid.neighbors(node) {
            if next != boundary && !accepted[next] && !reached[next] {
                reached[next] = true;
                queue.push_back(next);
            }
        }
    }
    Ok((0..n).map(|v| accepted[v] || !reached[v]).collect())
}

/// Mesh, boundary, loads and materials of one scenario.
#[derive(Debug, Clone)]
pub struct Problem {
    scenario: Scenario,
    mesh: Mesh,
    layout: BoundaryLayout,
    grid: VoxelGrid,
    assembler: Assembler,
    loads: LoadSet,
    background: Background,
    inclusions: Vec<InclusionSpec>,
    inside: Vec<bool>,
    support: Vec<bool>,
}

impl Problem {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let mesh = build_mesh(scenario.mesh.extent_m, scenario.mesh.resolution)?;
        let layout = partition_boundary(&mesh, &scenario.boundary.dirichlet, scenario.boundary.patch_grid)?;
        let grid = voxel_grid(&mesh, scenario.voxel_resolution)?;
        let assembler = Assembler::new(&mesh)?;
        let loads = assemble_loads(&mesh, &layout, scenario.boundary.load_mode);
        if loads.is_empty() {
            return invalid("boundary layout has no Neumann patches");
        }
        let background = scenario.background.background();
        let inclusions = scenario.inclusion_specs(&grid);
        for inc in &inclusions {
            inc.validate(background, &grid)?;
        }
        let mut inside = vec![false; grid.n_voxels()];
        for inc in &inclusions {
            for &v in &inc.voxels {
                inside[v] = true;
            }
        }
        let support = fill_enclosed(&inside, &grid)?;
        Ok(Problem {
            scenario: scenario.clone(),
            mesh,
            layout,
            grid,
            assembler,
            loads,
            background,
            inclusions,
            inside,
            support,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn layout(&self) -> &BoundaryLayout {
        &self.layout
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn loads(&self) -> &LoadSet {
        &self.loads
    }

    pub fn background(&self) -> Background {
        self.background
    }

    pub fn omega(&self) -> f64 {
        self.scenario.omega_rad_s
    }

    /// Voxels covered by an inclusion.
    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    /// Voxelized outer support of the inclusions.
    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn truth_field(&self) -> Result<MaterialField> {
        make_material_field(self.background, &self.inclusions, &self.grid)
    }

    pub fn factorize(&self, field: &MaterialField) -> Result<SystemFactorization> {
        let k = self.assembler.stiffness(field)?;
        let m = self.assembler.mass(&field.rho)?;
        factorize_system(&k, &m, self.omega(), &self.layout)
    }

    pub fn solve(&self, field: &MaterialField) -> Result<(SolutionBank, NtdMatrix)> {
        let fact = self.factorize(field)?;
        let bank = SolutionBank::compute(&fact, &self.loads)?;
        let ntd = ntd_from_bank(&self.loads, &bank)?;
        Ok((bank, ntd))
    }

    /// Noiseless NtD matrix of the body with inclusions.
    pub fn measured_ntd(&self) -> Result<NtdMatrix> {
        let field = self.truth_field()?;
        let fact = self.factorize(&field)?;
        crate::forward::ntd_matrix(&fact, &self.loads)
    }

    pub fn background_solve(&self) -> Result<(SolutionBank, NtdMatrix)> {
        self.solve(&MaterialField::uniform(self.mesh.n_elements(), self.background))
    }

    pub fn mode_count(&self, refine: bool) -> Result<ModeCount> {
        background_mode_count(
            self.background,
            self.scenario.mesh.extent_m,
            self.scenario.mesh.resolution,
            &self.scenario.boundary.dirichlet,
            self.omega(),
            refine,
        )
    }
}

/// Reference matrices `R_B` for every voxel and contrast setting.
#[derive(Debug, Clone)]
pub struct TestBank {
    method: Method,
    settings: Vec<[f64; 3]>,
    /// `reference[v][s]`.
    reference: Vec<Vec<DMatrix<f64>>>,
}

impl TestBank {
    /// One forward solve per voxel and setting.
    pub fn standard(problem: &Problem, settings: &[[f64; 3]]) -> Result<Self> {
        if settings.is_empty() {
            return invalid("at least one contrast setting is required");
        }
        let n_vox = problem.grid.n_voxels();
        let n_set = settings.len();
        let flat: Vec<DMatrix<f64>> = (0..n_vox * n_set)
            .into_par_iter()
            .map(|idx| standard_reference(problem, idx / n_set, settings[idx % n_set]))
            .collect::<Result<_>>()?;
        Ok(TestBank {
            method: Method::Standard,
            settings: settings.to_vec(),
            reference: group(flat, n_set),
        })
    }

    /// Background solves only: `Λ₀ + Λ′₀[α₁χ_B, α₂χ_B, −α₃χ_B]`.
    pub fn linearized(
        problem: &Problem,
        background: &SolutionBank,
        ntd0: &DMatrix<f64>,
        settings: &[[f64; 3]],
    ) -> Result<Self> {
        if settings.is_empty() {
            return invalid("at least one contrast setting is required");
        }
        let grams = voxel_grams(problem, background)?;
        Ok(Self::from_grams(&grams, ntd0, settings, background.omega))
    }

    pub fn from_grams(grams: &[VoxelGram], ntd0: &DMatrix<f64>, settings: &[[f64; 3]], omega: f64) -> Self {
        let reference = grams
            .iter()
            .map(|g| {
                settings
                    .iter()
                    .map(|&[a1, a2, a3]| ntd0 + g.frechet([a1, a2, -a3], omega))
                    .collect()
            })
            .collect();
        TestBank {
            method: Method::Linearized,
            settings: settings.to_vec(),
            reference,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn settings(&self) -> &[[f64; 3]] {
        &self.settings
    }

    pub fn n_voxels(&self) -> usize {
        self.reference.len()
    }

    pub fn reference(&self, voxel: usize, setting: usize) -> &DMatrix<f64> {
        &self.reference[voxel][setting]
    }

    /// Eigenvalue counts `counts[v][s]` for a measured matrix.
    pub fn counts(&self, noisy: &DMatrix<f64>, delta: f64) -> Result<Vec<Vec<usize>>> {
        self.counts_for(noisy, delta, &(0..self.n_voxels()).collect::<Vec<_>>())
    }

    pub fn counts_for(&self, noisy: &DMatrix<f64>, delta: f64, voxels: &[usize]) -> Result<Vec<Vec<usize>>> {
        voxels
            .par_iter()
            .map(|&v| {
                self.reference[v]
                    .iter()
                    .map(|r| negative_count(r, noisy, delta))
                    .collect()
            })
            .collect()
    }
}

/// `Λ^♭` for test coefficients with contrast `alpha` on one voxel.
pub fn standard_reference(problem: &Problem, voxel: usize, alpha: [f64; 3]) -> Result<DMatrix<f64>> {
    let field = make_test_coefficients(problem.background, &problem.grid, &[voxel], alpha)?;
    Ok(problem.solve(&field)?.1.matrix)
}

fn group(flat: Vec<DMatrix<f64>>, chunk: usize) -> Vec<Vec<DMatrix<f64>>> {
    let mut out = Vec::with_capacity(flat.len() / chunk);
    let mut it = flat.into_iter();
    loop {
        let row: Vec<_> = it.by_ref().take(chunk).collect();
        if row.is_empty() {
            break;
        }
        out.push(row);
    }
    out
}

/// Gram matrices of the background solutions on every voxel.
pub fn voxel_grams(problem: &Problem, background: &SolutionBank) -> Result<Vec<VoxelGram>> {
    (0..problem.grid.n_voxels())
        .into_par_iter()
        .map(|v| VoxelGram::compute(background, &problem.mesh, &problem.assembler, &problem.grid, &[v]))
        .collect()
}

/// Per-voxel result of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub voxel: usize,
    /// One count per contrast setting.
    pub counts: Vec<usize>,
    pub accepted: bool,
}

impl TestVerdict {
    pub fn min_count(&self) -> usize {
        self.counts.iter().copied().min().unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconResult {
    pub method: Method,
    pub resolution: [usize; 3],
    pub settings: Vec<[f64; 3]>,
    pub m_cap: usize,
    pub noise: NoisySpec,
    /// δ used for counting: the override or `noise.delta`, raised to the
    /// round-off floor.
    pub delta_used: f64,
    pub verdicts: Vec<TestVerdict>,
    /// Accepted voxel ids, ascending.
    pub accepted: Vec<usize>,
    /// Accepted voxels plus enclosed components, ascending.
    pub filled: Vec<usize>,
}

impl ReconResult {
    pub fn filled_mask(&self) -> Vec<bool> {
        mask(&self.filled, self.verdicts.len())
    }

    pub fn accepted_mask(&self) -> Vec<bool> {
        mask(&self.accepted, self.verdicts.len())
    }
}

fn mask(ids: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in ids {
        m[i] = true;
    }
    m
}

fn ids(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

/// Relative floor on the counting threshold: `δ ≥ COUNT_FLOOR·‖Λ‖₂`.
///
/// With `δ = 0` the count picks up round-off eigenvalues of size
/// `~1e-16‖Λ‖₂`, which carry no information about the test region.
pub const COUNT_FLOOR: f64 = 1e-10;

/// Noise realization used by [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRequest {
    pub eta: f64,
    pub seed: u64,
    pub symmetric: bool,
    pub delta_override: Option<f64>,
}

impl NoiseRequest {
    pub fn new(eta: f64, seed: u64) -> Self {
        NoiseRequest {
            eta,
            seed,
            symmetric: true,
            delta_override: None,
        }
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        NoiseRequest {
            eta: scenario.noise.eta,
            seed: scenario.noise.seed,
            symmetric: scenario.noise.symmetric,
            delta_override: scenario.noise.delta_override,
        }
    }

    /// Noisy matrix, realized noise and the δ used for counting, which is
    /// never below the round-off floor.
    pub fn realize(&self, measured: &DMatrix<f64>) -> Result<(DMatrix<f64>, NoisySpec, f64)> {
        let (noisy, spec) = perturb_with(measured, self.eta, self.seed, self.symmetric)?;
        let floor = COUNT_FLOOR * spectral_norm(measured);
        let delta = self.delta_override.unwrap_or(spec.delta).max(floor);
        Ok((noisy, spec, delta))
    }
}

/// Runs every test of `bank` against the noisy version of `measured`.
pub fn evaluate(
    bank: &TestBank,
    grid: &VoxelGrid,
    measured: &DMatrix<f64>,
    noise: NoiseRequest,
    m_cap: usize,
) -> Result<ReconResult> {
    if bank.n_voxels() != grid.n_voxels() {
        return invalid("test bank and voxel grid differ in size");
    }
    let (noisy, spec, delta) = noise.realize(measured)?;
    let counts = bank.counts(&noisy, delta)?;
    let verdicts: Vec<TestVerdict> = counts
        .into_iter()
        .enumerate()
        .map(|(voxel, counts)| {
            let accepted = counts.iter().any(|&c| accepts(bank.method, c, m_cap));
            TestVerdict {
                voxel,
                counts,
                accepted,
            }
        })
        .collect();
    let accepted_mask: Vec<bool> = verdicts.iter().map(|v| v.accepted).collect();
    let filled_mask = fill_enclosed(&accepted_mask, grid)?;
    Ok(ReconResult {
        method: bank.method,
        resolution: grid.resolution(),
        settings: bank.settings.clone(),
        m_cap,
        noise: spec,
        delta_used: delta,
        verdicts,
        accepted: ids(&accepted_mask),
        filled: ids(&filled_mask),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub delta: f64,
    pub m_min: i64,
    pub m_max: i64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub method: Method,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta,delta,M_min,M_max,feasible\n");
        for r in &self.rows {
            out.push_str(&format!("{:e},{:e},{},{},{}\n", r.eta, r.delta, r.m_min, r.m_max, r.feasible));
        }
        out
    }
}

/// Threshold interval `[M_min, M_max]` for which the voxel-level verdicts
/// match the truth. Standard: `M_min = max_in`, `M_max = min_out − 1`.
/// Linearized (strict rule): `M_min = max_in + 1`, `M_max = min_out`.
pub fn threshold_bounds(method: Method, min_counts: &[usize], inside: &[bool], support: &[bool], dim: usize) -> (i64, i64) {
    let max_in = min_counts
        .iter()
        .zip(inside)
        .filter(|(_, &i)| i)
        .map(|(&c, _)| c as i64)
        .max();
    let min_out = min_counts
        .iter()
        .zip(support)
        .filter(|(_, &s)| !s)
        .map(|(&c, _)| c as i64)
        .min();
    let dim = dim as i64;
    match method {
        Method::Standard => (max_in.unwrap_or(0), min_out.map_or(dim, |c| c - 1)),
        Method::Linearized => (max_in.map_or(1, |c| c + 1), min_out.unwrap_or(dim + 1)),
    }
}

/// `M_min`, `M_max` and feasibility for each noise level.
pub fn m_delta_sweep(
    bank: &TestBank,
    problem: &Problem,
    measured: &DMatrix<f64>,
    etas: &[f64],
    seed: u64,
    symmetric: bool,
) -> Result<SweepReport> {
    let relevant: Vec<usize> = (0..bank.n_voxels())
        .filter(|&v| problem.inside[v] || !problem.support[v])
        .collect();
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let noise = NoiseRequest {
            eta,
            seed,
            symmetric,
            delta_override: None,
        };
        let (noisy, spec, delta) = noise.realize(measured)?;
        let partial = bank.counts_for(&noisy, delta, &relevant)?;
        let mut min_counts = vec![usize::MAX; bank.n_voxels()];
        for (&v, c) in relevant.iter().zip(&partial) {
            min_counts[v] = c.iter().copied().min().unwrap_or(usize::MAX);
        }
        let (m_min, m_max) =
            threshold_bounds(bank.method, &min_counts, &problem.inside, &problem.support, measured.nrows());
        rows.push(SweepRow {
            eta,
            delta: spec.delta,
            m_min,
            m_max,
            feasible: m_min <= m_max,
        });
    }
    Ok(SweepReport {
        method: bank.method,
        seed,
        rows,
    })
}

/// Resolved threshold and where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub policy: ThresholdPolicy,
    pub m_cap: usize,
    /// Positive-mode count of the background, when it was computed.
    pub mode_count: Option<ModeCount>,
    /// Noise-free interval, when calibrated.
    pub calibration: Option<(i64, i64)>,
}

/// Theory: `M̃_s = d(λ₀, μ₀, ρ₀)` and `M̃_l = M̃_s + 1` (strict rule).
/// Calibrate: the upper end `M_max` of the noise-free interval.
pub fn resolve_threshold(
    policy: ThresholdPolicy,
    bank: &TestBank,
    problem: &Problem,
    measured: &DMatrix<f64>,
) -> Result<ThresholdChoice> {
    match policy {
        ThresholdPolicy::Explicit(m_cap) => Ok(ThresholdChoice {
            policy,
            m_cap,
            mode_count: None,
            calibration: None,
        }),
        ThresholdPolicy::Theory => {
            let mc = problem.mode_count(true)?;
            let m_cap = match bank.method {
                Method::Standard => mc.count,
                Method::Linearized => mc.count + 1,
            };
            Ok(ThresholdChoice {
                policy,
                m_cap,
                mode_count: Some(mc),
                calibration: None,
            })
        }
        ThresholdPolicy::Calibrate => {
            let sweep = m_delta_sweep(bank, problem, measured, &[0.0], 0, true)?;
            let row = sweep.rows[0];
            if !row.feasible {
                log::warn!(
                    "noise-free calibration is infeasible (M_min = {}, M_max = {})",
                    row.m_min,
                    row.m_max
                );
            }
            Ok(ThresholdChoice {
                policy,
                m_cap: row.m_max.max(0) as usize,
                mode_count: None,
                calibration: Some((row.m_min, row.m_max)),
            })
        }
    }
}

/// Halves the linearized contrast fraction until the inside-voxel counts
/// stop changing. Returns the accepted fraction.
pub fn calibrate_linearized_fraction(
    problem: &Problem,
    grams: &[VoxelGram],
    ntd0: &DMatrix<f64>,
    measured: &DMatrix<f64>,
    start: f64,
    max_halvings: usize,
) -> Result<f64> {
    let inside: Vec<usize> = (0..problem.grid.n_voxels()).filter(|&v| problem.inside[v]).collect();
    let c = &problem.scenario.tests.contrast;
    let counts_at = |f: f64| -> Result<Vec<Vec<usize>>> {
        let settings = alpha_settings(
            [f * c.lambda_pa, f * c.mu_pa, f * c.rho_kg_m3],
            problem.scenario.tests.variation,
        );
        let subset: Vec<VoxelGram> = inside.iter().map(|&v| grams[v].clone()).collect();
        let bank = TestBank::from_grams(&subset, ntd0, &settings, problem.omega());
        bank.counts(measured, 0.0)
    };
    let mut fraction = start;
    let mut last = counts_at(fraction)?;
    for _ in 0..max_halvings {
        let next = counts_at(0.5 * fraction)?;
        if next == last {
            return Ok(fraction);
        }
        fraction *= 0.5;
        last = next;
    }
    Ok(fraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakdownOptions {
    pub eta_start: f64,
    pub growth: f64,
    pub eta_max: f64,
    pub bisection_steps: usize,
}

impl Default for BreakdownOptions {
    fn default() -> Self {
        BreakdownOptions {
            eta_start: 1e-4,
            growth: 2.0,
            eta_max: 1.0,
            bisection_steps: 8,
        }
    }
}

/// Empirical breakdown level for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub seed: u64,
    /// Largest tested η whose reconstruction matched the reference, with
    /// every smaller tested η matching too.
    pub eta_star: f64,
    /// Smallest tested η that failed, if any.
    pub eta_fail: Option<f64>,
    /// Every η evaluated and whether it matched.
    pub trace: Vec<(f64, bool)>,
}

/// Upward geometric scan to the first mismatch, then bisection.
pub fn find_breakdown(
    bank: &TestBank,
    grid: &VoxelGrid,
    measured: &DMatrix<f64>,
    reference_filled: &[usize],
    m_cap: usize,
    seed: u64,
    symmetric: bool,
    opts: BreakdownOptions,
) -> Result<Breakdown> {
    if !(opts.eta_start > 0.0 && opts.growth > 1.0 && opts.eta_max >= opts.eta_start) {
        return invalid("breakdown search needs eta_start > 0, growth > 1, eta_max >= eta_start");
    }
    let mut trace = Vec::new();
    let mut matches = |eta: f64| -> Result<bool> {
        let noise = NoiseRequest {
            eta,
            seed,
            symmetric,
            delta_override: None,
        };
        let ok = evaluate(bank, grid, measured, noise, m_cap)?.filled == reference_filled;
        trace.push((eta, ok));
        Ok(ok)
    };
    let mut lo = 0.0;
    let mut hi = None;
    let mut eta = opts.eta_start;
    while eta <= opts.eta_max {
        if matches(eta)? {
            lo = eta;
            eta *= opts.growth;
        } else {
            hi = Some(eta);
            break;
        }
    }
    if let Some(mut h) = hi {
        for _ in 0..opts.bisection_steps {
            let mid = 0.5 * (lo + h);
            if matches(mid)? {
                lo = mid;
            } else {
                h = mid;
            }
        }
        hi = Some(h);
    }
    Ok(Breakdown {
        seed,
        eta_star: lo,
        eta_fail: hi,
        trace,
    })
}

/// Everything needed to reconstruct repeatedly from one scenario.
#[derive(Debug, Clone)]
pub struct Session {
    pub problem: Problem,
    pub measured: NtdMatrix,
}

impl Session {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let problem = Problem::new(scenario)?;
        let measured = problem.measured_ntd()?;
        Ok(Session { problem, measured })
    }

    pub fn standard_bank(&self) -> Result<TestBank> {
        TestBank::standard(&self.problem, &self.problem.scenario.standard_settings())
    }

    pub fn linearized_bank(&self) -> Result<TestBank> {
        let (bank0, ntd0) = self.problem.background_solve()?;
        TestBank::linearized(&self.problem, &bank0, &ntd0.matrix, &self.problem.scenario.linearized_settings())
    }

    pub fn bank(&self, method: Method) -> Result<TestBank> {
        match method {
            Method::Standard => self.standard_bank(),
            Method::Linearized => self.linearized_bank(),
        }
    }

    pub fn threshold(&self, bank: &TestBank, policy: ThresholdPolicy) -> Result<ThresholdChoice> {
        resolve_threshold(policy, bank, &self.problem, &self.measured.matrix)
    }

    pub fn reconstruct(&self, bank: &TestBank, noise: NoiseRequest, m_cap: usize) -> Result<ReconResult> {
        evaluate(bank, &self.problem.grid, &self.measured.matrix, noise, m_cap)
    }
}

/// Algorithm with full forward solves per test region, using the scenario's
/// contrast settings and symmetric noise.
pub fn reconstruct_standard(
    scenario: &Scenario,
    eta: f64,
    seed: u64,
    policy: ThresholdPolicy,
) -> Result<(ReconResult, ThresholdChoice)> {
    reconstruct_with(scenario, Method::Standard, eta, seed, policy)
}

/// Algorithm based on background solves and the Fréchet derivative.
pub fn reconstruct_linearized(
    scenario: &Scenario,
    eta: f64,
    seed: u64,
    policy: ThresholdPolicy,
) -> Result<(ReconResult, ThresholdChoice)> {
    reconstruct_with(scenario, Method::Linearized, eta, seed, policy)
}

fn reconstruct_with(
    scenario: &Scenario,
    method: Method,
    eta: f64,
    seed: u64,
    policy: ThresholdPolicy,
) -> Result<(ReconResult, ThresholdChoice)> {
    let session = Session::new(scenario)?;
    let bank = session.bank(method)?;
    let choice = session.threshold(&bank, policy)?;
    let noise = NoiseRequest {
        eta,
        seed,
        ..NoiseRequest::from_scenario(scenario)
    };
    Ok((session.reconstruct(&bank, noise, choice.m_cap)?, choice))
}
