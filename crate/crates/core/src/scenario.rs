//! Scenario description: geometry, boundary layout, materials, inclusions,
//! frequency, test parameters and noise. One scenario is the unit of
//! reproducibility; every artifact embeds the resolved scenario.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assembly::LoadMode;
use crate::error::{invalid, Error, Result};
use crate::model::{build_mesh, voxel_grid, Background, BoxSide, InclusionSpec, JumpBounds, VoxelGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub extent_m: [f64; 3],
    pub resolution: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub dirichlet: Vec<BoxSide>,
    pub patch_grid: [usize; 2],
    #[serde(default)]
    pub load_mode: LoadMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub lambda_pa: f64,
    pub mu_pa: f64,
    pub rho_kg_m3: f64,
}

impl MaterialConfig {
    pub fn background(&self) -> Background {
        Background {
            lambda: self.lambda_pa,
            mu: self.mu_pa,
            rho: self.rho_kg_m3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub n1_pa: f64,
    pub n2_pa: f64,
    pub n3_kg_m3: f64,
    pub big_n3_kg_m3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionConfig {
    /// Voxel coordinates `[i, j, k]` in the test grid.
    pub voxels: Vec<[usize; 3]>,
    pub jump_lambda_pa: f64,
    pub jump_mu_pa: f64,
    pub jump_rho_kg_m3: f64,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
}

/// Which parameter combinations are tried for each test region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variation {
    /// λ only, μ only, ρ only, and all three together.
    #[default]
    SingletonsAndAll,
    /// All three parameters together.
    AllOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    /// Expected inclusion contrasts (α₁, α₂, α₃).
    pub contrast: MaterialConfig,
    #[serde(default)]
    pub variation: Variation,
    /// Linearized test contrasts are this fraction of `contrast`.
    #[serde(default = "default_linearized_fraction")]
    pub linearized_fraction: f64,
}

fn default_linearized_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub symmetric: bool,
    /// Externally known noise bound used instead of the realized `η‖Λ‖₂`.
    #[serde(default)]
    pub delta_override: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            eta: 0.0,
            seed: 0,
            symmetric: true,
            delta_override: None,
        }
    }
}

/// How the eigenvalue-count threshold M̃ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "ThresholdRepr", into = "ThresholdRepr")]
pub enum ThresholdPolicy {
    /// Number of positive modes of the background mixed eigenvalue problem.
    #[default]
    Theory,
    /// Largest threshold that reconstructs the known truth without noise.
    Calibrate,
    Explicit(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Name(String),
    Value(usize),
}

impl TryFrom<ThresholdRepr> for ThresholdPolicy {
    type Error = String;

    fn try_from(r: ThresholdRepr) -> std::result::Result<Self, String> {
        match r {
            ThresholdRepr::Value(v) => Ok(ThresholdPolicy::Explicit(v)),
            ThresholdRepr::Name(s) => s.parse().map_err(|e: Error| e.to_string()),
        }
    }
}

impl From<ThresholdPolicy> for ThresholdRepr {
    fn from(p: ThresholdPolicy) -> Self {
        match p {
            ThresholdPolicy::Theory => ThresholdRepr::Name("theory".into()),
            ThresholdPolicy::Calibrate => ThresholdRepr::Name("calibrate".into()),
            ThresholdPolicy::Explicit(v) => ThresholdRepr::Value(v),
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(ThresholdPolicy::Theory),
            "calibrate" => Ok(ThresholdPolicy::Calibrate),
            other => other
                .parse::<usize>()
                .map(ThresholdPolicy::Explicit)
                .map_err(|_| {
                    Error::InvalidArgument(format!(
                        "threshold must be 'theory', 'calibrate' or an integer, got '{other}'"
                    ))
                }),
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::Theory => f.write_str("theory"),
            ThresholdPolicy::Calibrate => f.write_str("calibrate"),
            ThresholdPolicy::Explicit(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mesh: MeshConfig,
    pub boundary: BoundaryConfig,
    pub background: MaterialConfig,
    #[serde(default)]
    pub inclusions: Vec<InclusionConfig>,
    pub omega_rad_s: f64,
    pub voxel_resolution: [usize; 3],
    pub tests: TestConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub threshold: ThresholdPolicy,
}

impl Scenario {
    /// Checks everything that can be checked without building the mesh.
    pub fn validate(&self) -> Result<()> {
        if self.mesh.extent_m.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return invalid("mesh.extent_m must be positive");
        }
        if self.mesh.resolution.iter().any(|&r| r == 0) {
            return invalid("mesh.resolution must be at least 1 per axis");
        }
        for axis in 0..3 {
            let v = self.voxel_resolution[axis];
            if v == 0 || self.mesh.resolution[axis] % v != 0 {
                return invalid(format!(
                    "voxel_resolution {:?} must divide mesh.resolution {:?}",
                    self.voxel_resolution, self.mesh.resolution
                ));
            }
        }
        self.background.background().validate()?;
        if !(self.omega_rad_s.is_finite() && self.omega_rad_s != 0.0) {
            return invalid("omega_rad_s must be finite and nonzero");
        }
        let c = &self.tests.contrast;
        for (name, v) in [
            ("tests.contrast.lambda_pa", c.lambda_pa),
            ("tests.contrast.mu_pa", c.mu_pa),
            ("tests.contrast.rho_kg_m3", c.rho_kg_m3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("{name} must be nonnegative"));
            }
        }
        if c.lambda_pa == 0.0 && c.mu_pa == 0.0 && c.rho_kg_m3 == 0.0 {
            return invalid("tests.contrast must not be all zero");
        }
        if c.rho_kg_m3 >= self.background.rho_kg_m3 {
            return invalid(format!(
                "tests.contrast.rho_kg_m3 = {} must be below rho0 = {}",
                c.rho_kg_m3, self.background.rho_kg_m3
            ));
        }
        let f = self.tests.linearized_fraction;
        if !(f.is_finite() && f > 0.0) {
            return invalid("tests.linearized_fraction must be positive");
        }
        if !(self.noise.eta.is_finite() && self.noise.eta >= 0.0) {
            return invalid("noise.eta must be nonnegative");
        }
        if let Some(d) = self.noise.delta_override {
            if !(d.is_finite() && d >= 0.0) {
                return invalid("noise.delta_override must be nonnegative");
            }
        }
        for inc in &self.inclusions {
            for v in &inc.voxels {
                if (0..3).any(|a| v[a] >= self.voxel_resolution[a]) {
                    return invalid(format!("inclusion voxel {v:?} outside the voxel grid"));
                }
            }
        }
        if !self.inclusions.is_empty() {
            let mesh = build_mesh(self.mesh.extent_m, self.mesh.resolution)?;
            let grid = voxel_grid(&mesh, self.voxel_resolution)?;
            let background = self.background.background();
            for inc in self.inclusion_specs(&grid) {
                inc.validate(background, &grid)?;
            }
        }
        Ok(())
    }

    /// Inclusion specs with voxel ids resolved on `grid`.
    pub fn inclusion_specs(&self, grid: &VoxelGrid) -> Vec<InclusionSpec> {
        self.inclusions
            .iter()
            .map(|inc| InclusionSpec {
                voxels: inc.voxels.iter().map(|&c| grid.voxel_id(c)).collect(),
                jump_lambda: inc.jump_lambda_pa,
                jump_mu: inc.jump_mu_pa,
                jump_rho: inc.jump_rho_kg_m3,
                bounds: inc.bounds.map(|b| JumpBounds {
                    n1: b.n1_pa,
                    n2: b.n2_pa,
                    n3: b.n3_kg_m3,
                    big_n3: b.big_n3_kg_m3,
                }),
            })
            .collect()
    }

    /// Contrast vectors tried per test region for the standard test.
    pub fn standard_settings(&self) -> Vec<[f64; 3]> {
        let c = &self.tests.contrast;
        alpha_settings([c.lambda_pa, c.mu_pa, c.rho_kg_m3], self.tests.variation)
    }

    /// Contrast vectors tried per test region for the linearized test.
    pub fn linearized_settings(&self) -> Vec<[f64; 3]> {
        let c = &self.tests.contrast;
        let f = self.tests.linearized_fraction;
        alpha_settings([f * c.lambda_pa, f * c.mu_pa, f * c.rho_kg_m3], self.tests.variation)
    }
}

/// Parameter variation: each active parameter alone, then all together.
/// Parameters with zero contrast are skipped.
pub fn alpha_settings(contrast: [f64; 3], variation: Variation) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    if variation == Variation::SingletonsAndAll {
        for j in 0..3 {
            if contrast[j] > 0.0 {
                let mut a = [0.0; 3];
                a[j] = contrast[j];
                out.push(a);
            }
        }
    }
    if !out.contains(&contrast) {
        out.push(contrast);
    }
    out
}

/// Body-wave speeds and wavelengths of the background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveReport {
    pub v_p: f64,
    pub v_s: f64,
    pub l_p: f64,
    pub l_s: f64,
}

pub fn wavelengths(lambda0: f64, mu0: f64, rho0: f64, omega: f64) -> Result<WaveReport> {
    for (name, v) in [("lambda0", lambda0), ("mu0", mu0), ("rho0", rho0), ("omega", omega)] {
        if !(v.is_finite() && v > 0.0) {
            return invalid(format!("{name} must be positive, got {v}"));
        }
    }
    let v_p = ((lambda0 + 2.0 * mu0) / rho0).sqrt();
    let v_s = (mu0 / rho0).sqrt();
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(WaveReport {
        v_p,
        v_s,
        l_p: two_pi * v_p / omega,
        l_s: two_pi * v_s / omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_wavelengths() {
        let w = wavelengths(6e5, 6e3, 3e3, 50.0).unwrap();
        assert!((w.l_p - 1.79).abs() <= 0.01, "{}", w.l_p);
        assert!((w.l_s - 0.18).abs() <= 0.01, "{}", w.l_s);
        assert!(w.l_p > w.l_s);
    }

    #[test]
    fn unit_wave_speed() {
        let w = wavelengths(1.0, 1.0, 3.0, 2.0 * std::f64::consts::PI).unwrap();
        assert!((w.v_p - 1.0).abs() < 1e-15);
        assert!((w.l_p - 1.0).abs() < 1e-15);
        assert!(wavelengths(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn settings() {
        let s = alpha_settings([1.0, 2.0, 3.0], Variation::SingletonsAndAll);
        assert_eq!(
            s,
            vec![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [1.0, 2.0, 3.0]]
        );
        assert_eq!(alpha_settings([1.0, 0.0, 0.0], Variation::SingletonsAndAll), vec![[1.0, 0.0, 0.0]]);
        assert_eq!(alpha_settings([1.0, 2.0, 3.0], Variation::AllOnly), vec![[1.0, 2.0, 3.0]]);
    }

    #[test]
    fn threshold_policy_parsing() {
        assert_eq!("theory".parse::<ThresholdPolicy>().unwrap(), ThresholdPolicy::Theory);
        assert_eq!("calibrate".parse::<ThresholdPolicy>().unwrap(), ThresholdPolicy::Calibrate);
        assert_eq!("107".parse::<ThresholdPolicy>().unwrap(), ThresholdPolicy::Explicit(107));
        assert!("many".parse::<ThresholdPolicy>().is_err());
    }
}
