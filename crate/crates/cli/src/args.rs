use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use elastomono::recon::Method;

use crate::error::{CliError, CliResult};

/// Monotonicity-based inclusion detection for time-harmonic elasticity.
#[derive(Debug, Clone, Parser)]
#[command(name = "elastomono", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Solve the forward problems and write the NtD matrices.
    Forward,
    /// Reconstruct with full forward solves per test region.
    ReconstructStandard,
    /// Reconstruct with the linearized test.
    ReconstructLinearized,
    /// Threshold bounds M_min, M_max over a list of noise levels.
    Sweep {
        #[arg(long, value_enum, default_value_t = MethodArg::Linearized)]
        method: MethodArg,
    },
    /// Eigenvalue reports of the test matrices of selected voxels.
    Spectra {
        #[arg(long, value_enum, default_value_t = MethodArg::Linearized)]
        method: MethodArg,
        /// Voxel as `i,j,k`; repeatable. Defaults to the inclusion voxels.
        #[arg(long = "voxel")]
        voxels: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Standard,
    Linearized,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Standard => Method::Standard,
            MethodArg::Linearized => Method::Linearized,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Relative noise level; `sweep` also takes `start:stop:step` or a
    /// comma-separated list.
    #[arg(long, global = true)]
    pub eta: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Threshold policy: `theory`, `calibrate` or an integer.
    #[arg(long, global = true)]
    pub mcap: Option<String>,
    /// Noise bound used for counting instead of the realized one.
    #[arg(long, global = true)]
    pub delta_override: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// NtD cache directory; defaults to `$ELASTOMONO_CACHE` when set.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

/// Noise levels: one value, `start:stop:step` (inclusive) or `a,b,c`.
pub fn parse_eta_list(spec: &str) -> CliResult<Vec<f64>> {
    let num = |s: &str| -> CliResult<f64> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("invalid noise level '{s}'")))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(CliError::Config(format!("noise level must be nonnegative, got {v}")));
        }
        Ok(v)
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (num(start)?, num(stop)?, num(step)?);
            if h <= 0.0 || b < a {
                return Err(CliError::Config(format!("invalid range '{spec}'")));
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            if n > 100_000 {
                return Err(CliError::Config(format!("range '{spec}' has too many points")));
            }
            Ok((0..=n).map(|k| a + k as f64 * h).collect())
        }
        [_] => spec.split(',').map(num).collect(),
        _ => Err(CliError::Config(format!("invalid noise level list '{spec}'"))),
    }
}

pub fn parse_voxel(spec: &str, resolution: [usize; 3]) -> CliResult<[usize; 3]> {
    let parts: Vec<usize> = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("invalid voxel '{spec}', expected i,j,k")))?;
    match parts.as_slice() {
        &[i, j, k] if i < resolution[0] && j < resolution[1] && k < resolution[2] => Ok([i, j, k]),
        &[_, _, _] => Err(CliError::Config(format!(
            "voxel '{spec}' outside the grid {resolution:?}"
        ))),
        _ => Err(CliError::Config(format!("invalid voxel '{spec}', expected i,j,k"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_forms() {
        assert_eq!(parse_eta_list("0.01").unwrap(), vec![0.01]);
        assert_eq!(parse_eta_list("0,0.1").unwrap(), vec![0.0, 0.1]);
        let r = parse_eta_list("0:0.03:0.0025").unwrap();
        assert_eq!(r.len(), 13);
        assert!((r[12] - 0.03).abs() < 1e-15);
        assert!(parse_eta_list("-1").is_err());
        assert!(parse_eta_list("0:1").is_err());
        assert!(parse_eta_list("1:0:0.1").is_err());
    }

    #[test]
    fn voxel_forms() {
        assert_eq!(parse_voxel("1,2,3", [5, 5, 5]).unwrap(), [1, 2, 3]);
        assert!(parse_voxel("1,2,5", [5, 5, 5]).is_err());
        assert!(parse_voxel("1,2", [5, 5, 5]).is_err());
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "elastomono",
            "sweep",
            "--method",
            "standard",
            "--config",
            "a.toml",
            "--eta",
            "0:0.1:0.05",
            "--threads",
            "2",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Sweep { method: MethodArg::Standard }));
        assert_eq!(cli.options.threads, Some(2));
    }
}
