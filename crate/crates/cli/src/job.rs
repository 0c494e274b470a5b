use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use hessian_spectra::landscape::{DEFAULT_BATCH_LIMIT, DEFAULT_EPS_RANGE, DEFAULT_RESOLUTION};
use hessian_spectra::spectral::density::DEFAULT_GRID_POINTS;
use hessian_spectra::spectral::{PowerConfig, ProbeDistribution, Sigma};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Top-k eigenpairs by deflated power iteration.
    Eig,
    /// Hutchinson trace estimate with running statistics.
    Trace,
    /// Stochastic Lanczos quadrature spectral density.
    Density,
    /// Loss surface over the top-two eigenvector plane.
    Landscape,
    /// Compare every estimator against the dense oracle.
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::Trace => "trace",
            Command::Density => "density",
            Command::Landscape => "landscape",
            Command::Check => "check",
        }
    }
}

/// `auto` or a positive kernel width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaArg(pub Sigma);

impl FromStr for SigmaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(SigmaArg(Sigma::Auto));
        }
        match s.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(SigmaArg(Sigma::Fixed(x))),
            _ => Err(format!("sigma must be `auto` or a positive number, got `{s}`")),
        }
    }
}

impl<'de> Deserialize<'de> for SigmaArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => x.to_string().parse(),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// `lo,hi`
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct EpsRange(pub f64, pub f64);

impl FromStr for EpsRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (lo, hi) = s.split_once(',').ok_or_else(|| format!("eps range must look like `lo,hi`, got `{s}`"))?;
        let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("bad eps range bound `{x}`: {e}"));
        Ok(EpsRange(parse(lo)?, parse(hi)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionArg {
    Rademacher,
    Gaussian,
}

impl From<DistributionArg> for ProbeDistribution {
    fn from(d: DistributionArg) -> Self {
        match d {
            DistributionArg::Rademacher => ProbeDistribution::Rademacher,
            DistributionArg::Gaussian => ProbeDistribution::Gaussian,
        }
    }
}

/// Job parameters. Every field can come from the config's `job` section or
/// from the matching long flag; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobDefaults {
    /// Master seed for every random draw in the job.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of eigenpairs for `eig`.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Number of random probes.
    #[arg(long)]
    pub n_v: Option<usize>,
    /// Lanczos steps per probe (capped at the operator dimension).
    #[arg(long)]
    pub q: Option<usize>,
    /// Density kernel width, or `auto`.
    #[arg(long)]
    pub sigma: Option<SigmaArg>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Symmetric perturbation range `lo,hi` for `landscape`.
    #[arg(long, allow_hyphen_values = true)]
    pub eps_range: Option<EpsRange>,
    /// Odd grid resolution per landscape axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Restrict the Hessian to these parameter blocks (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    pub stage: Option<Vec<String>>,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output path prefix; files are written as `<prefix>.<command>.<ext>`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Power-iteration tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum)]
    pub distribution: Option<DistributionArg>,
    /// Write eigenvectors to `<prefix>.eigvecs.csv`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub save_vectors: Option<bool>,
    /// Largest batch the landscape loss is evaluated on.
    #[arg(long)]
    pub batch_limit: Option<usize>,
}

impl JobDefaults {
    /// Fields set in `self` win over `base`.
    pub fn over(self, base: JobDefaults) -> JobDefaults {
        JobDefaults {
            seed: self.seed.or(base.seed),
            top_k: self.top_k.or(base.top_k),
            n_v: self.n_v.or(base.n_v),
            q: self.q.or(base.q),
            sigma: self.sigma.or(base.sigma),
            grid_points: self.grid_points.or(base.grid_points),
            eps_range: self.eps_range.or(base.eps_range),
            resolution: self.resolution.or(base.resolution),
            stage: self.stage.or(base.stage),
            threads: self.threads.or(base.threads),
            output: self.output.or(base.output),
            tol: self.tol.or(base.tol),
            max_iter: self.max_iter.or(base.max_iter),
            distribution: self.distribution.or(base.distribution),
            save_vectors: self.save_vectors.or(base.save_vectors),
            batch_limit: self.batch_limit.or(base.batch_limit),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hessian-spectra", version, about = "Matrix-free Hessian spectral analysis of small networks")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub job: JobDefaults,
}

/// A fully resolved job.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobSpec {
    pub command: Command,
    pub config: PathBuf,
    pub seed: u64,
    pub top_k: usize,
    pub n_v: usize,
    pub q: usize,
    #[serde(serialize_with = "ser_sigma")]
    pub sigma: Sigma,
    pub grid_points: usize,
    pub eps_range: (f64, f64),
    pub resolution: usize,
    pub stage: Option<Vec<String>>,
    pub threads: usize,
    pub output: PathBuf,
    pub tol: f64,
    pub max_iter: usize,
    pub distribution: ProbeDistribution,
    pub save_vectors: bool,
    pub batch_limit: usize,
}

fn ser_sigma<S: serde::Serializer>(s: &Sigma, ser: S) -> Result<S::Ok, S::Error> {
    match s {
        Sigma::Auto => ser.serialize_str("auto"),
        Sigma::Fixed(x) => ser.serialize_f64(*x),
    }
}

impl JobSpec {
    pub fn resolve(command: Command, config: PathBuf, job: JobDefaults) -> Result<Self, CliError> {
        let power = PowerConfig::default();
        let spec = JobSpec {
            command,
            config,
            seed: job.seed.unwrap_or(0),
            top_k: job.top_k.unwrap_or(2),
            n_v: job.n_v.unwrap_or(100),
            q: job.q.unwrap_or(80),
            sigma: job.sigma.map(|s| s.0).unwrap_or_default(),
            grid_points: job.grid_points.unwrap_or(DEFAULT_GRID_POINTS),
            eps_range: job.eps_range.map(|r| (r.0, r.1)).unwrap_or(DEFAULT_EPS_RANGE),
            resolution: job.resolution.unwrap_or(DEFAULT_RESOLUTION),
            stage: job.stage,
            threads: job.threads.unwrap_or(1),
            output: job.output.unwrap_or_else(|| PathBuf::from("hessian-spectra")),
            tol: job.tol.unwrap_or(power.tol),
            max_iter: job.max_iter.unwrap_or(power.max_iter),
            distribution: job.distribution.map(Into::into).unwrap_or_default(),
            save_vectors: job.save_vectors.unwrap_or(false),
            batch_limit: job.batch_limit.unwrap_or(DEFAULT_BATCH_LIMIT),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("top_k", self.top_k),
            ("n_v", self.n_v),
            ("q", self.q),
            ("threads", self.threads),
            ("max_iter", self.max_iter),
            ("batch_limit", self.batch_limit),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CliError::Usage(format!("`{name}` must be positive")));
            }
        }
        if self.grid_points < 2 {
            return Err(CliError::Usage("`grid_points` must be at least 2".into()));
        }
        if !(self.tol > 0.0) {
            return Err(CliError::Usage(format!("`tol` must be positive, got {}", self.tol)));
        }
        if self.resolution < 3 || self.resolution.is_multiple_of(2) {
            return Err(CliError::Usage(format!("`resolution` must be odd and at least 3, got {}", self.resolution)));
        }
        let (lo, hi) = self.eps_range;
        if !(hi > 0.0) || lo != -hi {
            return Err(CliError::Usage(format!("`eps_range` must be symmetric about zero, got ({lo}, {hi})")));
        }
        if matches!(&self.stage, Some(s) if s.is_empty()) {
            return Err(CliError::Usage("`stage` lists no blocks".into()));
        }
        Ok(())
    }

    pub fn power_config(&self) -> PowerConfig {
        PowerConfig { tol: self.tol, max_iter: self.max_iter, seed: self.seed }
    }

    /// `<prefix>.<suffix>`
    pub fn path(&self, suffix: &str) -> PathBuf {
        let mut s = self.output.clone().into_os_string();
        s.push(".");
        s.push(suffix);
        PathBuf::from(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "hessian-spectra",
            "trace",
            "--config",
            "c.json",
            "--n-v",
            "7",
            "--sigma",
            "0.5",
            "--stage",
            "a,b",
            "--eps-range",
            "-1,1",
        ])
        .unwrap();
        let base: JobDefaults = serde_json::from_str(r#"{"n_v": 3, "seed": 9, "sigma": "auto"}"#).unwrap();
        let spec = JobSpec::resolve(cli.command, cli.config, cli.job.over(base)).unwrap();
        assert_eq!(spec.n_v, 7);
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.sigma, Sigma::Fixed(0.5));
        assert_eq!(spec.stage, Some(vec!["a".to_string(), "b".to_string()]));
        assert_eq!(spec.eps_range, (-1.0, 1.0));
        assert_eq!(spec.path("trace.csv"), PathBuf::from("hessian-spectra.trace.csv"));
    }

    #[test]
    fn json_sigma_accepts_numbers() {
        let d: JobDefaults = serde_json::from_str(r#"{"sigma": 0.25, "eps_range": [-0.2, 0.2]}"#).unwrap();
        assert_eq!(d.sigma, Some(SigmaArg(Sigma::Fixed(0.25))));
        assert_eq!(d.eps_range, Some(EpsRange(-0.2, 0.2)));
        assert!(serde_json::from_str::<JobDefaults>(r#"{"sigma": -1}"#).is_err());
        assert!(serde_json::from_str::<JobDefaults>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            JobDefaults { n_v: Some(0), ..Default::default() },
            JobDefaults { resolution: Some(4), ..Default::default() },
            JobDefaults { eps_range: Some(EpsRange(-0.1, 0.5)), ..Default::default() },
            JobDefaults { tol: Some(0.0), ..Default::default() },
            JobDefaults { stage: Some(vec![]), ..Default::default() },
        ];
        for job in bad {
            assert!(matches!(JobSpec::resolve(Command::Eig, "c".into(), job), Err(CliError::Usage(_))));
        }
    }
}
