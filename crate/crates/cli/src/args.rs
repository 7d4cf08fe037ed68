use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ppd::DecodingConfig;

use crate::Failure;

#[derive(Parser)]
#[command(name = "ppd", version, about = "Pipelined early-prediction decoding: latency/compute analysis, simulation and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Expected latency and compute for one configuration
    Analyze(AnalyzeArgs),
    /// Trade-off curve over a grid of k and p values
    Sweep(SweepArgs),
    /// Monte Carlo estimate of latency, compute and run count
    Simulate(SimulateArgs),
    /// Build, render and verify a schedule timeline
    Schedule(ScheduleArgs),
    /// Match rate of a JSONL prediction trace
    Matchrate(MatchRateArgs),
    /// Randomized check that pipelined decoding reproduces greedy output
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum GanttFormat {
    Text,
    Csv,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum XAxis {
    /// compute units per time unit
    TimeUnit,
    /// compute per token
    Token,
}

/// Decoding configuration from flags, optionally layered over a JSON file
/// with keys `d`, `d_bar`, `k`, `ell`, `p_correct`.
#[derive(Args, Clone)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long)]
    pub dbar: Option<u32>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub l: Option<u32>,
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(serde::Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    d: Option<u32>,
    d_bar: Option<u32>,
    k: Option<u32>,
    ell: Option<u32>,
    p_correct: Option<f64>,
}

impl ConfigArgs {
    fn merged(&self) -> Result<(DecodingConfig, Option<f64>), Failure> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str::<ConfigFile>(&text)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let need = |v: Option<u32>, name: &str| v.ok_or_else(|| Failure::Usage(format!("missing --{name}")));
        let cfg = DecodingConfig::new(
            need(self.d.or(file.d), "d")?,
            need(self.dbar.or(file.d_bar), "dbar")?,
            need(self.k.or(file.k), "k")?,
            need(self.l.or(file.ell), "l")?,
        );
        Ok((cfg, self.p.or(file.p_correct)))
    }

    /// Full configuration; `p` is required.
    pub fn resolve(&self, theorem_regime: bool) -> Result<DecodingConfig, Failure> {
        let (cfg, p) = self.merged()?;
        let p = p.ok_or_else(|| Failure::Usage("missing --p".into()))?;
        Ok(cfg.with_p(p).validate(theorem_regime)?)
    }

    pub fn resolve_without_p(&self, theorem_regime: bool) -> Result<DecodingConfig, Failure> {
        let (mut cfg, p) = self.merged()?;
        cfg.p_correct = p;
        Ok(cfg.validate(theorem_regime)?)
    }
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub d: u32,
    #[arg(long)]
    pub dbar: u32,
    /// Tokens to generate; omit for the large-ℓ limit
    #[arg(long)]
    pub l: Option<u32>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub k_list: Vec<u32>,
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["p_from", "p_to", "p_steps"])]
    pub p_list: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    pub p_from: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p_to: f64,
    #[arg(long, default_value_t = 21)]
    pub p_steps: u32,
    /// CSV destination (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "time-unit")]
    pub x_axis: XAxis,
}

impl SweepArgs {
    pub fn p_grid(&self) -> Result<Vec<f64>, Failure> {
        if let Some(list) = &self.p_list {
            return Ok(list.clone());
        }
        match self.p_steps {
            0 => Ok(Vec::new()),
            1 => Ok(vec![self.p_from]),
            n => Ok((0..n)
                .map(|i| self.p_from + (self.p_to - self.p_from) * f64::from(i) / f64::from(n - 1))
                .collect()),
        }
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Match outcomes as a T/F string of length l − 1
    #[arg(long)]
    pub matches: Option<String>,
    /// Seed for sampling matches from --p when --matches is absent
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    pub gantt: GanttFormat,
    /// Destination for the timeline artifact (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct MatchRateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: u32,
    /// Bucket width in token positions
    #[arg(long)]
    pub bucket: Option<u32>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Forecast latency/compute at p̂ (needs --d, --dbar, --l)
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long)]
    pub dbar: Option<u32>,
    #[arg(long)]
    pub l: Option<u32>,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    pub instances: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "4,16,64")]
    pub vocab: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "8,40")]
    pub depths: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    pub k_list: Vec<u32>,
    #[arg(long, default_value_t = 32)]
    pub max_l: u32,
}
