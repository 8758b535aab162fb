//! Flag and config-file parsing into a validated `RunConfig`.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use gsbq_core::dsurface::Segment;
use gsbq_core::evolution::{Monitor, PerturbationKind, ALL_MONITORS};
use gsbq_core::model::{beta_star, Parity, WaveParams};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

pub const OUTPUT_ENV: &str = "GSBQ_OUTPUT_DIR";
pub const DEFAULT_OUTPUT: &str = "gsbq-output";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandName {
    Solve,
    Kernel,
    Functionals,
    Sweep,
    Atlas,
    Classify,
    Evolve,
    Validate,
}

/// Raw command line. Every value flag is optional so that file values can fill the gaps.
#[derive(Debug, Parser)]
#[command(
    name = "gsbq",
    version,
    about = "Solitary waves of the generalized sixth-order Boussinesq equation"
)]
pub struct Cli {
    pub command: CommandName,
    /// Flat JSON object whose keys mirror the flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    /// odd: |u|^{p-1}u, even: |u|^p.
    #[arg(long)]
    pub parity: Option<String>,
    /// Half-length of the periodic box [-L, L).
    #[arg(long = "L", allow_negative_numbers = true)]
    pub half_length: Option<f64>,
    /// Number of grid points (power of two, at least 16).
    #[arg(long)]
    pub n: Option<usize>,
    /// Output directory (default: $GSBQ_OUTPUT_DIR or ./gsbq-output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweep and atlas.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// S1, S2 or ellipse:<k>.
    #[arg(long)]
    pub segment: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Also compute d_cc and classify each sweep point.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub curvature: Option<bool>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    /// scale, direction_i or bandlimited_noise.
    #[arg(long)]
    pub perturbation: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dealias: Option<bool>,
    /// Comma-separated subset of E,Q,Q1,Q2,Q3,orbital.
    #[arg(long)]
    pub monitors: Option<String>,
    #[arg(long)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub x_samples: Option<usize>,
}

/// Merged flag and file values before validation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct Settings {
    beta: Option<f64>,
    c: Option<f64>,
    p: Option<f64>,
    parity: Option<String>,
    #[serde(rename = "L")]
    half_length: Option<f64>,
    n: Option<usize>,
    output: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    max_iterations: Option<usize>,
    segment: Option<String>,
    samples: Option<usize>,
    curvature: Option<bool>,
    resolution: Option<usize>,
    t_final: Option<f64>,
    dt: Option<f64>,
    record_every: Option<usize>,
    perturbation: Option<String>,
    delta: Option<f64>,
    dealias: Option<bool>,
    monitors: Option<String>,
    x_max: Option<f64>,
    x_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSettings {
    pub max_iterations: usize,
    pub dealias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSettings {
    pub segment: Segment,
    pub samples: usize,
    pub curvature: bool,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolveSettings {
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    pub perturbation: PerturbationKind,
    pub delta: f64,
    pub monitors: Vec<Monitor>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSettings {
    pub x_max: f64,
    pub x_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandName,
    pub params: WaveParams,
    pub half_length: f64,
    pub n_points: usize,
    pub output_path: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub solve: SolveSettings,
    pub sweep: SweepSettings,
    pub evolve: EvolveSettings,
    pub kernel: KernelSettings,
}

pub const DEFAULT_BETA: f64 = -1.0;
pub const DEFAULT_C: f64 = 0.0;
pub const DEFAULT_P: f64 = 2.0;
pub const DEFAULT_L: f64 = 200.0;
pub const DEFAULT_N: usize = 4096;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Flags as a JSON object holding only the values that were given.
fn flag_values(cli: &Cli) -> Map<String, Value> {
    let mut m = Map::new();
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    put("beta", cli.beta.map(Value::from));
    put("c", cli.c.map(Value::from));
    put("p", cli.p.map(Value::from));
    put("parity", cli.parity.clone().map(Value::from));
    put("L", cli.half_length.map(Value::from));
    put("n", cli.n.map(Value::from));
    put(
        "output",
        cli.output
            .as_ref()
            .map(|p| Value::from(p.to_string_lossy().into_owned())),
    );
    put("seed", cli.seed.map(Value::from));
    put("workers", cli.workers.map(Value::from));
    put("max-iterations", cli.max_iterations.map(Value::from));
    put("segment", cli.segment.clone().map(Value::from));
    put("samples", cli.samples.map(Value::from));
    put("curvature", cli.curvature.map(Value::from));
    put("resolution", cli.resolution.map(Value::from));
    put("t-final", cli.t_final.map(Value::from));
    put("dt", cli.dt.map(Value::from));
    put("record-every", cli.record_every.map(Value::from));
    put("perturbation", cli.perturbation.clone().map(Value::from));
    put("delta", cli.delta.map(Value::from));
    put("dealias", cli.dealias.map(Value::from));
    put("monitors", cli.monitors.clone().map(Value::from));
    put("x-max", cli.x_max.map(Value::from));
    put("x-samples", cli.x_samples.map(Value::from));
    m
}

/// Reads a flat JSON config; `_` in keys is accepted for `-`.
pub fn read_config_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("config: cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config: invalid JSON in {}: {e}", path.display())))?;
    let Value::Object(obj) = value else {
        return Err(usage("config: expected a single JSON object"));
    };
    Ok(obj
        .into_iter()
        .map(|(k, v)| {
            let k = if k == "L" { k } else { k.replace('_', "-") };
            (k, v)
        })
        .collect())
}

/// Parses an argument list (without the program name) plus an optional config file.
pub fn parse_config<I, S>(args: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv =
        std::iter::once(std::ffi::OsString::from("gsbq")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(CliError::Clap)?;
    resolve(&cli, std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
}

/// Merges the file under the flags and validates the result.
pub fn resolve(cli: &Cli, env_output: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let mut merged = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => Map::new(),
    };
    merged.extend(flag_values(cli));
    let settings: Settings =
        serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config: {e}")))?;
    validate(cli.command, settings, env_output)
}

fn finite(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be finite, got {v}")))
    }
}

fn validate(
    command: CommandName,
    s: Settings,
    env_output: Option<PathBuf>,
) -> Result<RunConfig, CliError> {
    let beta = finite("beta", s.beta.unwrap_or(DEFAULT_BETA))?;
    let c = finite("c", s.c.unwrap_or(DEFAULT_C))?;
    let p = finite("p", s.p.unwrap_or(DEFAULT_P))?;
    let parity: Parity = match &s.parity {
        Some(text) => text
            .parse()
            .map_err(|e: String| usage(format!("parity: {e}")))?,
        None => Parity::Odd,
    };
    if !(p > 1.0) {
        return Err(usage(format!("p out of range: {p} (need p > 1)")));
    }
    // classify also reports on points outside the existence domain
    if command != CommandName::Classify {
        if !(c * c < 1.0) {
            return Err(usage(format!("c out of range: {c} (need c^2 < 1)")));
        }
        if !(beta < beta_star(c)) {
            return Err(usage(format!(
                "beta out of range: {beta} (need beta < {})",
                beta_star(c)
            )));
        }
    }
    let params = WaveParams { beta, c, p, parity };

    let half_length = finite("L", s.half_length.unwrap_or(DEFAULT_L))?;
    if !(half_length > 0.0) {
        return Err(usage(format!("L out of range: {half_length} (need L > 0)")));
    }
    let n_points = s.n.unwrap_or(DEFAULT_N);
    if n_points < 16 || !n_points.is_power_of_two() {
        return Err(usage(format!(
            "n out of range: {n_points} (need a power of two >= 16)"
        )));
    }
    if s.workers == Some(0) {
        return Err(usage("workers out of range: 0"));
    }

    let max_iterations = s.max_iterations.unwrap_or(1000);
    if max_iterations == 0 {
        return Err(usage("max-iterations out of range: 0"));
    }
    let segment: Segment = match &s.segment {
        Some(text) => text
            .parse()
            .map_err(|e: String| usage(format!("segment: {e}")))?,
        None => Segment::S1,
    };
    let samples = s.samples.unwrap_or(31);
    if samples == 0 {
        return Err(usage("samples out of range: 0"));
    }
    let resolution = s.resolution.unwrap_or(21);
    if resolution < 2 {
        return Err(usage(format!(
            "resolution out of range: {resolution} (need >= 2)"
        )));
    }

    let t_final = finite("t-final", s.t_final.unwrap_or(1.0))?;
    let dt = finite("dt", s.dt.unwrap_or(1e-3))?;
    if !(dt > 0.0) || !(t_final >= dt) {
        return Err(usage(format!(
            "dt/t-final out of range: dt = {dt}, t-final = {t_final}"
        )));
    }
    let record_every = s.record_every.unwrap_or(100);
    if record_every == 0 {
        return Err(usage("record-every out of range: 0"));
    }
    let perturbation: PerturbationKind = match &s.perturbation {
        Some(text) => text
            .parse()
            .map_err(|e: String| usage(format!("perturbation: {e}")))?,
        None => PerturbationKind::Scale,
    };
    let delta = finite("delta", s.delta.unwrap_or(0.0))?;
    let monitors = match &s.monitors {
        Some(text) => text
            .split(',')
            .map(|m| {
                m.trim()
                    .parse::<Monitor>()
                    .map_err(|e| usage(format!("monitors: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => ALL_MONITORS.to_vec(),
    };

    let x_max = finite("x-max", s.x_max.unwrap_or(10.0))?;
    let x_samples = s.x_samples.unwrap_or(101);
    if !(x_max > 0.0) || x_samples < 2 {
        return Err(usage(format!(
            "x-max/x-samples out of range: {x_max}, {x_samples}"
        )));
    }

    let output_path = s
        .output
        .or(env_output)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));

    Ok(RunConfig {
        command,
        params,
        half_length,
        n_points,
        output_path,
        seed: s.seed.unwrap_or(0),
        workers: s.workers,
        solve: SolveSettings {
            max_iterations,
            dealias: s.dealias.unwrap_or(true),
        },
        sweep: SweepSettings {
            segment,
            samples,
            curvature: s.curvature.unwrap_or(false),
            resolution,
        },
        evolve: EvolveSettings {
            t_final,
            dt,
            record_every,
            perturbation,
            delta,
            monitors,
        },
        kernel: KernelSettings { x_max, x_samples },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        let cli = Cli::try_parse_from(std::iter::once("gsbq").chain(args.iter().copied()))
            .map_err(CliError::Clap)?;
        resolve(&cli, None)
    }

    #[test]
    fn echoes_flags() {
        let cfg = parse(&["solve", "--beta", "-2.1667", "--c", "0", "--p", "2"]).unwrap();
        assert_eq!(cfg.command, CommandName::Solve);
        assert_eq!(cfg.params.beta, -2.1667);
        assert_eq!(cfg.params.c, 0.0);
        assert_eq!(cfg.params.p, 2.0);
    }

    #[test]
    fn defaults() {
        let cfg = parse(&["solve"]).unwrap();
        assert_eq!(cfg.half_length, 200.0);
        assert_eq!(cfg.n_points, 4096);
        assert_eq!(cfg.params.p, 2.0);
        assert_eq!(cfg.params.parity, Parity::Odd);
        assert_eq!(cfg.output_path, PathBuf::from(DEFAULT_OUTPUT));
    }

    #[test]
    fn c_out_of_range() {
        match parse(&["solve", "--c", "1.5"]) {
            Err(CliError::Usage(msg)) => assert!(msg.contains("c out of range"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classify_accepts_outside_points() {
        let cfg = parse(&["classify", "--c", "1.5"]).unwrap();
        assert_eq!(cfg.params.c, 1.5);
    }

    #[test]
    fn bad_values_name_the_key() {
        for (args, key) in [
            (vec!["solve", "--n", "100"], "n out of range"),
            (vec!["solve", "--beta", "2.5"], "beta out of range"),
            (vec!["solve", "--p", "1"], "p out of range"),
            (vec!["solve", "--parity", "both"], "parity"),
            (vec!["sweep", "--segment", "S3"], "segment"),
            (vec!["evolve", "--perturbation", "kick"], "perturbation"),
            (vec!["evolve", "--monitors", "E,Z"], "monitors"),
        ] {
            match parse(&args) {
                Err(CliError::Usage(msg)) => assert!(msg.contains(key), "{msg}"),
                other => panic!("{args:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn env_output_is_the_fallback() {
        let cli = Cli::try_parse_from(["gsbq", "solve"]).unwrap();
        let cfg = resolve(&cli, Some(PathBuf::from("/tmp/from-env"))).unwrap();
        assert_eq!(cfg.output_path, PathBuf::from("/tmp/from-env"));
        let cli = Cli::try_parse_from(["gsbq", "solve", "--output", "here"]).unwrap();
        let cfg = resolve(&cli, Some(PathBuf::from("/tmp/from-env"))).unwrap();
        assert_eq!(cfg.output_path, PathBuf::from("here"));
    }

    #[test]
    fn boolean_flags() {
        let cfg = parse(&["sweep", "--curvature"]).unwrap();
        assert!(cfg.sweep.curvature);
        let cfg = parse(&["sweep", "--dealias", "false"]).unwrap();
        assert!(!cfg.solve.dealias);
    }
}
