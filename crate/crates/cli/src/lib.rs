//! Command-line front end: `fuse`, `evaluate`, `synth` and `sweep`.
//!
//! Every command that writes files also writes a JSON run manifest next to
//! its main output recording the resolved configuration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use stnlffm_core::series::{read_series, sweep, sweep_csv, write_series};
use stnlffm_core::{
    evaluate, generate_series, predict_image, read_raster, resample::upsample_cubic, write_raster,
    DateTag, ErrorCategory, FusionConfig, FusionMode, FusionTask, RasterGrid, ReferencePair,
    SceneSpec,
};
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_GEOMETRY: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] stnlffm_core::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Io => EXIT_IO,
                ErrorCategory::Geometry => EXIT_GEOMETRY,
                ErrorCategory::Config => EXIT_USAGE,
                ErrorCategory::Numeric => EXIT_NUMERIC,
            },
        }
    }

    pub fn category(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "config",
            EXIT_IO => "io",
            EXIT_GEOMETRY => "geometry",
            _ => "numeric",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Parser)]
#[command(name = "stnlffm", version, about = "Spatiotemporal fusion of fine and coarse reflectance rasters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predict the fine image at a date from reference pairs and a coarse image.
    Fuse(FuseArgs),
    /// Compare a predicted raster with an observed one (RMSE, R²).
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dated series from a scene spec.
    Synth(SynthArgs),
    /// Symmetric time-interval sweep over a dated series.
    Sweep(SweepArgs),
}

/// Algorithm parameters. Flags override the config file, which overrides the
/// built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct FusionFlags {
    /// TOML or JSON file with any subset of the configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<FusionMode>,
    /// Similar-pixel search window (odd, fine pixels).
    #[arg(long)]
    pub window: Option<usize>,
    /// Whole-weight window; defaults to the search window.
    #[arg(long)]
    pub whole_window: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub kernel_sigma: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub sigma_cc: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub tile: Option<usize>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<FusionMode, String> {
    s.parse().map_err(|e: stnlffm_core::Error| e.to_string())
}

impl FusionFlags {
    pub fn resolve(&self) -> Result<FusionConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => FusionConfig::default(),
        };
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.window {
            cfg.similarity.search_window = v;
            cfg.weights.whole_window = v;
        }
        if let Some(v) = self.whole_window {
            cfg.weights.whole_window = v;
        }
        if let Some(v) = self.patch {
            cfg.weights.patch_size = v;
        }
        if let Some(v) = self.h {
            cfg.weights.h = v;
        }
        if let Some(v) = self.kernel_sigma {
            cfg.weights.kernel_sigma = v;
        }
        if let Some(v) = self.d {
            cfg.similarity.d = v;
        }
        if let Some(v) = self.classes {
            cfg.similarity.class_count = v;
        }
        if let Some(v) = self.sigma_cc {
            cfg.similarity.sigma_cc = v;
        }
        if let Some(v) = self.gamma {
            cfg.regression.gamma = v;
        }
        if let Some(v) = self.cap {
            cfg.similarity.cap = v;
        }
        if let Some(v) = self.tile {
            cfg.tile_size = v;
        }
        if let Some(v) = self.threads {
            cfg.thread_hint = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_config(path: &Path) -> Result<FusionConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Ordinal day number or an ISO `YYYY-MM-DD` date (days from the common era).
pub fn parse_date(s: &str) -> std::result::Result<DateTag, String> {
    if let Ok(v) = s.parse::<i64>() {
        return Ok(DateTag(v));
    }
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| DateTag(chrono::Datelike::num_days_from_ce(&d) as i64))
        .map_err(|_| format!("{s:?} is neither a day number nor YYYY-MM-DD"))
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Reference pair: fine raster then coarse raster (repeatable).
    #[arg(long = "ref", num_args = 2, value_names = ["FINE", "COARSE"], required = true)]
    pub refs: Vec<PathBuf>,
    /// Date of each reference pair, in the same order (default 1, 2, ...).
    #[arg(long = "ref-date", value_parser = parse_date)]
    pub ref_dates: Vec<DateTag>,
    /// Coarse raster at the prediction date.
    #[arg(long)]
    pub coarse: PathBuf,
    /// Prediction date (default 0).
    #[arg(long, value_parser = parse_date)]
    pub pred_date: Option<DateTag>,
    #[arg(long)]
    pub out: PathBuf,
    /// Coarse inputs are at native resolution; upsample by this factor.
    #[arg(long, default_value_t = 1)]
    pub upsample_factor: usize,
    #[command(flatten)]
    pub fusion: FusionFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predicted: PathBuf,
    #[arg(long)]
    pub observed: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Comma-separated acquisition days.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dates: Vec<i64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Series index written by `synth` (odd number of dates).
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "stnlffm,starfm")]
    pub modes: Vec<FusionMode>,
    /// Output CSV: interval_days, mode, mean_rmse, mean_r2.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fusion: FusionFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<FusionConfig>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub duration_secs: f64,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub parallel_build: bool,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            duration_secs: 0.0,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            parallel_build: stnlffm_core::parallel_enabled(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn write_next_to(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::path_for(output);
        write_text(
            &path,
            &serde_json::to_string_pretty(self).expect("manifest serializes"),
        )?;
        Ok(path)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fuse(a) => cmd_fuse(&a).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| ()),
    }
}

fn load_coarse(path: &Path, factor: usize) -> Result<RasterGrid> {
    let g = read_raster(path)?;
    Ok(if factor > 1 { upsample_cubic(&g, factor)? } else { g })
}

pub fn cmd_fuse(args: &FuseArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let config = args.fusion.resolve()?;
    if args.upsample_factor == 0 {
        return Err(CliError::Usage("--upsample-factor must be >= 1".into()));
    }
    let n = args.refs.len() / 2;
    if !args.ref_dates.is_empty() && args.ref_dates.len() != n {
        return Err(CliError::Usage(format!(
            "{} --ref-date values for {n} reference pairs",
            args.ref_dates.len()
        )));
    }
    let mut refs = Vec::with_capacity(n);
    for (i, chunk) in args.refs.chunks(2).enumerate() {
        let date = args.ref_dates.get(i).copied().unwrap_or(DateTag(i as i64 + 1));
        let fine = read_raster(&chunk[0])?;
        let coarse = load_coarse(&chunk[1], args.upsample_factor)?;
        refs.push(ReferencePair::new(date, fine, coarse)?);
    }
    let coarse_p = load_coarse(&args.coarse, args.upsample_factor)?;
    let task = FusionTask::new(refs, coarse_p, args.pred_date.unwrap_or(DateTag(0)))?;
    let fuse_start = Instant::now();
    let out = predict_image(&task, &config)?;
    let fuse_secs = fuse_start.elapsed().as_secs_f64();
    write_raster(&out, &args.out)?;

    let mut manifest = RunManifest::new("fuse");
    manifest.config = Some(config);
    manifest.inputs = args.refs.clone();
    manifest.inputs.push(args.coarse.clone());
    manifest.outputs = vec![args.out.clone()];
    manifest.extra = serde_json::json!({
        "reference_dates": task.references.iter().map(|r| r.date).collect::<Vec<_>>(),
        "prediction_date": task.prediction_date,
        "upsample_factor": args.upsample_factor,
        "geometry": [out.width(), out.height(), out.bands()],
        "predict_secs": fuse_secs,
    });
    manifest.duration_secs = start.elapsed().as_secs_f64();
    manifest.write_next_to(&args.out)?;
    Ok(manifest)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<stnlffm_core::EvalReport> {
    let start = Instant::now();
    let predicted = read_raster(&args.predicted)?;
    let observed = read_raster(&args.observed)?;
    let report = evaluate(&predicted, &observed)?;
    let mut outputs = Vec::new();
    if let Some(p) = &args.csv {
        write_text(p, &report.to_csv())?;
        outputs.push(p.clone());
    }
    if let Some(p) = &args.json {
        write_text(p, &report.to_json())?;
        outputs.push(p.clone());
    }
    if outputs.is_empty() {
        print!("{}", report.to_csv());
    } else {
        let mut manifest = RunManifest::new("evaluate");
        manifest.inputs = vec![args.predicted.clone(), args.observed.clone()];
        manifest.outputs = outputs.clone();
        manifest.duration_secs = start.elapsed().as_secs_f64();
        manifest.write_next_to(&outputs[0])?;
    }
    Ok(report)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf> {
    let start = Instant::now();
    let text = std::fs::read_to_string(&args.spec).map_err(|source| CliError::Io {
        path: args.spec.clone(),
        source,
    })?;
    let spec: SceneSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("scene spec {}: {e}", args.spec.display())))?;
    let frames = generate_series(&spec, &args.dates)?;
    let index = write_series(&frames, &args.out_dir)?;
    let mut manifest = RunManifest::new("synth");
    manifest.inputs = vec![args.spec.clone()];
    manifest.outputs = vec![index.clone()];
    manifest.seed = Some(spec.seed);
    manifest.extra = serde_json::json!({ "dates": args.dates, "spec": spec });
    manifest.duration_secs = start.elapsed().as_secs_f64();
    manifest.write_next_to(&index)?;
    Ok(index)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<stnlffm_core::SweepRow>> {
    let start = Instant::now();
    let config = args.fusion.resolve()?;
    let pairs = read_series(&args.series)?;
    let rows = sweep(&pairs, &args.modes, &config)?;
    write_text(&args.out, &sweep_csv(&rows))?;
    let mut manifest = RunManifest::new("sweep");
    manifest.config = Some(config);
    manifest.inputs = vec![args.series.clone()];
    manifest.outputs = vec![args.out.clone()];
    manifest.extra = serde_json::json!({ "modes": args.modes });
    manifest.duration_secs = start.elapsed().as_secs_f64();
    manifest.write_next_to(&args.out)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dates_parse() {
        assert_eq!(parse_date("17").unwrap(), DateTag(17));
        let a = parse_date("2004-12-05").unwrap();
        let b = parse_date("2004-12-21").unwrap();
        assert_eq!(b.0 - a.0, 16);
        assert!(parse_date("yesterday").is_err());
    }

    #[test]
    fn flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "mode = \"starfm_special_case\"\n[regression]\ngamma = 0.5\n[similarity]\ncap = 12\n").unwrap();
        let flags = FusionFlags {
            config: Some(path.clone()),
            gamma: Some(2.0),
            ..Default::default()
        };
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.mode, FusionMode::StarfmSpecialCase);
        assert_eq!(cfg.regression.gamma, 2.0);
        assert_eq!(cfg.similarity.cap, 12);
        assert_eq!(cfg.weights.patch_size, 5);

        let bad = FusionFlags {
            window: Some(4),
            ..Default::default()
        };
        assert_eq!(bad.resolve().unwrap_err().exit_code(), EXIT_USAGE);
    }

    #[test]
    fn exit_codes() {
        let io = CliError::Core(stnlffm_core::Error::NoValidPixels);
        assert_eq!(io.exit_code(), EXIT_GEOMETRY);
        assert_eq!(CliError::Core(stnlffm_core::Error::Numeric("x".into())).exit_code(), EXIT_NUMERIC);
        assert_eq!(CliError::Usage("x".into()).category(), "config");
    }
}
