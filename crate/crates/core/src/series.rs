//! Predictions over dated series: bracketing reconstruction and the
//! symmetric time-interval sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport};
use crate::fusion::{predict_image, FusionConfig, FusionMode, FusionTask};
use crate::io::{read_raster, write_raster};
use crate::raster::{DateTag, RasterGrid, ReferencePair};
use crate::synth::SeriesFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesProtocol {
    /// Predict each interior date from its immediate neighbours.
    NearestBracketing,
    /// Predict the middle date from pairs at increasing symmetric offsets.
    SymmetricSweep,
}

#[derive(Debug, Clone)]
pub struct DatedGrid {
    pub date: DateTag,
    pub grid: RasterGrid,
}

#[derive(Debug, Clone)]
pub struct SeriesPrediction {
    pub date: DateTag,
    pub reference_dates: Vec<DateTag>,
    /// Mean distance in days from the prediction date to its references.
    pub interval_days: f64,
    pub prediction: RasterGrid,
    /// Against the observed fine image at the prediction date.
    pub report: EvalReport,
}

fn check_ordered(pairs: &[ReferencePair]) -> Result<()> {
    if pairs.windows(2).any(|w| w[1].date <= w[0].date) {
        return Err(Error::Series(
            "reference pairs must be in strictly increasing date order".into(),
        ));
    }
    Ok(())
}

fn run_one(
    pairs: &[ReferencePair],
    coarse_series: &[DatedGrid],
    target: usize,
    refs: [usize; 2],
    config: &FusionConfig,
) -> Result<SeriesPrediction> {
    let at = &pairs[target];
    let coarse_p = coarse_series
        .iter()
        .find(|c| c.date == at.date)
        .map(|c| c.grid.clone())
        .unwrap_or_else(|| at.coarse.clone());
    let task = FusionTask::new(
        refs.iter().map(|&i| pairs[i].clone()).collect(),
        coarse_p,
        at.date,
    )?;
    let prediction = predict_image(&task, config)?;
    let report = evaluate(&prediction, &at.fine)?;
    let interval_days = refs
        .iter()
        .map(|&i| (pairs[i].date.0 - at.date.0).abs() as f64)
        .sum::<f64>()
        / refs.len() as f64;
    Ok(SeriesPrediction {
        date: at.date,
        reference_dates: refs.iter().map(|&i| pairs[i].date).collect(),
        interval_days,
        prediction,
        report,
    })
}

/// Runs `protocol` over `pairs` (strictly increasing dates). The coarse image
/// at each prediction date is taken from `coarse_series` when it has that
/// date and from the pair itself otherwise.
pub fn predict_series(
    pairs: &[ReferencePair],
    coarse_series: &[DatedGrid],
    protocol: SeriesProtocol,
    config: &FusionConfig,
) -> Result<Vec<SeriesPrediction>> {
    check_ordered(pairs)?;
    match protocol {
        SeriesProtocol::NearestBracketing => {
            if pairs.len() < 3 {
                return Err(Error::Series(format!(
                    "nearest bracketing needs >= 3 dated pairs, got {}",
                    pairs.len()
                )));
            }
            (1..pairs.len() - 1)
                .map(|j| run_one(pairs, coarse_series, j, [j - 1, j + 1], config))
                .collect()
        }
        SeriesProtocol::SymmetricSweep => {
            if pairs.len() < 3 || pairs.len() % 2 == 0 {
                return Err(Error::Series(format!(
                    "symmetric sweep needs an odd count >= 3 with a middle date, got {}",
                    pairs.len()
                )));
            }
            let mid = pairs.len() / 2;
            (1..=mid)
                .map(|d| run_one(pairs, coarse_series, mid, [mid - d, mid + d], config))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub interval_days: f64,
    pub mode: FusionMode,
    pub mean_rmse: f64,
    pub mean_r2: Option<f64>,
}

/// Symmetric sweep for each mode, in the order given.
pub fn sweep(
    pairs: &[ReferencePair],
    modes: &[FusionMode],
    config: &FusionConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &mode in modes {
        let cfg = FusionConfig {
            mode,
            ..config.clone()
        };
        for p in predict_series(pairs, &[], SeriesProtocol::SymmetricSweep, &cfg)? {
            rows.push(SweepRow {
                interval_days: p.interval_days,
                mode,
                mean_rmse: p.report.mean_rmse,
                mean_r2: p.report.mean_r_squared,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("interval_days,mode,mean_rmse,mean_r2\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.10},{}\n",
            r.interval_days,
            r.mode,
            r.mean_rmse,
            r.mean_r2.map(|v| format!("{v:.10}")).unwrap_or_default()
        ));
    }
    out
}

/// On-disk listing of a dated series, paths relative to the index file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesIndex {
    pub frames: Vec<SeriesEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub date: DateTag,
    pub fine: PathBuf,
    pub coarse: PathBuf,
    #[serde(default)]
    pub truth: Option<PathBuf>,
}

/// Writes each frame as `fine_<date>.f32`, `coarse_<date>.f32` and
/// `truth_<date>.f32` plus `series.json` in `dir`.
pub fn write_series(frames: &[SeriesFrame], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for f in frames {
        let name = |kind: &str| PathBuf::from(format!("{kind}_{}.f32", f.date));
        let entry = SeriesEntry {
            date: f.date,
            fine: name("fine"),
            coarse: name("coarse"),
            truth: Some(name("truth")),
        };
        write_raster(&f.fine, dir.join(&entry.fine))?;
        write_raster(&f.coarse, dir.join(&entry.coarse))?;
        write_raster(&f.truth, dir.join(entry.truth.as_ref().unwrap()))?;
        entries.push(entry);
    }
    let index = dir.join("series.json");
    let text = serde_json::to_string_pretty(&SeriesIndex { frames: entries })
        .expect("index serializes");
    std::fs::write(&index, text).map_err(|e| Error::io(&index, e))?;
    Ok(index)
}

/// Loads the pairs listed in a series index, sorted by date.
pub fn read_series(index: &Path) -> Result<Vec<ReferencePair>> {
    let text = std::fs::read_to_string(index).map_err(|e| Error::io(index, e))?;
    let idx: SeriesIndex = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: index.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = index.parent().unwrap_or(Path::new("."));
    let mut pairs = idx
        .frames
        .iter()
        .map(|e| {
            ReferencePair::new(
                e.date,
                read_raster(base.join(&e.fine))?,
                read_raster(base.join(&e.coarse))?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    pairs.sort_by_key(|p| p.date);
    Ok(pairs)
}
