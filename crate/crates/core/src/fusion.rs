//! Per-pixel prediction and the tiled image driver.
//!
//! For each valid target pixel the engine selects similar pixels at every
//! reference date, weights them (patch weight within a date, change-magnitude
//! weight across dates), fits a gain/offset per date from the coarse values
//! of the members, and blends `a * F_k + b` over all members of all dates.
//! References are processed in ascending date order and members in scan
//! order, so the output does not depend on input order, tiling or threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DateTag, RasterGrid, ReferencePair};
use crate::regression::{
    coefficient_limits_check, fit_unchecked, RegressionCoefficients, RegressionParams,
};
use crate::similarity::{SelectionPlanes, SimilarityParams};
use crate::weights::{
    normalize_date_in_place, weight_from_distance, ChangeIntegral, PatchKernel, PixelWeights,
    WeightParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Restricted least-squares gain and offset per date.
    #[default]
    Stnlffm,
    /// Gain fixed at one, offset = coarse change at the target pixel.
    StarfmSpecialCase,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stnlffm" => Ok(FusionMode::Stnlffm),
            "starfm" | "starfm_special_case" => Ok(FusionMode::StarfmSpecialCase),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::Stnlffm => "stnlffm",
            FusionMode::StarfmSpecialCase => "starfm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub similarity: SimilarityParams,
    pub weights: WeightParams,
    pub regression: RegressionParams,
    pub mode: FusionMode,
    /// Square tile edge in pixels.
    pub tile_size: usize,
    /// Worker threads; 0 means all available, 1 runs sequentially.
    pub thread_hint: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            similarity: SimilarityParams::default(),
            weights: WeightParams::default(),
            regression: RegressionParams::default(),
            mode: FusionMode::Stnlffm,
            tile_size: 64,
            thread_hint: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        self.weights.validate()?;
        self.regression.validate()?;
        if self.tile_size < 8 {
            return Err(Error::Config(format!(
                "tile_size must be >= 8, got {}",
                self.tile_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FusionTask {
    pub references: Vec<ReferencePair>,
    pub coarse_p: RasterGrid,
    pub prediction_date: DateTag,
}

impl FusionTask {
    pub fn new(
        references: Vec<ReferencePair>,
        coarse_p: RasterGrid,
        prediction_date: DateTag,
    ) -> Result<Self> {
        let task = Self {
            references,
            coarse_p,
            prediction_date,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.references.is_empty() {
            return Err(Error::Config("at least one reference pair is required".into()));
        }
        if self.references.len() == 1 {
            log::warn!("only one reference pair; two or more are recommended");
        }
        for (i, r) in self.references.iter().enumerate() {
            r.fine
                .check_same_geometry(&self.coarse_p, &format!("reference {i} fine vs coarse_p"))?;
            r.coarse
                .check_same_geometry(&self.coarse_p, &format!("reference {i} coarse vs coarse_p"))?;
            if r.date == self.prediction_date {
                return Err(Error::Config(format!(
                    "reference date {} equals the prediction date",
                    r.date
                )));
            }
            if self.references[..i].iter().any(|o| o.date == r.date) {
                return Err(Error::Config(format!("duplicate reference date {}", r.date)));
            }
        }
        Ok(())
    }
}

struct DatePlanes<'a> {
    pair: &'a ReferencePair,
    selection: SelectionPlanes<'a>,
    /// One summed-area table per band.
    change: Vec<ChangeIntegral>,
}

/// Inputs prepared once per task: thresholds, change planes and kernels.
pub struct FusionEngine<'a> {
    task: &'a FusionTask,
    config: FusionConfig,
    dates: Vec<DatePlanes<'a>>,
    kernel: PatchKernel,
}

/// Everything computed for one target pixel and band.
#[derive(Debug, Clone)]
pub struct BandTrace {
    pub value: f64,
    pub weights: PixelWeights,
    pub whole: Vec<f64>,
    pub coefficients: Vec<RegressionCoefficients>,
}

/// Diagnostic record of one predicted pixel. Date-indexed vectors follow
/// `dates`, which lists the reference dates usable at this pixel in ascending
/// order.
#[derive(Debug, Clone)]
pub struct PixelTrace {
    pub target: (usize, usize),
    pub dates: Vec<DateTag>,
    pub members: Vec<Vec<(usize, usize)>>,
    pub bands: Vec<BandTrace>,
}

#[derive(Default)]
struct Scratch {
    candidates: Vec<(f64, u32)>,
    members: Vec<Vec<u32>>,
    usable: Vec<usize>,
    weights: Vec<Vec<f64>>,
    whole: Vec<f64>,
    ck: Vec<f64>,
    cp: Vec<f64>,
    coeffs: Vec<RegressionCoefficients>,
}

impl<'a> FusionEngine<'a> {
    pub fn new(task: &'a FusionTask, config: &FusionConfig) -> Result<Self> {
        config.validate()?;
        task.validate()?;
        let mut order: Vec<&ReferencePair> = task.references.iter().collect();
        order.sort_by_key(|r| r.date);
        let dates = order
            .into_iter()
            .map(|pair| {
                let selection = SelectionPlanes::new(
                    &pair.fine,
                    &pair.coarse,
                    &task.coarse_p,
                    &config.similarity,
                )?;
                let change = (0..task.coarse_p.bands())
                    .map(|b| ChangeIntegral::new(&pair.coarse, &task.coarse_p, b))
                    .collect();
                Ok(DatePlanes {
                    pair,
                    selection,
                    change,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            task,
            config: config.clone(),
            dates,
            kernel: PatchKernel::new(&config.weights),
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    fn width(&self) -> usize {
        self.task.coarse_p.width()
    }

    fn height(&self) -> usize {
        self.task.coarse_p.height()
    }

    /// Selects members for every usable date. Returns false for nodata.
    fn prepare_pixel(&self, x: usize, y: usize, s: &mut Scratch) -> bool {
        let t = y * self.width() + x;
        s.usable.clear();
        if !self.task.coarse_p.mask()[t] {
            return false;
        }
        s.members.resize_with(self.dates.len(), Vec::new);
        for (k, date) in self.dates.iter().enumerate() {
            if date.selection.is_valid(t) {
                date.selection.select_into(
                    x,
                    y,
                    &self.config.similarity,
                    &mut s.candidates,
                    &mut s.members[k],
                );
                s.usable.push(k);
            }
        }
        !s.usable.is_empty()
    }

    /// Weights and coefficients for one band; fills `s.weights`, `s.whole`,
    /// `s.coeffs` aligned with `s.usable` and returns the prediction.
    fn predict_band(&self, x: usize, y: usize, band: usize, s: &mut Scratch) -> f64 {
        let (w, h) = (self.width(), self.height());
        let t = y * w + x;
        let cp_band = self.task.coarse_p.band(band);
        let cp_mask = self.task.coarse_p.mask();
        let wp = &self.config.weights;

        s.whole.clear();
        for &k in &s.usable {
            let sum = self.dates[k].change[band].window_sum(x, y, wp.whole_window);
            s.whole.push(1.0 / (sum + wp.epsilon));
        }
        let total: f64 = s.whole.iter().sum();
        s.whole.iter_mut().for_each(|v| *v /= total);

        s.weights.resize_with(s.usable.len(), Vec::new);
        s.coeffs.clear();
        let mut acc = 0.0f64;
        for (slot, &k) in s.usable.iter().enumerate() {
            let date = &self.dates[k];
            let ck_band = date.pair.coarse.band(band);
            let ck_mask = date.pair.coarse.mask();
            let fine = date.pair.fine.band(band);
            let members = &s.members[k];

            let weights = &mut s.weights[slot];
            weights.clear();
            for &m in members {
                let m = m as usize;
                let d = self.kernel.distance(
                    w,
                    h,
                    ck_band,
                    ck_mask,
                    (m % w, m / w),
                    cp_band,
                    cp_mask,
                    (x, y),
                );
                weights.push(weight_from_distance(d, wp.h));
            }
            normalize_date_in_place(weights, s.whole[slot]);

            let coeffs = match self.config.mode {
                FusionMode::Stnlffm => {
                    s.ck.clear();
                    s.cp.clear();
                    for &m in members {
                        s.ck.push(ck_band[m as usize] as f64);
                        s.cp.push(cp_band[m as usize] as f64);
                    }
                    let fit = fit_unchecked(&s.ck, &s.cp, &self.config.regression);
                    coefficient_limits_check(fit, &self.config.regression)
                }
                FusionMode::StarfmSpecialCase => {
                    let shift = cp_band[t] as f64 - ck_band[t] as f64;
                    RegressionCoefficients::degenerate(members.len(), shift)
                }
            };
            for (&m, &wt) in members.iter().zip(weights.iter()) {
                acc += wt * (coeffs.a * fine[m as usize] as f64 + coeffs.b);
            }
            s.coeffs.push(coeffs);
        }
        acc
    }

    /// Prediction of one band at one pixel, `None` for nodata.
    pub fn predict_pixel(&self, x: usize, y: usize, band: usize) -> Result<Option<f64>> {
        self.check_target(x, y, band)?;
        let mut s = Scratch::default();
        if !self.prepare_pixel(x, y, &mut s) {
            return Ok(None);
        }
        Ok(Some(self.predict_band(x, y, band, &mut s)))
    }

    /// Full diagnostic record of one pixel, `None` for nodata.
    pub fn trace_pixel(&self, x: usize, y: usize) -> Result<Option<PixelTrace>> {
        self.check_target(x, y, 0)?;
        let mut s = Scratch::default();
        if !self.prepare_pixel(x, y, &mut s) {
            return Ok(None);
        }
        let w = self.width();
        let members = s
            .usable
            .iter()
            .map(|&k| {
                s.members[k]
                    .iter()
                    .map(|&m| (m as usize % w, m as usize / w))
                    .collect()
            })
            .collect();
        let mut bands = Vec::with_capacity(self.task.coarse_p.bands());
        for band in 0..self.task.coarse_p.bands() {
            let value = self.predict_band(x, y, band, &mut s);
            bands.push(BandTrace {
                value,
                weights: PixelWeights {
                    per_date: s.weights[..s.usable.len()].to_vec(),
                },
                whole: s.whole.clone(),
                coefficients: s.coeffs.clone(),
            });
        }
        Ok(Some(PixelTrace {
            target: (x, y),
            dates: s.usable.iter().map(|&k| self.dates[k].pair.date).collect(),
            members,
            bands,
        }))
    }

    fn check_target(&self, x: usize, y: usize, band: usize) -> Result<()> {
        if x >= self.width() || y >= self.height() || band >= self.task.coarse_p.bands() {
            return Err(Error::Geometry(format!(
                "pixel ({x}, {y}) band {band} is outside the raster"
            )));
        }
        Ok(())
    }

    fn run_tile(&self, tile: Tile) -> TileOutput {
        let bands = self.task.coarse_p.bands();
        let n = tile.w * tile.h;
        let mut values = vec![0f32; n * bands];
        let mut valid = vec![false; n];
        let mut s = Scratch::default();
        for ty in 0..tile.h {
            for tx in 0..tile.w {
                let (x, y) = (tile.x0 + tx, tile.y0 + ty);
                if !self.prepare_pixel(x, y, &mut s) {
                    continue;
                }
                let i = ty * tile.w + tx;
                valid[i] = true;
                for b in 0..bands {
                    values[b * n + i] = self.predict_band(x, y, b, &mut s) as f32;
                }
            }
        }
        TileOutput {
            tile,
            values,
            valid,
        }
    }

    /// Predicts every pixel. Nodata pixels are masked and hold 0.
    pub fn predict_image(&self) -> Result<RasterGrid> {
        let (w, h) = (self.width(), self.height());
        let bands = self.task.coarse_p.bands();
        let tiles = tiles(w, h, self.config.tile_size);
        let outputs = crate::parallel::map_tiles(&tiles, self.config.thread_hint, |&t| {
            self.run_tile(t)
        })?;
        let plane = w * h;
        let mut data = vec![0f32; plane * bands];
        let mut mask = vec![false; plane];
        for out in outputs {
            let t = out.tile;
            let n = t.w * t.h;
            for ty in 0..t.h {
                let row = (t.y0 + ty) * w + t.x0;
                mask[row..row + t.w].copy_from_slice(&out.valid[ty * t.w..(ty + 1) * t.w]);
                for b in 0..bands {
                    data[b * plane + row..b * plane + row + t.w]
                        .copy_from_slice(&out.values[b * n + ty * t.w..b * n + (ty + 1) * t.w]);
                }
            }
        }
        RasterGrid::new(
            w,
            h,
            bands,
            data,
            mask,
            self.task.references[0].fine.pixel_size(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Tile {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

struct TileOutput {
    tile: Tile,
    values: Vec<f32>,
    valid: Vec<bool>,
}

pub(crate) fn tiles(width: usize, height: usize, size: usize) -> Vec<Tile> {
    let mut out = Vec::new();
    for y0 in (0..height).step_by(size) {
        for x0 in (0..width).step_by(size) {
            out.push(Tile {
                x0,
                y0,
                w: size.min(width - x0),
                h: size.min(height - y0),
            });
        }
    }
    out
}

/// Prediction of one band at one pixel; `None` when the pixel is nodata.
pub fn predict_pixel(
    target: (usize, usize),
    band: usize,
    task: &FusionTask,
    config: &FusionConfig,
) -> Result<Option<f64>> {
    FusionEngine::new(task, config)?.predict_pixel(target.0, target.1, band)
}

pub fn predict_image(task: &FusionTask, config: &FusionConfig) -> Result<RasterGrid> {
    FusionEngine::new(task, config)?.predict_image()
}
