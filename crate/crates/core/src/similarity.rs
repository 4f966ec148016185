//! Similar-pixel selection.
//!
//! A candidate inside the search window joins the target's set when, for every
//! band, its fine reflectance at the reference date is within the spectral
//! threshold of the target's and its coarse change magnitude between the
//! reference and prediction dates is within `sigma_cc` of the target's.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityParams {
    /// Odd window width in fine pixels.
    pub search_window: usize,
    /// Free multiplier on the spectral threshold.
    pub d: f64,
    /// Nominal class count `m` in `tau = d * sigma_band * 2 / m`.
    pub class_count: usize,
    /// Tolerance on the difference of coarse change magnitudes.
    pub sigma_cc: f64,
    /// Largest similar-pixel set per target and reference date.
    pub cap: usize,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            search_window: 31,
            d: 1.0,
            class_count: 4,
            sigma_cc: 0.02,
            cap: 40,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if self.search_window < 3 || self.search_window % 2 == 0 {
            return Err(Error::Config(format!(
                "search_window must be odd and >= 3, got {}",
                self.search_window
            )));
        }
        if !(self.d > 0.0) {
            return Err(Error::Config("d must be > 0".into()));
        }
        if self.class_count == 0 {
            return Err(Error::Config("class_count must be >= 1".into()));
        }
        if !(self.sigma_cc >= 0.0) {
            return Err(Error::Config("sigma_cc must be >= 0".into()));
        }
        if self.cap == 0 {
            return Err(Error::Config("cap must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarPixelSet {
    pub target: (usize, usize),
    pub reference_index: usize,
    /// Member coordinates in row-major scan order; always contains `target`.
    pub members: Vec<(usize, usize)>,
    pub cap: usize,
}

impl SimilarPixelSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Population standard deviation of each band over the grid's valid pixels.
pub fn band_std(grid: &RasterGrid) -> Vec<f64> {
    (0..grid.bands())
        .map(|b| {
            let vals = grid.band(b);
            let mut n = 0usize;
            let mut sum = 0.0f64;
            for (v, &ok) in vals.iter().zip(grid.mask()) {
                if ok {
                    n += 1;
                    sum += *v as f64;
                }
            }
            if n == 0 {
                return 0.0;
            }
            let mean = sum / n as f64;
            let mut ss = 0.0f64;
            for (v, &ok) in vals.iter().zip(grid.mask()) {
                if ok {
                    let d = *v as f64 - mean;
                    ss += d * d;
                }
            }
            (ss / n as f64).sqrt()
        })
        .collect()
}

/// Spectral threshold per band, `d * sigma_band * 2 / m`.
pub fn spectral_thresholds(fine: &RasterGrid, params: &SimilarityParams) -> Vec<f64> {
    band_std(fine)
        .into_iter()
        .map(|s| params.d * s * 2.0 / params.class_count as f64)
        .collect()
}

/// Precomputed per-reference-date inputs to selection.
#[derive(Debug)]
pub(crate) struct SelectionPlanes<'a> {
    width: usize,
    height: usize,
    bands: usize,
    fine: &'a RasterGrid,
    tau: Vec<f64>,
    /// `|C_k - C_p|` per band, band-sequential.
    abs_change: Vec<f64>,
    /// Valid in fine, reference coarse and prediction coarse.
    valid: Vec<bool>,
}

impl<'a> SelectionPlanes<'a> {
    pub(crate) fn new(
        fine_k: &'a RasterGrid,
        coarse_k: &RasterGrid,
        coarse_p: &RasterGrid,
        params: &SimilarityParams,
    ) -> Result<Self> {
        fine_k.check_same_geometry(coarse_k, "fine vs reference coarse")?;
        fine_k.check_same_geometry(coarse_p, "fine vs prediction coarse")?;
        let plane = fine_k.plane_len();
        let bands = fine_k.bands();
        let mut abs_change = vec![0f64; plane * bands];
        for b in 0..bands {
            let (ck, cp) = (coarse_k.band(b), coarse_p.band(b));
            for i in 0..plane {
                abs_change[b * plane + i] = (ck[i] as f64 - cp[i] as f64).abs();
            }
        }
        let valid = (0..plane)
            .map(|i| fine_k.mask()[i] && coarse_k.mask()[i] && coarse_p.mask()[i])
            .collect();
        Ok(Self {
            width: fine_k.width(),
            height: fine_k.height(),
            bands,
            fine: fine_k,
            tau: spectral_thresholds(fine_k, params),
            abs_change,
            valid,
        })
    }

    #[inline]
    pub(crate) fn is_valid(&self, idx: usize) -> bool {
        self.valid[idx]
    }

    /// Writes the member pixel indices (scan order) for target `(x, y)` into
    /// `out`. `scratch` is reused candidate storage.
    pub(crate) fn select_into(
        &self,
        x: usize,
        y: usize,
        params: &SimilarityParams,
        scratch: &mut Vec<(f64, u32)>,
        out: &mut Vec<u32>,
    ) {
        let w = self.width;
        let plane = w * self.height;
        let t = y * w + x;
        let half = params.search_window / 2;
        let (x0, x1) = (x.saturating_sub(half), (x + half).min(w - 1));
        let (y0, y1) = (y.saturating_sub(half), (y + half).min(self.height - 1));
        let fine = self.fine.data();

        scratch.clear();
        for yy in y0..=y1 {
            for xx in x0..=x1 {
                let i = yy * w + xx;
                if i == t || !self.valid[i] {
                    continue;
                }
                let mut dist = 0.0f64;
                let mut ok = true;
                for b in 0..self.bands {
                    let o = b * plane;
                    let df = (fine[o + i] as f64 - fine[o + t] as f64).abs();
                    if df > self.tau[b] {
                        ok = false;
                        break;
                    }
                    let dc = (self.abs_change[o + i] - self.abs_change[o + t]).abs();
                    if !(dc < params.sigma_cc) {
                        ok = false;
                        break;
                    }
                    dist += df;
                }
                if ok {
                    scratch.push((dist, i as u32));
                }
            }
        }

        let keep = params.cap - 1;
        if scratch.len() > keep {
            if keep > 0 {
                scratch.select_nth_unstable_by(keep - 1, candidate_order);
            }
            scratch.truncate(keep);
        }
        out.clear();
        out.push(t as u32);
        out.extend(scratch.iter().map(|&(_, i)| i));
        out.sort_unstable();
    }
}

/// Smaller spectral distance first, then scan order.
fn candidate_order(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Similar pixels of `target` for one reference date.
pub fn select_similar(
    target: (usize, usize),
    reference_index: usize,
    fine_k: &RasterGrid,
    coarse_k: &RasterGrid,
    coarse_p: &RasterGrid,
    params: &SimilarityParams,
) -> Result<SimilarPixelSet> {
    params.validate()?;
    let planes = SelectionPlanes::new(fine_k, coarse_k, coarse_p, params)?;
    let (x, y) = target;
    if x >= fine_k.width() || y >= fine_k.height() || !planes.is_valid(fine_k.index(x, y)) {
        return Err(Error::InvalidTarget { x, y });
    }
    let mut scratch = Vec::new();
    let mut out = Vec::new();
    planes.select_into(x, y, params, &mut scratch, &mut out);
    let w = fine_k.width();
    Ok(SimilarPixelSet {
        target,
        reference_index,
        members: out
            .into_iter()
            .map(|i| (i as usize % w, i as usize / w))
            .collect(),
        cap: params.cap,
    })
}
