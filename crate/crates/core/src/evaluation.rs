//! RMSE and squared-correlation comparison of predicted and observed rasters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

fn check_pair(predicted: &[f64], observed: &[f64], min_len: usize) -> Result<()> {
    if predicted.len() != observed.len() {
        return Err(Error::Geometry(format!(
            "length mismatch: {} vs {}",
            predicted.len(),
            observed.len()
        )));
    }
    if predicted.len() < min_len {
        return Err(Error::NoValidPixels);
    }
    Ok(())
}

pub fn rmse(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    check_pair(predicted, observed, 1)?;
    let ss: f64 = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (p - o) * (p - o))
        .sum();
    Ok((ss / predicted.len() as f64).sqrt())
}

/// Squared Pearson correlation. `Ok(None)` when either input is constant.
pub fn r_squared(predicted: &[f64], observed: &[f64]) -> Result<Option<f64>> {
    check_pair(predicted, observed, 2)?;
    let n = predicted.len() as f64;
    let mp = predicted.iter().sum::<f64>() / n;
    let mo = observed.iter().sum::<f64>() / n;
    let (mut spo, mut spp, mut soo) = (0.0f64, 0.0f64, 0.0f64);
    for (p, o) in predicted.iter().zip(observed) {
        let (dp, d_o) = (p - mp, o - mo);
        spo += dp * d_o;
        spp += dp * dp;
        soo += d_o * d_o;
    }
    if spp == 0.0 || soo == 0.0 {
        return Ok(None);
    }
    Ok(Some((spo * spo / (spp * soo)).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub band: usize,
    pub rmse: f64,
    /// Missing when either side is constant over the valid pixels.
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bands: Vec<BandMetrics>,
    pub mean_rmse: f64,
    /// Mean over bands with a defined R²; `None` if no band has one.
    pub mean_r_squared: Option<f64>,
    /// Set when at least one band's R² was undefined and left out of the mean.
    pub r_squared_missing: bool,
    pub n_pixels: usize,
}

impl EvalReport {
    /// `band,rmse,r_squared,n_pixels` rows, then a `mean` row. Missing R² is
    /// written as an empty field.
    pub fn to_csv(&self) -> String {
        let fmt_r2 = |v: Option<f64>| v.map(|v| format!("{v:.10}")).unwrap_or_default();
        let mut out = String::from("band,rmse,r_squared,n_pixels\n");
        for b in &self.bands {
            out.push_str(&format!(
                "{},{:.10},{},{}\n",
                b.band,
                b.rmse,
                fmt_r2(b.r_squared),
                self.n_pixels
            ));
        }
        out.push_str(&format!(
            "mean,{:.10},{},{}\n",
            self.mean_rmse,
            fmt_r2(self.mean_r_squared),
            self.n_pixels
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-band metrics over pixels valid in both rasters.
pub fn evaluate(predicted: &RasterGrid, observed: &RasterGrid) -> Result<EvalReport> {
    predicted.check_same_geometry(observed, "predicted vs observed")?;
    let joint: Vec<usize> = (0..predicted.plane_len())
        .filter(|&i| predicted.mask()[i] && observed.mask()[i])
        .collect();
    if joint.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let mut bands = Vec::with_capacity(predicted.bands());
    for band in 0..predicted.bands() {
        let (pb, ob) = (predicted.band(band), observed.band(band));
        let p: Vec<f64> = joint.iter().map(|&i| pb[i] as f64).collect();
        let o: Vec<f64> = joint.iter().map(|&i| ob[i] as f64).collect();
        let r2 = if joint.len() >= 2 { r_squared(&p, &o)? } else { None };
        bands.push(BandMetrics {
            band,
            rmse: rmse(&p, &o)?,
            r_squared: r2,
        });
    }
    let mean_rmse = bands.iter().map(|b| b.rmse).sum::<f64>() / bands.len() as f64;
    let defined: Vec<f64> = bands.iter().filter_map(|b| b.r_squared).collect();
    Ok(EvalReport {
        mean_rmse,
        mean_r_squared: (!defined.is_empty())
            .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        r_squared_missing: defined.len() < bands.len(),
        n_pixels: joint.len(),
        bands,
    })
}
