//! Straight-line reference implementation of the fusion pipeline.
//!
//! Everything is recomputed from the grids with plain loops: no summed-area
//! tables, no candidate partitioning, and the gain is taken from centred
//! moments rather than the raw normal equations. Only meant for small rasters;
//! it exists to check [`crate::fusion::predict_image`].

use crate::error::Result;
use crate::fusion::{FusionConfig, FusionMode, FusionTask};
use crate::raster::{RasterGrid, ReferencePair};
use crate::weights::PatchNorm;

fn std_per_band(g: &RasterGrid) -> Vec<f64> {
    let mut out = Vec::new();
    for b in 0..g.bands() {
        let mut vals = Vec::new();
        for y in 0..g.height() {
            for x in 0..g.width() {
                if g.is_valid(x, y) {
                    vals.push(g.get(x, y, b) as f64);
                }
            }
        }
        if vals.is_empty() {
            out.push(0.0);
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        out.push(var.sqrt());
    }
    out
}

fn in_window(cx: usize, cy: usize, width: usize, height: usize, window: usize) -> Vec<(usize, usize)> {
    let r = (window / 2) as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (cx as i64 + dx, cy as i64 + dy);
            if x >= 0 && y >= 0 && x < width as i64 && y < height as i64 {
                out.push((x as usize, y as usize));
            }
        }
    }
    out
}

fn valid_all(r: &ReferencePair, cp: &RasterGrid, x: usize, y: usize) -> bool {
    r.fine.is_valid(x, y) && r.coarse.is_valid(x, y) && cp.is_valid(x, y)
}

fn similar_pixels(
    r: &ReferencePair,
    cp: &RasterGrid,
    target: (usize, usize),
    std: &[f64],
    config: &FusionConfig,
) -> Vec<(usize, usize)> {
    let p = &config.similarity;
    let (tx, ty) = target;
    let change = |x: usize, y: usize, b: usize| (r.coarse.get(x, y, b) as f64 - cp.get(x, y, b) as f64).abs();
    let mut hits: Vec<(f64, usize, (usize, usize))> = Vec::new();
    for (x, y) in in_window(tx, ty, cp.width(), cp.height(), p.search_window) {
        if (x, y) == target || !valid_all(r, cp, x, y) {
            continue;
        }
        let mut ok = true;
        let mut dist = 0.0;
        for b in 0..cp.bands() {
            let tau = p.d * std[b] * 2.0 / p.class_count as f64;
            let df = (r.fine.get(x, y, b) as f64 - r.fine.get(tx, ty, b) as f64).abs();
            if df > tau || !((change(x, y, b) - change(tx, ty, b)).abs() < p.sigma_cc) {
                ok = false;
            }
            dist += df;
        }
        if ok {
            hits.push((dist, y * cp.width() + x, (x, y)));
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.truncate(p.cap - 1);
    hits.push((0.0, ty * cp.width() + tx, target));
    hits.sort_by_key(|h| h.1);
    hits.into_iter().map(|h| h.2).collect()
}

fn patch_weight(
    r: &ReferencePair,
    cp: &RasterGrid,
    member: (usize, usize),
    target: (usize, usize),
    band: usize,
    config: &FusionConfig,
) -> f64 {
    let wp = &config.weights;
    let half = (wp.patch_size / 2) as i64;
    let (w, h) = (cp.width() as i64, cp.height() as i64);
    let mut num = 0.0;
    let mut den = 0.0;
    for dy in -half..=half {
        for dx in -half..=half {
            let (mx, my) = (member.0 as i64 + dx, member.1 as i64 + dy);
            let (tx, ty) = (target.0 as i64 + dx, target.1 as i64 + dy);
            let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h;
            if !inside(mx, my) || !inside(tx, ty) {
                continue;
            }
            let (mx, my, tx, ty) = (mx as usize, my as usize, tx as usize, ty as usize);
            if !r.coarse.is_valid(mx, my) || !cp.is_valid(tx, ty) {
                continue;
            }
            let g = (-((dx * dx + dy * dy) as f64) / (2.0 * wp.kernel_sigma * wp.kernel_sigma)).exp();
            let diff = r.coarse.get(mx, my, band) as f64 - cp.get(tx, ty, band) as f64;
            num += g * match wp.patch_norm {
                PatchNorm::Absolute => diff.abs(),
                PatchNorm::Squared => diff * diff,
            };
            den += g;
        }
    }
    let dist = if den > 0.0 { num / den } else { 0.0 };
    (-dist / (wp.h * wp.h)).exp()
}

/// Gain and offset from centred moments: `a = (Sxy + g) / (Sxx + g)`,
/// `b = mean_p - a mean_k`.
fn coefficients(ck: &[f64], cp: &[f64], config: &FusionConfig) -> (f64, f64) {
    let rp = &config.regression;
    let n = ck.len() as f64;
    let mk = ck.iter().sum::<f64>() / n;
    let mp = cp.iter().sum::<f64>() / n;
    let shift = cp.iter().zip(ck).map(|(p, k)| p - k).sum::<f64>() / n;
    let sxx: f64 = ck.iter().map(|k| (k - mk) * (k - mk)).sum();
    if ck.len() < rp.min_points || sxx / n < rp.variance_floor {
        return (1.0, shift);
    }
    let sxy: f64 = ck.iter().zip(cp).map(|(k, p)| (k - mk) * (p - mp)).sum();
    let a = (sxy + rp.gamma) / (sxx + rp.gamma);
    if a < rp.a_min || a > rp.a_max {
        return (1.0, shift);
    }
    (a, mp - a * mk)
}

/// Reference prediction of every pixel; nodata pixels are masked and hold 0.
pub fn oracle_predict(task: &FusionTask, config: &FusionConfig) -> Result<RasterGrid> {
    config.validate()?;
    task.validate()?;
    let cp = &task.coarse_p;
    let (w, h, bands) = (cp.width(), cp.height(), cp.bands());
    let mut refs: Vec<&ReferencePair> = task.references.iter().collect();
    refs.sort_by_key(|r| r.date);
    let stds: Vec<Vec<f64>> = refs.iter().map(|r| std_per_band(&r.fine)).collect();

    let mut data = vec![0f32; w * h * bands];
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !cp.is_valid(x, y) {
                continue;
            }
            let usable: Vec<usize> = (0..refs.len())
                .filter(|&k| valid_all(refs[k], cp, x, y))
                .collect();
            if usable.is_empty() {
                continue;
            }
            mask[y * w + x] = true;
            let members: Vec<Vec<(usize, usize)>> = usable
                .iter()
                .map(|&k| similar_pixels(refs[k], cp, (x, y), &stds[k], config))
                .collect();
            for b in 0..bands {
                let mut inv = Vec::new();
                for &k in &usable {
                    let r = refs[k];
                    let mut s = 0.0;
                    for (px, py) in in_window(x, y, w, h, config.weights.whole_window) {
                        if r.coarse.is_valid(px, py) && cp.is_valid(px, py) {
                            s += (r.coarse.get(px, py, b) as f64 - cp.get(px, py, b) as f64).abs();
                        }
                    }
                    inv.push(1.0 / (s + config.weights.epsilon));
                }
                let inv_total: f64 = inv.iter().sum();

                let mut value = 0.0;
                for (slot, &k) in usable.iter().enumerate() {
                    let r = refs[k];
                    let whole = inv[slot] / inv_total;
                    let set = &members[slot];
                    let indiv: Vec<f64> = set
                        .iter()
                        .map(|&m| patch_weight(r, cp, m, (x, y), b, config))
                        .collect();
                    let indiv_total: f64 = indiv.iter().sum();
                    let (a, off) = match config.mode {
                        FusionMode::Stnlffm => {
                            let ck: Vec<f64> = set.iter().map(|&(mx, my)| r.coarse.get(mx, my, b) as f64).collect();
                            let cpv: Vec<f64> = set.iter().map(|&(mx, my)| cp.get(mx, my, b) as f64).collect();
                            coefficients(&ck, &cpv, config)
                        }
                        FusionMode::StarfmSpecialCase => {
                            (1.0, cp.get(x, y, b) as f64 - r.coarse.get(x, y, b) as f64)
                        }
                    };
                    for (i, &(mx, my)) in set.iter().enumerate() {
                        let wt = if indiv_total > 0.0 {
                            indiv[i] / indiv_total * whole
                        } else {
                            whole / set.len() as f64
                        };
                        value += wt * (a * r.fine.get(mx, my, b) as f64 + off);
                    }
                }
                data[b * w * h + y * w + x] = value as f32;
            }
        }
    }
    RasterGrid::new(w, h, bands, data, mask, refs[0].fine.pixel_size())
}
