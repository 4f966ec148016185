//! Individual (patch) weights, whole (per-date) weights and their combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

/// Pointwise distance aggregated by the Gaussian kernel over a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PatchNorm {
    #[default]
    Absolute,
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightParams {
    /// Filtering parameter, reflectance units.
    pub h: f64,
    /// Standard deviation of the Gaussian patch kernel, pixels.
    pub kernel_sigma: f64,
    /// Odd patch width.
    pub patch_size: usize,
    /// Odd width of the window the whole weight sums change over.
    pub whole_window: usize,
    pub epsilon: f64,
    pub patch_norm: PatchNorm,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            h: 0.15,
            kernel_sigma: 1.5,
            patch_size: 5,
            whole_window: 31,
            epsilon: 1e-6,
            patch_norm: PatchNorm::Absolute,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::Config("h must be > 0".into()));
        }
        if !(self.kernel_sigma > 0.0) {
            return Err(Error::Config("kernel_sigma must be > 0".into()));
        }
        if self.patch_size % 2 == 0 {
            return Err(Error::Config(format!(
                "patch_size must be odd, got {}",
                self.patch_size
            )));
        }
        if self.whole_window % 2 == 0 {
            return Err(Error::Config(format!(
                "whole_window must be odd, got {}",
                self.whole_window
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Unnormalised Gaussian taps over a square patch.
#[derive(Debug, Clone)]
pub(crate) struct PatchKernel {
    taps: Vec<(isize, isize, f64)>,
    norm: PatchNorm,
}

impl PatchKernel {
    pub(crate) fn new(params: &WeightParams) -> Self {
        let r = (params.patch_size / 2) as isize;
        let two_s2 = 2.0 * params.kernel_sigma * params.kernel_sigma;
        let mut taps = Vec::with_capacity(params.patch_size * params.patch_size);
        for dy in -r..=r {
            for dx in -r..=r {
                let g = (-((dx * dx + dy * dy) as f64) / two_s2).exp();
                taps.push((dx, dy, g));
            }
        }
        Self {
            taps,
            norm: params.patch_norm,
        }
    }

    /// Kernel-weighted mean distance between the patch of `src` around
    /// `src_at` and the patch of `dst` around `dst_at`. Offsets that leave the
    /// image or hit an invalid pixel on either side are dropped and the kernel
    /// renormalised over the rest.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    pub(crate) fn distance(
        &self,
        width: usize,
        height: usize,
        src: &[f32],
        src_valid: &[bool],
        src_at: (usize, usize),
        dst: &[f32],
        dst_valid: &[bool],
        dst_at: (usize, usize),
    ) -> f64 {
        let (w, h) = (width as isize, height as isize);
        let (sx, sy) = (src_at.0 as isize, src_at.1 as isize);
        let (tx, ty) = (dst_at.0 as isize, dst_at.1 as isize);
        let mut acc = 0.0f64;
        let mut gsum = 0.0f64;
        for &(dx, dy, g) in &self.taps {
            let (ax, ay, bx, by) = (sx + dx, sy + dy, tx + dx, ty + dy);
            if ax < 0 || ay < 0 || ax >= w || ay >= h || bx < 0 || by < 0 || bx >= w || by >= h {
                continue;
            }
            let i = (ay * w + ax) as usize;
            let j = (by * w + bx) as usize;
            if !src_valid[i] || !dst_valid[j] {
                continue;
            }
            let diff = src[i] as f64 - dst[j] as f64;
            let d = match self.norm {
                PatchNorm::Absolute => diff.abs(),
                PatchNorm::Squared => diff * diff,
            };
            acc += g * d;
            gsum += g;
        }
        if gsum > 0.0 {
            acc / gsum
        } else {
            0.0
        }
    }
}

#[inline]
pub(crate) fn weight_from_distance(distance: f64, h: f64) -> f64 {
    (-distance / (h * h)).exp()
}

/// Non-local weight of `member` for `target`: the coarse patch around the
/// member at the reference date against the coarse patch around the target at
/// the prediction date.
pub fn individual_weight(
    member: (usize, usize),
    target: (usize, usize),
    coarse_k: &RasterGrid,
    coarse_p: &RasterGrid,
    band: usize,
    params: &WeightParams,
) -> Result<f64> {
    params.validate()?;
    coarse_k.check_same_geometry(coarse_p, "reference vs prediction coarse")?;
    let kernel = PatchKernel::new(params);
    let d = kernel.distance(
        coarse_k.width(),
        coarse_k.height(),
        coarse_k.band(band),
        coarse_k.mask(),
        member,
        coarse_p.band(band),
        coarse_p.mask(),
        target,
    );
    Ok(weight_from_distance(d, params.h))
}

/// `(1 / (S_k + eps)) / sum_k' (1 / (S_k' + eps))`.
pub fn whole_from_change_sums(sums: &[f64], epsilon: f64) -> Vec<f64> {
    let inv: Vec<f64> = sums.iter().map(|s| 1.0 / (s + epsilon)).collect();
    let total: f64 = inv.iter().sum();
    inv.into_iter().map(|v| v / total).collect()
}

/// Window sum of `|C_k - C_p|` over pixels valid in both grids.
pub fn window_change_sum(
    coarse_k: &RasterGrid,
    coarse_p: &RasterGrid,
    target: (usize, usize),
    band: usize,
    window: usize,
) -> f64 {
    let half = window / 2;
    let (x, y) = target;
    let x1 = (x + half).min(coarse_k.width() - 1);
    let y1 = (y + half).min(coarse_k.height() - 1);
    let mut s = 0.0f64;
    for yy in y.saturating_sub(half)..=y1 {
        for xx in x.saturating_sub(half)..=x1 {
            if coarse_k.is_valid(xx, yy) && coarse_p.is_valid(xx, yy) {
                s += (coarse_k.get(xx, yy, band) as f64 - coarse_p.get(xx, yy, band) as f64).abs();
            }
        }
    }
    s
}

/// Whole weight of each reference date at `target`; sums to one over dates.
pub fn whole_weight(
    coarse_refs: &[&RasterGrid],
    coarse_p: &RasterGrid,
    target: (usize, usize),
    band: usize,
    params: &WeightParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    if coarse_refs.is_empty() {
        return Err(Error::Config("no reference dates".into()));
    }
    for c in coarse_refs {
        c.check_same_geometry(coarse_p, "reference vs prediction coarse")?;
    }
    let sums: Vec<f64> = coarse_refs
        .iter()
        .map(|c| window_change_sum(c, coarse_p, target, band, params.whole_window))
        .collect();
    Ok(whole_from_change_sums(&sums, params.epsilon))
}

/// Summed-area table of `|C_k - C_p|` for one band, invalid pixels zeroed.
#[derive(Debug)]
pub(crate) struct ChangeIntegral {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl ChangeIntegral {
    pub(crate) fn new(coarse_k: &RasterGrid, coarse_p: &RasterGrid, band: usize) -> Self {
        let (w, h) = (coarse_k.width(), coarse_k.height());
        let (ck, cp) = (coarse_k.band(band), coarse_p.band(band));
        let mut table = vec![0f64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0f64;
            for x in 0..w {
                let i = y * w + x;
                if coarse_k.mask()[i] && coarse_p.mask()[i] {
                    row += (ck[i] as f64 - cp[i] as f64).abs();
                }
                table[(y + 1) * (w + 1) + x + 1] = table[y * (w + 1) + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            table,
        }
    }

    pub(crate) fn window_sum(&self, x: usize, y: usize, window: usize) -> f64 {
        let half = window / 2;
        let stride = self.width + 1;
        let (x0, y0) = (x.saturating_sub(half), y.saturating_sub(half));
        let x1 = (x + half + 1).min(self.width);
        let y1 = (y + half + 1).min(self.height);
        let t = &self.table;
        let s = t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] + t[y0 * stride + x0];
        s.max(0.0)
    }
}

/// Final weights of one target pixel and band, indexed `[date][member]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelWeights {
    pub per_date: Vec<Vec<f64>>,
}

impl PixelWeights {
    pub fn total(&self) -> f64 {
        self.per_date.iter().flatten().sum()
    }
}

/// Normalises `individual` to unit sum and scales by `whole`. An all-zero or
/// non-finite date falls back to uniform weights.
pub(crate) fn normalize_date_in_place(individual: &mut [f64], whole: f64) -> bool {
    let sum: f64 = individual.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        for w in individual.iter_mut() {
            *w = *w / sum * whole;
        }
        true
    } else {
        let u = whole / individual.len() as f64;
        individual.iter_mut().for_each(|w| *w = u);
        false
    }
}

pub fn combine_and_normalize(individual: &[Vec<f64>], whole: &[f64]) -> Result<PixelWeights> {
    if individual.len() != whole.len() {
        return Err(Error::Config(format!(
            "{} individual weight sets for {} whole weights",
            individual.len(),
            whole.len()
        )));
    }
    let mut per_date = individual.to_vec();
    for (date, (w, &ww)) in per_date.iter_mut().zip(whole).enumerate() {
        if w.is_empty() {
            return Err(Error::Config(format!("date {date} has no members")));
        }
        if w.iter().any(|v| *v < 0.0) {
            return Err(Error::Numeric(format!("negative individual weight at date {date}")));
        }
        normalize_date_in_place(w, ww);
    }
    Ok(PixelWeights { per_date })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid(w: usize, h: usize, vals: &[f32]) -> RasterGrid {
        RasterGrid::new(w, h, 1, vals.to_vec(), vec![true; w * h], 1.0).unwrap()
    }

    #[test]
    fn identical_patches_weigh_one() {
        let g = RasterGrid::from_fn(7, 7, 1, |x, y, _| (x * 7 + y) as f32 * 0.01).unwrap();
        let w = individual_weight((3, 3), (3, 3), &g, &g, 0, &WeightParams::default()).unwrap();
        assert_eq!(w, 1.0);
    }

    #[test]
    fn weight_decreases_with_difference() {
        let base = RasterGrid::filled(5, 5, 1, 0.2).unwrap();
        let mut last = 1.0;
        for k in 1..6 {
            let other = RasterGrid::filled(5, 5, 1, 0.2 + 0.02 * k as f32).unwrap();
            let w = individual_weight((2, 2), (2, 2), &other, &base, 0, &WeightParams::default())
                .unwrap();
            assert!(w < last && w > 0.0);
            last = w;
        }
    }

    #[test]
    fn three_by_three_matches_scalar_loop() {
        let ck = grid(3, 3, &[0.10, 0.12, 0.15, 0.11, 0.20, 0.22, 0.09, 0.18, 0.30]);
        let cp = grid(3, 3, &[0.14, 0.10, 0.16, 0.13, 0.25, 0.21, 0.08, 0.19, 0.27]);
        let params = WeightParams {
            h: 0.1,
            kernel_sigma: 1.0,
            patch_size: 3,
            ..WeightParams::default()
        };
        let w = individual_weight((1, 1), (1, 1), &ck, &cp, 0, &params).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..3 {
            for i in 0..3 {
                let r2 = ((i as f64 - 1.0).powi(2) + (j as f64 - 1.0).powi(2)) as f64;
                let g = (-r2 / 2.0).exp();
                num += g * (ck.get(i, j, 0) as f64 - cp.get(i, j, 0) as f64).abs();
                den += g;
            }
        }
        let expect = (-(num / den) / 0.01).exp();
        assert!((w - expect).abs() < 1e-14, "{w} vs {expect}");
    }

    #[test]
    fn border_patch_uses_in_bounds_intersection() {
        let ck = grid(3, 1, &[0.1, 0.3, 0.5]);
        let cp = grid(3, 1, &[0.2, 0.3, 0.4]);
        let params = WeightParams {
            h: 1.0,
            kernel_sigma: 1.0,
            patch_size: 3,
            ..WeightParams::default()
        };
        // member (0,0) vs target (2,0): only the zero offset is in bounds for both
        let w = individual_weight((0, 0), (2, 0), &ck, &cp, 0, &params).unwrap();
        assert!((w - (-(0.1f32 as f64 - 0.4f32 as f64).abs()).exp()).abs() < 1e-12);
    }

    #[test]
    fn whole_weight_cases() {
        assert_eq!(whole_from_change_sums(&[0.3, 0.3], 1e-6), vec![0.5, 0.5]);
        let w = whole_from_change_sums(&[0.0, 0.5], 1e-6);
        assert!(w[0] > 0.99999 && w[1] < 1e-5);
        let w = whole_from_change_sums(&[0.1, 0.2, 0.4], 0.0);
        for (got, want) in w.iter().zip([4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn whole_weight_from_grids() {
        let cp = RasterGrid::filled(5, 5, 1, 0.2).unwrap();
        let a = RasterGrid::filled(5, 5, 1, 0.3).unwrap();
        let b = RasterGrid::filled(5, 5, 1, 0.4).unwrap();
        let params = WeightParams {
            whole_window: 3,
            epsilon: 1e-12,
            ..WeightParams::default()
        };
        let w = whole_weight(&[&a, &b], &cp, (2, 2), 0, &params).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integral_matches_direct_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let d: Vec<f32> = (0..13 * 9).map(|_| rng.gen()).collect();
            let m: Vec<bool> = (0..13 * 9).map(|_| rng.gen_bool(0.9)).collect();
            RasterGrid::new(13, 9, 1, d, m, 1.0).unwrap()
        };
        let (ck, cp) = (mk(&mut rng), mk(&mut rng));
        let sat = ChangeIntegral::new(&ck, &cp, 0);
        for y in 0..9 {
            for x in 0..13 {
                for win in [1, 3, 7, 31] {
                    let direct = window_change_sum(&ck, &cp, (x, y), 0, win);
                    assert!((sat.window_sum(x, y, win) - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn combine_cases() {
        let one = combine_and_normalize(&[vec![0.3]], &[1.0]).unwrap();
        assert_eq!(one.per_date, vec![vec![1.0]]);
        let four = combine_and_normalize(&[vec![0.7, 0.7], vec![0.2, 0.2]], &[0.5, 0.5]).unwrap();
        assert!(four.per_date.iter().flatten().all(|&w| (w - 0.25).abs() < 1e-15));
        let zero = combine_and_normalize(&[vec![0.0, 0.0]], &[1.0]).unwrap();
        assert_eq!(zero.per_date, vec![vec![0.5, 0.5]]);
        assert!(combine_and_normalize(&[vec![]], &[1.0]).is_err());
        assert!(combine_and_normalize(&[vec![1.0]], &[0.5, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn combined_weights_sum_to_one(
            indiv in prop::collection::vec(prop::collection::vec(1e-6f64..1.0, 1..20), 1..5),
            sums in prop::collection::vec(0.0f64..5.0, 5),
        ) {
            let whole = whole_from_change_sums(&sums[..indiv.len()], 1e-6);
            prop_assert!((whole.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(whole.iter().all(|&w| w > 0.0 && w < 1.0 || indiv.len() == 1));
            let pw = combine_and_normalize(&indiv, &whole).unwrap();
            prop_assert!((pw.total() - 1.0).abs() < 1e-9);
            for (k, date) in pw.per_date.iter().enumerate() {
                let s: f64 = indiv[k].iter().sum();
                for (i, &w) in date.iter().enumerate() {
                    prop_assert!((w - indiv[k][i] / s * whole[k]).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn permuting_dates_permutes_whole_weights(sums in prop::collection::vec(0.0f64..5.0, 2..6), rot in 0usize..6) {
            let w = whole_from_change_sums(&sums, 1e-6);
            let mut rotated = sums.clone();
            let r = rot % sums.len();
            rotated.rotate_left(r);
            let mut expect = w.clone();
            expect.rotate_left(r);
            let got = whole_from_change_sums(&rotated, 1e-6);
            for (a, b) in got.iter().zip(&expect) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn larger_h_flattens_weights(dists in prop::collection::vec(0.0f64..0.2, 2..10), h in 0.02f64..0.5, dh in 0.0f64..0.5) {
            let ratio = |h: f64| {
                let ws: Vec<f64> = dists.iter().map(|&d| weight_from_distance(d, h)).collect();
                ws.iter().cloned().fold(0.0, f64::max) / ws.iter().cloned().fold(f64::INFINITY, f64::min)
            };
            prop_assert!(ratio(h + dh) <= ratio(h) * (1.0 + 1e-12));
        }
    }
}
