//! Resampling between coarse and fine pixel grids.

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

/// Keys cubic-convolution parameter.
pub const KEYS_A: f64 = -0.5;

#[inline]
pub fn keys_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Four source taps (clamped to the border) and their weights for each output
/// coordinate along one axis. Output pixel centres map back to
/// `(i + 0.5) / factor - 0.5` in source pixel units.
fn axis_taps(src_len: usize, factor: usize) -> Vec<([usize; 4], [f64; 4])> {
    let last = src_len as isize - 1;
    (0..src_len * factor)
        .map(|i| {
            let s = (i as f64 + 0.5) / factor as f64 - 0.5;
            let base = s.floor();
            let t = s - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut w = [0f64; 4];
            for k in 0..4 {
                let off = k as isize - 1;
                idx[k] = (base + off).clamp(0, last) as usize;
                w[k] = keys_kernel(t - off as f64);
            }
            (idx, w)
        })
        .collect()
}

/// Separable cubic-convolution upsampling by an integer factor.
///
/// Invalid source pixels are dropped from the 4x4 support and the remaining
/// weights renormalised. An output pixel is valid when the source pixel it
/// falls inside is valid.
pub fn upsample_cubic(low: &RasterGrid, factor: usize) -> Result<RasterGrid> {
    if factor == 0 {
        return Err(Error::Config("upsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(low.clone());
    }
    let (w, h, bands) = (low.width(), low.height(), low.bands());
    let (ow, oh) = (w * factor, h * factor);
    let xt = axis_taps(w, factor);
    let yt = axis_taps(h, factor);
    let all_valid = low.mask().iter().all(|&m| m);

    let mut mask = vec![false; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            mask[oy * ow + ox] = low.is_valid(ox / factor, oy / factor);
        }
    }
    let mut data = vec![0f32; ow * oh * bands];
    for band in 0..bands {
        let src = low.band(band);
        let out = &mut data[band * ow * oh..(band + 1) * ow * oh];
        for (oy, (yi, yw)) in yt.iter().enumerate() {
            for (ox, (xi, xw)) in xt.iter().enumerate() {
                if !mask[oy * ow + ox] {
                    continue;
                }
                let mut acc = 0.0f64;
                let mut wsum = 0.0f64;
                for j in 0..4 {
                    let row = yi[j] * w;
                    for i in 0..4 {
                        let p = row + xi[i];
                        if all_valid || low.mask()[p] {
                            let wt = yw[j] * xw[i];
                            acc += wt * src[p] as f64;
                            wsum += wt;
                        }
                    }
                }
                out[oy * ow + ox] = if wsum > 1e-3 {
                    (acc / wsum) as f32
                } else {
                    low.get(ox / factor, oy / factor, band)
                };
            }
        }
    }
    Ok(
        RasterGrid::new(ow, oh, bands, data, mask, low.pixel_size() / factor as f64)?,
    )
}

/// Block-average downsampling by an integer factor over valid pixels. A block
/// with no valid pixel becomes invalid.
pub fn downsample_boxavg(fine: &RasterGrid, factor: usize) -> Result<RasterGrid> {
    if factor == 0 {
        return Err(Error::Config("downsample factor must be >= 1".into()));
    }
    let (w, h, bands) = (fine.width(), fine.height(), fine.bands());
    if w % factor != 0 || h % factor != 0 {
        return Err(Error::Geometry(format!(
            "{w}x{h} is not divisible by factor {factor}"
        )));
    }
    let (ow, oh) = (w / factor, h / factor);
    let mut data = vec![0f32; ow * oh * bands];
    let mut mask = vec![false; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut count = 0usize;
            let mut sums = vec![0f64; bands];
            for y in oy * factor..(oy + 1) * factor {
                for x in ox * factor..(ox + 1) * factor {
                    if fine.is_valid(x, y) {
                        count += 1;
                        for (b, s) in sums.iter_mut().enumerate() {
                            *s += fine.get(x, y, b) as f64;
                        }
                    }
                }
            }
            if count > 0 {
                mask[oy * ow + ox] = true;
                for (b, s) in sums.iter().enumerate() {
                    data[b * ow * oh + oy * ow + ox] = (s / count as f64) as f32;
                }
            }
        }
    }
    RasterGrid::new(ow, oh, bands, data, mask, fine.pixel_size() * factor as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn kernel_partition_of_unity() {
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let s: f64 = (-1..=2).map(|o| keys_kernel(t - o as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(keys_kernel(0.0), 1.0);
        assert_eq!(keys_kernel(1.0), 0.0);
        assert_eq!(keys_kernel(2.0), 0.0);
    }

    #[test]
    fn constant_stays_constant() {
        let g = RasterGrid::filled(5, 4, 2, 0.3).unwrap();
        let up = upsample_cubic(&g, 4).unwrap();
        assert_eq!((up.width(), up.height()), (20, 16));
        assert!(up.data().iter().all(|v| (v - 0.3).abs() < 1e-7));
    }

    #[test]
    fn factor_one_is_identity() {
        let g = RasterGrid::from_fn(3, 3, 1, |x, y, _| (x * 3 + y) as f32 * 0.01).unwrap();
        assert_eq!(upsample_cubic(&g, 1).unwrap(), g);
        assert!(upsample_cubic(&g, 0).is_err());
    }

    #[test]
    fn ramp_reproduced_in_interior() {
        let ramp = |x: f64, y: f64| 0.1 + 0.02 * x - 0.015 * y;
        let g = RasterGrid::from_fn(10, 10, 1, |x, y, _| ramp(x as f64, y as f64) as f32).unwrap();
        let f = 2;
        let up = upsample_cubic(&g, f).unwrap();
        // interior: the full 4-tap support lies inside the source grid
        for oy in 4..up.height() - 4 {
            for ox in 4..up.width() - 4 {
                let sx = (ox as f64 + 0.5) / f as f64 - 0.5;
                let sy = (oy as f64 + 0.5) / f as f64 - 0.5;
                let expect = ramp(sx, sy);
                assert!(
                    (up.get(ox, oy, 0) as f64 - expect).abs() < 1e-6,
                    "({ox},{oy})"
                );
            }
        }
    }

    #[test]
    fn masked_source_never_contributes() {
        let mut data = vec![0.2f32; 16];
        data[5] = 1e6;
        let mut mask = vec![true; 16];
        mask[5] = false;
        let g = RasterGrid::new(4, 4, 1, data, mask, 1.0).unwrap();
        let up = upsample_cubic(&g, 2).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                if up.is_valid(x, y) {
                    assert!((up.get(x, y, 0) - 0.2).abs() < 1e-6);
                }
            }
        }
        assert!(!up.is_valid(2, 2));
        let down = downsample_boxavg(&g, 2).unwrap();
        assert!((down.get(0, 0, 0) - 0.2).abs() < 1e-7);
    }

    #[test]
    fn box_average_of_block() {
        let g = RasterGrid::new(2, 2, 1, vec![0.0, 0.2, 0.4, 0.6], vec![true; 4], 1.0).unwrap();
        let d = downsample_boxavg(&g, 2).unwrap();
        assert!((d.get(0, 0, 0) - 0.3).abs() < 1e-7);
        let c = RasterGrid::filled(8, 8, 1, 0.7).unwrap();
        assert!(downsample_boxavg(&c, 4).unwrap().data().iter().all(|&v| v == 0.7));
        assert!(downsample_boxavg(&c, 3).is_err());
    }

    #[test]
    fn box_average_matches_scalar_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = RasterGrid::from_fn(16, 16, 2, |_, _, _| 0.0).unwrap();
        let data: Vec<f32> = (0..g.data().len()).map(|_| rng.gen()).collect();
        let g = RasterGrid::new(16, 16, 2, data, vec![true; 256], 1.0).unwrap();
        let d = downsample_boxavg(&g, 4).unwrap();
        for b in 0..2 {
            for by in 0..4 {
                for bx in 0..4 {
                    let mut s = 0.0f64;
                    for j in 0..4 {
                        for i in 0..4 {
                            s += g.data()[b * 256 + (by * 4 + j) * 16 + bx * 4 + i] as f64;
                        }
                    }
                    assert!((d.get(bx, by, b) as f64 - s / 16.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn down_of_up_is_near_identity_for_smooth_input() {
        let g = RasterGrid::from_fn(12, 12, 1, |x, y, _| {
            (0.3 + 0.05 * (x as f64 * 0.3).sin() * (y as f64 * 0.25).cos()) as f32
        })
        .unwrap();
        let back = downsample_boxavg(&upsample_cubic(&g, 4).unwrap(), 4).unwrap();
        for (a, b) in back.data().iter().zip(g.data()) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
