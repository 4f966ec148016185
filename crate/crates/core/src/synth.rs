//! Synthetic land-cover time series with exact ground truth.
//!
//! Each pixel belongs to one class; a class follows a piecewise-linear
//! reflectance trajectory per band, optionally shifted by an abrupt event.
//! Optional per-pixel texture (static) and a random-walk drift field add
//! sub-coarse-pixel variation. The coarse sensor is simulated by block
//! averaging the noiseless fine image and cubic-upsampling it back.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DateTag, RasterGrid, ReferencePair};
use crate::resample::{downsample_boxavg, upsample_cubic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassMapMode {
    Checkerboard,
    VoronoiPatches,
    Stripes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub date: f64,
    /// Reflectance per band.
    pub values: Vec<f64>,
}

/// Piecewise-linear trajectory through `knots`, extended linearly past the
/// first and last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrajectory {
    pub knots: Vec<Knot>,
}

impl ClassTrajectory {
    pub fn linear(start: Knot, slope_per_day: &[f64]) -> Self {
        let end = Knot {
            date: start.date + 1.0,
            values: start
                .values
                .iter()
                .zip(slope_per_day)
                .map(|(v, s)| v + s)
                .collect(),
        };
        Self {
            knots: vec![start, end],
        }
    }

    pub fn value(&self, date: f64, band: usize) -> f64 {
        let k = &self.knots;
        if k.len() == 1 {
            return k[0].values[band];
        }
        let seg = match k.iter().position(|kn| kn.date > date) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => k.len() - 2,
        };
        let (a, b) = (&k[seg], &k[seg + 1]);
        let t = (date - a.date) / (b.date - a.date);
        a.values[band] + t * (b.values[band] - a.values[band])
    }
}

/// Step change applied to some classes from `date` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbruptChange {
    pub date: f64,
    pub classes: Vec<usize>,
    /// Added reflectance per band.
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub band_count: usize,
    pub class_count: usize,
    pub class_map_mode: ClassMapMode,
    /// Checker cell / stripe width / mean Voronoi cell width, fine pixels.
    #[serde(default = "default_feature_size")]
    pub feature_size: usize,
    /// One trajectory per class.
    pub trajectories: Vec<ClassTrajectory>,
    #[serde(default)]
    pub event: Option<AbruptChange>,
    /// Observation noise on fine images.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Noise added to coarse images at coarse resolution.
    #[serde(default)]
    pub coarse_noise_sigma: f64,
    /// Static per-pixel deviation from the class value.
    #[serde(default)]
    pub texture_sigma: f64,
    /// Random-walk step per sqrt(day) of a per-pixel drift field.
    #[serde(default)]
    pub drift_sigma: f64,
    /// Date at which the drift field is zero; defaults to the earliest date.
    #[serde(default)]
    pub drift_origin: Option<i64>,
    pub resolution_ratio: usize,
    pub seed: u64,
}

fn default_feature_size() -> usize {
    8
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 || self.band_count == 0 {
            return bad("scene dimensions must be positive".into());
        }
        if self.class_count == 0 {
            return bad("class_count must be >= 1".into());
        }
        if self.resolution_ratio == 0 {
            return bad("resolution_ratio must be >= 1".into());
        }
        if self.width % self.resolution_ratio != 0 || self.height % self.resolution_ratio != 0 {
            return bad(format!(
                "{}x{} not divisible by resolution_ratio {}",
                self.width, self.height, self.resolution_ratio
            ));
        }
        if self.feature_size == 0 {
            return bad("feature_size must be >= 1".into());
        }
        if self.trajectories.len() != self.class_count {
            return bad(format!(
                "{} trajectories for {} classes",
                self.trajectories.len(),
                self.class_count
            ));
        }
        for (c, t) in self.trajectories.iter().enumerate() {
            if t.knots.is_empty() {
                return bad(format!("class {c} trajectory has no knots"));
            }
            if t.knots.iter().any(|k| k.values.len() != self.band_count) {
                return bad(format!("class {c} knot band count mismatch"));
            }
            if t.knots.windows(2).any(|w| !(w[1].date > w[0].date)) {
                return bad(format!("class {c} knots are not strictly increasing in date"));
            }
        }
        if let Some(ev) = &self.event {
            if ev.offset.len() != self.band_count || ev.classes.iter().any(|&c| c >= self.class_count) {
                return bad("abrupt change event does not match the scene".into());
            }
        }
        for s in [self.noise_sigma, self.coarse_noise_sigma, self.texture_sigma, self.drift_sigma] {
            if !(s >= 0.0) {
                return bad("noise parameters must be >= 0".into());
            }
        }
        Ok(())
    }

    /// Scene whose classes follow straight-line trajectories with
    /// well-separated seeded levels and slopes up to `max_slope` per day.
    pub fn linear(
        width: usize,
        height: usize,
        band_count: usize,
        class_count: usize,
        class_map_mode: ClassMapMode,
        max_slope: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
        let trajectories = (0..class_count)
            .map(|c| {
                let values: Vec<f64> = (0..band_count)
                    .map(|_| {
                        let level = 0.08 + 0.5 * (c as f64 + 0.5) / class_count as f64;
                        level + rng.gen_range(-0.02..0.02)
                    })
                    .collect();
                let slopes: Vec<f64> = (0..band_count)
                    .map(|_| rng.gen_range(-max_slope..=max_slope))
                    .collect();
                ClassTrajectory::linear(Knot { date: 0.0, values }, &slopes)
            })
            .collect();
        Self {
            width,
            height,
            band_count,
            class_count,
            class_map_mode,
            feature_size: default_feature_size(),
            trajectories,
            event: None,
            noise_sigma: 0.0,
            coarse_noise_sigma: 0.0,
            texture_sigma: 0.0,
            drift_sigma: 0.0,
            drift_origin: None,
            resolution_ratio: 4,
            seed,
        }
    }

    /// Replaces every class trajectory by a seeded random walk with a knot at
    /// each of `knot_dates`, starting from the class's current level at the
    /// first knot date. Steps are uniform in `[-step, step]` per band, so
    /// classes drift apart over time.
    pub fn with_divergent_trajectories(mut self, knot_dates: &[f64], step: f64) -> Self {
        let mut rng = self.stream(4);
        for t in self.trajectories.iter_mut() {
            let mut level: Vec<f64> = (0..self.band_count)
                .map(|b| t.value(knot_dates[0], b))
                .collect();
            let mut knots = Vec::with_capacity(knot_dates.len());
            for &date in knot_dates {
                knots.push(Knot {
                    date,
                    values: level.clone(),
                });
                if step > 0.0 {
                    level.iter_mut().for_each(|v| *v += rng.gen_range(-step..=step));
                }
            }
            t.knots = knots;
        }
        self
    }

    /// Class index of every pixel, row-major.
    pub fn class_map(&self) -> Vec<usize> {
        let (w, h, n, fs) = (self.width, self.height, self.class_count, self.feature_size);
        match self.class_map_mode {
            ClassMapMode::Checkerboard => {
                let stride = if n <= 2 { 1 } else { (n as f64).sqrt().ceil() as usize };
                (0..w * h)
                    .map(|i| {
                        let (cx, cy) = ((i % w) / fs, (i / w) / fs);
                        (cx + cy * stride) % n
                    })
                    .collect()
            }
            ClassMapMode::Stripes => (0..w * h).map(|i| ((i % w) / fs) % n).collect(),
            ClassMapMode::VoronoiPatches => {
                let mut rng = self.stream(1);
                let seeds = ((w * h) / (fs * fs)).max(n);
                let sites: Vec<(f64, f64, usize)> = (0..seeds)
                    .map(|s| {
                        (
                            rng.gen_range(0.0..w as f64),
                            rng.gen_range(0.0..h as f64),
                            s % n,
                        )
                    })
                    .collect();
                (0..w * h)
                    .map(|i| {
                        let (px, py) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
                        let mut best = (f64::INFINITY, 0);
                        for &(sx, sy, c) in &sites {
                            let d = (sx - px).powi(2) + (sy - py).powi(2);
                            if d < best.0 {
                                best = (d, c);
                            }
                        }
                        best.1
                    })
                    .collect()
            }
        }
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }

    /// Noiseless class reflectance of `class` at `date`.
    pub fn class_value(&self, class: usize, date: f64, band: usize) -> f64 {
        let mut v = self.trajectories[class].value(date, band);
        if let Some(ev) = &self.event {
            if date >= ev.date && ev.classes.contains(&class) {
                v += ev.offset[band];
            }
        }
        v
    }
}

/// One simulated acquisition date.
#[derive(Debug, Clone)]
pub struct SeriesFrame {
    pub date: DateTag,
    /// Fine observation (truth plus fine noise).
    pub fine: RasterGrid,
    /// Simulated coarse observation on the fine grid.
    pub coarse: RasterGrid,
    /// Noiseless fine reflectance.
    pub truth: RasterGrid,
}

impl SeriesFrame {
    pub fn pair(&self) -> ReferencePair {
        ReferencePair {
            date: self.date,
            fine: self.fine.clone(),
            coarse: self.coarse.clone(),
        }
    }
}

fn normal(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

/// Simulates every requested date; bit-deterministic for a given spec.
pub fn generate_series(spec: &SceneSpec, dates: &[i64]) -> Result<Vec<SeriesFrame>> {
    spec.validate()?;
    if dates.is_empty() {
        return Err(Error::Config("no dates requested".into()));
    }
    let (w, h, bands) = (spec.width, spec.height, spec.band_count);
    let plane = w * h;
    let classes = spec.class_map();

    let texture: Vec<f64> = match normal(spec.texture_sigma) {
        Some(dist) => {
            let mut rng = spec.stream(2);
            (0..plane * bands).map(|_| dist.sample(&mut rng)).collect()
        }
        None => vec![0.0; plane * bands],
    };

    // drift field per date, walking outward from the origin in both directions
    let mut sorted: Vec<i64> = dates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut drift: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
    if let Some(step) = normal(spec.drift_sigma) {
        let origin = spec.drift_origin.unwrap_or(sorted[0]);
        let mut rng = spec.stream(3);
        let mut walk = |seq: Vec<i64>, rng: &mut ChaCha8Rng| {
            let mut field = vec![0f64; plane * bands];
            let mut at = origin;
            for d in seq {
                let scale = ((d - at).abs() as f64).sqrt();
                for v in field.iter_mut() {
                    *v += scale * step.sample(rng);
                }
                at = d;
                drift.insert(d, field.clone());
            }
        };
        walk(sorted.iter().copied().filter(|&d| d >= origin).collect(), &mut rng);
        walk(sorted.iter().rev().copied().filter(|&d| d < origin).collect(), &mut rng);
    }

    let fine_noise = normal(spec.noise_sigma);
    let coarse_noise = normal(spec.coarse_noise_sigma);
    let mut frames = Vec::with_capacity(dates.len());
    for (di, &date) in dates.iter().enumerate() {
        let mut truth = vec![0f32; plane * bands];
        let field = drift.get(&date);
        for b in 0..bands {
            let levels: Vec<f64> = (0..spec.class_count)
                .map(|c| spec.class_value(c, date as f64, b))
                .collect();
            for i in 0..plane {
                let mut v = levels[classes[i]] + texture[b * plane + i];
                if let Some(f) = field {
                    v += f[b * plane + i];
                }
                truth[b * plane + i] = v as f32;
            }
        }
        let truth = RasterGrid::new(w, h, bands, truth, vec![true; plane], 1.0)?;

        let mut fine = truth.data().to_vec();
        if let Some(dist) = fine_noise {
            let mut rng = spec.stream(1000 + 2 * di as u64);
            fine.iter_mut()
                .for_each(|v| *v = (*v as f64 + dist.sample(&mut rng)) as f32);
        }
        let fine = RasterGrid::new(w, h, bands, fine, vec![true; plane], 1.0)?;

        let r = spec.resolution_ratio;
        let low = downsample_boxavg(&truth, r)?;
        let low = match coarse_noise {
            Some(dist) => {
                let mut rng = spec.stream(1001 + 2 * di as u64);
                let (data, mask) = low.into_parts();
                let data = data
                    .into_iter()
                    .map(|v| (v as f64 + dist.sample(&mut rng)) as f32)
                    .collect();
                RasterGrid::new(w / r, h / r, bands, data, mask, r as f64)?
            }
            None => low,
        };
        let coarse = upsample_cubic(&low, r)?;
        frames.push(SeriesFrame {
            date: DateTag(date),
            fine,
            coarse,
            truth,
        });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_spec() -> SceneSpec {
        SceneSpec {
            width: 16,
            height: 16,
            band_count: 2,
            class_count: 1,
            class_map_mode: ClassMapMode::Stripes,
            feature_size: 4,
            trajectories: vec![ClassTrajectory {
                knots: vec![Knot {
                    date: 0.0,
                    values: vec![0.2, 0.4],
                }],
            }],
            event: None,
            noise_sigma: 0.0,
            coarse_noise_sigma: 0.0,
            texture_sigma: 0.0,
            drift_sigma: 0.0,
            drift_origin: None,
            resolution_ratio: 4,
            seed: 1,
        }
    }

    #[test]
    fn constant_scene_is_constant() {
        let frames = generate_series(&constant_spec(), &[1, 50]).unwrap();
        for f in &frames {
            for g in [&f.fine, &f.coarse, &f.truth] {
                assert!(g.band(0).iter().all(|&v| (v - 0.2).abs() < 1e-6));
                assert!(g.band(1).iter().all(|&v| (v - 0.4).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn same_seed_same_series() {
        let mut spec = SceneSpec::linear(32, 32, 3, 4, ClassMapMode::VoronoiPatches, 0.002, 9);
        spec.noise_sigma = 0.01;
        spec.drift_sigma = 0.001;
        spec.texture_sigma = 0.01;
        spec.coarse_noise_sigma = 0.005;
        let a = generate_series(&spec, &[3, 10, 40]).unwrap();
        let b = generate_series(&spec, &[3, 10, 40]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.fine, y.fine);
            assert_eq!(x.coarse, y.coarse);
        }
        spec.seed = 10;
        let c = generate_series(&spec, &[3, 10, 40]).unwrap();
        assert_ne!(a[0].fine, c[0].fine);
    }

    #[test]
    fn linear_trajectories_match_analytic_values() {
        let mut spec = SceneSpec::linear(16, 16, 2, 2, ClassMapMode::Checkerboard, 0.003, 4);
        spec.noise_sigma = 0.01;
        let classes = spec.class_map();
        let frames = generate_series(&spec, &[0, 20]).unwrap();
        for f in &frames {
            for b in 0..2 {
                let mut resid = Vec::new();
                for i in 0..256 {
                    let t = &spec.trajectories[classes[i]];
                    let v0 = t.knots[0].values[b];
                    let slope = t.knots[1].values[b] - v0;
                    let expect = v0 + slope * f.date.0 as f64;
                    assert!((f.truth.band(b)[i] as f64 - expect).abs() < 1e-6);
                    resid.push(f.fine.band(b)[i] as f64 - expect);
                }
                let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
                assert!((sd - 0.01).abs() < 0.003, "noise sd {sd}");
            }
        }
    }

    #[test]
    fn class_maps() {
        let mut spec = SceneSpec::linear(8, 8, 1, 2, ClassMapMode::Checkerboard, 0.0, 1);
        spec.feature_size = 2;
        let m = spec.class_map();
        assert_eq!(&m[..8], &[0, 0, 1, 1, 0, 0, 1, 1]);
        assert_eq!(m[2 * 8], 1);
        spec.class_map_mode = ClassMapMode::Stripes;
        assert_eq!(spec.class_map()[16..24], [0, 0, 1, 1, 0, 0, 1, 1]);
        spec.class_map_mode = ClassMapMode::VoronoiPatches;
        assert!(spec.class_map().iter().all(|&c| c < 2));
    }

    #[test]
    fn trajectory_segments_and_event() {
        let t = ClassTrajectory {
            knots: vec![
                Knot { date: 0.0, values: vec![0.1] },
                Knot { date: 10.0, values: vec![0.3] },
                Knot { date: 20.0, values: vec![0.2] },
            ],
        };
        assert!((t.value(5.0, 0) - 0.2).abs() < 1e-12);
        assert!((t.value(15.0, 0) - 0.25).abs() < 1e-12);
        assert!((t.value(-10.0, 0) + 0.1).abs() < 1e-12);
        assert!((t.value(30.0, 0) - 0.1).abs() < 1e-12);

        let mut spec = constant_spec();
        spec.event = Some(AbruptChange { date: 10.0, classes: vec![0], offset: vec![0.1, -0.1] });
        assert!((spec.class_value(0, 9.0, 0) - 0.2).abs() < 1e-12);
        assert!((spec.class_value(0, 10.0, 1) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = constant_spec();
        s.resolution_ratio = 5;
        assert!(generate_series(&s, &[1]).is_err());
        let mut s = constant_spec();
        s.class_count = 2;
        assert!(s.validate().is_err());
        assert!(generate_series(&constant_spec(), &[]).is_err());
    }

    #[test]
    fn divergent_preset_walks_from_current_level() {
        let base = SceneSpec::linear(16, 16, 2, 3, ClassMapMode::Stripes, 0.0, 5);
        let start = base.class_value(1, 0.0, 1);
        let spec = base.with_divergent_trajectories(&[0.0, 10.0, 20.0], 0.05);
        assert!(spec.validate().is_ok());
        assert_eq!(spec.trajectories[1].knots.len(), 3);
        assert!((spec.class_value(1, 0.0, 1) - start).abs() < 1e-12);
        let k = &spec.trajectories[1].knots;
        assert!((k[1].values[1] - k[0].values[1]).abs() <= 0.05);
        assert_ne!(k[1].values[1], k[0].values[1]);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SceneSpec::linear(16, 16, 2, 3, ClassMapMode::Stripes, 0.001, 2);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&text).unwrap(), spec);
    }
}
