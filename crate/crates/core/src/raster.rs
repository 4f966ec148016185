//! In-memory reflectance rasters.
//!
//! A [`RasterGrid`] stores `bands` planes of `width * height` 32-bit floats in
//! band-sequential, row-major order, plus one validity flag per pixel shared by
//! all bands. Values at invalid pixels are unspecified and never read by the
//! algorithms in this crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    width: usize,
    height: usize,
    bands: usize,
    data: Vec<f32>,
    mask: Vec<bool>,
    pixel_size: f64,
}

impl RasterGrid {
    /// Builds a grid after checking the layout invariants. Non-finite values
    /// are only rejected where the mask marks the pixel valid.
    pub fn new(
        width: usize,
        height: usize,
        bands: usize,
        data: Vec<f32>,
        mask: Vec<bool>,
        pixel_size: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::Geometry(format!(
                "degenerate geometry {width}x{height}x{bands}"
            )));
        }
        let plane = width * height;
        if data.len() != plane * bands {
            return Err(Error::Geometry(format!(
                "data length {} does not match {width}x{height}x{bands}",
                data.len()
            )));
        }
        if mask.len() != plane {
            return Err(Error::Geometry(format!(
                "mask length {} does not match {width}x{height}",
                mask.len()
            )));
        }
        for band in 0..bands {
            let values = &data[band * plane..(band + 1) * plane];
            for (i, (&v, &ok)) in values.iter().zip(&mask).enumerate() {
                if ok && !v.is_finite() {
                    return Err(Error::NonFinite {
                        x: i % width,
                        y: i / width,
                        band,
                    });
                }
            }
        }
        Ok(Self {
            width,
            height,
            bands,
            data,
            mask,
            pixel_size,
        })
    }

    /// All-valid grid filled with one value.
    pub fn filled(width: usize, height: usize, bands: usize, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            bands,
            vec![value; width * height * bands],
            vec![true; width * height],
            1.0,
        )
    }

    /// All-valid grid whose value at `(x, y, band)` is `f(x, y, band)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        bands: usize,
        f: impl Fn(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * bands);
        for band in 0..bands {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, band));
                }
            }
        }
        Self::new(width, height, bands, data, vec![true; width * height], 1.0)
    }

    pub fn with_mask(self, mask: Vec<bool>) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.bands,
            self.data,
            mask,
            self.pixel_size,
        )
    }

    pub fn with_pixel_size(mut self, pixel_size: f64) -> Self {
        self.pixel_size = pixel_size;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn into_parts(self) -> (Vec<f32>, Vec<bool>) {
        (self.data, self.mask)
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let plane = self.plane_len();
        &self.data[band * plane..(band + 1) * plane]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, band: usize) -> f32 {
        self.data[band * self.plane_len() + y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn same_geometry(&self, other: &RasterGrid) -> bool {
        self.width == other.width && self.height == other.height && self.bands == other.bands
    }

    pub fn check_same_geometry(&self, other: &RasterGrid, what: &str) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.bands, other.width, other.height, other.bands
            )))
        }
    }

    /// Count of valid values outside the nominal reflectance range [0, 1].
    pub fn out_of_range_count(&self) -> usize {
        let plane = self.plane_len();
        self.data
            .iter()
            .enumerate()
            .filter(|(i, v)| self.mask[i % plane] && !(0.0..=1.0).contains(*v))
            .count()
    }
}

/// Acquisition date as an ordinal day number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DateTag(pub i64);

impl std::fmt::Display for DateTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Co-registered fine and coarse observations of one date. The coarse grid is
/// already resampled onto the fine geometry.
#[derive(Debug, Clone)]
pub struct ReferencePair {
    pub date: DateTag,
    pub fine: RasterGrid,
    pub coarse: RasterGrid,
}

impl ReferencePair {
    pub fn new(date: DateTag, fine: RasterGrid, coarse: RasterGrid) -> Result<Self> {
        fine.check_same_geometry(&coarse, "reference pair fine/coarse")?;
        Ok(Self { date, fine, coarse })
    }
}
