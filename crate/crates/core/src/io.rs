//! Raw raster files with a JSON sidecar header.
//!
//! The payload at `path` holds band-sequential, row-major, little-endian f32
//! values, followed by `width * height` mask bytes (0 or 1) when the header
//! says `"mask": "present"`. The header lives at `path` + `.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

pub const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskPresence {
    Present,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub pixel_size: f64,
    pub dtype: String,
    pub mask: MaskPresence,
}

impl RasterHeader {
    pub fn payload_len(&self) -> usize {
        let values = self.width * self.height * self.bands * 4;
        match self.mask {
            MaskPresence::Present => values + self.width * self.height,
            MaskPresence::Absent => values,
        }
    }
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<RasterGrid> {
    let path = path.as_ref();
    let hpath = header_path(path);
    let text = fs::read_to_string(&hpath).map_err(|e| Error::io(&hpath, e))?;
    let header: RasterHeader = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: hpath.clone(),
        message: e.to_string(),
    })?;
    if header.dtype != DTYPE_F32LE {
        return Err(Error::Header {
            path: hpath,
            message: format!("unsupported dtype {:?}", header.dtype),
        });
    }
    if header.width == 0 || header.height == 0 || header.bands == 0 {
        return Err(Error::Header {
            path: hpath,
            message: "zero-sized geometry".into(),
        });
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&header, &bytes)
}

fn decode(header: &RasterHeader, bytes: &[u8]) -> Result<RasterGrid> {
    let expected = header.payload_len();
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let plane = header.width * header.height;
    let n = plane * header.bands;
    let data: Vec<f32> = bytes[..n * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mask = match header.mask {
        MaskPresence::Absent => vec![true; plane],
        MaskPresence::Present => bytes[n * 4..]
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Geometry(format!("mask byte {other} is not 0/1"))),
            })
            .collect::<Result<_>>()?,
    };
    let grid = RasterGrid::new(
        header.width,
        header.height,
        header.bands,
        data,
        mask,
        header.pixel_size,
    )?;
    let outside = grid.out_of_range_count();
    if outside > 0 {
        log::warn!("{outside} valid values fall outside the nominal [0, 1] reflectance range");
    }
    Ok(grid)
}

pub fn write_raster(grid: &RasterGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let has_mask = grid.mask().iter().any(|&m| !m);
    let header = RasterHeader {
        width: grid.width(),
        height: grid.height(),
        bands: grid.bands(),
        pixel_size: grid.pixel_size(),
        dtype: DTYPE_F32LE.to_string(),
        mask: if has_mask {
            MaskPresence::Present
        } else {
            MaskPresence::Absent
        },
    };
    let mut bytes = Vec::with_capacity(header.payload_len());
    for v in grid.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if has_mask {
        bytes.extend(grid.mask().iter().map(|&m| u8::from(m)));
    }
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let hpath = header_path(path);
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(&hpath, text).map_err(|e| Error::io(&hpath, e))?;
    Ok(())
}
