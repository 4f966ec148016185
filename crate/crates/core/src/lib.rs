//! Spatiotemporal non-local filter fusion of fine- and coarse-resolution
//! reflectance rasters.
//!
//! Given fine/coarse image pairs at reference dates and a coarse image at a
//! prediction date, [`fusion::predict_image`] synthesises the fine image at
//! the prediction date. Coarse grids are expected on the fine pixel grid; use
//! [`resample::upsample_cubic`] to get them there.

pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod io;
pub mod oracle;
mod parallel;
pub mod raster;
pub mod regression;
pub mod resample;
pub mod series;
pub mod similarity;
pub mod synth;
pub mod weights;

pub use error::{Error, ErrorCategory, Result};
pub use evaluation::{evaluate, r_squared, rmse, EvalReport};
pub use fusion::{predict_image, predict_pixel, FusionConfig, FusionEngine, FusionMode, FusionTask};
pub use io::{read_raster, write_raster};
pub use oracle::oracle_predict;
pub use parallel::parallel_enabled;
pub use raster::{DateTag, RasterGrid, ReferencePair};
pub use series::{predict_series, SeriesProtocol, SweepRow};
pub use synth::{generate_series, SceneSpec};
