//! Inter-frame displacement of profile pairs: cross-correlation (CC) and
//! optical flow (OF). Crossed with the three profile kinds these give the
//! six core algorithms.

mod cc;
mod of;

pub use cc::cc_estimate;
pub use of::{averaging_kernel, derivative_kernel, of_estimate};

use crate::error::{Error, Result};
use crate::profiles::ProfileSet;

/// Displacement of one block between two frames, in pixels per frame interval.
///
/// Positive `v_y` means the content moved towards larger row indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample {
    pub v_y: f64,
    /// Horizontal component, only for 2-D profiles.
    pub v_x: Option<f64>,
    pub frame_interval: usize,
    pub quality: f64,
    /// Set when a 2-D regression was ill-conditioned and fell back to the
    /// vertical-only solution.
    pub vertical_fallback: bool,
}

impl VelocitySample {
    pub fn vertical(v_y: f64, quality: f64) -> Self {
        Self {
            v_y,
            v_x: None,
            frame_interval: 1,
            quality,
            vertical_fallback: false,
        }
    }

    pub fn with_interval(mut self, frame_interval: usize) -> Self {
        self.frame_interval = frame_interval;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    CC,
    OF,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::CC, Strategy::OF];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::CC => "cc",
            Strategy::OF => "of",
        }
    }
}

/// How the correlation peak is refined below the integer lag grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Correlate against the linearly interpolated second profile on a
    /// `subpixel_step` lattice around the integer peak.
    Linear,
    /// Three-point parabola through the integer correlation samples.
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcConfig {
    pub search_radius: usize,
    pub subpixel_step: f64,
    pub interpolation: Interpolation,
}

impl Default for CcConfig {
    fn default() -> Self {
        Self {
            search_radius: 5,
            subpixel_step: 0.01,
            interpolation: Interpolation::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfConfig {
    /// Length of the spatial derivative kernel (2 gives `[-1, 1]`).
    pub kernel_len: usize,
    pub regularization_epsilon: f64,
}

impl Default for OfConfig {
    fn default() -> Self {
        Self {
            kernel_len: 2,
            regularization_epsilon: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionConfig {
    pub cc: CcConfig,
    pub of: OfConfig,
}

/// Runs the chosen strategy on a profile pair.
pub fn estimate(
    strategy: Strategy,
    first: &ProfileSet,
    second: &ProfileSet,
    cfg: &MotionConfig,
) -> Result<VelocitySample> {
    match strategy {
        Strategy::CC => cc_estimate(first, second, &cfg.cc),
        Strategy::OF => of_estimate(first, second, &cfg.of),
    }
}

pub(crate) fn check_pair(first: &ProfileSet, second: &ProfileSet) -> Result<()> {
    if first.kind() != second.kind() || first.dims() != second.dims() {
        return Err(Error::Config(format!(
            "profile mismatch: {:?} {:?} vs {:?} {:?}",
            first.kind(),
            first.dims(),
            second.kind(),
            second.dims()
        )));
    }
    Ok(())
}

/// Per-column vertical estimate used when combining CC-M1D results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnEstimate {
    pub v_y: f64,
    pub quality: f64,
}

/// Median of the per-column vertical shifts.
pub fn combine_column_velocities(samples: &[ColumnEstimate]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoEstimate("no column produced an estimate".into()));
    }
    let mut v: Vec<f64> = samples.iter().map(|s| s.v_y).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
