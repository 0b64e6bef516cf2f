use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::PhantomProtocol;
use crate::error::{Error, Result};
use crate::frame::{Frame, Region};

/// Oversampling factor of the stored moving pattern.
const OVERSAMPLE: usize = 4;
/// Pixels of pattern kept outside the frame on every side.
const MARGIN_PX: usize = 16;

const PATTERN_STREAM: u64 = u64::MAX;
const BACKGROUND_STREAM: u64 = u64::MAX - 1;
/// Rows of the expert RoI reserved for the downward excursion of the region.
pub const EXCURSION_ROWS: usize = 6;

/// Geometry and photometry of the phantom scene, in pixels.
///
/// The moving region is a superellipse (the blanket over the phantom) with
/// rounded corners, so it has both straight and curved intensity edges;
/// everything outside it is static textured background. At rest it fills
/// the top of the expert RoI and leaves `EXCURSION_ROWS` below it, so the
/// downward motion stays inside the RoI.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneLayout {
    pub center_row: f64,
    pub center_col: f64,
    pub radius_rows: f64,
    pub radius_cols: f64,
    /// Superellipse exponent; 2 is an ellipse, larger values approach a rectangle.
    pub shape_exponent: f64,
    /// Reflectance step between the moving region and the background.
    pub edge_step: f64,
    /// Standard deviation of the reflectance texture (relative units).
    pub texture_std: f64,
    /// Gaussian correlation length of the texture, in pixels.
    pub texture_corr_px: f64,
    /// `I0 · P0`, the mean intensity of the scene.
    pub base_intensity: f64,
    /// Expert region of interest: a 24x60 patch over the phantom, aligned
    /// to the default 12x30 block grid.
    pub roi: Region,
}

impl SceneLayout {
    pub fn for_frame(width: usize, height: usize) -> Self {
        let (roi_h, roi_w) = (24usize.min(height), 60usize.min(width));
        let row = ((height - roi_h) / 2) / 6 * 6;
        let col = ((width - roi_w) / 2) / 30 * 30;
        let roi = Region::new(row, col, roi_h, roi_w);
        let rest_h = roi_h.saturating_sub(EXCURSION_ROWS).max(roi_h / 2) as f64;
        Self {
            center_row: row as f64 + rest_h / 2.0,
            center_col: col as f64 + roi_w as f64 / 2.0,
            radius_rows: rest_h / 2.0,
            radius_cols: roi_w as f64 / 2.0 - 1.0,
            shape_exponent: 4.0,
            edge_step: 0.05,
            texture_std: 0.08,
            texture_corr_px: 2.0,
            base_intensity: 100.0,
            roi,
        }
    }

    /// Fraction of the pixel at (`row`, `col`) covered by the moving region
    /// in its rest position, with a one-pixel linear edge ramp.
    fn coverage(&self, row: f64, col: f64) -> f64 {
        let p = self.shape_exponent;
        let dr = (row - self.center_row) / self.radius_rows;
        let dc = (col - self.center_col) / self.radius_cols;
        let g = dr.abs().powf(p) + dc.abs().powf(p);
        let gr = p * dr.abs().powf(p - 1.0) * dr.signum() / self.radius_rows;
        let gc = p * dc.abs().powf(p - 1.0) * dc.signum() / self.radius_cols;
        let norm = (gr * gr + gc * gc).sqrt();
        if norm < 1e-12 {
            return if g < 1.0 { 1.0 } else { 0.0 };
        }
        (0.5 - (g - 1.0) / norm).clamp(0.0, 1.0)
    }
}

/// Immutable scene: the moving reflectance pattern, the static background
/// and the photometric constants. Frames are pure functions of the scene,
/// the protocol, the time and the frame's noise stream.
#[derive(Debug, Clone)]
pub struct SceneModel {
    width: usize,
    height: usize,
    layout: SceneLayout,
    noise_seed: u64,
    /// Zero-mean moving texture, oversampled.
    pattern: Vec<f32>,
    pattern_rows: usize,
    pattern_cols: usize,
    /// Reflectance modulation level inside the moving region.
    inside_level: f64,
    /// Static reflectance modulation of every frame pixel (background level included).
    background: Vec<f32>,
}

impl SceneModel {
    pub fn from_protocol(protocol: &PhantomProtocol) -> Result<Self> {
        protocol.validate()?;
        let layout = SceneLayout::for_frame(protocol.frame_width, protocol.frame_height);
        Self::new(
            protocol.frame_width,
            protocol.frame_height,
            layout,
            protocol.pattern_seed,
        )
    }

    pub fn new(width: usize, height: usize, layout: SceneLayout, seed: u64) -> Result<Self> {
        if !layout.roi.fits(height, width) {
            return Err(Error::Config("scene RoI does not fit the frame".into()));
        }
        let pattern_rows = (height + 2 * MARGIN_PX) * OVERSAMPLE;
        let pattern_cols = (width + 2 * MARGIN_PX) * OVERSAMPLE;
        let mut pattern = band_limited_texture(
            pattern_rows,
            pattern_cols,
            layout.texture_corr_px * OVERSAMPLE as f64,
            seed,
            PATTERN_STREAM,
        );
        let mut background = band_limited_texture(height, width, layout.texture_corr_px, seed, BACKGROUND_STREAM);
        for v in pattern.iter_mut() {
            *v *= layout.texture_std as f32;
        }

        // Levels chosen so the rest-position frame has zero mean modulation.
        let covered: f64 = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| layout.coverage(r as f64, c as f64))
            .sum();
        let total = (width * height) as f64;
        let inside_level = layout.edge_step * (1.0 - covered / total);
        let background_level = inside_level - layout.edge_step;
        for v in background.iter_mut() {
            *v = (*v as f64 * layout.texture_std + background_level) as f32;
        }

        Ok(Self {
            width,
            height,
            layout,
            noise_seed: seed,
            pattern,
            pattern_rows,
            pattern_cols,
            inside_level,
            background,
        })
    }

    pub fn layout(&self) -> &SceneLayout {
        &self.layout
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Bilinear sample of the moving pattern at frame coordinates.
    fn pattern_at(&self, row: f64, col: f64) -> f64 {
        let os = OVERSAMPLE as f64;
        let y = ((row + MARGIN_PX as f64) * os).clamp(0.0, (self.pattern_rows - 1) as f64);
        let x = ((col + MARGIN_PX as f64) * os).clamp(0.0, (self.pattern_cols - 1) as f64);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(self.pattern_rows - 1), (x0 + 1).min(self.pattern_cols - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let p = |r: usize, c: usize| self.pattern[r * self.pattern_cols + c] as f64;
        let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
        let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Noise-free reflectance modulation `P(x, y)` with the moving region
    /// displaced by (`dx`, `dy`) pixels.
    pub fn modulation(&self, row: usize, col: usize, dx: f64, dy: f64) -> f64 {
        let (u, v) = (col as f64 - dx, row as f64 - dy);
        let cover = self.layout.coverage(v, u);
        let bg = self.background[row * self.width + col] as f64;
        if cover == 0.0 {
            return bg;
        }
        let inside = self.inside_level + self.pattern_at(v, u);
        cover * inside + (1.0 - cover) * bg
    }

    /// Renders the full frame at time `t`; `frame_index` selects the noise stream.
    pub fn render_frame(&self, protocol: &PhantomProtocol, t: f64, frame_index: u64) -> Result<Frame> {
        self.render_region(protocol, t, frame_index, Region::new(0, 0, self.height, self.width))
    }

    /// Renders only `region` of the frame. Pixels are identical to the
    /// corresponding pixels of [`SceneModel::render_frame`].
    pub fn render_region(&self, protocol: &PhantomProtocol, t: f64, frame_index: u64, region: Region) -> Result<Frame> {
        if !region.fits(self.height, self.width) {
            return Err(Error::Config(format!("region {region:?} outside the frame")));
        }
        let (_, segment, _) = protocol.segment_at(t)?;
        let dy = protocol.displacement_px(t)?;
        let dx = protocol.horizontal_ratio * dy;
        let gain = self.layout.base_intensity * (1.0 + protocol.illumination_at(t));
        let sigma = protocol.noise_sigma(segment.lighting);

        let mut data = Vec::with_capacity(region.area());
        let mut noise_row = vec![0.0f64; region.col + region.width];
        for row in region.row..region.row + region.height {
            if sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
                rng.set_stream(frame_index * self.height as u64 + row as u64);
                for n in noise_row.iter_mut() {
                    *n = sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            for col in region.col..region.col + region.width {
                let value = gain * (1.0 + self.modulation(row, col, dx, dy)) + noise_row[col];
                data.push(value.round().clamp(0.0, 255.0) as u8);
            }
        }
        Ok(Frame::new(region.width, region.height, t, data))
    }
}

/// Zero-mean, unit-variance Gaussian-smoothed white noise.
fn band_limited_texture(rows: usize, cols: usize, sigma: f64, seed: u64, stream: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let noise: Vec<f64> = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();

    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();

    let blur = |src: &[f64], n_rows: usize, n_cols: usize, along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for r in 0..n_rows {
            for c in 0..n_cols {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let off = k as isize - radius;
                    let (rr, cc) = if along_rows {
                        ((r as isize + off).clamp(0, n_rows as isize - 1) as usize, c)
                    } else {
                        (r, (c as isize + off).clamp(0, n_cols as isize - 1) as usize)
                    };
                    acc += w * src[rr * n_cols + cc];
                }
                out[r * n_cols + c] = acc;
            }
        }
        out
    };
    let smoothed = blur(&blur(&noise, rows, cols, false), rows, cols, true);

    let n = smoothed.len() as f64;
    let mean = smoothed.iter().sum::<f64>() / n;
    let std = (smoothed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    smoothed.iter().map(|v| ((v - mean) / std) as f32).collect()
}
