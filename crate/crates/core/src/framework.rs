//! Fixed-RoI and auto-RoI extraction over a video.
//!
//! Fixed-RoI runs one algorithm on a given patch. Auto-RoI tiles the frame
//! into half-overlapping blocks, extracts a signal per block, scores every
//! block by spectral SNR in sliding windows, keeps the strongest ones and
//! fuses their motion into one signal.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSource, Region};
use crate::motion::{self, MotionConfig, Strategy, VelocitySample};
use crate::pipeline::{
    integrate_velocities, nearest_window, sliding_windows, windowed_snr, AnalysisWindow, RespiratorySignal,
    SNR_HOP_SECONDS, SNR_WINDOW_SECONDS,
};
use crate::profiles::{block_profile, Block, ProfileKind, ProfileSet};
use crate::textio::{fmt_f64, parse_entries, Table};

/// One of the six strategy/profile combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AlgorithmId {
    pub strategy: Strategy,
    pub profile: ProfileKind,
}

impl AlgorithmId {
    pub const fn new(strategy: Strategy, profile: ProfileKind) -> Self {
        Self { strategy, profile }
    }

    pub const ALL: [AlgorithmId; 6] = [
        AlgorithmId::new(Strategy::CC, ProfileKind::C1D),
        AlgorithmId::new(Strategy::CC, ProfileKind::M1D),
        AlgorithmId::new(Strategy::CC, ProfileKind::D2),
        AlgorithmId::new(Strategy::OF, ProfileKind::C1D),
        AlgorithmId::new(Strategy::OF, ProfileKind::M1D),
        AlgorithmId::new(Strategy::OF, ProfileKind::D2),
    ];

    /// Parses a single id or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<AlgorithmId>> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',').map(|p| p.trim().parse()).collect()
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.strategy.as_str(), self.profile.as_str())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|a| a.to_string() == lower)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}` (expected cc|of-c1d|m1d|2d)")))
    }
}

/// One tile of the block grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridBlock {
    pub id: usize,
    pub grid_row: usize,
    pub grid_col: usize,
    pub region: Region,
}

/// Blocks overlapping by half their height vertically and not at all
/// horizontally. Pixels beyond the last full block are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    pub block_rows: usize,
    pub block_cols: usize,
    pub row_step: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub blocks: Vec<GridBlock>,
}

pub const DEFAULT_BLOCK_SIZE: (usize, usize) = (12, 30);

impl BlockGrid {
    pub fn new(frame_height: usize, frame_width: usize, block_rows: usize, block_cols: usize) -> Result<Self> {
        if block_rows < 2 || block_rows % 2 != 0 || block_cols == 0 {
            return Err(Error::Config(format!(
                "block size {block_rows}x{block_cols}: height must be even and >= 2"
            )));
        }
        if block_rows > frame_height || block_cols > frame_width {
            return Err(Error::Config(format!(
                "block {block_rows}x{block_cols} larger than frame {frame_height}x{frame_width}"
            )));
        }
        let row_step = block_rows / 2;
        let grid_rows = (frame_height - block_rows) / row_step + 1;
        let grid_cols = frame_width / block_cols;
        let blocks = (0..grid_rows)
            .flat_map(|gr| (0..grid_cols).map(move |gc| (gr, gc)))
            .enumerate()
            .map(|(id, (gr, gc))| GridBlock {
                id,
                grid_row: gr,
                grid_col: gc,
                region: Region::new(gr * row_step, gc * block_cols, block_rows, block_cols),
            })
            .collect();
        Ok(Self {
            block_rows,
            block_cols,
            row_step,
            grid_rows,
            grid_cols,
            blocks,
        })
    }

    pub fn with_default_blocks(frame_height: usize, frame_width: usize) -> Result<Self> {
        Self::new(frame_height, frame_width, DEFAULT_BLOCK_SIZE.0, DEFAULT_BLOCK_SIZE.1)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Blocks with at least half their area inside `roi`.
    pub fn blocks_within(&self, roi: Region) -> Vec<usize> {
        self.blocks
            .iter()
            .filter(|b| 2 * b.region.overlap(&roi) >= b.region.area())
            .map(|b| b.id)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Fixed,
    Auto,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(Mode::Fixed),
            "auto" => Ok(Mode::Auto),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Fixed => "fixed",
            Mode::Auto => "auto",
        })
    }
}

/// Parameters of the auto-RoI block selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub top_k: usize,
    pub snr_floor: f64,
    pub window_seconds: f64,
    pub hop_seconds: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            top_k: 5,
            snr_floor: 0.1,
            window_seconds: SNR_WINDOW_SECONDS,
            hop_seconds: SNR_HOP_SECONDS,
        }
    }
}

/// Everything needed to run one algorithm over a video.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: AlgorithmId,
    pub mode: Mode,
    pub frame_interval: usize,
    pub motion: MotionConfig,
    pub block_size: (usize, usize),
    pub selection: SelectionParams,
    /// Patch for fixed mode; also the reference for RoI correspondence.
    pub roi: Option<Region>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmId::new(Strategy::OF, ProfileKind::M1D),
            mode: Mode::Fixed,
            frame_interval: 1,
            motion: MotionConfig::default(),
            block_size: DEFAULT_BLOCK_SIZE,
            selection: SelectionParams::default(),
            roi: None,
        }
    }
}

fn parse_region(s: &str) -> Option<Region> {
    let v: Vec<usize> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    match v[..] {
        [row, col, height, width] => Some(Region::new(row, col, height, width)),
        _ => None,
    }
}

impl RunConfig {
    /// Reads `key = value` lines: `algo`, `mode`, `interval`, `kernel`,
    /// `epsilon`, `search_radius`, `subpixel_step`, `interpolation`
    /// (`linear`/`parabolic`), `grid` (`H,W`), `topk`, `snr_floor`,
    /// `window_seconds`, `hop_seconds`, `roi` (`r,c,h,w`).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for e in parse_entries(text)? {
            match e.key.as_str() {
                "algo" => cfg.algorithm = e.value.parse().map_err(|err: Error| e.error(err.to_string()))?,
                "mode" => cfg.mode = e.value.parse().map_err(|err: Error| e.error(err.to_string()))?,
                "interval" => cfg.frame_interval = e.parse()?,
                "kernel" => cfg.motion.of.kernel_len = e.parse()?,
                "epsilon" => cfg.motion.of.regularization_epsilon = e.parse()?,
                "search_radius" => cfg.motion.cc.search_radius = e.parse()?,
                "subpixel_step" => cfg.motion.cc.subpixel_step = e.parse()?,
                "interpolation" => {
                    cfg.motion.cc.interpolation = match e.value.to_ascii_lowercase().as_str() {
                        "linear" => motion::Interpolation::Linear,
                        "parabolic" => motion::Interpolation::Parabolic,
                        _ => return Err(e.error("expected `linear` or `parabolic`")),
                    }
                }
                "grid" => match e.parse_list::<usize>()?[..] {
                    [h, w] => cfg.block_size = (h, w),
                    _ => return Err(e.error("expected `H,W`")),
                },
                "topk" => cfg.selection.top_k = e.parse()?,
                "snr_floor" => cfg.selection.snr_floor = e.parse()?,
                "window_seconds" => cfg.selection.window_seconds = e.parse()?,
                "hop_seconds" => cfg.selection.hop_seconds = e.parse()?,
                "roi" => cfg.roi = Some(parse_region(&e.value).ok_or_else(|| e.error("expected `r,c,h,w`"))?),
                _ => return Err(e.error("unknown key")),
            }
        }
        Ok(cfg)
    }

    /// Inverse of [`RunConfig::from_text`].
    pub fn to_text(&self) -> String {
        let m = &self.motion;
        let mut s = format!(
            "algo = {}\nmode = {}\ninterval = {}\nkernel = {}\nepsilon = {}\nsearch_radius = {}\n\
             subpixel_step = {}\ninterpolation = {}\ngrid = {},{}\ntopk = {}\nsnr_floor = {}\n\
             window_seconds = {}\nhop_seconds = {}\n",
            self.algorithm,
            self.mode,
            self.frame_interval,
            m.of.kernel_len,
            fmt_f64(m.of.regularization_epsilon),
            m.cc.search_radius,
            fmt_f64(m.cc.subpixel_step),
            match m.cc.interpolation {
                motion::Interpolation::Linear => "linear",
                motion::Interpolation::Parabolic => "parabolic",
            },
            self.block_size.0,
            self.block_size.1,
            self.selection.top_k,
            fmt_f64(self.selection.snr_floor),
            fmt_f64(self.selection.window_seconds),
            fmt_f64(self.selection.hop_seconds),
        );
        if let Some(r) = self.roi {
            s.push_str(&format!("roi = {},{},{},{}\n", r.row, r.col, r.height, r.width));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_interval == 0 {
            return Err(Error::Config("frame interval must be >= 1".into()));
        }
        if self.motion.of.kernel_len < 2 {
            return Err(Error::Config("kernel length must be >= 2".into()));
        }
        if self.motion.cc.search_radius == 0 || !(self.motion.cc.subpixel_step > 0.0) {
            return Err(Error::Config(
                "search radius and sub-pixel step must be positive".into(),
            ));
        }
        if !(self.selection.window_seconds > 0.0 && self.selection.hop_seconds > 0.0) {
            return Err(Error::Config("window and hop lengths must be positive".into()));
        }
        Ok(())
    }
}

fn profile_of(frame: &Frame, region: Region, kind: ProfileKind) -> Option<ProfileSet> {
    let mut block = Block::from_frame(frame, region).ok()?;
    block.timestamp = frame.timestamp;
    block_profile(&block, kind).ok()
}

/// Velocity of every region between frames `i` and `i + interval` for each
/// valid `i`; `None` where the estimate failed. Frames are read once, in
/// order, keeping only the last `interval + 1` profile sets.
pub fn regions_velocities(
    video: &dyn FrameSource,
    regions: &[Region],
    algorithm: AlgorithmId,
    frame_interval: usize,
    motion_cfg: &MotionConfig,
) -> Result<Vec<Vec<Option<VelocitySample>>>> {
    if frame_interval == 0 {
        return Err(Error::Config("frame interval must be >= 1".into()));
    }
    let (h, w) = (video.height(), video.width());
    if let Some(r) = regions.iter().find(|r| !r.fits(h, w)) {
        return Err(Error::Config(format!("region {r:?} exceeds {h}x{w} frame")));
    }
    let n = video.frame_count();
    let steps = n.saturating_sub(frame_interval);
    let mut out: Vec<Vec<Option<VelocitySample>>> = vec![Vec::with_capacity(steps); regions.len()];
    if steps == 0 {
        return Ok(out);
    }
    let profiles_at = |i: usize| -> Result<Vec<Option<ProfileSet>>> {
        let frame = video.frame(i)?;
        Ok(regions
            .par_iter()
            .map(|&r| profile_of(&frame, r, algorithm.profile))
            .collect())
    };
    let mut recent: VecDeque<Vec<Option<ProfileSet>>> = VecDeque::with_capacity(frame_interval + 1);
    for i in 0..frame_interval {
        recent.push_back(profiles_at(i)?);
    }
    for lead in 0..steps {
        recent.push_back(profiles_at(lead + frame_interval)?);
        let first = recent.pop_front().expect("ring holds interval + 1 entries");
        let second = recent.back().expect("just pushed");
        let v: Vec<Option<VelocitySample>> = first
            .par_iter()
            .zip(second.par_iter())
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => motion::estimate(algorithm.strategy, a, b, motion_cfg)
                    .ok()
                    .map(|s| s.with_interval(frame_interval)),
                _ => None,
            })
            .collect();
        for (dst, v) in out.iter_mut().zip(v) {
            dst.push(v);
        }
    }
    Ok(out)
}

fn signal_start(fps: f64, frame_interval: usize) -> f64 {
    // The k-th sample accumulates displacement up to frames k+1 ..= k+interval.
    (frame_interval as f64 + 1.0) / (2.0 * fps)
}

/// Result of a single-patch extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRoiRun {
    pub signal: RespiratorySignal,
    pub velocities: Vec<Option<VelocitySample>>,
}

pub fn run_fixed_roi(
    video: &dyn FrameSource,
    roi: Region,
    algorithm: AlgorithmId,
    frame_interval: usize,
    motion_cfg: &MotionConfig,
) -> Result<FixedRoiRun> {
    let velocities = regions_velocities(video, &[roi], algorithm, frame_interval, motion_cfg)?
        .pop()
        .expect("one region");
    let mut signal = integrate_velocities(&velocities, video.fps());
    signal.start_time = signal_start(video.fps(), frame_interval);
    signal.source = format!("roi:{},{},{},{}", roi.row, roi.col, roi.height, roi.width);
    Ok(FixedRoiRun { signal, velocities })
}

/// Per-window block scores and the blocks kept in each window.
#[derive(Debug, Clone, PartialEq)]
pub struct RoISelection {
    pub params: SelectionParams,
    pub windows: Vec<AnalysisWindow>,
    /// `snr[window][block]`.
    pub snr: Vec<Vec<f64>>,
    /// Selected block ids per window, strongest first.
    pub selected: Vec<Vec<usize>>,
}

impl RoISelection {
    /// Windows in which no block passed the SNR floor.
    pub fn empty_windows(&self) -> usize {
        self.selected.iter().filter(|s| s.is_empty()).count()
    }

    pub fn empty_fraction(&self) -> f64 {
        if self.selected.is_empty() {
            return 0.0;
        }
        self.empty_windows() as f64 / self.selected.len() as f64
    }

    /// `window, start_time, block_row, block_col, snr` rows for heat maps.
    pub fn snr_map(&self, grid: &BlockGrid, fps: f64) -> Table {
        let mut t = Table::new(["window", "start_time", "block_row", "block_col", "snr"]);
        for (w, (win, row)) in self.windows.iter().zip(&self.snr).enumerate() {
            for b in &grid.blocks {
                t.push(vec![
                    w.to_string(),
                    fmt_f64(win.start as f64 / fps),
                    b.grid_row.to_string(),
                    b.grid_col.to_string(),
                    fmt_f64(row[b.id]),
                ]);
            }
        }
        t
    }

    /// `window, rank, block` rows; empty windows get a single `-1` block.
    pub fn trace(&self) -> Table {
        let mut t = Table::new(["window", "rank", "block"]);
        for (w, sel) in self.selected.iter().enumerate() {
            if sel.is_empty() {
                t.push(vec![w.to_string(), "0".into(), "-1".into()]);
            }
            for (rank, b) in sel.iter().enumerate() {
                t.push(vec![w.to_string(), rank.to_string(), b.to_string()]);
            }
        }
        t
    }
}

/// Selected block ids per window, read back from a [`RoISelection::trace`] table.
pub fn selection_from_trace(trace: &Table) -> Result<Vec<Vec<usize>>> {
    let windows: Vec<usize> = trace.column("window")?;
    let blocks: Vec<i64> = trace.column("block")?;
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); windows.iter().max().map_or(0, |w| w + 1)];
    for (&w, &b) in windows.iter().zip(&blocks) {
        if b >= 0 {
            out[w].push(b as usize);
        }
    }
    Ok(out)
}

/// Top-`k` blocks by SNR (ties towards the lower id) that reach `floor`.
pub fn select_blocks(snr: &[f64], top_k: usize, floor: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..snr.len()).collect();
    order.sort_by(|&a, &b| snr[b].total_cmp(&snr[a]).then(a.cmp(&b)));
    order.into_iter().take(top_k).filter(|&b| snr[b] >= floor).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoRoiRun {
    pub signal: RespiratorySignal,
    pub block_signals: Vec<RespiratorySignal>,
    pub selection: RoISelection,
}

/// Dense-grid extraction with SNR-based block selection.
///
/// The fused velocity at each step is the SNR-weighted mean of the blocks
/// selected in the window whose centre is nearest; integrating it gives the
/// same signal as averaging zero-mean block signals and chaining windows end
/// to end. Windows without a selection contribute no motion.
pub fn run_auto_roi(
    video: &dyn FrameSource,
    grid: &BlockGrid,
    algorithm: AlgorithmId,
    frame_interval: usize,
    motion_cfg: &MotionConfig,
    params: &SelectionParams,
) -> Result<AutoRoiRun> {
    if grid.is_empty() {
        return Err(Error::Config("empty block grid".into()));
    }
    let fps = video.fps();
    let regions: Vec<Region> = grid.blocks.iter().map(|b| b.region).collect();
    let per_block = regions_velocities(video, &regions, algorithm, frame_interval, motion_cfg)?;
    let start = signal_start(fps, frame_interval);
    let block_signals: Vec<RespiratorySignal> = per_block
        .iter()
        .zip(&grid.blocks)
        .map(|(v, b)| {
            let mut s = integrate_velocities(v, fps);
            s.start_time = start;
            s.source = format!("block:{}", b.id);
            s
        })
        .collect();

    let n = per_block[0].len();
    let windows = sliding_windows(n, fps, params.window_seconds, params.hop_seconds);
    let by_block: Vec<Vec<f64>> = block_signals
        .par_iter()
        .map(|s| windowed_snr(&s.values, fps, &windows))
        .collect();
    let snr: Vec<Vec<f64>> = (0..windows.len())
        .map(|w| by_block.iter().map(|b| b[w]).collect())
        .collect();
    let selected: Vec<Vec<usize>> = snr
        .iter()
        .map(|row| select_blocks(row, params.top_k, params.snr_floor))
        .collect();

    let assignment = nearest_window(n, &windows);
    let fused: Vec<Option<VelocitySample>> = (0..n)
        .map(|i| {
            let w = assignment[i];
            let sel = selected.get(w)?;
            if sel.is_empty() {
                return None;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &b in sel {
                let weight = snr[w][b];
                num += weight * per_block[b][i].map_or(0.0, |s| s.v_y);
                den += weight;
            }
            Some(VelocitySample::vertical(num / den, 1.0).with_interval(frame_interval))
        })
        .collect();
    let mut signal = integrate_velocities(&fused, fps);
    signal.start_time = start;
    signal.source = "fused".into();

    Ok(AutoRoiRun {
        signal,
        block_signals,
        selection: RoISelection {
            params: *params,
            windows,
            snr,
            selected,
        },
    })
}
