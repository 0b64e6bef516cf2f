//! Benchmark suites on the synthetic phantom: render sessions, run the
//! algorithms, score them and summarize per category.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{
    evaluate_session, roi_correspondence, summary_table, CorrespondenceStats, SessionReport, SuiteResult,
    GUARD_BAND_SECONDS,
};
use crate::frame::{Region, VideoBuffer};
use crate::framework::{run_auto_roi, run_fixed_roi, AlgorithmId, BlockGrid, Mode, RoISelection, SelectionParams};
use crate::motion::MotionConfig;
use crate::phantom::{
    render_session, GroundTruth, Lighting, PhantomProtocol, SceneModel, DAY_AMPLITUDES_MM, NIGHT_AMPLITUDES_MM,
};
use crate::pipeline::{PeakList, RespiratorySignal};

/// A set of sessions sharing a lighting condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: String,
    pub lighting: Lighting,
    pub amplitudes_mm: Vec<f64>,
}

impl Suite {
    pub fn day() -> Self {
        Self {
            name: "day".into(),
            lighting: Lighting::Day,
            amplitudes_mm: DAY_AMPLITUDES_MM.to_vec(),
        }
    }

    pub fn night() -> Self {
        Self {
            name: "night".into(),
            lighting: Lighting::Night,
            amplitudes_mm: NIGHT_AMPLITUDES_MM.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub algorithms: Vec<AlgorithmId>,
    pub mode: Mode,
    pub frame_interval: usize,
    pub motion: MotionConfig,
    pub block_size: (usize, usize),
    pub selection: SelectionParams,
    pub suites: Vec<Suite>,
    pub cell_seconds: f64,
    pub seed: u64,
    pub guard_seconds: f64,
    /// Template for everything except segments and seed.
    pub base: PhantomProtocol,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let base = PhantomProtocol::desk_session(1.0, Lighting::Day, 60.0);
        Self {
            algorithms: AlgorithmId::ALL.to_vec(),
            mode: Mode::Fixed,
            frame_interval: 3,
            motion: MotionConfig::default(),
            block_size: crate::framework::DEFAULT_BLOCK_SIZE,
            selection: SelectionParams::default(),
            suites: vec![Suite::day(), Suite::night()],
            cell_seconds: 60.0,
            seed: 1,
            guard_seconds: GUARD_BAND_SECONDS,
            base,
        }
    }
}

impl BenchConfig {
    /// Protocol of one session of `suite`; each session gets its own seed.
    pub fn session_protocol(&self, suite: &Suite, index: usize) -> PhantomProtocol {
        let desk = PhantomProtocol::desk_session(suite.amplitudes_mm[index], suite.lighting, self.cell_seconds);
        let lighting_offset = match suite.lighting {
            Lighting::Day => 0,
            Lighting::Night => 1000,
        };
        PhantomProtocol {
            segments: desk.segments,
            pattern_seed: self
                .seed
                .wrapping_mul(10_007)
                .wrapping_add(lighting_offset + index as u64),
            ..self.base.clone()
        }
    }
}

/// One algorithm on one session.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmRun {
    pub algorithm: AlgorithmId,
    pub signal: RespiratorySignal,
    pub peaks: PeakList,
    pub report: SessionReport,
    pub selection: Option<RoISelection>,
    pub correspondence: Option<CorrespondenceStats>,
}

/// Renders the frames an analysis needs: only the expert RoI in fixed mode,
/// the whole frame otherwise. Returns the video and the RoI in its coordinates.
pub fn render_for_mode(protocol: &PhantomProtocol, mode: Mode) -> Result<(VideoBuffer, Region)> {
    let scene = SceneModel::from_protocol(protocol)?;
    let roi = scene.layout().roi;
    match mode {
        Mode::Fixed => {
            let video = render_session(&scene, protocol, Some(roi))?;
            Ok((video, Region::new(0, 0, roi.height, roi.width)))
        }
        Mode::Auto => Ok((render_session(&scene, protocol, None)?, roi)),
    }
}

/// Runs `algorithm` on a rendered video and scores it.
pub fn analyse(
    video: &VideoBuffer,
    roi: Region,
    protocol: &PhantomProtocol,
    truth: &GroundTruth,
    algorithm: AlgorithmId,
    cfg: &BenchConfig,
) -> Result<AlgorithmRun> {
    let (signal, selection, correspondence) = match cfg.mode {
        Mode::Fixed => {
            let run = run_fixed_roi(video, roi, algorithm, cfg.frame_interval, &cfg.motion)?;
            (run.signal, None, None)
        }
        Mode::Auto => {
            let grid = BlockGrid::new(
                protocol.frame_height,
                protocol.frame_width,
                cfg.block_size.0,
                cfg.block_size.1,
            )?;
            let run = run_auto_roi(video, &grid, algorithm, cfg.frame_interval, &cfg.motion, &cfg.selection)?;
            let reference = grid.blocks_within(roi);
            let corr = roi_correspondence(&run.selection.selected, &reference);
            (run.signal, Some(run.selection), Some(corr))
        }
    };
    let peaks = PeakList::from_signal(&signal);
    let report = evaluate_session(protocol, truth, &peaks, cfg.guard_seconds);
    Ok(AlgorithmRun {
        algorithm,
        signal,
        peaks,
        report,
        selection,
        correspondence,
    })
}

/// Every configured algorithm on one protocol.
pub fn run_session(protocol: &PhantomProtocol, cfg: &BenchConfig) -> Result<Vec<AlgorithmRun>> {
    let (video, roi) = render_for_mode(protocol, cfg.mode)?;
    let truth = protocol.ground_truth()?;
    cfg.algorithms
        .par_iter()
        .map(|&a| analyse(&video, roi, protocol, &truth, a, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub suite: String,
    pub amplitude_mm: f64,
    pub protocol: PhantomProtocol,
    pub runs: Vec<AlgorithmRun>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub sessions: Vec<SessionResult>,
    pub results: Vec<SuiteResult>,
}

impl BenchReport {
    pub fn summary(&self) -> String {
        summary_table(&self.results)
    }

    pub fn result(&self, suite: &str, algorithm: AlgorithmId) -> Option<&SuiteResult> {
        let name = algorithm.to_string();
        self.results.iter().find(|r| r.category == suite && r.algorithm == name)
    }
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.algorithms.is_empty() || cfg.suites.is_empty() {
        return Err(Error::Config(
            "benchmark needs at least one algorithm and one suite".into(),
        ));
    }
    let mut sessions = Vec::new();
    for suite in &cfg.suites {
        for (i, &amp) in suite.amplitudes_mm.iter().enumerate() {
            let protocol = cfg.session_protocol(suite, i);
            let runs = run_session(&protocol, cfg)?;
            sessions.push(SessionResult {
                suite: suite.name.clone(),
                amplitude_mm: amp,
                protocol,
                runs,
            });
        }
    }
    let mut results = Vec::new();
    for suite in &cfg.suites {
        for (k, &algorithm) in cfg.algorithms.iter().enumerate() {
            let of_suite = sessions.iter().filter(|s| s.suite == suite.name);
            let (mut reports, mut corr) = (Vec::new(), Vec::new());
            for s in of_suite {
                let run = &s.runs[k];
                reports.push(run.report.total.clone());
                if let Some(c) = &run.correspondence {
                    corr.push(c.mean);
                }
            }
            results.push(SuiteResult {
                category: suite.name.clone(),
                algorithm: algorithm.to_string(),
                sessions: reports,
                correspondence: corr,
            });
        }
    }
    Ok(BenchReport { sessions, results })
}
