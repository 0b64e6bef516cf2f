//! `breathcam`: generate phantom videos, extract respiratory signals, score them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use breathcam::artifacts::{read_ground_truth, read_peaks, write_peaks, write_session, write_signal, PROTOCOL_FILE};
use breathcam::bench::{run_bench, BenchConfig, Suite};
use breathcam::eval::{
    evaluate_session, roi_correspondence, summary_table, SessionReport, SuiteResult, GUARD_BAND_SECONDS,
};
use breathcam::frame::{FrameSource, Region};
use breathcam::framework::{run_auto_roi, run_fixed_roi, selection_from_trace, Mode, RunConfig};
use breathcam::rawvideo::RawVideoFile;
use breathcam::textio::{read_text, write_text, Table};
use breathcam::{AlgorithmId, BlockGrid, PhantomProtocol};

/// Videos at most this large are loaded into memory before processing.
const IN_MEMORY_LIMIT_BYTES: usize = 512 << 20;

#[derive(Parser)]
#[command(
    name = "breathcam",
    version,
    about = "Camera-based respiratory signal extraction benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a phantom video and its ground truth from a protocol file.
    Generate {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the protocol's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract respiratory signals from a generated video.
    Run {
        /// Directory holding `video.raw` and `video.meta`.
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Score extracted peaks against the ground truth.
    Eval {
        /// Directory written by `generate`.
        #[arg(long)]
        session: PathBuf,
        /// Directory written by `run`.
        #[arg(long)]
        signals: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, run and evaluate in one go. Without `--protocol` the built-in
    /// day and night suites are used.
    Bench {
        #[arg(long)]
        protocol: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Built-in suites to run: day, night or both.
        #[arg(long, default_value = "both")]
        suite: String,
        /// Length of every protocol cell of the built-in suites.
        #[arg(long, default_value_t = 60.0)]
        cell_seconds: f64,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Args, Clone)]
struct RunOpts {
    /// `key = value` run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated algorithm ids ({cc,of}-{c1d,m1d,2d}) or `all`.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Patch for fixed mode as `row,col,height,width`.
    #[arg(long)]
    roi: Option<String>,
    #[arg(long)]
    interval: Option<usize>,
    #[arg(long)]
    kernel: Option<usize>,
    /// Block size of the auto-RoI grid as `H,W`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    topk: Option<usize>,
}

impl RunOpts {
    /// The base configuration and the algorithms to run with it.
    fn resolve(&self) -> Result<(RunConfig, Vec<AlgorithmId>)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_text(&read_text(p)?).with_context(|| format!("reading {}", p.display()))?,
            None => RunConfig::default(),
        };
        let algorithms = match &self.algo {
            Some(a) => AlgorithmId::parse_list(a)?,
            None if self.config.is_some() => vec![cfg.algorithm],
            None => AlgorithmId::ALL.to_vec(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(r) = &self.roi {
            cfg.roi = Some(parse_usizes::<4>(r, "--roi").map(|[r, c, h, w]| Region::new(r, c, h, w))?);
        }
        if let Some(i) = self.interval {
            cfg.frame_interval = i;
        }
        if let Some(k) = self.kernel {
            cfg.motion.of.kernel_len = k;
        }
        if let Some(g) = &self.grid {
            let [h, w] = parse_usizes::<2>(g, "--grid")?;
            cfg.block_size = (h, w);
        }
        if let Some(k) = self.topk {
            cfg.selection.top_k = k;
        }
        cfg.validate()?;
        Ok((cfg, algorithms))
    }
}

fn parse_usizes<const N: usize>(s: &str, flag: &str) -> Result<[usize; N]> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .with_context(|| format!("{flag}: cannot parse `{s}`"))?;
    v.try_into()
        .map_err(|_| anyhow::anyhow!("{flag}: expected {N} comma-separated integers, got `{s}`"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { protocol, out, seed } => {
            let p = load_protocol(&protocol, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let meta = write_session(&out, &p)?;
            println!(
                "{}: {} frames, {}x{} at {} fps, {} segments",
                out.display(),
                meta.frame_count,
                meta.width,
                meta.height,
                meta.fps,
                p.segments.len()
            );
        }
        Command::Run { video, out, opts } => {
            let (cfg, algorithms) = opts.resolve()?;
            cmd_run(&video, &out, &cfg, &algorithms)?;
        }
        Command::Eval { session, signals, out } => {
            let results = cmd_eval(&session, &signals, &out)?;
            print!("{}", summary_table(&results));
        }
        Command::Bench {
            protocol,
            out,
            seed,
            suite,
            cell_seconds,
            opts,
        } => {
            let (cfg, algorithms) = opts.resolve()?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let summary = if protocol.is_empty() {
                bench_builtin(&out, &cfg, algorithms, seed, &suite, cell_seconds)?
            } else {
                bench_protocols(&out, &cfg, &algorithms, seed, &protocol)?
            };
            write_text(&out.join("summary.txt"), &summary)?;
            print!("{summary}");
        }
    }
    Ok(())
}

fn load_protocol(path: &Path, seed: Option<u64>) -> Result<PhantomProtocol> {
    let text = read_text(path)?;
    let mut p = PhantomProtocol::from_text(&text).with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = seed {
        p.pattern_seed = s;
    }
    Ok(p)
}

fn cmd_run(video_dir: &Path, out: &Path, cfg: &RunConfig, algorithms: &[AlgorithmId]) -> Result<()> {
    let file = RawVideoFile::open(video_dir)?;
    let meta = file.meta.clone();
    let loaded;
    let video: &dyn FrameSource = if meta.frame_bytes() * meta.frame_count <= IN_MEMORY_LIMIT_BYTES {
        loaded = file.load()?;
        &loaded
    } else {
        &file
    };
    let roi = cfg.roi.or(meta.roi);
    let grid = match cfg.mode {
        Mode::Auto => Some(
            BlockGrid::new(meta.height, meta.width, cfg.block_size.0, cfg.block_size.1).with_context(|| {
                format!(
                    "grid {}x{} on a {}x{} video",
                    cfg.block_size.0, cfg.block_size.1, meta.height, meta.width
                )
            })?,
        ),
        Mode::Fixed => None,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for &algorithm in algorithms {
        let cfg = RunConfig {
            algorithm,
            roi,
            ..cfg.clone()
        };
        let signal = match &grid {
            None => {
                let Some(roi) = roi else {
                    bail!("fixed mode needs --roi or a video with a recorded RoI");
                };
                run_fixed_roi(video, roi, algorithm, cfg.frame_interval, &cfg.motion)?.signal
            }
            Some(grid) => {
                let run = run_auto_roi(video, grid, algorithm, cfg.frame_interval, &cfg.motion, &cfg.selection)?;
                run.selection
                    .snr_map(grid, meta.fps)
                    .write(&out.join(format!("snr_map_{algorithm}.tsv")))?;
                run.selection
                    .trace()
                    .write(&out.join(format!("selection_{algorithm}.tsv")))?;
                run.signal
            }
        };
        write_signal(&out.join(format!("signal_{algorithm}.tsv")), &signal)?;
        write_peaks(
            &out.join(format!("peaks_{algorithm}.tsv")),
            &breathcam::PeakList::from_signal(&signal),
        )?;
        write_text(&out.join(format!("config_{algorithm}.txt")), &cfg.to_text())?;
    }
    Ok(())
}

/// Summary category of a session: its lighting, or `mixed`.
fn category(p: &PhantomProtocol) -> &'static str {
    let first = p.segments[0].lighting;
    if p.segments.iter().all(|s| s.lighting == first) {
        first.as_str()
    } else {
        "mixed"
    }
}

/// Algorithms with a peak file in `signals`, in canonical order.
fn algorithms_in(signals: &Path) -> Result<Vec<AlgorithmId>> {
    let found: Vec<AlgorithmId> = AlgorithmId::ALL
        .into_iter()
        .filter(|a| signals.join(format!("peaks_{a}.tsv")).is_file())
        .collect();
    if found.is_empty() {
        bail!("no peaks_<algo>.tsv files in {}", signals.display());
    }
    Ok(found)
}

fn cmd_eval(session: &Path, signals: &Path, out: &Path) -> Result<Vec<SuiteResult>> {
    let protocol = PhantomProtocol::from_text(&read_text(&session.join(PROTOCOL_FILE))?)?;
    let truth = read_ground_truth(session)?;
    let meta_roi = RawVideoFile::open(session).ok().and_then(|f| f.meta.roi);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut results = Vec::new();
    for algorithm in algorithms_in(signals)? {
        let peaks = read_peaks(&signals.join(format!("peaks_{algorithm}.tsv")))?;
        let report: SessionReport = evaluate_session(&protocol, &truth, &peaks, GUARD_BAND_SECONDS);
        report.to_table().write(&out.join(format!("metrics_{algorithm}.tsv")))?;
        let mut correspondence = Vec::new();
        let trace = signals.join(format!("selection_{algorithm}.tsv"));
        let config = signals.join(format!("config_{algorithm}.txt"));
        if let (Some(roi), true, true) = (meta_roi, trace.is_file(), config.is_file()) {
            let cfg = RunConfig::from_text(&read_text(&config)?)?;
            let grid = BlockGrid::new(
                protocol.frame_height,
                protocol.frame_width,
                cfg.block_size.0,
                cfg.block_size.1,
            )?;
            let selected = selection_from_trace(&Table::read(&trace)?)?;
            correspondence.push(roi_correspondence(&selected, &grid.blocks_within(roi)).mean);
        }
        results.push(SuiteResult {
            category: category(&protocol).to_string(),
            algorithm: algorithm.to_string(),
            sessions: vec![report.total],
            correspondence,
        });
    }
    write_text(&out.join("summary.txt"), &summary_table(&results))?;
    Ok(results)
}

fn bench_protocols(
    out: &Path,
    cfg: &RunConfig,
    algorithms: &[AlgorithmId],
    seed: u64,
    protocols: &[PathBuf],
) -> Result<String> {
    let mut pooled: Vec<SuiteResult> = Vec::new();
    for (i, path) in protocols.iter().enumerate() {
        let stem = path
            .file_stem()
            .map_or_else(|| format!("session{i}"), |s| s.to_string_lossy().into_owned());
        let dir = out.join(&stem);
        let session = dir.join("video");
        fs::create_dir_all(&session).with_context(|| format!("creating {}", session.display()))?;
        let p = load_protocol(path, Some(seed.wrapping_add(i as u64)))?;
        write_session(&session, &p)?;
        cmd_run(&session, &dir.join("signals"), cfg, algorithms)?;
        for r in cmd_eval(&session, &dir.join("signals"), &dir.join("eval"))? {
            match pooled
                .iter_mut()
                .find(|p| p.category == r.category && p.algorithm == r.algorithm)
            {
                Some(p) => {
                    p.sessions.extend(r.sessions);
                    p.correspondence.extend(r.correspondence);
                }
                None => pooled.push(r),
            }
        }
    }
    Ok(summary_table(&pooled))
}

fn bench_builtin(
    out: &Path,
    cfg: &RunConfig,
    algorithms: Vec<AlgorithmId>,
    seed: u64,
    suite: &str,
    cell_seconds: f64,
) -> Result<String> {
    let suites = match suite {
        "day" => vec![Suite::day()],
        "night" => vec![Suite::night()],
        "both" => vec![Suite::day(), Suite::night()],
        other => bail!("--suite: expected day, night or both, got `{other}`"),
    };
    let bench = BenchConfig {
        algorithms,
        mode: cfg.mode,
        frame_interval: cfg.frame_interval,
        motion: cfg.motion.clone(),
        block_size: cfg.block_size,
        selection: cfg.selection,
        suites,
        cell_seconds,
        seed,
        ..BenchConfig::default()
    };
    let report = run_bench(&bench)?;
    let cells = out.join("cells");
    fs::create_dir_all(&cells).with_context(|| format!("creating {}", cells.display()))?;
    for s in &report.sessions {
        for r in &s.runs {
            let name = format!("{}-{}mm-{}.tsv", s.suite, s.amplitude_mm, r.algorithm);
            r.report.to_table().write(&cells.join(name))?;
        }
    }
    Ok(report.summary())
}
