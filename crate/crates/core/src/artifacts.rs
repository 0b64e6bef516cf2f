//! Tab-separated files exchanged between the `generate`, `run` and `eval`
//! steps. Every writer has a matching reader; floats are written in their
//! shortest round-tripping form, undefined rates as `NaN`.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{Frame, Region};
use crate::phantom::{GroundTruth, PhantomProtocol, SceneModel};
use crate::pipeline::{PeakList, RespiratorySignal};
use crate::rawvideo::{RawVideoWriter, VideoMeta};
use crate::textio::{fmt_f64, parse_entries, read_text, write_text, Table};

pub const PROTOCOL_FILE: &str = "protocol.txt";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const TRUTH_PEAKS_FILE: &str = "truth_peaks.tsv";

fn fmt_rate(rate: Option<f64>) -> String {
    rate.map_or_else(|| "NaN".to_string(), fmt_f64)
}

fn parse_rates(table: &Table, column: &str) -> Result<Vec<Option<f64>>> {
    Ok(table
        .column::<f64>(column)?
        .into_iter()
        .map(|r| (!r.is_nan()).then_some(r))
        .collect())
}

const RENDER_CHUNK: usize = 128;

/// Renders `protocol` into `dir`: raw video with its metadata (including the
/// expert RoI), the protocol text and the ground truth. Frames are rendered
/// in parallel chunks and streamed to disk.
pub fn write_session(dir: &Path, protocol: &PhantomProtocol) -> Result<VideoMeta> {
    protocol.validate()?;
    let scene = SceneModel::from_protocol(protocol)?;
    let full = Region::new(0, 0, protocol.frame_height, protocol.frame_width);
    let mut writer = RawVideoWriter::create(
        dir,
        protocol.frame_width,
        protocol.frame_height,
        protocol.fps,
        Some(scene.layout().roi),
    )?;
    let n = protocol.frame_count();
    for chunk in (0..n).step_by(RENDER_CHUNK) {
        let frames = (chunk..(chunk + RENDER_CHUNK).min(n))
            .into_par_iter()
            .map(|i| scene.render_region(protocol, protocol.frame_time(i), i as u64, full))
            .collect::<Result<Vec<Frame>>>()?;
        for f in &frames {
            writer.push(f)?;
        }
    }
    let meta = writer.finish()?;
    write_text(&dir.join(PROTOCOL_FILE), &protocol.to_text())?;
    write_ground_truth(dir, &protocol.ground_truth()?)?;
    Ok(meta)
}

/// Writes the per-frame displacement (`time, displacement_px, is_peak`) and
/// the exact peak times with their rates.
pub fn write_ground_truth(dir: &Path, truth: &GroundTruth) -> Result<()> {
    let frames = truth.peak_frames();
    let mut t = Table::new(["time", "displacement_px", "is_peak"]);
    for (i, &d) in truth.signal.iter().enumerate() {
        let peak = frames.binary_search(&i).is_ok();
        t.push(vec![
            fmt_f64(i as f64 / truth.fps),
            fmt_f64(d),
            u8::from(peak).to_string(),
        ]);
    }
    t.write(&dir.join(TRUTH_FILE))?;
    let mut p = Table::new(["time", "rate_bpm"]);
    for (&time, &rate) in truth.peak_times.iter().zip(&truth.instantaneous_rate) {
        p.push(vec![fmt_f64(time), fmt_rate(rate)]);
    }
    p.write(&dir.join(TRUTH_PEAKS_FILE))
}

pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let t = Table::read(&dir.join(TRUTH_FILE))?;
    let times: Vec<f64> = t.column("time")?;
    let signal: Vec<f64> = t.column("displacement_px")?;
    if times.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "ground truth needs at least two frames".into(),
        });
    }
    let p = Table::read(&dir.join(TRUTH_PEAKS_FILE))?;
    Ok(GroundTruth {
        fps: 1.0 / (times[1] - times[0]),
        signal,
        peak_times: p.column("time")?,
        instantaneous_rate: parse_rates(&p, "rate_bpm")?,
    })
}

/// Signal samples preceded by `# key = value` header lines.
pub fn write_signal(path: &Path, signal: &RespiratorySignal) -> Result<()> {
    let mut s = format!(
        "# fps = {}\n# start_time = {}\n# source = {}\n",
        fmt_f64(signal.fps),
        fmt_f64(signal.start_time),
        if signal.source.is_empty() { "-" } else { &signal.source }
    );
    let mut t = Table::new(["index", "time", "value", "missing"]);
    for (i, &v) in signal.values.iter().enumerate() {
        let missing = signal.missing.binary_search(&i).is_ok();
        t.push(vec![
            i.to_string(),
            fmt_f64(signal.time(i)),
            fmt_f64(v),
            u8::from(missing).to_string(),
        ]);
    }
    s.push_str(&t.to_text());
    write_text(path, &s)
}

pub fn read_signal(path: &Path) -> Result<RespiratorySignal> {
    let text = read_text(path)?;
    let header: String = text
        .lines()
        .map_while(|l| l.strip_prefix('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut signal = RespiratorySignal::new(Vec::new(), 0.0);
    for e in parse_entries(&header)? {
        match e.key.as_str() {
            "fps" => signal.fps = e.parse()?,
            "start_time" => signal.start_time = e.parse()?,
            "source" => signal.source = if e.value == "-" { String::new() } else { e.value.clone() },
            _ => return Err(e.error("unknown header key")),
        }
    }
    if !(signal.fps > 0.0) {
        return Err(Error::Parse {
            line: 1,
            message: "signal header lacks a positive `fps`".into(),
        });
    }
    let t = Table::from_text(&text)?;
    signal.values = t.column("value")?;
    let missing: Vec<u8> = t.column("missing")?;
    signal.missing = missing
        .iter()
        .enumerate()
        .filter(|(_, &m)| m != 0)
        .map(|(i, _)| i)
        .collect();
    Ok(signal)
}

pub fn write_peaks(path: &Path, peaks: &PeakList) -> Result<()> {
    let mut t = Table::new(["index", "time", "rate_bpm"]);
    for (k, (&time, &rate)) in peaks.times.iter().zip(&peaks.rates).enumerate() {
        let index = peaks.indices.get(k).map_or_else(|| "-1".to_string(), usize::to_string);
        t.push(vec![index, fmt_f64(time), fmt_rate(rate)]);
    }
    t.write(path)
}

pub fn read_peaks(path: &Path) -> Result<PeakList> {
    let t = Table::read(path)?;
    let times: Vec<f64> = t.column("time")?;
    let raw: Vec<i64> = t.column("index")?;
    let indices = if raw.iter().all(|&i| i >= 0) {
        raw.iter().map(|&i| i as usize).collect()
    } else {
        Vec::new()
    };
    let rates = parse_rates(&t, "rate_bpm")?;
    Ok(PeakList { indices, times, rates })
}
