//! Synthetic phantom: programmable breathing waveforms, a textured scene
//! whose central region moves with the waveform, and the ground truth that
//! goes with every rendered session.

mod protocol_file;
mod scene;

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{Frame, Region, VideoBuffer};
use crate::pipeline::instantaneous_rates_from_times;

pub use scene::{SceneLayout, SceneModel};

/// Frequencies of the breathing-rate sweep, in breaths per minute.
pub const SWEEP_FREQUENCIES_BPM: [f64; 6] = [5.0, 8.0, 12.0, 20.0, 40.0, 60.0];
/// Duty cycles of the waveform-morphology sweep.
pub const SWEEP_DUTY_CYCLES: [f64; 3] = [0.2, 0.6, 1.0];
/// Amplitudes (mm) of the daylight sessions.
pub const DAY_AMPLITUDES_MM: [f64; 7] = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
/// Amplitudes (mm) of the low-light sessions.
pub const NIGHT_AMPLITUDES_MM: [f64; 7] = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lighting {
    Day,
    Night,
}

impl Lighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Lighting::Day => "day",
            Lighting::Night => "night",
        }
    }
}

impl std::str::FromStr for Lighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "day" => Ok(Lighting::Day),
            "night" => Ok(Lighting::Night),
            _ => Err(Error::InvalidProtocol(format!("unknown lighting `{s}`"))),
        }
    }
}

impl std::fmt::Display for Lighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One protocol cell: a stretch of constant breathing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreathSegment {
    pub duration: f64,
    pub frequency_bpm: f64,
    pub duty_cycle: f64,
    pub amplitude_mm: f64,
    pub lighting: Lighting,
}

impl BreathSegment {
    pub fn new(
        duration: f64,
        frequency_bpm: f64,
        duty_cycle: f64,
        amplitude_mm: f64,
        lighting: Lighting,
    ) -> Result<Self> {
        let s = Self {
            duration,
            frequency_bpm,
            duty_cycle,
            amplitude_mm,
            lighting,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProtocol(m));
        if !(self.duration > 0.0) {
            return bad(format!("segment duration {} must be positive", self.duration));
        }
        if !(5.0..=60.0).contains(&self.frequency_bpm) {
            return bad(format!("frequency {} bpm outside [5, 60]", self.frequency_bpm));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return bad(format!("duty cycle {} outside (0, 1]", self.duty_cycle));
        }
        if !(self.amplitude_mm >= 0.0) {
            return bad(format!("amplitude {} mm is negative", self.amplitude_mm));
        }
        Ok(())
    }

    /// Breath period in seconds.
    pub fn period(&self) -> f64 {
        60.0 / self.frequency_bpm
    }

    /// Offsets (seconds from segment start) of every lobe maximum that falls
    /// inside the segment.
    pub fn peak_offsets(&self) -> impl Iterator<Item = f64> + '_ {
        let period = self.period();
        let half_lobe = 0.5 * self.duty_cycle * period;
        (0..)
            .map(move |k| k as f64 * period + half_lobe)
            .take_while(move |&t| t < self.duration)
    }
}

/// Raised-cosine breathing waveform in millimetres.
///
/// Each period starts with a `1 + cos(α)` lobe, `α` sweeping `-π..π` over
/// `duty_cycle` of the period, scaled so the lobe peaks at `amplitude_mm`;
/// the remainder of the period is zero.
pub fn breath_waveform(segment: &BreathSegment, t: f64) -> f64 {
    let period = segment.period();
    let phase = t.rem_euclid(period);
    let lobe = segment.duty_cycle * period;
    if phase >= lobe {
        return 0.0;
    }
    let alpha = -PI + 2.0 * PI * phase / lobe;
    0.5 * segment.amplitude_mm * (1.0 + alpha.cos())
}

/// Optional global illumination flicker `I_m(t) = amplitude · sin(2π f t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlluminationModulation {
    pub amplitude: f64,
    pub frequency_hz: f64,
}

impl IlluminationModulation {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency_hz * t).sin()
    }
}

/// Full description of one synthetic recording session.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomProtocol {
    pub segments: Vec<BreathSegment>,
    pub fps: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub mm_per_pixel: f64,
    /// Attenuation of the phantom excursion by the covering blanket.
    pub blanket_gain: f64,
    pub noise_sigma_day: f64,
    pub noise_sigma_night: f64,
    pub pattern_seed: u64,
    pub illumination: Option<IlluminationModulation>,
    /// Horizontal displacement as a multiple of the vertical one.
    pub horizontal_ratio: f64,
}

impl Default for PhantomProtocol {
    fn default() -> Self {
        Self {
            segments: Vec::new(),
            fps: 15.0,
            frame_width: 480,
            frame_height: 360,
            mm_per_pixel: 0.5,
            blanket_gain: 0.5,
            noise_sigma_day: 1.0,
            noise_sigma_night: 4.0,
            pattern_seed: 1,
            illumination: None,
            horizontal_ratio: 0.0,
        }
    }
}

impl PhantomProtocol {
    /// The full-length 45-minute recording schedule (150 s cells, duty
    /// cycles 10/30/50 %) at the native 480x360 resolution.
    pub fn full_session(amplitude_mm: f64, lighting: Lighting) -> Self {
        let mut segments = Vec::with_capacity(18);
        for bpm in [60.0, 5.0, 12.0, 8.0, 20.0, 40.0] {
            for duty in [0.1, 0.3, 0.5] {
                segments.push(BreathSegment {
                    duration: 150.0,
                    frequency_bpm: bpm,
                    duty_cycle: duty,
                    amplitude_mm,
                    lighting,
                });
            }
        }
        Self {
            segments,
            ..Self::default()
        }
    }

    /// Desk-scale session: every frequency/duty-cycle combination for
    /// `cell_seconds` each, rendered at a reduced 120x96 frame size.
    pub fn desk_session(amplitude_mm: f64, lighting: Lighting, cell_seconds: f64) -> Self {
        let mut segments = Vec::with_capacity(18);
        for bpm in SWEEP_FREQUENCIES_BPM {
            for duty in SWEEP_DUTY_CYCLES {
                segments.push(BreathSegment {
                    duration: cell_seconds,
                    frequency_bpm: bpm,
                    duty_cycle: duty,
                    amplitude_mm,
                    lighting,
                });
            }
        }
        Self {
            segments,
            frame_width: 120,
            frame_height: 96,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProtocol(m.to_string()));
        if self.segments.is_empty() {
            return bad("no segments");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if !(self.mm_per_pixel > 0.0) {
            return bad("mm_per_pixel must be positive");
        }
        if !(self.blanket_gain >= 0.0) {
            return bad("blanket_gain must be non-negative");
        }
        if !(self.noise_sigma_day >= 0.0 && self.noise_sigma_night >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        if self.frame_width < 8 || self.frame_height < 8 {
            return bad("frame must be at least 8x8 pixels");
        }
        self.segments.iter().try_for_each(BreathSegment::validate)
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn frame_count(&self) -> usize {
        (self.duration() * self.fps).round() as usize
    }

    pub fn frame_time(&self, index: usize) -> f64 {
        index as f64 / self.fps
    }

    /// `(start, end)` time of every segment.
    pub fn segment_bounds(&self) -> Vec<(f64, f64)> {
        let mut start = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let b = (start, start + s.duration);
                start += s.duration;
                b
            })
            .collect()
    }

    /// Segment active at `t` together with the time since its start.
    pub fn segment_at(&self, t: f64) -> Result<(usize, &BreathSegment, f64)> {
        let duration = self.duration();
        if !(0.0..duration).contains(&t) {
            return Err(Error::OutOfRange { t, duration });
        }
        let mut start = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if t < start + s.duration || i + 1 == self.segments.len() {
                return Ok((i, s, t - start));
            }
            start += s.duration;
        }
        unreachable!("non-empty protocol")
    }

    pub fn px_per_mm(&self) -> f64 {
        self.blanket_gain / self.mm_per_pixel
    }

    /// Vertical displacement of the moving region in pixels.
    pub fn displacement_px(&self, t: f64) -> Result<f64> {
        let (_, seg, local) = self.segment_at(t)?;
        Ok(breath_waveform(seg, local) * self.px_per_mm())
    }

    pub fn noise_sigma(&self, lighting: Lighting) -> f64 {
        match lighting {
            Lighting::Day => self.noise_sigma_day,
            Lighting::Night => self.noise_sigma_night,
        }
    }

    pub fn illumination_at(&self, t: f64) -> f64 {
        self.illumination.map_or(0.0, |m| m.at(t))
    }

    /// Analytic lobe maxima over the sampled time span.
    pub fn peak_times(&self) -> Vec<f64> {
        let last = self.frame_time(self.frame_count().saturating_sub(1));
        let mut out = Vec::new();
        for (seg, (start, _)) in self.segments.iter().zip(self.segment_bounds()) {
            out.extend(seg.peak_offsets().map(|o| start + o).filter(|&t| t <= last + 1e-9));
        }
        out
    }

    pub fn ground_truth(&self) -> Result<GroundTruth> {
        self.validate()?;
        let signal = (0..self.frame_count())
            .map(|i| self.displacement_px(self.frame_time(i)))
            .collect::<Result<Vec<_>>>()?;
        let peak_times = self.peak_times();
        let instantaneous_rate = instantaneous_rates_from_times(&peak_times);
        Ok(GroundTruth {
            fps: self.fps,
            signal,
            peak_times,
            instantaneous_rate,
        })
    }
}

/// Reference displacement and breath timing of a rendered session.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub fps: f64,
    /// Vertical displacement in pixels at every frame time.
    pub signal: Vec<f64>,
    pub peak_times: Vec<f64>,
    /// Instantaneous rate (bpm) of each peak, where three consecutive peaks exist.
    pub instantaneous_rate: Vec<Option<f64>>,
}

impl GroundTruth {
    /// Frame index nearest to each peak time.
    pub fn peak_frames(&self) -> Vec<usize> {
        let last = self.signal.len().saturating_sub(1);
        self.peak_times
            .iter()
            .map(|t| ((t * self.fps).round() as usize).min(last))
            .collect()
    }
}

/// Renders every frame of a session (optionally cropped to `region`) in parallel.
pub fn render_session(scene: &SceneModel, protocol: &PhantomProtocol, region: Option<Region>) -> Result<VideoBuffer> {
    protocol.validate()?;
    let region = region.unwrap_or(Region::new(0, 0, protocol.frame_height, protocol.frame_width));
    let frames = (0..protocol.frame_count())
        .into_par_iter()
        .map(|i| scene.render_region(protocol, protocol.frame_time(i), i as u64, region))
        .collect::<Result<Vec<Frame>>>()?;
    VideoBuffer::new(protocol.fps, frames)
}

/// Renders a complete session and its ground truth.
pub fn generate_session(protocol: &PhantomProtocol) -> Result<(VideoBuffer, GroundTruth)> {
    let scene = SceneModel::from_protocol(protocol)?;
    let video = render_session(&scene, protocol, None)?;
    Ok((video, protocol.ground_truth()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(bpm: f64, duty: f64, amp: f64, duration: f64) -> BreathSegment {
        BreathSegment::new(duration, bpm, duty, amp, Lighting::Day).unwrap()
    }

    #[test]
    fn full_duty_is_a_pure_raised_cosine() {
        let s = seg(12.0, 1.0, 3.0, 60.0);
        for i in 0..200 {
            let t = i as f64 * 0.05;
            let expected = 1.5 * (1.0 - (2.0 * PI * t / 5.0).cos());
            assert!((breath_waveform(&s, t) - expected).abs() < 1e-12);
        }
        assert!((breath_waveform(&s, 2.5) - 3.0).abs() < 1e-12);
        assert!((breath_waveform(&s, 7.5) - breath_waveform(&s, 2.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_portion_is_zero() {
        let s = seg(20.0, 0.6, 2.0, 30.0);
        let lobe = 0.6 * 3.0;
        assert_eq!(breath_waveform(&s, lobe), 0.0);
        assert_eq!(breath_waveform(&s, 3.0 + lobe + 0.3), 0.0);
        assert!((0..3000).all(|i| breath_waveform(&s, i as f64 * 0.01) >= 0.0));
    }

    #[test]
    fn narrow_lobe_area_matches_quadrature() {
        // Lobe of width w and height A: ∫ A/2 (1 + cos α) dt = A w / 2.
        let s = seg(60.0, 0.2, 2.0, 10.0);
        let n = 200_000;
        let h = 1.0 / n as f64;
        let area: f64 = (0..n).map(|i| breath_waveform(&s, (i as f64 + 0.5) * h) * h).sum();
        assert!((area - 2.0 * 0.2 / 2.0).abs() < 1e-8, "area {area}");
        assert_eq!(breath_waveform(&s, 0.2), 0.0);
        assert!(breath_waveform(&s, 0.199) > 0.0);
    }

    #[test]
    fn invalid_segments_are_rejected() {
        assert!(BreathSegment::new(0.0, 12.0, 0.5, 1.0, Lighting::Day).is_err());
        assert!(BreathSegment::new(10.0, 4.0, 0.5, 1.0, Lighting::Day).is_err());
        assert!(BreathSegment::new(10.0, 12.0, 0.0, 1.0, Lighting::Day).is_err());
        assert!(BreathSegment::new(10.0, 12.0, 1.1, 1.0, Lighting::Day).is_err());
        assert!(BreathSegment::new(10.0, 12.0, 0.5, -1.0, Lighting::Day).is_err());
    }

    #[test]
    fn peak_counts_follow_the_schedule() {
        let p = PhantomProtocol {
            segments: vec![seg(12.0, 1.0, 1.0, 10.0)],
            ..Default::default()
        };
        assert_eq!(p.peak_times().len(), 2);

        let full = PhantomProtocol::full_session(2.0, Lighting::Day);
        assert_eq!(full.segments.len(), 18);
        let first = PhantomProtocol {
            segments: vec![full.segments[0]],
            ..full.clone()
        };
        assert_eq!(first.segments[0].frequency_bpm, 60.0);
        assert_eq!(first.segments[0].duty_cycle, 0.1);
        assert_eq!(first.peak_times().len(), 150);
        assert_eq!(first.frame_count(), 2250);
        assert_eq!(full.duration(), 45.0 * 60.0);
    }

    #[test]
    fn ground_truth_peaks_sit_on_signal_maxima() {
        let mut p = PhantomProtocol::desk_session(2.0, Lighting::Day, 20.0);
        p.segments.truncate(6);
        let gt = p.ground_truth().unwrap();
        let max = p.segments[0].amplitude_mm * p.px_per_mm();
        assert!(gt.signal.iter().all(|&v| (0.0..=max + 1e-12).contains(&v)));
        for w in gt.peak_times.windows(2) {
            assert!(w[1] > w[0]);
        }
        for &i in &gt.peak_frames() {
            let v = gt.signal[i];
            if i > 0 {
                assert!(v >= gt.signal[i - 1]);
            }
            if i + 1 < gt.signal.len() {
                assert!(v >= gt.signal[i + 1]);
            }
        }
    }

    #[test]
    fn rates_switch_between_programmed_frequencies() {
        let p = PhantomProtocol {
            segments: vec![seg(12.0, 1.0, 1.0, 30.0), seg(20.0, 1.0, 1.0, 30.0)],
            ..Default::default()
        };
        let gt = p.ground_truth().unwrap();
        let rates: Vec<(f64, f64)> = gt
            .peak_times
            .iter()
            .zip(&gt.instantaneous_rate)
            .filter_map(|(&t, r)| r.map(|r| (t, r)))
            .collect();
        for &(t, r) in &rates {
            if t < 25.0 {
                assert!((r - 12.0).abs() < 1e-9, "{t}: {r}");
            } else if t > 33.0 {
                assert!((r - 20.0).abs() < 1e-9, "{t}: {r}");
            } else {
                assert!(r > 12.0 - 1e-9 && r < 20.0 + 1e-9, "{t}: {r}");
            }
        }
    }

    #[test]
    fn out_of_range_time_is_an_error() {
        let p = PhantomProtocol {
            segments: vec![seg(12.0, 1.0, 1.0, 10.0)],
            ..Default::default()
        };
        assert!(matches!(p.displacement_px(10.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(p.displacement_px(-0.1), Err(Error::OutOfRange { .. })));
    }
}
