//! Velocity integration, peak detection, instantaneous rates and spectral SNR.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::motion::VelocitySample;

/// Respiratory band searched for the dominant spectral peak, in bpm.
pub const RESPIRATORY_BAND_BPM: (f64, f64) = (5.0, 60.0);
pub const SNR_WINDOW_SECONDS: f64 = 30.0;
pub const SNR_HOP_SECONDS: f64 = 1.0;

/// Cumulative displacement in pixels sampled at `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RespiratorySignal {
    pub values: Vec<f64>,
    pub fps: f64,
    /// Time of `values[0]` in seconds.
    pub start_time: f64,
    /// Block id or `"fused"`.
    pub source: String,
    /// Sample indices whose velocity was missing and treated as zero.
    pub missing: Vec<usize>,
}

impl RespiratorySignal {
    pub fn new(values: Vec<f64>, fps: f64) -> Self {
        Self {
            values,
            fps,
            start_time: 0.0,
            source: String::new(),
            missing: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.fps
    }
}

/// Prefix sum of the vertical velocities; missing samples count as zero.
pub fn integrate_velocities(samples: &[Option<VelocitySample>], fps: f64) -> RespiratorySignal {
    let v: Vec<f64> = samples.iter().map(|s| s.map_or(0.0, |s| s.v_y)).collect();
    let mut signal = RespiratorySignal::new(cumulative_sum(&v), fps);
    signal.missing = samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.is_none().then_some(i))
        .collect();
    signal
}

pub fn cumulative_sum(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Indices of samples strictly above both neighbours. A flat run higher than
/// the samples on either side reports its first index; endpoints never count.
pub fn detect_peaks(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Detected peaks with their times and instantaneous rates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakList {
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub rates: Vec<Option<f64>>,
}

impl PeakList {
    pub fn from_times(times: Vec<f64>) -> Self {
        Self {
            indices: Vec::new(),
            rates: instantaneous_rates_from_times(&times),
            times,
        }
    }

    pub fn from_signal(signal: &RespiratorySignal) -> Self {
        let indices = detect_peaks(&signal.values);
        let times: Vec<f64> = indices.iter().map(|&i| signal.time(i)).collect();
        Self {
            rates: instantaneous_rates_from_times(&times),
            indices,
            times,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Rate at each interior peak: mean of `60 / IBI` towards the previous and
/// next peak, in bpm. The first and last peak have none.
pub fn instantaneous_rates(indices: &[usize], fps: f64) -> Vec<Option<f64>> {
    let times: Vec<f64> = indices.iter().map(|&i| i as f64 / fps).collect();
    instantaneous_rates_from_times(&times)
}

pub fn instantaneous_rates_from_times(times: &[f64]) -> Vec<Option<f64>> {
    let n = times.len();
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 >= n {
                return None;
            }
            let prev = times[i] - times[i - 1];
            let next = times[i + 1] - times[i];
            Some(0.5 * (60.0 / prev + 60.0 / next))
        })
        .collect()
}

/// Share of the non-DC spectral energy held by the strongest bin inside the
/// respiratory band.
pub struct SpectralSnr {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
    fps: f64,
}

impl SpectralSnr {
    pub fn new(len: usize, fps: f64) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len.max(1));
        Self { fft, len, fps }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn compute(&self, window: &[f64]) -> f64 {
        assert_eq!(window.len(), self.len, "window length differs from the plan");
        let n = self.len;
        if n < 2 {
            return 0.0;
        }
        let mean = window.iter().sum::<f64>() / n as f64;
        let mut buf: Vec<Complex<f64>> = window.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
        self.fft.process(&mut buf);
        let (lo, hi) = RESPIRATORY_BAND_BPM;
        let mut total = 0.0;
        let mut peak: f64 = 0.0;
        for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
            let e = c.norm_sqr();
            total += e;
            let bpm = 60.0 * k as f64 * self.fps / n as f64;
            if (lo..=hi).contains(&bpm) {
                peak = peak.max(e);
            }
        }
        if total <= 0.0 || !total.is_finite() {
            0.0
        } else {
            peak / total
        }
    }
}

pub fn spectral_snr(window: &[f64], fps: f64) -> f64 {
    SpectralSnr::new(window.len(), fps).compute(window)
}

/// A span of samples analysed together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisWindow {
    pub start: usize,
    pub len: usize,
    /// Shorter than the nominal length because the signal ran out.
    pub short: bool,
}

impl AnalysisWindow {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    fn centre2(&self) -> usize {
        2 * self.start + self.len
    }
}

/// Windows of `window_s` seconds every `hop_s` seconds that fit in `n`
/// samples. A signal shorter than one window gives a single short window.
pub fn sliding_windows(n: usize, fps: f64, window_s: f64, hop_s: f64) -> Vec<AnalysisWindow> {
    let len = (window_s * fps).round() as usize;
    let hop = ((hop_s * fps).round() as usize).max(1);
    if n == 0 {
        return Vec::new();
    }
    if n < len {
        return vec![AnalysisWindow {
            start: 0,
            len: n,
            short: true,
        }];
    }
    (0..)
        .map(|k| k * hop)
        .take_while(|s| s + len <= n)
        .map(|start| AnalysisWindow {
            start,
            len,
            short: false,
        })
        .collect()
}

/// For each of `n` samples, the window whose centre is nearest (earliest on ties).
pub fn nearest_window(n: usize, windows: &[AnalysisWindow]) -> Vec<usize> {
    if windows.is_empty() {
        return vec![0; n];
    }
    let mut w = 0;
    (0..n)
        .map(|i| {
            let target = 2 * i + 1;
            while w + 1 < windows.len()
                && windows[w + 1].centre2().abs_diff(target) < windows[w].centre2().abs_diff(target)
            {
                w += 1;
            }
            w
        })
        .collect()
}

/// Spectral SNR of `values` in each window.
pub fn windowed_snr(values: &[f64], fps: f64, windows: &[AnalysisWindow]) -> Vec<f64> {
    let mut plan: Option<SpectralSnr> = None;
    windows
        .iter()
        .map(|w| {
            if plan.as_ref().map_or(true, |p| p.len() != w.len) {
                plan = Some(SpectralSnr::new(w.len, fps));
            }
            plan.as_ref().unwrap().compute(&values[w.start..w.end()])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn prefix_sum() {
        let s = integrate_velocities(&[1.0, 2.0, 3.0].map(|v| Some(VelocitySample::vertical(v, 1.0))), 15.0);
        assert_eq!(s.values, vec![1.0, 3.0, 6.0]);
        assert!(s.missing.is_empty());
        let s = integrate_velocities(&[None, Some(VelocitySample::vertical(2.0, 1.0)), None], 15.0);
        assert_eq!(s.values, vec![0.0, 2.0, 2.0]);
        assert_eq!(s.missing, vec![0, 2]);
        assert_eq!(cumulative_sum(&[0.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn peak_examples() {
        assert_eq!(detect_peaks(&[0.0, 1.0, 0.0, 2.0, 0.0]), vec![1, 3]);
        assert!(detect_peaks(&[0.0, 1.0, 2.0, 3.0]).is_empty());
        assert!(detect_peaks(&[3.0, 1.0, 2.0]).is_empty());
        assert_eq!(detect_peaks(&[0.0, 2.0, 2.0, 2.0, 1.0]), vec![1]);
        // A plateau that keeps rising is not a peak.
        assert!(detect_peaks(&[0.0, 2.0, 2.0, 3.0]).is_empty());
        assert!(detect_peaks(&[0.0, 2.0, 2.0]).is_empty());
    }

    #[test]
    fn rates() {
        assert_eq!(
            instantaneous_rates(&[0, 75, 150, 225], 15.0),
            vec![None, Some(12.0), Some(12.0), None]
        );
        assert_eq!(instantaneous_rates_from_times(&[0.0, 4.0, 10.0])[1], Some(12.5));
        assert!(instantaneous_rates(&[0, 10], 15.0).iter().all(Option::is_none));
    }

    #[test]
    fn tone_snr_near_one() {
        let fps = 15.0;
        let x: Vec<f64> = (0..450).map(|i| (2.0 * PI * 0.2 * i as f64 / fps).sin()).collect();
        let snr = spectral_snr(&x, fps);
        assert!(snr >= 0.9, "{snr}");
        // Off-bin tone still concentrates most energy.
        let x: Vec<f64> = (0..450).map(|i| (2.0 * PI * 0.21 * i as f64 / fps).sin()).collect();
        assert!(spectral_snr(&x, fps) > 0.4);
    }

    #[test]
    fn noise_and_zero_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..450).map(|_| rng.gen::<f64>() - 0.5).collect();
        let snr = spectral_snr(&x, 15.0);
        assert!(snr < 0.1, "{snr}");
        assert_eq!(spectral_snr(&[0.0; 450], 15.0), 0.0);
        assert_eq!(spectral_snr(&[5.0; 450], 15.0), 0.0);
    }

    #[test]
    fn windows_and_assignment() {
        let w = sliding_windows(60, 1.0, 30.0, 1.0);
        assert_eq!(w.len(), 31);
        assert_eq!(
            w[30],
            AnalysisWindow {
                start: 30,
                len: 30,
                short: false
            }
        );
        let short = sliding_windows(10, 1.0, 30.0, 1.0);
        assert_eq!(
            short,
            vec![AnalysisWindow {
                start: 0,
                len: 10,
                short: true
            }]
        );
        let a = nearest_window(60, &w);
        assert_eq!(a[0], 0);
        assert_eq!(a[15], 0);
        assert_eq!(a[16], 1);
        assert_eq!(a[59], 30);
        assert!(a.windows(2).all(|p| p[0] <= p[1]));
    }

    proptest! {
        #[test]
        fn difference_then_integrate(xs in prop::collection::vec(-50.0f64..50.0, 2..200)) {
            let v: Vec<f64> = xs.windows(2).map(|p| p[1] - p[0]).collect();
            let s = cumulative_sum(&v);
            for (i, s) in s.iter().enumerate() {
                prop_assert!((s + xs[0] - xs[i + 1]).abs() < 1e-9);
            }
        }

        #[test]
        fn peaks_affine_invariant(xs in prop::collection::vec(-10i32..10, 3..100), a in 0.1f64..10.0, b in -100.0f64..100.0) {
            let x: Vec<f64> = xs.iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert_eq!(detect_peaks(&x), detect_peaks(&y));
        }

        #[test]
        fn snr_scale_invariant(xs in prop::collection::vec(-1.0f64..1.0, 32..128), a in 0.01f64..100.0) {
            let y: Vec<f64> = xs.iter().map(|v| a * v).collect();
            let (p, q) = (spectral_snr(&xs, 15.0), spectral_snr(&y, 15.0));
            prop_assert!((p - q).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn rates_bounded(xs in prop::collection::vec(-5i32..5, 3..300)) {
            let x: Vec<f64> = xs.iter().map(|&v| v as f64).collect();
            for r in instantaneous_rates(&detect_peaks(&x), 15.0).into_iter().flatten() {
                prop_assert!(r > 0.0 && r <= 15.0 * 30.0 + 1e-9);
            }
        }
    }
}
