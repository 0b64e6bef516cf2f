//! Breath-to-breath accuracy against ground truth and RoI correspondence.

use std::fmt::Write as _;

use crate::phantom::{GroundTruth, Lighting, PhantomProtocol};
use crate::pipeline::PeakList;
use crate::textio::{fmt_f64, Table};

/// Fraction of the inter-beat interval on each side of a reference peak that
/// still counts as the same breath.
pub const WINDOW_HALF_WIDTH: f64 = 0.25;
pub const COVERAGE_TOLERANCE_BPM: f64 = 2.0;
/// Seconds excluded on both sides of every protocol cell boundary.
pub const GUARD_BAND_SECONDS: f64 = 5.0;

/// Tolerance window `[start, end]` around every reference peak. Boundary
/// peaks reuse their only interval on both sides; a lone peak gets none.
pub fn tolerance_windows(reference: &[f64]) -> Vec<Option<(f64, f64)>> {
    let n = reference.len();
    (0..n)
        .map(|i| {
            let prev = (i > 0).then(|| reference[i] - reference[i - 1]);
            let next = (i + 1 < n).then(|| reference[i + 1] - reference[i]);
            let (before, after) = match (prev, next) {
                (Some(p), Some(q)) => (p, q),
                (Some(p), None) => (p, p),
                (None, Some(q)) => (q, q),
                (None, None) => return None,
            };
            Some((
                reference[i] - WINDOW_HALF_WIDTH * before,
                reference[i] + WINDOW_HALF_WIDTH * after,
            ))
        })
        .collect()
}

/// For each reference peak, the index of the single camera peak inside its
/// window, or `None` when there are zero or several.
pub fn match_peaks(reference: &[f64], camera: &[f64]) -> Vec<Option<usize>> {
    tolerance_windows(reference)
        .into_iter()
        .map(|w| {
            let (lo, hi) = w?;
            let first = camera.partition_point(|&t| t < lo);
            let last = camera.partition_point(|&t| t <= hi);
            (last - first == 1).then_some(first)
        })
        .collect()
}

/// Raw counts behind the percentages; these pool across cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub valid: usize,
    pub camera: usize,
    pub reference: usize,
    /// Matched pairs with a rate on both sides.
    pub rate_pairs: usize,
    /// Those among `rate_pairs` within the coverage tolerance.
    pub rate_hits: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.valid += o.valid;
        self.camera += o.camera;
        self.reference += o.reference;
        self.rate_pairs += o.rate_pairs;
        self.rate_hits += o.rate_hits;
    }
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub coverage: f64,
    pub counts: Counts,
    /// No camera peaks at all, so precision is reported as 0.
    pub precision_undefined: bool,
    /// `(reference, camera)` index pairs.
    pub matched: Vec<(usize, usize)>,
}

impl MetricsReport {
    pub fn from_counts(counts: Counts) -> Self {
        Self {
            precision: percent(counts.valid, counts.camera),
            recall: percent(counts.valid, counts.reference),
            coverage: percent(counts.rate_hits, counts.rate_pairs),
            counts,
            precision_undefined: counts.camera == 0,
            matched: Vec::new(),
        }
    }
}

/// Metrics from a matching and the per-peak rates of both lists.
pub fn compute_metrics(
    matches: &[Option<usize>],
    reference_rates: &[Option<f64>],
    camera_count: usize,
    camera_rates: &[Option<f64>],
) -> MetricsReport {
    let matched: Vec<(usize, usize)> = matches
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| (r, c)))
        .collect();
    let mut counts = Counts {
        valid: matched.len(),
        camera: camera_count,
        reference: matches.len(),
        ..Counts::default()
    };
    for &(r, c) in &matched {
        if let (Some(Some(a)), Some(Some(b))) = (reference_rates.get(r), camera_rates.get(c)) {
            counts.rate_pairs += 1;
            if (a - b).abs() <= COVERAGE_TOLERANCE_BPM + 1e-9 {
                counts.rate_hits += 1;
            }
        }
    }
    MetricsReport {
        matched,
        ..MetricsReport::from_counts(counts)
    }
}

/// Matches and scores two peak lists over their whole extent.
pub fn evaluate_peaks(reference: &PeakList, camera: &PeakList) -> MetricsReport {
    let matches = match_peaks(&reference.times, &camera.times);
    compute_metrics(&matches, &reference.rates, camera.len(), &camera.rates)
}

/// Metrics of one protocol cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub index: usize,
    /// Evaluated span after removing the guard bands.
    pub span: (f64, f64),
    pub amplitude_mm: f64,
    pub frequency_bpm: f64,
    pub duty_cycle: f64,
    pub lighting: Lighting,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub cells: Vec<CellReport>,
    /// Counts pooled over all cells.
    pub total: MetricsReport,
}

/// Scores camera peaks against the ground truth cell by cell, ignoring
/// `guard` seconds at both ends of every cell.
pub fn evaluate_session(
    protocol: &PhantomProtocol,
    truth: &GroundTruth,
    camera: &PeakList,
    guard: f64,
) -> SessionReport {
    let matches = match_peaks(&truth.peak_times, &camera.times);
    let mut total = Counts::default();
    let mut cells = Vec::with_capacity(protocol.segments.len());
    for (index, (seg, (start, end))) in protocol.segments.iter().zip(protocol.segment_bounds()).enumerate() {
        let span = (start + guard, end - guard);
        let inside = |t: f64| t >= span.0 && t < span.1;
        let mut counts = Counts {
            camera: camera.times.iter().filter(|&&t| inside(t)).count(),
            ..Counts::default()
        };
        let mut matched = Vec::new();
        for (r, &t) in truth.peak_times.iter().enumerate() {
            if !inside(t) {
                continue;
            }
            counts.reference += 1;
            let Some(c) = matches[r] else { continue };
            counts.valid += 1;
            matched.push((r, c));
            if let (Some(a), Some(b)) = (truth.instantaneous_rate[r], camera.rates[c]) {
                counts.rate_pairs += 1;
                if (a - b).abs() <= COVERAGE_TOLERANCE_BPM + 1e-9 {
                    counts.rate_hits += 1;
                }
            }
        }
        total += counts;
        cells.push(CellReport {
            index,
            span,
            amplitude_mm: seg.amplitude_mm,
            frequency_bpm: seg.frequency_bpm,
            duty_cycle: seg.duty_cycle,
            lighting: seg.lighting,
            metrics: MetricsReport {
                matched,
                ..MetricsReport::from_counts(counts)
            },
        });
    }
    SessionReport {
        cells,
        total: MetricsReport::from_counts(total),
    }
}

impl SessionReport {
    /// One record per cell.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new([
            "cell",
            "start",
            "end",
            "amplitude_mm",
            "bpm",
            "duty",
            "lighting",
            "valid",
            "camera",
            "reference",
            "rate_pairs",
            "rate_hits",
            "precision",
            "recall",
            "coverage",
        ]);
        for c in &self.cells {
            let k = c.metrics.counts;
            t.push(vec![
                c.index.to_string(),
                fmt_f64(c.span.0),
                fmt_f64(c.span.1),
                fmt_f64(c.amplitude_mm),
                fmt_f64(c.frequency_bpm),
                fmt_f64(c.duty_cycle),
                c.lighting.to_string(),
                k.valid.to_string(),
                k.camera.to_string(),
                k.reference.to_string(),
                k.rate_pairs.to_string(),
                k.rate_hits.to_string(),
                format!("{:.2}", c.metrics.precision),
                format!("{:.2}", c.metrics.recall),
                format!("{:.2}", c.metrics.coverage),
            ]);
        }
        t
    }
}

/// Share of auto-selected blocks that lie in the reference RoI.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceStats {
    pub mean: f64,
    pub std: f64,
    pub series: Vec<f64>,
}

pub fn roi_correspondence(selected: &[Vec<usize>], reference: &[usize]) -> CorrespondenceStats {
    let series: Vec<f64> = selected
        .iter()
        .map(|sel| {
            let hits = sel.iter().filter(|b| reference.contains(b)).count();
            percent(hits, sel.len())
        })
        .collect();
    let (mean, std) = mean_std(&series);
    CorrespondenceStats { mean, std, series }
}

/// Mean and population standard deviation; `(0, 0)` when empty.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-session results of one algorithm in one category (e.g. day or night).
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub category: String,
    pub algorithm: String,
    pub sessions: Vec<MetricsReport>,
    /// Mean RoI correspondence per session, when the run selected blocks.
    pub correspondence: Vec<f64>,
}

impl SuiteResult {
    pub fn precision(&self) -> (f64, f64) {
        mean_std(&self.sessions.iter().map(|m| m.precision).collect::<Vec<_>>())
    }

    pub fn recall(&self) -> (f64, f64) {
        mean_std(&self.sessions.iter().map(|m| m.recall).collect::<Vec<_>>())
    }

    pub fn coverage(&self) -> (f64, f64) {
        mean_std(&self.sessions.iter().map(|m| m.coverage).collect::<Vec<_>>())
    }
}

/// Mean [std] per category and metric (rows) and algorithm (columns). The
/// best mean of every row carries a trailing `*`.
pub fn summary_table(results: &[SuiteResult]) -> String {
    let mut algorithms: Vec<&str> = Vec::new();
    let mut categories: Vec<&str> = Vec::new();
    for r in results {
        if !algorithms.contains(&r.algorithm.as_str()) {
            algorithms.push(&r.algorithm);
        }
        if !categories.contains(&r.category.as_str()) {
            categories.push(&r.category);
        }
    }
    type Getter = fn(&SuiteResult) -> Option<(f64, f64)>;
    let metrics: [(&str, Getter); 4] = [
        ("precision", |r| Some(r.precision())),
        ("recall", |r| Some(r.recall())),
        ("coverage", |r| Some(r.coverage())),
        ("correspondence", |r| {
            (!r.correspondence.is_empty()).then(|| mean_std(&r.correspondence))
        }),
    ];
    let width = 16;
    let mut out = String::new();
    let _ = write!(out, "{:<26}", "category");
    for a in &algorithms {
        let _ = write!(out, "{a:>width$}");
    }
    out.push('\n');
    for cat in &categories {
        for (name, get) in metrics {
            let cells: Vec<Option<(f64, f64)>> = algorithms
                .iter()
                .map(|a| {
                    results
                        .iter()
                        .find(|r| r.category == *cat && r.algorithm == *a)
                        .and_then(get)
                })
                .collect();
            if cells.iter().all(Option::is_none) {
                continue;
            }
            let best = cells.iter().flatten().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
            let _ = write!(out, "{:<26}", format!("{cat} {name}"));
            for c in cells {
                let text = match c {
                    Some((m, s)) => {
                        let mark = if m == best { "*" } else { " " };
                        format!("{m:.1} [{s:.2}]{mark}")
                    }
                    None => "-".into(),
                };
                let _ = write!(out, "{text:>width$}");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::BreathSegment;
    use proptest::prelude::*;

    fn uniform(n: usize, ibi: f64, offset: f64) -> Vec<f64> {
        (0..n).map(|i| offset + i as f64 * ibi).collect()
    }

    #[test]
    fn identical_lists_match_fully() {
        let p = PeakList::from_times(uniform(10, 5.0, 2.0));
        let m = evaluate_peaks(&p, &p);
        assert_eq!((m.precision, m.recall, m.coverage), (100.0, 100.0, 100.0));
        assert_eq!(m.counts.rate_pairs, 8);
    }

    #[test]
    fn two_peaks_in_one_window_do_not_count() {
        let reference = uniform(5, 4.0, 0.0);
        let camera = vec![0.0, 4.0, 7.9, 8.1, 12.0, 16.0];
        let m = match_peaks(&reference, &camera);
        assert_eq!(m, vec![Some(0), Some(1), None, Some(4), Some(5)]);
    }

    #[test]
    fn windows_use_quarter_intervals() {
        let w = tolerance_windows(&[0.0, 4.0, 10.0]);
        assert_eq!(w, vec![Some((-1.0, 1.0)), Some((3.0, 5.5)), Some((8.5, 11.5))]);
        assert_eq!(tolerance_windows(&[3.0]), vec![None]);
        // Closed window edges.
        assert_eq!(match_peaks(&[0.0, 4.0, 10.0], &[5.5]), vec![None, Some(0), None]);
    }

    #[test]
    fn offset_of_ten_percent_still_matches() {
        let reference = uniform(12, 5.0, 0.0);
        let camera: Vec<f64> = reference.iter().map(|t| t + 0.5).collect();
        assert!(match_peaks(&reference, &camera).iter().all(Option::is_some));
    }

    #[test]
    fn precision_recall_arithmetic() {
        // 12 reference peaks; 10 camera peaks of which 9 fall alone in a window.
        let reference = uniform(12, 5.0, 0.0);
        let mut camera: Vec<f64> = reference[..9].to_vec();
        camera.push(47.5);
        let m = evaluate_peaks(&PeakList::from_times(reference), &PeakList::from_times(camera));
        assert_eq!(m.counts.valid, 9);
        assert_eq!(m.precision, 90.0);
        assert_eq!(m.recall, 75.0);
    }

    #[test]
    fn coverage_threshold() {
        let matches = vec![Some(0), Some(1), Some(2), Some(3), None];
        let reference = vec![None, Some(12.0), Some(12.0), Some(12.0), Some(12.0)];
        let camera = vec![Some(11.0), Some(14.0), Some(14.5), Some(12.3)];
        let m = compute_metrics(&matches, &reference, 4, &camera);
        assert_eq!((m.counts.rate_pairs, m.counts.rate_hits), (3, 2));
        assert!((m.coverage - 200.0 / 3.0).abs() < 1e-12);
        let close = vec![Some(12.4); 4];
        assert_eq!(compute_metrics(&matches, &reference, 4, &close).coverage, 100.0);
    }

    #[test]
    fn no_camera_peaks_is_flagged() {
        let m = evaluate_peaks(&PeakList::from_times(uniform(5, 3.0, 0.0)), &PeakList::default());
        assert!(m.precision_undefined);
        assert_eq!((m.precision, m.recall, m.coverage), (0.0, 0.0, 0.0));
    }

    #[test]
    fn correspondence_stats() {
        let reference = [3, 4, 5];
        let same = roi_correspondence(&[vec![3, 4, 5], vec![5, 4, 3]], &reference);
        assert_eq!((same.mean, same.std), (100.0, 0.0));
        let disjoint = roi_correspondence(&[vec![0, 1], vec![7]], &reference);
        assert_eq!(disjoint.mean, 0.0);
        let mixed = roi_correspondence(&[vec![3, 9], vec![], vec![4]], &reference);
        assert_eq!(mixed.series, vec![50.0, 0.0, 100.0]);
        assert!((mixed.std - (5000.0f64 / 3.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn session_cells_exclude_guard_bands() {
        let segs = vec![
            BreathSegment::new(60.0, 12.0, 1.0, 2.0, Lighting::Day).unwrap(),
            BreathSegment::new(60.0, 20.0, 1.0, 2.0, Lighting::Day).unwrap(),
        ];
        let protocol = PhantomProtocol {
            segments: segs,
            ..PhantomProtocol::default()
        };
        let truth = protocol.ground_truth().unwrap();
        let camera = PeakList::from_times(truth.peak_times.clone());
        let report = evaluate_session(&protocol, &truth, &camera, GUARD_BAND_SECONDS);
        assert_eq!(report.cells.len(), 2);
        // Peaks at 2.5 + 5k s: those in [5, 55) are 7.5 .. 52.5.
        assert_eq!(report.cells[0].metrics.counts.reference, 10);
        assert_eq!(report.total.precision, 100.0);
        assert_eq!(report.total.recall, 100.0);
        assert_eq!(report.total.coverage, 100.0);
        let table = report.to_table();
        assert_eq!(table.rows.len(), 2);
    }

    #[test]
    fn summary_marks_best() {
        let rep = |c: f64| {
            let mut m = MetricsReport::from_counts(Counts::default());
            m.coverage = c;
            m.precision = c;
            m.recall = c;
            m
        };
        let results = vec![
            SuiteResult {
                category: "day".into(),
                algorithm: "a".into(),
                sessions: vec![rep(50.0), rep(70.0)],
                correspondence: vec![],
            },
            SuiteResult {
                category: "day".into(),
                algorithm: "b".into(),
                sessions: vec![rep(90.0)],
                correspondence: vec![],
            },
        ];
        let s = summary_table(&results);
        assert!(s.contains("60.0 [10.00] "));
        assert!(s.contains("90.0 [0.00]*"));
        assert!(!s.contains("correspondence"));
    }

    proptest! {
        #[test]
        fn valid_bounded(reference in prop::collection::btree_set(0u32..2000, 2..40),
                         camera in prop::collection::btree_set(0u32..2000, 0..40)) {
            let r: Vec<f64> = reference.iter().map(|&v| v as f64 / 10.0).collect();
            let c: Vec<f64> = camera.iter().map(|&v| v as f64 / 10.0).collect();
            let m = evaluate_peaks(&PeakList::from_times(r.clone()), &PeakList::from_times(c.clone()));
            prop_assert!(m.counts.valid <= r.len().min(c.len()));
            let mut used: Vec<usize> = m.matched.iter().map(|p| p.1).collect();
            used.dedup();
            prop_assert_eq!(used.len(), m.matched.len());
            for v in [m.precision, m.recall, m.coverage] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }

        #[test]
        fn small_uniform_shifts_do_not_matter(ibis in prop::collection::vec(2.0f64..8.0, 3..20), frac in -0.2f64..0.2) {
            let times: Vec<f64> = ibis.iter().scan(0.0, |t, d| { *t += d; Some(*t) }).collect();
            let shift = frac * 0.25 * ibis.iter().cloned().fold(f64::INFINITY, f64::min);
            let shifted: Vec<f64> = times.iter().map(|t| t + shift).collect();
            let a = evaluate_peaks(&PeakList::from_times(times.clone()), &PeakList::from_times(times.clone()));
            let b = evaluate_peaks(&PeakList::from_times(times), &PeakList::from_times(shifted));
            prop_assert_eq!(a.counts, b.counts);
        }
    }
}
