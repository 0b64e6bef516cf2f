//! Acceptance suite: every criterion at its stated tolerance, one PASS/FAIL
//! line each. Runs as a plain binary so the lines always reach stdout.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use breathcam::bench::{render_for_mode, run_bench, run_session, BenchConfig, BenchReport, Suite};
use breathcam::eval::{compute_metrics, match_peaks};
use breathcam::framework::{run_auto_roi, run_fixed_roi, Mode, SelectionParams};
use breathcam::motion::{estimate, MotionConfig, Strategy};
use breathcam::phantom::{IlluminationModulation, Lighting};
use breathcam::pipeline::{instantaneous_rates_from_times, integrate_velocities};
use breathcam::profiles::{block_profile, Block};
use breathcam::{AlgorithmId, BlockGrid, Frame, PhantomProtocol, ProfileKind, VelocitySample, VideoBuffer};

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    let o = Outcome { id, pass, detail };
    println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
    o
}

fn algo(name: &str) -> AlgorithmId {
    name.parse().unwrap()
}

/// Smooth random texture, periodic over 24 rows, rendered exactly at any
/// sub-pixel offset.
struct Texture(Vec<(f64, f64, f64, f64)>);

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Texture(
            (0..12)
                .map(|_| {
                    let sign = if rng.gen() { 1.0 } else { -1.0 };
                    (
                        rng.gen_range(0.5..1.5),
                        sign * 2.0 * PI * rng.gen_range(1..=3) as f64 / 24.0,
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(0.0..2.0 * PI),
                    )
                })
                .collect(),
        )
    }

    fn block(&self, dy: f64) -> Block {
        let (rows, cols) = (24, 30);
        let data = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r as f64 - dy, c as f64)))
            .map(|(y, x)| {
                100.0
                    + 8.0
                        * self
                            .0
                            .iter()
                            .map(|&(a, wy, wx, p)| a * (wy * y + wx * x + p).sin())
                            .sum::<f64>()
            })
            .collect();
        Block::new(rows, cols, data).unwrap()
    }
}

fn shift_recovery() -> Outcome {
    let started = Instant::now();
    let cfg = MotionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut cc_worst, mut of_worst) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let tex = Texture::random(&mut rng);
        let rest = tex.block(0.0);
        let profiles: Vec<_> = ProfileKind::ALL
            .iter()
            .map(|&k| block_profile(&rest, k).unwrap())
            .collect();
        for k in -5i32..=5 {
            let moved = tex.block(k as f64);
            for (kind, first) in ProfileKind::ALL.iter().zip(&profiles) {
                let v = estimate(Strategy::CC, first, &block_profile(&moved, *kind).unwrap(), &cfg).unwrap();
                cc_worst = cc_worst.max((v.v_y - k as f64).abs());
            }
        }
        for _ in 0..4 {
            let s = rng.gen_range(0.05..=0.5) * if rng.gen() { 1.0 } else { -1.0 };
            let moved = tex.block(s);
            for (kind, first) in ProfileKind::ALL.iter().zip(&profiles) {
                let v = estimate(Strategy::OF, first, &block_profile(&moved, *kind).unwrap(), &cfg).unwrap();
                of_worst = of_worst.max((v.v_y - s).abs() / s.abs());
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    outcome(
        "1 shift recovery",
        cc_worst <= 0.01 && of_worst <= 0.10 && elapsed < 60.0,
        format!("CC worst |error| {cc_worst:.2e} px (<= 0.01), OF worst relative error {:.2}% (<= 10%), {elapsed:.1} s (< 60)", 100.0 * of_worst),
    )
}

fn integration_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(2..3000);
        let mut d = vec![rng.gen_range(-10.0..10.0)];
        for i in 1..n {
            let step: f64 = rng.sample(StandardNormal);
            d.push(d[i - 1] + 0.3 * step);
        }
        let samples: Vec<Option<VelocitySample>> = d
            .windows(2)
            .map(|w| Some(VelocitySample::vertical(w[1] - w[0], 1.0)))
            .collect();
        let signal = integrate_velocities(&samples, 15.0);
        let scale = d.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (s, t) in signal.values.iter().zip(&d[1..]) {
            worst = worst.max((s - (t - d[0])).abs() / scale);
        }
    }
    outcome(
        "2 integration identity",
        worst <= 1e-12,
        format!("worst error relative to series scale {worst:.2e} (<= 1e-12)"),
    )
}

fn illumination_invariance() -> Outcome {
    let plain = PhantomProtocol::desk_session(2.0, Lighting::Day, 10.0);
    let flicker = PhantomProtocol {
        illumination: Some(IlluminationModulation {
            amplitude: 0.02,
            frequency_hz: 0.1,
        }),
        ..plain.clone()
    };
    let (a, roi) = render_for_mode(&plain, Mode::Fixed).unwrap();
    let (b, _) = render_for_mode(&flicker, Mode::Fixed).unwrap();
    let cfg = MotionConfig::default();
    let mut worst = (0.0f64, String::new());
    for id in AlgorithmId::ALL {
        let x = run_fixed_roi(&a, roi, id, 3, &cfg).unwrap().signal.values;
        let y = run_fixed_roi(&b, roi, id, 3, &cfg).unwrap().signal.values;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let spread = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        let diff = (x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
        let rel = diff / spread;
        if rel >= worst.0 {
            worst = (rel, id.to_string());
        }
    }
    outcome(
        "3 illumination invariance",
        worst.0 < 0.01,
        format!(
            "largest RMS difference {:.3}% of signal RMS ({}) (< 1%)",
            100.0 * worst.0,
            worst.1
        ),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn suite_coverage(report: &BenchReport, suite: &str, id: &str) -> f64 {
    report.result(suite, algo(id)).unwrap().coverage().0
}

fn ranking(report: &BenchReport, interval_one: &BenchReport) -> Vec<Outcome> {
    let group = |ids: &[&str]| {
        mean(
            &ids.iter()
                .flat_map(|id| ["day", "night"].map(|s| suite_coverage(report, s, id)))
                .collect::<Vec<_>>(),
        )
    };
    let c1d = group(&["cc-c1d", "of-c1d"]);
    let m1d = group(&["cc-m1d", "of-m1d"]);
    let d2 = group(&["cc-2d", "of-2d"]);
    let a = outcome(
        "4a C1D coverage gap",
        m1d - c1d >= 10.0 && d2 - c1d >= 10.0,
        format!("mean coverage C1D {c1d:.1}, M1D {m1d:.1}, 2D {d2:.1} (gaps >= 10 pp)"),
    );

    let night: Vec<(String, f64)> = AlgorithmId::ALL
        .iter()
        .map(|a| (a.to_string(), suite_coverage(report, "night", &a.to_string())))
        .collect();
    let best = night
        .iter()
        .cloned()
        .fold((String::new(), f64::MIN), |m, x| if x.1 > m.1 { x } else { m });
    let of_m1d = suite_coverage(report, "night", "of-m1d");
    let b = outcome(
        "4b OF-M1D best at night",
        night.iter().all(|(_, c)| of_m1d >= *c),
        format!(
            "night coverage {} (best {} {:.1})",
            night
                .iter()
                .map(|(n, c)| format!("{n} {c:.1}"))
                .collect::<Vec<_>>()
                .join(", "),
            best.0,
            best.1
        ),
    );

    let session_coverage = |r: &BenchReport| {
        let s = r.sessions.iter().find(|s| s.suite == "day").unwrap();
        mean(&s.runs.iter().map(|run| run.report.total.coverage).collect::<Vec<_>>())
    };
    let (three, one) = (session_coverage(report), session_coverage(interval_one));
    let c = outcome(
        "4c interval 3 beats interval 1",
        three > one,
        format!("day 0.5 mm mean coverage over six algorithms: interval 3 {three:.1}, interval 1 {one:.1}"),
    );
    vec![a, b, c]
}

fn kernel_degradation() -> Outcome {
    let suite = Suite {
        amplitudes_mm: vec![2.0],
        ..Suite::night()
    };
    let coverage = |kernel: usize| {
        let mut cfg = BenchConfig {
            algorithms: vec![algo("of-m1d")],
            ..BenchConfig::default()
        };
        cfg.motion.of.kernel_len = kernel;
        let protocol = cfg.session_protocol(&suite, 0);
        run_session(&protocol, &cfg).unwrap()[0].report.total.coverage
    };
    let (small, large) = (coverage(2), coverage(20));
    outcome(
        "5 kernel-size degradation",
        small - large >= 20.0,
        format!("night 2 mm OF-M1D fixed-RoI coverage: kernel 2 {small:.1}, kernel 20 {large:.1} (drop >= 20 pp)"),
    )
}

fn metric_arithmetic() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    // 12 reference peaks, 10 camera peaks of which 9 fall alone in a window.
    let reference: Vec<f64> = (0..12).map(|i| 5.0 * i as f64).collect();
    let mut camera: Vec<f64> = (0..9).map(|i| 5.0 * i as f64 + 0.3).collect();
    camera.push(57.5);
    let matches = match_peaks(&reference, &camera);
    let m = compute_metrics(&matches, &vec![None; 12], camera.len(), &vec![None; 10]);
    check("precision 90", m.precision == 90.0);
    check("recall 75", m.recall == 75.0);

    // Two camera peaks inside one window leave that reference peak unmatched.
    let pair = match_peaks(&[0.0, 4.0, 8.0], &[0.0, 3.8, 4.2, 8.0]);
    check("single peak rule", pair == vec![Some(0), None, Some(3)]);

    // Offsets of 10% of the inter-beat interval stay matched.
    let offset: Vec<f64> = reference.iter().map(|t| t + 0.5).collect();
    check(
        "10% offset",
        match_peaks(&reference, &offset).iter().all(Option::is_some),
    );

    // Coverage counts deviations up to and including 2 bpm.
    let refs = [Some(12.0), Some(12.0), Some(12.0), Some(12.0)];
    let cams = [Some(14.0), Some(10.0), Some(14.5), Some(12.1)];
    let all = [Some(0), Some(1), Some(2), Some(3)];
    let cov = compute_metrics(&all, &refs, 4, &cams);
    check("coverage threshold", cov.coverage == 75.0);
    let within = compute_metrics(&all, &refs, 4, &[Some(12.4), Some(11.6), Some(12.0), Some(12.5)]);
    check("coverage 100", within.coverage == 100.0);

    // Rates from uniformly spaced peaks.
    let rates = instantaneous_rates_from_times(&[0.0, 5.0, 10.0, 15.0]);
    check(
        "rates",
        rates.iter().flatten().all(|r| (r - 12.0).abs() < 1e-12) && rates.iter().flatten().count() >= 2,
    );

    let no_camera = compute_metrics(&match_peaks(&reference, &[]), &vec![None; 12], 0, &[]);
    check(
        "empty camera list",
        no_camera.precision == 0.0 && no_camera.precision_undefined && no_camera.recall == 0.0,
    );

    let pass = failures.is_empty();
    outcome(
        "6 metric arithmetic",
        pass,
        if pass {
            "all hand-built cases exact".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn roi_localisation(report: &BenchReport) -> Outcome {
    let sessions: Vec<(f64, f64)> = report
        .sessions
        .iter()
        .filter(|s| s.suite == "day" && s.amplitude_mm * s.protocol.px_per_mm() >= 2.0)
        .map(|s| {
            let run = s.runs.iter().find(|r| r.algorithm == algo("of-m1d")).unwrap();
            (s.amplitude_mm, run.correspondence.as_ref().unwrap().mean)
        })
        .collect();
    let pooled = mean(&sessions.iter().map(|s| s.1).collect::<Vec<_>>());
    outcome(
        "7a auto-RoI correspondence",
        pooled >= 80.0,
        format!(
            "day OF-M1D mean correspondence {pooled:.1}% (>= 80) over {}",
            sessions
                .iter()
                .map(|(a, c)| format!("{a} mm {c:.1}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn noise_video() -> Outcome {
    let (w, h, fps) = (120, 96, 15.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let frames = (0..90 * 15)
        .map(|i| {
            let data = (0..w * h)
                .map(|_| {
                    (128.0 + 10.0 * rng.sample::<f64, _>(StandardNormal))
                        .round()
                        .clamp(0.0, 255.0) as u8
                })
                .collect();
            Frame::new(w, h, i as f64 / fps, data)
        })
        .collect();
    let video = VideoBuffer::new(fps, frames).unwrap();
    let grid = BlockGrid::with_default_blocks(h, w).unwrap();
    let run = run_auto_roi(
        &video,
        &grid,
        algo("of-m1d"),
        3,
        &MotionConfig::default(),
        &SelectionParams::default(),
    )
    .unwrap();
    let fraction = run.selection.empty_fraction();
    let best: Vec<f64> = run
        .selection
        .snr
        .iter()
        .map(|w| w.iter().cloned().fold(0.0, f64::max))
        .collect();
    outcome(
        "7b all-noise video",
        fraction >= 0.95,
        format!(
            "empty selection in {:.1}% of {} windows (>= 95%), mean best-block SNR {:.3} vs floor 0.1",
            100.0 * fraction,
            best.len(),
            mean(&best)
        ),
    )
}

fn collect_files(dir: &Path, prefix: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, prefix, out);
        } else {
            out.push((
                p.strip_prefix(prefix).unwrap().display().to_string(),
                fs::read(&p).unwrap(),
            ));
        }
    }
}

fn bench_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_breathcam"))
            .args([
                "bench",
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "3",
                "--cell-seconds",
                "10",
            ])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let mut files = Vec::new();
        collect_files(&out, &out, &mut files);
        (status.stdout, files)
    };
    let (a, b) = (run("a"), run("b"));
    let identical = a == b && !a.1.is_empty();
    outcome(
        "8 bench determinism",
        identical,
        format!(
            "{} report files and stdout byte-identical across two runs: {identical}",
            a.1.len()
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results = vec![shift_recovery(), integration_identity(), illumination_invariance()];

    let bench_started = Instant::now();
    let cfg = BenchConfig {
        mode: Mode::Auto,
        ..BenchConfig::default()
    };
    let report = run_bench(&cfg).unwrap();
    let smallest = Suite {
        amplitudes_mm: vec![Suite::day().amplitudes_mm[0]],
        ..Suite::day()
    };
    let interval_one = run_bench(&BenchConfig {
        frame_interval: 1,
        suites: vec![smallest],
        ..cfg.clone()
    })
    .unwrap();
    let bench_s = bench_started.elapsed().as_secs_f64();
    results.extend(ranking(&report, &interval_one));
    results.push(outcome(
        "4 benchmark runtime",
        bench_s < 1800.0,
        format!("{bench_s:.0} s (< 1800)"),
    ));

    results.push(kernel_degradation());
    results.push(metric_arithmetic());
    results.push(roi_localisation(&report));
    results.push(noise_video());
    results.push(bench_determinism());

    let failed: Vec<&str> = results.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "{} of {} criteria passed in {:.0} s{}",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
