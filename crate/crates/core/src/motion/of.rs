use super::{check_pair, OfConfig, VelocitySample};
use crate::error::{Error, Result};
use crate::profiles::{Patch, ProfileSet};

/// Condition number above which the 2-D normal equations are treated as
/// rank deficient (aperture problem).
const MAX_CONDITION: f64 = 1e6;

/// Box-derivative taps of length `len`: `-1` over the first half, `+1` over
/// the second (a central `0` for odd lengths), scaled so a unit ramp gives 1.
pub fn derivative_kernel(len: usize) -> Vec<f64> {
    assert!(len >= 2, "derivative kernel needs at least two taps");
    let half = len / 2;
    let gain = if len % 2 == 0 {
        (half * half) as f64
    } else {
        (half * (half + 1)) as f64
    };
    (0..len)
        .map(|i| {
            if i < half {
                -1.0 / gain
            } else if len % 2 == 1 && i == half {
                0.0
            } else {
                1.0 / gain
            }
        })
        .collect()
}

/// Box average of length `len`, the temporal-difference counterpart of
/// [`derivative_kernel`].
pub fn averaging_kernel(len: usize) -> Vec<f64> {
    vec![1.0 / len as f64; len]
}

#[derive(Default)]
struct Moments1D {
    yy: f64,
    yt: f64,
    tt: f64,
    samples: usize,
}

impl Moments1D {
    fn accumulate(&mut self, first: &[f64], second: &[f64], d: &[f64], a: &[f64]) {
        let len = d.len();
        if first.len() < len {
            return;
        }
        for r in 0..=first.len() - len {
            let mut gy = 0.0;
            let mut gt = 0.0;
            for j in 0..len {
                gy += d[j] * first[r + j];
                gt += a[j] * (first[r + j] - second[r + j]);
            }
            self.yy += gy * gy;
            self.yt += gy * gt;
            self.tt += gt * gt;
            self.samples += 1;
        }
    }

    /// Velocity and quality.
    fn solve(&self, eps: f64) -> Result<(f64, f64)> {
        if self.samples == 0 {
            return Err(Error::Degenerate("profile shorter than the derivative kernel".into()));
        }
        if eps == 0.0 && self.yy == 0.0 {
            return Err(Error::ZeroGradient);
        }
        let v = self.yt / (self.yy + eps);
        let residual = (self.tt - 2.0 * v * self.yt + v * v * self.yy).max(0.0);
        Ok((v, quality(residual, self.tt, self.yy)))
    }
}

fn quality(residual: f64, temporal: f64, gradient: f64) -> f64 {
    if temporal > 0.0 {
        (1.0 - residual.sqrt() / temporal.sqrt()).clamp(0.0, 1.0)
    } else if gradient > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn of_patch(first: &Patch, second: &Patch, cfg: &OfConfig) -> Result<VelocitySample> {
    let len = cfg.kernel_len;
    if first.rows < len || first.cols < len {
        return Err(Error::Degenerate("patch smaller than the derivative kernel".into()));
    }
    let d = derivative_kernel(len);
    let a = averaging_kernel(len);
    let (mut xx, mut xy, mut yy, mut xt, mut yt, mut tt) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for r in 0..=first.rows - len {
        for c in 0..=first.cols - len {
            let (mut gy, mut gx, mut gt) = (0.0, 0.0, 0.0);
            for i in 0..len {
                for j in 0..len {
                    let p = first.get(r + i, c + j);
                    let q = second.get(r + i, c + j);
                    gy += d[i] * a[j] * p;
                    gx += a[i] * d[j] * p;
                    gt += a[i] * a[j] * (p - q);
                }
            }
            xx += gx * gx;
            xy += gx * gy;
            yy += gy * gy;
            xt += gx * gt;
            yt += gy * gt;
            tt += gt * gt;
        }
    }
    let eps = cfg.regularization_epsilon;
    if eps == 0.0 && yy == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let (sxx, syy) = (xx + eps, yy + eps);
    let det = sxx * syy - xy * xy;
    let half_trace = 0.5 * (sxx + syy);
    let spread = (half_trace * half_trace - det).max(0.0).sqrt();
    let (l_max, l_min) = (half_trace + spread, half_trace - spread);
    if l_min <= 0.0 || l_max / l_min > MAX_CONDITION {
        let vy = yt / syy;
        let residual = (tt - 2.0 * vy * yt + vy * vy * yy).max(0.0);
        return Ok(VelocitySample {
            vertical_fallback: true,
            ..VelocitySample::vertical(vy, quality(residual, tt, yy))
        });
    }
    let vx = (syy * xt - xy * yt) / det;
    let vy = (sxx * yt - xy * xt) / det;
    let residual = (tt - 2.0 * (vx * xt + vy * yt) + vx * vx * xx + 2.0 * vx * vy * xy + vy * vy * yy).max(0.0);
    Ok(VelocitySample {
        v_x: Some(vx),
        ..VelocitySample::vertical(vy, quality(residual, tt, xx + yy))
    })
}

/// Least-squares gradient-constraint displacement of a profile pair.
///
/// 1-D kinds regress the temporal difference on the vertical gradient
/// jointly over every valid sample of every profile, so M1D differs from C1D
/// only in keeping the columns apart. The quality is `1 - |Dt - v Dy| / |Dt|`.
pub fn of_estimate(first: &ProfileSet, second: &ProfileSet, cfg: &OfConfig) -> Result<VelocitySample> {
    check_pair(first, second)?;
    if cfg.kernel_len < 2 || cfg.regularization_epsilon < 0.0 {
        return Err(Error::Config("kernel length must be >= 2 and epsilon >= 0".into()));
    }
    let d = derivative_kernel(cfg.kernel_len);
    let a = averaging_kernel(cfg.kernel_len);
    let mut m = Moments1D::default();
    match (first, second) {
        (ProfileSet::Combined(x), ProfileSet::Combined(y)) => m.accumulate(x, y, &d, &a),
        (ProfileSet::Columns(xs), ProfileSet::Columns(ys)) => {
            for (x, y) in xs.iter().zip(ys) {
                m.accumulate(x, y, &d, &a);
            }
        }
        (ProfileSet::Patch(x), ProfileSet::Patch(y)) => return of_patch(x, y, cfg),
        _ => unreachable!("kinds checked above"),
    }
    let (v, q) = m.solve(cfg.regularization_epsilon)?;
    Ok(VelocitySample::vertical(v, q))
}
