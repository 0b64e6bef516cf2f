use super::{check_pair, combine_column_velocities, CcConfig, ColumnEstimate, Interpolation, VelocitySample};
use crate::error::{Error, Result};
use crate::profiles::{Patch, ProfileSet};

/// Smallest template (rows or columns) correlated against the search window.
const MIN_TEMPLATE: usize = 4;
const FLAT: f64 = 1e-18;

/// Search radius actually usable on a profile of `len` samples: the
/// configured radius, shrunk until a `MIN_TEMPLATE`-long template remains.
fn usable_radius(len: usize, radius: usize) -> usize {
    radius.min(len.saturating_sub(MIN_TEMPLATE) / 2)
}

fn centered(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = values.collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|x| x - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Dot product of two slices after removing the given means.
fn centered_dot(a: &[f64], ma: f64, b: &[f64], mb: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum()
}

fn lattice(from: f64, to: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((to - from) / step + 1e-9).floor() as i64;
    (0..=n).map(move |i| from + i as f64 * step)
}

/// Splits a fractional lag into the lower grid lag and the weight of the
/// upper one, staying inside `[lo, hi]`.
fn split_lag(f: f64, lo: i64, hi: i64) -> (i64, f64) {
    if lo == hi {
        return (lo, 0.0);
    }
    let f = f.clamp(lo as f64, hi as f64);
    let j = (f.floor() as i64).clamp(lo, hi - 1);
    (j, f - j as f64)
}

fn parabolic_offset(left: f64, centre: f64, right: f64) -> f64 {
    let denom = left - 2.0 * centre + right;
    if denom.abs() < 1e-15 {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

fn snap(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
}

/// Zero-mean normalized correlation of a vertical profile pair.
struct Correlation1D<'a> {
    template: Vec<f64>,
    template_energy: f64,
    second: &'a [f64],
    radius: i64,
    /// Per lag (index `lag + radius`): window mean, centered energy and
    /// correlation with the template.
    means: Vec<f64>,
    energy: Vec<f64>,
    cross: Vec<f64>,
}

impl<'a> Correlation1D<'a> {
    fn new(first: &[f64], second: &'a [f64], search_radius: usize) -> Result<Self> {
        let n = first.len();
        let radius = usable_radius(n, search_radius);
        if radius == 0 {
            return Err(Error::Degenerate(format!(
                "profile of {n} samples is too short for correlation"
            )));
        }
        let len = n - 2 * radius;
        let template = centered(first[radius..radius + len].iter().copied());
        let template_energy = dot(&template, &template);
        if template_energy < FLAT {
            return Err(Error::Degenerate("flat template profile".into()));
        }
        let lags = 2 * radius + 1;
        let (mut means, mut energy, mut cross) = (
            Vec::with_capacity(lags),
            Vec::with_capacity(lags),
            Vec::with_capacity(lags),
        );
        for s in 0..lags {
            let w = &second[s..s + len];
            let m = mean(w);
            means.push(m);
            energy.push(centered_dot(w, m, w, m));
            // The template sums to zero, so the window needs no centering here.
            cross.push(dot(&template, w));
        }
        if energy.iter().all(|&e| e < FLAT) {
            return Err(Error::Degenerate("flat search profile".into()));
        }
        Ok(Self {
            template,
            template_energy,
            second,
            radius: radius as i64,
            means,
            energy,
            cross,
        })
    }

    fn idx(&self, lag: i64) -> usize {
        (lag + self.radius) as usize
    }

    fn ncc(&self, lag: i64) -> f64 {
        let i = self.idx(lag);
        if self.energy[i] < FLAT {
            return 0.0;
        }
        self.cross[i] / (self.template_energy * self.energy[i]).sqrt()
    }

    fn estimate(&self, cfg: &CcConfig) -> (f64, f64) {
        let r = self.radius;
        let scores: Vec<f64> = (-r..=r).map(|k| self.ncc(k)).collect();
        let (best_idx, best) = argmax(&scores);
        let peak = best_idx as i64 - r;

        match cfg.interpolation {
            Interpolation::Parabolic => {
                if peak == -r || peak == r {
                    return (peak as f64, best);
                }
                let i = best_idx;
                let off = parabolic_offset(scores[i - 1], scores[i], scores[i + 1]);
                (snap(peak as f64 + off, cfg.subpixel_step), best)
            }
            Interpolation::Linear => self.refine_linear(peak, best, cfg.subpixel_step),
        }
    }

    /// Best lag on the `step` lattice over `[peak - 1, peak + 1]`, correlating
    /// against the linearly interpolated second profile.
    ///
    /// Between two integer lags the correlation is `(a + b t) / sqrt(q(t))`
    /// with `q` quadratic, which has a single stationary point, so only the
    /// lattice points beside it and at the interval ends need evaluating.
    fn refine_linear(&self, peak: i64, peak_score: f64, step: f64) -> (f64, f64) {
        let r = self.radius;
        let lo = (peak - 1).max(-r);
        let hi = (peak + 1).min(r);
        let len = self.template.len();
        // Centered dot products of adjacent windows, index `lag - lo`.
        let adjacent: Vec<f64> = (lo..hi)
            .map(|k| {
                let (i, j) = (self.idx(k), self.idx(k + 1));
                let s = (k + r) as usize;
                centered_dot(
                    &self.second[s..s + len],
                    self.means[i],
                    &self.second[s + 1..s + 1 + len],
                    self.means[j],
                )
            })
            .collect();
        let segment = |j: i64| {
            let (i0, i1) = (self.idx(j), self.idx(j + 1));
            let g = adjacent[(j - lo) as usize];
            let (e0, e1) = (self.energy[i0], self.energy[i1]);
            let (a, b) = (self.cross[i0], self.cross[i1] - self.cross[i0]);
            let (c, d, e) = (e0, 2.0 * (g - e0), e0 - 2.0 * g + e1);
            (a, b, c, d, e)
        };
        let score = |f: f64| -> f64 {
            let (j, t) = split_lag(f, lo, hi);
            if t == 0.0 {
                return self.ncc(j);
            }
            let (a, b, c, d, e) = segment(j);
            let q = c + d * t + e * t * t;
            (a + b * t) / (self.template_energy * q).max(FLAT).sqrt()
        };

        let last = ((hi - lo) as f64 / step + 1e-9).floor() as i64;
        let at = |i: i64| lo as f64 + i as f64 * step;
        let mut candidates: Vec<i64> = Vec::with_capacity(8 * (hi - lo) as usize + 2);
        for j in lo..hi {
            let first = (((j - lo) as f64 / step) - 1e-9).ceil() as i64;
            let end = (((j + 1 - lo) as f64 / step) + 1e-9).floor() as i64;
            candidates.extend([first, end]);
            let (a, b, c, d, e) = segment(j);
            let slope = b * d / 2.0 - a * e;
            if slope != 0.0 {
                let t = (a * d / 2.0 - b * c) / slope;
                if (0.0..=1.0).contains(&t) {
                    let k = ((j - lo) as f64 + t) / step;
                    candidates.extend([k.floor() as i64, k.ceil() as i64]);
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        let mut best = (peak as f64, peak_score);
        for i in candidates.into_iter().filter(|&i| (0..=last).contains(&i)) {
            let f = at(i);
            let s = score(f);
            if s > best.1 || (s == best.1 && f < best.0) {
                best = (f, s);
            }
        }
        best
    }
}

/// Zero-mean normalized correlation of two 2-D patches.
struct Correlation2D<'a> {
    template: Vec<f64>,
    template_energy: f64,
    second: &'a Patch,
    ry: i64,
    rx: i64,
    t_rows: usize,
    t_cols: usize,
}

impl<'a> Correlation2D<'a> {
    fn new(first: &Patch, second: &'a Patch, search_radius: usize) -> Result<Self> {
        let ry = usable_radius(first.rows, search_radius);
        if ry == 0 {
            return Err(Error::Degenerate(format!(
                "patch of {} rows is too short for correlation",
                first.rows
            )));
        }
        let rx = usable_radius(first.cols, search_radius);
        let (t_rows, t_cols) = (first.rows - 2 * ry, first.cols - 2 * rx);
        let template = centered((ry..ry + t_rows).flat_map(|r| (rx..rx + t_cols).map(move |c| first.get(r, c))));
        let template_energy = dot(&template, &template);
        if template_energy < FLAT {
            return Err(Error::Degenerate("flat template patch".into()));
        }
        Ok(Self {
            template,
            template_energy,
            second,
            ry: ry as i64,
            rx: rx as i64,
            t_rows,
            t_cols,
        })
    }

    /// Row `r` of the window at lag `(ky, kx)`.
    fn window_row(&self, ky: i64, kx: i64, r: usize) -> &[f64] {
        let row = (self.ry + ky) as usize + r;
        let c0 = (self.rx + kx) as usize;
        let start = row * self.second.cols + c0;
        &self.second.data[start..start + self.t_cols]
    }

    /// Mean, centered energy and template correlation of one window.
    fn window_stats(&self, ky: i64, kx: i64) -> (f64, f64, f64) {
        let n = (self.t_rows * self.t_cols) as f64;
        let (mut sum, mut cross) = (0.0, 0.0);
        for r in 0..self.t_rows {
            let w = self.window_row(ky, kx, r);
            sum += w.iter().sum::<f64>();
            cross += dot(&self.template[r * self.t_cols..(r + 1) * self.t_cols], w);
        }
        let m = sum / n;
        let energy = (0..self.t_rows)
            .map(|r| {
                let w = self.window_row(ky, kx, r);
                centered_dot(w, m, w, m)
            })
            .sum();
        (m, energy, cross)
    }

    fn estimate(&self, cfg: &CcConfig) -> Result<(f64, f64, f64)> {
        let (ry, rx) = (self.ry, self.rx);
        let nx = (2 * rx + 1) as usize;
        let mut scores = Vec::with_capacity(((2 * ry + 1) as usize) * nx);
        let mut any_texture = false;
        for ky in -ry..=ry {
            for kx in -rx..=rx {
                let (_, e, cross) = self.window_stats(ky, kx);
                any_texture |= e >= FLAT;
                scores.push(if e < FLAT {
                    0.0
                } else {
                    cross / (self.template_energy * e).sqrt()
                });
            }
        }
        if !any_texture {
            return Err(Error::Degenerate("flat search patch".into()));
        }
        let (best_idx, best) = argmax(&scores);
        let py = (best_idx / nx) as i64 - ry;
        let px = (best_idx % nx) as i64 - rx;
        let at = |ky: i64, kx: i64| scores[((ky + ry) as usize) * nx + (kx + rx) as usize];

        match cfg.interpolation {
            Interpolation::Parabolic => {
                let oy = if py > -ry && py < ry {
                    parabolic_offset(at(py - 1, px), best, at(py + 1, px))
                } else {
                    0.0
                };
                let ox = if px > -rx && px < rx {
                    parabolic_offset(at(py, px - 1), best, at(py, px + 1))
                } else {
                    0.0
                };
                let step = cfg.subpixel_step;
                Ok((snap(py as f64 + oy, step), snap(px as f64 + ox, step), best))
            }
            Interpolation::Linear => Ok(self.refine_bilinear(py, px, best, cfg.subpixel_step)),
        }
    }

    /// Coarse-to-fine lattice search over the bilinearly interpolated second
    /// patch around the integer peak.
    fn refine_bilinear(&self, py: i64, px: i64, peak_score: f64, step: f64) -> (f64, f64, f64) {
        let (ry, rx) = (self.ry, self.rx);
        let (ylo, yhi) = ((py - 1).max(-ry), (py + 1).min(ry));
        let (xlo, xhi) = ((px - 1).max(-rx), (px + 1).min(rx));
        let mx = (xhi - xlo + 1) as usize;
        let lags: Vec<(i64, i64)> = (ylo..=yhi).flat_map(|ky| (xlo..=xhi).map(move |kx| (ky, kx))).collect();
        let n = lags.len();
        let stats: Vec<(f64, f64, f64)> = lags.iter().map(|&(ky, kx)| self.window_stats(ky, kx)).collect();
        let cross: Vec<f64> = stats.iter().map(|s| s.2).collect();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            gram[i * n + i] = stats[i].1;
            for j in i + 1..n {
                let (a, b) = (lags[i], lags[j]);
                let g: f64 = (0..self.t_rows)
                    .map(|r| {
                        centered_dot(
                            self.window_row(a.0, a.1, r),
                            stats[i].0,
                            self.window_row(b.0, b.1, r),
                            stats[j].0,
                        )
                    })
                    .sum();
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        let idx = |ky: i64, kx: i64| ((ky - ylo) as usize) * mx + (kx - xlo) as usize;
        let score = |fy: f64, fx: f64| -> f64 {
            let (jy, ty) = split_lag(fy, ylo, yhi);
            let (jx, tx) = split_lag(fx, xlo, xhi);
            let mut terms = [(0usize, 0.0f64); 4];
            let mut m = 0;
            for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
                for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                    let w = wy * wx;
                    if w != 0.0 {
                        terms[m] = (idx(jy + dy, jx + dx), w);
                        m += 1;
                    }
                }
            }
            let terms = &terms[..m];
            let num: f64 = terms.iter().map(|&(i, w)| w * cross[i]).sum();
            let mut e = 0.0;
            for &(i, wi) in terms {
                for &(j, wj) in terms {
                    e += wi * wj * gram[i * n + j];
                }
            }
            num / (self.template_energy * e).max(FLAT).sqrt()
        };

        // Three passes: 25x, 5x and 1x the lattice step, each around the
        // previous optimum.
        let mut best = (py as f64, px as f64, peak_score);
        let mut span = (1.0, 1.0);
        for scale in [25.0, 5.0, 1.0] {
            let s = scale * step;
            let (cy, cx) = (best.0, best.1);
            let y_from = snap((cy - span.0).max(ylo as f64), step);
            let y_to = (cy + span.0).min(yhi as f64);
            let x_from = snap((cx - span.1).max(xlo as f64), step);
            let x_to = (cx + span.1).min(xhi as f64);
            for fy in lattice(y_from, y_to, s) {
                for fx in lattice(x_from, x_to, s) {
                    let v = score(fy, fx);
                    if v > best.2 {
                        best = (fy, fx, v);
                    }
                }
            }
            span = (s, s);
        }
        (snap(best.0, step), snap(best.1, step), best.2)
    }
}

/// Cross-correlation displacement of a profile pair.
///
/// C1D uses its single profile, M1D takes the median over columns and 2-D
/// searches a vertical-by-horizontal lag grid. The reported quality is the
/// normalized correlation at the refined peak.
pub fn cc_estimate(first: &ProfileSet, second: &ProfileSet, cfg: &CcConfig) -> Result<VelocitySample> {
    check_pair(first, second)?;
    if cfg.search_radius == 0 || !(cfg.subpixel_step > 0.0) {
        return Err(Error::Config(
            "search radius and sub-pixel step must be positive".into(),
        ));
    }
    match (first, second) {
        (ProfileSet::Combined(a), ProfileSet::Combined(b)) => {
            let (v, q) = Correlation1D::new(a, b, cfg.search_radius)?.estimate(cfg);
            Ok(VelocitySample::vertical(v, q))
        }
        (ProfileSet::Columns(a), ProfileSet::Columns(b)) => {
            let cols: Vec<ColumnEstimate> = a
                .iter()
                .zip(b)
                .filter_map(|(x, y)| Correlation1D::new(x, y, cfg.search_radius).ok())
                .map(|c| {
                    let (v_y, quality) = c.estimate(cfg);
                    ColumnEstimate { v_y, quality }
                })
                .collect();
            let v = combine_column_velocities(&cols)?;
            let q = cols.iter().map(|c| c.quality).sum::<f64>() / cols.len() as f64;
            Ok(VelocitySample::vertical(v, q))
        }
        (ProfileSet::Patch(a), ProfileSet::Patch(b)) => {
            let (vy, vx, q) = Correlation2D::new(a, b, cfg.search_radius)?.estimate(cfg)?;
            Ok(VelocitySample {
                v_x: Some(vx),
                ..VelocitySample::vertical(vy, q)
            })
        }
        _ => unreachable!("kinds checked above"),
    }
}
