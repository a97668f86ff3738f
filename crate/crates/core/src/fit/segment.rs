//! Least-squares fitting of a continuous piecewise-linear function on fixed
//! breakpoints.

use nalgebra::{DMatrix, DVector};

use super::{Breakpoints, PLFunction};
use crate::error::{Error, Result};

/// Relative size of an `R` diagonal entry below which a column counts as
/// dependent.
const RANK_TOL: f64 = 1e-12;

/// Row `v` of the combined design matrix `X + A`.
fn design_row(bps: &Breakpoints, v: usize, row: &mut [f64]) {
    let s = bps.points();
    let k_count = bps.segments();
    row[0] = 1.0;
    for k in 1..=k_count {
        let (lo, hi) = bps.interval(k);
        row[k] = if v >= lo && v <= hi {
            (v - s[k - 1]) as f64
        } else if v > hi {
            (s[k] - s[k - 1]) as f64
        } else {
            0.0
        };
    }
}

/// Fits slopes and intercept to `hist` by an orthogonal (QR) least-squares
/// solve over the full design matrix.
pub fn fit_segments(hist: &[f64], bps: &Breakpoints) -> Result<PLFunction> {
    let d = hist.len();
    let k_count = bps.segments();
    if bps.domain() != d {
        return Err(Error::InputDomain(format!(
            "breakpoints end at {} but histogram has {d} buckets",
            bps.domain()
        )));
    }
    if d < k_count + 1 {
        return Err(Error::InvalidConfig(format!(
            "{d} buckets cannot identify {} parameters",
            k_count + 1
        )));
    }

    let cols = k_count + 1;
    let mut design = DMatrix::<f64>::zeros(d, cols);
    let mut row = vec![0.0; cols];
    for v in 1..=d {
        design_row(bps, v, &mut row);
        for (c, &x) in row.iter().enumerate() {
            design[(v - 1, c)] = x;
        }
    }
    let target = DVector::from_column_slice(hist);

    let qr = design.qr();
    let r = qr.r();
    let scale = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..cols {
        if r[(i, i)].abs() <= RANK_TOL * scale {
            return Err(Error::SingularFit {
                interval: i.max(1),
            });
        }
    }
    let rhs = qr.q().transpose() * &target;
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or(Error::SingularFit { interval: 1 })?;
    let beta: Vec<f64> = beta.iter().copied().collect();

    let mut pl = PLFunction {
        breakpoints: bps.clone(),
        beta,
        interval_freqs: vec![0.0; k_count],
        rss_per_interval: vec![0.0; k_count],
    };
    let fitted = pl.histogram();
    for k in 1..=k_count {
        let (lo, hi) = bps.interval(k);
        let mut mass = 0.0;
        let mut rss = 0.0;
        for v in lo..=hi {
            mass += hist[v - 1];
            rss += (hist[v - 1] - fitted[v - 1]).powi(2);
        }
        pl.interval_freqs[k - 1] = mass;
        pl.rss_per_interval[k - 1] = rss;
    }
    Ok(pl)
}

/// Result of a [`SegmentFitter`] evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FastFit {
    /// Function values at the breakpoints.
    pub knot_values: Vec<f64>,
    pub rss_per_interval: Vec<f64>,
    pub total_rss: f64,
}

/// Repeated fits of one histogram under varying breakpoints.
///
/// The same function space is spanned by hat functions centred on the
/// breakpoints, whose normal matrix is tridiagonal; with prefix sums of
/// `f`, `v·f` and `f²` every fit costs `O(K)` regardless of `d`.
#[derive(Debug, Clone)]
pub struct SegmentFitter {
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

struct Moments {
    n: f64,
    su: f64,
    suu: f64,
    sf: f64,
    suf: f64,
    sff: f64,
}

impl SegmentFitter {
    pub fn new(hist: &[f64]) -> Self {
        let d = hist.len();
        let mut s0 = Vec::with_capacity(d + 1);
        let mut s1 = Vec::with_capacity(d + 1);
        let mut s2 = Vec::with_capacity(d + 1);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        s0.push(0.0);
        s1.push(0.0);
        s2.push(0.0);
        for (i, &f) in hist.iter().enumerate() {
            a += f;
            b += (i + 1) as f64 * f;
            c += f * f;
            s0.push(a);
            s1.push(b);
            s2.push(c);
        }
        Self { s0, s1, s2 }
    }

    pub fn domain(&self) -> usize {
        self.s0.len() - 1
    }

    /// Mass of buckets `lo..=hi`.
    pub fn mass(&self, lo: usize, hi: usize) -> f64 {
        self.s0[hi] - self.s0[lo - 1]
    }

    /// Sums over `v ∈ [lo, hi]` with local offset `u = v − lo`.
    fn moments(&self, lo: usize, hi: usize) -> Moments {
        let m = (hi - lo) as f64;
        let sf = self.s0[hi] - self.s0[lo - 1];
        let svf = self.s1[hi] - self.s1[lo - 1];
        Moments {
            n: m + 1.0,
            su: m * (m + 1.0) / 2.0,
            suu: m * (m + 1.0) * (2.0 * m + 1.0) / 6.0,
            sf,
            suf: svf - lo as f64 * sf,
            sff: self.s2[hi] - self.s2[lo - 1],
        }
    }

    /// Least-squares fit on the given 1-based breakpoints (`s_0 = 1`,
    /// `s_K = d`, strictly increasing).
    pub fn fit(&self, knots: &[usize]) -> FastFit {
        let kk = knots.len() - 1;
        let d = self.domain();
        let mut diag = vec![0.0; kk + 1];
        let mut off = vec![0.0; kk];
        let mut rhs = vec![0.0; kk + 1];
        let mut moments = Vec::with_capacity(kk);
        for k in 1..=kk {
            let lo = knots[k - 1];
            let hi = if k == kk { d } else { knots[k] - 1 };
            let len = (knots[k] - knots[k - 1]) as f64;
            let mo = self.moments(lo, hi);
            let st = mo.su / len;
            let stt = mo.suu / (len * len);
            diag[k - 1] += mo.n - 2.0 * st + stt;
            off[k - 1] += st - stt;
            diag[k] += stt;
            let stf = mo.suf / len;
            rhs[k - 1] += mo.sf - stf;
            rhs[k] += stf;
            moments.push(mo);
        }
        let y = solve_tridiagonal(&diag, &off, &rhs);

        let mut rss_per_interval = Vec::with_capacity(kk);
        for k in 1..=kk {
            let mo = &moments[k - 1];
            let len = (knots[k] - knots[k - 1]) as f64;
            let a = y[k - 1];
            let b = (y[k] - y[k - 1]) / len;
            let cross = a * mo.sf + b * mo.suf;
            let sq = a * a * mo.n + 2.0 * a * b * mo.su + b * b * mo.suu;
            rss_per_interval.push((mo.sff - 2.0 * cross + sq).max(0.0));
        }
        let total_rss = rss_per_interval.iter().sum();
        FastFit {
            knot_values: y,
            rss_per_interval,
            total_rss,
        }
    }
}

/// Thomas algorithm for a symmetric tridiagonal system.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = if n > 1 { off[0] / denom } else { 0.0 };
    r[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        r[i] = (rhs[i] - off[i - 1] * r[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = r[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = r[i] - c[i] * x[i + 1];
    }
    x
}
