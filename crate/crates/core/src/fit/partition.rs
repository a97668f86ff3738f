//! Greedy interval partitioning over two histograms.
//!
//! The first pass splits against the EM histogram (keeps sharp features),
//! the second against the smoothed EMS histogram; the final function is
//! fitted on EMS with every breakpoint found. Each iteration adds the single
//! breakpoint that minimises total RSS, searched inside the interval with the
//! largest RSS among those whose smoothed mass clears the noise floor.

use log::debug;

use super::search::accelerated_candidates;
use super::segment::{fit_segments, FastFit, SegmentFitter};
use super::{Breakpoints, FitConfig, PLFunction};
use crate::error::{Error, Result};

/// Narrowest interval produced by a split.
const MIN_WIDTH: usize = 2;

/// Per-pass record of total RSS after each accepted breakpoint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    /// `passes[i][0]` is the RSS before the first addition in pass `i + 1`.
    pub passes: Vec<Vec<f64>>,
    /// Passes that ended because no interval cleared the noise floor.
    pub floor_stops: Vec<usize>,
}

/// Runs the two-pass greedy search and returns the fitted function.
pub fn partition_intervals(hist_em: &[f64], hist_ems: &[f64], cfg: &FitConfig) -> Result<PLFunction> {
    partition_intervals_traced(hist_em, hist_ems, cfg).map(|(pl, _)| pl)
}

/// As [`partition_intervals`], also returning the RSS trace.
pub fn partition_intervals_traced(
    hist_em: &[f64],
    hist_ems: &[f64],
    cfg: &FitConfig,
) -> Result<(PLFunction, FitTrace)> {
    cfg.validate()?;
    let d = hist_ems.len();
    if d < 2 {
        return Err(Error::InvalidConfig(format!(
            "fitting needs at least 2 buckets, got {d}"
        )));
    }
    if hist_em.len() != d {
        return Err(Error::Ragged {
            expected: d,
            found: hist_em.len(),
            index: 0,
        });
    }

    let smooth = SegmentFitter::new(hist_ems);
    // RSS below this is rounding noise of an exact fit
    let negligible = 1e-13 * hist_ems.iter().chain(hist_em).map(|f| f * f).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut knots = vec![1, d];
    let mut trace = FitTrace::default();

    for pass in 1..=2usize {
        let hist = if pass == 1 { hist_em } else { hist_ems };
        let fitter = SegmentFitter::new(hist);
        let cap = cfg.k_max * pass / 2;
        let mut current = fitter.fit(&knots);
        let mut rss_trace = vec![current.total_rss];

        while knots.len() - 1 < cap {
            if current.total_rss <= negligible {
                break;
            }
            let Some(k) = select_interval(&current, &knots, &smooth, cfg.noise_floor) else {
                trace.floor_stops.push(pass);
                debug!("pass {pass}: no interval above the noise floor");
                break;
            };
            let lo = knots[k - 1] + MIN_WIDTH;
            let hi = knots[k - 1] + width(&knots, k) - MIN_WIDTH;
            let schedule = accelerated_candidates(lo, hi, cfg.granularity_phi);
            let mut trial = knots.clone();
            trial.insert(k, 0);
            let outcome = schedule.search(|s| {
                trial[k] = s;
                fitter.fit(&trial).total_rss
            });
            knots.insert(k, outcome.best);
            let next = fitter.fit(&knots);
            rss_trace.push(next.total_rss);
            let converged = next.total_rss / current.total_rss >= cfg.convergence_ratio;
            current = next;
            if converged {
                break;
            }
        }
        debug!("pass {pass}: {} segments", knots.len() - 1);
        trace.passes.push(rss_trace);
    }

    let pl = fit_segments(hist_ems, &Breakpoints::new(knots)?)?;
    Ok((pl, trace))
}

fn width(knots: &[usize], k: usize) -> usize {
    let last = knots.len() - 1;
    if k == last {
        knots[k] - knots[k - 1] + 1
    } else {
        knots[k] - knots[k - 1]
    }
}

/// Interval (1-based) with the largest RSS among those that can be split
/// and whose smoothed mass exceeds `floor`.
fn select_interval(fit: &FastFit, knots: &[usize], smooth: &SegmentFitter, floor: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in 1..knots.len() {
        let w = width(knots, k);
        if w < 2 * MIN_WIDTH {
            continue;
        }
        let lo = knots[k - 1];
        if smooth.mass(lo, lo + w - 1) <= floor {
            continue;
        }
        let rss = fit.rss_per_interval[k - 1];
        if best.is_none_or(|(_, r)| rss > r) {
            best = Some((k, rss));
        }
    }
    best.map(|(k, _)| k)
}
