//! QoS-constrained energy-efficiency maximization over one integer variable.
//!
//! A bisection first locates the feasibility boundary of `epsilon <= eps_max`
//! (largest `N`, or smallest `M`), then an exhaustive scan over the feasible
//! range picks the most efficient value. Every evaluation is memoized, so
//! points visited by the bisection are not recomputed by the scan.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SystemConfig;
use crate::metrics::{Analyzer, MetricsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("no value in {lo}..={hi} satisfies epsilon <= {eps_max}")]
    Infeasible {
        lo: usize,
        hi: usize,
        eps_max: f64,
        evaluations: usize,
    },
    #[error(
        "epsilon is not monotone: epsilon({a}) = {eps_a:e} but epsilon({b}) = {eps_b:e}; the feasibility boundary would be wrong"
    )]
    NonMonotone {
        a: usize,
        eps_a: f64,
        b: usize,
        eps_b: f64,
    },
    #[error("invalid search input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Error and efficiency of one candidate value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub epsilon: f64,
    pub eta: Option<f64>,
}

/// One row of the optimizer sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub candidate: usize,
    pub epsilon: f64,
    pub eta: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    /// `N*` or `M*`.
    pub best_value: usize,
    pub best_eta: f64,
    /// `N^max` or `M^min`.
    pub feasible_bound: usize,
    /// Distinct candidates evaluated across both phases.
    pub evaluations: usize,
    /// Every evaluated candidate, in increasing order.
    pub sweep: Vec<SweepRecord>,
}

impl OptResult {
    pub fn sweep_csv(&self, candidate_name: &str) -> String {
        let mut out = format!("{candidate_name},epsilon,eta,feasible\n");
        for r in &self.sweep {
            out.push_str(&format!(
                "{},{:e},{},{}\n",
                r.candidate,
                r.epsilon,
                r.eta.map(|e| format!("{e:e}")).unwrap_or_default(),
                r.feasible
            ));
        }
        out
    }
}

/// How `epsilon` moves with the searched variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    /// More UEs never help: feasible set is `lo..=bound`.
    NonDecreasing,
    /// More antennas never hurt: feasible set is `bound..=hi`.
    NonIncreasing,
}

// Floating-point slack for the monotonicity audit.
const MONO_ABS_TOL: f64 = 1e-14;
const MONO_REL_TOL: f64 = 1e-9;

struct Memo<F> {
    eval: F,
    seen: BTreeMap<usize, Evaluation>,
}

impl<F> Memo<F>
where
    F: Fn(usize) -> Result<Evaluation, OptimizeError> + Sync,
{
    fn new(eval: F) -> Self {
        Self {
            eval,
            seen: BTreeMap::new(),
        }
    }

    fn get(&mut self, v: usize) -> Result<Evaluation, OptimizeError> {
        if let Some(e) = self.seen.get(&v) {
            return Ok(*e);
        }
        let e = (self.eval)(v)?;
        self.seen.insert(v, e);
        Ok(e)
    }

    /// Evaluates every missing value of `range` in parallel.
    fn fill(&mut self, range: std::ops::RangeInclusive<usize>) -> Result<(), OptimizeError> {
        let missing: Vec<usize> = range.filter(|v| !self.seen.contains_key(v)).collect();
        let eval = &self.eval;
        let results: Vec<(usize, Result<Evaluation, OptimizeError>)> =
            missing.into_par_iter().map(|v| (v, eval(v))).collect();
        for (v, r) in results {
            self.seen.insert(v, r?);
        }
        Ok(())
    }

    fn check_monotone(&self, dir: Monotonicity) -> Result<(), OptimizeError> {
        let pts: Vec<(usize, f64)> = self.seen.iter().map(|(v, e)| (*v, e.epsilon)).collect();
        // Compare each point against the running extreme of the points before it.
        let mut extreme: Option<(usize, f64)> = None;
        for &(v, eps) in &pts {
            if let Some((a, ea)) = extreme {
                let slack = MONO_ABS_TOL + MONO_REL_TOL * ea.abs().max(eps.abs());
                let broken = match dir {
                    Monotonicity::NonDecreasing => eps + slack < ea,
                    Monotonicity::NonIncreasing => eps > ea + slack,
                };
                if broken {
                    return Err(OptimizeError::NonMonotone {
                        a,
                        eps_a: ea,
                        b: v,
                        eps_b: eps,
                    });
                }
            }
            extreme = match (extreme, dir) {
                (Some((_, ea)), Monotonicity::NonDecreasing) if ea >= eps => extreme,
                (Some((_, ea)), Monotonicity::NonIncreasing) if ea <= eps => extreme,
                _ => Some((v, eps)),
            };
        }
        Ok(())
    }
}

/// Largest `v` in `lo..=hi` with `epsilon(v) <= eps_max`, for nondecreasing epsilon.
///
/// Returns `None` when `lo` itself is infeasible. The upper end is treated as a
/// virtual infeasible point `hi + 1`, so it is only evaluated if the search reaches it.
fn last_feasible<F>(memo: &mut Memo<F>, lo: usize, hi: usize, eps_max: f64) -> Result<Option<usize>, OptimizeError>
where
    F: Fn(usize) -> Result<Evaluation, OptimizeError> + Sync,
{
    if memo.get(lo)?.epsilon > eps_max {
        return Ok(None);
    }
    let (mut lower, mut upper) = (lo, hi + 1);
    while upper - lower > 1 {
        let mid = lower + (upper - lower).div_ceil(2);
        if memo.get(mid)?.epsilon <= eps_max {
            lower = mid;
        } else {
            upper = mid;
        }
    }
    Ok(Some(lower))
}

/// Smallest `v` in `lo..=hi` with `epsilon(v) <= eps_max`, for nonincreasing epsilon.
fn first_feasible<F>(memo: &mut Memo<F>, lo: usize, hi: usize, eps_max: f64) -> Result<Option<usize>, OptimizeError>
where
    F: Fn(usize) -> Result<Evaluation, OptimizeError> + Sync,
{
    if memo.get(hi)?.epsilon > eps_max {
        return Ok(None);
    }
    // `lower` is a virtual infeasible point just below the range.
    let (mut lower, mut upper) = (lo as isize - 1, hi as isize);
    while upper - lower > 1 {
        let mid = lower + (upper - lower) / 2;
        if memo.get(mid as usize)?.epsilon <= eps_max {
            upper = mid;
        } else {
            lower = mid;
        }
    }
    Ok(Some(upper as usize))
}

fn search<F>(
    lo: usize,
    hi: usize,
    eps_max: f64,
    dir: Monotonicity,
    eval: F,
) -> Result<(Memo<F>, Option<usize>), OptimizeError>
where
    F: Fn(usize) -> Result<Evaluation, OptimizeError> + Sync,
{
    if lo == 0 || hi < lo {
        return Err(OptimizeError::InvalidInput(format!("empty range {lo}..={hi}")));
    }
    if !(eps_max > 0.0 && eps_max < 1.0) {
        return Err(OptimizeError::InvalidInput(format!("eps_max {eps_max} not in (0, 1)")));
    }
    let mut memo = Memo::new(eval);
    let bound = match dir {
        Monotonicity::NonDecreasing => last_feasible(&mut memo, lo, hi, eps_max)?,
        Monotonicity::NonIncreasing => first_feasible(&mut memo, lo, hi, eps_max)?,
    };
    memo.check_monotone(dir)?;
    Ok((memo, bound))
}

/// Feasibility boundary only: largest feasible value (`NonDecreasing`) or
/// smallest feasible value (`NonIncreasing`), `None` when nothing is feasible.
pub fn feasibility_bound<F>(
    lo: usize,
    hi: usize,
    eps_max: f64,
    dir: Monotonicity,
    eval: F,
) -> Result<Option<usize>, OptimizeError>
where
    F: Fn(usize) -> Result<Evaluation, OptimizeError> + Sync,
{
    Ok(search(lo, hi, eps_max, dir, eval)?.1)
}

/// Bisection for the feasibility boundary followed by an exhaustive scan of
/// the feasible range. Ties in efficiency go to the smallest value.
pub fn optimize_integer<F>(
    lo: usize,
    hi: usize,
    eps_max: f64,
    dir: Monotonicity,
    eval: F,
) -> Result<OptResult, OptimizeError>
where
    F: Fn(usize) -> Result<Evaluation, OptimizeError> + Sync,
{
    let (mut memo, bound) = search(lo, hi, eps_max, dir, eval)?;
    let Some(bound) = bound else {
        return Err(OptimizeError::Infeasible {
            lo,
            hi,
            eps_max,
            evaluations: memo.seen.len(),
        });
    };
    let range = match dir {
        Monotonicity::NonDecreasing => lo..=bound,
        Monotonicity::NonIncreasing => bound..=hi,
    };
    memo.fill(range.clone())?;
    memo.check_monotone(dir)?;

    let mut best: Option<(usize, f64)> = None;
    for v in range {
        let e = memo.seen[&v];
        debug_assert!(e.epsilon <= eps_max);
        let eta = e.eta.unwrap_or(0.0);
        if best.is_none_or(|(_, b)| eta > b) {
            best = Some((v, eta));
        }
    }
    let (best_value, best_eta) = best.expect("feasible range is nonempty");
    let sweep = memo
        .seen
        .iter()
        .map(|(v, e)| SweepRecord {
            candidate: *v,
            epsilon: e.epsilon,
            eta: e.eta,
            feasible: e.epsilon <= eps_max,
        })
        .collect();
    Ok(OptResult {
        best_value,
        best_eta,
        feasible_bound: bound,
        evaluations: memo.seen.len(),
        sweep,
    })
}

/// Initial bisection upper bound for the number of UEs, `ceil(2M / mu)`.
pub fn n_upper(config: &SystemConfig) -> Result<usize, OptimizeError> {
    if !(config.arrival_prob > 0.0) {
        return Err(OptimizeError::InvalidInput(
            "the UE search needs a positive arrival probability".into(),
        ));
    }
    Ok((2.0 * config.n_antennas as f64 / config.arrival_prob).ceil() as usize)
}

fn n_evaluator(
    config: &SystemConfig,
) -> Result<impl Fn(usize) -> Result<Evaluation, OptimizeError> + Sync, OptimizeError> {
    let base = Analyzer::new(config.clone())?;
    Ok(move |n: usize| {
        let mut cfg = base.config().clone();
        cfg.n_ues = n;
        let r = base.rebind(cfg)?.report()?;
        Ok(Evaluation {
            epsilon: r.epsilon,
            eta: r.efficiency_bpj,
        })
    })
}

/// `N^max`: the largest population meeting `eps_max`, or 0 when even one UE fails it.
pub fn find_n_max(config: &SystemConfig, eps_max: f64) -> Result<usize, OptimizeError> {
    let hi = n_upper(config)?;
    let bound = feasibility_bound(1, hi, eps_max, Monotonicity::NonDecreasing, n_evaluator(config)?)?;
    Ok(bound.unwrap_or(0))
}

/// `N*`: the most energy-efficient population among `1..=N^max`.
pub fn optimize_n(config: &SystemConfig, eps_max: f64) -> Result<OptResult, OptimizeError> {
    let hi = n_upper(config)?;
    optimize_integer(1, hi, eps_max, Monotonicity::NonDecreasing, n_evaluator(config)?)
}

/// Smallest antenna count accepted by [`SystemConfig::validate`].
pub const MIN_ANTENNAS: usize = 2;

/// `M*`: the most energy-efficient antenna count among `M^min..=m_max`.
pub fn optimize_m(config: &SystemConfig, eps_max: f64, m_max: usize) -> Result<OptResult, OptimizeError> {
    config.validate().map_err(MetricsError::from)?;
    let base = config.clone();
    let eval = move |m: usize| {
        let mut cfg = base.clone();
        cfg.n_antennas = m;
        let r = Analyzer::new(cfg)?.report()?;
        Ok(Evaluation {
            epsilon: r.epsilon,
            eta: r.efficiency_bpj,
        })
    };
    optimize_integer(MIN_ANTENNAS, m_max, eps_max, Monotonicity::NonIncreasing, eval)
}
