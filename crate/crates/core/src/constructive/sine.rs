use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Prng;

/// Search knobs for [`search_sine_match_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineSearch {
    /// Stratified `w` candidates in `(1/(4K), 1/K)`.
    pub w_samples: usize,
    /// `v` is searched on `[0, 10^r]` for `r = 1..=max_exp`.
    pub max_exp: u32,
    pub refine_grid: usize,
    pub refine_rounds: usize,
}

impl Default for SineSearch {
    fn default() -> Self {
        Self {
            w_samples: 512,
            max_exp: 8,
            refine_grid: 16,
            refine_rounds: 2,
        }
    }
}

/// Parameters with `u·sin(v·sin(k·w)) ≈ y_k` for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineMatch {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub achieved_eps: f64,
    pub k: usize,
    pub targets: Vec<f64>,
    pub evaluations: u64,
}

impl SineMatch {
    pub fn eval(&self, k: f64) -> f64 {
        readout(self.u, self.v, self.w, k)
    }

    pub(crate) fn from_parts(u: f64, v: f64, w: f64, targets: Vec<f64>, evaluations: u64) -> Self {
        let achieved_eps = max_error(u, v, w, &targets);
        Self {
            u,
            v,
            w,
            achieved_eps,
            k: targets.len(),
            targets,
            evaluations,
        }
    }
}

pub(crate) fn readout(u: f64, v: f64, w: f64, k: f64) -> f64 {
    u * (v * (k * w).sin()).sin()
}

/// `max_k |u·sin(v·sin(kw)) − y_k|`, with `k` starting at 1.
pub fn max_error(u: f64, v: f64, w: f64, y: &[f64]) -> f64 {
    y.iter()
        .enumerate()
        .map(|(i, &t)| (readout(u, v, w, (i + 1) as f64) - t).abs())
        .fold(0.0, f64::max)
}

/// Budget ran out. `best` is the lowest-error candidate seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchFailure {
    pub best: SineMatch,
    pub budget: u64,
    pub eps: f64,
}

impl From<SearchFailure> for Error {
    fn from(f: SearchFailure) -> Self {
        Error::SearchExhausted {
            budget: f.budget,
            best_eps: f.best.achieved_eps,
            eps: f.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchError {
    Invalid(Error),
    Exhausted(SearchFailure),
}

impl From<MatchError> for Error {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::Invalid(e) => e,
            MatchError::Exhausted(f) => f.into(),
        }
    }
}

impl std::fmt::Display for MatchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        Error::from(self.clone()).fmt(f)
    }
}

impl std::error::Error for MatchError {}

pub fn search_sine_match(
    y: &[f64],
    eps: f64,
    budget: u64,
    seed: u64,
) -> std::result::Result<SineMatch, MatchError> {
    search_sine_match_with(y, eps, budget, seed, &SineSearch::default())
}

pub fn search_sine_match_with(
    y: &[f64],
    eps: f64,
    budget: u64,
    seed: u64,
    cfg: &SineSearch,
) -> std::result::Result<SineMatch, MatchError> {
    check_inputs(y.len(), eps, y.iter().all(|v| v.is_finite()), cfg)
        .map_err(MatchError::Invalid)?;
    let r = search_bands(y, y, eps, budget, seed, cfg);
    let m = SineMatch::from_parts(r.u, r.v, r.w, y.to_vec(), r.evaluations);
    if r.found && m.achieved_eps < eps {
        Ok(m)
    } else {
        Err(MatchError::Exhausted(SearchFailure {
            best: m,
            budget,
            eps,
        }))
    }
}

pub(crate) fn check_inputs(k: usize, eps: f64, finite: bool, cfg: &SineSearch) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument(
            "sine matching needs at least one target".into(),
        ));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Argument(format!(
            "tolerance must be positive, got {eps}"
        )));
    }
    if !finite {
        return Err(Error::Numeric("sine-match targets must be finite".into()));
    }
    if cfg.w_samples == 0 || cfg.max_exp == 0 {
        return Err(Error::Argument(
            "sine search needs w samples and at least one v range".into(),
        ));
    }
    Ok(())
}

/// Outcome of a band search: each target is an interval `[lo_k, hi_k]` and
/// a candidate succeeds when every readout lies within `tol` of its band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BandResult {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub err: f64,
    pub found: bool,
    pub evaluations: u64,
}

fn band_error(u: f64, v: f64, w: f64, lo: &[f64], hi: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, (&l, &h)) in lo.iter().zip(hi).enumerate() {
        let t = readout(u, v, w, (i + 1) as f64);
        worst = worst.max(l - t).max(t - h);
    }
    worst
}

/// Angles in one period where `sin θ ∈ (lo, hi)`, as sorted open arcs
/// inside `[−π/2, 5π/2)`.
fn sine_arcs(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    if lo >= hi || lo >= 1.0 || hi <= -1.0 {
        return Vec::new();
    }
    if lo < -1.0 && hi > 1.0 {
        return vec![(-FRAC_PI_2, 3.0 * FRAC_PI_2)];
    }
    let a = lo.max(-1.0).asin();
    let b = hi.min(1.0).asin();
    if hi >= 1.0 {
        vec![(a, PI - a)]
    } else if lo <= -1.0 {
        vec![(PI - b, TAU + b)]
    } else {
        vec![(a, b), (PI - b, PI - a)]
    }
}

#[derive(Debug, Clone, Copy)]
struct Cand {
    v: f64,
    w: f64,
    dv: f64,
    err: f64,
}

enum Step {
    Found(f64),
    Abort,
    Done { generated: bool },
}

struct WTask<'a> {
    u: f64,
    w: f64,
    tol: f64,
    /// `sin(k·w)` for `k = 1..=K`.
    a: Vec<f64>,
    /// Constraint visiting order: slowest phase first.
    order: Vec<usize>,
    arcs: &'a [Vec<(f64, f64)>],
    lo: &'a [f64],
    hi: &'a [f64],
    cap: u64,
    count: u64,
    best: Option<Cand>,
    best_depth: usize,
}

impl WTask<'_> {
    fn score(&mut self, v: f64, dv: f64) -> Option<f64> {
        if self.count >= self.cap {
            return None;
        }
        self.count += 1;
        let err = band_error(self.u, v, self.w, self.lo, self.hi);
        if self.best.is_none_or(|b| err < b.err) {
            self.best = Some(Cand {
                v,
                w: self.w,
                dv,
                err,
            });
        }
        Some(err)
    }

    fn dfs(&mut self, level: usize, lo: f64, hi: f64) -> Step {
        let k = self.order[level];
        let a = self.a[k];
        let arcs = self.arcs;
        let arcs = &arcs[k];
        let (t_min, t_max) = (arcs[0].0, arcs[arcs.len() - 1].1);
        let last = level + 1 == self.order.len();
        let mut generated = false;
        let mut n = ((lo * a - t_max) / TAU).floor();
        loop {
            let base = TAU * n;
            if (t_min + base) / a > hi {
                break;
            }
            for &(t0, t1) in arcs {
                let l = ((t0 + base) / a).max(lo);
                let h = ((t1 + base) / a).min(hi);
                if l >= h {
                    continue;
                }
                if self.count >= self.cap {
                    return Step::Abort;
                }
                self.count += 1;
                generated = true;
                let mid = 0.5 * (l + h);
                if last {
                    match self.score(mid, h - l) {
                        None => return Step::Abort,
                        Some(e) if e < self.tol => return Step::Found(mid),
                        Some(_) => continue,
                    }
                }
                match self.dfs(level + 1, l, h) {
                    Step::Done { generated: false } if level + 1 >= self.best_depth => {
                        self.best_depth = level + 1;
                        if self.score(mid, h - l).is_none() {
                            return Step::Abort;
                        }
                    }
                    Step::Done { .. } => {}
                    other => return other,
                }
            }
            n += 1.0;
        }
        Step::Done { generated }
    }
}

struct TaskOut {
    w: f64,
    found: Option<f64>,
    evals: u64,
    best: Option<Cand>,
}

/// Deterministic budgeted search shared by the point and band variants.
///
/// For each `w` the feasible `v` set is an intersection of periodic interval
/// families, one per target. A depth-first walk over those families finds an
/// exact feasible interval when one exists in range; every interval it
/// generates and every candidate it scores costs one evaluation.
pub(crate) fn search_bands(
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    budget: u64,
    seed: u64,
    cfg: &SineSearch,
) -> BandResult {
    let k = lo.len();
    let kf = k as f64;
    let u = lo.iter().chain(hi).fold(0.0f64, |m, v| m.max(v.abs()));
    let w_lo = 1.0 / (4.0 * kf);
    let w_span = 3.0 / (4.0 * kf);

    let start_w = 0.5 / kf;
    let mut best = Cand {
        v: 0.0,
        w: start_w,
        dv: 1.0,
        err: band_error(u, 0.0, start_w, lo, hi),
    };
    let mut used = budget.min(1);
    if best.err < tol || u == 0.0 || budget == 0 {
        return BandResult {
            u,
            v: 0.0,
            w: start_w,
            err: best.err,
            found: best.err < tol,
            evaluations: used,
        };
    }
    let arcs: Vec<Vec<(f64, f64)>> = lo
        .iter()
        .zip(hi)
        .map(|(&l, &h)| sine_arcs(l / u - tol / u, h / u + tol / u))
        .collect();
    if arcs.iter().any(|a| a.is_empty()) {
        return BandResult {
            u,
            v: best.v,
            w: best.w,
            err: best.err,
            found: false,
            evaluations: used,
        };
    }

    let mut rng = Prng::new(seed);
    let ws: Vec<f64> = (0..cfg.w_samples)
        .map(|i| w_lo + w_span * (i as f64 + 0.05 + 0.9 * rng.next_f64()) / cfg.w_samples as f64)
        .collect();

    for r in 1..=cfg.max_exp {
        let remaining = budget - used;
        let rounds_left = (cfg.max_exp - r + 1) as u64;
        let cap = remaining / (cfg.w_samples as u64 * rounds_left);
        if cap == 0 {
            break;
        }
        let v_lo = if r == 1 {
            0.0
        } else {
            10f64.powi(r as i32 - 1)
        };
        let v_hi = 10f64.powi(r as i32);
        let outs: Vec<TaskOut> = ws
            .par_iter()
            .map(|&w| {
                let a: Vec<f64> = (1..=k).map(|i| (i as f64 * w).sin()).collect();
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
                let mut t = WTask {
                    u,
                    w,
                    tol,
                    a,
                    order,
                    arcs: &arcs,
                    lo,
                    hi,
                    cap,
                    count: 0,
                    best: None,
                    best_depth: 0,
                };
                let found = match t.dfs(0, v_lo, v_hi) {
                    Step::Found(v) => Some(v),
                    _ => None,
                };
                TaskOut {
                    w,
                    found,
                    evals: t.count,
                    best: t.best,
                }
            })
            .collect();
        for o in outs {
            used += o.evals;
            if let Some(v) = o.found {
                let err = band_error(u, v, o.w, lo, hi);
                return BandResult {
                    u,
                    v,
                    w: o.w,
                    err,
                    found: true,
                    evaluations: used,
                };
            }
            if let Some(c) = o.best {
                if c.err < best.err {
                    best = c;
                }
            }
        }
    }

    // Coarse-to-fine polish around the best candidate.
    let g = cfg.refine_grid.max(1);
    let mut dw = w_span / cfg.w_samples as f64;
    let mut dv = best.dv;
    for _ in 0..cfg.refine_rounds {
        if budget - used < (g * g) as u64 {
            break;
        }
        let centre = best;
        for i in 0..g {
            for j in 0..g {
                let v = (centre.v + dv * ((i as f64 + 0.5) / g as f64 - 0.5)).max(0.0);
                let w = centre.w + dw * ((j as f64 + 0.5) / g as f64 - 0.5);
                used += 1;
                if w <= 0.0 || w >= 1.0 / kf {
                    continue;
                }
                let err = band_error(u, v, w, lo, hi);
                if err < best.err {
                    best = Cand { v, w, dv, err };
                }
            }
        }
        if best.err < tol {
            return BandResult {
                u,
                v: best.v,
                w: best.w,
                err: best.err,
                found: true,
                evaluations: used,
            };
        }
        dv /= g as f64;
        dw /= g as f64;
    }
    BandResult {
        u,
        v: best.v,
        w: best.w,
        err: best.err,
        found: false,
        evaluations: used,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_target() {
        let m = search_sine_match(&[0.5], 0.01, 100_000, 0).unwrap();
        assert_eq!(m.u, 0.5);
        assert!(m.achieved_eps < 0.01);
        assert!((m.eval(1.0) - 0.5).abs() < 0.01);
    }

    #[test]
    fn wide_tolerance_is_immediate() {
        let y = [0.3, -0.2, 0.1, 0.25];
        let m = search_sine_match(&y, 0.61, 1_000, 3).unwrap();
        assert_eq!(m.evaluations, 1);
        assert!(m.achieved_eps < 0.61);
    }

    #[test]
    fn three_targets() {
        let y = [0.9, -0.4, 0.2];
        let m = search_sine_match(&y, 0.1, 10_000_000, 0).unwrap();
        assert_eq!(m.k, 3);
        assert!(m.achieved_eps < 0.1);
        assert!(m.evaluations <= 10_000_000);
        for (i, &t) in y.iter().enumerate() {
            assert!((m.eval((i + 1) as f64) - t).abs() < 0.1);
        }
        assert!(m.w > 0.0 && m.w < 1.0 / 3.0);
    }

    #[test]
    fn all_zero_targets() {
        let m = search_sine_match(&[0.0; 5], 1e-9, 10, 0).unwrap();
        assert_eq!(m.achieved_eps, 0.0);
    }

    #[test]
    fn tiny_budget_fails_with_best_candidate() {
        let y = [0.9, -0.8, 0.7, -0.6, 0.5, -0.4, 0.3, -0.2];
        match search_sine_match(&y, 1e-4, 50, 0) {
            Err(MatchError::Exhausted(f)) => {
                assert!(f.best.evaluations <= 50);
                assert_eq!(
                    f.best.achieved_eps,
                    max_error(f.best.u, f.best.v, f.best.w, &y)
                );
                let e: Error = f.into();
                assert!(matches!(e, Error::SearchExhausted { budget: 50, .. }));
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            search_sine_match(&[], 0.1, 10, 0),
            Err(MatchError::Invalid(_))
        ));
        assert!(matches!(
            search_sine_match(&[0.1], 0.0, 10, 0),
            Err(MatchError::Invalid(_))
        ));
        assert!(matches!(
            search_sine_match(&[f64::NAN], 0.1, 10, 0),
            Err(MatchError::Invalid(_))
        ));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let y = [0.7, 0.1, -0.5, 0.4, -0.2];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| search_sine_match(&y, 0.08, 2_000_000, 9))
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn arcs_cover_the_right_angles() {
        let arcs = sine_arcs(0.2, 0.6);
        for i in 0..2000 {
            let th = -FRAC_PI_2 + 3.0 * PI * i as f64 / 2000.0;
            let inside = arcs.iter().any(|&(a, b)| th > a && th < b);
            let s = th.sin();
            if (s - 0.2).abs() > 1e-9 && (s - 0.6).abs() > 1e-9 && th < 3.0 * FRAC_PI_2 {
                assert_eq!(inside, s > 0.2 && s < 0.6, "theta = {th}");
            }
        }
        assert!(sine_arcs(1.2, 1.5).is_empty());
        assert_eq!(sine_arcs(-2.0, 2.0).len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn success_means_within_tolerance(
            y in proptest::collection::vec(-1.0f64..1.0, 1..4),
            eps in 0.05f64..0.3,
            seed in any::<u64>(),
        ) {
            let u = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            match search_sine_match(&y, eps, 200_000, seed) {
                Ok(m) => {
                    prop_assert!(m.achieved_eps < eps);
                    prop_assert_eq!(m.u, u);
                    prop_assert!(m.evaluations <= 200_000);
                }
                Err(MatchError::Exhausted(f)) => prop_assert!(f.best.evaluations <= 200_000),
                Err(MatchError::Invalid(e)) => prop_assert!(false, "{}", e),
            }
        }
    }
}
