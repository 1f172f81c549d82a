use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::floor::{build_floor_net, FloorNet, DEFAULT_DELTA};
use super::sine::{check_inputs, readout, search_bands, SineMatch, SineSearch};
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Lower estimate of `ω_f(t)` on `[0, 1]` from `n + 1` grid samples.
pub fn modulus_estimate<F: Fn(f64) -> f64>(f: F, t: f64, n: usize) -> Result<f64> {
    modulus_estimate_on(f, (0.0, 1.0), t, n)
}

/// Largest `max − min` of `f` over grid windows of length at most `t`,
/// i.e. the sup of `|f(x) − f(y)|` over grid pairs with `|x − y| ≤ t`.
pub fn modulus_estimate_on<F: Fn(f64) -> f64>(
    f: F,
    (a, b): (f64, f64),
    t: f64,
    n: usize,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Argument(format!(
            "modulus step must be >= 0, got {t}"
        )));
    }
    if !(a < b) {
        return Err(Error::Range { lo: a, hi: b });
    }
    if n == 0 {
        return Err(Error::Argument(
            "modulus estimate needs at least one grid step".into(),
        ));
    }
    let h = (b - a) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f(a + h * i as f64)).collect();
    if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "f({}) is not finite",
            a + h * bad as f64
        )));
    }
    let lag = ((t / h) * (1.0 + 1e-12)).floor().min(n as f64) as usize;
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best: f64 = 0.0;
    for (i, &v) in vals.iter().enumerate() {
        while maxq.back().is_some_and(|&j| vals[j] <= v) {
            maxq.pop_back();
        }
        maxq.push_back(i);
        while minq.back().is_some_and(|&j| vals[j] >= v) {
            minq.pop_back();
        }
        minq.push_back(i);
        while maxq[0] + lag < i {
            maxq.pop_front();
        }
        while minq[0] + lag < i {
            minq.pop_front();
        }
        best = best.max(vals[maxq[0]] - vals[minq[0]]);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub n: usize,
    pub l: usize,
    pub delta: f64,
    pub match_budget: u64,
    pub seed: u64,
    /// Monte-Carlo points for the L¹ error.
    pub mc_samples: usize,
    /// Grid steps for the modulus estimate.
    pub modulus_samples: usize,
    /// Fraction of each cell, centred, from which the representative
    /// `x_k` may be picked. 0 pins it to the cell midpoint.
    pub window: f64,
    pub window_samples: usize,
    /// Floor on the match tolerance; only binds when `ω_f(1/M)` is tiny.
    pub min_eps: f64,
    pub search: SineSearch,
}

impl TheoremConfig {
    pub fn new(n: usize, l: usize) -> Self {
        Self {
            n,
            l,
            delta: DEFAULT_DELTA,
            match_budget: 10_000_000,
            seed: 0,
            mc_samples: 100_000,
            modulus_samples: 1 << 16,
            window: 0.5,
            window_samples: 4097,
            min_eps: 1e-3,
            search: SineSearch::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.l == 0 {
            return Err(Error::Argument("N and L must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.window) {
            return Err(Error::Argument(format!(
                "window must lie in [0, 1), got {}",
                self.window
            )));
        }
        if !(self.min_eps > 0.0) {
            return Err(Error::Argument(format!(
                "min_eps must be positive, got {}",
                self.min_eps
            )));
        }
        if self.mc_samples == 0 || self.modulus_samples == 0 || self.window_samples == 0 {
            return Err(Error::Argument("sample counts must be positive".into()));
        }
        Ok(())
    }
}

/// `φ2 ∘ φ1` on `[0, 1]`: `φ1(x) = ⌊Mx⌋ + 1` via a floor network, then the
/// two-sine readout `φ2(k) = u·sin(v·sin(kw))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremNet1d {
    pub n: usize,
    pub l: usize,
    pub delta: f64,
    pub eps: f64,
    pub m: usize,
    /// `x_k` for `k = 1..=M`.
    pub representatives: Vec<f64>,
    pub floor: FloorNet,
    pub sine: SineMatch,
}

impl TheoremNet1d {
    pub fn index(&self, x: f64) -> f64 {
        self.floor.eval(self.m as f64 * x) + 1.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sine.eval(self.index(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremBuild {
    pub net: TheoremNet1d,
    pub measured_l1: f64,
    pub bound: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TheoremError {
    Invalid(Error),
    /// The partial artifact, built from the best sine candidate, and why it
    /// does not qualify.
    Failed(Box<TheoremBuild>, Error),
}

impl From<TheoremError> for Error {
    fn from(e: TheoremError) -> Self {
        match e {
            TheoremError::Invalid(e) | TheoremError::Failed(_, e) => e,
        }
    }
}

impl std::fmt::Display for TheoremError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        Error::from(self.clone()).fmt(f)
    }
}

impl std::error::Error for TheoremError {}

/// Mean `|φ − f|` over `n` uniform points of `[0, 1]`.
fn mc_l1<F: Fn(f64) -> f64 + Sync>(net: &TheoremNet1d, f: &F, n: usize, seed: u64) -> f64 {
    let mut rng = Prng::stream(seed, 0x6d63);
    let xs: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
    let parts: Vec<f64> = xs
        .par_chunks(4096)
        .map(|c| c.iter().map(|&x| (net.eval(x) - f(x)).abs()).sum::<f64>())
        .collect();
    parts.iter().sum::<f64>() / n as f64
}

/// Assembles the one-dimensional approximation network and certifies its
/// L¹ error against `2·ω_f(1/M)`.
///
/// Targets are matched with tolerance `ε = ω_f(1/M)/11`. Each representative
/// `x_k` is chosen after the search from a centred window of its cell, so
/// the search sees the band `[min f, max f]` over that window rather than a
/// single value.
pub fn build_theorem_net_1d<F: Fn(f64) -> f64 + Sync>(
    f: F,
    cfg: &TheoremConfig,
) -> std::result::Result<TheoremBuild, TheoremError> {
    cfg.validate().map_err(TheoremError::Invalid)?;
    let m = cfg
        .n
        .checked_pow(cfg.l as u32)
        .ok_or_else(|| TheoremError::Invalid(Error::Argument("N^L overflows".into())))?;
    let mf = m as f64;
    let floor = build_floor_net(cfg.n, cfg.l, cfg.delta).map_err(TheoremError::Invalid)?;
    let omega =
        modulus_estimate(&f, 1.0 / mf, cfg.modulus_samples).map_err(TheoremError::Invalid)?;
    let bound = 2.0 * omega;
    let eps = (omega / 11.0).max(cfg.min_eps);

    // Window samples per cell, nearest to the centre first.
    let s = if cfg.window > 0.0 {
        cfg.window_samples
    } else {
        1
    };
    let half = cfg.window / (2.0 * mf);
    let mut offsets: Vec<f64> = (0..s)
        .map(|j| {
            if s == 1 {
                0.0
            } else {
                -half + 2.0 * half * j as f64 / (s - 1) as f64
            }
        })
        .collect();
    offsets.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    let cells: Vec<Vec<(f64, f64)>> = (1..=m)
        .map(|k| {
            let c = (k as f64 - 0.5) / mf;
            offsets.iter().map(|&o| (c + o, f(c + o))).collect()
        })
        .collect();
    let finite = cells.iter().flatten().all(|&(_, y)| y.is_finite());
    check_inputs(m, eps, finite, &cfg.search).map_err(TheoremError::Invalid)?;

    let lo: Vec<f64> = cells
        .iter()
        .map(|c| c.iter().map(|p| p.1).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = cells
        .iter()
        .map(|c| c.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    // Keep a little slack for picking x_k off a finite sample grid.
    let tol = if s > 1 { 0.9 * eps } else { eps };
    let r = search_bands(&lo, &hi, tol, cfg.match_budget, cfg.seed, &cfg.search);

    let mut reps = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for (i, cell) in cells.iter().enumerate() {
        let t = readout(r.u, r.v, r.w, (i + 1) as f64);
        let pick = cell
            .iter()
            .find(|p| (p.1 - t).abs() < tol)
            .or_else(|| {
                cell.iter()
                    .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            })
            .copied()
            .unwrap_or((0.5 / mf, f(0.5 / mf)));
        reps.push(pick.0);
        ys.push(pick.1);
    }
    let sine = SineMatch::from_parts(r.u, r.v, r.w, ys, r.evaluations);
    let matched = r.found && sine.achieved_eps < eps;
    let net = TheoremNet1d {
        n: cfg.n,
        l: cfg.l,
        delta: cfg.delta,
        eps,
        m,
        representatives: reps,
        floor,
        sine,
    };
    let measured_l1 = mc_l1(&net, &f, cfg.mc_samples, cfg.seed);
    let build = TheoremBuild {
        net,
        measured_l1,
        bound,
        omega,
    };

    if !matched {
        let err = Error::SearchExhausted {
            budget: cfg.match_budget,
            best_eps: build.net.sine.achieved_eps,
            eps,
        };
        return Err(TheoremError::Failed(Box::new(build), err));
    }
    if !(measured_l1 <= bound) {
        let err = Error::Construction(format!(
            "measured L1 error {measured_l1:e} exceeds the bound {bound:e}"
        ));
        return Err(TheoremError::Failed(Box::new(build), err));
    }
    Ok(build)
}
