//! The effective Hamiltonian as a set of `(theta, lambda)` samples, with flat
//! pieces (gaps) detected from jumps in the sampled means.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::CellProblem;
use crate::env::{lipschitz_constant, radius_bound, Environment, GrowthEnvelopes, LipschitzSample};
use crate::error::{Error, Result};

/// One point on the graph of the effective Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ESample {
    pub theta: f64,
    pub lambda: f64,
    /// Initial value `f(0)` of the periodic solution (periodic media only).
    pub initial_value: Option<f64>,
    pub stability: i8,
    /// Half-width of the confidence interval on `theta` (zero when exact).
    pub ci: f64,
    /// Index into the level grid, `None` for refinement samples.
    pub level_index: Option<usize>,
}

/// A flat piece of the effective Hamiltonian over `(theta_left, theta_right)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub theta_left: f64,
    pub theta_right: f64,
    pub lambda_bar: f64,
    pub lambda_left: f64,
    pub lambda_right: f64,
    /// `|lambda_left - lambda_right|`: zero in exact arithmetic.
    pub endpoint_mismatch: f64,
    pub initial_left: Option<f64>,
    pub initial_right: Option<f64>,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.theta_right - self.theta_left
    }
    pub fn contains(&self, theta: f64) -> bool {
        theta > self.theta_left && theta < self.theta_right
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveHamiltonian {
    /// Sorted by `theta`.
    pub samples: Vec<ESample>,
    pub gaps: Vec<Gap>,
    pub lipschitz_estimates: Vec<LipschitzSample>,
    /// True when built from Monte Carlo estimates rather than exact means.
    pub empirical: bool,
    pub lambda_range: (f64, f64),
    pub n_lambda: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveOptions {
    /// A spacing larger than this multiple of the local resolution is a gap
    /// candidate.
    pub gap_factor: f64,
    /// Neighbours on each side used for the local resolution.
    pub resolution_window: usize,
    /// Endpoint tolerance when comparing gap inventories.
    pub gap_tol: f64,
    /// Bisection depth when refining a candidate.
    pub max_refine_depth: usize,
    /// Re-derive the inventory from every other level and require agreement.
    pub check_half_grid: bool,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        Self { gap_factor: 5.0, resolution_window: 4, gap_tol: 1e-3, max_refine_depth: 40, check_half_grid: true }
    }
}

/// Uniform level grid with `n` nodes on `[lo, hi]`.
pub fn level_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Every periodic solution at every grid level, as samples.
pub fn sweep_levels(cell: &CellProblem, lambda_lo: f64, lambda_hi: f64, n: usize) -> Result<Vec<ESample>> {
    let ground = cell.envelopes().ground();
    if lambda_lo < ground {
        return Err(Error::BelowGround { lambda: lambda_lo, ground });
    }
    let levels = level_grid(lambda_lo, lambda_hi, n);
    let per_level = levels
        .par_iter()
        .enumerate()
        .map(|(k, &lam)| {
            let branches = cell.find_periodic_solutions(lam)?;
            Ok(branches
                .into_iter()
                .map(|b| ESample {
                    theta: b.theta,
                    lambda: b.lambda,
                    initial_value: Some(b.initial_value),
                    stability: b.stability_index,
                    ci: 0.0,
                    level_index: Some(k),
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples: Vec<ESample> = per_level.into_iter().flatten().collect();
    sort_samples(&mut samples);
    Ok(samples)
}

fn sort_samples(samples: &mut [ESample]) {
    samples.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.lambda.total_cmp(&b.lambda)));
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Indices `i` whose spacing to `i + 1` exceeds `factor` times the median
/// of nearby spacings, returned with that median.
pub fn gap_candidates(samples: &[ESample], factor: f64, window: usize) -> Vec<(usize, f64)> {
    let d: Vec<f64> = samples.windows(2).map(|w| w[1].theta - w[0].theta).collect();
    let mut out = Vec::new();
    for i in 0..d.len() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(d.len());
        let neighbours: Vec<f64> = (lo..hi).filter(|&j| j != i).map(|j| d[j]).collect();
        let res = median(neighbours);
        if res.is_finite() && d[i] > factor * res {
            out.push((i, res));
        }
    }
    out
}

struct Refinement {
    samples: Vec<ESample>,
    gap: Option<Gap>,
}

fn gap_between(a: &ESample, b: &ESample) -> Gap {
    Gap {
        theta_left: a.theta,
        theta_right: b.theta,
        lambda_bar: 0.5 * (a.lambda + b.lambda),
        lambda_left: a.lambda,
        lambda_right: b.lambda,
        endpoint_mismatch: (a.lambda - b.lambda).abs(),
        initial_left: a.initial_value,
        initial_right: b.initial_value,
    }
}

fn branch_sample(cell: &CellProblem, p: f64) -> Result<Option<ESample>> {
    Ok(cell.level_for_initial_value(p)?.map(|b| ESample {
        theta: b.theta,
        lambda: b.lambda,
        initial_value: Some(p),
        stability: b.stability_index,
        ci: 0.0,
        level_index: None,
    }))
}

/// Fills the candidate `(a, b)` by bisecting the initial value and solving for
/// the level at each midpoint. A gap remains where no level makes the midpoint
/// periodic, or where the jump survives until the initial values coincide.
fn refine_candidate(
    cell: &CellProblem,
    a: &ESample,
    b: &ESample,
    target: f64,
    opts: &EffectiveOptions,
) -> Result<Refinement> {
    let mut new = Vec::new();
    let mut stack = vec![(a.clone(), b.clone(), 0usize)];
    let mut unresolved: Vec<(ESample, ESample)> = Vec::new();
    let p_tol = 1e3 * cell.options().root_tol;
    while let Some((l, r, depth)) = stack.pop() {
        if r.theta - l.theta <= target {
            continue;
        }
        let (pl, pr) = (l.initial_value.unwrap(), r.initial_value.unwrap());
        if depth >= opts.max_refine_depth || (pr - pl).abs() <= p_tol {
            if r.theta - l.theta > opts.gap_factor * target {
                unresolved.push((l, r));
            }
            continue;
        }
        match branch_sample(cell, 0.5 * (pl + pr))? {
            Some(m) if m.theta > l.theta && m.theta < r.theta => {
                new.push(m.clone());
                stack.push((l, m.clone(), depth + 1));
                stack.push((m, r, depth + 1));
            }
            _ => unresolved.push((l, r)),
        }
    }
    let gap = unresolved
        .into_iter()
        .max_by(|x, y| (x.1.theta - x.0.theta).total_cmp(&(y.1.theta - y.0.theta)))
        .map(|(l, r)| gap_between(&l, &r));
    Ok(Refinement { samples: new, gap })
}

/// Runs candidate detection and refinement on `samples`.
pub fn assemble(cell: &CellProblem, mut samples: Vec<ESample>, opts: &EffectiveOptions) -> Result<(Vec<ESample>, Vec<Gap>)> {
    sort_samples(&mut samples);
    let candidates = gap_candidates(&samples, opts.gap_factor, opts.resolution_window);
    let refinements = candidates
        .par_iter()
        .map(|&(i, res)| refine_candidate(cell, &samples[i], &samples[i + 1], res, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut gaps = Vec::new();
    for r in refinements {
        samples.extend(r.samples);
        gaps.extend(r.gap);
    }
    sort_samples(&mut samples);
    gaps.sort_by(|a, b| a.theta_left.total_cmp(&b.theta_left));
    Ok((samples, gaps))
}

fn inventories_agree(full: &[Gap], half: &[Gap], tol: f64) -> bool {
    full.len() == half.len()
        && full.iter().zip(half).all(|(a, b)| {
            (a.theta_left - b.theta_left).abs() <= tol && (a.theta_right - b.theta_right).abs() <= tol
        })
}

/// Builds the effective Hamiltonian of a periodic medium from a level sweep.
pub fn build_effective(
    cell: &CellProblem,
    lambda_lo: f64,
    lambda_hi: f64,
    n_lambda: usize,
    opts: &EffectiveOptions,
) -> Result<EffectiveHamiltonian> {
    let samples = sweep_levels(cell, lambda_lo, lambda_hi, n_lambda)?;
    effective_from_sweep(cell, samples, (lambda_lo, lambda_hi), n_lambda, opts)
}

/// Assembles an effective Hamiltonian from previously swept samples.
pub fn effective_from_sweep(
    cell: &CellProblem,
    samples: Vec<ESample>,
    lambda_range: (f64, f64),
    n_lambda: usize,
    opts: &EffectiveOptions,
) -> Result<EffectiveHamiltonian> {
    let half_samples: Vec<ESample> =
        samples.iter().filter(|s| s.level_index.is_some_and(|k| k % 2 == 0)).cloned().collect();
    let (full, gaps) = assemble(cell, samples, opts)?;
    if opts.check_half_grid {
        let (_, half_gaps) = assemble(cell, half_samples, opts)?;
        let res = median(full.windows(2).map(|w| w[1].theta - w[0].theta).collect());
        let tol = opts.gap_tol.max(opts.gap_factor * res);
        if !inventories_agree(&gaps, &half_gaps, tol) {
            return Err(Error::SweepTooCoarse {
                detail: format!("{} gaps on the full grid, {} on the half grid", gaps.len(), half_gaps.len()),
            });
        }
    }
    let r_max = full.iter().map(|s| s.theta.abs()).fold(0.0, f64::max).max(1.0);
    let env = cell.env();
    let lipschitz_estimates = [0.5 * r_max, r_max]
        .iter()
        .map(|&r| Ok(LipschitzSample { radius: r, constant: lipschitz_constant(env, r, 128)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(EffectiveHamiltonian { samples: full, gaps, lipschitz_estimates, empirical: false, lambda_range, n_lambda })
}

impl EffectiveHamiltonian {
    pub fn theta_range(&self) -> (f64, f64) {
        (self.samples[0].theta, self.samples[self.samples.len() - 1].theta)
    }

    /// Piecewise-linear interpolation of the samples, constant across gaps.
    pub fn query(&self, theta: f64) -> Result<f64> {
        let (lo, hi) = self.theta_range();
        if !(theta >= lo && theta <= hi) {
            return Err(Error::OutOfRange { theta, lo, hi });
        }
        if let Some(g) = self.gaps.iter().find(|g| g.contains(theta)) {
            return Ok(g.lambda_bar);
        }
        let k = self.samples.partition_point(|s| s.theta <= theta);
        if k == 0 {
            return Ok(self.samples[0].lambda);
        }
        if k >= self.samples.len() {
            return Ok(self.samples[self.samples.len() - 1].lambda);
        }
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let w = b.theta - a.theta;
        if w <= 0.0 {
            return Ok(a.lambda);
        }
        Ok(a.lambda + (theta - a.theta) / w * (b.lambda - a.lambda))
    }

    /// Largest `|slope|` of the interpolant on `[lo, hi]`.
    pub fn max_slope_on(&self, lo: f64, hi: f64) -> f64 {
        let mut best: f64 = 0.0;
        for w in self.samples.windows(2) {
            if w[1].theta < lo || w[0].theta > hi {
                continue;
            }
            let d = w[1].theta - w[0].theta;
            if d > 0.0 && !self.gaps.iter().any(|g| g.theta_left <= w[0].theta && g.theta_right >= w[1].theta) {
                best = best.max(((w[1].lambda - w[0].lambda) / d).abs());
            }
        }
        best
    }
}

/// Observed slope between sample neighbours against the sampled Lipschitz
/// bound at the matching radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub radius: f64,
    pub k_bound: f64,
    pub max_observed_slope: f64,
}

impl AuditRow {
    pub fn holds(&self) -> bool {
        self.max_observed_slope <= self.k_bound * (1.0 + 1e-6) + 1e-9
    }
}

/// For each neighbouring pair the radius is the larger of the radius bounds at
/// `G_U(theta)` of the two means. Rows are grouped by radius rounded up to
/// 0.05.
pub fn lipschitz_audit(
    eff: &EffectiveHamiltonian,
    env: &dyn Environment,
    envelopes: &GrowthEnvelopes,
) -> Result<Vec<AuditRow>> {
    let mut rows: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    let radius_for = |theta: f64| -> Result<f64> {
        match radius_bound(envelopes, envelopes.gu(theta)) {
            Ok(r) => Ok(r.max(theta.abs())),
            Err(Error::BeyondGrid { .. }) => Ok(envelopes.p_max().max(theta.abs())),
            Err(e) => Err(e),
        }
    };
    for w in eff.samples.windows(2) {
        let d = w[1].theta - w[0].theta;
        if d <= 0.0 {
            continue;
        }
        let in_gap = eff.gaps.iter().any(|g| g.theta_left <= w[0].theta && g.theta_right >= w[1].theta);
        let slope = if in_gap { 0.0 } else { ((w[1].lambda - w[0].lambda) / d).abs() };
        let r = radius_for(w[0].theta)?.max(radius_for(w[1].theta)?);
        let key = (r / 0.05).ceil() as i64;
        let e = rows.entry(key).or_insert((0.0, 0.0));
        e.1 = e.1.max(slope);
    }
    rows.into_iter()
        .map(|(key, (_, slope))| {
            let radius = key as f64 * 0.05;
            Ok(AuditRow { radius, k_bound: lipschitz_constant(env, radius, 256)?, max_observed_slope: slope })
        })
        .collect()
}
