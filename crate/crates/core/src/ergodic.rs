//! Stationary regimes in random media by pullback over long windows, and the
//! empirical effective Hamiltonian built from their averaged means.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::effective::{gap_candidates, ESample, EffectiveHamiltonian, Gap};
use crate::env::{compute_envelopes, lipschitz_constant, radius_bound, Environment, GrowthEnvelopes, LipschitzSample, RealizationFamily};
use crate::error::{Error, Result};
use crate::ode::{integrate_auxiliary, Barrier, OdeOptions, OdeSolution, Terminal};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicOptions {
    pub ode: OdeOptions,
    /// Initial values per pullback direction, spread over `[-R - 1, R + 1]`.
    pub starts: usize,
    /// Trajectories closer than this over the window are one regime.
    pub coalesce_tol: f64,
    /// Trajectories never closer than this multiple of `coalesce_tol` are
    /// distinct regimes; anything in between is ambiguous.
    pub separation_factor: f64,
    pub confidence: f64,
    /// A gap needs a jump this many times the summed confidence half-widths.
    pub gap_ci_factor: f64,
    /// ... and this many times the local sample spacing.
    pub gap_factor: f64,
    /// Zoom rounds around each gap candidate.
    pub refine_rounds: usize,
    /// Levels per zoom round.
    pub refine_levels: usize,
}

impl Default for ErgodicOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions { rtol: 1e-10, atol: 1e-10, h_max: 0.1, ..OdeOptions::default() },
            starts: 5,
            coalesce_tol: 1e-6,
            separation_factor: 100.0,
            confidence: 0.95,
            gap_ci_factor: 3.0,
            gap_factor: 5.0,
            refine_rounds: 4,
            refine_levels: 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PullbackDirection {
    /// Integrated left to right: finds regimes attracting forward.
    Forward,
    /// Integrated right to left: finds regimes repelling forward.
    Backward,
}

/// A stationary solution approximated on a window by pullback.
#[derive(Clone, Debug, Serialize)]
pub struct WindowBranch {
    pub lambda: f64,
    pub direction: PullbackDirection,
    pub window: (f64, f64),
    /// Average of `f` over the window.
    pub mean: f64,
    pub solution: OdeSolution,
}

impl WindowBranch {
    pub fn value(&self, x: f64) -> f64 {
        self.solution.eval(x)
    }
    pub fn slope(&self, x: f64) -> f64 {
        self.solution.slope(x)
    }
    /// `integral of f from 0 to x`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        self.solution.antiderivative_at(x) - self.solution.antiderivative_at(0.0)
    }
    /// Interval where the solution is defined.
    pub fn domain(&self) -> (f64, f64) {
        (self.solution.x_start(), self.solution.x_end())
    }
}

impl Barrier for WindowBranch {
    fn value(&self, x: f64) -> f64 {
        WindowBranch::value(self, x)
    }
    fn slope(&self, x: f64) -> f64 {
        WindowBranch::slope(self, x)
    }
    fn level(&self) -> Option<f64> {
        Some(self.lambda)
    }
}

/// Barrier intervals `[p1, p2]`.
pub type Intervals = Vec<(f64, f64)>;

/// Intervals `[p1, p2]` with constant barriers trapping forward
/// (`G_U(p1) < lambda < G_L(p2)`) and backward (`G_U(p2) < lambda < G_L(p1)`).
pub fn trap_intervals(envelopes: &GrowthEnvelopes, lambda: f64) -> (Intervals, Intervals) {
    #[derive(PartialEq, Clone, Copy)]
    enum Kind {
        Up,
        Down,
        Mixed,
    }
    let kinds: Vec<(f64, Kind)> = envelopes
        .p_grid
        .iter()
        .map(|&p| {
            let k = if envelopes.gu(p) < lambda {
                Kind::Up
            } else if envelopes.gl(p) > lambda {
                Kind::Down
            } else {
                Kind::Mixed
            };
            (p, k)
        })
        .collect();
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    let mut last: Option<(f64, Kind)> = None;
    for &(p, k) in &kinds {
        if k == Kind::Mixed {
            continue;
        }
        if let Some((q, lk)) = last {
            if lk == Kind::Up && k == Kind::Down {
                forward.push((q, p));
            } else if lk == Kind::Down && k == Kind::Up {
                backward.push((q, p));
            }
        }
        last = Some((p, k));
    }
    (forward, backward)
}

fn sup_distance(a: &OdeSolution, b: &OdeSolution, window: (f64, f64), n: usize) -> (f64, f64) {
    let mut hi: f64 = 0.0;
    let mut lo = f64::INFINITY;
    for j in 0..=n {
        let x = window.0 + (window.1 - window.0) * j as f64 / n as f64;
        let d = (a.eval(x) - b.eval(x)).abs();
        hi = hi.max(d);
        lo = lo.min(d);
    }
    (lo, hi)
}

/// Stationary regimes of one realization at `lambda` on `window`.
///
/// Trajectories start from a spread of values `burn_in` before the window
/// (forward) and `burn_in` after it (backward); survivors that coalesce form
/// one regime. Regimes are sorted by mean.
pub fn pullback_regimes(
    env: &dyn Environment,
    envelopes: &GrowthEnvelopes,
    lambda: f64,
    window: (f64, f64),
    burn_in: f64,
    opts: &ErgodicOptions,
) -> Result<Vec<WindowBranch>> {
    let r = match radius_bound(envelopes, lambda) {
        Ok(r) => r,
        Err(Error::BelowGround { .. }) => return Err(Error::NoTrapping { lambda }),
        Err(e) => return Err(e),
    };
    if env.period().is_none() {
        let (lo, hi) = env.sample_window();
        if window.0 - burn_in < lo - 1e-9 || window.1 + burn_in > hi + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "pullback span [{}, {}] leaves the generated window [{lo}, {hi}]",
                window.0 - burn_in,
                window.1 + burn_in
            )));
        }
    }
    let n = opts.starts.max(2);
    let starts: Vec<f64> = (0..n).map(|j| -(r + 1.0) + 2.0 * (r + 1.0) * j as f64 / (n - 1) as f64).collect();
    let samples = ((window.1 - window.0) * 8.0).ceil().max(64.0) as usize;
    let mut regimes: Vec<WindowBranch> = Vec::new();
    for direction in [PullbackDirection::Forward, PullbackDirection::Backward] {
        let (from, to) = match direction {
            PullbackDirection::Forward => (window.0 - burn_in, window.1),
            PullbackDirection::Backward => (window.1 + burn_in, window.0),
        };
        let survivors: Vec<OdeSolution> = starts
            .par_iter()
            .map(|&v| integrate_auxiliary(env, lambda, from, v, to, &opts.ode, r + 2.0))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|s| s.terminal == Terminal::Reached)
            .collect();
        // Survivors are ordered by their start values, so neighbours decide
        // the clustering.
        let mut clusters: Vec<OdeSolution> = Vec::new();
        for s in survivors {
            if let Some(prev) = clusters.last() {
                let (lo, hi) = sup_distance(prev, &s, window, samples);
                if hi <= opts.coalesce_tol {
                    *clusters.last_mut().unwrap() = s;
                    continue;
                }
                if lo <= opts.separation_factor * opts.coalesce_tol {
                    return Err(Error::NonCoalescent {
                        lambda,
                        detail: format!(
                            "{direction:?} trajectories are {lo:.3e}..{hi:.3e} apart on the window; lengthen the burn-in"
                        ),
                    });
                }
            }
            clusters.push(s);
        }
        for sol in clusters {
            let mean = (sol.antiderivative_at(window.1) - sol.antiderivative_at(window.0)) / (window.1 - window.0);
            regimes.push(WindowBranch { lambda, direction, window, mean, solution: sol });
        }
    }
    regimes.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    // A regime found in both directions (neutral) is kept once.
    let mut out: Vec<WindowBranch> = Vec::new();
    for g in regimes {
        if let Some(prev) = out.last() {
            if sup_distance(&prev.solution, &g.solution, window, samples).1 <= opts.coalesce_tol {
                continue;
            }
        }
        out.push(g);
    }
    if out.is_empty() {
        return Err(Error::NoTrapping { lambda });
    }
    Ok(out)
}

/// Averaged mean of one regime across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeEstimate {
    pub lambda: f64,
    pub direction: PullbackDirection,
    pub theta_hat: f64,
    /// Student-t half-width at the configured confidence; zero for one seed.
    pub ci: f64,
    pub per_seed: Vec<f64>,
    pub seed_count: usize,
    pub window: f64,
    pub burn_in: f64,
    /// Whether constant barriers certify a trapping region at this level.
    pub certified: bool,
}

fn t_halfwidth(values: &[f64], confidence: f64) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map(|d| d.inverse_cdf(0.5 + 0.5 * confidence))
        .unwrap_or(f64::NAN);
    (mean, t * (var / n as f64).sqrt())
}

/// Envelopes covering every listed realization.
pub fn family_envelopes(
    family: &dyn RealizationFamily,
    seeds: &[u64],
    p_grid: &[f64],
    x_samples: usize,
) -> Result<GrowthEnvelopes> {
    let all = seeds
        .par_iter()
        .map(|&s| compute_envelopes(family.realize_env(s).as_ref(), p_grid, x_samples))
        .collect::<Result<Vec<_>>>()?;
    let mut it = all.into_iter();
    let first = it.next().ok_or_else(|| Error::InvalidArgument("no seeds".into()))?;
    it.try_fold(first, |acc, e| acc.merge(&e))
}

/// Estimates the means of every regime at `lambda`, averaging the window
/// mean `[0, window]` over seeds.
pub fn estimate_theta_random(
    family: &dyn RealizationFamily,
    envelopes: &GrowthEnvelopes,
    lambda: f64,
    seeds: &[u64],
    window: f64,
    burn_in: f64,
    opts: &ErgodicOptions,
) -> Result<Vec<RegimeEstimate>> {
    if seeds.is_empty() || !(window > 0.0) || !(burn_in >= 0.0) {
        return Err(Error::InvalidArgument("need seeds, a positive window and a non-negative burn-in".into()));
    }
    let per_seed = seeds
        .par_iter()
        .map(|&s| {
            let env = family.realize_env(s);
            pullback_regimes(env.as_ref(), envelopes, lambda, (0.0, window), burn_in, opts)
        })
        .collect::<Vec<_>>();
    let mut lists = Vec::new();
    let mut missing = 0usize;
    for r in per_seed {
        match r {
            Ok(v) => lists.push(v),
            Err(Error::NoTrapping { .. }) => missing += 1,
            Err(e) => return Err(e),
        }
    }
    if lists.is_empty() {
        return Err(Error::NoTrapping { lambda });
    }
    let count = lists[0].len();
    if missing > 0 || lists.iter().any(|l| l.len() != count) {
        let counts: Vec<usize> = lists.iter().map(Vec::len).collect();
        return Err(Error::NonCoalescent {
            lambda,
            detail: format!("regime counts differ across seeds: {counts:?}, {missing} seeds without regimes"),
        });
    }
    let (fwd, bwd) = trap_intervals(envelopes, lambda);
    let certified = !fwd.is_empty() || !bwd.is_empty();
    let mut out: Vec<RegimeEstimate> = (0..count)
        .map(|k| {
            let vals: Vec<f64> = lists.iter().map(|l| l[k].mean).collect();
            let (theta_hat, ci) = t_halfwidth(&vals, opts.confidence);
            RegimeEstimate {
                lambda,
                direction: lists[0][k].direction,
                theta_hat,
                ci,
                per_seed: vals,
                seed_count: seeds.len(),
                window,
                burn_in,
                certified,
            }
        })
        .collect();
    // Regimes that are statistically indistinguishable are merged.
    out.sort_by(|a, b| a.theta_hat.total_cmp(&b.theta_hat));
    let mut merged: Vec<RegimeEstimate> = Vec::new();
    for e in out {
        if let Some(prev) = merged.last() {
            if (e.theta_hat - prev.theta_hat).abs() <= opts.gap_ci_factor * (e.ci + prev.ci) && e.ci + prev.ci > 0.0 {
                continue;
            }
        }
        merged.push(e);
    }
    Ok(merged)
}

fn regime_samples(estimates: &[RegimeEstimate], level_index: Option<usize>) -> Vec<ESample> {
    estimates
        .iter()
        .map(|e| ESample {
            theta: e.theta_hat,
            lambda: e.lambda,
            initial_value: None,
            stability: match e.direction {
                PullbackDirection::Forward => -1,
                PullbackDirection::Backward => 1,
            },
            ci: e.ci,
            level_index,
        })
        .collect()
}

fn sort_by_theta(samples: &mut [ESample]) {
    samples.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.lambda.total_cmp(&b.lambda)));
}

/// Levels where no regime or an ambiguous set of regimes was found are
/// skipped; their count is reported in `unresolved`.
fn estimate_levels(
    family: &dyn RealizationFamily,
    envelopes: &GrowthEnvelopes,
    levels: &[(f64, Option<usize>)],
    seeds: &[u64],
    window: f64,
    burn_in: f64,
    opts: &ErgodicOptions,
) -> Result<(Vec<ESample>, Vec<f64>)> {
    let results = levels
        .par_iter()
        .map(|&(lam, idx)| match estimate_theta_random(family, envelopes, lam, seeds, window, burn_in, opts) {
            Ok(v) => Ok((regime_samples(&v, idx), None)),
            Err(Error::NoTrapping { .. }) | Err(Error::NonCoalescent { .. }) => Ok((Vec::new(), Some(lam))),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::new();
    let mut unresolved = Vec::new();
    for (s, u) in results {
        samples.extend(s);
        unresolved.extend(u);
    }
    Ok((samples, unresolved))
}

/// Result of [`effective_from_random`]: the empirical effective Hamiltonian and
/// the levels that produced no usable regimes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomEffective {
    pub effective: EffectiveHamiltonian,
    /// Levels with no regime on any seed, or with regimes that did not
    /// coalesce or differed in number across seeds.
    pub unresolved_levels: Vec<f64>,
}

fn ci_jump(a: &ESample, b: &ESample, res: f64, opts: &ErgodicOptions) -> bool {
    let jump = b.theta - a.theta;
    jump > opts.gap_ci_factor * (a.ci + b.ci) && jump > opts.gap_factor * res
}

/// Builds the empirical effective Hamiltonian on `lambda_grid`.
///
/// A gap is declared where the jump in `theta_hat` exceeds both the CI-based
/// and the spacing-based thresholds and survives zooming in on the endpoint
/// levels: a jump that only reflects a fold of the graph shrinks as the
/// levels approach the fold, a flat piece does not.
#[allow(clippy::too_many_arguments)]
pub fn effective_from_random(
    family: &dyn RealizationFamily,
    envelopes: &GrowthEnvelopes,
    lambda_grid: &[f64],
    seeds: &[u64],
    window: f64,
    burn_in: f64,
    opts: &ErgodicOptions,
) -> Result<RandomEffective> {
    if lambda_grid.len() < 2 {
        return Err(Error::InvalidArgument("need at least two levels".into()));
    }
    let levels: Vec<(f64, Option<usize>)> = lambda_grid.iter().enumerate().map(|(k, &l)| (l, Some(k))).collect();
    let (mut samples, mut unresolved) = estimate_levels(family, envelopes, &levels, seeds, window, burn_in, opts)?;
    if samples.len() < 2 {
        return Err(Error::NoTrapping { lambda: lambda_grid[0] });
    }
    sort_by_theta(&mut samples);
    let spacing = (lambda_grid[lambda_grid.len() - 1] - lambda_grid[0]) / (lambda_grid.len() - 1) as f64;
    let candidates: Vec<(ESample, ESample, f64)> = gap_candidates(&samples, opts.gap_factor, 4)
        .into_iter()
        .filter(|&(i, res)| ci_jump(&samples[i], &samples[i + 1], res, opts))
        .map(|(i, res)| (samples[i].clone(), samples[i + 1].clone(), res))
        .collect();
    let mut gaps = Vec::new();
    for (a0, b0, res) in candidates {
        let (mut a, mut b) = (a0.clone(), b0.clone());
        let mut half = spacing;
        for _ in 0..opts.refine_rounds {
            let lo = a.lambda.min(b.lambda) - half;
            let hi = a.lambda.max(b.lambda) + half;
            let m = opts.refine_levels.max(2);
            let zoom: Vec<(f64, Option<usize>)> =
                (0..m).map(|j| (lo + (hi - lo) * (j as f64 + 0.5) / m as f64, None)).collect();
            let (extra, skipped) = estimate_levels(family, envelopes, &zoom, seeds, window, burn_in, opts)?;
            unresolved.extend(skipped);
            samples.extend(extra);
            sort_by_theta(&mut samples);
            // The widest jump inside the original candidate is the new candidate.
            let inside: Vec<usize> = (0..samples.len() - 1)
                .filter(|&i| samples[i].theta >= a0.theta && samples[i + 1].theta <= b0.theta)
                .collect();
            let Some(&k) = inside
                .iter()
                .max_by(|&&i, &&j| (samples[i + 1].theta - samples[i].theta).total_cmp(&(samples[j + 1].theta - samples[j].theta)))
            else {
                break;
            };
            a = samples[k].clone();
            b = samples[k + 1].clone();
            half *= 0.5;
        }
        let initial_jump = b0.theta - a0.theta;
        if ci_jump(&a, &b, res, opts) && b.theta - a.theta > 0.5 * initial_jump {
            gaps.push(Gap {
                theta_left: a.theta,
                theta_right: b.theta,
                lambda_bar: 0.5 * (a.lambda + b.lambda),
                lambda_left: a.lambda,
                lambda_right: b.lambda,
                endpoint_mismatch: (a.lambda - b.lambda).abs(),
                initial_left: None,
                initial_right: None,
            });
        }
    }
    unresolved.sort_by(f64::total_cmp);
    unresolved.dedup();
    let r_max = samples.iter().map(|s| s.theta.abs()).fold(1.0, f64::max);
    let env0 = family.realize_env(seeds[0]);
    let lipschitz_estimates = [0.5 * r_max, r_max]
        .iter()
        .map(|&r| Ok(LipschitzSample { radius: r, constant: lipschitz_constant(env0.as_ref(), r, 256)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomEffective {
        effective: EffectiveHamiltonian {
            samples,
            gaps,
            lipschitz_estimates,
            empirical: true,
            lambda_range: (lambda_grid[0], lambda_grid[lambda_grid.len() - 1]),
            n_lambda: lambda_grid.len(),
        },
        unresolved_levels: unresolved,
    })
}
