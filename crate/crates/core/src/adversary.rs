//! Inner maximization over adversarial weights.
//!
//! Given `S` groups with sizes `n_s` and mean losses `R_s`, the adversary
//! picks group weights `w` maximizing the reweighted risk
//!
//! ```text
//!     (1/N) Σ n_s w_s R_s
//! s.t. (1/N) Σ n_s f(w_s) ≤ δ,   (1/N) Σ n_s w_s = 1,   w ≥ 0.
//! ```
//!
//! Per-sample reweighting is the special case of singleton groups. The exact
//! adversarial 0-1 risk collapses to a two-group problem over the correctly
//! and incorrectly classified mass, solved by [`adversarial01_risk`].

use serde::{Deserialize, Serialize};

use crate::divergences::{DivergenceKind, FDivergenceSpec};
use crate::error::{Error, Result};

/// Sizes and mean losses of the groups the adversary reweights.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    counts: Vec<usize>,
    mean_losses: Vec<f64>,
    total: usize,
}

impl GroupStats {
    pub fn new(counts: Vec<usize>, mean_losses: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::domain("at least one group is required"));
        }
        if counts.len() != mean_losses.len() {
            return Err(Error::domain(format!(
                "{} group counts but {} mean losses",
                counts.len(),
                mean_losses.len()
            )));
        }
        if let Some(s) = counts.iter().position(|&n| n == 0) {
            return Err(Error::config(format!("group {s} is empty")));
        }
        if let Some(s) = mean_losses.iter().position(|&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(Error::domain(format!(
                "group {s} has invalid mean loss {}",
                mean_losses[s]
            )));
        }
        let total = counts.iter().sum();
        Ok(Self {
            counts,
            mean_losses,
            total,
        })
    }

    /// One group per sample.
    pub fn singletons(losses: &[f64]) -> Result<Self> {
        Self::new(vec![1; losses.len()], losses.to_vec())
    }

    /// Aggregates per-sample losses by group id. Fails naming the first empty group.
    pub fn from_samples(losses: &[f64], groups: &[usize], num_groups: usize) -> Result<Self> {
        if losses.len() != groups.len() {
            return Err(Error::domain("losses and group labels differ in length"));
        }
        let mut counts = vec![0usize; num_groups];
        let mut sums = vec![0.0; num_groups];
        for (&l, &g) in losses.iter().zip(groups) {
            if g >= num_groups {
                return Err(Error::domain(format!("group id {g} out of range {num_groups}")));
            }
            counts[g] += 1;
            sums[g] += l;
        }
        let means = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect();
        Self::new(counts, means)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn mean_losses(&self) -> &[f64] {
        &self.mean_losses
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Empirical group priors `n_s / N`.
    pub fn priors(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// The unweighted empirical risk `(1/N) Σ n_s R_s`.
    pub fn grand_mean(&self) -> f64 {
        self.weighted_risk(&vec![1.0; self.len()])
    }

    /// `(1/N) Σ n_s w_s R_s`.
    pub fn weighted_risk(&self, weights: &[f64]) -> f64 {
        let sum: f64 = self
            .counts
            .iter()
            .zip(&self.mean_losses)
            .zip(weights)
            .map(|((&n, &r), &w)| n as f64 * w * r)
            .sum();
        sum / self.total as f64
    }

    fn all_equal(&self) -> bool {
        self.mean_losses.iter().all(|&r| r == self.mean_losses[0])
    }
}

/// Which branch of a solver produced the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolvePath {
    /// `w = 1`: zero radius or no loss variation across groups.
    Uniform,
    /// Pearson closed form with every weight nonnegative.
    Analytic,
    /// Pearson closed form re-solved after zeroing the lowest-loss groups.
    ActiveSet { clamped_groups: usize },
    /// KL dual scalar found by bisection.
    Dual { iterations: usize },
    /// KL radius at or above the largest attainable divergence; all mass on the
    /// highest-loss groups.
    Concentration,
    /// Brute-force simplex grid.
    Grid,
}

/// Solved adversarial weights and the certificate describing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWeights {
    pub weights: Vec<f64>,
    /// KL dual temperature, when the bisection ran.
    pub gamma: Option<f64>,
    pub achieved_divergence: f64,
    /// The reweighted risk `(1/N) Σ n_s w_s R_s`.
    pub objective: f64,
    pub path: SolvePath,
}

impl GroupWeights {
    fn certify(stats: &GroupStats, kind: DivergenceKind, weights: Vec<f64>, gamma: Option<f64>, path: SolvePath) -> Self {
        let spec = FDivergenceSpec { kind, delta: 0.0 };
        let achieved_divergence = spec.weighted_divergence(stats.counts(), &weights);
        let objective = stats.weighted_risk(&weights);
        Self {
            weights,
            gamma,
            achieved_divergence,
            objective,
            path,
        }
    }

    fn uniform(stats: &GroupStats, kind: DivergenceKind) -> Self {
        Self::certify(stats, kind, vec![1.0; stats.len()], None, SolvePath::Uniform)
    }

    /// Largest violation among the three feasibility constraints
    /// (negativity, mean-one normalization, divergence budget).
    pub fn max_violation(&self, stats: &GroupStats, spec: &FDivergenceSpec) -> f64 {
        let neg = self.weights.iter().fold(0.0f64, |acc, &w| acc.max(-w));
        let n = stats.total() as f64;
        let mean: f64 = stats
            .counts()
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| c as f64 * w)
            .sum::<f64>()
            / n;
        let div = spec.weighted_divergence(stats.counts(), &self.weights);
        neg.max((mean - 1.0).abs()).max(div - spec.delta)
    }
}

/// Bisection settings for the KL dual scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlOptions {
    /// Target accuracy on `|KL(w) - δ|`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for KlOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 200,
        }
    }
}

/// Dispatches to the closed-form Pearson solver or the KL bisection.
pub fn solve_weights(stats: &GroupStats, spec: &FDivergenceSpec, kl: &KlOptions) -> Result<GroupWeights> {
    match spec.kind {
        DivergenceKind::Pearson => solve_weights_pe(stats, spec.delta),
        DivergenceKind::Kl => solve_weights_kl(stats, spec.delta, kl.tol, kl.max_iters),
    }
}

/// Pearson inner problem.
///
/// Without the `w ≥ 0` constraint the maximizer is
/// `w = sqrt(Nδ / Σ n_s v_s²)·v + 1` with `v_s = R_s − R̄`. When that leaves
/// some weight negative, the lowest-loss groups are zeroed one tie block at a
/// time and the same closed form is re-solved on the remaining support, until
/// every free weight is nonnegative.
pub fn solve_weights_pe(stats: &GroupStats, delta: f64) -> Result<GroupWeights> {
    check_delta(delta)?;
    let kind = DivergenceKind::Pearson;
    if delta == 0.0 || stats.all_equal() {
        return Ok(GroupWeights::uniform(stats, kind));
    }

    let n = stats.total() as f64;
    let mean = stats.grand_mean();
    let v: Vec<f64> = stats.mean_losses().iter().map(|&r| r - mean).collect();
    let ss: f64 = stats
        .counts()
        .iter()
        .zip(&v)
        .map(|(&c, &vs)| c as f64 * vs * vs)
        .sum();
    if ss == 0.0 {
        return Ok(GroupWeights::uniform(stats, kind));
    }
    let scale = (n * delta / ss).sqrt();
    let weights: Vec<f64> = v.iter().map(|&vs| scale * vs + 1.0).collect();
    if weights.iter().all(|&w| w >= 0.0) {
        return Ok(GroupWeights::certify(stats, kind, weights, None, SolvePath::Analytic));
    }
    pearson_active_set(stats, delta)
}

// Weights below this are rounding noise on a boundary solution and snap to 0.
const NEGATIVE_SLACK: f64 = 1e-12;

fn pearson_active_set(stats: &GroupStats, delta: f64) -> Result<GroupWeights> {
    let s = stats.len();
    let r = stats.mean_losses();
    let p = stats.priors();

    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));

    // Prefix sums over the loss-sorted order, shifted by the top loss to keep
    // the variance computation well conditioned.
    let top = r[order[0]];
    let mut pre_p = Vec::with_capacity(s + 1);
    let mut pre_pr = Vec::with_capacity(s + 1);
    let mut pre_prr = Vec::with_capacity(s + 1);
    let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
    pre_p.push(0.0);
    pre_pr.push(0.0);
    pre_prr.push(0.0);
    for &i in &order {
        let d = r[i] - top;
        a0 += p[i];
        a1 += p[i] * d;
        a2 += p[i] * d * d;
        pre_p.push(a0);
        pre_pr.push(a1);
        pre_prr.push(a2);
    }

    // Support sizes that end on a tie-block boundary, largest first.
    let mut boundaries: Vec<usize> = (1..=s)
        .filter(|&k| k == s || r[order[k]] != r[order[k - 1]])
        .collect();
    boundaries.reverse();

    for &k in &boundaries {
        let big_p = pre_p[k];
        let lowest = r[order[k - 1]] - top;
        let mean_d = pre_pr[k] / big_p;
        let var = (pre_prr[k] / big_p - mean_d * mean_d).max(0.0);
        let m = 1.0 / big_p;
        let budget = (delta - (1.0 - big_p)) / big_p - (m - 1.0) * (m - 1.0);
        let coef = if var > 0.0 && budget > 0.0 { (budget / var).sqrt() } else { 0.0 };
        let screen = m + coef * (lowest - mean_d);
        if screen < -1e-9 * m && k != boundaries[boundaries.len() - 1] {
            continue;
        }
        if let Some(w) = pearson_on_support(stats, &order[..k], delta) {
            let clamped = s - k;
            return Ok(GroupWeights::certify(
                stats,
                DivergenceKind::Pearson,
                w,
                None,
                SolvePath::ActiveSet { clamped_groups: clamped },
            ));
        }
    }
    Err(Error::Numeric(
        "Pearson active-set refinement found no nonnegative support".to_string(),
    ))
}

/// Closed form on a fixed support with all other weights zero, computed with
/// centered two-pass sums. Returns `None` if a free weight is negative.
fn pearson_on_support(stats: &GroupStats, support: &[usize], delta: f64) -> Option<Vec<f64>> {
    let p = stats.priors();
    let r = stats.mean_losses();
    let big_p: f64 = support.iter().map(|&i| p[i]).sum();
    // offsets from the first loss keep a constant support at exactly zero variance
    let r0 = r[support[0]];
    let mean = r0 + support.iter().map(|&i| p[i] * (r[i] - r0)).sum::<f64>() / big_p;
    let var = support
        .iter()
        .map(|&i| p[i] * (r[i] - mean) * (r[i] - mean))
        .sum::<f64>()
        / big_p;
    let m = 1.0 / big_p;
    let budget = (delta - (1.0 - big_p)) / big_p - (m - 1.0) * (m - 1.0);
    if budget < -NEGATIVE_SLACK {
        return None;
    }
    let coef = if var > 0.0 { (budget.max(0.0) / var).sqrt() } else { 0.0 };
    let mut w = vec![0.0; stats.len()];
    for &i in support {
        let wi = m + coef * (r[i] - mean);
        if wi < -NEGATIVE_SLACK {
            return None;
        }
        w[i] = wi.max(0.0);
    }
    Some(w)
}

/// KL inner problem: `w_s ∝ exp(R_s / γ)`, normalized to mean one, with the
/// temperature `γ` bisected (in log space) until the achieved KL equals `δ`.
pub fn solve_weights_kl(stats: &GroupStats, delta: f64, tol: f64, max_iters: usize) -> Result<GroupWeights> {
    check_delta(delta)?;
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    if max_iters == 0 {
        return Err(Error::domain("max_iters must be positive"));
    }
    let kind = DivergenceKind::Kl;
    if delta == 0.0 || stats.all_equal() {
        return Ok(GroupWeights::uniform(stats, kind));
    }

    let r = stats.mean_losses();
    let p = stats.priors();
    let top = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bottom = r.iter().copied().fold(f64::INFINITY, f64::min);
    let top_count: usize = stats
        .counts()
        .iter()
        .zip(r)
        .filter(|(_, &rs)| rs == top)
        .map(|(&c, _)| c)
        .sum();
    let sup = (stats.total() as f64 / top_count as f64).ln();
    if delta >= sup {
        let level = stats.total() as f64 / top_count as f64;
        let w = r.iter().map(|&rs| if rs == top { level } else { 0.0 }).collect();
        return Ok(GroupWeights::certify(stats, kind, w, None, SolvePath::Concentration));
    }

    // Work with losses rescaled to [-1, 0]; the temperature is then relative
    // to the loss spread and the bracket below is scale free.
    let spread = top - bottom;
    let shifted: Vec<f64> = r.iter().map(|&rs| (rs - top) / spread).collect();
    let kl_at = |log_t: f64| -> f64 {
        let t = log_t.exp();
        let mut z = 0.0;
        let mut zr = 0.0;
        for (&ps, &rs) in p.iter().zip(&shifted) {
            let e = (rs / t).exp();
            z += ps * e;
            zr += ps * e * rs;
        }
        zr / (t * z) - z.ln()
    };

    let (mut lo, mut hi) = (1e-8f64.ln(), 1e8f64.ln());
    let (kl_lo, kl_hi) = (kl_at(lo), kl_at(hi));
    if !(kl_lo > delta && kl_hi < delta) {
        return Err(Error::Numeric(format!(
            "KL dual bracket [{:e}, {:e}] does not straddle delta={delta} (KL values {kl_lo}, {kl_hi})",
            lo.exp() * spread,
            hi.exp() * spread
        )));
    }
    let mut mid = 0.5 * (lo + hi);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let kl = kl_at(mid);
        if (kl - delta).abs() <= tol {
            break;
        }
        // KL decreases as the temperature grows.
        if kl > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if iterations >= max_iters {
            return Err(Error::Numeric(format!(
                "KL bisection did not reach tol={tol} in {max_iters} iterations; last bracket [{:e}, {:e}]",
                lo.exp() * spread,
                hi.exp() * spread
            )));
        }
        mid = 0.5 * (lo + hi);
    }

    let t = mid.exp();
    let e: Vec<f64> = shifted.iter().map(|&rs| (rs / t).exp()).collect();
    let z: f64 = p.iter().zip(&e).map(|(&ps, &es)| ps * es).sum();
    let w = e.iter().map(|&es| es / z).collect();
    Ok(GroupWeights::certify(
        stats,
        kind,
        w,
        Some(t * spread),
        SolvePath::Dual { iterations },
    ))
}

/// Exhaustive search over the probability simplex of reweighted group masses
/// `q_s = (n_s/N)·w_s` on a grid of the given step. The unweighted point
/// `q = n/N` is always a candidate, so the result is feasible even at `δ = 0`.
/// Limited to `S ≤ 4`.
pub fn solve_weights_oracle(stats: &GroupStats, spec: &FDivergenceSpec, grid_step: f64) -> Result<GroupWeights> {
    let s = stats.len();
    if s > 4 {
        return Err(Error::Unsupported(format!(
            "grid oracle supports at most 4 groups, got {s}"
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::domain(format!("grid step must be in (0, 1], got {grid_step}")));
    }
    let steps = (1.0 / grid_step).round() as usize;
    let p = stats.priors();
    let r = stats.mean_losses();
    let limit = spec.delta + 1e-12;

    // Per-group divergence and objective contributions at each grid level.
    let div: Vec<Vec<f64>> = p
        .iter()
        .map(|&ps| {
            (0..=steps)
                .map(|j| {
                    let q = j as f64 / steps as f64;
                    ps * spec.kind.f(q / ps)
                })
                .collect()
        })
        .collect();
    let obj: Vec<Vec<f64>> = r
        .iter()
        .map(|&rs| (0..=steps).map(|j| rs * j as f64 / steps as f64).collect())
        .collect();

    let mut best = Grid {
        value: stats.grand_mean(),
        point: None,
    };
    match s {
        1 => best.offer(obj[0][steps], div[0][steps], limit, &[steps]),
        2 => {
            for i in 0..=steps {
                let j = steps - i;
                best.offer(obj[0][i] + obj[1][j], div[0][i] + div[1][j], limit, &[i, j]);
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let k = steps - i - j;
                    best.offer(
                        obj[0][i] + obj[1][j] + obj[2][k],
                        div[0][i] + div[1][j] + div[2][k],
                        limit,
                        &[i, j, k],
                    );
                }
            }
        }
        _ => {
            let (d3, d4, o3, o4) = (&div[2], &div[3], &obj[2], &obj[3]);
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let (o2, d2) = (obj[0][i] + obj[1][j], div[0][i] + div[1][j]);
                    let rest = steps - i - j;
                    // Along the last edge the divergence is convex in k and the
                    // objective linear, so only the ends of the feasible run matter.
                    let d = |k: usize| d2 + d3[k] + d4[rest - k];
                    let (mut lo, mut hi) = (0, rest);
                    while lo < hi {
                        let mid = (lo + hi) / 2;
                        if d(mid + 1) < d(mid) {
                            lo = mid + 1;
                        } else {
                            hi = mid;
                        }
                    }
                    if d(lo) > limit {
                        continue;
                    }
                    let (mut first, mut b) = (0, lo);
                    while first < b {
                        let mid = (first + b) / 2;
                        if d(mid) <= limit {
                            b = mid;
                        } else {
                            first = mid + 1;
                        }
                    }
                    let (mut last, mut e) = (lo, rest);
                    while last < e {
                        let mid = (last + e).div_ceil(2);
                        if d(mid) <= limit {
                            last = mid;
                        } else {
                            e = mid - 1;
                        }
                    }
                    for k in [first, last] {
                        best.offer(o2 + o3[k] + o4[rest - k], d(k), limit, &[i, j, k, rest - k]);
                    }
                }
            }
        }
    }

    let (weights, path) = match best.point {
        Some(idx) => (
            idx.iter()
                .zip(&p)
                .map(|(&j, &ps)| (j as f64 / steps as f64) / ps)
                .collect(),
            SolvePath::Grid,
        ),
        None => (vec![1.0; s], SolvePath::Uniform),
    };
    Ok(GroupWeights::certify(stats, spec.kind, weights, None, path))
}

struct Grid {
    value: f64,
    point: Option<Vec<usize>>,
}

impl Grid {
    #[inline]
    fn offer(&mut self, value: f64, div: f64, limit: f64, idx: &[usize]) {
        if div <= limit && value > self.value {
            self.value = value;
            self.point = Some(idx.to_vec());
        }
    }
}

/// Per-sample adversarial weights `r_i`: the group solver run on singleton groups.
pub fn per_sample_weights(losses: &[f64], spec: &FDivergenceSpec, kl: &KlOptions) -> Result<GroupWeights> {
    if losses.is_empty() {
        return Err(Error::domain("per-sample reweighting needs at least one loss"));
    }
    solve_weights(&GroupStats::singletons(losses)?, spec, kl)
}

/// Worst-case reweighted misclassification rate for a classifier whose
/// ordinary 0-1 risk is `p1`.
///
/// Only the split into correctly (mass `1 − p1`) and incorrectly (mass `p1`)
/// classified points matters, so the adversary picks two weights `(r0, r1)`.
/// If zeroing out the correct mass fits in the budget the risk is 1;
/// otherwise `r1 ∈ (1, 1/p1)` is the root of the tight divergence constraint.
pub fn adversarial01_risk(p1: f64, spec: &FDivergenceSpec) -> Result<f64> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::domain(format!("0-1 risk must lie in [0, 1], got {p1}")));
    }
    if p1 == 0.0 || p1 == 1.0 || spec.delta == 0.0 {
        return Ok(p1);
    }
    let f = |t: f64| spec.kind.f(t);
    let p0 = 1.0 - p1;
    let upper = 1.0 / p1;
    if p0 * f(0.0) + p1 * f(upper) <= spec.delta {
        return Ok(1.0);
    }
    let excess = |r1: f64| p0 * f(((1.0 - p1 * r1) / p0).max(0.0)) + p1 * f(r1) - spec.delta;
    let (mut lo, mut hi) = (1.0, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((p1 * 0.5 * (lo + hi)).min(1.0))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::domain(format!("delta must be finite and >= 0, got {delta}")));
    }
    Ok(())
}
