use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laws::{normal_upper_tail, Law};
use crate::models::{run_replicas, PathEnsemble, PathObserver, RunSpec, SampledPath, SequenceModel};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

/// One horizon of a truncated tail series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub n: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fewer than ten expected hits: only the upper bound is informative.
    pub censored: bool,
    pub cumulative: f64,
    pub oracle: Option<f64>,
}

impl SeriesRow {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.p_hat).max(self.p_hat - self.ci_low)
    }
}

/// Estimate of `Σ_{N ≤ N_max} P(|S_N| > εN)` (or of a related event series).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSeriesEstimate {
    pub epsilon: f64,
    pub n_max: usize,
    pub replicas: u64,
    pub seed: u64,
    pub rows: Vec<SeriesRow>,
}

impl TailSeriesEstimate {
    /// Builds rows from exceedance counts for `N = 1, 2, ...`.
    pub fn from_counts(
        epsilon: f64,
        counts: &[u64],
        replicas: u64,
        seed: u64,
        oracle: Option<&dyn Fn(usize) -> f64>,
    ) -> Self {
        let censor_below = 10.0 / replicas as f64;
        let mut cumulative = 0.0;
        let rows = counts
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let n = i + 1;
                let p_hat = k as f64 / replicas as f64;
                let (lo, hi) = wilson(k, replicas, Z95);
                let censored = p_hat < censor_below;
                cumulative += p_hat;
                SeriesRow {
                    n,
                    p_hat,
                    ci_low: if censored { 0.0 } else { lo },
                    ci_high: hi,
                    censored,
                    cumulative,
                    oracle: oracle.map(|f| f(n)),
                }
            })
            .collect();
        TailSeriesEstimate {
            epsilon,
            n_max: counts.len(),
            replicas,
            seed,
            rows,
        }
    }

    pub fn cumulative(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative)
    }

    /// Cumulative value at horizon `n` (clamped to the available rows).
    pub fn cumulative_at(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.rows
            .get(n.min(self.rows.len()) - 1)
            .map_or(0.0, |r| r.cumulative)
    }

    /// Conservative series half-width: the sum of per-horizon half-widths.
    pub fn summed_half_width(&self) -> f64 {
        self.rows.iter().map(SeriesRow::half_width).sum()
    }

    pub fn oracle_cumulative(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.oracle).sum()
    }

    /// CSV with header `N,p_hat,ci_low,ci_high,cumulative,oracle`; the
    /// oracle column is empty when no closed form is available.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,p_hat,ci_low,ci_high,cumulative,oracle\n");
        for r in &self.rows {
            let oracle = r.oracle.map(|o| o.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n, r.p_hat, r.ci_low, r.ci_high, r.cumulative, oracle
            )
            .expect("writing to a string");
        }
        out
    }
}

/// `P(|S_n| > x)` in closed form, where available: iid Gaussian or point
/// mass increments and finite mixtures of those.
pub fn sum_tail_oracle(model: &SequenceModel, n: usize, x: f64) -> Option<f64> {
    fn law_sum_tail(law: &Law, n: usize, x: f64) -> Option<f64> {
        let nf = n as f64;
        match law {
            Law::Gaussian { mean, sd } => {
                let s = sd * nf.sqrt();
                let m = mean * nf;
                Some(normal_upper_tail((x - m) / s) + normal_upper_tail((x + m) / s))
            }
            Law::PointMass { value } => Some(if (value * nf).abs() > x { 1.0 } else { 0.0 }),
            _ => None,
        }
    }
    match model {
        SequenceModel::Iid { law } => law_sum_tail(law, n, x),
        SequenceModel::DeFinetti { components } => components
            .iter()
            .map(|c| law_sum_tail(&c.law, n, x).map(|p| c.weight * p))
            .sum(),
        _ => None,
    }
}

/// `P(max_{m≤n} |f_m| > x)` for iid increments.
pub fn max_term_oracle(law: &Law, n: usize, x: f64) -> f64 {
    1.0 - (1.0 - law.tail(x)).powi(n as i32)
}

/// Streaming counts of `|S_N − N·c| > εN` for several `(ε, N_max)` levels,
/// optionally split by mixture component with per-component centering `c`,
/// and of `max_{n≤N} |f_n| > N/divisor`.
#[derive(Debug, Clone)]
pub struct ExceedanceCounter {
    levels: Vec<(f64, usize)>,
    max_divisor: Option<f64>,
    centers: Option<Vec<f64>>,
    pub groups: Vec<GroupCounts>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupCounts {
    pub replicas: u64,
    /// `exceed[level][N-1]`.
    pub exceed: Vec<Vec<u64>>,
    pub max_exceed: Vec<u64>,
}

impl ExceedanceCounter {
    pub fn new(levels: Vec<(f64, usize)>, max_divisor: Option<f64>, centers: Option<Vec<f64>>) -> Self {
        let groups = centers.as_ref().map_or(1, Vec::len);
        let max_len = if max_divisor.is_some() {
            levels.iter().map(|l| l.1).max().unwrap_or(0)
        } else {
            0
        };
        let group = GroupCounts {
            replicas: 0,
            exceed: levels.iter().map(|&(_, h)| vec![0; h]).collect(),
            max_exceed: vec![0; max_len],
        };
        ExceedanceCounter {
            levels,
            max_divisor,
            centers,
            groups: vec![group; groups],
        }
    }
}

impl PathObserver for ExceedanceCounter {
    fn observe(&mut self, _replica: u64, paths: &[SampledPath]) {
        let path = &paths[0];
        let (group, center) = match &self.centers {
            Some(c) => {
                let g = path.label.expect("labelled mixture path");
                (g, c[g])
            }
            None => (0, 0.0),
        };
        let counts = &mut self.groups[group];
        counts.replicas += 1;
        let mut sum = 0.0;
        let mut max: f64 = 0.0;
        for (i, &x) in path.increments.iter().enumerate() {
            let n = (i + 1) as f64;
            sum += x - center;
            for (l, &(eps, horizon)) in self.levels.iter().enumerate() {
                if i < horizon && sum.abs() > eps * n {
                    counts.exceed[l][i] += 1;
                }
            }
            if let Some(d) = self.max_divisor {
                max = max.max(x.abs());
                if i < counts.max_exceed.len() && max > n / d {
                    counts.max_exceed[i] += 1;
                }
            }
        }
    }

    fn merge(&mut self, later: Self) {
        for (a, b) in self.groups.iter_mut().zip(later.groups) {
            a.replicas += b.replicas;
            for (x, y) in a.exceed.iter_mut().zip(b.exceed) {
                for (u, v) in x.iter_mut().zip(y) {
                    *u += v;
                }
            }
            for (u, v) in a.max_exceed.iter_mut().zip(b.max_exceed) {
                *u += v;
            }
        }
    }
}

/// Shared sampling parameters of the Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub replicas: u64,
    pub seed: u64,
    pub workers: usize,
}

impl McConfig {
    pub fn new(replicas: u64, seed: u64) -> Self {
        McConfig {
            replicas,
            seed,
            workers: 1,
        }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    fn spec(&self, horizon: usize) -> RunSpec {
        RunSpec::new(horizon, self.replicas, self.seed).workers(self.workers)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")))
    }
}

/// Tail series from a stored ensemble.
pub fn tail_series(
    ensemble: &PathEnsemble,
    epsilon: f64,
    oracle: Option<&dyn Fn(usize) -> f64>,
) -> Result<TailSeriesEstimate> {
    check_epsilon(epsilon)?;
    let mut counts = vec![0u64; ensemble.horizon];
    for r in 0..ensemble.replicas as usize {
        for (i, s) in ensemble.sums(r).iter().enumerate() {
            if s.abs() > epsilon * (i + 1) as f64 {
                counts[i] += 1;
            }
        }
    }
    Ok(TailSeriesEstimate::from_counts(
        epsilon,
        &counts,
        ensemble.replicas,
        ensemble.seed,
        oracle,
    ))
}

/// Frequencies of `max_{n≤N} |f_n| > N/divisor` from a stored ensemble.
pub fn max_term_series(
    ensemble: &PathEnsemble,
    divisor: f64,
    oracle: Option<&dyn Fn(usize) -> f64>,
) -> Result<TailSeriesEstimate> {
    check_epsilon(divisor)?;
    let mut counts = vec![0u64; ensemble.horizon];
    for r in 0..ensemble.replicas as usize {
        for (i, m) in ensemble.maxima(r).iter().enumerate() {
            if *m > (i + 1) as f64 / divisor {
                counts[i] += 1;
            }
        }
    }
    Ok(TailSeriesEstimate::from_counts(
        1.0 / divisor,
        &counts,
        ensemble.replicas,
        ensemble.seed,
        oracle,
    ))
}

/// Streaming tail series without storing paths.
pub fn tail_series_streaming(
    model: &SequenceModel,
    epsilon: f64,
    n_max: usize,
    mc: McConfig,
) -> Result<TailSeriesEstimate> {
    check_epsilon(epsilon)?;
    let counter = run_replicas(model, mc.spec(n_max), || {
        ExceedanceCounter::new(vec![(epsilon, n_max)], None, None)
    })?;
    let oracle = |n: usize| sum_tail_oracle(model, n, epsilon * n as f64).expect("checked");
    let has_oracle = sum_tail_oracle(model, 1, epsilon).is_some();
    Ok(TailSeriesEstimate::from_counts(
        epsilon,
        &counter.groups[0].exceed[0],
        mc.replicas,
        mc.seed,
        has_oracle.then_some(&oracle as &dyn Fn(usize) -> f64),
    ))
}

/// Streaming max-term series.
pub fn max_term_series_streaming(
    model: &SequenceModel,
    divisor: f64,
    n_max: usize,
    mc: McConfig,
) -> Result<TailSeriesEstimate> {
    check_epsilon(divisor)?;
    let counter = run_replicas(model, mc.spec(n_max), || {
        // the sum level only sizes the maximum counts
        ExceedanceCounter::new(vec![(1.0, n_max)], Some(divisor), None)
    })?;
    let law = model.common_law();
    let oracle = |n: usize| max_term_oracle(law.expect("checked"), n, n as f64 / divisor);
    Ok(TailSeriesEstimate::from_counts(
        1.0 / divisor,
        &counter.groups[0].max_exceed,
        mc.replicas,
        mc.seed,
        law.is_some().then_some(&oracle as &dyn Fn(usize) -> f64),
    ))
}

/// Default truncation horizon `⌈64/ε²⌉`.
pub fn default_horizon(epsilon: f64) -> usize {
    (64.0 / (epsilon * epsilon)).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeydePoint {
    pub epsilon: f64,
    pub horizon: usize,
    /// `ε² Σ_{N≤horizon} p̂_N`.
    pub scaled: f64,
    /// `ε²` times the summed half-widths.
    pub scaled_half_width: f64,
    /// `ε² Σ_{N≤horizon} P(|S_N| > εN)` when a closed form exists.
    pub scaled_oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeydeScan {
    pub points: Vec<HeydePoint>,
    pub series: Vec<TailSeriesEstimate>,
}

/// `ε²·Σ_{N≤N_max(ε)} P(|S_N| > εN)` over a grid of `ε`, all levels
/// evaluated on the same sampled paths.
pub fn heyde_scan(
    model: &SequenceModel,
    eps_grid: &[f64],
    horizon: impl Fn(f64) -> usize,
    mc: McConfig,
) -> Result<HeydeScan> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon grid".into()));
    }
    eps_grid.iter().try_for_each(|&e| check_epsilon(e))?;
    let levels: Vec<(f64, usize)> = eps_grid.iter().map(|&e| (e, horizon(e).max(1))).collect();
    let longest = levels.iter().map(|l| l.1).max().expect("non-empty grid");
    let counter = run_replicas(model, mc.spec(longest), || {
        ExceedanceCounter::new(levels.clone(), None, None)
    })?;
    let has_oracle = sum_tail_oracle(model, 1, 1.0).is_some();
    let mut points = Vec::with_capacity(levels.len());
    let mut series = Vec::with_capacity(levels.len());
    for (l, &(eps, h)) in levels.iter().enumerate() {
        let oracle = |n: usize| sum_tail_oracle(model, n, eps * n as f64).expect("checked");
        let est = TailSeriesEstimate::from_counts(
            eps,
            &counter.groups[0].exceed[l],
            mc.replicas,
            mc.seed,
            has_oracle.then_some(&oracle as &dyn Fn(usize) -> f64),
        );
        let e2 = eps * eps;
        points.push(HeydePoint {
            epsilon: eps,
            horizon: h,
            scaled: e2 * est.cumulative(),
            scaled_half_width: e2 * est.summed_half_width(),
            scaled_oracle: est.oracle_cumulative().map(|o| e2 * o),
        });
        series.push(est);
    }
    Ok(HeydeScan { points, series })
}

/// Per-component centered tail series of a de Finetti mixture:
/// `P(|S_N − N f_∞| > εN | component)`.
pub fn component_series(
    model: &SequenceModel,
    epsilon: f64,
    n_max: usize,
    mc: McConfig,
) -> Result<Vec<TailSeriesEstimate>> {
    check_epsilon(epsilon)?;
    let SequenceModel::DeFinetti { components } = model else {
        return Err(Error::UnsupportedModel("component series need a de Finetti mixture".into()));
    };
    let centers: Vec<f64> = components
        .iter()
        .map(|c| {
            c.law
                .mean()
                .ok_or_else(|| Error::UnsupportedModel("component without finite mean".into()))
        })
        .collect::<Result<_>>()?;
    let counter = run_replicas(model, mc.spec(n_max), || {
        ExceedanceCounter::new(vec![(epsilon, n_max)], None, Some(centers.clone()))
    })?;
    Ok(components
        .iter()
        .zip(&counter.groups)
        .map(|(c, g)| {
            let centered = match &c.law {
                Law::Gaussian { sd, .. } => Some(SequenceModel::iid(Law::Gaussian { mean: 0.0, sd: *sd })),
                _ => None,
            };
            let oracle = |n: usize| {
                sum_tail_oracle(centered.as_ref().expect("checked"), n, epsilon * n as f64)
                    .expect("gaussian")
            };
            TailSeriesEstimate::from_counts(
                epsilon,
                &g.exceed[0],
                g.replicas.max(1),
                mc.seed,
                centered.is_some().then_some(&oracle as &dyn Fn(usize) -> f64),
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationReport {
    pub identity: TailSeriesEstimate,
    pub permuted: TailSeriesEstimate,
    pub permutation: Vec<usize>,
    /// Largest `|Δ cumulative_N|` in units of the combined standard error.
    pub max_gap_in_se: f64,
    pub agree: bool,
    pub warning: Option<String>,
}

struct PairedCounter {
    epsilon: f64,
    permutation: Vec<usize>,
    identity: Vec<u64>,
    permuted: Vec<u64>,
}

impl PathObserver for PairedCounter {
    fn observe(&mut self, _replica: u64, paths: &[SampledPath]) {
        let inc = &paths[0].increments;
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..inc.len() {
            a += inc[i];
            b += inc[self.permutation[i]];
            let level = self.epsilon * (i + 1) as f64;
            self.identity[i] += u64::from(a.abs() > level);
            self.permuted[i] += u64::from(b.abs() > level);
        }
    }

    fn merge(&mut self, later: Self) {
        for (u, v) in self.identity.iter_mut().zip(later.identity) {
            *u += v;
        }
        for (u, v) in self.permuted.iter_mut().zip(later.permuted) {
            *u += v;
        }
    }
}

/// Tail series along the identity order and along a random permutation of
/// the first `n_max` increments, evaluated on the same paths.
pub fn permutation_stress(
    model: &SequenceModel,
    permutation_seed: u64,
    epsilon: f64,
    n_max: usize,
    mc: McConfig,
) -> Result<PermutationReport> {
    check_epsilon(epsilon)?;
    let mut permutation: Vec<usize> = (0..n_max).collect();
    permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(permutation_seed));
    let perm = permutation.clone();
    let counter = run_replicas(model, mc.spec(n_max), || PairedCounter {
        epsilon,
        permutation: perm.clone(),
        identity: vec![0; n_max],
        permuted: vec![0; n_max],
    })?;
    let identity =
        TailSeriesEstimate::from_counts(epsilon, &counter.identity, mc.replicas, mc.seed, None);
    let permuted =
        TailSeriesEstimate::from_counts(epsilon, &counter.permuted, mc.replicas, mc.seed, None);
    let r = mc.replicas as f64;
    let se = |p: f64| (p * (1.0 - p) / r).sqrt();
    let mut max_gap_in_se: f64 = 0.0;
    let mut agree = true;
    let mut se_sum = 0.0;
    for (a, b) in identity.rows.iter().zip(&permuted.rows) {
        se_sum += se(a.p_hat) + se(b.p_hat);
        let gap = (a.cumulative - b.cumulative).abs();
        if gap > 0.0 {
            // one hit of slack keeps fully censored curves comparable
            let scale = se_sum.max(1.0 / r);
            max_gap_in_se = max_gap_in_se.max(gap / scale);
            if gap > 3.0 * scale {
                agree = false;
            }
        }
    }
    let warning = (!model.is_exchangeable()).then(|| {
        "model is not exchangeable: the two curves need not agree".to_string()
    });
    Ok(PermutationReport {
        identity,
        permuted,
        permutation,
        max_gap_in_se,
        agree,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::sample_paths;

    #[test]
    fn wilson_brackets_and_handles_zero() {
        let (lo, hi) = wilson(0, 100, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson(50, 100, Z95);
        assert!(lo < 0.5 && 0.5 < hi);
    }

    #[test]
    fn zero_model_series_vanishes() {
        let m = SequenceModel::iid(Law::PointMass { value: 0.0 });
        let e = sample_paths(&m, 40, 100, 1, 1).unwrap();
        let est = tail_series(&e, 0.5, None).unwrap();
        assert_eq!(est.cumulative(), 0.0);
        assert!(est.rows.iter().all(|r| r.censored && r.ci_low == 0.0));
    }

    #[test]
    fn rademacher_never_exceeds_one() {
        let e = sample_paths(&SequenceModel::iid(Law::Rademacher), 60, 500, 4, 1).unwrap();
        assert_eq!(tail_series(&e, 1.0, None).unwrap().cumulative(), 0.0);
        let m = max_term_series(&e, 3.0, None).unwrap();
        assert!(m.rows[2..].iter().all(|r| r.p_hat == 0.0));
    }

    #[test]
    fn csv_layout() {
        let est = TailSeriesEstimate::from_counts(1.0, &[5, 0], 10, 0, Some(&|_| 0.25));
        let csv = est.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("N,p_hat,ci_low,ci_high,cumulative,oracle"));
        assert!(lines.next().unwrap().starts_with("1,0.5,"));
        assert!(lines.next().unwrap().ends_with(",0.5,0.25"));
        let bare = TailSeriesEstimate::from_counts(1.0, &[1], 10, 0, None);
        assert!(bare.to_csv().lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn gaussian_oracle_values() {
        let m = SequenceModel::iid(Law::Gaussian { mean: 0.0, sd: 1.0 });
        // S_4 ~ N(0, 4): P(|S_4| > 4) = 2Φ̄(2)
        let p = sum_tail_oracle(&m, 4, 4.0).unwrap();
        assert!((p - 2.0 * normal_upper_tail(2.0)).abs() < 1e-15);
        assert_eq!(default_horizon(0.125), 4096);
    }

    #[test]
    fn streaming_matches_stored_ensemble() {
        let m = SequenceModel::iid(Law::Gaussian { mean: 0.0, sd: 1.0 });
        let mc = McConfig::new(600, 11);
        let streamed = tail_series_streaming(&m, 0.5, 30, mc).unwrap();
        let stored = tail_series(&sample_paths(&m, 30, 600, 11, 1).unwrap(), 0.5, None).unwrap();
        for (a, b) in streamed.rows.iter().zip(&stored.rows) {
            assert_eq!(a.p_hat, b.p_hat);
        }
    }

    #[test]
    fn streaming_max_term_matches_stored_ensemble() {
        let m = SequenceModel::iid(Law::SymmetricPareto { alpha: 1.5 });
        let mc = McConfig::new(2000, 5);
        let streamed = max_term_series_streaming(&m, 1.0, 25, mc).unwrap();
        let stored = max_term_series(&sample_paths(&m, 25, 2000, 5, 1).unwrap(), 1.0, None).unwrap();
        assert_eq!(streamed.rows.len(), 25);
        for (a, b) in streamed.rows.iter().zip(&stored.rows) {
            assert_eq!(a.p_hat, b.p_hat);
        }
        assert!(streamed.cumulative() > 0.0);
        let oracle = streamed.oracle_cumulative().unwrap();
        assert!((streamed.cumulative() - oracle).abs() <= 3.0 * streamed.summed_half_width());
    }
}
