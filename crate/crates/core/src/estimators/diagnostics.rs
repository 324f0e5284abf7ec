use serde::Serialize;

use super::series::McConfig;
use crate::error::{Error, Result};
use crate::models::{run_replicas, PathObserver, RunSpec, SampledPath, SequenceModel};

/// Empirical `Σ_{N≥1} P(Z > N) ≤ E(Z) ≤ Σ_{N≥0} P(Z > N)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
    /// Standard errors of the three sample means.
    pub standard_errors: [f64; 3],
    pub ordered: bool,
}

/// Per sample, `Σ_{N≥1} 1{Z > N} = ⌈Z⌉ − 1` and `Σ_{N≥0} 1{Z > N} = ⌈Z⌉`
/// for `Z > 0` (both vanish at zero), so the sums are exact integer counts.
pub fn elementary_sandwich(samples: &[f64]) -> Result<SandwichReport> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, z)| z.is_nan() || **z < 0.0) {
        return Err(Error::NegativeSample { index, value });
    }
    let lower: Vec<f64> = samples.iter().map(|&z| (z.ceil() - 1.0).max(0.0)).collect();
    let upper: Vec<f64> = samples.iter().map(|&z| z.ceil()).collect();
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, (var / n).sqrt())
    };
    let (lo, se_lo) = stats(&lower);
    let (mean, se_mean) = stats(samples);
    let (hi, se_hi) = stats(&upper);
    Ok(SandwichReport {
        lower: lo,
        mean,
        upper: hi,
        standard_errors: [se_lo, se_mean, se_hi],
        ordered: lo <= mean + 3.0 * se_mean.max(se_lo) && mean <= hi + 3.0 * se_mean.max(se_hi),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub lambdas: Vec<f64>,
    /// `sup_{n ≤ N_max}` of the empirical `P(|f_n| > λ)`, one per `λ`.
    pub sup_tail: Vec<f64>,
    /// The same supremum from exact marginal tails, when available.
    pub exact_sup_tail: Option<Vec<f64>>,
    /// `tail_by_index[l][n-1]` is the empirical `P(|f_n| > λ_l)`.
    pub tail_by_index: Vec<Vec<f64>>,
    /// Pairs `(path, N)` with `|f_N| > 2N` but `|S_N| ≤ N` and
    /// `|S_{N-1}| ≤ N − 1`.
    pub inclusion_violations: u64,
    /// Sandwich for `|f_1|`, bracketing its first absolute moment.
    pub first_moment: SandwichReport,
}

impl TightnessReport {
    /// True when the supremum profile drops to `level` or below somewhere
    /// on the grid.
    pub fn decays_below(&self, level: f64) -> bool {
        self.sup_tail.iter().any(|&p| p <= level)
    }
}

struct TightnessCounter {
    lambdas: Vec<f64>,
    counts: Vec<Vec<u64>>,
    violations: u64,
    first_abs: Vec<f64>,
}

impl PathObserver for TightnessCounter {
    fn observe(&mut self, _replica: u64, paths: &[SampledPath]) {
        let inc = &paths[0].increments;
        let mut prev = 0.0;
        for (i, &x) in inc.iter().enumerate() {
            let n = (i + 1) as f64;
            for (l, &lambda) in self.lambdas.iter().enumerate() {
                self.counts[l][i] += u64::from(x.abs() > lambda);
            }
            let sum = prev + x;
            if x.abs() > 2.0 * n && sum.abs() <= n && f64::abs(prev) <= n - 1.0 {
                self.violations += 1;
            }
            prev = sum;
        }
        self.first_abs.push(inc[0].abs());
    }

    fn merge(&mut self, later: Self) {
        for (a, b) in self.counts.iter_mut().zip(later.counts) {
            for (u, v) in a.iter_mut().zip(b) {
                *u += v;
            }
        }
        self.violations += later.violations;
        self.first_abs.extend(later.first_abs);
    }
}

/// `L⁰`-boundedness profile over a `λ` grid, the pathwise inclusion
/// `{|f_N| > 2N} ⊆ {|S_N| > N} ∪ {|S_{N-1}| > N − 1}`, and a first-moment
/// sandwich for `|f_1|`.
pub fn tightness_and_integrability(
    model: &SequenceModel,
    n_max: usize,
    lambdas: &[f64],
    mc: McConfig,
) -> Result<TightnessReport> {
    if lambdas.is_empty() || lambdas.iter().any(|l| l.is_nan() || *l < 0.0) {
        return Err(Error::InvalidParameter("lambda grid must be non-empty and non-negative".into()));
    }
    let spec = RunSpec::new(n_max, mc.replicas, mc.seed).workers(mc.workers);
    let counter = run_replicas(model, spec, || TightnessCounter {
        lambdas: lambdas.to_vec(),
        counts: vec![vec![0; n_max]; lambdas.len()],
        violations: 0,
        first_abs: Vec::new(),
    })?;
    let r = mc.replicas as f64;
    let tail_by_index: Vec<Vec<f64>> = counter
        .counts
        .iter()
        .map(|row| row.iter().map(|&k| k as f64 / r).collect())
        .collect();
    let sup = |row: &Vec<f64>| row.iter().copied().fold(0.0, f64::max);
    let exact_sup_tail = lambdas
        .iter()
        .map(|&l| {
            (1..=n_max)
                .map(|n| model.marginal_tail(n, l))
                .try_fold(0.0, |acc: f64, p| p.map(|p| acc.max(p)))
        })
        .collect();
    Ok(TightnessReport {
        lambdas: lambdas.to_vec(),
        sup_tail: tail_by_index.iter().map(sup).collect(),
        exact_sup_tail,
        tail_by_index,
        inclusion_violations: counter.violations,
        first_moment: elementary_sandwich(&counter.first_abs)?,
    })
}
