use std::f64::consts::PI;

use serde::Serialize;

use super::series::{default_horizon, heyde_scan, wilson, ExceedanceCounter, McConfig};
use crate::error::{Error, Result};
use crate::laws::Law;
use crate::models::{run_replicas, PathObserver, RunSpec, SampledPath, SequenceModel};

/// Three-sigma quantile used for the slack of lower-bound checks.
const Z3: f64 = 3.0;

/// Constant of the per-horizon Fuk-Nagaev bound, `128(1 + 2e⁴)`.
pub fn fuk_nagaev_constant() -> f64 {
    128.0 * (1.0 + 2.0 * 4f64.exp())
}

/// `N·P(|f| > N/4) + 128(1 + 2e⁴)/N²`.
pub fn fuk_nagaev_bound(law: &Law, n: usize) -> f64 {
    let nf = n as f64;
    nf * law.tail(nf / 4.0) + fuk_nagaev_constant() / (nf * nf)
}

/// Variance coefficient of the uniform upper bound. Dyadic blocks
/// `2^i ≤ N < 2^{i+1}` give `Σ_N N·P(|f| > N/4) ≤ 32 Σ_j 4^j P(|f| > 2^j)`
/// and the dyadic sandwich bounds the latter sum by `2σ²`.
pub const UPPER_VARIANCE_COEFFICIENT: f64 = 64.0;

/// Additive constant of the uniform upper bound: the terms `N ≤ 3` are
/// bounded by one each, the `+1` on the left adds one more, and the
/// constant part of the Fuk-Nagaev bound sums to `128(1 + 2e⁴)·π²/6`.
pub fn upper_additive_constant() -> f64 {
    4.0 + fuk_nagaev_constant() * PI * PI / 6.0
}

/// Coefficient of the uniform lower bound `c·σ² ≤ Σ_N P(|S_N| > N) + 1`.
/// When `N·P(f > 2N) ≤ 1/4` for every `N`, the per-horizon chain gives
/// `P(S_N > 2N) ≥ (N/4)·P(f > 2N)`, and `σ² ≤ 4 + 32 Σ_N N·P(f > 2N)`.
pub const LOWER_COEFFICIENT: f64 = 1.0 / 128.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCase {
    pub label: String,
    pub lower: Option<f64>,
    pub empirical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub upper: Option<f64>,
    pub pass: bool,
}

impl BoundCase {
    fn new(label: String, lower: Option<f64>, empirical: (f64, f64, f64), upper: Option<f64>) -> Self {
        let (value, ci_low, ci_high) = empirical;
        let pass = lower.is_none_or(|l| l <= ci_high) && upper.is_none_or(|u| ci_low <= u);
        BoundCase {
            label,
            lower,
            empirical: value,
            ci_low,
            ci_high,
            upper,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub cases: Vec<BoundCase>,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.cases.iter().all(|c| c.pass)
    }

    pub fn violations(&self) -> usize {
        self.cases.iter().filter(|c| !c.pass).count()
    }
}

fn iid_law(model: &SequenceModel) -> Result<&Law> {
    match model {
        SequenceModel::Iid { law } => Ok(law),
        _ => Err(Error::UnsupportedModel("an iid model is required".into())),
    }
}

/// Empirical `P(|S_N| > N)` against the Fuk-Nagaev bound. A case passes
/// when the upper Wilson limit stays below the bound.
pub fn fuk_nagaev_check(model: &SequenceModel, n_list: &[usize], mc: McConfig) -> Result<BoundReport> {
    let law = iid_law(model)?;
    let horizon = n_list.iter().copied().max().unwrap_or(0);
    if horizon == 0 || n_list.contains(&0) {
        return Err(Error::InvalidParameter("horizons must be positive".into()));
    }
    let spec = RunSpec::new(horizon, mc.replicas, mc.seed).workers(mc.workers);
    let counter = run_replicas(model, spec, || ExceedanceCounter::new(vec![(1.0, horizon)], None, None))?;
    let counts = &counter.groups[0].exceed[0];
    let cases = n_list
        .iter()
        .map(|&n| {
            let k = counts[n - 1];
            let (lo, hi) = wilson(k, mc.replicas, super::series::Z95);
            let p = k as f64 / mc.replicas as f64;
            BoundCase {
                label: format!("N={n}"),
                lower: None,
                empirical: p,
                ci_low: lo,
                ci_high: hi,
                upper: Some(fuk_nagaev_bound(law, n)),
                pass: hi <= fuk_nagaev_bound(law, n),
            }
        })
        .collect();
    Ok(BoundReport {
        name: "fuk-nagaev".into(),
        cases,
        notes: vec![format!("constant 128(1+2e^4) = {}", fuk_nagaev_constant())],
    })
}

/// Two-sided uniform bounds `c·σ² ≤ ε²(Σ_N P(|S_N| > εN) + 1) ≤ C₁σ² + C₂ε²`
/// on truncated series with horizon `⌈64/ε²⌉`. The truncated series only
/// underestimates the full one, so the lower check is conservative.
pub fn uniform_bounds(
    models: &[(String, SequenceModel)],
    eps_list: &[f64],
    mc: McConfig,
) -> Result<BoundReport> {
    let c2 = upper_additive_constant();
    let mut cases = Vec::new();
    let mut notes = vec![format!(
        "c = {LOWER_COEFFICIENT}, C1 = {UPPER_VARIANCE_COEFFICIENT}, C2 = {c2}"
    )];
    for (name, model) in models {
        let law = iid_law(model)?;
        let second = law.second_moment();
        if second.is_infinite() {
            return Err(Error::HypothesisViolated(format!("{name}: infinite variance")));
        }
        if law.mean().is_some_and(|m| m.abs() > 1e-12) {
            return Err(Error::HypothesisViolated(format!("{name}: increments are not centered")));
        }
        if second == 0.0 {
            notes.push(format!("{name}: zero variance, excluded (bounds degenerate)"));
            continue;
        }
        let scan = heyde_scan(model, eps_list, default_horizon, mc)?;
        let mut ratios = Vec::new();
        for (point, est) in scan.points.iter().zip(&scan.series) {
            let e2 = point.epsilon * point.epsilon;
            let hw = est.summed_half_width();
            let series = est.cumulative();
            ratios.push((series + 1.0) * e2 / second);
            cases.push(BoundCase::new(
                format!("{name} eps={}", point.epsilon),
                Some(LOWER_COEFFICIENT * second),
                (
                    e2 * (series + 1.0),
                    e2 * ((series - hw).max(0.0) + 1.0),
                    e2 * (series + hw + 1.0),
                ),
                Some(UPPER_VARIANCE_COEFFICIENT * second + c2 * e2),
            ));
        }
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        notes.push(format!("{name}: eps^2 (series+1)/sigma^2 in [{lo}, {hi}]"));
    }
    Ok(BoundReport {
        name: "uniform-bounds".into(),
        cases,
        notes,
    })
}

/// One-sided counts for symmetric laws, or paired-copy counts for the
/// symmetrization reduction.
struct LowerCounter {
    paired: bool,
    /// `S_N > 2N` for symmetric input, `Σ(f_n − f'_n) > 2N` otherwise.
    above: Vec<u64>,
    /// `|S_N| > N` plus `|S'_N| > N` (paired only).
    either: Vec<u64>,
    /// Paths where the symmetrized event occurs without either copy
    /// exceeding.
    inclusion_violations: u64,
}

impl PathObserver for LowerCounter {
    fn observe(&mut self, _replica: u64, paths: &[SampledPath]) {
        let first = &paths[0].increments;
        let mut s = 0.0;
        if !self.paired {
            for (i, x) in first.iter().enumerate() {
                s += x;
                self.above[i] += u64::from(s > 2.0 * (i + 1) as f64);
            }
            return;
        }
        let second = &paths[1].increments;
        let mut t = 0.0;
        for i in 0..first.len() {
            let n = (i + 1) as f64;
            s += first[i];
            t += second[i];
            let g = s - t;
            let big_g = g > 2.0 * n;
            let (a, b) = (s.abs() > n, t.abs() > n);
            self.above[i] += u64::from(big_g);
            self.either[i] += u64::from(a) + u64::from(b);
            if big_g && !a && !b {
                self.inclusion_violations += 1;
            }
        }
    }

    fn merge(&mut self, later: Self) {
        for (u, v) in self.above.iter_mut().zip(later.above) {
            *u += v;
        }
        for (u, v) in self.either.iter_mut().zip(later.either) {
            *u += v;
        }
        self.inclusion_violations += later.inclusion_violations;
    }
}

/// Per-horizon lower-bound chain for iid increments.
///
/// Symmetric laws: `P(S_N > 2N) ≥ N·(½p − N·p²)⁺` with `p = P(f > 2N)`,
/// the exact right side compared with the three-sigma upper Wilson limit.
/// Other laws: the symmetrized differences `g = f − f'` of two independent
/// copies satisfy `P(Σg > 2N) ≤ 2·P(|S_N| > N)`; checked with three-sigma
/// slack and, pathwise, as an event inclusion.
pub fn lower_bound_check(model: &SequenceModel, n_max: usize, mc: McConfig) -> Result<BoundReport> {
    let law = iid_law(model)?;
    let paired = !law.is_symmetric();
    let spec = RunSpec::new(n_max, mc.replicas, mc.seed)
        .workers(mc.workers)
        .copies(if paired { 2 } else { 1 });
    let counter = run_replicas(model, spec, || LowerCounter {
        paired,
        above: vec![0; n_max],
        either: vec![0; n_max],
        inclusion_violations: 0,
    })?;
    let r = mc.replicas as f64;
    let mut cases = Vec::with_capacity(n_max);
    for i in 0..n_max {
        let n = (i + 1) as f64;
        let k = counter.above[i];
        let p_hat = k as f64 / r;
        if paired {
            let q_hat = counter.either[i] as f64 / (2.0 * r);
            let se = (p_hat * (1.0 - p_hat) / r + 4.0 * q_hat * (1.0 - q_hat) / r).sqrt();
            let upper = 2.0 * q_hat + Z3 * se;
            cases.push(BoundCase {
                label: format!("N={}", i + 1),
                lower: None,
                empirical: p_hat,
                ci_low: p_hat,
                ci_high: p_hat,
                upper: Some(upper),
                pass: p_hat <= upper,
            });
        } else {
            let p = law.prob_greater(2.0 * n);
            let lower = (n * (0.5 * p - n * p * p)).max(0.0);
            let (lo, hi) = wilson(k, mc.replicas, Z3);
            cases.push(BoundCase::new(format!("N={}", i + 1), Some(lower), (p_hat, lo, hi), None));
        }
    }
    let mut notes = Vec::new();
    if paired {
        notes.push(format!(
            "symmetrized via two independent copies; inclusion violations: {}",
            counter.inclusion_violations
        ));
        cases.push(BoundCase {
            label: "pathwise inclusion".into(),
            lower: None,
            empirical: counter.inclusion_violations as f64,
            ci_low: counter.inclusion_violations as f64,
            ci_high: counter.inclusion_violations as f64,
            upper: Some(0.0),
            pass: counter.inclusion_violations == 0,
        });
    }
    Ok(BoundReport {
        name: if paired { "symmetrization" } else { "lower-bound-chain" }.into(),
        cases,
        notes,
    })
}
