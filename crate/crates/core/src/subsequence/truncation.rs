use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{truncation_levels, EmpiricalMeasure, TruncationGrid};
use crate::models::SequenceModel;
use crate::prob::RandomVariable;

/// Truncation `A_n = {|f_n| ≤ K_n}` with the certified bounds
/// `P(A_n) > 1 − 2^{-n}` and `E(|f_n| 1_{A_n^c}) ≤ 2^{-n}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationSplit {
    pub levels: Vec<f64>,
    pub prob_kept: Vec<f64>,
    /// `E(|f_n| 1_{A_n^c})`.
    pub l1_tail: Vec<f64>,
    /// `E(f_n² 1_{A_n})`.
    pub l2_truncated: Vec<f64>,
    /// `sup_n E(f_n² 1_{A_n})`.
    pub l2_bound: f64,
    /// Per-atom or per-sample indicators of `A_n`, when the input had them.
    pub masks: Option<Vec<Vec<bool>>>,
    /// Some marginal has infinite second moment, so `l2_bound` grows
    /// without limit along the sequence.
    pub l2_unbounded: Option<bool>,
}

impl TruncationSplit {
    /// All per-index bounds hold.
    pub fn certified(&self) -> bool {
        self.prob_kept
            .iter()
            .zip(&self.l1_tail)
            .enumerate()
            .all(|(i, (&p, &t))| {
                let target = 0.5f64.powi(i as i32 + 1);
                p > 1.0 - target && t <= target
            })
    }

    fn from_functionals(
        levels: Vec<f64>,
        tail: impl Fn(usize, f64) -> f64,
        abs_moment: impl Fn(usize, f64) -> f64,
        truncated: impl Fn(usize, f64) -> f64,
    ) -> Self {
        let prob_kept: Vec<f64> = levels
            .iter()
            .enumerate()
            .map(|(i, &k)| 1.0 - tail(i + 1, k))
            .collect();
        let l1_tail = levels
            .iter()
            .enumerate()
            .map(|(i, &k)| abs_moment(i + 1, k))
            .collect();
        let l2_truncated: Vec<f64> = levels
            .iter()
            .enumerate()
            .map(|(i, &k)| truncated(i + 1, k))
            .collect();
        TruncationSplit {
            l2_bound: l2_truncated.iter().copied().fold(0.0, f64::max),
            levels,
            prob_kept,
            l1_tail,
            l2_truncated,
            masks: None,
            l2_unbounded: None,
        }
    }
}

/// Split from exact marginal tails of a model.
pub fn truncation_split(model: &SequenceModel, n_max: usize, grid: TruncationGrid) -> Result<TruncationSplit> {
    let unsupported = || Error::UnsupportedModel("model has no closed-form marginal tails".into());
    if model.marginal_tail(1, 0.0).is_none() || model.marginal_truncated_second_moment(1, 0.0).is_none() {
        return Err(unsupported());
    }
    let tail = |n: usize, t: f64| model.marginal_tail(n, t).expect("checked");
    let abs_moment = |n: usize, t: f64| model.marginal_abs_moment(n, t).expect("checked");
    let truncated = |n: usize, t: f64| model.marginal_truncated_second_moment(n, t).expect("checked");
    let levels = truncation_levels(tail, abs_moment, n_max, grid)?;
    let mut split = TruncationSplit::from_functionals(levels, tail, abs_moment, truncated);
    split.l2_unbounded = Some(
        (1..=n_max).any(|n| model.marginal_truncated_second_moment(n, f64::INFINITY).expect("checked").is_infinite()),
    );
    Ok(split)
}

fn from_laws(laws: &[EmpiricalMeasure], grid: TruncationGrid) -> Result<TruncationSplit> {
    let tail = |n: usize, t: f64| laws[n - 1].tail(t);
    let abs_moment = |n: usize, t: f64| laws[n - 1].abs_moment(t);
    let truncated = |n: usize, t: f64| laws[n - 1].integrate(|x| if x.abs() <= t { x * x } else { 0.0 });
    let levels = truncation_levels(tail, abs_moment, laws.len(), grid)?;
    Ok(TruncationSplit::from_functionals(levels, tail, abs_moment, truncated))
}

/// Split of variables on a finite space, with per-atom masks.
pub fn truncation_split_variables(f_list: &[RandomVariable], grid: TruncationGrid) -> Result<TruncationSplit> {
    let laws: Vec<EmpiricalMeasure> = f_list.iter().map(EmpiricalMeasure::law_of).collect();
    let mut split = from_laws(&laws, grid)?;
    split.masks = Some(
        f_list
            .iter()
            .zip(&split.levels)
            .map(|(f, &k)| f.values().iter().map(|x| x.abs() <= k).collect())
            .collect(),
    );
    Ok(split)
}

/// Split from samples of each `f_n` (empirical laws), with per-sample masks.
pub fn truncation_split_samples(samples: &[Vec<f64>], grid: TruncationGrid) -> Result<TruncationSplit> {
    let laws = samples
        .iter()
        .map(|xs| {
            if xs.is_empty() {
                return Err(Error::InvalidParameter("no samples for an index".into()));
            }
            let m = 1.0 / xs.len() as f64;
            EmpiricalMeasure::from_atoms(xs.iter().map(|&x| (x, m)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut split = from_laws(&laws, grid)?;
    split.masks = Some(
        samples
            .iter()
            .zip(&split.levels)
            .map(|(xs, &k)| xs.iter().map(|x| x.abs() <= k).collect())
            .collect(),
    );
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::Law;

    #[test]
    fn bounded_model_keeps_everything() {
        let split = truncation_split(&SequenceModel::iid(Law::Rademacher), 8, TruncationGrid::default()).unwrap();
        assert!(split.levels.iter().all(|&k| k == 1.0));
        assert!(split.l1_tail.iter().all(|&t| t == 0.0));
        assert!(split.prob_kept.iter().all(|&p| p == 1.0));
        assert!(split.certified());
        assert_eq!(split.l2_unbounded, Some(false));
    }

    #[test]
    fn gaussian_truncated_second_moment_stays_below_one() {
        let m = SequenceModel::iid(Law::Gaussian { mean: 0.0, sd: 1.0 });
        let split = truncation_split(&m, 12, TruncationGrid::default()).unwrap();
        assert!(split.certified());
        assert!(split.l2_bound <= 1.0);
        assert!(split.levels.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pareto_levels_and_growing_second_moment() {
        let m = SequenceModel::iid(Law::SymmetricPareto { alpha: 1.5 });
        let grid = TruncationGrid { step: 1.0, max: 2f64.powi(50) };
        let split = truncation_split(&m, 6, grid).unwrap();
        for (i, &k) in split.levels.iter().enumerate() {
            assert_eq!(k, 9.0 * 4f64.powi(i as i32 + 1));
            // 3(√K − 1)
            assert!((split.l2_truncated[i] - 3.0 * (k.sqrt() - 1.0)).abs() < 1e-9 * k);
        }
        assert!(split.certified());
        assert_eq!(split.l2_unbounded, Some(true));
    }

    #[test]
    fn sample_masks_follow_levels() {
        let samples = vec![vec![0.0, 0.5, 100.0, -0.25]; 2];
        let split = truncation_split_samples(&samples, TruncationGrid::default()).unwrap();
        let masks = split.masks.as_ref().unwrap();
        for (mask, &k) in masks.iter().zip(&split.levels) {
            assert_eq!(mask[2], 100.0 <= k);
        }
    }
}
