use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::prob::{cond_exp, generated_partition, verify_md, MartingalePath, MdReport, RandomVariable};

/// Relative slack on certified floating-point inequalities.
const CERT_SLACK: f64 = 1e-12;

/// A simple approximation `h` of `f` with `E(f − h)² ≤ 4^{-n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub h: RandomVariable,
    pub step: f64,
    pub mean_square_error: f64,
}

/// Rounds `f` to the grid `step·ℤ` with `step = 2^{1-n}`, so every atom
/// moves by at most `2^{-n}`. When rounding does not shrink the alphabet,
/// `f` is returned unchanged with zero error.
pub fn quantize(f: &RandomVariable, n: u32) -> Quantized {
    let step = 2f64.powi(1 - n as i32);
    let h = f.map(|x| {
        let q = step * (x / step).round();
        if q == 0.0 {
            0.0
        } else {
            q
        }
    });
    if h.alphabet_size() >= f.alphabet_size() {
        return Quantized {
            h: f.clone(),
            step,
            mean_square_error: 0.0,
        };
    }
    let diff = f.sub(&h).expect("same space");
    let mean_square_error = diff.map(|d| d * d).expectation();
    Quantized {
        h,
        step,
        mean_square_error,
    }
}

/// Output of the greedy martingale-difference selector.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    /// Chosen indices `k_1 < k_2 < ...`, one-based.
    pub indices: Vec<usize>,
    /// `ϑ_n = E(h_{k_n} | h_{k_1}, ..., h_{k_{n-1}})`.
    pub corrections: Vec<RandomVariable>,
    /// `β_n = h_{k_n} − ϑ_n`.
    pub differences: Vec<RandomVariable>,
    pub max_abs_corrections: Vec<f64>,
    /// `‖f_{k_n} − h_{k_n}‖₂`, when the originals were supplied.
    pub quantization_gaps: Option<Vec<f64>>,
    /// `‖f_{k_n} − β_n‖₂`, when the originals were supplied.
    pub l2_gaps: Option<Vec<f64>>,
    pub path: MartingalePath,
    pub md: MdReport,
}

impl SelectionReport {
    pub fn corrections_within_targets(&self) -> bool {
        self.max_abs_corrections
            .iter()
            .enumerate()
            .all(|(i, &c)| c <= 0.5f64.powi(i as i32 + 1))
    }

    /// `‖f_{k_n} − β_n‖₂ ≤ 2^{1-n}`, vacuous without originals.
    pub fn l2_certified(&self) -> bool {
        self.l2_gaps.as_ref().is_none_or(|gaps| {
            gaps.iter()
                .enumerate()
                .all(|(i, &g)| g <= 2f64.powi(-(i as i32)) * (1.0 + CERT_SLACK))
        })
    }

    pub fn pass(&self) -> bool {
        self.corrections_within_targets() && self.l2_certified() && self.md.pass
    }

    /// Plain-text table of indices and certified bounds.
    pub fn to_text(&self) -> String {
        let mut out = String::from("n,k_n,max_abs_correction,target,l2_gap,l2_bound\n");
        for (i, k) in self.indices.iter().enumerate() {
            let gap = self
                .l2_gaps
                .as_ref()
                .map(|g| g[i].to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                i + 1,
                k,
                self.max_abs_corrections[i],
                0.5f64.powi(i as i32 + 1),
                gap,
                2f64.powi(-(i as i32))
            )
            .expect("writing to a string");
        }
        writeln!(
            out,
            "# max conditional mean {}, pass {}",
            self.md.max_cond_mean,
            self.pass()
        )
        .expect("writing to a string");
        out
    }
}

/// Greedy first-admissible selection over `stages` stages. Stage `n` takes
/// the smallest unused index `k` after `k_{n-1}` whose conditional
/// expectation given the previously chosen `h` is at most `2^{-n}` in
/// absolute value; stage one conditions on the trivial σ-algebra.
///
/// `originals[k]` is the function that `h_list[k]` approximates.
pub fn select_md_subsequence(
    h_list: &[RandomVariable],
    stages: usize,
    originals: Option<&[RandomVariable]>,
) -> Result<SelectionReport> {
    let first = h_list
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty candidate list".into()))?;
    let space = first.space().clone();
    if h_list.iter().any(|h| !h.same_space(first)) {
        return Err(Error::SpaceMismatch);
    }
    if let Some(f) = originals {
        if f.len() != h_list.len() {
            return Err(Error::InvalidParameter(format!(
                "{} originals for {} candidates",
                f.len(),
                h_list.len()
            )));
        }
        if f.iter().any(|x| !x.same_space(first)) {
            return Err(Error::SpaceMismatch);
        }
    }
    let mut indices = Vec::with_capacity(stages);
    let mut chosen: Vec<RandomVariable> = Vec::with_capacity(stages);
    let mut corrections = Vec::with_capacity(stages);
    let mut differences = Vec::with_capacity(stages);
    let mut filtration = Vec::with_capacity(stages);
    let mut past = generated_partition(&space, &[])?;
    let mut cursor = 0;
    for stage in 1..=stages {
        let target = 0.5f64.powi(stage as i32);
        let theta = loop {
            let h = h_list
                .get(cursor)
                .ok_or(Error::WeakNullityExhausted { stage })?;
            let theta = cond_exp(h, &past)?;
            if theta.max_abs() <= target {
                break theta;
            }
            cursor += 1;
        };
        let h = &h_list[cursor];
        differences.push(h.sub(&theta)?);
        corrections.push(theta);
        indices.push(cursor + 1);
        chosen.push(h.clone());
        past = generated_partition(&space, &chosen)?;
        filtration.push(past.clone());
        cursor += 1;
    }
    let max_abs_corrections = corrections.iter().map(RandomVariable::max_abs).collect();
    let (quantization_gaps, l2_gaps) = match originals {
        Some(f) => {
            let mut q = Vec::with_capacity(stages);
            let mut g = Vec::with_capacity(stages);
            for (i, &k) in indices.iter().enumerate() {
                q.push(f[k - 1].sub(&h_list[k - 1])?.l2_norm());
                g.push(f[k - 1].sub(&differences[i])?.l2_norm());
            }
            (Some(q), Some(g))
        }
        None => (None, None),
    };
    let path = MartingalePath::new(&space, differences.clone(), filtration)?;
    let md = verify_md(&path, f64::INFINITY);
    Ok(SelectionReport {
        indices,
        corrections,
        differences,
        max_abs_corrections,
        quantization_gaps,
        l2_gaps,
        path,
        md,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::DiscreteSpace;

    /// Coordinate `i` (zero-based, most significant first) of a fair
    /// `n`-fold coin space, as `±1`.
    fn coordinate(space: &std::sync::Arc<DiscreteSpace>, n: usize, i: usize) -> RandomVariable {
        RandomVariable::from_fn(space, |a| if (a >> (n - 1 - i)) & 1 == 1 { 1.0 } else { -1.0 })
    }

    #[test]
    fn quantize_two_valued_is_identity() {
        let s = DiscreteSpace::uniform(4).unwrap();
        let f = RandomVariable::new(&s, vec![0.1, 0.1, 0.7, 0.7]).unwrap();
        let q = quantize(&f, 1);
        assert_eq!(q.h, f);
        assert_eq!(q.mean_square_error, 0.0);
    }

    #[test]
    fn quantize_certifies_error() {
        let s = DiscreteSpace::uniform(4).unwrap();
        let f = RandomVariable::new(&s, vec![0.0, 0.3, 0.6, 0.9]).unwrap();
        let q = quantize(&f, 1);
        assert_eq!(q.h.values(), &[0.0, 0.0, 1.0, 1.0]);
        assert!((q.mean_square_error - 0.065).abs() < 1e-15);
        assert!(q.mean_square_error <= 0.25);
        assert_eq!(quantize(&f, 30).h, f);
    }

    #[test]
    fn exact_differences_are_kept() {
        let s = DiscreteSpace::uniform(8).unwrap();
        let h: Vec<_> = (0..3).map(|i| coordinate(&s, 3, i)).collect();
        let rep = select_md_subsequence(&h, 3, None).unwrap();
        assert_eq!(rep.indices, vec![1, 2, 3]);
        assert!(rep.max_abs_corrections.iter().all(|&c| c == 0.0));
        assert_eq!(rep.differences, h);
        assert!(rep.pass());
    }

    #[test]
    fn duplicate_is_skipped() {
        let s = DiscreteSpace::uniform(8).unwrap();
        let a = coordinate(&s, 3, 0);
        let h = vec![a.clone(), a, coordinate(&s, 3, 1)];
        let rep = select_md_subsequence(&h, 2, None).unwrap();
        assert_eq!(rep.indices, vec![1, 3]);
        assert!(matches!(
            select_md_subsequence(&h, 3, None),
            Err(Error::WeakNullityExhausted { stage: 3 })
        ));
    }

    #[test]
    fn drifts_are_corrected() {
        let s = DiscreteSpace::uniform(16).unwrap();
        let f: Vec<_> = (0..4)
            .map(|i| coordinate(&s, 4, i).map(|x| x + 0.5f64.powi(i as i32 + 1)))
            .collect();
        let rep = select_md_subsequence(&f, 4, Some(&f)).unwrap();
        assert_eq!(rep.indices, vec![1, 2, 3, 4]);
        for (i, c) in rep.max_abs_corrections.iter().enumerate() {
            assert_eq!(*c, 0.5f64.powi(i as i32 + 1));
        }
        assert!(rep.pass());
        assert!(rep.to_text().starts_with("n,k_n,"));
    }
}
