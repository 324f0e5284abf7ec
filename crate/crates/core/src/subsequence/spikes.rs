use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{DiscreteSpace, RandomVariable};

/// Absolute slack on exact identities between weighted sums.
const SUM_TOLERANCE: f64 = 1e-12;

/// `#{N ≥ from : z > N}` for `z ≥ 0`.
fn count_above(z: f64, from: usize) -> f64 {
    (z.ceil() - from as f64).max(0.0)
}

/// `Σ_{N≥1} 1{|x_1 + ... + x_{N∧L}| > N}` along one atom's values.
fn pathwise_series(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut hits = 0.0;
    let mut len = 0;
    for (i, x) in values.enumerate() {
        sum += x;
        len = i + 1;
        if sum.abs() > len as f64 {
            hits += 1.0;
        }
    }
    hits + count_above(sum.abs(), len + 1)
}

fn check_same_space(xs: &[RandomVariable]) -> Result<Option<Arc<DiscreteSpace>>> {
    let Some(first) = xs.first() else {
        return Ok(None);
    };
    if xs.iter().any(|x| !x.same_space(first)) {
        return Err(Error::SpaceMismatch);
    }
    Ok(Some(first.space().clone()))
}

/// Support masks, checked pairwise disjoint.
fn disjoint_supports(spikes: &[RandomVariable]) -> Result<Vec<Vec<bool>>> {
    let Some(space) = check_same_space(spikes)? else {
        return Ok(Vec::new());
    };
    let mut owner: Vec<Option<usize>> = vec![None; space.atom_count()];
    let mut masks = Vec::with_capacity(spikes.len());
    for (n, h) in spikes.iter().enumerate() {
        let mask: Vec<bool> = h.values().iter().map(|&v| v != 0.0).collect();
        for (a, &on) in mask.iter().enumerate() {
            if on {
                if let Some(m) = owner[a] {
                    return Err(Error::OverlappingSupports {
                        first: m + 1,
                        second: n + 1,
                    });
                }
                owner[a] = Some(n);
            }
        }
        masks.push(mask);
    }
    Ok(masks)
}

/// Rule choosing the spike threshold `t_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Smallest `t = 2^j`, `j ≥ 0`, with `E(|f_n| 1{|f_n| > t}) ≤ l1_bound·2^{-n}`.
    DyadicTailMass,
    /// The same threshold for every index.
    Level { t: f64 },
}

/// `f_n = h_n + g_n + r_n` with `h_n` on disjoint sets `B_n`, `g_n`
/// supported on `Γ_n = ∪_{m>n} B_m` and `r_n` the part of `f_n − h_n`
/// outside `Γ_n`.
#[derive(Debug, Clone)]
pub struct KprDecomposition {
    pub thresholds: Vec<f64>,
    pub spikes: Vec<RandomVariable>,
    pub residuals: Vec<RandomVariable>,
    pub remainders: Vec<RandomVariable>,
    pub support_masks: Vec<Vec<bool>>,
    /// `(K, sup_n E(|g_n| 1{|g_n| > K}))` on `K = 0, 1, 2, 4, ...` until it
    /// vanishes.
    pub ui_profile: Vec<(f64, f64)>,
    /// Indices whose residual satisfies `E(|g_n| 1{|g_n| > K}) ≤ tolerance`
    /// at the declared level, when one was given.
    pub kept: Option<Vec<bool>>,
}

impl KprDecomposition {
    /// `E(|g| 1{|g| > K})` for one residual.
    pub fn ui_at(g: &RandomVariable, k: f64) -> f64 {
        g.map(|v| if v.abs() > k { v.abs() } else { 0.0 }).expectation()
    }
}

/// Processes indices in order: `B_n = {|f_n| > t_n}` minus the earlier
/// spike sets, `h_n = f_n 1_{B_n}`.
pub fn kpr_decompose(
    f_list: &[RandomVariable],
    l1_bound: f64,
    rule: ThresholdRule,
    ui_check: Option<(f64, f64)>,
) -> Result<KprDecomposition> {
    let Some(space) = check_same_space(f_list)? else {
        return Err(Error::InvalidParameter("empty sequence".into()));
    };
    if let Some((n, f)) = f_list.iter().enumerate().find(|(_, f)| f.l1_norm() > l1_bound) {
        return Err(Error::HypothesisViolated(format!(
            "E|f_{}| = {} exceeds the L1 bound {l1_bound}",
            n + 1,
            f.l1_norm()
        )));
    }
    let atoms = space.atom_count();
    let mut taken = vec![false; atoms];
    let mut thresholds = Vec::with_capacity(f_list.len());
    let mut support_masks = Vec::with_capacity(f_list.len());
    let mut spikes = Vec::with_capacity(f_list.len());
    for (i, f) in f_list.iter().enumerate() {
        let t = match rule {
            ThresholdRule::Level { t } => t,
            ThresholdRule::DyadicTailMass => {
                let target = l1_bound * 0.5f64.powi(i as i32 + 1);
                let mut t = 1.0;
                while KprDecomposition::ui_at(f, t) > target {
                    t *= 2.0;
                }
                t
            }
        };
        let mask: Vec<bool> = (0..atoms)
            .map(|a| !taken[a] && f.value(a).abs() > t)
            .collect();
        for (a, &on) in mask.iter().enumerate() {
            taken[a] |= on;
        }
        spikes.push(f.restrict(&mask));
        support_masks.push(mask);
        thresholds.push(t);
    }
    let mut residuals = Vec::with_capacity(f_list.len());
    let mut remainders = Vec::with_capacity(f_list.len());
    // Γ_n built from the back: Γ_{last} is empty
    let mut gamma = vec![vec![false; atoms]; f_list.len()];
    for n in (0..f_list.len().saturating_sub(1)).rev() {
        let (head, tail) = gamma.split_at_mut(n + 1);
        for a in 0..atoms {
            head[n][a] = tail[0][a] || support_masks[n + 1][a];
        }
    }
    for (i, f) in f_list.iter().enumerate() {
        let rest = f.sub(&spikes[i])?;
        let outside: Vec<bool> = gamma[i].iter().map(|g| !g).collect();
        residuals.push(rest.restrict(&gamma[i]));
        remainders.push(rest.restrict(&outside));
    }
    let top = residuals.iter().map(RandomVariable::max_abs).fold(0.0, f64::max);
    let mut ui_profile = Vec::new();
    let mut k = 0.0;
    loop {
        let v = residuals
            .iter()
            .map(|g| KprDecomposition::ui_at(g, k))
            .fold(0.0, f64::max);
        ui_profile.push((k, v));
        if v == 0.0 || k >= top {
            break;
        }
        k = if k == 0.0 { 1.0 } else { 2.0 * k };
    }
    let kept = ui_check.map(|(level, tol)| {
        residuals
            .iter()
            .map(|g| KprDecomposition::ui_at(g, level) <= tol)
            .collect()
    });
    Ok(KprDecomposition {
        thresholds,
        spikes,
        residuals,
        remainders,
        support_masks,
        ui_profile,
        kept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SupportMode {
    Sufficient,
    Necessary { beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSeries {
    /// One-based spike index `m`.
    pub index: usize,
    pub mass: f64,
    /// `Σ_N P(|Σ_{n≤N} h_n| 1_{B_m} > N)` from the partial sums.
    pub series: f64,
    /// `Σ_{N≥m} P(|h_m| > N)`.
    pub closed_form: f64,
    /// `E(|h_m| 1{|h_m| > m})`.
    pub tail_moment: f64,
    /// `E(|h_m| 1{|h_m| > m}) − m·P(|h_m| > m)`, a lower bound for the
    /// closed form.
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisjointSupportReport {
    pub mode: SupportMode,
    /// `Σ_N P(|Σ_{n≤N} h_n| > N)`, summed over all `N`.
    pub series: f64,
    /// `Σ_N P(Σ_n |h_n| > N)`.
    pub dominating: f64,
    /// `Σ_n E|h_n|`.
    pub l1_total: f64,
    pub blocks: Vec<BlockSeries>,
    /// Sum of the per-block series.
    pub accumulated: f64,
    /// Every block's lower bound exceeds `β`, so the accumulated series
    /// grows at least linearly in the number of blocks.
    pub divergent: bool,
    pub pass: bool,
}

/// Exact series checks for spikes supported on disjoint sets.
pub fn disjoint_support_series(spikes: &[RandomVariable], mode: SupportMode) -> Result<DisjointSupportReport> {
    let masks = disjoint_supports(spikes)?;
    let Some(space) = check_same_space(spikes)? else {
        return Ok(DisjointSupportReport {
            mode,
            series: 0.0,
            dominating: 0.0,
            l1_total: 0.0,
            blocks: Vec::new(),
            accumulated: 0.0,
            divergent: false,
            pass: true,
        });
    };
    let weights = space.weights();
    let per_atom: Vec<f64> = (0..space.atom_count())
        .map(|a| pathwise_series(spikes.iter().map(|h| h.value(a))))
        .collect();
    let series: f64 = per_atom.iter().zip(weights).map(|(s, w)| s * w).sum();
    let dominating: f64 = (0..space.atom_count())
        .map(|a| weights[a] * count_above(spikes.iter().map(|h| h.value(a).abs()).sum(), 1))
        .sum();
    let l1_total: f64 = spikes.iter().map(RandomVariable::l1_norm).sum();
    let blocks: Vec<BlockSeries> = spikes
        .iter()
        .zip(&masks)
        .enumerate()
        .map(|(i, (h, mask))| {
            let m = i + 1;
            let on = || (0..mask.len()).filter(|&a| mask[a]);
            let tail_moment = KprDecomposition::ui_at(h, m as f64);
            let above: f64 = on().filter(|&a| h.value(a).abs() > m as f64).map(|a| weights[a]).sum();
            BlockSeries {
                index: m,
                mass: on().map(|a| weights[a]).sum(),
                series: on().map(|a| weights[a] * per_atom[a]).sum(),
                closed_form: on().map(|a| weights[a] * count_above(h.value(a).abs(), m)).sum(),
                tail_moment,
                lower_bound: tail_moment - m as f64 * above,
            }
        })
        .collect();
    let accumulated = blocks.iter().map(|b| b.series).sum();
    let (divergent, pass) = match mode {
        SupportMode::Sufficient => (
            false,
            series <= dominating + SUM_TOLERANCE && dominating <= l1_total + SUM_TOLERANCE,
        ),
        SupportMode::Necessary { beta } => (
            !blocks.is_empty() && blocks.iter().all(|b| b.lower_bound > beta),
            blocks.iter().all(|b| {
                (b.series - b.closed_form).abs() <= SUM_TOLERANCE
                    && b.closed_form >= b.lower_bound - SUM_TOLERANCE
            }),
        ),
    };
    Ok(DisjointSupportReport {
        mode,
        series,
        dominating,
        l1_total,
        blocks,
        accumulated,
        divergent,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairingStage {
    pub stage: usize,
    /// One-based index `2n + 1` of the examined spike.
    pub block: usize,
    /// `E|h_{2n+1} + Σ_{ℓ≤n} g_{k_ℓ} 1_{B_{2n+1}}|`.
    pub test_value: f64,
    /// `k_{n+1}`.
    pub chosen: usize,
    /// `Σ_N P(|Σ_{ℓ≤N} (h + g)_{k_ℓ} 1_{B_{2n+1}}| > N)`, exact.
    pub contribution: f64,
    /// `β − n·P(B_{2n+1})`.
    pub guaranteed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairingCertificate {
    pub beta: f64,
    /// `k_1 = 1, k_2, ...`, one-based.
    pub indices: Vec<usize>,
    /// Contribution of `B_1` and its guaranteed value `2β − P(B_1)`.
    pub first_block: (f64, f64),
    pub stages: Vec<PairingStage>,
    pub guaranteed_total: f64,
    pub exact_total: f64,
    pub pass: bool,
}

/// Exact per-block contribution along the chosen indices.
fn block_contribution(
    h: &[RandomVariable],
    g: &[RandomVariable],
    indices: &[usize],
    block: &[bool],
) -> f64 {
    let weights = h[0].space().weights();
    (0..block.len())
        .filter(|&a| block[a])
        .map(|a| {
            weights[a]
                * pathwise_series(indices.iter().map(|&k| h[k - 1].value(a) + g[k - 1].value(a)))
        })
        .sum()
}

/// Inductive choice `k_{n+1} ∈ {2n+1, 2n+2}`: the odd index when
/// `E|h_{2n+1} + Σ_{ℓ≤n} g_{k_ℓ} 1_{B_{2n+1}}| > β`, the even one
/// otherwise. Needs `2·stages + 2` spikes and residuals.
pub fn adversarial_pairing(
    h: &[RandomVariable],
    g: &[RandomVariable],
    beta: f64,
    stages: usize,
) -> Result<PairingCertificate> {
    let masks = disjoint_supports(h)?;
    let needed = 2 * stages + 2;
    if h.len() < needed || g.len() < needed {
        return Err(Error::InvalidParameter(format!(
            "{stages} stages need {needed} spikes and residuals"
        )));
    }
    let space = check_same_space(h)?.expect("non-empty");
    if g.iter().any(|x| !Arc::ptr_eq(x.space(), &space)) {
        return Err(Error::SpaceMismatch);
    }
    let prob = |m: usize| space.prob(|a| masks[m - 1][a]);
    for (i, x) in h.iter().enumerate() {
        let m = i + 1;
        if x.l1_norm() <= 2.0 * beta {
            return Err(Error::HypothesisViolated(format!(
                "E|h_{m}| = {} is not above 2β = {}",
                x.l1_norm(),
                2.0 * beta
            )));
        }
        if prob(m) > (m as f64).powi(-3) {
            return Err(Error::HypothesisViolated(format!(
                "P(B_{m}) = {} exceeds m^-3",
                prob(m)
            )));
        }
    }
    // g_n must vanish outside Γ_n = ∪_{m>n} B_m
    for (i, x) in g.iter().enumerate() {
        let outside = (0..space.atom_count())
            .find(|&a| x.value(a) != 0.0 && !masks.iter().skip(i + 1).any(|mask| mask[a]));
        if let Some(a) = outside {
            return Err(Error::HypothesisViolated(format!(
                "g_{} is nonzero at atom {a} outside the later spike sets",
                i + 1
            )));
        }
    }
    let mut indices = vec![1];
    let mut out = Vec::with_capacity(stages);
    for n in 1..=stages {
        let block = 2 * n + 1;
        let mask = &masks[block - 1];
        let test_value: f64 = (0..space.atom_count())
            .filter(|&a| mask[a])
            .map(|a| {
                let gs: f64 = indices.iter().map(|&k| g[k - 1].value(a)).sum();
                space.weight(a) * (h[block - 1].value(a) + gs).abs()
            })
            .sum();
        let chosen = if test_value > beta { block } else { block + 1 };
        indices.push(chosen);
        out.push(PairingStage {
            stage: n,
            block,
            test_value,
            chosen,
            contribution: block_contribution(h, g, &indices, mask),
            guaranteed: beta - n as f64 * prob(block),
        });
    }
    let first_block = (
        block_contribution(h, g, &indices, &masks[0]),
        2.0 * beta - prob(1),
    );
    let guaranteed_total = out.iter().map(|s| s.guaranteed).sum();
    let exact_total = out.iter().map(|s| s.contribution).sum();
    let pass = first_block.0 >= first_block.1 - SUM_TOLERANCE
        && out.iter().all(|s| s.contribution >= s.guaranteed - SUM_TOLERANCE);
    Ok(PairingCertificate {
        beta,
        indices,
        first_block,
        stages: out,
        guaranteed_total,
        exact_total,
        pass,
    })
}

/// Spike family for the pairing construction: one atom per block with
/// `P(B_1) = ½`, `P(B_m) = m^{-3}` for odd `m ≥ 3` and `m^{-3}/2` for even
/// `m`, plus a rest atom; `h_m = (2β + 1)/P(B_m)` on `B_m`. With
/// `cancel_odd`, `g_1 = −Σ_{odd m≥3} h_m` and every other residual is zero.
pub fn pairing_family(
    beta: f64,
    stages: usize,
    cancel_odd: bool,
) -> Result<(Vec<RandomVariable>, Vec<RandomVariable>)> {
    let count = 2 * stages + 2;
    let mut weights: Vec<f64> = (1..=count)
        .map(|m| match m {
            1 => 0.5,
            m if m % 2 == 1 => (m as f64).powi(-3),
            m => 0.5 * (m as f64).powi(-3),
        })
        .collect();
    let rest = 1.0 - weights.iter().sum::<f64>();
    weights.push(rest);
    let space = DiscreteSpace::new(weights.clone())?;
    let h: Vec<RandomVariable> = (0..count)
        .map(|i| {
            let height = (2.0 * beta + 1.0) / weights[i];
            RandomVariable::from_fn(&space, |a| if a == i { height } else { 0.0 })
        })
        .collect();
    let mut g = vec![RandomVariable::constant(&space, 0.0); count];
    if cancel_odd {
        g[0] = RandomVariable::from_fn(&space, |a| {
            let m = a + 1;
            if m >= 3 && m % 2 == 1 && m <= count {
                -h[a].value(a)
            } else {
                0.0
            }
        });
    }
    Ok((h, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indicator_space(masses: &[f64]) -> Arc<DiscreteSpace> {
        let mut w = masses.to_vec();
        w.push(1.0 - masses.iter().sum::<f64>());
        DiscreteSpace::new(w).unwrap()
    }

    fn spike(space: &Arc<DiscreteSpace>, atom: usize, height: f64) -> RandomVariable {
        RandomVariable::from_fn(space, |a| if a == atom { height } else { 0.0 })
    }

    #[test]
    fn pathwise_series_counts() {
        assert_eq!(pathwise_series([2.5].into_iter()), 2.0);
        assert_eq!(pathwise_series([0.0, 5.0].into_iter()), 3.0);
        assert_eq!(pathwise_series(std::iter::empty()), 0.0);
    }

    #[test]
    fn overlapping_supports_are_rejected() {
        let s = DiscreteSpace::uniform(2).unwrap();
        let a = spike(&s, 0, 1.0);
        assert!(matches!(
            disjoint_support_series(&[a.clone(), a], SupportMode::Sufficient),
            Err(Error::OverlappingSupports { first: 1, second: 2 })
        ));
    }

    #[test]
    fn empty_spikes_pass_both_modes() {
        for mode in [SupportMode::Sufficient, SupportMode::Necessary { beta: 1.0 }] {
            let r = disjoint_support_series(&[], mode).unwrap();
            assert!(r.pass && r.series == 0.0);
        }
    }

    #[test]
    fn summable_spikes_sufficient_chain() {
        let masses: Vec<f64> = (1..=6).map(|n| 0.5f64.powi(n + 1)).collect();
        let s = indicator_space(&masses);
        let h: Vec<_> = (0..6).map(|i| spike(&s, i, 0.5f64.powi(i as i32 + 1) / masses[i])).collect();
        let r = disjoint_support_series(&h, SupportMode::Sufficient).unwrap();
        assert!(r.pass);
        assert!(r.l1_total < 1.0);
        assert!(r.series <= 1.0);
    }

    #[test]
    fn necessary_mode_per_block_identity() {
        let beta = 0.5;
        let masses: Vec<f64> = (1..=8).map(|m| beta / (2.0 * (m * m) as f64)).collect();
        let s = indicator_space(&masses);
        let h: Vec<_> = (0..8).map(|i| spike(&s, i, 2.0 * (i + 1) as f64)).collect();
        let r = disjoint_support_series(&h, SupportMode::Necessary { beta }).unwrap();
        assert!(r.pass);
        for b in &r.blocks {
            let m = b.index as f64;
            // heights 2m exceed N exactly for N = m, ..., 2m − 1
            assert!((b.closed_form - beta / (2.0 * m)).abs() < 1e-15);
            // the tail moment β/m is not a lower bound for the block series
            assert!(b.tail_moment > b.closed_form);
        }
        assert!(!r.divergent);
    }

    #[test]
    fn kpr_recovers_planted_spikes() {
        let masses: Vec<f64> = (1..=5).map(|n| (n as f64).powi(-3) / 4.0).collect();
        let s = indicator_space(&masses);
        let f: Vec<_> = (0..5).map(|i| spike(&s, i, (i + 1) as f64)).collect();
        let d = kpr_decompose(&f, 1.0, ThresholdRule::Level { t: 0.5 }, None).unwrap();
        assert_eq!(d.spikes, f);
        assert!(d.residuals.iter().all(|g| g.max_abs() == 0.0));
        // disjoint spikes: Σ E h_n² = E(Σ h_n)²
        let total = d.spikes.iter().skip(1).fold(d.spikes[0].clone(), |acc, h| acc.add(h).unwrap());
        let lhs: f64 = d.spikes.iter().map(|h| h.map(|v| v * v).expectation()).sum();
        assert!((lhs - total.map(|v| v * v).expectation()).abs() < 1e-15);
    }

    #[test]
    fn kpr_bounded_sequence_has_no_spikes() {
        let s = DiscreteSpace::uniform(4).unwrap();
        let f = vec![RandomVariable::new(&s, vec![0.5, -0.5, 0.25, 1.0]).unwrap(); 3];
        let d = kpr_decompose(&f, 1.0, ThresholdRule::DyadicTailMass, Some((1.0, 0.0))).unwrap();
        assert!(d.spikes.iter().all(|h| h.max_abs() == 0.0));
        assert_eq!(d.ui_profile.last().unwrap().1, 0.0);
        assert!(d.ui_profile.windows(2).all(|w| w[1].1 <= w[0].1));
        assert_eq!(d.kept, Some(vec![true; 3]));
    }

    #[test]
    fn pairing_without_residuals_takes_odd_indices() {
        let (h, g) = pairing_family(1.0, 10, false).unwrap();
        let c = adversarial_pairing(&h, &g, 1.0, 10).unwrap();
        assert_eq!(c.indices, (0..=10).map(|n| 2 * n + 1).collect::<Vec<_>>());
        assert!(c.pass);
        assert!(c.guaranteed_total >= 9.7, "{}", c.guaranteed_total);
        assert!(c.exact_total >= c.guaranteed_total);
    }

    #[test]
    fn pairing_switches_on_cancelled_blocks() {
        let (h, g) = pairing_family(1.0, 4, true).unwrap();
        let c = adversarial_pairing(&h, &g, 1.0, 4).unwrap();
        assert_eq!(c.indices, vec![1, 4, 6, 8, 10]);
        assert!(c.pass);
    }
}
