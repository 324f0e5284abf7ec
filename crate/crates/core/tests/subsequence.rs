use std::sync::Arc;

use hre_core::measures::{ConditionalMeasureTable, TruncationGrid};
use hre_core::prob::{DiscreteSpace, Partition, RandomVariable};
use hre_core::subsequence::{
    adversarial_pairing, default_schedule, disjoint_support_series, kpr_decompose, omnibus_check, pairing_family,
    quantize, select_md_subsequence, truncation_split_variables, RefinementTree, SupportMode, ThresholdRule,
};
use proptest::prelude::*;

/// `±1` coordinate `i` of the fair `bits`-fold coin space.
fn coin(space: &Arc<DiscreteSpace>, bits: usize, i: usize) -> RandomVariable {
    RandomVariable::from_fn(space, |a| if (a >> (bits - 1 - i)) & 1 == 1 { 1.0 } else { -1.0 })
}

/// Spikes with disjoint supports on a space of `len` atoms, one spike per
/// entry of `owners` (owner index per atom, `None` for untouched atoms).
fn spike_family(weights: &[f64], owners: &[Option<usize>], heights: &[f64], count: usize) -> Vec<RandomVariable> {
    let space = DiscreteSpace::new(weights.to_vec()).unwrap();
    (0..count)
        .map(|n| RandomVariable::from_fn(&space, |a| if owners[a] == Some(n) { heights[a] } else { 0.0 }))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn selector_on_drifted_coins(drift_signs in prop::collection::vec(any::<bool>(), 10)) {
        let bits = 10;
        let space = DiscreteSpace::uniform(1 << bits).unwrap();
        let f: Vec<_> = (0..bits)
            .map(|i| {
                let d = if drift_signs[i] { 1.0 } else { -1.0 } * 0.5f64.powi(i as i32 + 1);
                coin(&space, bits, i).map(|x| x + d)
            })
            .collect();
        let rep = select_md_subsequence(&f, bits, Some(&f)).unwrap();
        prop_assert!(rep.corrections_within_targets());
        prop_assert!(rep.md.max_cond_mean <= 1e-12);
        prop_assert!(rep.l2_certified());
        prop_assert!(rep.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn quantization_error_is_certified(values in prop::collection::vec(-20.0f64..20.0, 1..40), n in 1u32..8) {
        let space = DiscreteSpace::uniform(values.len()).unwrap();
        let f = RandomVariable::new(&space, values).unwrap();
        let q = quantize(&f, n);
        prop_assert!(q.mean_square_error <= 0.25f64.powi(n as i32) * (1.0 + 1e-12));
        prop_assert!(q.h.alphabet_size() <= f.alphabet_size());
        let direct = f.sub(&q.h).unwrap().map(|d| d * d).expectation();
        prop_assert!((direct - q.mean_square_error).abs() <= 1e-15);
    }

    #[test]
    fn sufficiency_chain_on_random_spikes(
        cells in prop::collection::vec((1u32..=8, 0usize..=6, 0.0f64..40.0), 2..30),
    ) {
        let total: u32 = cells.iter().map(|c| c.0).sum();
        let weights: Vec<f64> = cells.iter().map(|c| f64::from(c.0) / f64::from(total)).collect();
        // owner 6 means the atom carries no spike
        let owners: Vec<Option<usize>> = cells.iter().map(|c| (c.1 < 6).then_some(c.1)).collect();
        let heights: Vec<f64> = cells.iter().map(|c| c.2).collect();
        let spikes = spike_family(&weights, &owners, &heights, 6);
        let rep = disjoint_support_series(&spikes, SupportMode::Sufficient).unwrap();
        prop_assert!(rep.pass);
        prop_assert!(rep.series <= rep.dominating + 1e-12);
        prop_assert!(rep.dominating <= rep.l1_total + 1e-12);
        prop_assert!(rep.accumulated <= rep.series + 1e-12);
        let nec = disjoint_support_series(&spikes, SupportMode::Necessary { beta: 1.0 }).unwrap();
        prop_assert!(nec.pass);
    }

    #[test]
    fn kpr_pieces_add_up(values in prop::collection::vec(-30.0f64..30.0, 16), bound_scale in 1.0f64..3.0) {
        let space = DiscreteSpace::uniform(4).unwrap();
        let f: Vec<_> = values
            .chunks(4)
            .map(|c| RandomVariable::new(&space, c.to_vec()).unwrap())
            .collect();
        let l1 = f.iter().map(RandomVariable::l1_norm).fold(0.0, f64::max) * bound_scale;
        let d = kpr_decompose(&f, l1, ThresholdRule::DyadicTailMass, None).unwrap();
        for (n, f_n) in f.iter().enumerate() {
            let rebuilt = d.spikes[n].add(&d.residuals[n]).unwrap().add(&d.remainders[n]).unwrap();
            prop_assert!(rebuilt.sub(f_n).unwrap().max_abs() <= 1e-12);
        }
        // supports pairwise disjoint
        prop_assert!(disjoint_support_series(&d.spikes, SupportMode::Sufficient).is_ok());
    }
}

#[test]
fn pairing_certificate_for_ten_stages() {
    let (h, g) = pairing_family(1.0, 10, false).unwrap();
    let cert = adversarial_pairing(&h, &g, 1.0, 10).unwrap();
    assert!(cert.pass);
    assert!(cert.guaranteed_total >= 9.7, "{}", cert.guaranteed_total);
    assert!(cert.exact_total >= cert.guaranteed_total - 1e-12);
}

#[test]
fn truncation_on_finite_variables() {
    let space = DiscreteSpace::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap();
    let f: Vec<_> = (1..=5)
        .map(|n| RandomVariable::new(&space, vec![0.0, 1.0, -2.0, f64::from(8 * n)]).unwrap())
        .collect();
    let split = truncation_split_variables(&f, TruncationGrid::default()).unwrap();
    assert!(split.certified());
    let masks = split.masks.unwrap();
    for (n, (mask, k)) in masks.iter().zip(&split.levels).enumerate() {
        for (a, &kept) in mask.iter().enumerate() {
            assert_eq!(kept, f[n].value(a).abs() <= *k);
        }
        assert!(mask[0] && mask[1]);
    }
}

#[test]
fn mixture_refinement_and_omnibus() {
    // label × {±1}^6, label masses ¾ and ¼, scales 1 and 2
    let bits = 6;
    let cells = 1usize << bits;
    let weights: Vec<f64> = [0.75, 0.25]
        .iter()
        .flat_map(|&m| std::iter::repeat_n(m / cells as f64, cells))
        .collect();
    let space = DiscreteSpace::new(weights).unwrap();
    let labels: Vec<usize> = (0..2 * cells).map(|a| a / cells).collect();
    let h: Vec<_> = (0..bits)
        .map(|i| {
            RandomVariable::from_fn(&space, |a| {
                let scale = if a < cells { 1.0 } else { 2.0 };
                scale * if ((a % cells) >> (bits - 1 - i)) & 1 == 1 { 1.0 } else { -1.0 }
            })
        })
        .collect();
    let p = Partition::from_labels(&space, &labels).unwrap();
    let table = ConditionalMeasureTable::new(&p, &h).unwrap();
    let tree = RefinementTree::build(&table, &default_schedule(4)).unwrap();
    assert!(tree.invariants_hold());
    assert_eq!(tree.stages.last().unwrap().clusters.len(), 2);

    let f_star: Vec<_> = h.iter().enumerate().map(|(i, x)| x.map(|v| v + 0.5f64.powi(i as i32 + 1))).collect();
    let rep = omnibus_check(&p, &h, &f_star, Some(&f_star), 0.5).unwrap();
    assert!(rep.pass());
    assert_eq!(rep.blocks.len(), 2);
    assert!((rep.blocks[0].mass - 0.75).abs() < 1e-15);
}
